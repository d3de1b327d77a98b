//! Truncation constants c_n and truncated conditional second moments.
//!
//! c_n is the smallest c ≥ 0 with φ_n(c) = n·E(X²/c² ∧ 1) ≤ 1, where
//! φ_n(0) = n·P(X ≠ 0). φ_n is nonincreasing, so c_n is found by growing or
//! shrinking a bracket geometrically from c = 1 and then bisecting.

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimate::{Estimate, Welford};
use crate::model::{Distribution, Kernel, NormalizingSequence, SectionMoment};
use crate::seeds::{task_rng, SimRng};

const BISECTION_ITERATIONS: usize = 80;
const BRACKET_STEPS: usize = 2100;
/// Solutions below this are reported as exactly 0.
const ZERO_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveMethod {
    ClosedForm,
    BisectionExact,
    BisectionMonteCarlo,
    Degenerate,
}

impl std::fmt::Display for SolveMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SolveMethod::ClosedForm => "closed-form",
            SolveMethod::BisectionExact => "bisection-exact",
            SolveMethod::BisectionMonteCarlo => "bisection-monte-carlo",
            SolveMethod::Degenerate => "degenerate",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TruncationSolution {
    pub n: u64,
    pub c_n: f64,
    /// |φ_n(c_n) - 1|
    pub residual: f64,
    pub method: SolveMethod,
    /// Standard error of φ_n(c_n) for the Monte-Carlo method.
    pub phi_std_err: Option<f64>,
}

impl TruncationSolution {
    pub fn is_degenerate(&self) -> bool {
        self.method == SolveMethod::Degenerate
    }
}

/// E(X² ∧ t²) from a fixed sample panel, O(log N) per query.
#[derive(Debug, Clone)]
pub struct EmpiricalMoments {
    squares: Vec<f64>,
    prefix: Vec<f64>,
}

impl EmpiricalMoments {
    pub fn new(sample: &[f64]) -> Self {
        let mut squares: Vec<f64> = sample.iter().map(|x| x * x).collect();
        squares.sort_by(f64::total_cmp);
        let mut prefix = Vec::with_capacity(squares.len() + 1);
        prefix.push(0.0);
        for s in &squares {
            prefix.push(prefix.last().unwrap() + s);
        }
        Self { squares, prefix }
    }

    pub fn len(&self) -> usize {
        self.squares.len()
    }

    pub fn is_empty(&self) -> bool {
        self.squares.is_empty()
    }

    pub fn truncated_second_moment(&self, t: f64) -> f64 {
        let t2 = t * t;
        let below = self.squares.partition_point(|&s| s <= t2);
        (self.prefix[below] + t2 * (self.squares.len() - below) as f64) / self.squares.len() as f64
    }

    pub fn tail(&self, t: f64) -> f64 {
        let t2 = t * t;
        let below = self.squares.partition_point(|&s| s <= t2);
        (self.squares.len() - below) as f64 / self.squares.len() as f64
    }

    /// Standard error of the sample mean of min(X²/c², 1).
    pub fn phi_std_err(&self, c: f64) -> f64 {
        let w: Welford = self.squares.iter().map(|s| if c > 0.0 { (s / (c * c)).min(1.0) } else { f64::from(u8::from(*s > 0.0)) }).collect();
        w.std_err()
    }
}

fn phi(n: f64, c: f64, tsm: &dyn Fn(f64) -> f64, nonzero: f64) -> f64 {
    if c <= 0.0 {
        n * nonzero
    } else {
        n * tsm(c) / (c * c)
    }
}

/// Smallest c with φ(c) ≤ 1 (0 when φ(0+) ≤ 1).
fn bisect(n: f64, tsm: &dyn Fn(f64) -> f64, nonzero: f64) -> (f64, f64) {
    let f = |c: f64| phi(n, c, tsm, nonzero);
    let (mut lo, mut hi);
    if f(1.0) > 1.0 {
        lo = 1.0;
        hi = 2.0;
        let mut steps = 0;
        while f(hi) > 1.0 && steps < BRACKET_STEPS {
            lo = hi;
            hi *= 2.0;
            steps += 1;
        }
    } else {
        hi = 1.0;
        lo = 0.5;
        let mut steps = 0;
        while f(lo) <= 1.0 {
            hi = lo;
            lo *= 0.5;
            steps += 1;
            if steps >= BRACKET_STEPS || lo < ZERO_FLOOR {
                return (0.0, (f(0.0) - 1.0).abs());
            }
        }
    }
    for _ in 0..BISECTION_ITERATIONS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (hi, (f(hi) - 1.0).abs())
}

/// Solves for c_n using closed forms. Fails if the distribution provides
/// neither a closed-form c_n nor a truncated second moment.
pub fn solve_cn(dist: &dyn Distribution, n: u64) -> Result<TruncationSolution> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    let degenerate = dist.tail(0.0) == Some(0.0);
    if degenerate {
        return Ok(TruncationSolution { n, c_n: 0.0, residual: 0.0, method: SolveMethod::Degenerate, phi_std_err: None });
    }
    if let Some(c) = dist.truncation_constant(n) {
        let tsm = |t: f64| dist.truncated_second_moment(t).unwrap_or(f64::NAN);
        let nonzero = dist.tail(0.0).unwrap_or(1.0);
        let r = (phi(n as f64, c, &tsm, nonzero) - 1.0).abs();
        return Ok(TruncationSolution { n, c_n: c, residual: if r.is_nan() { 0.0 } else { r }, method: SolveMethod::ClosedForm, phi_std_err: None });
    }
    if dist.truncated_second_moment(1.0).is_none() {
        return Err(Error::MissingClosedForm("exact c_n"));
    }
    let tsm = |t: f64| dist.truncated_second_moment(t).unwrap();
    let nonzero = dist.tail(0.0).unwrap_or(1.0);
    let (c, residual) = bisect(n as f64, &tsm, nonzero);
    Ok(TruncationSolution { n, c_n: c, residual, method: SolveMethod::BisectionExact, phi_std_err: None })
}

/// Solves for c_n on one fixed Monte-Carlo panel of `budget` draws, so the
/// empirical map is the same function for every candidate c.
pub fn solve_cn_monte_carlo(dist: &dyn Distribution, n: u64, budget: usize, seed: u64) -> Result<TruncationSolution> {
    if n == 0 || budget == 0 {
        return Err(Error::InvalidArgument("n and budget must be positive".into()));
    }
    let panel = EmpiricalMoments::new(&dist.sample_vec(seed, budget));
    solve_cn_on_panel(&panel, n)
}

pub fn solve_cn_on_panel(panel: &EmpiricalMoments, n: u64) -> Result<TruncationSolution> {
    if panel.is_empty() {
        return Err(Error::InvalidArgument("empty panel".into()));
    }
    let nonzero = panel.tail(0.0);
    if nonzero == 0.0 {
        return Ok(TruncationSolution { n, c_n: 0.0, residual: 0.0, method: SolveMethod::Degenerate, phi_std_err: Some(0.0) });
    }
    let tsm = |t: f64| panel.truncated_second_moment(t);
    let (c, residual) = bisect(n as f64, &tsm, nonzero);
    Ok(TruncationSolution {
        n,
        c_n: c,
        residual,
        method: SolveMethod::BisectionMonteCarlo,
        phi_std_err: Some(n as f64 * panel.phi_std_err(c)),
    })
}

/// Exact when possible, Monte-Carlo otherwise.
pub fn solve_cn_auto(dist: &dyn Distribution, n: u64, budget: usize, seed: u64) -> Result<TruncationSolution> {
    match solve_cn(dist, n) {
        Err(Error::MissingClosedForm(_)) => solve_cn_monte_carlo(dist, n, budget, seed),
        other => other,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailBoundCheck {
    pub k: u32,
    pub c: f64,
    /// P(X² > c²_{2^k}), exact or estimated.
    pub probability: Estimate,
    pub bound: f64,
    pub holds: bool,
}

/// Checks P(X² > c²_{2^k}) ≤ 2^{-k}; exact with a closed-form tail,
/// otherwise Monte-Carlo with 3-sigma slack.
pub fn truncated_tail_bound_check(dist: &dyn Distribution, k: u32, budget: usize, seed: u64) -> Result<TailBoundCheck> {
    if k == 0 || k > 62 {
        return Err(Error::InvalidArgument(format!("k must be in 1..=62, got {k}")));
    }
    let n = 1u64 << k;
    let bound = 1.0 / n as f64;
    let sol = solve_cn_auto(dist, n, budget, seed)?;
    let probability = match dist.tail(sol.c_n) {
        Some(p) => Estimate::exact(p),
        None => {
            let xs = dist.sample_vec(seed ^ 0x5eed, budget);
            let w: Welford = xs.iter().map(|x| f64::from(u8::from(x * x > sol.c_n * sol.c_n))).collect();
            w.estimate()
        }
    };
    let holds = if probability.is_exact() { probability.value <= bound } else { probability.lo(3.0) <= bound };
    Ok(TailBoundCheck { k, c: sol.c_n, probability, bound, holds })
}

/// E over free coordinates of h² in the `which` sense, with `fixed`
/// frozen. Exact when the kernel has a closed form, otherwise a
/// Monte-Carlo mean of `budget` draws.
pub fn section_moment_estimate(
    kernel: &dyn Kernel,
    dist: &dyn Distribution,
    fixed: &[f64],
    cap: f64,
    which: SectionMoment,
    budget: usize,
    rng: &mut SimRng,
) -> Estimate {
    if let Some(v) = kernel.section_moment(fixed, dist, cap, which) {
        return Estimate::exact(v);
    }
    let d = kernel.arity();
    let mut point = fixed.to_vec();
    point.resize(d, 0.0);
    let cap2 = cap * cap;
    let mut w = Welford::new();
    for _ in 0..budget.max(2) {
        for slot in point.iter_mut().skip(fixed.len()) {
            *slot = dist.sample(rng);
        }
        let h2 = kernel.eval(&point).powi(2);
        w.push(match which {
            SectionMoment::Cap => h2.min(cap2),
            SectionMoment::Indicator if h2 <= cap2 => h2,
            SectionMoment::Indicator => 0.0,
        });
    }
    w.estimate()
}

/// f_k(x) = 2^k·E_Y(h²(x, Y) ∧ γ²_{2^k}) for an arity-2 kernel.
pub fn f_k(
    kernel: &dyn Kernel,
    dist: &dyn Distribution,
    seq: &dyn NormalizingSequence,
    k: u32,
    x: f64,
    budget: usize,
    seed: u64,
) -> Result<Estimate> {
    crate::model::kernel::check_arity(kernel, 2)?;
    let gamma = seq.gamma(1u64 << k);
    let mut rng = task_rng(seed, &[k as u64, x.to_bits()]);
    let e = section_moment_estimate(kernel, dist, &[x], gamma, SectionMoment::Cap, budget, &mut rng);
    Ok(e.scale((1u64 << k) as f64))
}

/// Uniform draw in (0, 1], for quantile sampling.
pub fn open_unit(rng: &mut SimRng) -> f64 {
    1.0 - rng.gen::<f64>()
}
