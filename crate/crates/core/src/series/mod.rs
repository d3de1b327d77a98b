//! Convergence criteria for random series indexed by Z₊^d: the
//! one-dimensional three-series test, the two-dimensional c_i/d_j
//! criterion, and the recursive d-dimensional criterion.
//!
//! Index sets are infinite, so every family must declare a cutoff N (the
//! kernels vanish beyond [1, N]^d) or come with a decay certificate bounding
//! what lies beyond. Terms are grouped into dyadic blocks of the largest
//! index before the summability verdict is applied.

pub mod multi;
pub mod two;

use rayon::prelude::*;
use serde::Serialize;

use crate::conditions::{ConditionReport, Term, Verdict, VerdictConfig};
use crate::error::{Error, Result};
use crate::estimate::{Estimate, Welford};
use crate::indexing::visit_new_cube;
use crate::model::Distribution;
use crate::seeds::{tag, task_rng, SimRng};

pub use multi::theorem6_check;
pub use two::{c_function, d_function, theorem5_check};

/// A family of kernels h_i : R^d → R indexed by i ∈ Z₊^d.
pub trait KernelFamily: Send + Sync {
    fn arity(&self) -> usize;

    fn name(&self) -> String;

    /// h_i(x) for a 1-based index. Must return exactly 0 beyond the cutoff.
    fn eval(&self, i: &[usize], x: &[f64]) -> f64;

    fn cutoff(&self) -> Option<usize>;

    /// True when h_i is identically zero, letting sparse families skip work.
    fn vanishes(&self, _i: &[usize]) -> bool {
        false
    }

    /// E(h_i(x_fixed, X_free)² ∧ 1) with the `fixed` slots frozen at
    /// `values` (slot order) and the rest drawn from `dist`.
    fn capped_moment(&self, _i: &[usize], _fixed: crate::indexing::IndexSubset, _values: &[f64], _dist: &dyn Distribution) -> Option<f64> {
        None
    }
}

/// A bound on everything a family contributes beyond `cutoff`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayCertificate {
    pub cutoff: usize,
    pub tail_bound: f64,
}

/// Coefficient patterns a_i for product families h_i(x) = a_i·∏ x_r.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Coefficients {
    /// a_i = 2^{−Σ i_r}
    Geometric,
    /// a_i = ∏ 1/i_r
    Harmonic,
    /// a_i = c
    Constant(f64),
    /// a_i = i_1^{−s} on the diagonal i_1 = … = i_d, else 0
    Diagonal(f64),
}

impl Coefficients {
    pub fn coefficient(&self, i: &[usize]) -> f64 {
        match *self {
            Coefficients::Geometric => 2f64.powi(-(i.iter().sum::<usize>() as i32)),
            Coefficients::Harmonic => i.iter().map(|&v| 1.0 / v as f64).product(),
            Coefficients::Constant(c) => c,
            Coefficients::Diagonal(s) => {
                if i.iter().all(|&v| v == i[0]) {
                    (i[0] as f64).powf(-s)
                } else {
                    0.0
                }
            }
        }
    }
}

/// h_i(x) = a_i·∏_r x_r for i within the cutoff.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProductFamily {
    pub d: usize,
    pub coefficients: Coefficients,
    pub cutoff: Option<usize>,
}

impl ProductFamily {
    pub fn new(d: usize, coefficients: Coefficients, cutoff: Option<usize>) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidArgument("arity must be at least 1".into()));
        }
        Ok(Self { d, coefficients, cutoff })
    }

    /// Parses "geometric", "harmonic", "constant:c" or "diagonal[:s]".
    pub fn parse(spec: &str, d: usize, cutoff: Option<usize>) -> Result<Self> {
        let (head, arg) = spec.split_once(':').map_or((spec, None), |(h, a)| (h, Some(a)));
        let num = |default: Option<f64>| -> Result<f64> {
            match arg {
                Some(a) => a.parse().map_err(|_| Error::InvalidArgument(format!("bad parameter in family '{spec}'"))),
                None => default.ok_or_else(|| Error::InvalidArgument(format!("family '{spec}' needs a parameter"))),
            }
        };
        let coefficients = match head {
            "geometric" => Coefficients::Geometric,
            "harmonic" => Coefficients::Harmonic,
            "constant" => Coefficients::Constant(num(Some(1.0))?),
            "diagonal" => Coefficients::Diagonal(num(Some(1.0))?),
            _ => return Err(Error::UnknownBuiltin { kind: "family", name: spec.into() }),
        };
        Self::new(d, coefficients, cutoff)
    }
}

impl KernelFamily for ProductFamily {
    fn arity(&self) -> usize {
        self.d
    }

    fn name(&self) -> String {
        match self.coefficients {
            Coefficients::Geometric => "geometric".into(),
            Coefficients::Harmonic => "harmonic".into(),
            Coefficients::Constant(c) => format!("constant:{c}"),
            Coefficients::Diagonal(s) => format!("diagonal:{s}"),
        }
    }

    fn eval(&self, i: &[usize], x: &[f64]) -> f64 {
        if self.cutoff.is_some_and(|n| i.iter().any(|&v| v > n)) {
            return 0.0;
        }
        self.coefficients.coefficient(i) * x.iter().product::<f64>()
    }

    fn cutoff(&self) -> Option<usize> {
        self.cutoff
    }

    fn vanishes(&self, i: &[usize]) -> bool {
        self.cutoff.is_some_and(|n| i.iter().any(|&v| v > n)) || self.coefficients.coefficient(i) == 0.0
    }

    fn capped_moment(&self, i: &[usize], fixed: crate::indexing::IndexSubset, values: &[f64], dist: &dyn Distribution) -> Option<f64> {
        if self.cutoff.is_some_and(|n| i.iter().any(|&v| v > n)) {
            return Some(0.0);
        }
        let p = self.coefficients.coefficient(i) * values.iter().product::<f64>();
        match self.d - fixed.len() {
            0 => Some((p * p).min(1.0)),
            1 if p == 0.0 => Some(0.0),
            1 => Some((p * p * dist.truncated_second_moment(1.0 / p.abs())?).min(1.0)),
            _ => None,
        }
    }
}

/// A family given by a closure, with no closed forms.
pub struct FnFamily<F> {
    d: usize,
    name: String,
    cutoff: Option<usize>,
    f: F,
}

impl<F: Fn(&[usize], &[f64]) -> f64 + Send + Sync> FnFamily<F> {
    pub fn new(d: usize, name: impl Into<String>, cutoff: Option<usize>, f: F) -> Self {
        Self { d, name: name.into(), cutoff, f }
    }
}

impl<F: Fn(&[usize], &[f64]) -> f64 + Send + Sync> KernelFamily for FnFamily<F> {
    fn arity(&self) -> usize {
        self.d
    }

    fn name(&self) -> String {
        self.name.clone()
    }

    fn eval(&self, i: &[usize], x: &[f64]) -> f64 {
        if self.cutoff.is_some_and(|n| i.iter().any(|&v| v > n)) {
            return 0.0;
        }
        (self.f)(i, x)
    }

    fn cutoff(&self) -> Option<usize> {
        self.cutoff
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesConfig {
    /// Outer draws of the coordinates at which c functions are evaluated.
    pub panel: usize,
    /// Inner draws for Monte-Carlo section expectations.
    pub inner: usize,
    /// Simulated partial-sum paths.
    pub replicates: usize,
    pub sigmas: f64,
    pub seed: u64,
    pub verdict: VerdictConfig,
    pub certificate: Option<DecayCertificate>,
}

impl Default for SeriesConfig {
    fn default() -> Self {
        Self { panel: 256, inner: 256, replicates: 100, sigmas: 3.0, seed: 0, verdict: VerdictConfig::default(), certificate: None }
    }
}

/// The cutoff to use and the tail mass it leaves out.
pub fn resolve_cutoff(family: &dyn KernelFamily, certificate: Option<DecayCertificate>) -> Result<(usize, f64)> {
    match (family.cutoff(), certificate) {
        (Some(n), _) => Ok((n, 0.0)),
        (None, Some(c)) => Ok((c.cutoff, c.tail_bound)),
        (None, None) => Err(Error::MissingCutoff),
    }
}

/// One summand of the capped-moment series.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IndexTerm {
    pub index: Vec<usize>,
    pub value: f64,
    pub err: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Median partial-sum behaviour over simulated paths of
/// S_n = Σ_{i ∈ [1,n]^d} ε_i h_i(X̃_i) and Q_n = Σ h_i²(X̃_i).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PartialSums {
    pub replicates: usize,
    /// Median of |S_n − S_{n−1}| for n = 1..=N.
    pub median_increment: Vec<f64>,
    /// Checkpoints 2^k < N, followed by N.
    pub checkpoints: Vec<usize>,
    /// Median of |S_{next} − S_{checkpoint}| between consecutive checkpoints.
    pub median_dyadic_increment: Vec<f64>,
    /// Median of Q at each checkpoint.
    pub median_square_sum: Vec<f64>,
}

impl PartialSums {
    /// Smallest n0 with every later median increment at most `tol`.
    pub fn stabilized_at(&self, tol: f64) -> Option<usize> {
        let last_big = self.median_increment.iter().rposition(|&v| v > tol);
        match last_big {
            None => Some(1),
            Some(p) if p + 1 < self.median_increment.len() => Some(p + 2),
            Some(_) => None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SeriesReport {
    pub family: String,
    pub d: usize,
    pub cutoff: usize,
    pub tail_bound: f64,
    /// Every computed c value and kernel value was finite.
    pub c1_finite: bool,
    pub c2: Vec<ConditionReport>,
    pub c3: ConditionReport,
    pub c3_total: Estimate,
    pub index_terms: Vec<IndexTerm>,
    /// Evaluations where a c function was too close to 1 to classify.
    pub flagged: usize,
    pub partial_sums: Option<PartialSums>,
    pub verdict: Verdict,
}

impl SeriesReport {
    fn combine(c1_finite: bool, c2: &[ConditionReport], c3: &ConditionReport) -> Verdict {
        if !c1_finite {
            return Verdict::Divergent;
        }
        let all = c2.iter().chain(std::iter::once(c3));
        let verdicts: Vec<Verdict> = all.map(|r| r.verdict).collect();
        if verdicts.contains(&Verdict::Divergent) {
            Verdict::Divergent
        } else if verdicts.iter().all(|&v| v == Verdict::Summable) {
            Verdict::Summable
        } else {
            Verdict::Inconclusive
        }
    }
}

/// Dyadic block of an index: k with 2^{k−1} ≤ max i < 2^k.
pub fn block_of(i: &[usize]) -> u32 {
    let m = i.iter().copied().max().unwrap_or(1).max(1);
    usize::BITS - m.leading_zeros()
}

/// Number of dyadic blocks lying entirely inside [1, N].
pub fn complete_blocks(cutoff: usize) -> u32 {
    block_of(&[cutoff + 1]) - 1
}

/// Sums index terms into the complete dyadic blocks. Every index shares
/// the same panels, so errors add linearly rather than in quadrature.
fn block_terms(terms: &[IndexTerm], cutoff: usize) -> Vec<Term> {
    let blocks = complete_blocks(cutoff) as usize;
    let mut value = vec![0.0; blocks];
    let mut err = vec![0.0; blocks];
    let mut lo = vec![0.0; blocks];
    let mut hi = vec![0.0; blocks];
    for t in terms {
        let b = block_of(&t.index) as usize - 1;
        if b >= blocks {
            continue;
        }
        value[b] += t.value;
        err[b] += t.err;
        lo[b] += t.lo;
        hi[b] += t.hi;
    }
    (0..blocks)
        .map(|b| Term {
            k: b as u32 + 1,
            value: value[b],
            err: err[b],
            lo: lo[b],
            hi: hi[b],
            flagged: hi[b] - lo[b] > lo[b].max(f64::MIN_POSITIVE),
        })
        .collect()
}

/// Condition report over dyadic blocks. Ranges too short for the verdict
/// still count as summable when every block is exactly zero.
fn block_report(name: impl Into<String>, terms: &[IndexTerm], cutoff: usize, config: &VerdictConfig) -> ConditionReport {
    let blocks = block_terms(terms, cutoff);
    let zero = blocks.iter().all(|t| t.hi == 0.0) && terms.iter().all(|t| t.hi == 0.0);
    let mut report = ConditionReport::new(name, blocks, config);
    if zero {
        report.verdict = Verdict::Summable;
    }
    report
}

fn total(terms: &[IndexTerm]) -> Estimate {
    Estimate::new(terms.iter().map(|t| t.value).sum(), terms.iter().map(|t| t.err).sum())
}

fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(f64::total_cmp);
    let m = xs.len();
    if m == 0 {
        f64::NAN
    } else if m % 2 == 1 {
        xs[m / 2]
    } else {
        0.5 * (xs[m / 2 - 1] + xs[m / 2])
    }
}

/// Simulates partial sums with per-axis Rademacher signs ε_i = ∏_r ε^{(r)}_{i_r}.
pub fn simulate_partial_sums(family: &dyn KernelFamily, dists: &[&dyn Distribution], cutoff: usize, replicates: usize, seed: u64) -> Result<PartialSums> {
    let d = family.arity();
    if dists.len() != d {
        return Err(Error::ArityMismatch { expected: d, found: dists.len() });
    }
    if replicates == 0 || cutoff == 0 {
        return Err(Error::InvalidArgument("need at least one replicate and a positive cutoff".into()));
    }
    let paths: Vec<(Vec<f64>, Vec<f64>)> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = task_rng(seed, &[tag::SERIES, 9, r as u64]);
            let xs: Vec<Vec<f64>> = dists.iter().map(|dist| (0..cutoff).map(|_| dist.sample(&mut rng)).collect()).collect();
            let eps: Vec<Vec<f64>> = (0..d).map(|_| (0..cutoff).map(|_| if rand::Rng::gen::<bool>(&mut rng) { 1.0 } else { -1.0 }).collect()).collect();
            let mut s = Vec::with_capacity(cutoff);
            let mut q = Vec::with_capacity(cutoff);
            let (mut sa, mut qa) = (0.0, 0.0);
            let mut point = vec![0.0; d];
            for m in 1..=cutoff {
                visit_new_cube(m, d, |i| {
                    let mut sign = 1.0;
                    for (r, &j) in i.iter().enumerate() {
                        point[r] = xs[r][j - 1];
                        sign *= eps[r][j - 1];
                    }
                    let h = family.eval(i, &point);
                    sa += sign * h;
                    qa += h * h;
                    true
                });
                s.push(sa);
                q.push(qa);
            }
            (s, q)
        })
        .collect();
    let mut checkpoints: Vec<usize> = (0..).map(|k| 1usize << k).take_while(|&c| c < cutoff).collect();
    checkpoints.push(cutoff);
    let median_increment = (0..cutoff)
        .map(|n| {
            let mut v: Vec<f64> = paths.iter().map(|(s, _)| (s[n] - if n > 0 { s[n - 1] } else { 0.0 }).abs()).collect();
            median(&mut v)
        })
        .collect();
    let median_dyadic_increment = checkpoints
        .windows(2)
        .map(|w| {
            let mut v: Vec<f64> = paths.iter().map(|(s, _)| (s[w[1] - 1] - s[w[0] - 1]).abs()).collect();
            median(&mut v)
        })
        .collect();
    let median_square_sum = checkpoints
        .iter()
        .map(|&c| {
            let mut v: Vec<f64> = paths.iter().map(|(_, q)| q[c - 1]).collect();
            median(&mut v)
        })
        .collect();
    Ok(PartialSums { replicates, median_increment, checkpoints, median_dyadic_increment, median_square_sum })
}

/// Mean and standard error of min(h², 1) over `panel` with the free slots
/// filled from it.
fn capped_mean(family: &dyn KernelFamily, i: &[usize], point: &mut [f64], free: &[usize], panel: &[Vec<f64>]) -> Estimate {
    let mut w = Welford::new();
    for b in 0..panel[0].len() {
        for (q, &r) in free.iter().enumerate() {
            point[r] = panel[q][b];
        }
        let h = family.eval(i, point);
        w.push((h * h).min(1.0));
    }
    w.estimate()
}

/// Kolmogorov's criterion for Σ ε_i h_i(X_i): the series Σ E(h_i(X_i)² ∧ 1).
pub fn three_series_d1(family: &dyn KernelFamily, dist: &dyn Distribution, config: &SeriesConfig) -> Result<SeriesReport> {
    if family.arity() != 1 {
        return Err(Error::ArityMismatch { expected: 1, found: family.arity() });
    }
    let (cutoff, tail) = resolve_cutoff(family, config.certificate)?;
    let mut rng = task_rng(config.seed, &[tag::SERIES, 1]);
    let panel = vec![draw_panel(dist, config.inner, &mut rng)];
    let empty = crate::indexing::IndexSubset::empty(1);
    let index_terms: Vec<IndexTerm> = (1..=cutoff)
        .map(|i| {
            let e = match family.capped_moment(&[i], empty, &[], dist) {
                Some(v) => Estimate::exact(v),
                None => capped_mean(family, &[i], &mut [0.0], &[0], &panel),
            };
            IndexTerm { index: vec![i], value: e.value, err: e.std_err, lo: e.value, hi: e.value }
        })
        .collect();
    let c1_finite = index_terms.iter().all(|t| t.value.is_finite());
    let c3 = block_report("E(h^2 ^ 1)", &index_terms, cutoff, &config.verdict);
    let partial_sums = if config.replicates > 0 { Some(simulate_partial_sums(family, &[dist], cutoff, config.replicates, config.seed)?) } else { None };
    let verdict = SeriesReport::combine(c1_finite, &[], &c3);
    Ok(SeriesReport {
        family: family.name(),
        d: 1,
        cutoff,
        tail_bound: tail,
        c1_finite,
        c2: Vec::new(),
        c3_total: total(&index_terms),
        c3,
        index_terms,
        flagged: 0,
        partial_sums,
        verdict,
    })
}

fn draw_panel(dist: &dyn Distribution, size: usize, rng: &mut SimRng) -> Vec<f64> {
    (0..size).map(|_| dist.sample(rng)).collect()
}

/// Three-way comparison of a c value with 1 (non-strict ≤ counts as in).
fn at_most_one(c: Estimate, sigmas: f64) -> crate::conditions::Membership {
    use crate::conditions::Membership;
    if !c.value.is_finite() {
        Membership::Out
    } else if c.hi(sigmas) <= 1.0 {
        Membership::In
    } else if c.lo(sigmas) > 1.0 {
        Membership::Out
    } else {
        Membership::Unknown
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Builtin;

    fn config() -> SeriesConfig {
        SeriesConfig { replicates: 20, ..Default::default() }
    }

    #[test]
    fn block_indices() {
        assert_eq!(block_of(&[1]), 1);
        assert_eq!(block_of(&[2, 3]), 2);
        assert_eq!(block_of(&[4, 1]), 3);
        assert_eq!(block_of(&[30]), 5);
        assert_eq!(block_of(&[64]), 7);
        assert_eq!(complete_blocks(63), 6);
        assert_eq!(complete_blocks(64), 6);
        assert_eq!(complete_blocks(30), 4);
    }

    #[test]
    fn harmonic_squares_are_summable() {
        let fam = ProductFamily::parse("harmonic", 1, Some(1024)).unwrap();
        let r = three_series_d1(&fam, &Builtin::Rademacher, &config()).unwrap();
        assert_eq!(r.verdict, Verdict::Summable);
        let exact: f64 = (1..=1024).map(|i| 1.0 / (i * i) as f64).sum();
        assert!((r.c3_total.value - exact).abs() < 1e-12);
    }

    #[test]
    fn constant_terms_diverge() {
        let fam = ProductFamily::parse("constant:1", 1, Some(256)).unwrap();
        let r = three_series_d1(&fam, &Builtin::Rademacher, &config()).unwrap();
        assert_eq!(r.verdict, Verdict::Divergent);
        assert_eq!(r.c3_total.value, 256.0);
    }

    #[test]
    fn zero_terms() {
        let fam = ProductFamily::parse("constant:0", 1, Some(128)).unwrap();
        let r = three_series_d1(&fam, &Builtin::Uniform, &config()).unwrap();
        assert_eq!(r.verdict, Verdict::Summable);
        assert_eq!(r.c3_total.value, 0.0);
        let ps = r.partial_sums.unwrap();
        assert!(ps.median_increment.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn cutoff_is_required() {
        let fam = ProductFamily::parse("geometric", 1, None).unwrap();
        assert!(matches!(three_series_d1(&fam, &Builtin::Uniform, &config()), Err(Error::MissingCutoff)));
        let cert = SeriesConfig { certificate: Some(DecayCertificate { cutoff: 64, tail_bound: 4f64.powi(-64) }), ..config() };
        let r = three_series_d1(&fam, &Builtin::Uniform, &cert).unwrap();
        assert_eq!(r.cutoff, 64);
        assert_eq!(r.verdict, Verdict::Summable);
    }

    #[test]
    fn beyond_cutoff_is_zero() {
        let fam = ProductFamily::parse("constant:3", 2, Some(5)).unwrap();
        assert_eq!(fam.eval(&[6, 1], &[1.0, 1.0]), 0.0);
        assert_eq!(fam.eval(&[5, 5], &[1.0, 1.0]), 3.0);
        assert!(ProductFamily::parse("bogus", 2, None).is_err());
    }

    #[test]
    fn monte_carlo_matches_closed_form() {
        let exact = ProductFamily::parse("harmonic", 1, Some(64)).unwrap();
        let opaque = FnFamily::new(1, "harmonic (opaque)", Some(64), |i: &[usize], x: &[f64]| x[0] / i[0] as f64);
        let cfg = SeriesConfig { inner: 4000, ..config() };
        let a = three_series_d1(&exact, &Builtin::Uniform, &cfg).unwrap();
        let b = three_series_d1(&opaque, &Builtin::Uniform, &cfg).unwrap();
        for (s, t) in a.index_terms.iter().zip(&b.index_terms) {
            assert!((s.value - t.value).abs() <= 3.5 * t.err.max(1e-15), "{s:?} {t:?}");
        }
    }

    #[test]
    fn partial_sums_of_constant_signs() {
        // One term per n, each ±1: increments are exactly 1.
        let fam = ProductFamily::parse("constant:1", 1, Some(16)).unwrap();
        let ps = simulate_partial_sums(&fam, &[&Builtin::Rademacher], 16, 11, 0).unwrap();
        assert!(ps.median_increment.iter().all(|&v| v == 1.0));
        assert_eq!(ps.checkpoints, vec![1, 2, 4, 8, 16]);
        assert_eq!(ps.median_square_sum, vec![1.0, 2.0, 4.0, 8.0, 16.0]);
        assert_eq!(ps.stabilized_at(0.5), None);
        assert_eq!(ps.stabilized_at(1.0), Some(1));
    }
}
