//! Incremental simulation of the symmetrized and squared statistics.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::Serialize;

use crate::engine::accum::ExtSum;
use crate::error::{Error, Result};
use crate::indexing::{enumerate_cube, enumerate_increasing, visit_increasing, visit_new_cube};
use crate::model::{certify_regularity, Distribution, Kernel, NormalizingSequence, RegularityReport};
use crate::seeds::{tag, task_rng, SimRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum PathMode {
    /// Σ_{I_n} ε_{i_1}⋯ε_{i_d} h(X_i)
    A,
    /// Σ_{C_n} ε^{(1)}_{i_1}⋯ε^{(d)}_{i_d} h(X^{(1)}_{i_1}, …, X^{(d)}_{i_d})
    Apr,
    /// Σ_{I_n} h²(X_i)
    B,
    /// Σ_{C_n} h²(X̃_i)
    Bpr,
    /// max_{I_n} h²(X_i)
    Max,
}

impl PathMode {
    pub const ALL: [PathMode; 5] = [PathMode::A, PathMode::Apr, PathMode::B, PathMode::Bpr, PathMode::Max];

    pub fn is_decoupled(self) -> bool {
        matches!(self, PathMode::Apr | PathMode::Bpr)
    }

    pub fn is_signed(self) -> bool {
        matches!(self, PathMode::A | PathMode::Apr)
    }

    /// Power of γ_n used to normalize checkpoints.
    pub fn power(self) -> i32 {
        if self.is_signed() {
            1
        } else {
            2
        }
    }
}

impl fmt::Display for PathMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PathMode::A => "A",
            PathMode::Apr => "Apr",
            PathMode::B => "B",
            PathMode::Bpr => "Bpr",
            PathMode::Max => "MAX",
        })
    }
}

impl FromStr for PathMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "a" => Ok(PathMode::A),
            "apr" => Ok(PathMode::Apr),
            "b" => Ok(PathMode::B),
            "bpr" => Ok(PathMode::Bpr),
            "max" => Ok(PathMode::Max),
            _ => Err(Error::UnknownBuiltin { kind: "path mode", name: s.to_string() }),
        }
    }
}

/// One new sample index: a value and a sign per array (1 array in coupled
/// modes, d in decoupled modes).
#[derive(Debug, Clone, PartialEq)]
pub struct NewSample {
    pub x: Vec<f64>,
    pub eps: Vec<f64>,
}

pub struct PathState<'k> {
    kernel: &'k dyn Kernel,
    mode: PathMode,
    d: usize,
    /// Coupled: one array. Decoupled: d arrays.
    xs: Vec<Vec<f64>>,
    eps: Vec<Vec<f64>>,
    acc: ExtSum,
    max_abs: f64,
    scratch: Vec<f64>,
}

impl<'k> PathState<'k> {
    pub fn new(kernel: &'k dyn Kernel, mode: PathMode, d: usize) -> Result<Self> {
        if kernel.arity() != d {
            return Err(Error::ArityMismatch { expected: d, found: kernel.arity() });
        }
        if d == 0 {
            return Err(Error::InvalidArgument("arity must be at least 1".into()));
        }
        let arrays = if mode.is_decoupled() { d } else { 1 };
        Ok(Self {
            kernel,
            mode,
            d,
            xs: vec![Vec::new(); arrays],
            eps: vec![Vec::new(); arrays],
            acc: ExtSum::new(),
            max_abs: 0.0,
            scratch: vec![0.0; d],
        })
    }

    pub fn n(&self) -> usize {
        self.xs[0].len()
    }

    pub fn mode(&self) -> PathMode {
        self.mode
    }

    pub fn arrays(&self) -> usize {
        self.xs.len()
    }

    pub fn accumulator(&self) -> &ExtSum {
        &self.acc
    }

    /// The raw statistic, or None if it overflows f64.
    pub fn value(&self) -> Option<f64> {
        match self.mode {
            PathMode::Max => {
                let v = self.max_abs * self.max_abs;
                v.is_finite().then_some(v)
            }
            _ => self.acc.to_f64(),
        }
    }

    /// The statistic divided by g^power.
    pub fn normalized(&self, g: f64) -> Option<f64> {
        match self.mode {
            PathMode::Max => {
                let v = (self.max_abs / g).powi(2);
                v.is_finite().then_some(v)
            }
            _ => self.acc.normalized(g, self.mode.power()),
        }
    }

    /// Appends one index and adds the summands of every tuple whose largest
    /// entry is the new index.
    pub fn extend(&mut self, sample: NewSample) -> Result<()> {
        let arrays = self.xs.len();
        if sample.x.len() != arrays || sample.eps.len() != arrays {
            return Err(Error::ArityMismatch { expected: arrays, found: sample.x.len() });
        }
        for (r, (x, e)) in sample.x.into_iter().zip(sample.eps).enumerate() {
            self.xs[r].push(x);
            self.eps[r].push(e);
        }
        let m = self.n();
        let d = self.d;
        let kernel = self.kernel;
        let mode = self.mode;
        let xs = &self.xs;
        let eps = &self.eps;
        let point = &mut self.scratch;
        let acc = &mut self.acc;
        let max_abs = &mut self.max_abs;
        let mut bad: Option<Vec<f64>> = None;
        let mut summand = |idx: &[usize], point: &mut Vec<f64>| -> bool {
            // idx is 1-based.
            let mut sign = 1.0;
            if mode.is_decoupled() {
                for (r, &i) in idx.iter().enumerate() {
                    point[r] = xs[r][i - 1];
                    sign *= eps[r][i - 1];
                }
            } else {
                for (r, &i) in idx.iter().enumerate() {
                    point[r] = xs[0][i - 1];
                    sign *= eps[0][i - 1];
                }
            }
            let h = kernel.eval(point);
            if !h.is_finite() {
                bad = Some(point.clone());
                return false;
            }
            match mode {
                PathMode::A | PathMode::Apr => acc.add(sign * h),
                PathMode::B | PathMode::Bpr => acc.add_square(h),
                PathMode::Max => *max_abs = max_abs.max(h.abs()),
            }
            true
        };
        if mode.is_decoupled() {
            visit_new_cube(m, d, |idx| summand(idx, point));
        } else if m >= d {
            let mut full = vec![0usize; d];
            full[d - 1] = m;
            visit_increasing(m - 1, d - 1, |head| {
                full[..d - 1].copy_from_slice(head);
                summand(&full, point)
            });
        }
        match bad {
            Some(point) => Err(Error::NonFiniteKernel { point }),
            None => Ok(()),
        }
    }

    /// Direct summation over I_n or C_n, for checking the incremental path.
    pub fn recompute(&self) -> f64 {
        let n = self.n();
        let mut point = vec![0.0; self.d];
        let mut total = 0.0f64;
        let mut max = 0.0f64;
        let mut visit = |idx: &[usize]| {
            let mut sign = 1.0;
            for (r, &i) in idx.iter().enumerate() {
                let a = if self.mode.is_decoupled() { r } else { 0 };
                point[r] = self.xs[a][i - 1];
                sign *= self.eps[a][i - 1];
            }
            let h = self.kernel.eval(&point);
            match self.mode {
                PathMode::A | PathMode::Apr => total += sign * h,
                PathMode::B | PathMode::Bpr => total += h * h,
                PathMode::Max => max = max.max(h * h),
            }
        };
        if self.mode.is_decoupled() {
            enumerate_cube(n, self.d).for_each(|i| visit(i.entries()));
        } else {
            enumerate_increasing(n, self.d).for_each(|i| visit(i.entries()));
        }
        if self.mode == PathMode::Max {
            max
        } else {
            total
        }
    }
}

/// Draws the next index's values and signs.
pub fn draw_sample(dist: &dyn Distribution, arrays: usize, x_rng: &mut SimRng, eps_rng: &mut SimRng) -> NewSample {
    NewSample {
        x: (0..arrays).map(|_| dist.sample(x_rng)).collect(),
        eps: (0..arrays).map(|_| if eps_rng.gen::<bool>() { 1.0 } else { -1.0 }).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Checkpoint {
    pub k: u32,
    pub n: u64,
    /// γ_n^{-power}·statistic
    pub value: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PathDiagnostics {
    pub seed: u64,
    pub mode: PathMode,
    pub checkpoints: Vec<Checkpoint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PathOptions {
    /// Refuse to run when the normalizer is not certified regular.
    pub require_regularity: bool,
}

impl Default for PathOptions {
    fn default() -> Self {
        Self { require_regularity: true }
    }
}

/// Runs one path to n = 2^{k_max} with checkpoints at n = 2, 4, …, 2^{k_max}.
///
/// X values and signs come from separate streams keyed by the seed, so
/// different modes run with the same seed see the same samples.
pub fn run_path(
    kernel: &dyn Kernel,
    dist: &dyn Distribution,
    seq: &dyn NormalizingSequence,
    mode: PathMode,
    k_max: u32,
    seed: u64,
    options: PathOptions,
) -> Result<PathDiagnostics> {
    if k_max == 0 || k_max > 40 {
        return Err(Error::InvalidArgument(format!("k_max must be in 1..=40, got {k_max}")));
    }
    let d = kernel.arity();
    if options.require_regularity {
        check_regularity(seq, d, k_max)?;
    }
    let mut state = PathState::new(kernel, mode, d)?;
    let mut x_rng = task_rng(seed, &[tag::PATH, 0]);
    let mut eps_rng = task_rng(seed, &[tag::PATH, 1]);
    let mut checkpoints = Vec::with_capacity(k_max as usize);
    let fast_max = mode == PathMode::Max && kernel.max_square_increasing(&[]).is_some();
    for k in 1..=k_max {
        let target = 1usize << k;
        while state.n() < target {
            let s = draw_sample(dist, state.arrays(), &mut x_rng, &mut eps_rng);
            if fast_max {
                state.xs[0].push(s.x[0]);
                state.eps[0].push(s.eps[0]);
            } else {
                state.extend(s)?;
            }
        }
        let n = target as u64;
        let g = seq.gamma(n);
        if !(g.is_finite() && g > 0.0) {
            return Err(Error::NonPositiveGamma { n, value: g });
        }
        let value = if fast_max {
            let m2 = kernel.max_square_increasing(&state.xs[0]).unwrap_or(f64::NAN);
            let v = m2 / (g * g);
            v.is_finite().then_some(v)
        } else {
            state.normalized(g)
        };
        let value = value.ok_or(Error::Overflow { n })?;
        checkpoints.push(Checkpoint { k, n, value });
    }
    Ok(PathDiagnostics { seed, mode, checkpoints })
}

fn check_regularity(seq: &dyn NormalizingSequence, d: usize, k_max: u32) -> Result<RegularityReport> {
    let report = certify_regularity(seq, d, k_max.max(2))?;
    report.require()?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Builtin, Constant, FnKernel, Normalizer, Product};

    fn sample(x: f64) -> NewSample {
        NewSample { x: vec![x], eps: vec![1.0] }
    }

    #[test]
    fn hand_example() {
        let k = Product::new(2);
        let mut s = PathState::new(&k, PathMode::A, 2).unwrap();
        s.extend(sample(1.0)).unwrap();
        s.extend(sample(-1.0)).unwrap();
        let before = s.value().unwrap();
        s.extend(sample(1.0)).unwrap();
        assert_eq!(s.value().unwrap() - before, 0.0);
    }

    #[test]
    fn arity_checks() {
        let k = Product::new(2);
        assert!(matches!(PathState::new(&k, PathMode::A, 3), Err(Error::ArityMismatch { .. })));
        let mut s = PathState::new(&k, PathMode::Apr, 2).unwrap();
        assert!(s.extend(sample(1.0)).is_err());
    }

    #[test]
    fn incremental_matches_recompute() {
        let k = FnKernel::new(3, "mix", |x| x[0] * x[1] + x[1] * x[2] + x[0] * x[2] + 0.5);
        let dist = Builtin::Uniform;
        for mode in PathMode::ALL {
            let mut st = PathState::new(&k, mode, 3).unwrap();
            let mut xr = task_rng(4, &[0]);
            let mut er = task_rng(4, &[1]);
            for _ in 0..16 {
                st.extend(draw_sample(&dist, st.arrays(), &mut xr, &mut er)).unwrap();
            }
            let inc = st.value().unwrap();
            let direct = st.recompute();
            assert!((inc - direct).abs() <= 1e-9 * direct.abs().max(1.0), "{mode}: {inc} vs {direct}");
        }
    }

    #[test]
    fn rademacher_mode_b_closed_form() {
        let k = Product::new(2);
        let g = Normalizer::power(2.0);
        let p = run_path(&k, &Builtin::Rademacher, &g, PathMode::B, 8, 1, PathOptions::default()).unwrap();
        for c in &p.checkpoints {
            let n = c.n as f64;
            assert!((c.value - n * (n - 1.0) / 2.0 / n.powi(4)).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_kernel_mode_a() {
        let k = Constant { arity: 2, value: 0.0 };
        let p = run_path(&k, &Builtin::Uniform, &Normalizer::power(2.0), PathMode::A, 6, 1, PathOptions::default()).unwrap();
        assert!(p.checkpoints.iter().all(|c| c.value == 0.0));
    }

    #[test]
    fn fast_max_matches_incremental() {
        let fast = Product::new(2);
        let slow = FnKernel::new(2, "xy", |x| x[0] * x[1]);
        let g = Normalizer::power(2.0);
        let a = run_path(&fast, &Builtin::Pareto { p: 1.0 }, &g, PathMode::Max, 7, 3, PathOptions::default()).unwrap();
        let b = run_path(&slow, &Builtin::Pareto { p: 1.0 }, &g, PathMode::Max, 7, 3, PathOptions::default()).unwrap();
        for (x, y) in a.checkpoints.iter().zip(&b.checkpoints) {
            assert!((x.value - y.value).abs() <= 1e-12 * x.value.max(1e-300));
        }
    }

    #[test]
    fn regularity_is_enforced_unless_overridden() {
        let k = Product::new(2);
        let g = Normalizer::power(1.0);
        assert!(run_path(&k, &Builtin::Rademacher, &g, PathMode::B, 4, 1, PathOptions::default()).is_err());
        let opts = PathOptions { require_regularity: false };
        assert!(run_path(&k, &Builtin::Rademacher, &g, PathMode::B, 4, 1, opts).is_ok());
    }

    #[test]
    fn heavy_tails_use_extended_range() {
        let k = Product::new(3);
        let g = Normalizer::power(3.0 / 0.05);
        let opts = PathOptions { require_regularity: false };
        let p = run_path(&k, &Builtin::Pareto { p: 0.05 }, &g, PathMode::B, 5, 2, opts);
        match p {
            Ok(p) => assert!(p.checkpoints.iter().all(|c| c.value.is_finite())),
            Err(e) => assert!(matches!(e, Error::Overflow { .. } | Error::NonFiniteKernel { .. })),
        }
    }
}
