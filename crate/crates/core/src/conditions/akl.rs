//! Membership in the sets A_{k,l}.
//!
//! A_{k,1} = {h² ≤ γ²_{2^k}} and A_{k,l+1} keeps the points of A_{k,l}
//! where 2^{kl}·E_I[h²·1_{A_{k,l}}] ≤ γ²_{2^k} for every |I| = l. E_I
//! integrates the coordinates in I against fresh independent draws.
//!
//! Inner expectations are exact when the kernel has a closed-form section
//! moment (|I| = 1 only), otherwise nested Monte-Carlo. Every random
//! decision uses a stream derived from the oracle seed, the level, the
//! subset and the bits of the point, so a point always gets the same answer
//! and the nesting A_{k,l+1} ⊆ A_{k,l} holds exactly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::Welford;
use crate::indexing::IndexSubset;
use crate::model::{Distribution, Kernel, NormalizingSequence, SectionMoment};
use crate::seeds::{tag, task_rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Membership {
    In,
    Out,
    Unknown,
}

impl Membership {
    /// Conjunction with unknowns propagated: Out dominates, then Unknown.
    pub fn and(self, other: Membership) -> Membership {
        match (self, other) {
            (Membership::Out, _) | (_, Membership::Out) => Membership::Out,
            (Membership::Unknown, _) | (_, Membership::Unknown) => Membership::Unknown,
            _ => Membership::In,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    /// Draws for the outermost inner expectation.
    pub budget: usize,
    /// Budget multiplier per extra level of nesting.
    pub shrink: f64,
    /// Width of the undecided band, in standard errors.
    pub sigmas: f64,
    pub min_budget: usize,
    pub seed: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self { budget: 4096, shrink: 0.25, sigmas: 2.0, min_budget: 64, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct MembershipOracle<'a> {
    kernel: &'a dyn Kernel,
    dist: &'a dyn Distribution,
    k: u32,
    gamma: f64,
    d: usize,
    config: OracleConfig,
}

fn point_hash(x: &[f64]) -> u64 {
    x.iter().fold(0x51_7c_c1_b7_27_22_0a_95u64, |h, v| crate::seeds::splitmix64(h ^ v.to_bits()))
}

impl<'a> MembershipOracle<'a> {
    pub fn new(kernel: &'a dyn Kernel, dist: &'a dyn Distribution, seq: &dyn NormalizingSequence, k: u32, config: OracleConfig) -> Result<Self> {
        if !kernel.is_symmetric() {
            return Err(Error::InvalidArgument("the sets A_{k,l} need a symmetric kernel".into()));
        }
        let gamma = seq.gamma(1u64 << k);
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::NonPositiveGamma { n: 1u64 << k, value: gamma });
        }
        Ok(Self { kernel, dist, k, gamma, d: kernel.arity(), config })
    }

    pub fn arity(&self) -> usize {
        self.d
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    /// Draws used by a screen at level l.
    pub fn budget_at(&self, l: usize) -> usize {
        let depth = (self.d - 1).saturating_sub(l) as i32;
        ((self.config.budget as f64 * self.config.shrink.powi(depth)) as usize).max(self.config.min_budget)
    }

    /// Is x in A_{k,l}?
    pub fn member(&self, l: usize, x: &[f64]) -> Membership {
        assert!(l >= 1 && l <= self.d && x.len() == self.d, "level or arity out of range");
        let h = self.kernel.eval(x);
        if !(h * h <= self.gamma * self.gamma) {
            return Membership::Out;
        }
        let mut out = Membership::In;
        for lev in 1..l {
            for free in IndexSubset::of_size(self.d, lev) {
                out = out.and(self.screen(free, x));
                if out == Membership::Out {
                    return out;
                }
            }
        }
        out
    }

    /// The level-|free| screen 2^{k|free|}·E_free[h²·1_{A_{k,|free|}}](x) ≤ γ²,
    /// integrating the slots in `free`. In means the screen passes.
    pub fn screen(&self, free: IndexSubset, x: &[f64]) -> Membership {
        let l = free.len();
        assert!(l >= 1 && l < self.d, "screen level out of range");
        let threshold = self.gamma * self.gamma / 2f64.powi((self.k as usize * l) as i32);
        if l == 1 {
            let fixed: Vec<f64> = free.complement().members().map(|r| x[r]).collect();
            if let Some(v) = self.kernel.section_moment(&fixed, self.dist, self.gamma, SectionMoment::Indicator) {
                return if v <= threshold { Membership::In } else { Membership::Out };
            }
        }
        let budget = self.budget_at(l);
        let mut rng = task_rng(self.config.seed, &[tag::ORACLE, self.k as u64, l as u64, free.mask(), point_hash(x)]);
        let mut lower = Welford::new();
        let mut upper = Welford::new();
        let mut z = x.to_vec();
        for _ in 0..budget {
            for r in free.members() {
                z[r] = self.dist.sample(&mut rng);
            }
            let h = self.kernel.eval(&z);
            let h2 = h * h;
            let m = if h2 <= self.gamma * self.gamma { self.member(l, &z) } else { Membership::Out };
            lower.push(if m == Membership::In { h2 } else { 0.0 });
            upper.push(if m != Membership::Out { h2 } else { 0.0 });
        }
        let s = self.config.sigmas;
        if upper.mean() + s * upper.std_err() <= threshold {
            Membership::In
        } else if lower.mean() - s * lower.std_err() > threshold {
            Membership::Out
        } else {
            Membership::Unknown
        }
    }

    /// Screen with the free slots placed last, for symmetric kernels given
    /// only the fixed values.
    pub fn screen_values(&self, fixed: &[f64], x_buf: &mut Vec<f64>) -> Membership {
        let m = fixed.len();
        x_buf.clear();
        x_buf.extend_from_slice(fixed);
        x_buf.resize(self.d, 0.0);
        let free = IndexSubset::from_positions(&(m..self.d).collect::<Vec<_>>(), self.d);
        self.screen(free, x_buf)
    }
}

/// Convenience wrapper for a single query.
pub fn akl_member(
    kernel: &dyn Kernel,
    dist: &dyn Distribution,
    seq: &dyn NormalizingSequence,
    k: u32,
    l: usize,
    x: &[f64],
    config: OracleConfig,
) -> Result<Membership> {
    if !(1..=kernel.arity()).contains(&l) {
        return Err(Error::InvalidArgument(format!("need 1 ≤ l ≤ d, got {l}")));
    }
    if x.len() != kernel.arity() {
        return Err(Error::ArityMismatch { expected: kernel.arity(), found: x.len() });
    }
    Ok(MembershipOracle::new(kernel, dist, seq, k, config)?.member(l, x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Builtin, FnKernel, IndicatorThreshold, Normalizer, NormalizingSequence, Product};

    #[test]
    fn bounded_kernel_is_everywhere_in() {
        let k = IndicatorThreshold { arity: 2, threshold: 0.5 };
        let g = Normalizer::power(1.0);
        for kk in 1..6 {
            for x in [[0.1, 0.2], [0.9, -0.99], [3.0, 4.0]] {
                assert_eq!(akl_member(&k, &Builtin::Uniform, &g, kk, 2, &x, OracleConfig::default()).unwrap(), Membership::In);
            }
        }
    }

    #[test]
    fn large_kernel_value_is_out_everywhere() {
        let k = Product::new(2);
        let g = Normalizer::power(1.0);
        for l in 1..=2 {
            assert_eq!(akl_member(&k, &Builtin::Uniform, &g, 2, l, &[10.0, 10.0], OracleConfig::default()).unwrap(), Membership::Out);
        }
    }

    #[test]
    fn rademacher_boundary_is_in() {
        // γ_{2^k} = 2^{k/2}: h² = 1 ≤ 2^k and 2^k·E(Y²·1{Y² ≤ 2^k}) = 2^k ≤ 2^k.
        let g = crate::model::FnNormalizer::new("2^{k/2}", |n| (n as f64).sqrt());
        let k = Product::new(2);
        for kk in 1..8 {
            assert_eq!(g.gamma(1 << kk), 2f64.powf(kk as f64 / 2.0));
            assert_eq!(akl_member(&k, &Builtin::Rademacher, &g, kk, 2, &[1.0, -1.0], OracleConfig::default()).unwrap(), Membership::In);
        }
    }

    #[test]
    fn monte_carlo_screen_agrees_with_closed_form() {
        let fast = Product::new(2);
        let slow = FnKernel::new(2, "xy", |x| x[0] * x[1]);
        let g = Normalizer::power(2.0);
        let dist = Builtin::Pareto { p: 1.0 };
        let cfg = OracleConfig { budget: 20_000, ..OracleConfig::default() };
        let a = MembershipOracle::new(&fast, &dist, &g, 4, cfg).unwrap();
        let b = MembershipOracle::new(&slow, &dist, &g, 4, cfg).unwrap();
        let mut disagreements = 0;
        for i in 1..60 {
            let x = [i as f64 * 1.7, 1.0];
            let (ma, mb) = (a.member(2, &x), b.member(2, &x));
            assert_ne!(ma, Membership::Unknown);
            if mb != Membership::Unknown && ma != mb {
                disagreements += 1;
            }
        }
        assert_eq!(disagreements, 0);
    }

    #[test]
    fn decisions_are_deterministic() {
        let k = FnKernel::new(3, "xyz", |x| x[0] * x[1] * x[2]);
        let g = Normalizer::power(1.5);
        let o = MembershipOracle::new(&k, &Builtin::Pareto { p: 1.0 }, &g, 3, OracleConfig { budget: 256, ..Default::default() }).unwrap();
        let x = [2.0, 5.0, 1.5];
        assert_eq!(o.member(3, &x), o.member(3, &x));
    }

    #[test]
    fn asymmetric_kernel_rejected() {
        let k = FnKernel::new(2, "x", |x| x[0]).asymmetric();
        assert!(MembershipOracle::new(&k, &Builtin::Uniform, &Normalizer::power(1.0), 1, OracleConfig::default()).is_err());
    }
}
