//! Terms P(∃ i ∈ I_{2^k}: X_i ∉ A_{k,d}) and their decoupled analogue over
//! C_{2^k}, by replicate simulation.
//!
//! x ∉ A_{k,d} exactly when h²(x) > γ² or some screen at a level l < d
//! fails, and a level-l screen depends only on the d-l fixed coordinates.
//! So each replicate checks the cheap h² test on full tuples and the
//! screens on (d-l)-subsets of sample values instead of on every tuple.

use rayon::prelude::*;
use serde::Serialize;

use crate::conditions::akl::{Membership, MembershipOracle, OracleConfig};
use crate::conditions::report::{ConditionReport, Term, VerdictConfig};
use crate::error::{Error, Result};
use crate::estimate::proportion;
use crate::indexing::{visit_cube, visit_increasing, IndexSubset};
use crate::model::{Distribution, Kernel, NormalizingSequence};
use crate::seeds::{derive_seed, tag, task_rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Coupling {
    Coupled,
    Decoupled,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionCConfig {
    pub replicates: usize,
    pub oracle: OracleConfig,
    pub seed: u64,
    pub verdict: VerdictConfig,
}

impl Default for ConditionCConfig {
    fn default() -> Self {
        Self { replicates: 400, oracle: OracleConfig::default(), seed: 0, verdict: VerdictConfig::default() }
    }
}

/// Outcome of one replicate: does some tuple leave A_{k,d}?
pub fn replicate_event(oracle: &MembershipOracle<'_>, kernel: &dyn Kernel, arrays: &[Vec<f64>], coupling: Coupling) -> Membership {
    let d = oracle.arity();
    let g2 = oracle.gamma() * oracle.gamma();
    let n = arrays[0].len();
    let mut point = vec![0.0; d];

    let level1 = match coupling {
        Coupling::Coupled => kernel.max_square_increasing(&arrays[0]).map(|m| m > g2),
        Coupling::Decoupled => kernel.max_square_cube(arrays).map(|m| m > g2),
    };
    let level1 = level1.unwrap_or_else(|| {
        let mut hit = false;
        let mut visit = |idx: &[usize]| {
            for (r, &i) in idx.iter().enumerate() {
                let a = if coupling == Coupling::Decoupled { r } else { 0 };
                point[r] = arrays[a][i - 1];
            }
            let h = kernel.eval(&point);
            hit = !(h * h <= g2);
            !hit
        };
        match coupling {
            Coupling::Coupled => visit_increasing(n, d, &mut visit),
            Coupling::Decoupled => visit_cube(n, d, &mut visit),
        };
        hit
    });
    if level1 {
        return Membership::Out;
    }
    if coupling == Coupling::Coupled && n < d {
        return Membership::In;
    }

    let mut unknown = false;
    let mut buf = Vec::with_capacity(d);
    let mut fixed = vec![0.0; d];
    // Most informative screens first: one fixed coordinate.
    for m in 1..d {
        let failed = match coupling {
            Coupling::Coupled => !visit_increasing(n, m, |idx| {
                for (r, &i) in idx.iter().enumerate() {
                    fixed[r] = arrays[0][i - 1];
                }
                match oracle.screen_values(&fixed[..m], &mut buf) {
                    Membership::Out => false,
                    Membership::Unknown => {
                        unknown = true;
                        true
                    }
                    Membership::In => true,
                }
            }),
            Coupling::Decoupled => IndexSubset::of_size(d, m).any(|slots| {
                let slots: Vec<usize> = slots.members().collect();
                !visit_cube(n, m, |idx| {
                    for (q, (&r, &i)) in slots.iter().zip(idx).enumerate() {
                        fixed[q] = arrays[r][i - 1];
                    }
                    match oracle.screen_values(&fixed[..m], &mut buf) {
                        Membership::Out => false,
                        Membership::Unknown => {
                            unknown = true;
                            true
                        }
                        Membership::In => true,
                    }
                })
            }),
        };
        if failed {
            return Membership::Out;
        }
    }
    if unknown {
        Membership::Unknown
    } else {
        Membership::In
    }
}

/// Term for one level k from `replicates` simulated sample sets.
pub fn condition_c_term(
    kernel: &dyn Kernel,
    dist: &dyn Distribution,
    seq: &dyn NormalizingSequence,
    k: u32,
    coupling: Coupling,
    config: &ConditionCConfig,
) -> Result<Term> {
    let d = kernel.arity();
    let oracle_cfg = OracleConfig { seed: derive_seed(config.seed, &[tag::ORACLE, k as u64]), ..config.oracle };
    let oracle = MembershipOracle::new(kernel, dist, seq, k, oracle_cfg)?;
    let n = 1usize << k;
    let arrays_per = if coupling == Coupling::Decoupled { d } else { 1 };
    let outcomes: Vec<Membership> = (0..config.replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = task_rng(config.seed, &[tag::CONDITION_C, k as u64, r as u64]);
            let arrays: Vec<Vec<f64>> = (0..arrays_per).map(|_| (0..n).map(|_| dist.sample(&mut rng)).collect()).collect();
            replicate_event(&oracle, kernel, &arrays, coupling)
        })
        .collect();
    let hits = outcomes.iter().filter(|&&m| m == Membership::Out).count() as u64;
    let unknown = outcomes.iter().filter(|&&m| m == Membership::Unknown).count() as u64;
    let total = config.replicates as u64;
    let p = proportion(hits, total);
    Ok(Term {
        k,
        value: p.value,
        err: p.std_err,
        lo: hits as f64 / total as f64,
        hi: (hits + unknown) as f64 / total as f64,
        flagged: unknown > hits,
    })
}

pub fn condition_c_terms(
    kernel: &dyn Kernel,
    dist: &dyn Distribution,
    seq: &dyn NormalizingSequence,
    ks: std::ops::RangeInclusive<u32>,
    coupling: Coupling,
    config: &ConditionCConfig,
) -> Result<ConditionReport> {
    if config.replicates == 0 {
        return Err(Error::InvalidArgument("replicates must be positive".into()));
    }
    if *ks.start() == 0 || *ks.end() > 30 {
        return Err(Error::InvalidArgument("k must lie in 1..=30".into()));
    }
    let terms = ks.map(|k| condition_c_term(kernel, dist, seq, k, coupling, config)).collect::<Result<Vec<_>>>()?;
    let name = match coupling {
        Coupling::Coupled => "C",
        Coupling::Decoupled => "Cpr",
    };
    let unknowns = terms.iter().filter(|t| t.hi > t.lo).count();
    let mut report = ConditionReport::new(name, terms, &config.verdict);
    if unknowns > 0 {
        report = report.with_note(format!("{unknowns} level(s) contain undecided replicates; term intervals are [lo, hi]"));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conditions::report::Verdict;
    use crate::indexing::enumerate_increasing;
    use crate::model::{Builtin, Constant, IndicatorThreshold, Normalizer, Product};

    #[test]
    fn bounded_kernel_terms_vanish() {
        let k = IndicatorThreshold { arity: 2, threshold: 0.1 };
        let g = Normalizer::power(2.0);
        let cfg = ConditionCConfig { replicates: 50, ..Default::default() };
        for coupling in [Coupling::Coupled, Coupling::Decoupled] {
            let r = condition_c_terms(&k, &Builtin::Uniform, &g, 1..=8, coupling, &cfg).unwrap();
            assert!(r.terms.iter().all(|t| t.value == 0.0 && t.hi == 0.0));
            assert_eq!(r.verdict, Verdict::Summable);
        }
    }

    #[test]
    fn large_constant_kernel_diverges() {
        let k = Constant { arity: 2, value: 1e9 };
        let g = Normalizer::power(2.0);
        let cfg = ConditionCConfig { replicates: 30, ..Default::default() };
        let r = condition_c_terms(&k, &Builtin::Uniform, &g, 1..=7, Coupling::Coupled, &cfg).unwrap();
        assert!(r.terms.iter().all(|t| t.value == 1.0));
        assert_eq!(r.verdict, Verdict::Divergent);
    }

    #[test]
    fn shortcut_matches_tuple_by_tuple_membership() {
        let k = Product::new(2);
        let g = Normalizer::power(2.0);
        let dist = Builtin::Pareto { p: 1.0 };
        for kk in [2u32, 4] {
            let oracle = MembershipOracle::new(&k, &dist, &g, kk, OracleConfig::default()).unwrap();
            for r in 0..40 {
                let mut rng = task_rng(9, &[r]);
                let xs: Vec<f64> = (0..1usize << kk).map(|_| dist.sample(&mut rng)).collect();
                let fast = replicate_event(&oracle, &k, std::slice::from_ref(&xs), Coupling::Coupled);
                let slow = enumerate_increasing(xs.len(), 2).any(|i| {
                    let x: Vec<f64> = i.entries().iter().map(|&j| xs[j - 1]).collect();
                    oracle.member(2, &x) == Membership::Out
                });
                assert_eq!(fast == Membership::Out, slow);
            }
        }
    }
}
