//! Terms of the product-kernel condition
//! 2^{kl}·P(∏_{r≤l} X_r² > γ²_{2^k}/c_{2^k}^{2(d-l)}, min_{r≤l} X_r² > c²_{2^k}).

use rayon::prelude::*;

use crate::conditions::report::{ConditionReport, Term, VerdictConfig};
use crate::error::{Error, Result};
use crate::estimate::{Estimate, Welford};
use crate::model::{Distribution, NormalizingSequence};
use crate::quad::integrate_log;
use crate::sampling::TailSampler;
use crate::seeds::{tag, task_rng};
use crate::truncation::solve_cn_auto;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZprodEstimator {
    /// Nested 1-d quadrature in the quantile variable; needs closed-form
    /// tail and quantile.
    Quadrature,
    /// Importance-sampled Monte-Carlo with `budget` draws per term.
    MonteCarlo { budget: usize },
    /// Quadrature when the closed forms exist, Monte-Carlo otherwise.
    Auto { budget: usize },
}

/// Threshold pair (g, a) of one term: P(∏ V_r > g, min V_r > a), V = X².
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZprodEvent {
    pub g: f64,
    pub a: f64,
}

impl ZprodEvent {
    /// Thresholds at level k from γ_{2^k} and c_{2^k}. A zero c with d > l
    /// makes the product threshold infinite.
    pub fn new(gamma: f64, c: f64, d: usize, l: usize) -> Self {
        let g = if d == l {
            gamma * gamma
        } else if c == 0.0 {
            f64::INFINITY
        } else {
            gamma * gamma / c.powi(2 * (d - l) as i32)
        };
        Self { g, a: c * c }
    }
}

/// P(V_1⋯V_l > g, V_r > a for all r) by nested quadrature in u-space.
pub fn product_tail_quadrature(dist: &dyn Distribution, l: usize, g: f64, a: f64) -> Result<Estimate> {
    let missing = || Error::MissingClosedForm("quadrature of product tails");
    dist.tail(0.0).ok_or_else(missing)?;
    dist.abs_quantile(0.5).ok_or_else(missing)?;
    if l == 0 {
        return Err(Error::InvalidArgument("l must be at least 1".into()));
    }
    if g.is_infinite() {
        return Ok(Estimate::exact(0.0));
    }
    let (v, e) = nested(dist, l, g, a);
    Ok(Estimate::new(v.max(0.0), e))
}

fn tail_v(dist: &dyn Distribution, s: f64) -> f64 {
    dist.tail(s.max(0.0).sqrt()).unwrap()
}

/// Returns (value, error bound).
fn nested(dist: &dyn Distribution, l: usize, g: f64, a: f64) -> (f64, f64) {
    let big_g = tail_v(dist, a);
    if l == 1 {
        return (tail_v(dist, g.max(a)), 0.0);
    }
    if big_g == 0.0 {
        return (0.0, 0.0);
    }
    // For V_1 > g / a^{l-1} the remaining product constraint is implied by
    // the floors, so the inner probability is G^{l-1}.
    let inner_full = big_g.powi(l as i32 - 1);
    let cut = if a > 0.0 { g / a.powi(l as i32 - 1) } else { f64::INFINITY };
    let u_star = if cut.is_finite() { tail_v(dist, cut).min(big_g) } else { 0.0 };
    let mut value = u_star * inner_full;
    let mut error = 0.0;
    let lo = if u_star > 0.0 {
        u_star
    } else {
        // Truncate the integral near u = 0; the skipped mass is at most
        // lo·G^{l-1}.
        let lo = big_g * 1e-40;
        error += lo * inner_full;
        lo
    };
    if lo < big_g {
        let f = |u: f64| {
            let x = dist.abs_quantile(u).unwrap();
            let v = x * x;
            if v == 0.0 {
                0.0
            } else {
                nested(dist, l - 1, g / v, a).0
            }
        };
        // The inner probability vanishes once g/V_1 exceeds the largest
        // attainable product of the other l-1 factors.
        let top = dist.abs_quantile(f64::MIN_POSITIVE).unwrap_or(f64::INFINITY).powi(2);
        let mut breaks = Vec::new();
        if top.is_finite() && top > 0.0 {
            breaks.push(tail_v(dist, g / top.powi(l as i32 - 1)));
        }
        let r = integrate_log(f, lo, big_g, &breaks);
        value += r.value;
        error += r.error;
    }
    (value, error)
}

/// The same probability by importance-sampled Monte-Carlo, conditioning
/// every coordinate on V > a.
pub fn product_tail_monte_carlo(dist: &dyn Distribution, l: usize, g: f64, a: f64, budget: usize, seed: u64) -> Result<Estimate> {
    if l == 0 || budget < 2 {
        return Err(Error::InvalidArgument("need l ≥ 1 and budget ≥ 2".into()));
    }
    if g.is_infinite() {
        return Ok(Estimate::exact(0.0));
    }
    let mut rng = task_rng(seed, &[tag::ZPROD]);
    let u_max = dist.tail(a.max(0.0).sqrt());
    if let (Some(u_max), Some(sampler)) = (u_max, u_max.and_then(|u| TailSampler::new(dist, u.max(f64::MIN_POSITIVE)))) {
        if u_max == 0.0 {
            return Ok(Estimate::exact(0.0));
        }
        let mut w = Welford::new();
        for _ in 0..budget {
            let mut prod = 1.0;
            let mut weight = 1.0;
            let mut ok = true;
            for _ in 0..l {
                let s = sampler.draw_abs(&mut rng);
                let v = s.value * s.value;
                ok &= v > a;
                prod *= v;
                weight *= s.weight;
            }
            w.push(if ok && prod > g { weight } else { 0.0 });
        }
        return Ok(w.estimate().scale(u_max.powi(l as i32)));
    }
    let mut w = Welford::new();
    for _ in 0..budget {
        let mut prod = 1.0;
        let mut ok = true;
        for _ in 0..l {
            let x = dist.sample(&mut rng);
            let v = x * x;
            ok &= v > a;
            prod *= v;
        }
        w.push(f64::from(u8::from(ok && prod > g)));
    }
    Ok(w.estimate())
}

/// Per-k terms over `ks`. Levels run in parallel; each uses its own
/// derived stream.
pub fn zprod_terms(
    dist: &dyn Distribution,
    seq: &dyn NormalizingSequence,
    d: usize,
    l: usize,
    ks: std::ops::RangeInclusive<u32>,
    estimator: ZprodEstimator,
    seed: u64,
    config: &VerdictConfig,
) -> Result<ConditionReport> {
    if !(1..=d).contains(&l) {
        return Err(Error::InvalidArgument(format!("need 1 ≤ l ≤ d, got l={l}, d={d}")));
    }
    if *ks.start() == 0 || *ks.end() > 62 {
        return Err(Error::InvalidArgument("k must lie in 1..=62".into()));
    }
    let closed = dist.tail(0.0).is_some() && dist.abs_quantile(0.5).is_some();
    let ks: Vec<u32> = ks.collect();
    let mut low_prob_levels = Vec::new();
    let results: Vec<Result<(Term, bool)>> = ks
        .par_iter()
        .map(|&k| {
            let n = 1u64 << k;
            let c = solve_cn_auto(dist, n, 100_000, crate::seeds::derive_seed(seed, &[tag::TRUNCATION, k as u64]))?.c_n;
            let ev = ZprodEvent::new(seq.gamma(n), c, d, l);
            let mc_seed = crate::seeds::derive_seed(seed, &[tag::ZPROD, k as u64, l as u64]);
            let (p, budget) = match estimator {
                ZprodEstimator::Quadrature => (product_tail_quadrature(dist, l, ev.g, ev.a)?, None),
                ZprodEstimator::Auto { .. } if closed => (product_tail_quadrature(dist, l, ev.g, ev.a)?, None),
                ZprodEstimator::MonteCarlo { budget } | ZprodEstimator::Auto { budget } => {
                    (product_tail_monte_carlo(dist, l, ev.g, ev.a, budget, mc_seed)?, Some(budget))
                }
            };
            let low = budget.is_some_and(|b| p.value < 10.0 / b as f64);
            let scale = 2f64.powi((k as usize * l) as i32);
            let t = p.scale(scale);
            Ok((Term::new(k, t.value, t.std_err), low))
        })
        .collect();
    let mut terms = Vec::with_capacity(ks.len());
    for (k, r) in ks.iter().zip(results) {
        let (t, low) = r?;
        if low {
            low_prob_levels.push(*k);
        }
        terms.push(t);
    }
    let mut report = ConditionReport::new(format!("zprod(d={d},l={l})"), terms, config);
    if !low_prob_levels.is_empty() {
        report = report.with_note(format!(
            "probability below 10/budget at k = {low_prob_levels:?}; estimate relies on importance weights"
        ));
    }
    Ok(report)
}

/// All l = 1..=d reports.
pub fn zprod_all(
    dist: &dyn Distribution,
    seq: &dyn NormalizingSequence,
    d: usize,
    ks: std::ops::RangeInclusive<u32>,
    estimator: ZprodEstimator,
    seed: u64,
    config: &VerdictConfig,
) -> Result<Vec<ConditionReport>> {
    (1..=d).map(|l| zprod_terms(dist, seq, d, l, ks.clone(), estimator, seed, config)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conditions::report::Verdict;
    use crate::model::{Builtin, Normalizer};

    /// P(V_1 V_2 > g, V_1 > a, V_2 > a) for Pareto p with a ≥ 1.
    fn pareto_l2(p: f64, g: f64, a: f64) -> f64 {
        if a * a >= g {
            a.powf(-p)
        } else {
            g.powf(-p / 2.0) * (1.0 + p / 2.0 * (g / (a * a)).ln())
        }
    }

    #[test]
    fn pareto_l2_quadrature_matches_closed_form() {
        let d = Builtin::Pareto { p: 1.2 };
        for &(g, a) in &[(10.0, 1.0), (1e6, 4.0), (1e12, 100.0), (3.0, 2.0)] {
            let q = product_tail_quadrature(&d, 2, g, a).unwrap();
            let exact = pareto_l2(1.2, g, a);
            assert!((q.value - exact).abs() <= 1e-9 * exact, "g={g} a={a}: {} vs {exact}", q.value);
        }
    }

    #[test]
    fn monte_carlo_matches_closed_form() {
        let d = Builtin::Pareto { p: 1.0 };
        let (g, a) = (1e10, 9.0);
        let mc = product_tail_monte_carlo(&d, 2, g, a, 200_000, 1).unwrap();
        let exact = pareto_l2(1.0, g, a);
        assert!((mc.value - exact).abs() <= 3.0 * mc.std_err, "{} ± {} vs {exact}", mc.value, mc.std_err);
    }

    #[test]
    fn three_fold_product_uniform() {
        // P(U1 U2 U3 > 1/8) for |X| uniform on [0,1] with V = X²: the event
        // is |X1 X2 X3| > 1/√8.
        let d = Builtin::Uniform;
        let q = product_tail_quadrature(&d, 3, 1.0 / 8.0, 0.0).unwrap();
        // P(U1U2U3 > t) = t Σ_{j<3} ... = 1 - t(1 + L + L²/2) with L = ln(1/t)
        let t: f64 = 1.0 / 8f64.sqrt();
        let l = (1.0 / t).ln();
        let exact = 1.0 - t * (1.0 + l + l * l / 2.0);
        assert!((q.value - exact).abs() < 1e-8, "{} vs {exact}", q.value);
    }

    #[test]
    fn rademacher_terms_vanish() {
        let r = zprod_terms(&Builtin::Rademacher, &Normalizer::power(2.0), 2, 1, 1..=12, ZprodEstimator::Auto { budget: 1000 }, 1, &VerdictConfig::default()).unwrap();
        assert!(r.terms.iter().all(|t| t.value == 0.0));
        assert_eq!(r.verdict, Verdict::Summable);
    }

    #[test]
    fn l_equals_d_uses_gamma_alone() {
        let ev = ZprodEvent::new(5.0, 3.0, 2, 2);
        assert_eq!(ev.g, 25.0);
        assert_eq!(ZprodEvent::new(5.0, 0.0, 2, 1).g, f64::INFINITY);
    }

    #[test]
    fn bad_l() {
        let r = zprod_terms(&Builtin::Rademacher, &Normalizer::power(2.0), 2, 3, 1..=6, ZprodEstimator::Quadrature, 1, &VerdictConfig::default());
        assert!(r.is_err());
    }
}
