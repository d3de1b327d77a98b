//! Numerical checks of the hitting-probability inequalities: the
//! one-dimensional max bound, the second-moment lemmas for decoupled and
//! coupled sums, the section lemma, and the two-rectangle example.

pub mod lemma;
pub mod section;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::Distribution;

pub use lemma::{
    pz_power_witness, random_instances, verify_lemma, verify_lemma1, verify_lemma2, HypothesisCheck, LemmaConfig, RectangleFamily, Sampling,
    VerificationResult,
};
pub use section::{box_hit_exact, verify_section_lemma, SectionLemmaCheck, SectionLemmaConfig};

/// Slack for comparisons between quantities that agree up to rounding.
const ROUNDING: f64 = 8.0 * f64::EPSILON;

/// P(max |ξ_i| > t) against ½·min(Σ q_i, 1) and min(Σ q_i, 1), where
/// q_i = P(|ξ_i| > t).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MaxBounds {
    pub union: f64,
    pub lower: f64,
    pub upper: f64,
    pub probability: f64,
}

impl MaxBounds {
    pub fn lower_holds(&self) -> bool {
        self.lower <= self.probability * (1.0 + ROUNDING)
    }

    pub fn upper_holds(&self) -> bool {
        self.probability <= self.upper * (1.0 + ROUNDING)
    }

    pub fn holds(&self) -> bool {
        self.lower_holds() && self.upper_holds()
    }
}

/// Exact bounds for independent variables with exceedance probabilities `tails`.
pub fn d1_max_bounds(tails: &[f64]) -> Result<MaxBounds> {
    if let Some(q) = tails.iter().find(|q| !(0.0..=1.0).contains(*q)) {
        return Err(Error::InvalidArgument(format!("tail probability {q} outside [0, 1]")));
    }
    let union: f64 = tails.iter().sum();
    let probability = if tails.contains(&1.0) {
        1.0
    } else {
        -tails.iter().map(|&q| (-q).ln_1p()).sum::<f64>().exp_m1()
    };
    Ok(MaxBounds { union, lower: 0.5 * union.min(1.0), upper: union.min(1.0), probability })
}

/// n i.i.d. variables with P(|ξ| > t) = q.
pub fn d1_max_iid(q: f64, n: u64) -> Result<MaxBounds> {
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::InvalidArgument(format!("tail probability {q} outside [0, 1]")));
    }
    let union = q * n as f64;
    let probability = if q == 1.0 && n > 0 { 1.0 } else { -(n as f64 * (-q).ln_1p()).exp_m1() };
    Ok(MaxBounds { union, lower: 0.5 * union.min(1.0), upper: union.min(1.0), probability })
}

/// n i.i.d. copies of `dist` at threshold t, from its closed-form tail.
pub fn d1_max_for(dist: &dyn Distribution, t: f64, n: u64) -> Result<MaxBounds> {
    let q = dist.tail(t).ok_or(Error::MissingClosedForm("tail"))?;
    d1_max_iid(q, n)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepSummary {
    pub points: usize,
    pub violations: usize,
    /// min over the sweep of P − lower.
    pub worst_lower_margin: f64,
    /// min over the sweep of upper − P.
    pub worst_upper_margin: f64,
}

/// `count` log-spaced tail probabilities from `lo` to `hi`.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    (0..count).map(|i| lo * (hi / lo).powf(i as f64 / (count - 1) as f64)).collect()
}

pub fn d1_max_sweep(qs: &[f64], ns: impl IntoIterator<Item = u64> + Clone) -> Result<SweepSummary> {
    let mut out = SweepSummary { points: 0, violations: 0, worst_lower_margin: f64::INFINITY, worst_upper_margin: f64::INFINITY };
    for &q in qs {
        for n in ns.clone() {
            let b = d1_max_iid(q, n)?;
            out.points += 1;
            out.violations += usize::from(!b.holds());
            out.worst_lower_margin = out.worst_lower_margin.min(b.probability - b.lower);
            out.worst_upper_margin = out.worst_upper_margin.min(b.upper - b.probability);
        }
    }
    Ok(out)
}

/// Exact hit probability of A = {x < a, y < b} ∪ {x < b, y < a} by n × n
/// uniform pairs, with the quantities it is compared against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IntroExample {
    pub a: f64,
    pub b: f64,
    pub n: u64,
    pub p_hit: f64,
    /// min(na, 1)·min(nb, 1)
    pub product_approx: f64,
    /// μ(A) = 2ab − min(a, b)²
    pub mu: f64,
    pub n2_mu: f64,
}

impl IntroExample {
    /// |P − min(na,1)min(nb,1)| / P
    pub fn product_error(&self) -> f64 {
        (self.p_hit - self.product_approx).abs() / self.p_hit
    }

    /// P / min(n²μ, 1)
    pub fn sum_ratio(&self) -> f64 {
        self.p_hit / self.n2_mu.min(1.0)
    }
}

pub fn intro_example_exact(a: f64, b: f64, n: u64) -> Result<IntroExample> {
    if !((0.0..=1.0).contains(&a) && (0.0..=1.0).contains(&b)) {
        return Err(Error::InvalidArgument("a and b must lie in [0, 1]".into()));
    }
    // F(u) = P(min of n uniforms < u)
    let f = |u: f64| if u >= 1.0 { f64::from(u8::from(n > 0)) } else { -(n as f64 * (-u).ln_1p()).exp_m1() };
    let (s, t) = (a.min(b), a.max(b));
    // Both rectangles are hit iff min X < s and min Y < s (since s ≤ t).
    let p_hit = 2.0 * f(t) * f(s) - f(s) * f(s);
    let nf = n as f64;
    let mu = 2.0 * a * b - s * s;
    Ok(IntroExample { a, b, n, p_hit, product_approx: (nf * a).min(1.0) * (nf * b).min(1.0), mu, n2_mu: nf * nf * mu })
}
