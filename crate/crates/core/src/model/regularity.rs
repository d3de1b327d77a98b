//! Certification of the regularity conditions on γ over a finite range.
//!
//! (5) γ nondecreasing, (6) γ_{2n} ≤ C γ_n, (7) Σ_{k≥l} 2^{dk}/γ²_{2^k} ≤
//! C 2^{dl}/γ²_{2^l}. The infinite tail in (7) is bounded by extrapolating
//! a_k = 2^{dk}/γ²_{2^k} geometrically with the worst consecutive ratio
//! seen on the checked range.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::normalizer::NormalizingSequence;

/// Every n up to this bound is checked for (5) and (6); beyond it only a
/// geometric grid is.
const DENSE_LIMIT: u64 = 1 << 22;

#[derive(Debug, Clone, Serialize)]
pub struct ConditionCheck {
    pub pass: bool,
    /// Smallest admissible constant found on the checked range.
    pub constant: Option<f64>,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RegularityReport {
    pub sequence: String,
    pub d: usize,
    pub k_max: u32,
    pub n_max: u64,
    /// First n where γ_n ≤ 0 (or is not finite), if any.
    pub nonpositive_at: Option<u64>,
    pub nondecreasing: ConditionCheck,
    pub doubling: ConditionCheck,
    pub tail_sum: ConditionCheck,
    /// Worst consecutive ratio a_k / a_{k-1}.
    pub tail_ratio: Option<f64>,
}

impl RegularityReport {
    pub fn all_pass(&self) -> bool {
        self.nonpositive_at.is_none() && self.nondecreasing.pass && self.doubling.pass && self.tail_sum.pass
    }

    pub fn require(&self) -> Result<()> {
        if let Some(n) = self.nonpositive_at {
            return Err(Error::NonPositiveGamma { n, value: f64::NAN });
        }
        if !self.all_pass() {
            let failed: Vec<&str> = [
                (!self.nondecreasing.pass).then_some("monotonicity"),
                (!self.doubling.pass).then_some("doubling"),
                (!self.tail_sum.pass).then_some("dyadic tail sum"),
            ]
            .into_iter()
            .flatten()
            .collect();
            return Err(Error::RegularityNotCertified(format!(
                "{} fails {} on n ≤ 2^{}",
                self.sequence,
                failed.join(", "),
                self.k_max
            )));
        }
        Ok(())
    }
}

fn checked_points(n_max: u64) -> Vec<u64> {
    let dense = n_max.min(DENSE_LIMIT);
    let mut pts: Vec<u64> = (1..=dense).collect();
    let mut x = dense as f64;
    while (x as u64) < n_max {
        x *= 1.001;
        pts.push((x as u64).min(n_max));
    }
    pts.dedup();
    pts
}

pub fn certify_regularity(seq: &dyn NormalizingSequence, d: usize, k_max: u32) -> Result<RegularityReport> {
    if k_max < 2 {
        return Err(Error::InvalidArgument(format!("k_max must be at least 2, got {k_max}")));
    }
    if k_max > 62 {
        return Err(Error::InvalidArgument(format!("k_max must be at most 62, got {k_max}")));
    }
    if d == 0 {
        return Err(Error::InvalidArgument("arity must be at least 1".into()));
    }
    let n_max = 1u64 << k_max;
    let pts = checked_points(n_max);
    let fail = |detail: String| ConditionCheck { pass: false, constant: None, detail };

    let mut nonpositive_at = None;
    let mut values = Vec::with_capacity(pts.len());
    for &n in &pts {
        let g = seq.gamma(n);
        if !(g.is_finite() && g > 0.0) {
            nonpositive_at = Some(n);
            break;
        }
        values.push(g);
    }
    if let Some(n) = nonpositive_at {
        let msg = format!("γ_{n} = {} is not positive", seq.gamma(n));
        return Ok(RegularityReport {
            sequence: seq.describe(),
            d,
            k_max,
            n_max,
            nonpositive_at,
            nondecreasing: fail(msg.clone()),
            doubling: fail(msg.clone()),
            tail_sum: fail(msg),
            tail_ratio: None,
        });
    }

    let first_drop = pts.windows(2).zip(values.windows(2)).find(|(_, v)| v[1] < v[0]).map(|(p, _)| p[1]);
    let nondecreasing = match first_drop {
        None => ConditionCheck { pass: true, constant: None, detail: format!("checked n ≤ {n_max}") },
        Some(n) => fail(format!("γ decreases at n = {n}")),
    };

    let mut doubling_c: f64 = 1.0;
    for (&n, &g) in pts.iter().zip(&values) {
        if 2 * n > n_max {
            break;
        }
        doubling_c = doubling_c.max(seq.gamma(2 * n) / g);
    }
    let doubling = ConditionCheck {
        pass: doubling_c.is_finite(),
        constant: Some(doubling_c),
        detail: format!("max γ_2n/γ_n over n ≤ {}", n_max / 2),
    };

    // ln a_k for k = 0..=k_max.
    let ln_a: Vec<f64> = (0..=k_max)
        .map(|k| d as f64 * k as f64 * std::f64::consts::LN_2 - 2.0 * seq.gamma(1u64 << k).ln())
        .collect();
    let ln_ratio = ln_a.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
    let ratio = ln_ratio.exp();
    let tail_sum = if ratio >= 1.0 - 1e-12 {
        fail(format!("tail ratio {ratio:.6} ≥ 1 on k ≤ {k_max}: the dyadic series does not converge geometrically"))
    } else {
        // Work relative to a_{k_max} to stay in range.
        let rel: Vec<f64> = ln_a.iter().map(|v| (v - ln_a[k_max as usize]).exp()).collect();
        let extrapolated = ratio / (1.0 - ratio);
        let mut suffix = extrapolated;
        let mut c: f64 = 0.0;
        for l in (0..=k_max as usize).rev() {
            suffix += rel[l];
            c = c.max(suffix / rel[l]);
        }
        ConditionCheck {
            pass: c.is_finite(),
            constant: Some(c),
            detail: format!("sums over k ≤ {k_max} plus geometric tail with ratio {ratio:.6}"),
        }
    };

    Ok(RegularityReport {
        sequence: seq.describe(),
        d,
        k_max,
        n_max,
        nonpositive_at: None,
        nondecreasing,
        doubling,
        tail_sum,
        tail_ratio: Some(ratio),
    })
}
