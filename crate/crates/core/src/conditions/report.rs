//! Condition reports and the finite-range summability verdict.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Summable,
    Divergent,
    Inconclusive,
}

impl Verdict {
    pub fn is_conclusive(self) -> bool {
        self != Verdict::Inconclusive
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Summable => "summable",
            Verdict::Divergent => "divergent",
            Verdict::Inconclusive => "inconclusive",
        })
    }
}

/// Thresholds for [`summability_verdict`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerdictConfig {
    /// Slope margin for the log2-term fit.
    pub delta: f64,
    /// Terms bounded below by this (after subtracting two standard errors)
    /// count as divergent.
    pub epsilon: f64,
}

impl Default for VerdictConfig {
    fn default() -> Self {
        Self { delta: 0.25, epsilon: 0.1 }
    }
}

/// One series term with its Monte-Carlo error. `lo`/`hi` bracket the term
/// when some sub-decisions were undecided.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Term {
    pub k: u32,
    pub value: f64,
    pub err: f64,
    pub lo: f64,
    pub hi: f64,
    /// The term is dominated by undecided sub-decisions.
    pub flagged: bool,
}

impl Term {
    pub fn new(k: u32, value: f64, err: f64) -> Self {
        Self { k, value, err, lo: value, hi: value, flagged: false }
    }

    pub fn exact(k: u32, value: f64) -> Self {
        Self::new(k, value, 0.0)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ConditionReport {
    pub condition: String,
    pub terms: Vec<Term>,
    pub partial_sums: Vec<f64>,
    pub verdict: Verdict,
    pub notes: Vec<String>,
}

impl ConditionReport {
    pub fn new(condition: impl Into<String>, terms: Vec<Term>, config: &VerdictConfig) -> Self {
        let mut acc = 0.0;
        let partial_sums = terms
            .iter()
            .map(|t| {
                acc += t.value.max(0.0);
                acc
            })
            .collect();
        let verdict = if terms.iter().rev().take(terms.len().div_ceil(2)).any(|t| t.flagged) {
            Verdict::Inconclusive
        } else {
            summability_verdict(&terms, config).unwrap_or(Verdict::Inconclusive)
        };
        Self { condition: condition.into(), terms, partial_sums, verdict, notes: Vec::new() }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.notes.push(note.into());
        self
    }

    pub fn k_range(&self) -> Option<(u32, u32)> {
        Some((self.terms.first()?.k, self.terms.last()?.k))
    }

    pub fn summary_line(&self) -> String {
        match self.k_range() {
            Some((a, b)) => format!("{}: {} on k = {a}..={b} (finite-range proxy)", self.condition, self.verdict),
            None => format!("{}: no terms", self.condition),
        }
    }
}

/// Least-squares slope of y on x.
pub fn ls_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Classifies a finite run of nonnegative terms.
///
/// On the last half of the range: all-zero trailing terms mean summable;
/// otherwise the slope of log2(term) against k decides (below -δ summable,
/// above δ divergent), and terms bounded below by ε after subtracting two
/// standard errors mean divergent.
pub fn summability_verdict(terms: &[Term], config: &VerdictConfig) -> Result<Verdict> {
    if terms.len() < 6 {
        return Err(Error::InvalidArgument(format!("need at least 6 terms, got {}", terms.len())));
    }
    let tail = &terms[terms.len() / 2..];
    if tail.iter().rev().take(3).all(|t| t.value == 0.0) {
        return Ok(Verdict::Summable);
    }
    let positive: Vec<&Term> = tail.iter().filter(|t| t.value > 0.0).collect();
    let slope = if positive.len() >= 3 {
        let xs: Vec<f64> = positive.iter().map(|t| t.k as f64).collect();
        let ys: Vec<f64> = positive.iter().map(|t| t.value.log2()).collect();
        Some(ls_slope(&xs, &ys))
    } else {
        None
    };
    if let Some(s) = slope {
        if s < -config.delta {
            return Ok(Verdict::Summable);
        }
    }
    let floor = tail.iter().map(|t| t.value - 2.0 * t.err).fold(f64::INFINITY, f64::min);
    if floor >= config.epsilon || slope.is_some_and(|s| s > config.delta) {
        return Ok(Verdict::Divergent);
    }
    Ok(Verdict::Inconclusive)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn terms(f: impl Fn(u32) -> f64) -> Vec<Term> {
        (1..=12).map(|k| Term::exact(k, f(k))).collect()
    }

    #[test]
    fn examples() {
        let c = VerdictConfig::default();
        assert_eq!(summability_verdict(&terms(|k| 2f64.powi(-(k as i32))), &c).unwrap(), Verdict::Summable);
        assert_eq!(summability_verdict(&terms(|_| 0.5), &c).unwrap(), Verdict::Divergent);
        assert_eq!(summability_verdict(&terms(|k| 1.0 / k as f64), &c).unwrap(), Verdict::Inconclusive);
        assert_eq!(summability_verdict(&terms(|_| 0.0), &c).unwrap(), Verdict::Summable);
        assert_eq!(summability_verdict(&terms(|k| 2f64.powi(k as i32)), &c).unwrap(), Verdict::Divergent);
        assert!(summability_verdict(&terms(|_| 0.0)[..5], &c).is_err());
    }

    #[test]
    fn partial_sums_accumulate() {
        let r = ConditionReport::new("x", terms(|k| k as f64), &VerdictConfig::default());
        assert!(r.partial_sums.windows(2).all(|w| w[1] >= w[0]));
        assert_eq!(*r.partial_sums.last().unwrap(), 78.0);
        assert_eq!(r.k_range(), Some((1, 12)));
    }

    #[test]
    fn flagged_tail_is_inconclusive() {
        let mut t = terms(|_| 0.0);
        t[11].flagged = true;
        assert_eq!(ConditionReport::new("x", t, &VerdictConfig::default()).verdict, Verdict::Inconclusive);
    }
}
