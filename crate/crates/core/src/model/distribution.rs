//! Sample laws.
//!
//! A [`Distribution`] is a seeded sampler over the reals with optional
//! closed forms. The closed forms are what let the condition evaluators run
//! exactly; anything without them falls back to Monte-Carlo.

use std::fmt;

use rand::Rng;

use crate::error::{Error, Result};
use crate::seeds::{task_rng, SimRng};

/// How the sign of a sample relates to its absolute value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignLaw {
    /// X and -X have the same law; the sign is an independent fair coin.
    Symmetric,
    NonNegative,
    /// No usable structure; samplers that need the sign must call `sample`.
    Other,
}

pub trait Distribution: Send + Sync + fmt::Debug {
    fn name(&self) -> String;

    fn sample(&self, rng: &mut SimRng) -> f64;

    /// `count` draws from the stream keyed by `seed`.
    fn sample_vec(&self, seed: u64, count: usize) -> Vec<f64> {
        let mut rng = task_rng(seed, &[]);
        (0..count).map(|_| self.sample(&mut rng)).collect()
    }

    /// E(X^2 ∧ t^2).
    fn truncated_second_moment(&self, _t: f64) -> Option<f64> {
        None
    }

    /// P(|X| > t).
    fn tail(&self, _t: f64) -> Option<f64> {
        None
    }

    /// inf{x ≥ 0 : P(|X| > x) ≤ u} for u in (0, 1]. Feeding a uniform u
    /// produces a draw of |X|.
    fn abs_quantile(&self, _u: f64) -> Option<f64> {
        None
    }

    /// E X^2, `Some(f64::INFINITY)` when known to be infinite.
    fn second_moment(&self) -> Option<f64> {
        None
    }

    fn sign_law(&self) -> SignLaw {
        SignLaw::Other
    }

    /// P(lo ≤ X < hi).
    fn interval_probability(&self, _lo: f64, _hi: f64) -> Option<f64> {
        None
    }

    /// Closed-form truncation constant c_n, when one is known.
    fn truncation_constant(&self, _n: u64) -> Option<f64> {
        None
    }
}

/// The built-in laws.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Builtin {
    Rademacher,
    /// Uniform on [-1, 1].
    Uniform,
    /// Uniform on [0, 1].
    Uniform01,
    /// Symmetric with P(|X| > t) = t^{-p} for t ≥ 1.
    Pareto { p: f64 },
    /// X ≡ 0.
    PointMass0,
}

impl Builtin {
    pub fn pareto(p: f64) -> Result<Self> {
        if !(p.is_finite() && p > 0.0) {
            return Err(Error::InvalidArgument(format!("pareto index must be positive, got {p}")));
        }
        Ok(Builtin::Pareto { p })
    }

    /// Parses `rademacher`, `uniform`, `uniform01`, `pareto:<p>`, `zero`.
    pub fn parse(spec: &str) -> Result<Self> {
        let spec = spec.trim();
        let (head, arg) = match spec.split_once(':') {
            Some((h, a)) => (h, Some(a)),
            None => (spec, None),
        };
        let unknown = || Error::UnknownBuiltin { kind: "distribution", name: spec.to_string() };
        match (head.to_ascii_lowercase().as_str(), arg) {
            ("rademacher", None) => Ok(Builtin::Rademacher),
            ("uniform", None) => Ok(Builtin::Uniform),
            ("uniform01", None) => Ok(Builtin::Uniform01),
            ("zero" | "pointmass0" | "point-mass-0", None) => Ok(Builtin::PointMass0),
            ("pareto", Some(p)) => {
                let p: f64 = p.parse().map_err(|_| unknown())?;
                Builtin::pareto(p)
            }
            _ => Err(unknown()),
        }
    }

    fn abs_sample(&self, rng: &mut SimRng) -> f64 {
        match *self {
            Builtin::Rademacher => 1.0,
            Builtin::Uniform | Builtin::Uniform01 => rng.gen::<f64>(),
            Builtin::Pareto { p } => {
                // 1 - gen() lies in (0, 1], so the power is finite.
                let u = 1.0 - rng.gen::<f64>();
                u.powf(-1.0 / p)
            }
            Builtin::PointMass0 => 0.0,
        }
    }
}

impl fmt::Display for Builtin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Builtin::Rademacher => write!(f, "rademacher"),
            Builtin::Uniform => write!(f, "uniform"),
            Builtin::Uniform01 => write!(f, "uniform01"),
            Builtin::Pareto { p } => write!(f, "pareto:{p}"),
            Builtin::PointMass0 => write!(f, "zero"),
        }
    }
}

impl Distribution for Builtin {
    fn name(&self) -> String {
        self.to_string()
    }

    fn sample(&self, rng: &mut SimRng) -> f64 {
        let v = self.abs_sample(rng);
        match self.sign_law() {
            SignLaw::Symmetric if rng.gen::<bool>() => -v,
            _ => v,
        }
    }

    fn truncated_second_moment(&self, t: f64) -> Option<f64> {
        let t = t.max(0.0);
        Some(match *self {
            Builtin::Rademacher => (t * t).min(1.0),
            Builtin::Uniform | Builtin::Uniform01 => {
                if t <= 1.0 {
                    t * t - 2.0 / 3.0 * t * t * t
                } else {
                    1.0 / 3.0
                }
            }
            Builtin::Pareto { p } => {
                if t <= 1.0 {
                    t * t
                } else if (p - 2.0).abs() < 1e-12 {
                    1.0 + 2.0 * t.ln()
                } else {
                    1.0 + 2.0 * (t.powf(2.0 - p) - 1.0) / (2.0 - p)
                }
            }
            Builtin::PointMass0 => 0.0,
        })
    }

    fn tail(&self, t: f64) -> Option<f64> {
        Some(match *self {
            _ if t < 0.0 => {
                if *self == Builtin::PointMass0 {
                    0.0
                } else {
                    1.0
                }
            }
            Builtin::Rademacher => {
                if t < 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Builtin::Uniform | Builtin::Uniform01 => (1.0 - t).max(0.0),
            Builtin::Pareto { p } => {
                if t < 1.0 {
                    1.0
                } else {
                    t.powf(-p)
                }
            }
            Builtin::PointMass0 => 0.0,
        })
    }

    fn abs_quantile(&self, u: f64) -> Option<f64> {
        let u = u.clamp(0.0, 1.0);
        Some(match *self {
            Builtin::Rademacher => {
                if u < 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Builtin::Uniform | Builtin::Uniform01 => 1.0 - u,
            Builtin::Pareto { p } => {
                if u <= 0.0 {
                    f64::INFINITY
                } else {
                    u.powf(-1.0 / p)
                }
            }
            Builtin::PointMass0 => 0.0,
        })
    }

    fn second_moment(&self) -> Option<f64> {
        Some(match *self {
            Builtin::Rademacher => 1.0,
            Builtin::Uniform | Builtin::Uniform01 => 1.0 / 3.0,
            Builtin::Pareto { p } if p > 2.0 => p / (p - 2.0),
            Builtin::Pareto { .. } => f64::INFINITY,
            Builtin::PointMass0 => 0.0,
        })
    }

    fn sign_law(&self) -> SignLaw {
        match self {
            Builtin::Rademacher | Builtin::Uniform | Builtin::Pareto { .. } => SignLaw::Symmetric,
            Builtin::Uniform01 | Builtin::PointMass0 => SignLaw::NonNegative,
        }
    }

    fn interval_probability(&self, lo: f64, hi: f64) -> Option<f64> {
        if hi <= lo {
            return Some(0.0);
        }
        let atom = |v: f64, lo: f64, hi: f64| f64::from(u8::from(lo <= v && v < hi));
        let overlap = |a: f64, b: f64| (hi.min(b) - lo.max(a)).max(0.0);
        Some(match *self {
            Builtin::Rademacher => 0.5 * (atom(-1.0, lo, hi) + atom(1.0, lo, hi)),
            Builtin::Uniform => overlap(-1.0, 1.0) / 2.0,
            Builtin::Uniform01 => overlap(0.0, 1.0),
            Builtin::Pareto { p } => {
                // P(X ≥ t) for t ≥ 1 is t^{-p}/2 on each side.
                let upper = |t: f64| if t <= 1.0 { 0.5 } else { 0.5 * t.powf(-p) };
                let pos = |a: f64, b: f64| upper(a.max(1.0)) - upper(b.max(1.0));
                let right = if hi > 1.0 { pos(lo.max(1.0), hi) } else { 0.0 };
                let left = if lo < -1.0 { pos((-hi).max(1.0), -lo) } else { 0.0 };
                right.max(0.0) + left.max(0.0)
            }
            Builtin::PointMass0 => atom(0.0, lo, hi),
        })
    }

    fn truncation_constant(&self, n: u64) -> Option<f64> {
        match self {
            Builtin::Rademacher => Some((n as f64).sqrt()),
            Builtin::PointMass0 => Some(0.0),
            _ => None,
        }
    }
}

/// `count` i.i.d. d-vectors with independent coordinates drawn from `dist`.
pub fn product_measure_sample(dist: &dyn Distribution, d: usize, seed: u64, count: usize) -> Result<Vec<Vec<f64>>> {
    if d == 0 {
        return Err(Error::InvalidArgument("arity must be at least 1".into()));
    }
    let mut rng = task_rng(seed, &[]);
    Ok((0..count).map(|_| (0..d).map(|_| dist.sample(&mut rng)).collect()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimate::Welford;

    fn builtins() -> Vec<Builtin> {
        vec![
            Builtin::Rademacher,
            Builtin::Uniform,
            Builtin::Uniform01,
            Builtin::Pareto { p: 1.0 },
            Builtin::Pareto { p: 2.0 },
            Builtin::Pareto { p: 3.5 },
            Builtin::PointMass0,
        ]
    }

    #[test]
    fn parse_round_trips() {
        for b in builtins() {
            assert_eq!(Builtin::parse(&b.to_string()).unwrap(), b);
        }
        assert!(Builtin::parse("cauchy").is_err());
        assert!(Builtin::parse("pareto:-1").is_err());
    }

    #[test]
    fn sampler_is_deterministic() {
        let d = Builtin::Pareto { p: 1.5 };
        assert_eq!(d.sample_vec(3, 50), d.sample_vec(3, 50));
        assert_ne!(d.sample_vec(3, 50), d.sample_vec(4, 50));
    }

    #[test]
    fn closed_forms_match_monte_carlo() {
        for b in builtins() {
            let xs = b.sample_vec(11, 100_000);
            for &t in &[0.3, 0.9, 1.5, 4.0] {
                let tsm: Welford = xs.iter().map(|x| (x * x).min(t * t)).collect();
                let tail: Welford = xs.iter().map(|x| f64::from(u8::from(x.abs() > t))).collect();
                let exact_tsm = b.truncated_second_moment(t).unwrap();
                let exact_tail = b.tail(t).unwrap();
                assert!((tsm.mean() - exact_tsm).abs() <= 3.0 * tsm.std_err() + 1e-12, "{b} tsm t={t}");
                assert!((tail.mean() - exact_tail).abs() <= 3.0 * tail.std_err() + 1e-12, "{b} tail t={t}");
            }
        }
    }

    #[test]
    fn truncated_moment_is_monotone_and_bounded() {
        for b in builtins() {
            let mut prev = 0.0;
            for i in 0..400 {
                let t = i as f64 * 0.05;
                let v = b.truncated_second_moment(t).unwrap();
                assert!(v + 1e-15 >= prev, "{b}");
                assert!(v <= b.second_moment().unwrap() + 1e-12);
                prev = v;
            }
        }
    }

    #[test]
    fn interval_probability_matches_monte_carlo() {
        for b in builtins() {
            let xs = b.sample_vec(21, 100_000);
            for &(lo, hi) in &[(-0.5, 0.25), (0.0, 1.0), (1.0, 3.0), (-4.0, -1.5), (-10.0, 10.0)] {
                let w: Welford = xs.iter().map(|&x| f64::from(u8::from(lo <= x && x < hi))).collect();
                let exact = b.interval_probability(lo, hi).unwrap();
                assert!((w.mean() - exact).abs() <= 3.0 * w.std_err() + 1e-12, "{b} [{lo},{hi})");
            }
        }
    }

    #[test]
    fn quantile_inverts_tail() {
        for b in builtins() {
            for &u in &[0.01, 0.2, 0.5, 0.93] {
                let x = b.abs_quantile(u).unwrap();
                assert!(b.tail(x).unwrap() <= u + 1e-12, "{b} u={u}");
            }
        }
    }

    #[test]
    fn product_sample_shape_and_independence() {
        let rows = product_measure_sample(&Builtin::Rademacher, 3, 5, 100_000).unwrap();
        assert_eq!(rows.len(), 100_000);
        assert!(rows.iter().all(|r| r.len() == 3));
        for c in 0..3 {
            let m: Welford = rows.iter().map(|r| r[c]).collect();
            assert!(m.mean().abs() <= 3.0 * m.std_err());
        }
        let cov: Welford = rows.iter().map(|r| r[0] * r[1]).collect();
        assert!(cov.mean().abs() <= 3.0 * cov.std_err());

        let single = product_measure_sample(&Builtin::Uniform, 1, 9, 10).unwrap();
        let mut rng = task_rng(9, &[]);
        let direct: Vec<f64> = (0..10).map(|_| Builtin::Uniform.sample(&mut rng)).collect();
        assert_eq!(single.into_iter().flatten().collect::<Vec<_>>(), direct);
        assert!(product_measure_sample(&Builtin::Uniform, 0, 9, 10).is_err());
    }
}
