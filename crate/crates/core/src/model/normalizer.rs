//! Normalizing sequences n ↦ γ_n.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

pub trait NormalizingSequence: Send + Sync + fmt::Debug {
    fn gamma(&self, n: u64) -> f64;

    fn describe(&self) -> String;

    /// Claimed constant C in γ_{2n} ≤ C·γ_n.
    fn claimed_doubling_constant(&self) -> Option<f64> {
        None
    }

    /// Claimed constant C in the dyadic tail-sum condition.
    fn claimed_tail_constant(&self) -> Option<f64> {
        None
    }
}

/// Built-in sequences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Normalizer {
    /// γ_n = coef · n^exponent
    Power { coef: f64, exponent: f64 },
    /// γ_n = value
    Constant { value: f64 },
}

impl Normalizer {
    pub fn power(exponent: f64) -> Self {
        Normalizer::Power { coef: 1.0, exponent }
    }

    /// Parses `poly:<e>` or `poly:<e>:<coef>` (γ_n = coef·n^e) and
    /// `const:<v>`. The exponent may be written as a ratio such as `2/1.2`.
    pub fn parse(spec: &str) -> Result<Self> {
        let spec = spec.trim();
        let unknown = || Error::UnknownBuiltin { kind: "normalizer", name: spec.to_string() };
        let num = |s: &str| -> Result<f64> {
            let v = match s.split_once('/') {
                Some((a, b)) => a.trim().parse::<f64>().ok().zip(b.trim().parse::<f64>().ok()).map(|(a, b)| a / b),
                None => s.trim().parse::<f64>().ok(),
            };
            v.filter(|v| v.is_finite()).ok_or_else(unknown)
        };
        let parts: Vec<&str> = spec.split(':').collect();
        match parts.as_slice() {
            ["poly", e] => Ok(Normalizer::Power { coef: 1.0, exponent: num(e)? }),
            ["poly", e, c] => Ok(Normalizer::Power { coef: num(c)?, exponent: num(e)? }),
            ["const", v] => Ok(Normalizer::Constant { value: num(v)? }),
            _ => Err(unknown()),
        }
    }

    /// The same sequence multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        match *self {
            Normalizer::Power { coef, exponent } => Normalizer::Power { coef: coef * factor, exponent },
            Normalizer::Constant { value } => Normalizer::Constant { value: value * factor },
        }
    }
}

impl NormalizingSequence for Normalizer {
    fn gamma(&self, n: u64) -> f64 {
        match *self {
            Normalizer::Power { coef, exponent } => coef * (n as f64).powf(exponent),
            Normalizer::Constant { value } => value,
        }
    }

    fn describe(&self) -> String {
        match *self {
            Normalizer::Power { coef, exponent } if coef == 1.0 => format!("poly:{exponent}"),
            Normalizer::Power { coef, exponent } => format!("poly:{exponent}:{coef}"),
            Normalizer::Constant { value } => format!("const:{value}"),
        }
    }

    fn claimed_doubling_constant(&self) -> Option<f64> {
        match *self {
            Normalizer::Power { exponent, .. } => Some(2f64.powf(exponent).max(1.0)),
            Normalizer::Constant { .. } => Some(1.0),
        }
    }
}

/// A sequence from a closure.
#[derive(Clone)]
pub struct FnNormalizer {
    name: String,
    f: Arc<dyn Fn(u64) -> f64 + Send + Sync>,
}

impl FnNormalizer {
    pub fn new(name: impl Into<String>, f: impl Fn(u64) -> f64 + Send + Sync + 'static) -> Self {
        Self { name: name.into(), f: Arc::new(f) }
    }
}

impl fmt::Debug for FnNormalizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnNormalizer").field("name", &self.name).finish()
    }
}

impl NormalizingSequence for FnNormalizer {
    fn gamma(&self, n: u64) -> f64 {
        (self.f)(n)
    }

    fn describe(&self) -> String {
        self.name.clone()
    }
}
