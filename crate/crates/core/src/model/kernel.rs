//! Kernels h: R^d → R.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::distribution::Distribution;

/// Which truncated section moment to compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SectionMoment {
    /// E(h^2 ∧ cap^2)
    Cap,
    /// E(h^2 · 1{h^2 ≤ cap^2})
    Indicator,
}

pub trait Kernel: Send + Sync + fmt::Debug {
    fn arity(&self) -> usize;

    fn eval(&self, x: &[f64]) -> f64;

    fn is_symmetric(&self) -> bool {
        true
    }

    fn name(&self) -> String;

    /// A bound on sup |h|, if known.
    fn sup_bound(&self) -> Option<f64> {
        None
    }

    /// Closed form for the expectation of `h^2` (in the `which` sense) when
    /// the coordinates in `fixed` are frozen and the remaining
    /// `arity - fixed.len()` coordinates are i.i.d. from `dist`. Kernels
    /// are symmetric, so only the values matter, not their positions.
    fn section_moment(&self, _fixed: &[f64], _dist: &dyn Distribution, _cap: f64, _which: SectionMoment) -> Option<f64> {
        None
    }

    /// max h^2 over increasing index tuples of `xs`, if cheaply computable.
    fn max_square_increasing(&self, _xs: &[f64]) -> Option<f64> {
        None
    }

    /// max h^2 over the cube formed by the arrays `xs[r]`, if cheaply
    /// computable.
    fn max_square_cube(&self, _xs: &[Vec<f64>]) -> Option<f64> {
        None
    }
}

/// h(x) = scale · x_1 ⋯ x_d.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Product {
    pub arity: usize,
    pub scale: f64,
}

impl Product {
    pub fn new(arity: usize) -> Self {
        Self { arity, scale: 1.0 }
    }

    pub fn scaled(arity: usize, scale: f64) -> Self {
        Self { arity, scale }
    }
}

impl Kernel for Product {
    fn arity(&self) -> usize {
        self.arity
    }

    fn eval(&self, x: &[f64]) -> f64 {
        self.scale * x.iter().product::<f64>()
    }

    fn name(&self) -> String {
        if self.scale == 1.0 {
            "product".into()
        } else {
            format!("product:{}", self.scale)
        }
    }

    fn section_moment(&self, fixed: &[f64], dist: &dyn Distribution, cap: f64, which: SectionMoment) -> Option<f64> {
        match self.arity.checked_sub(fixed.len())? {
            0 => {
                let h2 = self.eval(fixed).powi(2);
                Some(match which {
                    SectionMoment::Cap => h2.min(cap * cap),
                    SectionMoment::Indicator if h2 <= cap * cap => h2,
                    SectionMoment::Indicator => 0.0,
                })
            }
            1 => {
                let p = self.scale * fixed.iter().product::<f64>();
                if p == 0.0 {
                    return Some(0.0);
                }
                let t = cap / p.abs();
                let tsm = dist.truncated_second_moment(t)?;
                Some(match which {
                    SectionMoment::Cap => p * p * tsm,
                    SectionMoment::Indicator => {
                        let tail = dist.tail(t)?;
                        (p * p * (tsm - t * t * tail)).max(0.0)
                    }
                })
            }
            _ => None,
        }
    }

    fn max_square_increasing(&self, xs: &[f64]) -> Option<f64> {
        if xs.len() < self.arity {
            return Some(0.0);
        }
        let mut abs: Vec<f64> = xs.iter().map(|x| x.abs()).collect();
        abs.sort_by(|a, b| b.total_cmp(a));
        Some(self.scale.powi(2) * abs[..self.arity].iter().map(|v| v * v).product::<f64>())
    }

    fn max_square_cube(&self, xs: &[Vec<f64>]) -> Option<f64> {
        let mut out = self.scale * self.scale;
        for arr in xs {
            let m = arr.iter().fold(f64::NEG_INFINITY, |m, x| m.max(x.abs()));
            if m == f64::NEG_INFINITY {
                return Some(0.0);
            }
            out *= m * m;
        }
        Some(out)
    }
}

/// h(x) = Σ x_r + ∏ x_r.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SumProduct {
    pub arity: usize,
}

impl Kernel for SumProduct {
    fn arity(&self) -> usize {
        self.arity
    }

    fn eval(&self, x: &[f64]) -> f64 {
        x.iter().sum::<f64>() + x.iter().product::<f64>()
    }

    fn name(&self) -> String {
        "sum-product".into()
    }
}

/// h(x) = 1{|x_1 ⋯ x_d| > threshold}.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndicatorThreshold {
    pub arity: usize,
    pub threshold: f64,
}

impl Kernel for IndicatorThreshold {
    fn arity(&self) -> usize {
        self.arity
    }

    fn eval(&self, x: &[f64]) -> f64 {
        f64::from(u8::from(x.iter().product::<f64>().abs() > self.threshold))
    }

    fn name(&self) -> String {
        format!("indicator-threshold:{}", self.threshold)
    }

    fn sup_bound(&self) -> Option<f64> {
        Some(1.0)
    }

    fn section_moment(&self, fixed: &[f64], dist: &dyn Distribution, cap: f64, which: SectionMoment) -> Option<f64> {
        let free = self.arity.checked_sub(fixed.len())?;
        let p = fixed.iter().product::<f64>().abs();
        let hit = match free {
            0 => f64::from(u8::from(p > self.threshold)),
            1 if p == 0.0 => 0.0,
            1 => dist.tail(self.threshold / p)?,
            _ => return None,
        };
        Some(match which {
            SectionMoment::Cap => hit * cap.min(1.0).powi(2),
            SectionMoment::Indicator if cap >= 1.0 => hit,
            SectionMoment::Indicator => 0.0,
        })
    }
}

/// h ≡ value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Constant {
    pub arity: usize,
    pub value: f64,
}

impl Kernel for Constant {
    fn arity(&self) -> usize {
        self.arity
    }

    fn eval(&self, _x: &[f64]) -> f64 {
        self.value
    }

    fn name(&self) -> String {
        format!("const:{}", self.value)
    }

    fn sup_bound(&self) -> Option<f64> {
        Some(self.value.abs())
    }

    fn section_moment(&self, _fixed: &[f64], _dist: &dyn Distribution, cap: f64, which: SectionMoment) -> Option<f64> {
        let h2 = self.value * self.value;
        Some(match which {
            SectionMoment::Cap => h2.min(cap * cap),
            SectionMoment::Indicator if h2 <= cap * cap => h2,
            SectionMoment::Indicator => 0.0,
        })
    }

    fn max_square_increasing(&self, xs: &[f64]) -> Option<f64> {
        Some(if xs.len() >= self.arity { self.value * self.value } else { 0.0 })
    }

    fn max_square_cube(&self, xs: &[Vec<f64>]) -> Option<f64> {
        Some(if xs.iter().all(|a| !a.is_empty()) { self.value * self.value } else { 0.0 })
    }
}

/// A kernel from a closure, for programmatic use.
#[derive(Clone)]
pub struct FnKernel {
    arity: usize,
    name: String,
    symmetric: bool,
    f: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
}

impl FnKernel {
    pub fn new(arity: usize, name: impl Into<String>, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self { arity, name: name.into(), symmetric: true, f: Arc::new(f) }
    }

    pub fn asymmetric(mut self) -> Self {
        self.symmetric = false;
        self
    }
}

impl fmt::Debug for FnKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnKernel").field("arity", &self.arity).field("name", &self.name).finish()
    }
}

impl Kernel for FnKernel {
    fn arity(&self) -> usize {
        self.arity
    }

    fn eval(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }

    fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    fn name(&self) -> String {
        self.name.clone()
    }
}

/// Parses `product`, `product:<scale>`, `sum-product`,
/// `indicator-threshold:<t>`, `const:<v>`, `zero`.
pub fn parse_kernel(spec: &str, arity: usize) -> Result<Box<dyn Kernel>> {
    if arity == 0 {
        return Err(Error::InvalidArgument("kernel arity must be at least 1".into()));
    }
    let spec = spec.trim();
    let (head, arg) = match spec.split_once(':') {
        Some((h, a)) => (h, Some(a)),
        None => (spec, None),
    };
    let unknown = || Error::UnknownBuiltin { kind: "kernel", name: spec.to_string() };
    let num = |a: &str| a.parse::<f64>().map_err(|_| unknown());
    Ok(match (head.to_ascii_lowercase().as_str(), arg) {
        ("product", None) => Box::new(Product::new(arity)),
        ("product", Some(a)) => Box::new(Product::scaled(arity, num(a)?)),
        ("sum-product", None) => Box::new(SumProduct { arity }),
        ("indicator-threshold", Some(a)) => Box::new(IndicatorThreshold { arity, threshold: num(a)? }),
        ("const", Some(a)) => Box::new(Constant { arity, value: num(a)? }),
        ("zero", None) => Box::new(Constant { arity, value: 0.0 }),
        _ => return Err(unknown()),
    })
}

/// Checks a kernel's arity against an expected value.
pub fn check_arity(kernel: &dyn Kernel, expected: usize) -> Result<()> {
    if kernel.arity() != expected {
        return Err(Error::ArityMismatch { expected, found: kernel.arity() });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::distribution::Builtin;
    use crate::seeds::task_rng;
    use rand::seq::SliceRandom;

    #[test]
    fn builtins_are_permutation_invariant() {
        let kernels: Vec<Box<dyn Kernel>> = ["product", "product:2.5", "sum-product", "indicator-threshold:0.3", "const:1"]
            .iter()
            .map(|s| parse_kernel(s, 3).unwrap())
            .collect();
        let mut rng = task_rng(1, &[]);
        let dist = Builtin::Pareto { p: 1.5 };
        for k in &kernels {
            assert!(k.is_symmetric());
            for _ in 0..200 {
                let x: Vec<f64> = (0..3).map(|_| dist.sample(&mut rng)).collect();
                let mut y = x.clone();
                y.shuffle(&mut rng);
                assert!((k.eval(&x) - k.eval(&y)).abs() <= 1e-12 * k.eval(&x).abs().max(1.0));
            }
        }
    }

    #[test]
    fn product_section_moment_matches_quadrature() {
        // E((3Y)^2 ∧ 1) for Y uniform on [-1,1] is ∫_0^1 (9y^2 ∧ 1) dy.
        let k = Product::new(2);
        let got = k.section_moment(&[3.0], &Builtin::Uniform, 1.0, SectionMoment::Cap).unwrap();
        let q = quadrature::integrate(|y| (9.0 * y * y).min(1.0), 0.0, 1.0 / 3.0, 1e-13).integral
            + quadrature::integrate(|y| (9.0 * y * y).min(1.0), 1.0 / 3.0, 1.0, 1e-13).integral;
        assert!((got - q).abs() < 1e-10, "{got} vs {q}");

        let ind = k.section_moment(&[3.0], &Builtin::Uniform, 1.0, SectionMoment::Indicator).unwrap();
        let qi = quadrature::integrate(|y| 9.0 * y * y, 0.0, 1.0 / 3.0, 1e-13).integral;
        assert!((ind - qi).abs() < 1e-10);
        assert_eq!(k.section_moment(&[0.0], &Builtin::Uniform, 1.0, SectionMoment::Cap), Some(0.0));
        assert_eq!(k.section_moment(&[], &Builtin::Uniform, 1.0, SectionMoment::Cap), None);
    }

    #[test]
    fn max_square_shortcuts() {
        let k = Product::new(2);
        assert_eq!(k.max_square_increasing(&[1.0, -3.0, 2.0]), Some(36.0));
        assert_eq!(k.max_square_cube(&[vec![1.0, -3.0], vec![0.5, 2.0]]), Some(36.0));
        assert_eq!(k.max_square_increasing(&[5.0]), Some(0.0));
    }

    #[test]
    fn parse_errors() {
        assert!(parse_kernel("bogus", 2).is_err());
        assert!(parse_kernel("product", 0).is_err());
        assert!(check_arity(&Product::new(2), 3).is_err());
    }
}
