//! The two-dimensional conditions
//! sub1: 2^k·P(f_k(X) ≥ γ²) and
//! sub2: 2^{2k}·P(h²(X,Y) ≥ γ², f_k(X) < γ², f_k(Y) < γ²),
//! with γ = γ_{2^k} and f_k(x) = 2^k·E_Y(h²(x,Y) ∧ γ²).

use rayon::prelude::*;

use crate::conditions::report::{ConditionReport, Term, Verdict, VerdictConfig};
use crate::error::{Error, Result};
use crate::estimate::{Estimate, Welford};
use crate::model::kernel::check_arity;
use crate::model::{Distribution, Kernel, NormalizingSequence, SectionMoment};
use crate::sampling::{TailSampler, WeightedDraw};
use crate::seeds::{derive_seed, tag, task_rng, SimRng};
use crate::truncation::section_moment_estimate;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dim2Config {
    /// Draws for the sub1 probability.
    pub budget: usize,
    /// Panel size M per side for sub2 (M² pairs).
    pub panel: usize,
    /// Draws per point when f_k has no closed form.
    pub fk_budget: usize,
    pub sigmas: f64,
    pub seed: u64,
    pub verdict: VerdictConfig,
}

impl Default for Dim2Config {
    fn default() -> Self {
        Self { budget: 1_000_000, panel: 1000, fk_budget: 2000, sigmas: 2.0, seed: 0, verdict: VerdictConfig::default() }
    }
}

/// Whether f_k(x) < γ², with a third state when a Monte-Carlo f_k
/// straddles the threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Below {
    Yes,
    No,
    Straddle,
}

struct Level<'a> {
    kernel: &'a dyn Kernel,
    dist: &'a dyn Distribution,
    k: u32,
    gamma: f64,
    config: &'a Dim2Config,
}

impl Level<'_> {
    fn f_k(&self, x: f64, rng: &mut SimRng) -> Estimate {
        section_moment_estimate(self.kernel, self.dist, &[x], self.gamma, SectionMoment::Cap, self.config.fk_budget, rng)
            .scale((1u64 << self.k) as f64)
    }

    fn below(&self, x: f64, rng: &mut SimRng) -> Below {
        let f = self.f_k(x, rng);
        let g2 = self.gamma * self.gamma;
        if f.is_exact() {
            if f.value < g2 {
                Below::Yes
            } else {
                Below::No
            }
        } else if f.hi(self.config.sigmas) < g2 {
            Below::Yes
        } else if f.lo(self.config.sigmas) >= g2 {
            Below::No
        } else {
            Below::Straddle
        }
    }

    fn draw(&self, sampler: &Option<TailSampler<'_>>, rng: &mut SimRng) -> WeightedDraw {
        match sampler {
            Some(s) => s.draw_signed(rng),
            None => WeightedDraw { value: self.dist.sample(rng), weight: 1.0 },
        }
    }

    fn sub1(&self) -> Term {
        let sampler = TailSampler::new(self.dist, 1.0);
        let chunks = 64usize;
        let per = self.config.budget.div_ceil(chunks);
        let parts: Vec<(Welford, Welford, Welford)> = (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut rng = task_rng(self.config.seed, &[tag::DIM2, 1, self.k as u64, c as u64]);
                let mut fk_rng = task_rng(self.config.seed, &[tag::DIM2, 3, self.k as u64, c as u64]);
                let (mut lo, mut hi, mut w) = (Welford::new(), Welford::new(), Welford::new());
                for _ in 0..per {
                    let x = self.draw(&sampler, &mut rng);
                    let b = self.below(x.value, &mut fk_rng);
                    lo.push(if b == Below::No { x.weight } else { 0.0 });
                    hi.push(if b != Below::Yes { x.weight } else { 0.0 });
                    w.push(x.weight);
                }
                (lo, hi, w)
            })
            .collect();
        let (mut lo, mut hi, mut w) = (Welford::new(), Welford::new(), Welford::new());
        for (a, b, c) in &parts {
            lo.merge(a);
            hi.merge(b);
            w.merge(c);
        }
        // Self-normalized: divide by the mean weight, whose expectation is 1.
        let scale = (1u64 << self.k) as f64 / w.mean();
        let value = 0.5 * (lo.mean() + hi.mean()) * scale;
        Term {
            k: self.k,
            value,
            err: hi.std_err().max(lo.std_err()) * scale,
            lo: lo.mean() * scale,
            hi: hi.mean() * scale,
            flagged: hi.mean() - lo.mean() > lo.mean().max(f64::MIN_POSITIVE),
        }
    }

    fn sub2(&self) -> Term {
        let m = self.config.panel;
        let sampler = TailSampler::new(self.dist, 1.0);
        let mut rng = task_rng(self.config.seed, &[tag::DIM2, 2, self.k as u64]);
        let mut fk_rng = task_rng(self.config.seed, &[tag::DIM2, 4, self.k as u64]);
        let xs: Vec<WeightedDraw> = (0..m).map(|_| self.draw(&sampler, &mut rng)).collect();
        let ys: Vec<WeightedDraw> = (0..m).map(|_| self.draw(&sampler, &mut rng)).collect();
        // f_k is cached per panel point.
        let bx: Vec<Below> = xs.iter().map(|p| self.below(p.value, &mut fk_rng)).collect();
        let by: Vec<Below> = ys.iter().map(|p| self.below(p.value, &mut fk_rng)).collect();
        let g2 = self.gamma * self.gamma;
        let rows: Vec<(f64, f64, Vec<(f64, f64)>)> = xs
            .par_iter()
            .zip(&bx)
            .map(|(x, &bx)| {
                let mut row_lo = 0.0;
                let mut row_hi = 0.0;
                let mut cols = Vec::with_capacity(m);
                let mut point = [x.value, 0.0];
                for (y, &by) in ys.iter().zip(&by) {
                    point[1] = y.value;
                    let h = self.kernel.eval(&point);
                    let big = h * h >= g2;
                    let w = x.weight * y.weight;
                    let sure = big && bx == Below::Yes && by == Below::Yes;
                    let maybe = big && bx != Below::No && by != Below::No;
                    let (a, b) = (if sure { w } else { 0.0 }, if maybe { w } else { 0.0 });
                    row_lo += a;
                    row_hi += b;
                    cols.push((a, b));
                }
                (row_lo / m as f64, row_hi / m as f64, cols)
            })
            .collect();
        let rows_lo: Welford = rows.iter().map(|r| r.0).collect();
        let rows_hi: Welford = rows.iter().map(|r| r.1).collect();
        let mut col_lo = vec![0.0; m];
        let mut col_hi = vec![0.0; m];
        for r in &rows {
            for (j, (a, b)) in r.2.iter().enumerate() {
                col_lo[j] += a / m as f64;
                col_hi[j] += b / m as f64;
            }
        }
        let cols_lo: Welford = col_lo.into_iter().collect();
        let cols_hi: Welford = col_hi.into_iter().collect();
        // Leading-order variance of a two-sample U-statistic.
        let se = |r: &Welford, c: &Welford| (r.variance() / m as f64 + c.variance() / m as f64).sqrt();
        let mean_w = |v: &[WeightedDraw]| v.iter().map(|p| p.weight).sum::<f64>() / v.len() as f64;
        let scale = 4f64.powi(self.k as i32) / (mean_w(&xs) * mean_w(&ys));
        let (lo, hi) = (rows_lo.mean() * scale, rows_hi.mean() * scale);
        Term {
            k: self.k,
            value: 0.5 * (lo + hi),
            err: se(&rows_lo, &cols_lo).max(se(&rows_hi, &cols_hi)) * scale,
            lo,
            hi,
            flagged: hi - lo > lo.max(f64::MIN_POSITIVE),
        }
    }
}

/// (sub1, sub2) reports over `ks`.
pub fn dim2_terms(
    kernel: &dyn Kernel,
    dist: &dyn Distribution,
    seq: &dyn NormalizingSequence,
    ks: std::ops::RangeInclusive<u32>,
    config: &Dim2Config,
) -> Result<(ConditionReport, ConditionReport)> {
    check_arity(kernel, 2)?;
    if config.budget < 2 || config.panel < 2 {
        return Err(Error::InvalidArgument("budgets must be at least 2".into()));
    }
    if *ks.start() == 0 || *ks.end() > 30 {
        return Err(Error::InvalidArgument("k must lie in 1..=30".into()));
    }
    let mut sub1 = Vec::new();
    let mut sub2 = Vec::new();
    for k in ks {
        let gamma = seq.gamma(1u64 << k);
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::NonPositiveGamma { n: 1u64 << k, value: gamma });
        }
        let cfg = Dim2Config { seed: derive_seed(config.seed, &[tag::DIM2, k as u64]), ..*config };
        let level = Level { kernel, dist, k, gamma, config: &cfg };
        sub1.push(level.sub1());
        sub2.push(level.sub2());
    }
    Ok((ConditionReport::new("sub1", sub1, &config.verdict), ConditionReport::new("sub2", sub2, &config.verdict)))
}

/// The two-dimensional condition holds when both parts are summable and
/// fails as soon as either diverges.
pub fn dim2_verdict(sub1: &ConditionReport, sub2: &ConditionReport) -> Verdict {
    match (sub1.verdict, sub2.verdict) {
        (Verdict::Divergent, _) | (_, Verdict::Divergent) => Verdict::Divergent,
        (Verdict::Summable, Verdict::Summable) => Verdict::Summable,
        _ => Verdict::Inconclusive,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conditions::report::Verdict;
    use crate::model::{Builtin, Constant, FnNormalizer, Normalizer, Product};

    #[test]
    fn rademacher_terms_vanish() {
        let cfg = Dim2Config { budget: 2000, panel: 50, ..Default::default() };
        let (s1, s2) = dim2_terms(&Product::new(2), &Builtin::Rademacher, &Normalizer::power(1.0), 1..=8, &cfg).unwrap();
        assert!(s1.terms.iter().chain(&s2.terms).all(|t| t.value == 0.0));
        assert_eq!(s1.verdict, Verdict::Summable);
        assert_eq!(s2.verdict, Verdict::Summable);
    }

    #[test]
    fn boundary_counts_in_sub2() {
        // h ≡ γ_{2^k}: h² ≥ γ² holds with equality. f_k = 2^k γ² ≥ γ², so
        // the f_k conditions fail and sub1 is 2^k.
        let g = FnNormalizer::new("3", |_| 3.0);
        let h = Constant { arity: 2, value: 3.0 };
        let cfg = Dim2Config { budget: 100, panel: 10, ..Default::default() };
        let (s1, s2) = dim2_terms(&h, &Builtin::Uniform, &g, 1..=6, &cfg).unwrap();
        for t in &s1.terms {
            let expect = 2f64.powi(t.k as i32);
            assert!((t.value - expect).abs() <= 1e-12 * expect);
        }
        assert!(s2.terms.iter().all(|t| t.value == 0.0));
    }

    #[test]
    fn sub2_includes_equality_on_h() {
        // h = γ·1{|x| > 0.9, |y| > 0.9} on uniform[-1,1] at k = 3:
        // f_3(x) = 8·0.1·γ² < γ², and h² = γ² on the corner, so
        // sub2 = 64·P(|X| > 0.9)² = 0.64.
        let gamma = 2.0;
        let h = crate::model::FnKernel::new(2, "corner", move |x| if x[0].abs() > 0.9 && x[1].abs() > 0.9 { gamma } else { 0.0 });
        let cfg = Dim2Config { budget: 10, panel: 2000, ..Default::default() };
        let level = Level { kernel: &h, dist: &Builtin::Uniform, k: 3, gamma, config: &cfg };
        let t = level.sub2();
        assert!(!t.flagged);
        assert!((t.value - 0.64).abs() <= 3.0 * t.err, "{} ± {}", t.value, t.err);
    }

    #[test]
    fn arity_is_checked() {
        let cfg = Dim2Config::default();
        assert!(dim2_terms(&Product::new(3), &Builtin::Uniform, &Normalizer::power(1.0), 1..=6, &cfg).is_err());
    }
}
