//! Lower bounds for the probability that some index tuple hits a set whose
//! sections are all small.

use rayon::prelude::*;
use serde::Serialize;

use crate::conditions::Region;
use crate::error::{Error, Result};
use crate::estimate::{proportion, Estimate};
use crate::indexing::{binomial, visit_cube, visit_increasing, IndexSubset};
use crate::inequalities::Sampling;
use crate::model::Distribution;
use crate::seeds::{tag, task_rng, SimRng};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SectionLemmaConfig {
    pub replicates: usize,
    pub outer_draws: usize,
    /// Draws per section measure when the region has no closed form.
    pub section_budget: usize,
    /// Draws for μ_d(A) when the region has no closed form.
    pub measure_budget: usize,
    pub seed: u64,
}

impl Default for SectionLemmaConfig {
    fn default() -> Self {
        Self { replicates: 10_000, outer_draws: 256, section_budget: 4096, measure_budget: 100_000, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SectionLemmaCheck {
    pub d: usize,
    pub n: usize,
    pub mode: Sampling,
    /// max over draws and |I| = l of n^{d−l}·μ_{d−l}(A^{I,x_I}), upper 3σ.
    pub worst_section: f64,
    pub measure: Estimate,
    /// 2^{−d−2}·min(n^d μ, 1), times d^{−d} when coupled.
    pub bound: f64,
    pub probability: Estimate,
    pub margin: Estimate,
}

impl SectionLemmaCheck {
    pub fn hypothesis_holds(&self) -> bool {
        self.worst_section <= 1.0 + 1e-12
    }

    /// The bound is only asserted under the hypothesis.
    pub fn violated(&self, sigmas: f64) -> bool {
        self.hypothesis_holds() && self.margin.hi(sigmas) < 0.0
    }
}

fn section_measure(region: &dyn Region, dist: &dyn Distribution, fixed: IndexSubset, x: &[f64], budget: usize, rng: &mut SimRng) -> Estimate {
    let vals: Vec<f64> = fixed.members().map(|r| x[r]).collect();
    if let Some(m) = region.section_measure(fixed, &vals, dist) {
        return Estimate::exact(m);
    }
    let mut z = x.to_vec();
    let mut hits = 0;
    for _ in 0..budget {
        for r in fixed.complement().members() {
            z[r] = dist.sample(rng);
        }
        hits += u64::from(region.contains(&z));
    }
    proportion(hits, budget as u64)
}

pub fn verify_section_lemma(region: &dyn Region, dist: &dyn Distribution, n: usize, mode: Sampling, config: &SectionLemmaConfig) -> Result<SectionLemmaCheck> {
    let d = region.dim();
    if n == 0 || config.replicates < 2 {
        return Err(Error::InvalidArgument("need n ≥ 1 and at least 2 replicates".into()));
    }
    if mode == Sampling::Coupled && n < d {
        return Err(Error::InvalidArgument(format!("the coupled bound needs n ≥ d, got n = {n}, d = {d}")));
    }
    let nf = n as f64;

    let mut rng = task_rng(config.seed, &[tag::SECTION, 0]);
    let mut worst: f64 = 0.0;
    let mut x = vec![0.0; d];
    for _ in 0..config.outer_draws {
        for v in x.iter_mut() {
            *v = dist.sample(&mut rng);
        }
        for fixed in IndexSubset::proper_nonempty(d) {
            let mu = section_measure(region, dist, fixed, &x, config.section_budget, &mut rng);
            worst = worst.max(nf.powi((d - fixed.len()) as i32) * mu.hi(3.0));
        }
    }

    let measure = match region.measure(dist) {
        Some(m) => Estimate::exact(m),
        None => {
            let mut hits = 0;
            for _ in 0..config.measure_budget {
                for v in x.iter_mut() {
                    *v = dist.sample(&mut rng);
                }
                hits += u64::from(region.contains(&x));
            }
            proportion(hits, config.measure_budget as u64)
        }
    };

    let chunks = 64usize;
    let per = config.replicates.div_ceil(chunks);
    let hits: u64 = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = task_rng(config.seed, &[tag::SECTION, 1, c as u64]);
            let count = per.min(config.replicates.saturating_sub(c * per));
            let mut point = vec![0.0; d];
            let mut hits = 0u64;
            for _ in 0..count {
                let hit = match mode {
                    Sampling::Decoupled => {
                        let arrays: Vec<f64> = (0..n * d).map(|_| dist.sample(&mut rng)).collect();
                        !visit_cube(n, d, |i| {
                            for (r, &j) in i.iter().enumerate() {
                                point[r] = arrays[r * n + j - 1];
                            }
                            !region.contains(&point)
                        })
                    }
                    Sampling::Coupled => {
                        let xs: Vec<f64> = (0..n).map(|_| dist.sample(&mut rng)).collect();
                        !visit_increasing(n, d, |i| {
                            for (r, &j) in i.iter().enumerate() {
                                point[r] = xs[j - 1];
                            }
                            !region.contains(&point)
                        })
                    }
                };
                hits += u64::from(hit);
            }
            hits
        })
        .collect::<Vec<_>>()
        .into_iter()
        .sum();
    let probability = proportion(hits, config.replicates as u64);

    let mut factor = 2f64.powi(-(d as i32) - 2);
    if mode == Sampling::Coupled {
        factor *= (d as f64).powi(-(d as i32));
    }
    let scale = nf.powi(d as i32);
    let bound = factor * (scale * measure.value).min(1.0);
    let bound_err = if scale * measure.value < 1.0 { factor * scale * measure.std_err } else { 0.0 };
    let margin = Estimate::new(probability.value - bound, probability.std_err.hypot(bound_err));
    Ok(SectionLemmaCheck { d, n, mode, worst_section: worst, measure, bound, probability, margin })
}

/// Exact hit probability of [0, width)^d by uniform[0,1] samples:
/// every array has a value below `width` (decoupled), or at least d of the
/// n values do (coupled).
pub fn box_hit_exact(n: usize, d: usize, width: f64, mode: Sampling) -> f64 {
    let w = width.clamp(0.0, 1.0);
    match mode {
        Sampling::Decoupled => (-(n as f64 * (-w).ln_1p()).exp_m1()).powi(d as i32),
        Sampling::Coupled => {
            let below: f64 = (0..d.min(n + 1)).map(|k| binomial(n as u64, k as u64) as f64 * w.powi(k as i32) * (1.0 - w).powi((n - k) as i32)).sum();
            (1.0 - below).max(0.0)
        }
    }
}
