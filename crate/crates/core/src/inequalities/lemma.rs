//! Second-moment and Paley-Zygmund bounds for sums of [0,1]-valued
//! functions over decoupled (cube) and coupled (increasing) index sets.
//!
//! Instances are separable rectangle families on uniform[0,1] samples:
//! f_i(x) = ∏_r g_{i_r,r}(x_r) with g_{j,r} = h_{j,r}·1{lo ≤ x < lo + w}.
//! Separability keeps the sums and means computable in O(n·d) per sample.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimate::{proportion, Estimate, Welford};
use crate::indexing::{binomial, unrank_increasing, visit_increasing, IndexSubset};
use crate::seeds::{tag, task_rng, SimRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Sampling {
    /// d independent arrays, indices over C_n.
    Decoupled,
    /// One array, indices over I_n.
    Coupled,
}

impl std::fmt::Display for Sampling {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Sampling::Decoupled => "decoupled",
            Sampling::Coupled => "coupled",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RectangleFamily {
    d: usize,
    n: usize,
    lo: Vec<f64>,
    width: Vec<f64>,
    height: Vec<f64>,
}

impl RectangleFamily {
    /// Parameters are indexed by (j - 1)·d + r for value j and slot r.
    pub fn new(d: usize, n: usize, lo: Vec<f64>, width: Vec<f64>, height: Vec<f64>) -> Result<Self> {
        if d == 0 || n == 0 {
            return Err(Error::InvalidArgument("need d ≥ 1 and n ≥ 1".into()));
        }
        if lo.len() != n * d || width.len() != n * d || height.len() != n * d {
            return Err(Error::InvalidArgument(format!("expected {} parameters per table", n * d)));
        }
        if width.iter().any(|w| !(*w >= 0.0)) || height.iter().any(|h| !(0.0..=1.0).contains(h)) {
            return Err(Error::InvalidArgument("widths must be ≥ 0 and heights in [0, 1]".into()));
        }
        Ok(Self { d, n, lo, width, height })
    }

    /// The same rectangle [0, width) with height `height` in every slot.
    pub fn constant(d: usize, n: usize, width: f64, height: f64) -> Result<Self> {
        Self::new(d, n, vec![0.0; n * d], vec![width; n * d], vec![height; n * d])
    }

    /// Random widths in (0, 1/n] for d ≥ 2 (so both sets of hypotheses hold
    /// by construction) and in (0, 1] for d = 1, with a common scale drawn
    /// log-uniformly over two decades.
    pub fn random(d: usize, n: usize, rng: &mut SimRng) -> Result<Self> {
        let cap = if d >= 2 { 1.0 / n as f64 } else { 1.0 };
        let scale = 10f64.powf(-2.0 * rng.gen::<f64>());
        let flat = rng.gen_bool(0.5);
        let mut lo = Vec::with_capacity(n * d);
        let mut width = Vec::with_capacity(n * d);
        let mut height = Vec::with_capacity(n * d);
        for _ in 0..n * d {
            let w = cap * scale * rng.gen_range(0.5..=1.0);
            lo.push(rng.gen::<f64>() * (1.0 - w));
            width.push(w);
            height.push(if flat { 1.0 } else { rng.gen_range(0.5..=1.0) });
        }
        Self::new(d, n, lo, width, height)
    }

    pub fn arity(&self) -> usize {
        self.d
    }

    pub fn size(&self) -> usize {
        self.n
    }

    fn at(&self, j: usize, r: usize) -> usize {
        (j - 1) * self.d + r
    }

    /// g_{j,r}(x) for 1-based j.
    pub fn factor(&self, j: usize, r: usize, x: f64) -> f64 {
        let k = self.at(j, r);
        if x >= self.lo[k] && x < self.lo[k] + self.width[k] {
            self.height[k]
        } else {
            0.0
        }
    }

    /// E g_{j,r}(U) for U uniform on [0, 1).
    pub fn mass(&self, j: usize, r: usize) -> f64 {
        let k = self.at(j, r);
        let len = ((self.lo[k] + self.width[k]).min(1.0) - self.lo[k].max(0.0)).max(0.0);
        self.height[k] * len
    }

    /// f_i(x) for a 1-based index tuple.
    pub fn eval(&self, i: &[usize], x: &[f64]) -> f64 {
        i.iter().zip(x).enumerate().map(|(r, (&j, &v))| self.factor(j, r, v)).product()
    }

    /// Draws one sample: d·n values (slot-major) when decoupled, n when coupled.
    pub fn draw(&self, mode: Sampling, rng: &mut SimRng) -> Vec<f64> {
        let len = match mode {
            Sampling::Decoupled => self.n * self.d,
            Sampling::Coupled => self.n,
        };
        (0..len).map(|_| rng.gen::<f64>()).collect()
    }

    /// Σ_i f_i over C_n (decoupled) or I_n (coupled).
    pub fn sum(&self, mode: Sampling, sample: &[f64]) -> f64 {
        match mode {
            Sampling::Decoupled => (0..self.d).map(|r| (1..=self.n).map(|j| self.factor(j, r, sample[r * self.n + j - 1])).sum::<f64>()).product(),
            Sampling::Coupled => self.chain(|j, r| self.factor(j, r, sample[j - 1]), |_| Slot::Free),
        }
    }

    /// E Σ_i f_i, exactly.
    pub fn mean(&self, mode: Sampling) -> f64 {
        match mode {
            Sampling::Decoupled => (0..self.d).map(|r| self.axis_mass(r)).product(),
            Sampling::Coupled => self.chain(|j, r| self.mass(j, r), |_| Slot::Free),
        }
    }

    fn axis_mass(&self, r: usize) -> f64 {
        (1..=self.n).map(|j| self.mass(j, r)).sum()
    }

    fn max_height(&self, r: usize) -> f64 {
        (1..=self.n).map(|j| self.height[self.at(j, r)]).fold(0.0, f64::max)
    }

    /// Σ over increasing j of ∏_r weight(j_r, r), where `role` forces
    /// values in or out of j.
    fn chain(&self, weight: impl Fn(usize, usize) -> f64, role: impl Fn(usize) -> Slot) -> f64 {
        let d = self.d;
        let mut e = vec![0.0; d + 1];
        e[0] = 1.0;
        for v in 1..=self.n {
            match role(v) {
                Slot::Excluded => {}
                Slot::Free => {
                    for r in (1..=d).rev() {
                        e[r] += e[r - 1] * weight(v, r - 1);
                    }
                }
                Slot::Required => {
                    for r in (1..=d).rev() {
                        e[r] = e[r - 1] * weight(v, r - 1);
                    }
                    e[0] = 0.0;
                }
            }
        }
        e[d]
    }

    /// E_I Σ_{i_I} f_i with the slots outside I frozen at the sample values
    /// of index `i` (decoupled hypothesis).
    pub fn decoupled_section(&self, integrated: IndexSubset, i: &[usize], sample: &[f64]) -> f64 {
        (0..self.d)
            .map(|r| if integrated.contains(r) { self.axis_mass(r) } else { self.factor(i[r], r, sample[r * self.n + i[r] - 1]) })
            .product()
    }

    /// Upper bound of `decoupled_section` over all i and samples.
    pub fn decoupled_section_sup(&self, integrated: IndexSubset) -> f64 {
        (0..self.d).map(|r| if integrated.contains(r) { self.axis_mass(r) } else { self.max_height(r) }).product()
    }

    /// E'_I Σ_{j ∈ J(i, I)} f_j with the shared values X_{i_k}, k ∈ I,
    /// frozen (coupled hypothesis).
    pub fn coupled_section(&self, shared: IndexSubset, i: &[usize], sample: &[f64]) -> f64 {
        self.chain(
            |v, r| if i.contains(&v) { self.factor(v, r, sample[v - 1]) } else { self.mass(v, r) },
            |v| coupled_role(shared, i, v),
        )
    }

    /// Upper bound of `coupled_section` over samples for a given i.
    pub fn coupled_section_sup(&self, shared: IndexSubset, i: &[usize]) -> f64 {
        self.chain(|v, r| if i.contains(&v) { self.height[self.at(v, r)] } else { self.mass(v, r) }, |v| coupled_role(shared, i, v))
    }
}

#[derive(Clone, Copy)]
enum Slot {
    Free,
    Required,
    Excluded,
}

fn coupled_role(shared: IndexSubset, i: &[usize], v: usize) -> Slot {
    match i.iter().position(|&x| x == v) {
        Some(k) if shared.contains(k) => Slot::Required,
        Some(_) => Slot::Excluded,
        None => Slot::Free,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HypothesisCheck {
    pub name: String,
    /// Largest value seen over the outer draws (must stay ≤ 1).
    pub worst: f64,
    pub margin: f64,
    /// The bound holds for every sample, not just the ones drawn.
    pub certified: bool,
}

impl HypothesisCheck {
    fn new(name: String, worst: f64, sup: f64) -> Self {
        Self { name, worst, margin: 1.0 - worst, certified: sup <= 1.0 + 1e-12 }
    }

    pub fn pass(&self) -> bool {
        self.worst <= 1.0 + 1e-12
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LemmaConfig {
    pub replicates: usize,
    pub outer_draws: usize,
    /// Random index tuples examined per outer draw in the coupled check.
    pub tuples_per_draw: usize,
    pub seed: u64,
}

impl Default for LemmaConfig {
    fn default() -> Self {
        Self { replicates: 10_000, outer_draws: 256, tuples_per_draw: 8, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationResult {
    pub d: usize,
    pub n: usize,
    pub mode: Sampling,
    pub hypotheses: Vec<HypothesisCheck>,
    pub m1: f64,
    pub second_moment: Estimate,
    /// m₁² + (2^d − 1)·m₁
    pub moment_bound: f64,
    pub moment_margin: Estimate,
    /// P(Σ f ≥ m₁/2)
    pub pz_probability: Estimate,
    /// 2^{−d−2}·min(m₁, 1)
    pub pz_bound: f64,
    pub pz_margin: Estimate,
    pub replicates: usize,
}

impl VerificationResult {
    pub fn hypotheses_hold(&self) -> bool {
        self.hypotheses.iter().all(HypothesisCheck::pass)
    }

    pub fn moment_violated(&self, sigmas: f64) -> bool {
        self.moment_margin.hi(sigmas) < 0.0
    }

    pub fn pz_violated(&self, sigmas: f64) -> bool {
        self.pz_margin.hi(sigmas) < 0.0
    }

    /// Violations of the two conclusions; zero when the hypotheses fail,
    /// since nothing is asserted then.
    pub fn violations(&self, sigmas: f64) -> usize {
        if !self.hypotheses_hold() {
            return 0;
        }
        usize::from(self.moment_violated(sigmas)) + usize::from(self.pz_violated(sigmas))
    }
}

pub fn verify_lemma1(family: &RectangleFamily, config: &LemmaConfig) -> Result<VerificationResult> {
    verify_lemma(family, Sampling::Decoupled, config)
}

pub fn verify_lemma2(family: &RectangleFamily, config: &LemmaConfig) -> Result<VerificationResult> {
    verify_lemma(family, Sampling::Coupled, config)
}

const CHUNKS: usize = 64;

pub fn verify_lemma(family: &RectangleFamily, mode: Sampling, config: &LemmaConfig) -> Result<VerificationResult> {
    if config.replicates < 2 {
        return Err(Error::InvalidArgument("need at least 2 replicates".into()));
    }
    let (d, n) = (family.d, family.n);
    let hypotheses = check_hypotheses(family, mode, config);
    let m1 = family.mean(mode);
    let threshold = 0.5 * m1;

    let per = config.replicates.div_ceil(CHUNKS);
    let parts: Vec<(Welford, u64)> = (0..CHUNKS)
        .into_par_iter()
        .map(|c| {
            // Both modes read the same stream so d = 1 runs coincide.
            let mut rng = task_rng(config.seed, &[tag::LEMMA, c as u64]);
            let mut sq = Welford::new();
            let mut hits = 0;
            let count = per.min(config.replicates.saturating_sub(c * per));
            for _ in 0..count {
                let z = family.sum(mode, &family.draw(mode, &mut rng));
                sq.push(z * z);
                hits += u64::from(z >= threshold);
            }
            (sq, hits)
        })
        .collect();
    let mut sq = Welford::new();
    let mut hits = 0;
    for (w, h) in &parts {
        sq.merge(w);
        hits += h;
    }
    let second_moment = sq.estimate();
    let moment_bound = m1 * m1 + ((1u64 << d) - 1) as f64 * m1;
    let pz_probability = proportion(hits, sq.count());
    let pz_bound = 2f64.powi(-(d as i32) - 2) * m1.min(1.0);
    Ok(VerificationResult {
        d,
        n,
        mode,
        hypotheses,
        m1,
        second_moment,
        moment_bound,
        moment_margin: Estimate::new(moment_bound - second_moment.value, second_moment.std_err),
        pz_probability,
        pz_bound,
        pz_margin: Estimate::new(pz_probability.value - pz_bound, pz_probability.std_err),
        replicates: sq.count() as usize,
    })
}

/// Checks f ≤ 1 and the section-sum hypotheses on `outer_draws` samples.
/// A failure refutes the hypothesis; a pass on the draws alone is only
/// evidence, which is why the exact supremum is reported as `certified`.
fn check_hypotheses(family: &RectangleFamily, mode: Sampling, config: &LemmaConfig) -> Vec<HypothesisCheck> {
    let (d, n) = (family.d, family.n);
    let mut rng = task_rng(config.seed, &[tag::LEMMA, u64::MAX]);
    let subsets: Vec<IndexSubset> = IndexSubset::proper_nonempty(d).collect();
    let mut worst_f: f64 = 0.0;
    let mut worst = vec![0.0f64; subsets.len()];
    for _ in 0..config.outer_draws {
        let sample = family.draw(mode, &mut rng);
        match mode {
            Sampling::Decoupled => {
                let i: Vec<usize> = (0..d).map(|_| rng.gen_range(1..=n)).collect();
                let x: Vec<f64> = (0..d).map(|r| sample[r * n + i[r] - 1]).collect();
                worst_f = worst_f.max(family.eval(&i, &x));
                for (s, sub) in subsets.iter().enumerate() {
                    // The maximum over the frozen indices factorizes per slot.
                    let v: f64 = (0..d)
                        .map(|r| {
                            if sub.contains(r) {
                                family.axis_mass(r)
                            } else {
                                (1..=n).map(|j| family.factor(j, r, sample[r * n + j - 1])).fold(0.0, f64::max)
                            }
                        })
                        .product();
                    worst[s] = worst[s].max(v);
                }
            }
            Sampling::Coupled => {
                let total = binomial(n as u64, d as u64);
                if total == 0 {
                    continue;
                }
                for _ in 0..config.tuples_per_draw {
                    let i = unrank_increasing(n, d, rng.gen_range(0..total));
                    let x: Vec<f64> = i.iter().map(|&j| sample[j - 1]).collect();
                    worst_f = worst_f.max(family.eval(&i, &x));
                    for (s, sub) in subsets.iter().enumerate() {
                        worst[s] = worst[s].max(family.coupled_section(*sub, &i, &sample));
                    }
                }
            }
        }
    }
    let sup_f: f64 = (0..d).map(|r| family.max_height(r)).product();
    let mut out = vec![HypothesisCheck::new("f <= 1".into(), worst_f, sup_f)];
    for (s, sub) in subsets.iter().enumerate() {
        let sup = match mode {
            Sampling::Decoupled => family.decoupled_section_sup(*sub),
            Sampling::Coupled => {
                let mut sup: f64 = 0.0;
                visit_increasing(n, d, |i| {
                    sup = sup.max(family.coupled_section_sup(*sub, i));
                    true
                });
                sup
            }
        };
        out.push(HypothesisCheck::new(format!("I={sub}"), worst[s], sup));
    }
    out
}

/// `count` random hypothesis-satisfying instances with n drawn from max(d,2)..=n_max.
pub fn random_instances(d: usize, n_max: usize, count: usize, seed: u64) -> Result<Vec<RectangleFamily>> {
    let lo = d.max(2);
    if n_max < lo {
        return Err(Error::InvalidArgument(format!("n_max must be at least {lo}")));
    }
    let mut rng = task_rng(seed, &[tag::LEMMA, d as u64]);
    (0..count)
        .map(|_| {
            let n = rng.gen_range(lo..=n_max);
            RectangleFamily::random(d, n, &mut rng)
        })
        .collect()
}

/// Index of a result whose Paley-Zygmund margin is below 0.25, showing the
/// check can get close to the bound.
pub fn pz_power_witness(results: &[VerificationResult]) -> Option<usize> {
    results.iter().position(|r| r.pz_margin.value < 0.25)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::indexing::{enumerate_cube, enumerate_increasing, overlap_family, MultiIndex, OverlapMode};

    fn small_config(seed: u64) -> LemmaConfig {
        LemmaConfig { replicates: 4000, outer_draws: 64, tuples_per_draw: 4, seed }
    }

    #[test]
    fn sums_match_enumeration() {
        let mut rng = task_rng(3, &[]);
        for d in 1..=3 {
            let fam = RectangleFamily::random(d, 5, &mut rng).unwrap();
            // Widen so sums are nonzero often.
            let fam = RectangleFamily { width: fam.width.iter().map(|w| w * 4.0).collect(), ..fam };
            let dec = fam.draw(Sampling::Decoupled, &mut rng);
            let brute: f64 = enumerate_cube(5, d)
                .map(|i| {
                    let x: Vec<f64> = (0..d).map(|r| dec[r * 5 + i.entries()[r] - 1]).collect();
                    fam.eval(i.entries(), &x)
                })
                .sum();
            assert!((fam.sum(Sampling::Decoupled, &dec) - brute).abs() < 1e-12);
            let cou = fam.draw(Sampling::Coupled, &mut rng);
            let brute: f64 = enumerate_increasing(5, d)
                .map(|i| {
                    let x: Vec<f64> = i.entries().iter().map(|&j| cou[j - 1]).collect();
                    fam.eval(i.entries(), &x)
                })
                .sum();
            assert!((fam.sum(Sampling::Coupled, &cou) - brute).abs() < 1e-12);
        }
    }

    #[test]
    fn coupled_section_matches_overlap_family() {
        let mut rng = task_rng(9, &[]);
        let fam = RectangleFamily::random(3, 6, &mut rng).unwrap();
        let fam = RectangleFamily { width: fam.width.iter().map(|w| w * 5.0).collect(), ..fam };
        let sample = fam.draw(Sampling::Coupled, &mut rng);
        let i = vec![2, 4, 5];
        for sub in IndexSubset::proper_nonempty(3) {
            let brute: f64 = overlap_family(&MultiIndex::new(i.clone()), sub, 6, OverlapMode::Coupled)
                .unwrap()
                .iter()
                .map(|j| j.entries().iter().enumerate().map(|(r, &v)| if i.contains(&v) { fam.factor(v, r, sample[v - 1]) } else { fam.mass(v, r) }).product::<f64>())
                .sum();
            assert!((fam.coupled_section(sub, &i, &sample) - brute).abs() < 1e-12, "{sub}");
        }
    }

    #[test]
    fn bernoulli_moments() {
        // d = 1, f_i = 1{U_i ≤ p}: E(Σf)² = (np)² + np(1 − p).
        let fam = RectangleFamily::constant(1, 8, 0.125, 1.0).unwrap();
        let r = verify_lemma1(&fam, &LemmaConfig { replicates: 100_000, ..small_config(1) }).unwrap();
        assert!((r.m1 - 1.0).abs() < 1e-12);
        let exact = 1.0 + 0.875;
        assert!((r.second_moment.value - exact).abs() < 3.0 * r.second_moment.std_err);
        let pz = 1.0 - 0.875f64.powi(8);
        assert!((r.pz_probability.value - pz).abs() < 3.0 * r.pz_probability.std_err);
        assert_eq!(r.pz_bound, 0.125);
        assert_eq!(r.violations(3.0), 0);
    }

    #[test]
    fn zero_family() {
        let fam = RectangleFamily::constant(2, 4, 0.0, 1.0).unwrap();
        let r = verify_lemma1(&fam, &small_config(2)).unwrap();
        assert_eq!(r.m1, 0.0);
        assert_eq!(r.second_moment.value, 0.0);
        assert_eq!(r.pz_bound, 0.0);
        assert_eq!(r.violations(3.0), 0);
    }

    #[test]
    fn all_ones_at_n_equal_d() {
        for d in 1..=3 {
            let fam = RectangleFamily::constant(d, d, 1.0, 1.0).unwrap();
            let r = verify_lemma2(&fam, &small_config(3)).unwrap();
            assert_eq!(r.m1, 1.0);
            assert_eq!(r.second_moment.value, 1.0);
            assert!(r.hypotheses_hold());
            assert!(r.hypotheses.iter().all(|h| h.certified));
            assert_eq!(r.moment_bound, 1.0 + ((1 << d) - 1) as f64);
        }
    }

    #[test]
    fn one_dimension_coincides() {
        let mut rng = task_rng(5, &[]);
        let fam = RectangleFamily::random(1, 12, &mut rng).unwrap();
        let a = verify_lemma1(&fam, &small_config(4)).unwrap();
        let b = verify_lemma2(&fam, &small_config(4)).unwrap();
        assert_eq!(a.m1, b.m1);
        assert_eq!(a.second_moment, b.second_moment);
        assert_eq!(a.pz_probability, b.pz_probability);
    }

    #[test]
    fn decoupled_second_moment_is_exact_product() {
        // Σ_{C_n} factorizes, so E Z² = ∏_r E(Σ_j g_{j,r})².
        let mut rng = task_rng(6, &[]);
        let fam = RectangleFamily::random(2, 6, &mut rng).unwrap();
        let exact: f64 = (0..2)
            .map(|r| {
                let m: Vec<f64> = (1..=6).map(|j| fam.mass(j, r)).collect();
                let h2: Vec<f64> = (1..=6).map(|j| fam.height[fam.at(j, r)] * fam.mass(j, r)).collect();
                let s: f64 = m.iter().sum();
                s * s - m.iter().map(|v| v * v).sum::<f64>() + h2.iter().sum::<f64>()
            })
            .product();
        let r = verify_lemma1(&fam, &LemmaConfig { replicates: 200_000, ..small_config(7) }).unwrap();
        assert!((r.second_moment.value - exact).abs() < 3.5 * r.second_moment.std_err);
    }

    #[test]
    fn violated_hypothesis_is_reported() {
        let fam = RectangleFamily::constant(2, 8, 0.5, 1.0).unwrap();
        let r = verify_lemma1(&fam, &small_config(8)).unwrap();
        assert!(!r.hypotheses_hold());
        assert_eq!(r.violations(3.0), 0);
    }

    #[test]
    fn random_instances_satisfy_hypotheses() {
        for d in 1..=3 {
            for fam in random_instances(d, 16, 10, 11).unwrap() {
                for mode in [Sampling::Decoupled, Sampling::Coupled] {
                    let r = verify_lemma(&fam, mode, &small_config(12)).unwrap();
                    assert!(r.hypotheses.iter().all(|h| h.pass() && h.certified), "{:?}", r.hypotheses);
                    assert_eq!(r.violations(3.0), 0);
                }
            }
        }
    }
}
