//! The B_{k,I} / C_{k,l} decomposition of a set A_k ⊆ E^d at scale n.
//!
//! C_{k,d} = A_k; for l = d-1, …, 1:
//! B_{k,I} = {x_I : n^{d-l}·μ_{d-l}(C_{k,l+1}^{x_I}) ≥ 1} for |I| = l and
//! C_{k,l} = {x ∈ C_{k,l+1} : x_I ∉ B_{k,I} for every |I| = l}.
//! Section measures are exact when the region supplies them (top level
//! only) and Monte-Carlo otherwise, with a three-way outcome near the
//! threshold. Decisions are memoized and seeded by the query, so the same
//! section always gets the same answer.

use std::collections::HashMap;
use std::sync::Mutex;

use rayon::prelude::*;
use serde::Serialize;

use crate::conditions::akl::{Membership, MembershipOracle};
use crate::error::{Error, Result};
use crate::estimate::{proportion, Estimate};
use crate::indexing::{visit_increasing, IndexSubset};
use crate::model::Distribution;
use crate::seeds::{derive_seed, splitmix64, tag, task_rng};

/// A measurable subset of R^d given by a membership test.
pub trait Region: Send + Sync {
    fn dim(&self) -> usize;

    fn contains(&self, x: &[f64]) -> bool;

    fn name(&self) -> String;

    /// μ_{d-l}(A^{x_I}) where `fixed` holds the l frozen slots and
    /// `values` their values in slot order.
    fn section_measure(&self, _fixed: IndexSubset, _values: &[f64], _dist: &dyn Distribution) -> Option<f64> {
        None
    }

    fn measure(&self, _dist: &dyn Distribution) -> Option<f64> {
        None
    }
}

/// A = {x < a, y < b} ∪ {x < b, y < a} in [0, ∞)².
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntroRegion {
    pub a: f64,
    pub b: f64,
}

impl IntroRegion {
    /// Length bound of the section through a coordinate equal to v.
    fn section_bound(&self, v: f64) -> f64 {
        let (lo, hi) = (self.a.min(self.b), self.a.max(self.b));
        if v < 0.0 {
            0.0
        } else if v < lo {
            hi
        } else if v < hi {
            lo
        } else {
            0.0
        }
    }
}

impl Region for IntroRegion {
    fn dim(&self) -> usize {
        2
    }

    fn contains(&self, x: &[f64]) -> bool {
        let (u, v) = (x[0], x[1]);
        u >= 0.0 && v >= 0.0 && ((u < self.a && v < self.b) || (u < self.b && v < self.a))
    }

    fn name(&self) -> String {
        format!("intro:{}:{}", self.a, self.b)
    }

    fn section_measure(&self, fixed: IndexSubset, values: &[f64], dist: &dyn Distribution) -> Option<f64> {
        match fixed.len() {
            0 => self.measure(dist),
            1 => dist.interval_probability(0.0, self.section_bound(values[0])),
            _ => Some(f64::from(u8::from(self.contains(values)))),
        }
    }

    fn measure(&self, dist: &dyn Distribution) -> Option<f64> {
        let (lo, hi) = (self.a.min(self.b), self.a.max(self.b));
        let p_lo = dist.interval_probability(0.0, lo)?;
        let p_hi = dist.interval_probability(0.0, hi)?;
        Some(2.0 * p_lo * p_hi - p_lo * p_lo)
    }
}

/// [0, width)^d.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxRegion {
    pub d: usize,
    pub width: f64,
}

impl Region for BoxRegion {
    fn dim(&self) -> usize {
        self.d
    }

    fn contains(&self, x: &[f64]) -> bool {
        x.iter().all(|&v| (0.0..self.width).contains(&v))
    }

    fn name(&self) -> String {
        format!("box:{}", self.width)
    }

    fn section_measure(&self, fixed: IndexSubset, values: &[f64], dist: &dyn Distribution) -> Option<f64> {
        if !values.iter().all(|&v| (0.0..self.width).contains(&v)) {
            return Some(0.0);
        }
        Some(dist.interval_probability(0.0, self.width)?.powi((self.d - fixed.len()) as i32))
    }

    fn measure(&self, dist: &dyn Distribution) -> Option<f64> {
        Some(dist.interval_probability(0.0, self.width)?.powi(self.d as i32))
    }
}

/// The empty set or the whole space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrivialRegion {
    pub d: usize,
    pub full: bool,
}

impl Region for TrivialRegion {
    fn dim(&self) -> usize {
        self.d
    }

    fn contains(&self, _x: &[f64]) -> bool {
        self.full
    }

    fn name(&self) -> String {
        if self.full { "full" } else { "empty" }.into()
    }

    fn section_measure(&self, _fixed: IndexSubset, _values: &[f64], _dist: &dyn Distribution) -> Option<f64> {
        Some(if self.full { 1.0 } else { 0.0 })
    }

    fn measure(&self, _dist: &dyn Distribution) -> Option<f64> {
        Some(if self.full { 1.0 } else { 0.0 })
    }
}

/// The complement of A_{k,d}, the set whose hits define condition (C).
/// Undecided points are counted as members.
pub struct AkdComplement<'a> {
    pub oracle: MembershipOracle<'a>,
}

impl Region for AkdComplement<'_> {
    fn dim(&self) -> usize {
        self.oracle.arity()
    }

    fn contains(&self, x: &[f64]) -> bool {
        self.oracle.member(self.oracle.arity(), x) != Membership::In
    }

    fn name(&self) -> String {
        format!("complement of A_{{{},d}}", self.oracle.k())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Theorem3Config {
    /// Draws per Monte-Carlo section measure.
    pub budget: usize,
    /// Draws for μ_d(C_{k,1}).
    pub measure_budget: usize,
    /// Simulated sample sets for the B events and the containment check.
    pub replicates: usize,
    pub sigmas: f64,
    pub seed: u64,
}

impl Default for Theorem3Config {
    fn default() -> Self {
        Self { budget: 4096, measure_budget: 100_000, replicates: 200, sigmas: 2.0, seed: 0 }
    }
}

type MemoKey = (u64, Vec<u64>);

pub struct Decomposition<'a> {
    region: &'a dyn Region,
    dist: &'a dyn Distribution,
    n: u64,
    d: usize,
    config: Theorem3Config,
    memo: Mutex<HashMap<MemoKey, Membership>>,
}

impl<'a> Decomposition<'a> {
    pub fn new(region: &'a dyn Region, dist: &'a dyn Distribution, n: u64, config: Theorem3Config) -> Result<Self> {
        let d = region.dim();
        if d < 1 || n < 1 {
            return Err(Error::InvalidArgument("need d ≥ 1 and n ≥ 1".into()));
        }
        if config.budget < 2 {
            return Err(Error::InvalidArgument("section budget must be at least 2".into()));
        }
        Ok(Self { region, dist, n, d, config, memo: Mutex::new(HashMap::new()) })
    }

    pub fn arity(&self) -> usize {
        self.d
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    /// μ_{d-l}(C_{k,l+1}^{x_I}) for |I| = l, with `values` in slot order.
    pub fn section_measure(&self, slots: IndexSubset, values: &[f64], stream: u64) -> Estimate {
        let l = slots.len();
        if l + 1 == self.d {
            if let Some(m) = self.region.section_measure(slots, values, self.dist) {
                return Estimate::exact(m);
            }
        }
        let mut rng = task_rng(self.config.seed, &[tag::THEOREM3, stream, slots.mask(), key_hash(values)]);
        let mut z = vec![0.0; self.d];
        for (r, v) in slots.members().zip(values) {
            z[r] = *v;
        }
        let (mut sure, mut maybe) = (0u64, 0u64);
        for _ in 0..self.config.budget {
            for r in slots.complement().members() {
                z[r] = self.dist.sample(&mut rng);
            }
            match self.in_c(l + 1, &z) {
                Membership::In => {
                    sure += 1;
                    maybe += 1;
                }
                Membership::Unknown => maybe += 1,
                Membership::Out => {}
            }
        }
        let p = proportion(sure, self.config.budget as u64);
        let q = proportion(maybe, self.config.budget as u64);
        Estimate::new(0.5 * (p.value + q.value), p.std_err.max(q.std_err) + 0.5 * (q.value - p.value))
    }

    /// Is x_I in B_{k,I}?
    pub fn in_b(&self, slots: IndexSubset, values: &[f64]) -> Membership {
        let l = slots.len();
        assert!(l >= 1 && l < self.d, "B sets need 1 ≤ |I| < d");
        let key = (slots.mask(), values.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        if let Some(&m) = self.memo.lock().unwrap().get(&key) {
            return m;
        }
        let mu = self.section_measure(slots, values, 0);
        let scale = (self.n as f64).powi((self.d - l) as i32);
        let s = self.config.sigmas;
        let m = if mu.is_exact() {
            if scale * mu.value >= 1.0 {
                Membership::In
            } else {
                Membership::Out
            }
        } else if scale * mu.lo(s) >= 1.0 {
            Membership::In
        } else if scale * mu.hi(s) < 1.0 {
            Membership::Out
        } else {
            Membership::Unknown
        };
        self.memo.lock().unwrap().insert(key, m);
        m
    }

    /// Is x in C_{k,l}?
    pub fn in_c(&self, l: usize, x: &[f64]) -> Membership {
        assert!(l >= 1 && l <= self.d && x.len() == self.d);
        if !self.region.contains(x) {
            return Membership::Out;
        }
        let mut out = Membership::In;
        for lev in (l..self.d).rev() {
            for slots in IndexSubset::of_size(self.d, lev) {
                let vals: Vec<f64> = slots.members().map(|r| x[r]).collect();
                let b = match self.in_b(slots, &vals) {
                    Membership::In => Membership::Out,
                    Membership::Out => Membership::In,
                    Membership::Unknown => Membership::Unknown,
                };
                out = out.and(b);
                if out == Membership::Out {
                    return out;
                }
            }
        }
        out
    }
}

fn key_hash(values: &[f64]) -> u64 {
    values.iter().fold(0x2545_f491_4f6c_dd1du64, |h, v| splitmix64(h ^ v.to_bits()))
}

#[derive(Debug, Clone, Serialize)]
pub struct BTerm {
    /// 1-based slot set, e.g. "{1}".
    pub subset: String,
    /// P(∃ j ∈ I_n^l: X_j ∈ B_{k,I}) with undecided replicates in [lo, hi].
    pub probability: Estimate,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Theorem3Level {
    pub n: u64,
    pub b_terms: Vec<BTerm>,
    /// n^d·μ_d(C_{k,1})
    pub c1_term: Estimate,
    /// Replicates with a hit of A_k but no hit of C_{k,1} or any B_{k,I}.
    pub containment_violations: usize,
    /// Replicates where undecided sets prevented the containment check.
    pub containment_undecided: usize,
    pub replicates: usize,
}

/// Evaluates the decomposition at scale n.
pub fn theorem3_decompose(region: &dyn Region, dist: &dyn Distribution, n: u64, config: &Theorem3Config) -> Result<Theorem3Level> {
    let dec = Decomposition::new(region, dist, n, *config)?;
    let d = dec.arity();
    if config.replicates == 0 || config.measure_budget == 0 {
        return Err(Error::InvalidArgument("replicates and measure budget must be positive".into()));
    }
    let subsets: Vec<IndexSubset> = (1..d).flat_map(|l| IndexSubset::of_size(d, l)).collect();
    let size = n as usize;

    struct Rep {
        b_sure: Vec<bool>,
        b_maybe: Vec<bool>,
        violation: bool,
        undecided: bool,
    }
    let reps: Vec<Rep> = (0..config.replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = task_rng(config.seed, &[tag::THEOREM3, 1, n, r as u64]);
            let xs: Vec<f64> = (0..size).map(|_| dist.sample(&mut rng)).collect();
            let mut b_sure = vec![false; subsets.len()];
            let mut b_maybe = vec![false; subsets.len()];
            for (s, slots) in subsets.iter().enumerate() {
                let mut vals = vec![0.0; slots.len()];
                visit_increasing(size, slots.len(), |j| {
                    for (q, &i) in j.iter().enumerate() {
                        vals[q] = xs[i - 1];
                    }
                    match dec.in_b(*slots, &vals) {
                        Membership::In => {
                            b_sure[s] = true;
                            b_maybe[s] = true;
                            false
                        }
                        Membership::Unknown => {
                            b_maybe[s] = true;
                            true
                        }
                        Membership::Out => true,
                    }
                });
            }
            let mut hit_a = false;
            let mut hit_c = Membership::Out;
            let mut point = vec![0.0; d];
            visit_increasing(size, d, |i| {
                for (q, &j) in i.iter().enumerate() {
                    point[q] = xs[j - 1];
                }
                if region.contains(&point) {
                    hit_a = true;
                    hit_c = match (hit_c, dec.in_c(1, &point)) {
                        (Membership::In, _) | (_, Membership::In) => Membership::In,
                        (Membership::Unknown, _) | (_, Membership::Unknown) => Membership::Unknown,
                        _ => Membership::Out,
                    };
                }
                hit_c != Membership::In
            });
            let right_sure = hit_c == Membership::In || b_sure.iter().any(|&b| b);
            let right_maybe = hit_c != Membership::Out || b_maybe.iter().any(|&b| b);
            Rep { b_sure, b_maybe, violation: hit_a && !right_maybe, undecided: hit_a && !right_sure && right_maybe }
        })
        .collect();

    let total = config.replicates as u64;
    let b_terms = subsets
        .iter()
        .enumerate()
        .map(|(s, slots)| {
            let sure = reps.iter().filter(|r| r.b_sure[s]).count() as u64;
            let maybe = reps.iter().filter(|r| r.b_maybe[s]).count() as u64;
            BTerm {
                subset: slots.to_string(),
                probability: proportion(sure, total),
                lo: sure as f64 / total as f64,
                hi: maybe as f64 / total as f64,
            }
        })
        .collect();

    let chunks = 32usize;
    let per = config.measure_budget.div_ceil(chunks);
    let counts: Vec<(u64, u64)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = task_rng(config.seed, &[tag::THEOREM3, 2, n, c as u64]);
            let mut x = vec![0.0; d];
            let (mut sure, mut maybe) = (0u64, 0u64);
            for _ in 0..per {
                for v in x.iter_mut() {
                    *v = dist.sample(&mut rng);
                }
                match dec.in_c(1, &x) {
                    Membership::In => {
                        sure += 1;
                        maybe += 1;
                    }
                    Membership::Unknown => maybe += 1,
                    Membership::Out => {}
                }
            }
            (sure, maybe)
        })
        .collect();
    let sure: u64 = counts.iter().map(|c| c.0).sum();
    let draws = (per * chunks) as u64;
    let scale = (n as f64).powi(d as i32);
    let c1 = if sure == 0 && counts.iter().all(|c| c.1 == 0) && region.measure(dist) == Some(0.0) {
        Estimate::exact(0.0)
    } else {
        proportion(sure, draws).scale(scale)
    };

    Ok(Theorem3Level {
        n,
        b_terms,
        c1_term: c1,
        containment_violations: reps.iter().filter(|r| r.violation).count(),
        containment_undecided: reps.iter().filter(|r| r.undecided).count(),
        replicates: config.replicates,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SectionCheck {
    pub checked: usize,
    pub violations: usize,
}

/// Re-estimates, on a fresh stream, n^{d-m}·μ(C_{k,l}^{x_I}) for sampled
/// x ∈ C_{k,l} and every |I| = m with l ≤ m < d; each must stay below 1
/// (within `sigmas` standard errors). Points are found by rejection from
/// at most `draws` product-measure samples.
pub fn verify_sections(dec: &Decomposition<'_>, l: usize, draws: usize, sigmas: f64, seed: u64) -> SectionCheck {
    let d = dec.arity();
    let mut rng = task_rng(seed, &[tag::THEOREM3, 3]);
    let mut x = vec![0.0; d];
    let mut checked = 0;
    let mut violations = 0;
    let held_out = Decomposition { memo: Mutex::new(HashMap::new()), config: Theorem3Config { seed: derive_seed(seed, &[7]), ..dec.config }, ..*dec };
    for _ in 0..draws {
        for v in x.iter_mut() {
            *v = dec.dist.sample(&mut rng);
        }
        if dec.in_c(l, &x) != Membership::In {
            continue;
        }
        for m in l..d {
            for slots in IndexSubset::of_size(d, m) {
                let vals: Vec<f64> = slots.members().map(|r| x[r]).collect();
                // μ(C_{k,l}^{x_I}) ≤ μ(C_{k,m+1}^{x_I}), so the held-out
                // estimate of the larger set bounds it.
                let mu = held_out.section_measure(slots, &vals, 1);
                let scale = (dec.n as f64).powi((d - m) as i32);
                checked += 1;
                if scale * mu.lo(sigmas) >= 1.0 {
                    violations += 1;
                }
            }
        }
    }
    SectionCheck { checked, violations }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Builtin;

    #[test]
    fn empty_region() {
        let r = TrivialRegion { d: 2, full: false };
        let cfg = Theorem3Config { replicates: 20, measure_budget: 1000, ..Default::default() };
        let lvl = theorem3_decompose(&r, &Builtin::Uniform01, 8, &cfg).unwrap();
        assert!(lvl.b_terms.iter().all(|b| b.probability.value == 0.0));
        assert_eq!(lvl.c1_term.value, 0.0);
        assert_eq!(lvl.containment_violations, 0);
    }

    #[test]
    fn full_region_propagates() {
        let r = TrivialRegion { d: 2, full: true };
        let dec = Decomposition::new(&r, &Builtin::Uniform01, 4, Theorem3Config::default()).unwrap();
        let one = IndexSubset::from_positions(&[0], 2);
        assert_eq!(dec.in_b(one, &[0.3]), Membership::In);
        assert_eq!(dec.in_c(1, &[0.3, 0.4]), Membership::Out);
        let cfg = Theorem3Config { replicates: 20, measure_budget: 1000, ..Default::default() };
        let lvl = theorem3_decompose(&r, &Builtin::Uniform01, 4, &cfg).unwrap();
        assert_eq!(lvl.c1_term.value, 0.0);
        assert!(lvl.b_terms.iter().all(|b| b.probability.value == 1.0));
    }

    #[test]
    fn intro_rectangles_at_n_10() {
        let r = IntroRegion { a: 0.3, b: 0.01 };
        let dec = Decomposition::new(&r, &Builtin::Uniform01, 10, Theorem3Config::default()).unwrap();
        for slot in 0..2 {
            let s = IndexSubset::from_positions(&[slot], 2);
            // Section through x < b has length a: 10·0.3 = 3 ≥ 1.
            assert_eq!(dec.in_b(s, &[0.005]), Membership::In);
            // Section through b ≤ x < a has length b: 10·0.01 < 1.
            assert_eq!(dec.in_b(s, &[0.1]), Membership::Out);
            assert_eq!(dec.in_b(s, &[0.5]), Membership::Out);
        }
        // What is left of A once the thin slices are removed is empty.
        assert_eq!(dec.in_c(1, &[0.1, 0.005]), Membership::Out);
        assert_eq!(dec.in_c(1, &[0.005, 0.2]), Membership::Out);
        assert_eq!(dec.in_c(2, &[0.005, 0.2]), Membership::In);
        let cfg = Theorem3Config { replicates: 300, measure_budget: 20_000, ..Default::default() };
        let lvl = theorem3_decompose(&r, &Builtin::Uniform01, 10, &cfg).unwrap();
        assert_eq!(lvl.containment_violations, 0);
        assert_eq!(lvl.c1_term.value, 0.0);
        // P(∃ j ≤ 10: X_j < 0.01) = 1 - 0.99^10.
        let exact = 1.0 - 0.99f64.powi(10);
        for b in &lvl.b_terms {
            assert!((b.probability.value - exact).abs() <= 3.0 * b.probability.std_err);
        }
    }

    #[test]
    fn monte_carlo_sections_agree_with_exact() {
        // Force Monte-Carlo by hiding the closed form.
        struct Opaque(BoxRegion);
        impl Region for Opaque {
            fn dim(&self) -> usize {
                self.0.dim()
            }
            fn contains(&self, x: &[f64]) -> bool {
                self.0.contains(x)
            }
            fn name(&self) -> String {
                "opaque box".into()
            }
        }
        let exact = BoxRegion { d: 3, width: 0.3 };
        let opaque = Opaque(exact);
        let cfg = Theorem3Config { budget: 4000, ..Default::default() };
        let a = Decomposition::new(&exact, &Builtin::Uniform01, 4, cfg).unwrap();
        let b = Decomposition::new(&opaque, &Builtin::Uniform01, 4, cfg).unwrap();
        let two = IndexSubset::from_positions(&[0, 2], 3);
        for v in [[0.1, 0.2], [0.5, 0.1]] {
            let (ma, mb) = (a.in_b(two, &v), b.in_b(two, &v));
            assert!(mb == Membership::Unknown || ma == mb);
        }
    }

    #[test]
    fn sections_of_c_are_small() {
        let r = BoxRegion { d: 2, width: 0.05 };
        let dec = Decomposition::new(&r, &Builtin::Uniform01, 8, Theorem3Config::default()).unwrap();
        let check = verify_sections(&dec, 1, 50_000, 3.0, 5);
        assert!(check.checked > 0);
        assert_eq!(check.violations, 0);
    }
}
