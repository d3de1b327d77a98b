//! The d-dimensional criterion with the recursive sets A_{l,i}:
//! A_{0,i} = R^d, c_{i_I}(x_I) = Σ_{i_{I'}} E'_I(h_i² 1_{A_{l−1,i}} ∧ 1) for
//! |I| = l, and A_{l,i} = {x ∈ A_{l−1,i} : c_{i_I}(x_I) ≤ 1 for |I| = l}.
//!
//! Inner expectations use fresh draws of the free coordinates from a panel
//! per level, so a query never reuses the draws of the level it depends on.
//! Values are memoized by (slots, indices, coordinates).

use std::collections::HashMap;
use std::sync::Mutex;

use rayon::prelude::*;

use super::{at_most_one, block_report, draw_panel, resolve_cutoff, simulate_partial_sums, total, IndexTerm, KernelFamily, SeriesConfig, SeriesReport};
use crate::conditions::Membership;
use crate::error::{Error, Result};
use crate::estimate::{proportion, Estimate, Welford};
use crate::indexing::{visit_cube, IndexSubset};
use crate::model::Distribution;
use crate::seeds::{tag, task_rng};

type Key = (u64, Vec<usize>, Vec<u64>);

/// Lower and upper estimates of a c value (undecided memberships excluded
/// from, respectively included in, the indicator).
#[derive(Debug, Clone, Copy)]
struct Bracket {
    lo: Estimate,
    hi: Estimate,
}

struct Recursion<'a> {
    family: &'a dyn KernelFamily,
    dists: &'a [&'a dyn Distribution],
    d: usize,
    cutoff: usize,
    sigmas: f64,
    /// panels[l][r]: inner draws of slot r used by level-l queries.
    panels: Vec<Vec<Vec<f64>>>,
    memo: Mutex<HashMap<Key, Bracket>>,
}

impl Recursion<'_> {
    fn compare(&self, c: Bracket) -> Membership {
        match (at_most_one(c.hi, self.sigmas), at_most_one(c.lo, self.sigmas)) {
            (Membership::In, _) => Membership::In,
            (_, Membership::Out) => Membership::Out,
            _ => Membership::Unknown,
        }
    }

    /// Membership of a full point in A_{level, i}.
    fn member(&self, level: usize, index: &[usize], point: &[f64]) -> Membership {
        let mut out = Membership::In;
        for l in 1..=level {
            for sub in IndexSubset::of_size(self.d, l) {
                let idx: Vec<usize> = sub.members().map(|r| index[r]).collect();
                let vals: Vec<f64> = sub.members().map(|r| point[r]).collect();
                out = out.and(self.compare(self.c(sub, &idx, &vals)));
                if out == Membership::Out {
                    return out;
                }
            }
        }
        out
    }

    fn c(&self, sub: IndexSubset, idx: &[usize], vals: &[f64]) -> Bracket {
        let key = (sub.mask(), idx.to_vec(), vals.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        if let Some(&b) = self.memo.lock().unwrap().get(&key) {
            return b;
        }
        let b = self.compute(sub, idx, vals);
        self.memo.lock().unwrap().insert(key, b);
        b
    }

    fn compute(&self, sub: IndexSubset, idx: &[usize], vals: &[f64]) -> Bracket {
        let d = self.d;
        let l = sub.len();
        let free: Vec<usize> = sub.complement().members().collect();
        let mut index = vec![0usize; d];
        let mut point = vec![0.0; d];
        for ((r, &i), &v) in sub.members().zip(idx).zip(vals) {
            index[r] = i;
            point[r] = v;
        }
        if l == 1 && free.len() == 1 {
            // A_{0} is everything, so the section moment may be closed-form.
            let dist = self.dists[free[0]];
            let mut sum = Some(0.0);
            for j in 1..=self.cutoff {
                index[free[0]] = j;
                sum = sum.and_then(|s| Some(s + self.family.capped_moment(&index, sub, vals, dist)?));
            }
            if let Some(s) = sum {
                return Bracket { lo: Estimate::exact(s), hi: Estimate::exact(s) };
            }
        }
        let panel = &self.panels[l];
        let (mut lo, mut hi) = (Welford::new(), Welford::new());
        for b in 0..panel[0].len() {
            for &r in &free {
                point[r] = panel[r][b];
            }
            let (mut s_lo, mut s_hi) = (0.0, 0.0);
            visit_cube(self.cutoff, free.len(), |j| {
                for (&r, &v) in free.iter().zip(j) {
                    index[r] = v;
                }
                let h = self.family.eval(&index, &point);
                let w = (h * h).min(1.0);
                if w > 0.0 {
                    match self.member(l - 1, &index, &point) {
                        Membership::In => {
                            s_lo += w;
                            s_hi += w;
                        }
                        Membership::Unknown => s_hi += w,
                        Membership::Out => {}
                    }
                }
                true
            });
            lo.push(s_lo);
            hi.push(s_hi);
        }
        Bracket { lo: lo.estimate(), hi: hi.estimate() }
    }
}

pub fn theorem6_check(family: &dyn KernelFamily, dists: &[&dyn Distribution], config: &SeriesConfig) -> Result<SeriesReport> {
    let d = family.arity();
    if dists.len() != d {
        return Err(Error::ArityMismatch { expected: d, found: dists.len() });
    }
    if config.panel < 2 || config.inner < 2 {
        return Err(Error::InvalidArgument("panels need at least 2 draws".into()));
    }
    let (cutoff, tail) = resolve_cutoff(family, config.certificate)?;
    let panels: Vec<Vec<Vec<f64>>> = (0..d)
        .map(|l| {
            let mut rng = task_rng(config.seed, &[tag::SERIES, 6, l as u64]);
            dists.iter().map(|dist| draw_panel(*dist, config.inner, &mut rng)).collect()
        })
        .collect();
    let mut rng = task_rng(config.seed, &[tag::SERIES, 6, u64::MAX]);
    let outer: Vec<Vec<f64>> = dists.iter().map(|dist| draw_panel(*dist, config.panel, &mut rng)).collect();
    let rec = Recursion { family, dists, d, cutoff, sigmas: config.sigmas, panels, memo: Mutex::new(HashMap::new()) };
    let m = config.panel;

    let mut c2 = Vec::new();
    let mut flagged = 0;
    let mut c1_finite = true;
    for l in 1..d {
        for sub in IndexSubset::of_size(d, l) {
            let slots: Vec<usize> = sub.members().collect();
            let mut idxs = Vec::new();
            visit_cube(cutoff, l, |j| {
                idxs.push(j.to_vec());
                true
            });
            let rows: Vec<(IndexTerm, usize, bool)> = idxs
                .par_iter()
                .map(|idx| {
                    let (mut sure, mut maybe, mut unknown, mut finite) = (0u64, 0u64, 0usize, true);
                    for a in 0..m {
                        let vals: Vec<f64> = slots.iter().map(|&r| outer[r][a]).collect();
                        let c = rec.c(sub, idx, &vals);
                        finite &= c.lo.value.is_finite() && c.hi.value.is_finite();
                        match rec.compare(c) {
                            Membership::Out => {
                                sure += 1;
                                maybe += 1;
                            }
                            Membership::Unknown => {
                                maybe += 1;
                                unknown += 1;
                            }
                            Membership::In => {}
                        }
                    }
                    let p = proportion(sure, m as u64);
                    (IndexTerm { index: idx.clone(), value: p.value, err: p.std_err, lo: p.value, hi: maybe as f64 / m as f64 }, unknown, finite)
                })
                .collect();
            flagged += rows.iter().map(|r| r.1).sum::<usize>();
            c1_finite &= rows.iter().all(|r| r.2);
            let terms: Vec<IndexTerm> = rows.into_iter().map(|r| r.0).collect();
            c2.push(block_report(format!("C2{sub}"), &terms, cutoff, &config.verdict));
        }
    }

    let mut idxs = Vec::new();
    visit_cube(cutoff, d, |j| {
        idxs.push(j.to_vec());
        true
    });
    let index_terms: Vec<(IndexTerm, bool)> = idxs
        .par_iter()
        .map(|idx| {
            if family.vanishes(idx) {
                return (IndexTerm { index: idx.clone(), value: 0.0, err: 0.0, lo: 0.0, hi: 0.0 }, true);
            }
            let mut lo = Welford::new();
            let mut hi = 0.0;
            let mut finite = true;
            let mut point = vec![0.0; d];
            for a in 0..m {
                for r in 0..d {
                    point[r] = outer[r][a];
                }
                let h = family.eval(idx, &point);
                finite &= h.is_finite();
                let w = (h * h).min(1.0);
                let mem = if w > 0.0 { rec.member(d - 1, idx, &point) } else { Membership::Out };
                lo.push(if mem == Membership::In { w } else { 0.0 });
                if mem != Membership::Out {
                    hi += w;
                }
            }
            let e = lo.estimate();
            (IndexTerm { index: idx.clone(), value: e.value, err: e.std_err, lo: e.value, hi: hi / m as f64 }, finite)
        })
        .collect();
    c1_finite &= index_terms.iter().all(|t| t.1);
    let index_terms: Vec<IndexTerm> = index_terms.into_iter().map(|t| t.0).collect();
    let c3 = block_report("C3", &index_terms, cutoff, &config.verdict);
    let partial_sums = if config.replicates > 0 { Some(simulate_partial_sums(family, dists, cutoff, config.replicates, config.seed)?) } else { None };
    let verdict = SeriesReport::combine(c1_finite, &c2, &c3);
    Ok(SeriesReport {
        family: family.name(),
        d,
        cutoff,
        tail_bound: tail,
        c1_finite,
        c2,
        c3_total: total(&index_terms),
        c3,
        index_terms,
        flagged,
        partial_sums,
        verdict,
    })
}
