//! The two-dimensional criterion built from
//! c_i(x) = Σ_j E_Y(h_{ij}(x, Y_j)² ∧ 1) and d_j(y) = Σ_i E_X(h_{ij}(X_i, y)² ∧ 1).

use rayon::prelude::*;

use super::{
    at_most_one, block_report, draw_panel, resolve_cutoff, simulate_partial_sums, total, IndexTerm, KernelFamily, SeriesConfig, SeriesReport,
};
use crate::conditions::Membership;
use crate::error::{Error, Result};
use crate::estimate::{proportion, Estimate, Welford};
use crate::indexing::IndexSubset;
use crate::model::Distribution;
use crate::seeds::{tag, task_rng};

/// Σ over the other axis of E(h² ∧ 1) with slot `axis` fixed at index
/// `index` and value `value`. Exact when the family has closed forms,
/// otherwise averaged over `panel` (one panel shared by all terms).
pub(crate) fn axis_sum(family: &dyn KernelFamily, axis: usize, index: usize, value: f64, other: &dyn Distribution, cutoff: usize, panel: &[f64]) -> Estimate {
    let fixed = IndexSubset::from_positions(&[axis], 2);
    let idx = |j: usize| if axis == 0 { [index, j] } else { [j, index] };
    let exact: Option<f64> = (1..=cutoff).map(|j| family.capped_moment(&idx(j), fixed, &[value], other)).sum();
    if let Some(v) = exact {
        return Estimate::exact(v);
    }
    let mut w = Welford::new();
    let mut point = [0.0; 2];
    point[axis] = value;
    for &y in panel {
        point[1 - axis] = y;
        let s: f64 = (1..=cutoff)
            .map(|j| {
                let h = family.eval(&idx(j), &point);
                (h * h).min(1.0)
            })
            .sum();
        w.push(s);
    }
    w.estimate()
}

fn check_two(family: &dyn KernelFamily) -> Result<()> {
    if family.arity() != 2 {
        return Err(Error::ArityMismatch { expected: 2, found: family.arity() });
    }
    Ok(())
}

/// c_i(x), with inner expectations over `config.inner` draws of Y when no
/// closed form exists.
pub fn c_function(family: &dyn KernelFamily, i: usize, x: f64, dist_y: &dyn Distribution, config: &SeriesConfig) -> Result<Estimate> {
    check_two(family)?;
    let (cutoff, _) = resolve_cutoff(family, config.certificate)?;
    let panel = draw_panel(dist_y, config.inner, &mut task_rng(config.seed, &[tag::SERIES, 2, 1]));
    Ok(axis_sum(family, 0, i, x, dist_y, cutoff, &panel))
}

/// d_j(y), symmetric to [`c_function`].
pub fn d_function(family: &dyn KernelFamily, j: usize, y: f64, dist_x: &dyn Distribution, config: &SeriesConfig) -> Result<Estimate> {
    check_two(family)?;
    let (cutoff, _) = resolve_cutoff(family, config.certificate)?;
    let panel = draw_panel(dist_x, config.inner, &mut task_rng(config.seed, &[tag::SERIES, 2, 0]));
    Ok(axis_sum(family, 1, j, y, dist_x, cutoff, &panel))
}

/// Per-index probabilities P(c(X) > 1) over the outer panel.
fn exceedance_terms(members: &[Vec<Membership>]) -> Vec<IndexTerm> {
    members
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let m = row.len() as u64;
            let sure = row.iter().filter(|&&v| v == Membership::Out).count() as u64;
            let maybe = row.iter().filter(|&&v| v != Membership::In).count() as u64;
            let p = proportion(sure, m);
            IndexTerm { index: vec![i + 1], value: p.value, err: p.std_err, lo: p.value, hi: maybe as f64 / m as f64 }
        })
        .collect()
}

pub fn theorem5_check(family: &dyn KernelFamily, dist_x: &dyn Distribution, dist_y: &dyn Distribution, config: &SeriesConfig) -> Result<SeriesReport> {
    check_two(family)?;
    if config.panel < 2 || config.inner < 2 {
        return Err(Error::InvalidArgument("panels need at least 2 draws".into()));
    }
    let (cutoff, tail) = resolve_cutoff(family, config.certificate)?;
    let mut rng = task_rng(config.seed, &[tag::SERIES, 2, 2]);
    let xs = draw_panel(dist_x, config.panel, &mut rng);
    let ys = draw_panel(dist_y, config.panel, &mut rng);
    let x_in = draw_panel(dist_x, config.inner, &mut task_rng(config.seed, &[tag::SERIES, 2, 0]));
    let y_in = draw_panel(dist_y, config.inner, &mut task_rng(config.seed, &[tag::SERIES, 2, 1]));

    let cvals: Vec<Vec<Estimate>> = (1..=cutoff).into_par_iter().map(|i| xs.iter().map(|&x| axis_sum(family, 0, i, x, dist_y, cutoff, &y_in)).collect()).collect();
    let dvals: Vec<Vec<Estimate>> = (1..=cutoff).into_par_iter().map(|j| ys.iter().map(|&y| axis_sum(family, 1, j, y, dist_x, cutoff, &x_in)).collect()).collect();
    let c1_finite = cvals.iter().chain(&dvals).flatten().all(|e| e.value.is_finite());
    let classify = |v: &Vec<Vec<Estimate>>| -> Vec<Vec<Membership>> { v.iter().map(|row| row.iter().map(|&e| at_most_one(e, config.sigmas)).collect()).collect() };
    let cm = classify(&cvals);
    let dm = classify(&dvals);
    let flagged = cm.iter().chain(&dm).flatten().filter(|&&m| m == Membership::Unknown).count();

    let c2x = exceedance_terms(&cm);
    let c2y = exceedance_terms(&dm);
    let c2 = vec![
        block_report("C2[x]", &c2x, cutoff, &config.verdict),
        block_report("C2[y]", &c2y, cutoff, &config.verdict),
    ];

    let m = config.panel;
    let index_terms: Vec<IndexTerm> = (1..=cutoff)
        .into_par_iter()
        .flat_map_iter(|i| {
            let (xs, ys, cm, dm) = (&xs, &ys, &cm, &dm);
            (1..=cutoff).map(move |j| {
                if family.vanishes(&[i, j]) {
                    return IndexTerm { index: vec![i, j], value: 0.0, err: 0.0, lo: 0.0, hi: 0.0 };
                }
                let mut rows = Welford::new();
                let mut cols = vec![0.0; m];
                let (mut lo, mut hi) = (0.0, 0.0);
                for (a, &x) in xs.iter().enumerate() {
                    let ca = cm[i - 1][a];
                    let mut row = 0.0;
                    for (b, &y) in ys.iter().enumerate() {
                        let h = family.eval(&[i, j], &[x, y]);
                        let w = (h * h).min(1.0);
                        let db = dm[j - 1][b];
                        if ca == Membership::In && db == Membership::In {
                            row += w;
                            cols[b] += w;
                        }
                        if ca != Membership::Out && db != Membership::Out {
                            hi += w;
                        }
                    }
                    lo += row;
                    rows.push(row / m as f64);
                }
                let cols: Welford = cols.iter().map(|c| c / m as f64).collect();
                let mm = (m * m) as f64;
                let err = (rows.variance() / m as f64 + cols.variance() / m as f64).sqrt();
                IndexTerm { index: vec![i, j], value: lo / mm, err, lo: lo / mm, hi: hi / mm }
            })
        })
        .collect();
    let c3 = block_report("C3", &index_terms, cutoff, &config.verdict);
    let partial_sums = if config.replicates > 0 { Some(simulate_partial_sums(family, &[dist_x, dist_y], cutoff, config.replicates, config.seed)?) } else { None };
    let verdict = SeriesReport::combine(c1_finite, &c2, &c3);
    Ok(SeriesReport {
        family: family.name(),
        d: 2,
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conditions::Verdict;
    use crate::model::Builtin;
    use crate::series::{three_series_d1, FnFamily, ProductFamily};

    fn config() -> SeriesConfig {
        SeriesConfig { panel: 64, inner: 64, replicates: 25, ..Default::default() }
    }

    #[test]
    fn geometric_family_is_summable() {
        let fam = ProductFamily::parse("geometric", 2, Some(64)).unwrap();
        let r = theorem5_check(&fam, &Builtin::Uniform, &Builtin::Uniform, &config()).unwrap();
        assert!(r.c1_finite);
        assert_eq!(r.verdict, Verdict::Summable);
        // c_i(x) ≤ Σ_j 4^{−i−j} < 1, so no exceedances.
        assert!(r.c2.iter().all(|c| c.terms.iter().all(|t| t.value == 0.0)));
        let ps = r.partial_sums.unwrap();
        assert!(ps.stabilized_at(1e-6).unwrap() <= 30);
    }

    #[test]
    fn constant_family_diverges() {
        let fam = ProductFamily::parse("constant:1", 2, Some(64)).unwrap();
        let r = theorem5_check(&fam, &Builtin::Rademacher, &Builtin::Rademacher, &config()).unwrap();
        assert_eq!(r.verdict, Verdict::Divergent);
        // Every c_i equals N > 1, so the indicator removes everything.
        assert_eq!(r.c3_total.value, 0.0);
        assert_eq!(r.c2[0].terms.iter().map(|t| t.value).sum::<f64>(), 63.0);
        let ps = r.partial_sums.unwrap();
        assert_eq!(*ps.median_square_sum.last().unwrap(), 64.0 * 64.0);
    }

    #[test]
    fn diagonal_reduces_to_one_dimension() {
        for s in ["1", "0.5"] {
            let fam = ProductFamily::parse(&format!("diagonal:{s}"), 2, Some(256)).unwrap();
            let two = theorem5_check(&fam, &Builtin::Rademacher, &Builtin::Rademacher, &config()).unwrap();
            // X_i Y_i is again a sign, so the diagonal is Σ ε_i a_i with a_i = i^{−s}.
            let line = FnFamily::new(1, "diagonal line", Some(256), move |i: &[usize], x: &[f64]| x[0] * (i[0] as f64).powf(-s.parse::<f64>().unwrap()));
            let one = three_series_d1(&line, &Builtin::Rademacher, &config()).unwrap();
            assert_eq!(two.verdict, one.verdict, "s = {s}");
            assert!((two.c3_total.value - one.c3_total.value).abs() < 1e-9);
        }
    }

    #[test]
    fn c_function_against_quadrature() {
        // h_ij = xy/(ij), Y uniform on [−1, 1]: E((tY)² ∧ 1) = ∫_0^1 min(t²y², 1) dy.
        let fam = FnFamily::new(2, "harmonic (opaque)", Some(16), |i: &[usize], x: &[f64]| x[0] * x[1] / (i[0] * i[1]) as f64);
        let cfg = SeriesConfig { inner: 20_000, ..config() };
        let x = 7.5;
        let c = c_function(&fam, 1, x, &Builtin::Uniform, &cfg).unwrap();
        let simpson = |t: f64| {
            let m = 20_000;
            let h = 1.0 / m as f64;
            let f = |y: f64| (t * t * y * y).min(1.0);
            (0..m).map(|k| (f(k as f64 * h) + 4.0 * f((k as f64 + 0.5) * h) + f((k + 1) as f64 * h)) * h / 6.0).sum::<f64>()
        };
        let oracle: f64 = (1..=16).map(|j| simpson(x / j as f64)).sum();
        assert!((c.value - oracle).abs() < 3.0 * c.std_err, "{} vs {oracle}", c.value);
        let exact = ProductFamily::parse("harmonic", 2, Some(16)).unwrap();
        let e = c_function(&exact, 1, x, &Builtin::Uniform, &cfg).unwrap();
        assert!(e.is_exact());
        assert!((e.value - oracle).abs() < 1e-6);
        let d = d_function(&exact, 1, x, &Builtin::Uniform, &cfg).unwrap();
        assert_eq!(d.value, e.value);
    }

    #[test]
    fn zero_family_gives_zero() {
        let fam = ProductFamily::parse("constant:0", 2, Some(32)).unwrap();
        let c = c_function(&fam, 3, 0.4, &Builtin::Uniform, &config()).unwrap();
        assert_eq!(c.value, 0.0);
        let r = theorem5_check(&fam, &Builtin::Uniform, &Builtin::Uniform, &config()).unwrap();
        assert_eq!(r.verdict, Verdict::Summable);
    }

    #[test]
    fn capped_summands_lie_in_unit_interval() {
        let fam = ProductFamily::parse("constant:3", 2, Some(32)).unwrap();
        let cfg = config();
        let r = theorem5_check(&fam, &Builtin::Uniform, &Builtin::Uniform, &cfg).unwrap();
        assert!(r.index_terms.iter().all(|t| (0.0..=1.0).contains(&t.value)));
        assert!(r.c3.partial_sums.windows(2).all(|w| w[0] <= w[1]));
    }
}
