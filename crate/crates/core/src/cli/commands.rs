//! One function per experiment kind, each producing a [`Table`].

use rayon::prelude::*;

use super::table::{num, Table};
use super::Settings;
use crate::conditions::{
    condition_c_terms, dim2_terms, dim2_verdict, theorem3_decompose, zprod_all, AkdComplement, BoxRegion, ConditionCConfig, ConditionReport, Coupling, Dim2Config,
    IntroRegion, MembershipOracle, OracleConfig, Region, Term, Theorem3Config, TrivialRegion, Verdict, VerdictConfig, ZprodEstimator,
};
use crate::engine::{run_path, PathMode, PathOptions};
use crate::error::{Error, Result};
use crate::inequalities::{
    box_hit_exact, d1_max_iid, intro_example_exact, log_grid, random_instances, verify_lemma, verify_section_lemma, LemmaConfig, Sampling, SectionLemmaConfig,
};
use crate::model::{certify_regularity, parse_kernel, Builtin, Normalizer, NormalizingSequence};
use crate::seeds::{derive_seed, tag};
use crate::series::{theorem5_check, theorem6_check, three_series_d1, ProductFamily, SeriesConfig, SeriesReport};
use crate::truncation::solve_cn_auto;

const SIGMAS: f64 = 3.0;

pub(super) fn dispatch(s: &Settings) -> Result<Table> {
    match s.experiment.as_deref().unwrap_or_default() {
        "path" => path(s),
        "conditions" => conditions(s),
        "verify" => verify(s),
        "series" => series(s),
        "cn" => cn(s),
        "regularity" => regularity(s),
        other => Err(Error::Config(format!("unknown experiment '{other}'"))),
    }
}

fn positive(name: &str, v: usize) -> Result<usize> {
    if v == 0 {
        return Err(Error::InvalidArgument(format!("{name} must be positive")));
    }
    Ok(v)
}

fn k_range(s: &Settings, default_max: u32) -> Result<(u32, u32)> {
    let k_min = s.k_min.unwrap_or(1);
    let k_max = s.k_max.unwrap_or(default_max);
    if k_min == 0 || k_min > k_max {
        return Err(Error::InvalidArgument(format!("need 1 ≤ kmin ≤ kmax, got {k_min}..{k_max}")));
    }
    Ok((k_min, k_max))
}

fn dist(s: &Settings, default: &str) -> Result<Builtin> {
    Builtin::parse(s.dist.as_deref().unwrap_or(default))
}

fn gamma(s: &Settings, d: usize) -> Result<Normalizer> {
    match &s.gamma {
        Some(g) => Normalizer::parse(g),
        None => Ok(Normalizer::power(d as f64)),
    }
}

fn push_report(table: &mut Table, report: &ConditionReport) {
    for (t, ps) in report.terms.iter().zip(&report.partial_sums) {
        table.push(vec![report.condition.clone(), t.k.to_string(), num(t.value), num(t.err), num(*ps)]);
    }
    table.note(report.summary_line());
    table.verdict(report.condition.clone(), report.verdict);
}

fn path(s: &Settings) -> Result<Table> {
    let d = s.d.unwrap_or(2);
    let kernel = parse_kernel(s.kernel.as_deref().unwrap_or("product"), d)?;
    let dist = dist(s, "rademacher")?;
    let seq = gamma(s, d)?;
    let (_, k_max) = k_range(s, 10)?;
    let replicates = positive("replicates", s.replicates.unwrap_or(1))?;
    let modes = match s.mode.as_deref().unwrap_or("all") {
        m if m.eq_ignore_ascii_case("all") => PathMode::ALL.to_vec(),
        m => vec![m.parse::<PathMode>()?],
    };
    let seed = s.seed();
    let runs: Vec<_> = modes.iter().flat_map(|&m| (0..replicates).map(move |r| (m, r))).collect();
    let results = runs
        .par_iter()
        .map(|&(mode, r)| run_path(kernel.as_ref(), &dist, &seq, mode, k_max, derive_seed(seed, &[tag::PATH, r as u64]), PathOptions::default()))
        .collect::<Result<Vec<_>>>()?;
    let mut table = Table::new(&["mode", "replicate", "k", "n", "value"]);
    for (&(mode, r), diag) in runs.iter().zip(&results) {
        for c in &diag.checkpoints {
            table.push(vec![mode.to_string(), r.to_string(), c.k.to_string(), c.n.to_string(), num(c.value)]);
        }
    }
    for &mode in &modes {
        let last: Vec<f64> = runs.iter().zip(&results).filter(|(run, _)| run.0 == mode).filter_map(|(_, d)| d.checkpoints.last()).map(|c| c.value.abs()).collect();
        let worst = last.iter().copied().fold(0.0, f64::max);
        table.note(format!("{mode}: max |value| at n = 2^{k_max} over {} paths = {worst}", last.len()));
    }
    table.meta("kernel", kernel.name());
    table.meta("dist", dist.to_string());
    table.meta("gamma", seq.describe());
    Ok(table)
}

fn conditions(s: &Settings) -> Result<Table> {
    let theorem = s.theorem.unwrap_or(1);
    let d = s.d.unwrap_or(2);
    let dist = dist(s, if theorem == 3 { "uniform01" } else { "rademacher" })?;
    let seq = gamma(s, d)?;
    let (k_min, k_max) = k_range(s, 10)?;
    let budget = positive("budget", s.budget.unwrap_or(100_000))?;
    let replicates = positive("replicates", s.replicates.unwrap_or(400))?;
    let seed = s.seed();
    let verdict = VerdictConfig::default();
    let mut table = Table::new(&["condition", "k", "term", "err", "partial_sum"]);
    match theorem {
        1 => {
            let reports = zprod_all(&dist, &seq, d, k_min..=k_max, ZprodEstimator::Auto { budget }, seed, &verdict)?;
            for r in &reports {
                push_report(&mut table, r);
            }
            table.verdict("Zprod", all_of(reports.iter().map(|r| r.verdict)));
        }
        2 => {
            let kernel = parse_kernel(s.kernel.as_deref().unwrap_or("product"), d)?;
            let oracle = OracleConfig { budget: budget.min(1 << 16), seed: derive_seed(seed, &[tag::ORACLE]), ..OracleConfig::default() };
            let cfg = ConditionCConfig { replicates, oracle, seed, verdict };
            for coupling in [Coupling::Coupled, Coupling::Decoupled] {
                let r = condition_c_terms(kernel.as_ref(), &dist, &seq, k_min..=k_max, coupling, &cfg)?;
                push_report(&mut table, &r);
            }
            table.meta("kernel", kernel.name());
        }
        3 => theorem3(s, &mut table, &dist, &seq, d, k_min, k_max, budget, replicates)?,
        4 => {
            let kernel = parse_kernel(s.kernel.as_deref().unwrap_or("product"), 2)?;
            let cfg = Dim2Config { budget, panel: s.panel.unwrap_or(1000), seed, verdict, ..Dim2Config::default() };
            let (sub1, sub2) = dim2_terms(kernel.as_ref(), &dist, &seq, k_min..=k_max, &cfg)?;
            push_report(&mut table, &sub1);
            push_report(&mut table, &sub2);
            table.verdict("dim2", dim2_verdict(&sub1, &sub2));
            table.meta("kernel", kernel.name());
        }
        t => return Err(Error::InvalidArgument(format!("--theorem must be 1, 2, 3 or 4, got {t}"))),
    }
    table.meta("theorem", theorem);
    table.meta("dist", dist.to_string());
    table.meta("gamma", seq.describe());
    Ok(table)
}

/// Divergent if any part diverges, summable if all are, else inconclusive.
fn all_of(verdicts: impl Iterator<Item = Verdict>) -> Verdict {
    let v: Vec<Verdict> = verdicts.collect();
    if v.contains(&Verdict::Divergent) {
        Verdict::Divergent
    } else if !v.is_empty() && v.iter().all(|&x| x == Verdict::Summable) {
        Verdict::Summable
    } else {
        Verdict::Inconclusive
    }
}

#[allow(clippy::too_many_arguments)]
fn theorem3(s: &Settings, table: &mut Table, dist: &Builtin, seq: &Normalizer, d: usize, k_min: u32, k_max: u32, budget: usize, replicates: usize) -> Result<()> {
    let spec = s.region.clone().unwrap_or_else(|| "akd".into());
    let parts: Vec<&str> = spec.split(':').collect();
    let num = |v: &str| v.parse::<f64>().map_err(|_| Error::UnknownBuiltin { kind: "region", name: spec.clone() });
    let kernel = parse_kernel(s.kernel.as_deref().unwrap_or("product"), d)?;
    let fixed: Option<Box<dyn Region>> = match parts.as_slice() {
        ["intro", a, b] => Some(Box::new(IntroRegion { a: num(a)?, b: num(b)? })),
        ["box", w] => Some(Box::new(BoxRegion { d, width: num(w)? })),
        ["empty"] => Some(Box::new(TrivialRegion { d, full: false })),
        ["full"] => Some(Box::new(TrivialRegion { d, full: true })),
        ["akd"] => None,
        _ => return Err(Error::UnknownBuiltin { kind: "region", name: spec.clone() }),
    };
    let seed = s.seed();
    let levels = (k_min..=k_max)
        .map(|k| {
            let cfg = Theorem3Config { budget: budget.min(1 << 14), measure_budget: budget, replicates, seed: derive_seed(seed, &[tag::THEOREM3, k as u64]), ..Default::default() };
            let n = 1u64 << k;
            match &fixed {
                Some(region) => theorem3_decompose(region.as_ref(), dist, n, &cfg),
                None => {
                    let oc = OracleConfig { budget: budget.min(1 << 14), seed: derive_seed(seed, &[tag::ORACLE, k as u64]), ..OracleConfig::default() };
                    let oracle = MembershipOracle::new(kernel.as_ref(), dist, seq, k, oc)?;
                    theorem3_decompose(&AkdComplement { oracle }, dist, n, &cfg)
                }
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let verdict = VerdictConfig::default();
    let subsets: Vec<String> = levels.first().map(|l| l.b_terms.iter().map(|b| b.subset.clone()).collect()).unwrap_or_default();
    let mut reports = Vec::new();
    for (idx, subset) in subsets.iter().enumerate() {
        let terms = (k_min..).zip(&levels).map(|(k, l)| term_with_bracket(k, &l.b_terms[idx])).collect();
        reports.push(ConditionReport::new(format!("B{subset}"), terms, &verdict));
    }
    let c1 = (k_min..).zip(&levels).map(|(k, l)| Term::new(k, l.c1_term.value, l.c1_term.std_err)).collect();
    reports.push(ConditionReport::new("C1", c1, &verdict));
    for r in &reports {
        push_report(table, r);
    }
    let violations: usize = levels.iter().map(|l| l.containment_violations).sum();
    let undecided: usize = levels.iter().map(|l| l.containment_undecided).sum();
    table.note(format!("containment: {violations} violations, {undecided} undecided replicates"));
    table.meta("region", spec);
    table.meta("containment_violations", violations);
    Ok(())
}

fn term_with_bracket(k: u32, b: &crate::conditions::theorem3::BTerm) -> Term {
    let mut t = Term::new(k, b.probability.value, b.probability.std_err);
    t.lo = b.lo;
    t.hi = b.hi;
    t.flagged = b.hi - b.lo > 0.5 * b.probability.value.max(1e-300);
    t
}

fn verify(s: &Settings) -> Result<Table> {
    let lemma = s.lemma.clone().unwrap_or_else(|| "lemma1".into());
    let seed = s.seed();
    let mut table = match lemma.as_str() {
        "d1max" => d1max(s)?,
        "lemma1" | "lemma2" => {
            let mode = if lemma == "lemma1" { Sampling::Decoupled } else { Sampling::Coupled };
            let d = s.d.unwrap_or(2);
            let n_max = s.n.unwrap_or(32);
            let trials = positive("trials", s.trials.unwrap_or(200))?;
            let replicates = positive("replicates", s.replicates.unwrap_or(10_000))?;
            let instances = random_instances(d, n_max, trials, seed)?;
            let results = instances
                .par_iter()
                .enumerate()
                .map(|(i, f)| {
                    let cfg = LemmaConfig { replicates, seed: derive_seed(seed, &[tag::LEMMA, i as u64]), ..LemmaConfig::default() };
                    verify_lemma(f, mode, &cfg)
                })
                .collect::<Result<Vec<_>>>()?;
            let mut table = Table::new(&[
                "instance", "d", "n", "mode", "hypotheses", "m1", "second_moment", "moment_bound", "moment_margin", "moment_err", "pz_probability", "pz_bound", "pz_margin", "pz_err",
                "violations",
            ]);
            let mut total = 0;
            for (i, r) in results.iter().enumerate() {
                let v = r.violations(SIGMAS);
                total += v;
                table.push(vec![
                    i.to_string(),
                    r.d.to_string(),
                    r.n.to_string(),
                    r.mode.to_string(),
                    r.hypotheses_hold().to_string(),
                    num(r.m1),
                    num(r.second_moment.value),
                    num(r.moment_bound),
                    num(r.moment_margin.value),
                    num(r.moment_margin.std_err),
                    num(r.pz_probability.value),
                    num(r.pz_bound),
                    num(r.pz_margin.value),
                    num(r.pz_margin.std_err),
                    v.to_string(),
                ]);
            }
            table.note(format!("{lemma}: {total} 3-sigma violations over {trials} instances"));
            table.meta("violations", total);
            table
        }
        "section" => section(s)?,
        "intro" => intro(s)?,
        other => return Err(Error::UnknownBuiltin { kind: "lemma", name: other.into() }),
    };
    table.meta("lemma", lemma);
    Ok(table)
}

fn d1max(s: &Settings) -> Result<Table> {
    let n_max = s.n.unwrap_or(100) as u64;
    let mut table = Table::new(&["q", "n", "union", "lower", "upper", "probability", "lower_margin", "upper_margin", "holds"]);
    let mut violations = 0;
    for q in log_grid(0.001, 0.9, 20) {
        for n in 1..=n_max {
            let b = d1_max_iid(q, n)?;
            violations += usize::from(!b.holds());
            table.push(vec![num(q), n.to_string(), num(b.union), num(b.lower), num(b.upper), num(b.probability), num(b.probability - b.lower), num(b.upper - b.probability), b.holds().to_string()]);
        }
    }
    table.note(format!("d1max: {violations} violations over {} points", table.rows.len()));
    table.meta("violations", violations);
    Ok(table)
}

fn section(s: &Settings) -> Result<Table> {
    let ds = s.d.map(|d| vec![d]).unwrap_or_else(|| vec![2, 3]);
    let ns = s.n.map(|n| vec![n]).unwrap_or_else(|| vec![4, 8, 16]);
    let replicates = positive("replicates", s.replicates.unwrap_or(10_000))?;
    let dist = Builtin::Uniform01;
    let seed = s.seed();
    let mut cases = Vec::new();
    for &d in &ds {
        for &n in &ns {
            for mode in [Sampling::Decoupled, Sampling::Coupled] {
                cases.push((d, n, mode));
            }
        }
    }
    let checks = cases
        .par_iter()
        .enumerate()
        .map(|(i, &(d, n, mode))| {
            let region = BoxRegion { d, width: 1.0 / n as f64 };
            let cfg = SectionLemmaConfig { replicates, seed: derive_seed(seed, &[tag::SECTION, i as u64]), ..SectionLemmaConfig::default() };
            verify_section_lemma(&region, &dist, n, mode, &cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut table = Table::new(&["d", "n", "mode", "worst_section", "measure", "bound", "probability", "err", "margin", "exact", "z_score"]);
    let (mut violations, mut disagreements) = (0, 0);
    for (&(d, n, mode), c) in cases.iter().zip(&checks) {
        let exact = box_hit_exact(n, d, 1.0 / n as f64, mode);
        let z = if c.probability.std_err > 0.0 { (c.probability.value - exact) / c.probability.std_err } else { 0.0 };
        violations += usize::from(c.violated(SIGMAS));
        disagreements += usize::from(z.abs() > SIGMAS);
        table.push(vec![
            d.to_string(),
            n.to_string(),
            mode.to_string(),
            num(c.worst_section),
            num(c.measure.value),
            num(c.bound),
            num(c.probability.value),
            num(c.probability.std_err),
            num(c.margin.value),
            num(exact),
            num(z),
        ]);
    }
    table.note(format!("section: {violations} bound violations, {disagreements} exact/simulation disagreements beyond 3 sigma"));
    table.meta("violations", violations);
    table.meta("disagreements", disagreements);
    Ok(table)
}

fn intro(s: &Settings) -> Result<Table> {
    let mut table = Table::new(&["family", "n", "a", "b", "p_hit", "product_approx", "product_error", "n2_mu", "sum_ratio"]);
    let push = |table: &mut Table, family: &str, a: f64, b: f64, n: u64| -> Result<()> {
        let e = intro_example_exact(a, b, n)?;
        table.push(vec![family.into(), n.to_string(), num(a), num(b), num(e.p_hit), num(e.product_approx), num(e.product_error()), num(e.n2_mu), num(e.sum_ratio())]);
        Ok(())
    };
    if let Some(spec) = &s.region {
        let bad = || Error::UnknownBuiltin { kind: "region", name: spec.clone() };
        let parts: Vec<&str> = spec.split(':').collect();
        let (a, b) = match parts.as_slice() {
            ["intro", a, b] => (a.parse::<f64>().map_err(|_| bad())?, b.parse::<f64>().map_err(|_| bad())?),
            _ => return Err(bad()),
        };
        push(&mut table, "fixed", a, b, s.n.unwrap_or(100) as u64)?;
        return Ok(table);
    }
    let n_max = s.n.unwrap_or(10_000) as u64;
    let mut ns: Vec<u64> = log_grid(1.0, n_max as f64, 41).into_iter().map(|v| v.round() as u64).collect();
    ns.dedup();
    for &n in &ns {
        push(&mut table, "a=b=1/n", 1.0 / n as f64, 1.0 / n as f64, n)?;
    }
    for &n in &ns {
        push(&mut table, "a=1,b=1/n", 1.0, 1.0 / n as f64, n)?;
    }
    Ok(table)
}

fn series(s: &Settings) -> Result<Table> {
    let d = s.d.unwrap_or(2);
    let family = ProductFamily::parse(s.family.as_deref().unwrap_or("geometric"), d, Some(s.cutoff.unwrap_or(64)))?;
    let dist = dist(s, "rademacher")?;
    let budget = positive("budget", s.budget.unwrap_or(256))?;
    let cfg = SeriesConfig { panel: s.panel.unwrap_or(budget), inner: budget, replicates: s.replicates.unwrap_or(100), seed: s.seed(), ..SeriesConfig::default() };
    let report = match d {
        0 => return Err(Error::InvalidArgument("--dim must be at least 1".into())),
        1 => three_series_d1(&family, &dist, &cfg)?,
        2 => theorem5_check(&family, &dist, &dist, &cfg)?,
        _ => {
            let dists: Vec<&dyn crate::model::Distribution> = vec![&dist; d];
            theorem6_check(&family, &dists, &cfg)?
        }
    };
    Ok(series_table(&report))
}

fn series_table(report: &SeriesReport) -> Table {
    let mut table = Table::new(&["index", "block", "value", "err", "lo", "hi"]);
    for t in &report.index_terms {
        let index = t.index.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(" ");
        table.push(vec![index, crate::series::block_of(&t.index).to_string(), num(t.value), num(t.err), num(t.lo), num(t.hi)]);
    }
    for r in report.c2.iter().chain(std::iter::once(&report.c3)) {
        table.note(r.summary_line());
        table.verdict(r.condition.clone(), r.verdict);
    }
    table.note(format!("C1 (finite c values): {}", report.c1_finite));
    table.note(format!("C3 total = {} ± {}", report.c3_total.value, report.c3_total.std_err));
    if let Some(ps) = &report.partial_sums {
        match ps.stabilized_at(1e-6) {
            Some(n0) => table.note(format!("median partial sums stable to 1e-6 from n = {n0}")),
            None => table.note("median partial sums not stable to 1e-6 within the cutoff"),
        }
    }
    table.verdict("series", report.verdict);
    table.meta("family", &report.family);
    table.meta("d", report.d);
    table.meta("cutoff", report.cutoff);
    table.meta("flagged", report.flagged);
    table
}

fn cn(s: &Settings) -> Result<Table> {
    let dist = dist(s, "uniform")?;
    let (k_min, k_max) = k_range(s, 20)?;
    let budget = positive("budget", s.budget.unwrap_or(200_000))?;
    let seed = s.seed();
    let sols = (k_min..=k_max)
        .into_par_iter()
        .map(|k| solve_cn_auto(&dist, 1u64 << k, budget, derive_seed(seed, &[tag::TRUNCATION, k as u64])))
        .collect::<Result<Vec<_>>>()?;
    let mut table = Table::new(&["n", "c_n", "residual", "method", "phi_std_err"]);
    for sol in &sols {
        table.push(vec![sol.n.to_string(), num(sol.c_n), num(sol.residual), sol.method.to_string(), sol.phi_std_err.map(num).unwrap_or_default()]);
    }
    let monotone = sols.windows(2).all(|w| w[1].c_n >= w[0].c_n);
    table.note(format!("c_n nondecreasing in n: {monotone}"));
    table.meta("dist", dist.to_string());
    Ok(table)
}

fn regularity(s: &Settings) -> Result<Table> {
    let d = s.d.unwrap_or(2);
    let seq = gamma(s, d)?;
    let (_, k_max) = k_range(s, 20)?;
    let report = certify_regularity(&seq, d, k_max)?;
    let mut table = Table::new(&["check", "pass", "constant", "detail"]);
    for (name, c) in [("nondecreasing", &report.nondecreasing), ("doubling", &report.doubling), ("tail_sum", &report.tail_sum)] {
        table.push(vec![name.into(), c.pass.to_string(), c.constant.map(num).unwrap_or_default(), c.detail.clone()]);
    }
    table.note(format!("{}: {}", report.sequence, if report.all_pass() { "certified regular" } else { "not certified" }));
    table.meta("gamma", seq.describe());
    table.meta("certified", report.all_pass());
    Ok(table)
}
