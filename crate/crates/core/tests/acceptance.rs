//! Acceptance criteria, one test each. Every test prints a single
//! `PASS`/`FAIL` line before asserting.

use std::process::Command;
use std::time::{Duration, Instant};

use slln_lab::conditions::{
    condition_c_terms, dim2_terms, dim2_verdict, zprod_all, ConditionCConfig, Coupling, Dim2Config, Membership, MembershipOracle, OracleConfig, Verdict, VerdictConfig,
    ZprodEstimator,
};
use slln_lab::engine::{run_path, PathMode, PathOptions};
use slln_lab::inequalities::{box_hit_exact, d1_max_sweep, intro_example_exact, log_grid, random_instances, verify_lemma, verify_section_lemma, LemmaConfig, Sampling, SectionLemmaConfig};
use slln_lab::model::{Builtin, Distribution, Normalizer, Product};
use slln_lab::seeds::derive_seed;
use slln_lab::series::{theorem5_check, theorem6_check, three_series_d1, FnFamily, ProductFamily, SeriesConfig};
use slln_lab::truncation::{solve_cn, truncated_tail_bound_check};

const SIGMAS: f64 = 3.0;

fn report(id: u32, ok: bool, detail: String) {
    println!("{} criterion {id}: {detail}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "criterion {id}: {detail}");
}

fn within(start: Instant, limit: Duration) -> String {
    format!("{:.2}s of {}s", start.elapsed().as_secs_f64(), limit.as_secs())
}

#[test]
fn criterion_01_d1_max_inequality() {
    let start = Instant::now();
    let qs = log_grid(0.001, 0.9, 20);
    let sweep = d1_max_sweep(&qs, 1..=100u64).unwrap();
    let limit = Duration::from_secs(1);
    let ok = sweep.points == 2000 && sweep.violations == 0 && start.elapsed() < limit;
    report(
        1,
        ok,
        format!(
            "{} points, {} violations, worst margins lower {:.3e} upper {:.3e}, {}",
            sweep.points,
            sweep.violations,
            sweep.worst_lower_margin,
            sweep.worst_upper_margin,
            within(start, limit)
        ),
    );
}

#[test]
fn criterion_02_lemma_margins() {
    let start = Instant::now();
    let mut violations = 0;
    let mut checked = 0;
    let mut failing_hypotheses = 0;
    for d in 1..=3 {
        let instances = random_instances(d, 32, 200, 2024 + d as u64).unwrap();
        for mode in [Sampling::Decoupled, Sampling::Coupled] {
            for (i, f) in instances.iter().enumerate() {
                let cfg = LemmaConfig { replicates: 10_000, seed: derive_seed(7, &[d as u64, i as u64]), ..LemmaConfig::default() };
                let r = verify_lemma(f, mode, &cfg).unwrap();
                failing_hypotheses += usize::from(!r.hypotheses_hold());
                violations += usize::from(r.moment_violated(SIGMAS)) + usize::from(r.pz_violated(SIGMAS));
                checked += 1;
            }
        }
    }
    let limit = Duration::from_secs(300);
    let ok = violations == 0 && failing_hypotheses == 0 && start.elapsed() < limit;
    report(2, ok, format!("{checked} instance checks, {failing_hypotheses} outside the hypotheses, {violations} 3-sigma violations, {}", within(start, limit)));
}

#[test]
fn criterion_03_section_lemma() {
    let start = Instant::now();
    let mut lines = Vec::new();
    let (mut violations, mut disagreements) = (0, 0);
    for d in [2, 3] {
        for n in [4, 8, 16] {
            for mode in [Sampling::Decoupled, Sampling::Coupled] {
                let region = slln_lab::conditions::BoxRegion { d, width: 1.0 / n as f64 };
                let cfg = SectionLemmaConfig { seed: derive_seed(3, &[d as u64, n as u64]), ..SectionLemmaConfig::default() };
                let c = verify_section_lemma(&region, &Builtin::Uniform01, n, mode, &cfg).unwrap();
                let exact = box_hit_exact(n, d, 1.0 / n as f64, mode);
                let z = (c.probability.value - exact) / c.probability.std_err;
                violations += usize::from(!c.hypothesis_holds() || c.margin.value < 0.0 || c.violated(SIGMAS));
                disagreements += usize::from(z.abs() > SIGMAS);
                lines.push(format!("d={d} n={n} {mode}: margin {:.4} z {:+.2}", c.margin.value, z));
            }
        }
    }
    for l in &lines {
        println!("  {l}");
    }
    let limit = Duration::from_secs(60);
    let ok = violations == 0 && disagreements == 0 && start.elapsed() < limit;
    report(3, ok, format!("{violations} bound violations, {disagreements} exact/simulation disagreements, {}", within(start, limit)));
}

#[test]
fn criterion_04_intro_counterexample() {
    let start = Instant::now();
    let mut worst_error: f64 = 0.0;
    let mut worst_error_n = 0;
    for n in 1..=10_000u64 {
        let a = 1.0 / n as f64;
        let e = intro_example_exact(a, a, n).unwrap();
        if e.product_error() > worst_error {
            worst_error = e.product_error();
            worst_error_n = n;
        }
    }
    let mut worst_ratio: f64 = 0.0;
    for n in 100..=10_000u64 {
        let e = intro_example_exact(1.0, 1.0 / n as f64, n).unwrap();
        worst_ratio = worst_ratio.max(e.sum_ratio());
    }
    let limit = Duration::from_secs(1);
    let ok = worst_error <= 1.0 && worst_ratio < 0.25 && start.elapsed() < limit;
    report(
        4,
        ok,
        format!(
            "max product error {worst_error:.4} (at n={worst_error_n}, required ≤ 1); max ratio over n ≥ 100 {worst_ratio:.4} (required < 0.25); {}",
            within(start, limit)
        ),
    );
}

#[test]
fn criterion_05_cn() {
    let start = Instant::now();
    let mut worst_rad: f64 = 0.0;
    let mut rad_exact = true;
    for k in 0..=20 {
        let n = 1u64 << k;
        let s = solve_cn(&Builtin::Rademacher, n).unwrap();
        rad_exact &= s.c_n == (n as f64).sqrt();
        worst_rad = worst_rad.max(s.residual);
    }
    // Independent closed form of n·E(X²/c² ∧ 1) for X uniform on [−1, 1].
    let phi = |n: f64, c: f64| if c <= 1.0 { n * (1.0 - 2.0 * c / 3.0) } else { n / (3.0 * c * c) };
    let mut worst_uni: f64 = 0.0;
    let mut monotone = true;
    let mut prev = 0.0;
    for n in 1..=(1u64 << 20) {
        if n > 4096 && !n.is_power_of_two() && n % 997 != 0 {
            continue;
        }
        let s = solve_cn(&Builtin::Uniform, n).unwrap();
        let r = if n == 1 { s.residual } else { (phi(n as f64, s.c_n) - 1.0).abs() };
        worst_uni = worst_uni.max(r);
        monotone &= s.c_n >= prev;
        prev = s.c_n;
    }
    let limit = Duration::from_secs(10);
    let ok = rad_exact && worst_rad < 1e-12 && worst_uni < 1e-6 && monotone && start.elapsed() < limit;
    report(5, ok, format!("Rademacher c_n = √n: {rad_exact}, residual {worst_rad:.1e}; uniform residual {worst_uni:.1e}; monotone {monotone}; {}", within(start, limit)));
}

#[test]
fn criterion_06_truncated_tail_bound() {
    let dists = [Builtin::Rademacher, Builtin::Uniform, Builtin::Uniform01, Builtin::pareto(0.8).unwrap(), Builtin::pareto(1.2).unwrap(), Builtin::pareto(2.5).unwrap(), Builtin::PointMass0];
    let mut failures = Vec::new();
    let mut checked = 0;
    for dist in &dists {
        for k in 1..=20 {
            let c = truncated_tail_bound_check(dist, k, 10_000, 1).unwrap();
            checked += 1;
            if !(c.holds && c.probability.is_exact() && c.probability.value <= c.bound) {
                failures.push(format!("{} k={k}: {} > {}", dist.name(), c.probability.value, c.bound));
            }
        }
    }
    report(6, failures.is_empty(), format!("{checked} exact checks over {} built-ins, failures: {failures:?}", dists.len()));
}

fn combine(vs: impl IntoIterator<Item = Verdict>) -> Verdict {
    let v: Vec<Verdict> = vs.into_iter().collect();
    if v.contains(&Verdict::Divergent) {
        Verdict::Divergent
    } else if v.iter().all(|&x| x == Verdict::Summable) {
        Verdict::Summable
    } else {
        Verdict::Inconclusive
    }
}

#[test]
fn criterion_07_cross_theorem_consistency() {
    let start = Instant::now();
    let kernel = Product::new(2);
    let verdict = VerdictConfig::default();
    let mut ok = true;
    let mut parts = Vec::new();
    for p in [0.8, 1.2] {
        let dist = Builtin::pareto(p).unwrap();
        let seq = Normalizer::power(2.0 / p);
        let zprod = zprod_all(&dist, &seq, 2, 1..=12, ZprodEstimator::Auto { budget: 1_000_000 }, 11, &verdict).unwrap();
        let z = combine(zprod.iter().map(|r| r.verdict));
        let cfg = ConditionCConfig { replicates: 1000, oracle: OracleConfig { budget: 1 << 14, ..OracleConfig::default() }, seed: 12, verdict };
        let c = condition_c_terms(&kernel, &dist, &seq, 1..=12, Coupling::Coupled, &cfg).unwrap();
        let dcfg = Dim2Config { budget: 1_000_000, seed: 13, ..Dim2Config::default() };
        let (sub1, sub2) = dim2_terms(&kernel, &dist, &seq, 1..=12, &dcfg).unwrap();
        let dim2 = dim2_verdict(&sub1, &sub2);
        let agree = z.is_conclusive() && z == c.verdict && z == dim2;
        ok &= agree;
        parts.push(format!("p={p}: zprod {z}, C {}, dim2 {dim2} (sub1 {}, sub2 {})", c.verdict, sub1.verdict, sub2.verdict));
    }
    let limit = Duration::from_secs(900);
    ok &= start.elapsed() < limit;
    report(7, ok, format!("{}; {}", parts.join("; "), within(start, limit)));
}

#[test]
fn criterion_08_bounded_kernel_regime() {
    let start = Instant::now();
    let kernel = Product::new(2);
    let seq = Normalizer::power(2.0);
    let mut outside = 0;
    let mut nonzero_terms = 0;
    let mut worst_path: f64 = 0.0;
    for dist in [Builtin::Rademacher, Builtin::Uniform] {
        for k in 1..=10 {
            let oracle = MembershipOracle::new(&kernel, &dist, &seq, k, OracleConfig::default()).unwrap();
            let pts = dist.sample_vec(derive_seed(8, &[k as u64]), 400);
            for pair in pts.chunks(2) {
                outside += usize::from(oracle.member(2, pair) != Membership::In);
            }
        }
        let cfg = ConditionCConfig { replicates: 200, seed: 8, ..ConditionCConfig::default() };
        for coupling in [Coupling::Coupled, Coupling::Decoupled] {
            let r = condition_c_terms(&kernel, &dist, &seq, 1..=10, coupling, &cfg).unwrap();
            nonzero_terms += r.terms.iter().filter(|t| t.value != 0.0 || t.hi != 0.0).count();
        }
        for mode in [PathMode::A, PathMode::Apr, PathMode::B, PathMode::Bpr] {
            for seed in 0..100 {
                let path = run_path(&kernel, &dist, &seq, mode, 10, seed, PathOptions::default()).unwrap();
                worst_path = worst_path.max(path.checkpoints.last().unwrap().value.abs());
            }
        }
    }
    let limit = Duration::from_secs(120);
    let ok = outside == 0 && nonzero_terms == 0 && worst_path < 0.01 && start.elapsed() < limit;
    report(8, ok, format!("{outside} points outside A_k,d; {nonzero_terms} nonzero (C)/(Cpr) terms; max |path| at n=1024 over 100 seeds {worst_path:.2e}; {}", within(start, limit)));
}

#[test]
fn criterion_09_series() {
    let start = Instant::now();
    let cfg = SeriesConfig { panel: 256, inner: 256, replicates: 100, seed: 9, ..SeriesConfig::default() };
    let rad: &dyn Distribution = &Builtin::Rademacher;

    let geo = ProductFamily::parse("geometric", 2, Some(64)).unwrap();
    let g = theorem5_check(&geo, rad, rad, &cfg).unwrap();
    let stable = g.partial_sums.as_ref().and_then(|p| p.stabilized_at(1e-6));
    let geo_ok = g.verdict == Verdict::Summable && stable.is_some_and(|n0| n0 <= 30);

    let constant = ProductFamily::parse("constant:1", 2, Some(64)).unwrap();
    let c = theorem5_check(&constant, rad, rad, &cfg).unwrap();
    let const_ok = c.verdict == Verdict::Divergent;

    let mut diag_ok = true;
    for s in [1.0, 0.5] {
        let diag = ProductFamily::parse(&format!("diagonal:{s}"), 2, Some(256)).unwrap();
        let two = theorem5_check(&diag, rad, rad, &cfg).unwrap();
        // X_i·Y_i is again a Rademacher sign.
        let line = FnFamily::new(1, "diagonal line", Some(256), move |i: &[usize], x: &[f64]| x[0] * (i[0] as f64).powf(-s));
        let one = three_series_d1(&line, rad, &cfg).unwrap();
        diag_ok &= two.verdict == one.verdict;
    }

    let uni: &dyn Distribution = &Builtin::Uniform;
    let opaque = FnFamily::new(1, "harmonic (opaque)", Some(64), |i: &[usize], x: &[f64]| 3.0 * x[0] / i[0] as f64);
    let six = theorem6_check(&opaque, &[uni], &SeriesConfig { panel: 2000, ..cfg }).unwrap();
    let three = three_series_d1(&opaque, uni, &SeriesConfig { panel: 2000, ..cfg }).unwrap();
    let mut collapse_bad = 0;
    for (a, b) in six.index_terms.iter().zip(&three.index_terms) {
        let err = a.err.hypot(b.err);
        collapse_bad += usize::from((a.value - b.value).abs() > SIGMAS * err + 1e-12);
    }
    let collapse_ok = collapse_bad == 0 && six.index_terms.len() == three.index_terms.len() && six.verdict == three.verdict;

    let limit = Duration::from_secs(120);
    let ok = geo_ok && const_ok && diag_ok && collapse_ok && start.elapsed() < limit;
    report(
        9,
        ok,
        format!(
            "geometric {} (stable from n={stable:?}); constant {}; diagonal agrees {diag_ok}; d=1 collapse mismatches {collapse_bad}; {}",
            g.verdict,
            c.verdict,
            within(start, limit)
        ),
    );
}

#[test]
fn criterion_10_determinism_across_workers() {
    let bin = env!("CARGO_BIN_EXE_slln-lab");
    let dir = std::env::temp_dir().join(format!("slln-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let runs: &[&[&str]] = &[
        &["verify", "--lemma", "d1max"],
        &["verify", "--lemma", "lemma1", "--d", "2", "--trials", "30", "--replicates", "2000"],
        &["verify", "--lemma", "lemma2", "--d", "3", "--trials", "30", "--replicates", "2000"],
        &["verify", "--lemma", "section", "--replicates", "2000"],
        &["verify", "--lemma", "intro"],
        &["cn", "--dist", "uniform", "--kmax", "20"],
        &["conditions", "--theorem", "1", "--dist", "pareto:1.2", "--gamma", "poly:2/1.2", "--kmax", "8"],
        &["conditions", "--theorem", "2", "--dist", "pareto:0.8", "--gamma", "poly:2/0.8", "--kmax", "6", "--replicates", "100", "--budget", "2048"],
        &["conditions", "--theorem", "3", "--region", "intro:0.3:0.01", "--kmax", "5", "--replicates", "50", "--budget", "2048"],
        &["conditions", "--theorem", "4", "--dist", "pareto:1.2", "--gamma", "poly:2/1.2", "--kmax", "6", "--budget", "20000", "--panel", "200"],
        &["path", "--kmax", "8", "--replicates", "4", "--dist", "uniform"],
        &["series", "--dim", "2", "--family", "geometric", "--cutoff", "32", "--budget", "64", "--replicates", "20"],
        &["series", "--dim", "3", "--family", "harmonic", "--cutoff", "8", "--budget", "32", "--replicates", "10"],
    ];
    let mut differing = Vec::new();
    for (i, args) in runs.iter().enumerate() {
        let mut outputs = Vec::new();
        for workers in ["1", "4"] {
            let out = dir.join(format!("run{i}-w{workers}.csv"));
            let status = Command::new(bin).args(*args).args(["--seed", "42", "--workers", workers, "--out"]).arg(&out).stderr(std::process::Stdio::null()).status().unwrap();
            assert_ne!(status.code(), Some(1), "{args:?} failed");
            outputs.push(std::fs::read(&out).unwrap());
        }
        if outputs[0] != outputs[1] || outputs[0].is_empty() {
            differing.push(args.join(" "));
        }
    }
    let _ = std::fs::remove_dir_all(&dir);
    report(10, differing.is_empty(), format!("{} runs compared at 1 and 4 workers, differing: {differing:?}", runs.len()));
}
