//! Compares the product condition, condition (C) and the two-dimensional
//! conditions for the product kernel with symmetric Pareto samples.
//!
//! ```bash
//! cargo run --release -p slln-lab --example cross_check -- 1.2
//! ```

use slln_lab::conditions::{condition_c_terms, dim2_terms, zprod_all, ConditionCConfig, Coupling, Dim2Config, VerdictConfig, ZprodEstimator};
use slln_lab::model::{Builtin, Normalizer, Product};

fn main() -> slln_lab::Result<()> {
    let p: f64 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(1.2);
    let k_max: u32 = std::env::args().nth(2).and_then(|a| a.parse().ok()).unwrap_or(12);
    let dist = Builtin::pareto(p)?;
    let gamma = Normalizer::power(2.0 / p);
    let kernel = Product::new(2);
    let verdict = VerdictConfig::default();

    let mut reports = zprod_all(&dist, &gamma, 2, 1..=k_max, ZprodEstimator::Quadrature, 1, &verdict)?;
    let c_cfg = ConditionCConfig { replicates: 1000, seed: 1, ..Default::default() };
    reports.push(condition_c_terms(&kernel, &dist, &gamma, 1..=k_max, Coupling::Coupled, &c_cfg)?);
    let (sub1, sub2) = dim2_terms(&kernel, &dist, &gamma, 1..=k_max, &Dim2Config { seed: 1, ..Default::default() })?;
    reports.push(sub1);
    reports.push(sub2);

    println!("pareto p = {p}, gamma_n = n^{:.4}", 2.0 / p);
    for r in &reports {
        let terms: Vec<String> = r.terms.iter().map(|t| format!("{:.3}", t.value)).collect();
        println!("{:<14} {:<12} [{}]", r.condition, r.verdict.to_string(), terms.join(", "));
    }
    Ok(())
}
