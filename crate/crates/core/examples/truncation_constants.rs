//! Truncation constants c_n at dyadic n and the tail bound
//! P(X² > c²_{2^k}) ≤ 2^{-k} for each built-in distribution.
//!
//! ```bash
//! cargo run --release -p slln-lab --example truncation_constants
//! ```

use slln_lab::model::{Builtin, Distribution};
use slln_lab::truncation::{solve_cn_auto, truncated_tail_bound_check};

fn main() -> slln_lab::Result<()> {
    let dists = [Builtin::Rademacher, Builtin::Uniform, Builtin::pareto(1.2)?, Builtin::pareto(0.8)?, Builtin::PointMass0];
    for dist in &dists {
        println!("{}", dist.name());
        for k in [1, 4, 8, 12, 16, 20] {
            let n = 1u64 << k;
            let sol = solve_cn_auto(dist, n, 100_000, 1)?;
            let tail = truncated_tail_bound_check(dist, k, 100_000, 1)?;
            println!(
                "  n=2^{k:<2} c_n={:<12.6} residual={:.1e} {:<16} P(X²>c²)={:.3e} ≤ {:.3e}: {}",
                sol.c_n, sol.residual, sol.method.to_string(), tail.probability.value, tail.bound, tail.holds
            );
        }
    }
    Ok(())
}
