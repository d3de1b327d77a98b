//! Normalized paths of the five statistics for one kernel and sample law.
//!
//! ```bash
//! cargo run --release -p slln-lab --example paths -- pareto:1.2 poly:2/1.2
//! ```

use slln_lab::engine::{run_path, PathMode, PathOptions};
use slln_lab::model::{Builtin, Normalizer, Product};

fn main() -> slln_lab::Result<()> {
    let mut args = std::env::args().skip(1);
    let dist = Builtin::parse(&args.next().unwrap_or_else(|| "uniform".into()))?;
    let gamma = Normalizer::parse(&args.next().unwrap_or_else(|| "poly:2".into()))?;
    let kernel = Product::new(2);
    for mode in PathMode::ALL {
        let path = run_path(&kernel, &dist, &gamma, mode, 14, 3, PathOptions::default())?;
        let values: Vec<String> = path.checkpoints.iter().step_by(2).map(|c| format!("{:.2e}", c.value)).collect();
        println!("{mode:<4} {}", values.join(" "));
    }
    Ok(())
}
