//! Convergence criteria for multi-indexed series on a few coefficient
//! families, in one, two and three dimensions. The three-dimensional
//! checks take a few minutes.
//!
//! ```bash
//! cargo run --release -p slln-lab --example series_criteria
//! ```

use slln_lab::model::{Builtin, Distribution};
use slln_lab::series::{theorem5_check, theorem6_check, three_series_d1, ProductFamily, SeriesConfig};

fn main() -> slln_lab::Result<()> {
    let rad: &dyn Distribution = &Builtin::Rademacher;
    let cfg = SeriesConfig { seed: 5, ..Default::default() };
    for spec in ["geometric", "harmonic", "diagonal:1", "diagonal:0.5", "constant:1"] {
        let one = three_series_d1(&ProductFamily::parse(spec, 1, Some(64))?, rad, &cfg)?;
        let two = theorem5_check(&ProductFamily::parse(spec, 2, Some(64))?, rad, rad, &cfg)?;
        let three = theorem6_check(&ProductFamily::parse(spec, 3, Some(63))?, &[rad, rad, rad], &SeriesConfig { panel: 32, inner: 32, replicates: 10, ..cfg })?;
        println!("{spec:<13} d=1 {:<12} d=2 {:<12} d=3 {}", one.verdict.to_string(), two.verdict.to_string(), three.verdict);
    }
    Ok(())
}
