//! The B/C decomposition of a region at scale n, with the containment
//! check between hits of the region and hits of the pieces.
//!
//! ```bash
//! cargo run --release -p slln-lab --example decomposition
//! ```

use slln_lab::conditions::{theorem3_decompose, BoxRegion, IntroRegion, Region, Theorem3Config};
use slln_lab::model::Builtin;

fn main() -> slln_lab::Result<()> {
    let regions: Vec<Box<dyn Region>> = vec![Box::new(IntroRegion { a: 0.3, b: 0.01 }), Box::new(BoxRegion { d: 3, width: 0.05 })];
    for region in &regions {
        println!("{}", region.name());
        for k in 2..=6 {
            let level = theorem3_decompose(region.as_ref(), &Builtin::Uniform01, 1 << k, &Theorem3Config { seed: k as u64, ..Default::default() })?;
            let b: Vec<String> = level.b_terms.iter().map(|t| format!("B{}={:.3}", t.subset, t.probability.value)).collect();
            println!(
                "  n=2^{k} {} C1={:.3}±{:.3} containment violations {}",
                b.join(" "),
                level.c1_term.value,
                level.c1_term.std_err,
                level.containment_violations
            );
        }
    }
    Ok(())
}
