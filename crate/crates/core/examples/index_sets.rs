//! Walks the index sets used throughout: increasing tuples, the cube,
//! the tuples added at each sample size and overlap families.
//!
//! ```bash
//! cargo run -p slln-lab --example index_sets
//! ```

use slln_lab::indexing::{binomial, enumerate_cube, enumerate_increasing, new_indices, overlap_family, IndexSubset, MultiIndex, OverlapMode};

fn main() -> slln_lab::Result<()> {
    let (n, d) = (5, 3);
    let inc: Vec<String> = enumerate_increasing(n, d).map(|m| m.to_string()).collect();
    println!("I_{n} for d={d}: {} tuples (binomial {})", inc.len(), binomial(n as u64, d as u64));
    println!("  {}", inc.join(" "));
    println!("C_{n}: {} tuples", enumerate_cube(n, d).count());
    for m in d..=n {
        let fresh: Vec<String> = new_indices(m, d).map(|t| t.to_string()).collect();
        println!("new at n={m}: {}", fresh.join(" "));
    }

    let i = MultiIndex::new(vec![1, 3, 5]);
    for mask in 0..(1u64 << d) {
        let s = IndexSubset::from_mask(mask, d);
        let coupled = overlap_family(&i, s, 6, OverlapMode::Coupled)?;
        let decoupled = overlap_family(&i, s, 6, OverlapMode::Decoupled)?;
        println!("J({i}, {s}) at n=6: {} coupled, {} decoupled", coupled.len(), decoupled.len());
    }
    Ok(())
}
