//! The hitting-probability inequalities: the d = 1 maximum bounds, the
//! moment and Paley-Zygmund bounds for random rectangle families, the
//! section bound for small boxes and the unit-square example.
//!
//! ```bash
//! cargo run --release -p slln-lab --example hitting_inequalities
//! ```

use slln_lab::conditions::BoxRegion;
use slln_lab::inequalities::{box_hit_exact, d1_max_sweep, intro_example_exact, log_grid, random_instances, verify_lemma, verify_section_lemma, LemmaConfig, Sampling, SectionLemmaConfig};
use slln_lab::model::Builtin;

fn main() -> slln_lab::Result<()> {
    let sweep = d1_max_sweep(&log_grid(0.001, 0.9, 20), 1..=100u64)?;
    println!("d=1 maximum: {} points, {} violations", sweep.points, sweep.violations);

    for d in 1..=3 {
        for mode in [Sampling::Decoupled, Sampling::Coupled] {
            let mut worst_moment = f64::INFINITY;
            let mut worst_pz = f64::INFINITY;
            for (i, fam) in random_instances(d, 32, 20, d as u64)?.iter().enumerate() {
                let r = verify_lemma(fam, mode, &LemmaConfig { replicates: 4000, seed: i as u64, ..Default::default() })?;
                worst_moment = worst_moment.min(r.moment_margin.value);
                worst_pz = worst_pz.min(r.pz_margin.value);
            }
            println!("d={d} {mode:<9} smallest margins: moment {worst_moment:.4}, paley-zygmund {worst_pz:.4}");
        }
    }

    for (d, n) in [(2, 8), (3, 8)] {
        for mode in [Sampling::Decoupled, Sampling::Coupled] {
            let region = BoxRegion { d, width: 1.0 / n as f64 };
            let c = verify_section_lemma(&region, &Builtin::Uniform01, n, mode, &SectionLemmaConfig::default())?;
            let exact = box_hit_exact(n, d, 1.0 / n as f64, mode);
            println!("box d={d} n={n} {mode:<9} P={:.4}±{:.4} exact {exact:.4} bound {:.4}", c.probability.value, c.probability.std_err, c.bound);
        }
    }

    for n in [10, 100, 1000, 10_000] {
        let sym = intro_example_exact(1.0 / n as f64, 1.0 / n as f64, n)?;
        let wide = intro_example_exact(1.0, 1.0 / n as f64, n)?;
        println!("n={n:<6} a=b=1/n product error {:.3}; a=1,b=1/n ratio {:.3}", sym.product_error(), wide.sum_ratio());
    }
    Ok(())
}
