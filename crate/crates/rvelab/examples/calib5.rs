//! Cloud min-gap calibration: clustered-vs-hex excess at vf 0.65, contrast 25.

use rvelab::experiments::{hexagonal_reference, n_fibers_for, transverse_modulus, Regime};
use rvelab::generate::{srm_generate, SrmParams};
use rvelab::geometry::Domain;
use rvelab::homogenize::{ElasticPhase, Phases};
use std::time::Instant;

fn main() {
    let phases = Phases {
        fiber: ElasticPhase::new(25.0, 0.25).unwrap(),
        matrix: ElasticPhase::new(1.0, 0.35).unwrap(),
    };
    let vf = 0.65;
    let nx = 384;
    let hex = hexagonal_reference(vf, &phases, nx).unwrap();
    println!("hex({vf}) = {hex:.4}");
    for &gap in &[0.02_f64, 0.05, 0.08, 0.12, 0.18, 0.30] {
        for regime in [Regime::Clustered, Regime::Equilibrium] {
            let t0 = Instant::now();
            let mut es = Vec::new();
            for seed in 1..=3u64 {
                let params = SrmParams {
                    n_fibers: n_fibers_for(vf, 40.0),
                    target_vf: vf,
                    migration_intensity: regime.migration_intensity(),
                    min_gap: gap,
                    seed,
                    ..SrmParams::default()
                };
                match srm_generate(&params, &Domain::unit()) {
                    Ok((ms, _)) => {
                        let r = transverse_modulus(&ms, &phases, nx).unwrap();
                        es.push(r.e_trans / phases.matrix.e);
                    }
                    Err(e) => println!("  gap={gap} {} seed={seed}: FAILED {e}", regime.name()),
                }
            }
            if !es.is_empty() {
                let mean = es.iter().sum::<f64>() / es.len() as f64;
                println!(
                    "  gap={gap:<5} {:<12} mean={mean:.4}  vs hex {:+.2}%  ({} ok, {:.1}s)",
                    regime.name(),
                    100.0 * (mean / hex - 1.0),
                    es.len(),
                    t0.elapsed().as_secs_f64()
                );
            }
        }
    }
}
