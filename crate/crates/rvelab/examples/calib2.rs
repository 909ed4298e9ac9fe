// Probe: regime -> E/E_m map at contrast 25 (nu 0.25/0.35) across the
// cloud volume fractions, against hexagonal and two-step references.
use std::time::Instant;

use rvelab::experiments::{hexagonal_reference, n_fibers_for, transverse_modulus, Regime};
use rvelab::generate::{srm_generate, SrmParams};
use rvelab::geometry::Domain;
use rvelab::homogenize::{two_step_upper, ElasticPhase, Phases};

fn main() {
    let phases = Phases {
        fiber: ElasticPhase::new(25.0, 0.25).unwrap(),
        matrix: ElasticPhase::new(1.0, 0.35).unwrap(),
    };
    let nx = 384;
    for vf in [0.40, 0.60, 0.65, 0.70] {
        let hex = hexagonal_reference(vf, &phases, nx).unwrap();
        let mt = two_step_upper(&phases, vf, nx).unwrap();
        println!("vf={vf}: hex={hex:.4} two_step={mt:.4}");
        for regime in Regime::ALL {
            let mut es = Vec::new();
            let t = Instant::now();
            for seed in [1u64, 2, 3] {
                let p = SrmParams {
                    n_fibers: n_fibers_for(vf, 40.0),
                    target_vf: vf,
                    migration_intensity: regime.migration_intensity(),
                    min_gap: 0.005,
                    seed,
                    ..SrmParams::default()
                };
                match srm_generate(&p, &Domain::unit()) {
                    Ok((ms, _)) => {
                        let tv = transverse_modulus(&ms, &phases, nx).unwrap();
                        es.push(tv.e_trans / phases.matrix.e);
                    }
                    Err(e) => println!("    seed {seed}: GENERATION FAILED: {e}"),
                }
            }
            let mean = es.iter().sum::<f64>() / es.len().max(1) as f64;
            println!(
                "  {:18} mean={:.4}  vs hex {:+.2}%  vs MT {:+.2}%  ({:.1?}, {} ok)  {:?}",
                regime.name(),
                mean,
                100.0 * (mean / hex - 1.0),
                100.0 * (mean / (mt / phases.matrix.e) - 1.0),
                t.elapsed(),
                es.len(),
                es.iter().map(|e| (e * 1e4).round() / 1e4).collect::<Vec<_>>()
            );
        }
    }
}
