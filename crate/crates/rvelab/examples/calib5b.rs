//! Large-gap packing with the annealed stall ladder: feasibility, timing,
//! anneal depth, and stiffness vs hex at vf 0.65, contrast 25.

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
    for &gap in &[0.22_f64, 0.30] {
        for regime in [Regime::Clustered, Regime::Equilibrium] {
            for seed in 1..=2u64 {
                let params = SrmParams {
                    n_fibers: n_fibers_for(vf, 40.0),
                    target_vf: vf,
                    migration_intensity: regime.migration_intensity(),
                    min_gap: gap,
                    seed,
                    ..SrmParams::default()
                };
                let t0 = Instant::now();
                match srm_generate(&params, &Domain::unit()) {
                    Ok((ms, trace)) => {
                        let gen_s = t0.elapsed().as_secs_f64();
                        let r = transverse_modulus(&ms, &phases, nx).unwrap();
                        let e = r.e_trans / phases.matrix.e;
                        println!(
                            "gap={gap} {} seed={seed}: E={e:.4} vs hex {:+.2}% (gen {gen_s:.1}s, steps={}, anneals={})",
                            regime.name(),
                            100.0 * (e / hex - 1.0),
                            trace.steps_used,
                            trace.anneal_halvings
                        );
                    }
                    Err(e) => println!(
                        "gap={gap} {} seed={seed}: FAILED ({:.1}s) {e}",
                        regime.name(),
                        t0.elapsed().as_secs_f64()
                    ),
                }
            }
        }
    }
}
