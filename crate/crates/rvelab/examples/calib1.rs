// Probe: single-level vs two-level moduli on a random structure at
// experiment scale (L/R = 40, vf 0.6), plus wall time per level.
use std::time::Instant;

use rvelab::experiments::n_fibers_for;
use rvelab::generate::{srm_generate, SrmParams};
use rvelab::geometry::Domain;
use rvelab::homogenize::{effective_properties, BcMode, ElasticPhase, Phases};

fn main() {
    let phases = Phases {
        fiber: ElasticPhase::new(25.0, 0.25).unwrap(),
        matrix: ElasticPhase::new(1.0, 0.35).unwrap(),
    };
    let p = SrmParams {
        n_fibers: n_fibers_for(0.6, 40.0),
        target_vf: 0.6,
        migration_intensity: 0.3,
        min_gap: 0.005,
        seed: 42,
        ..SrmParams::default()
    };
    let t0 = Instant::now();
    let ms = srm_generate(&p, &Domain::unit()).unwrap().0;
    println!("generation: n={} vf=0.6 took {:.2?}", ms.n_fibers(), t0.elapsed());

    let levels = [96usize, 192, 384, 768];
    let mut ex = Vec::new();
    let mut ey = Vec::new();
    for &nx in &levels {
        let t = Instant::now();
        let props = effective_properties(&ms, &phases, nx, BcMode::Periodic).unwrap();
        println!(
            "nx={nx:4}  cell/R={:.4}  e_x={:.6} e_y={:.6} e_z={:.6}  iters={:?}  {:.2?}",
            40.0 / nx as f64,
            props.e_x,
            props.e_y,
            props.e_z,
            props.diagnostics.iterations,
            t.elapsed()
        );
        ex.push(props.e_x);
        ey.push(props.e_y);
    }
    for i in 1..levels.len() {
        let rx = 2.0 * ex[i] - ex[i - 1];
        let ry = 2.0 * ey[i] - ey[i - 1];
        println!(
            "extrap ({:3},{:3}): e_x={:.6} e_y={:.6} e_trans={:.6}",
            levels[i - 1],
            levels[i],
            rx,
            ry,
            0.5 * (rx + ry)
        );
    }
}
