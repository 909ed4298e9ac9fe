// Probe: (a) mixed-BC RectSolver wall time on a non-periodic window at
// L/R ~ 50; (b) Ripley-K wall time at the Poisson-acceptance scale.
use std::time::Instant;

use rvelab::descriptors::{ripley_k, ObservationWindow};
use rvelab::experiments::n_fibers_for;
use rvelab::generate::{srm_generate, SrmParams};
use rvelab::geometry::{Domain, Fiber, Microstructure, Provenance, Rect};
use rvelab::homogenize::{effective_properties, BcMode, ElasticPhase, Phases};
use rvelab::rng::rng_from_seed;
use rand::Rng;

fn main() {
    // Non-periodic window imitating an ingested micrograph: generate
    // periodic at L/R ~ 52 and reinterpret the box as a plain window.
    let p = SrmParams {
        n_fibers: n_fibers_for(0.547, 52.0),
        target_vf: 0.547,
        migration_intensity: 0.03,
        min_gap: 0.005,
        seed: 5,
        ..SrmParams::default()
    };
    let ms = srm_generate(&p, &Domain::unit()).unwrap().0;
    let keep: Vec<Fiber> = ms
        .fibers
        .iter()
        .filter(|f| {
            f.x >= 0.0 && f.x <= 1.0 && f.y >= 0.0 && f.y <= 1.0
        })
        .copied()
        .collect();
    let recon = Microstructure::new(
        Domain::rect(1.0, 1.0),
        keep,
        Provenance::new("probe", Some(5), "unit"),
    )
    .unwrap();
    let phases = Phases {
        fiber: ElasticPhase::new(82.0, 0.22).unwrap(),
        matrix: ElasticPhase::new(3.24, 0.34).unwrap(),
    };
    for nx in [96usize, 192] {
        let t = Instant::now();
        match effective_properties(&recon, &phases, nx, BcMode::Mixed) {
            Ok(props) => println!(
                "mixed nx={nx}: e_x={:.4} e_y={:.4} iters={:?} ({:.1?})",
                props.e_x,
                props.e_y,
                props.diagnostics.iterations,
                t.elapsed()
            ),
            Err(e) => println!("mixed nx={nx}: FAILED after {:.1?}: {e}", t.elapsed()),
        }
    }

    // Ripley at acceptance scale: 2000 points, h grid to 0.2L, one seed
    // timed, then 20 seeds total.
    let t = Instant::now();
    let mut rng = rng_from_seed(7);
    let mut make = |seed: u64| {
        let mut rng = rng_from_seed(seed);
        let fibers: Vec<Fiber> = (0..2000)
            .map(|_| Fiber::new(rng.random_range(0.0..1.0), rng.random_range(0.0..1.0), 1e-4))
            .collect();
        Microstructure::new(Domain::unit(), fibers, Provenance::new("poisson", Some(seed), "unit"))
            .unwrap()
    };
    let h: Vec<f64> = (1..=20).map(|i| 0.01 * i as f64).collect();
    let one = make(rng.random());
    let k = ripley_k(&one, &h, ObservationWindow::PeriodicFull).unwrap();
    println!("ripley 2000 pts, one seed: ({:.2?}), k[last]/(pi h^2)={:.4}", t.elapsed(),
        k.k_values[19] / (std::f64::consts::PI * 0.04));
    let t = Instant::now();
    for seed in 0..20u64 {
        let m = make(seed);
        ripley_k(&m, &h, ObservationWindow::PeriodicFull).unwrap();
    }
    println!("ripley 20 seeds: ({:.2?})", t.elapsed());
}
