// Probe: (a) MNN span along a relaxation sequence from a clustered start
// at vf 0.6 for a grid of steps_per_snapshot; (b) feasibility and raw MNN
// of the pocket/bundle restricted constructions.
use std::time::Instant;

use rvelab::descriptors::mean_nn_distance;
use rvelab::generate::{
    relax, srm_generate, srm_generate_restricted, RegionMode, RegionShape, RelaxParams,
    RestrictedRegion, SrmParams,
};
use rvelab::geometry::{volume_fraction, Domain};

fn main() {
    let domain = Domain::unit();
    let base = SrmParams {
        n_fibers: 306,
        target_vf: 0.6,
        migration_intensity: 0.003,
        min_gap: 1e-4,
        seed: 1,
        ..SrmParams::default()
    };
    let t = Instant::now();
    let start = srm_generate(&base, &domain).unwrap().0;
    println!(
        "clustered start: vf={:.4} mnn={:.4} ({:.1?})",
        volume_fraction(&start),
        mean_nn_distance(&start).unwrap(),
        t.elapsed()
    );

    for steps in [10usize, 30, 80] {
        let t = Instant::now();
        let snaps = relax(
            &start,
            &RelaxParams {
                migration: 0.3 * start.mean_radius(),
                min_gap: None,
                n_snapshots: 6,
                steps_per_snapshot: steps,
                seed: 99,
            },
        )
        .unwrap();
        let mnns: Vec<f64> = snaps.iter().map(|m| mean_nn_distance(m).unwrap()).collect();
        println!(
            "relax steps/snap={steps:3}: mnn={:?}  ({:.1?})",
            mnns.iter().map(|m| (m * 1e4).round() / 1e4).collect::<Vec<_>>(),
            t.elapsed()
        );
    }

    // Matrix pockets: three forbidden discs.
    let pockets: Vec<RestrictedRegion> = [(0.28, 0.30), (0.72, 0.68), (0.55, 0.05)]
        .iter()
        .map(|&(cx, cy)| RestrictedRegion {
            shape: RegionShape::Disc { cx, cy, radius: 0.13 },
            mode: RegionMode::ForbiddenToEnter,
        })
        .collect();
    // Fiber bundles: two confining capsules.
    let bundles: Vec<RestrictedRegion> = [0.25, 0.75]
        .iter()
        .map(|&cy| RestrictedRegion {
            shape: RegionShape::Capsule { x0: 0.05, y0: cy, x1: 0.95, y1: cy, half_width: 0.17 },
            mode: RegionMode::ConfinedWithin,
        })
        .collect();
    let mut p = base.clone();
    p.min_gap = 0.005;
    for (name, regions) in [("pockets", &pockets), ("bundles", &bundles)] {
        for seed in [1u64, 2, 3] {
            p.seed = seed;
            let t = Instant::now();
            match srm_generate_restricted(&p, &domain, regions) {
                Ok((ms, trace)) => println!(
                    "{name} seed {seed}: vf={:.4} mnn={:.4} steps={} ({:.1?})",
                    volume_fraction(&ms),
                    mean_nn_distance(&ms).unwrap(),
                    trace.steps_used,
                    t.elapsed()
                ),
                Err(e) => println!("{name} seed {seed}: FAILED: {e}"),
            }
        }
    }
    // Plain clustered at the same min_gap for the MNN target comparison.
    for seed in [1u64, 2, 3] {
        p.seed = seed;
        let ms = srm_generate(&p, &domain).unwrap().0;
        println!(
            "plain clustered seed {seed}: vf={:.4} mnn={:.4}",
            volume_fraction(&ms),
            mean_nn_distance(&ms).unwrap()
        );
    }
}
