//! (a) Relaxation-kick grid: find migration/steps giving a gradual MNN ramp
//! over 6 snapshots. (b) Variant min-gap alignment: natural MNN of pockets
//! and bundles against min_gap, to pick constants whose naturals coincide.

use rvelab::descriptors::mean_nn_distance;
use rvelab::generate::{
    relax, srm_generate, srm_generate_restricted, RegionMode, RegionShape, RelaxParams,
    RestrictedRegion, SrmParams,
};
use rvelab::geometry::Domain;
use std::time::Instant;

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
    let start = srm_generate(&base, &domain).unwrap().0;
    let r = start.mean_radius();
    println!("start mnn = {:.4}", mean_nn_distance(&start).unwrap());
    for mig in [0.03_f64, 0.08, 0.15] {
        for steps in [3usize, 8, 20] {
            let t = Instant::now();
            let snaps = relax(
                &start,
                &RelaxParams {
                    migration: mig * r,
                    min_gap: None,
                    n_snapshots: 6,
                    steps_per_snapshot: steps,
                    seed: 99,
                },
            )
            .unwrap();
            let mnns: Vec<f64> =
                snaps.iter().map(|m| (mean_nn_distance(m).unwrap() * 1e4).round() / 1e4).collect();
            println!("mig={mig:<5} steps={steps:<3} mnn={mnns:?} ({:.1}s)", t.elapsed().as_secs_f64());
        }
    }

    let pockets: Vec<RestrictedRegion> = [(0.28, 0.30), (0.72, 0.68), (0.55, 0.05)]
        .iter()
        .map(|&(cx, cy)| RestrictedRegion {
            shape: RegionShape::Disc { cx, cy, radius: 0.13 },
            mode: RegionMode::ForbiddenToEnter,
        })
        .collect();
    let bundles: Vec<RestrictedRegion> = [0.25, 0.75]
        .iter()
        .map(|&cy| RestrictedRegion {
            shape: RegionShape::Capsule { x0: 0.05, y0: cy, x1: 0.95, y1: cy, half_width: 0.17 },
            mode: RegionMode::ConfinedWithin,
        })
        .collect();
    for (name, regions, gaps) in [
        ("pockets", &pockets, [1e-4, 0.003, 0.01]),
        ("bundles", &bundles, [0.005, 0.012, 0.02]),
    ] {
        for gap in gaps {
            let mut vals = Vec::new();
            let t = Instant::now();
            for seed in [1u64, 2] {
                let p = SrmParams { min_gap: gap, seed, ..base.clone() };
                match srm_generate_restricted(&p, &domain, regions) {
                    Ok((ms, _)) => vals.push(mean_nn_distance(&ms).unwrap()),
                    Err(e) => println!("  {name} gap={gap} seed={seed}: FAILED {e}"),
                }
            }
            println!(
                "{name} gap={gap:<6} naturals={:?} ({:.1}s)",
                vals.iter().map(|m| (m * 1e4).round() / 1e4).collect::<Vec<_>>(),
                t.elapsed().as_secs_f64()
            );
        }
    }
    // Plain clustered reference at the tightest gap.
    let mut vals = Vec::new();
    for seed in [1u64, 2, 3] {
        let p = SrmParams { seed, ..base.clone() };
        vals.push(mean_nn_distance(&srm_generate(&p, &domain).unwrap().0).unwrap());
    }
    println!(
        "plain gap=1e-4 naturals={:?}",
        vals.iter().map(|m| (m * 1e4).round() / 1e4).collect::<Vec<_>>()
    );
}
