//! Voronoi tessellation of fiber centers, periodic or clipped to the
//! domain rectangle.
//!
//! Each cell is cut from a bounding polygon by the half-plane bisectors of
//! the other sites, nearest first, stopping once the remaining sites are
//! farther than twice the current cell radius. In the periodic case the
//! site's own images are among the clippers, which bounds every cell to the
//! centered period rectangle, and all images close enough to matter are
//! enumerated. Every edge remembers which site cut it, so the neighbor
//! relation falls out of the surviving edges.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::geometry::{Microstructure, SpatialGrid};

/// Cell areas and the shared-edge neighbor relation for fiber centers.
#[derive(Clone, Debug)]
pub struct VoronoiDiagram {
    /// Cell area per fiber; sums to the domain area.
    pub areas: Vec<f64>,
    /// Unordered neighbor pairs `(i, j)` with `i < j`, each once.
    pub neighbors: Vec<(usize, usize)>,
    pub periodic: bool,
    /// Non-periodic only: cell keeps an edge of the domain rectangle, so its
    /// geometry is an artifact of the data window rather than the points.
    pub boundary_touching: Vec<bool>,
}

const SENTINEL: usize = usize::MAX;

#[derive(Clone, Copy)]
struct Vertex {
    x: f64,
    y: f64,
    /// Site whose bisector produced the edge leaving this vertex.
    owner: usize,
}

/// Cut `poly` down to `{p : nx*p.x + ny*p.y <= off}`. Returns whether
/// anything was removed.
fn clip_halfplane(
    poly: &mut Vec<Vertex>,
    scratch: &mut Vec<Vertex>,
    nx: f64,
    ny: f64,
    off: f64,
    owner: usize,
) -> bool {
    let side = |v: &Vertex| nx * v.x + ny * v.y - off;
    if poly.iter().all(|v| side(v) <= 0.0) {
        return false;
    }
    scratch.clear();
    for k in 0..poly.len() {
        let a = poly[k];
        let b = poly[(k + 1) % poly.len()];
        let (sa, sb) = (side(&a), side(&b));
        let cross = |t: f64, owner| Vertex {
            x: a.x + t * (b.x - a.x),
            y: a.y + t * (b.y - a.y),
            owner,
        };
        if sa <= 0.0 {
            scratch.push(a);
            if sb > 0.0 {
                // Leaving: the boundary run from here belongs to the clipper.
                scratch.push(cross(sa / (sa - sb), owner));
            }
        } else if sb <= 0.0 {
            // Entering: the rest of edge a->b keeps a's owner.
            let mut v = cross(sa / (sa - sb), a.owner);
            v.owner = a.owner;
            scratch.push(v);
        }
    }
    std::mem::swap(poly, scratch);
    true
}

fn polygon_area(poly: &[Vertex]) -> f64 {
    let mut twice = 0.0;
    for k in 0..poly.len() {
        let a = &poly[k];
        let b = &poly[(k + 1) % poly.len()];
        twice += a.x * b.y - a.y * b.x;
    }
    0.5 * twice.abs()
}

fn max_radius2(poly: &[Vertex]) -> f64 {
    poly.iter().map(|v| v.x * v.x + v.y * v.y).fold(0.0, f64::max)
}

/// Tessellate the fiber centers: periodic when the domain is periodic,
/// otherwise clipped against the domain rectangle (boundary cells flagged).
pub fn voronoi(ms: &Microstructure) -> Result<VoronoiDiagram> {
    let n = ms.n_fibers();
    if n == 0 {
        return Err(Error::InvalidInput("voronoi needs at least 1 fiber".into()));
    }
    let (lx, ly) = (ms.domain.lx, ms.domain.ly);
    let tol = 1e-12 * lx.min(ly);
    if n >= 2 {
        let grid = SpatialGrid::build(&ms.domain, &ms.fibers);
        for i in 0..n {
            let (_, d) = grid
                .nearest_neighbor(ms, i, crate::geometry::NnMetric::Center)
                .expect("n >= 2");
            if d < tol {
                return Err(Error::Degenerate(format!(
                    "coincident fiber centers near ({}, {})",
                    ms.fibers[i].x, ms.fibers[i].y
                )));
            }
        }
    }

    // Image offsets wide enough that every bisector able to cut the period
    // rectangle (half-diagonal hypot(lx, ly)/2 around a site) is present.
    let diag = lx.hypot(ly);
    let (kx, ky) = if ms.domain.periodic {
        (((diag / lx).ceil() as i64), ((diag / ly).ceil() as i64))
    } else {
        (0, 0)
    };

    let mut areas = vec![0.0; n];
    let mut boundary_touching = vec![false; n];
    let mut pairs: BTreeSet<(usize, usize)> = BTreeSet::new();
    let eps_len2 = (1e-9 * lx.min(ly)).powi(2);
    let mut clippers: Vec<(f64, f64, f64, usize)> = Vec::new(); // (d2, dx, dy, j)
    let (mut poly, mut scratch) = (Vec::new(), Vec::new());

    for i in 0..n {
        let fi = &ms.fibers[i];
        clippers.clear();
        for (j, fj) in ms.fibers.iter().enumerate() {
            for ox in -kx..=kx {
                for oy in -ky..=ky {
                    if j == i && ox == 0 && oy == 0 {
                        continue;
                    }
                    let dx = fj.x - fi.x + ox as f64 * lx;
                    let dy = fj.y - fi.y + oy as f64 * ly;
                    let d2 = dx * dx + dy * dy;
                    // A bisector at distance d/2 > half-diagonal cannot
                    // reach any point of the bounding polygon.
                    if d2 <= diag * diag * 1.0000001 {
                        clippers.push((d2, dx, dy, j));
                    }
                }
            }
        }
        clippers.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));

        poly.clear();
        if ms.domain.periodic {
            let h = 0.75 * lx.max(ly);
            for (x, y) in [(-h, -h), (h, -h), (h, h), (-h, h)] {
                poly.push(Vertex { x, y, owner: SENTINEL });
            }
        } else {
            for (x, y) in [(0.0, 0.0), (lx, 0.0), (lx, ly), (0.0, ly)] {
                poly.push(Vertex { x: x - fi.x, y: y - fi.y, owner: SENTINEL });
            }
        }

        let mut r2 = max_radius2(&poly);
        for &(d2, dx, dy, j) in &clippers {
            if d2 > 4.0 * r2 {
                break;
            }
            if clip_halfplane(&mut poly, &mut scratch, dx, dy, 0.5 * d2, j) {
                r2 = max_radius2(&poly);
            }
        }

        areas[i] = polygon_area(&poly);
        for k in 0..poly.len() {
            let a = &poly[k];
            let b = &poly[(k + 1) % poly.len()];
            let len2 = (b.x - a.x).powi(2) + (b.y - a.y).powi(2);
            if len2 < eps_len2 {
                continue;
            }
            match a.owner {
                SENTINEL => boundary_touching[i] = true,
                j if j != i => {
                    pairs.insert((i.min(j), i.max(j)));
                }
                _ => {} // edge against the site's own periodic image
            }
        }
    }

    Ok(VoronoiDiagram {
        areas,
        neighbors: pairs.into_iter().collect(),
        periodic: ms.domain.periodic,
        boundary_touching,
    })
}

impl VoronoiDiagram {
    /// Neighbor indices of fiber `i`.
    pub fn neighbors_of(&self, i: usize) -> Vec<usize> {
        self.neighbors
            .iter()
            .filter_map(|&(a, b)| {
                if a == i {
                    Some(b)
                } else if b == i {
                    Some(a)
                } else {
                    None
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::hexagonal_lattice;
    use crate::generate::{seed_poisson, SrmParams, RadiusDist, srm_generate};
    use crate::geometry::{volume_fraction, Domain, Fiber, Microstructure, NnMetric, Provenance};
    use crate::rng::rng_from_seed;
    use approx::assert_relative_eq;

    fn poisson_ms(n: usize, domain: Domain, seed: u64, r: f64) -> Microstructure {
        let mut rng = rng_from_seed(seed);
        let pts = seed_poisson(n, &domain, &mut rng).unwrap();
        let fibers = pts.into_iter().map(|(x, y)| Fiber::new(x, y, r)).collect();
        Microstructure::new(domain, fibers, Provenance::new("test", Some(seed), "dimensionless")).unwrap()
    }

    /// Independent oracle: intersect half-planes from every site image of a
    /// 5x5 tiling, no ordering, no early exit, plain point-list polygon.
    fn oracle_cell_area(ms: &Microstructure, i: usize) -> f64 {
        let (lx, ly) = (ms.domain.lx, ms.domain.ly);
        let fi = &ms.fibers[i];
        let big = 3.0 * lx.max(ly);
        let mut poly: Vec<(f64, f64)> =
            vec![(-big, -big), (big, -big), (big, big), (-big, big)];
        for (j, fj) in ms.fibers.iter().enumerate() {
            for ox in -2i64..=2 {
                for oy in -2i64..=2 {
                    if j == i && ox == 0 && oy == 0 {
                        continue;
                    }
                    let dx = fj.x - fi.x + ox as f64 * lx;
                    let dy = fj.y - fi.y + oy as f64 * ly;
                    let off = 0.5 * (dx * dx + dy * dy);
                    let mut out: Vec<(f64, f64)> = Vec::new();
                    for k in 0..poly.len() {
                        let a = poly[k];
                        let b = poly[(k + 1) % poly.len()];
                        let sa = dx * a.0 + dy * a.1 - off;
                        let sb = dx * b.0 + dy * b.1 - off;
                        if sa <= 0.0 {
                            out.push(a);
                        }
                        if (sa < 0.0) != (sb < 0.0) && sa != sb {
                            let t = sa / (sa - sb);
                            out.push((a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1)));
                        }
                    }
                    poly = out;
                    if poly.is_empty() {
                        return 0.0;
                    }
                }
            }
        }
        let mut twice = 0.0;
        for k in 0..poly.len() {
            let a = poly[k];
            let b = poly[(k + 1) % poly.len()];
            twice += a.0 * b.1 - a.1 * b.0;
        }
        0.5 * twice.abs()
    }

    #[test]
    fn hexagonal_cells_are_regular_hexagons() {
        let ms = hexagonal_lattice(0.65, 6, 1.0).unwrap();
        let a = 0.5 * (2.0 * std::f64::consts::PI / (3.0f64.sqrt() * 0.65)).sqrt();
        let cell_area = 0.5 * 3.0f64.sqrt() * a * a;
        let vor = voronoi(&ms).unwrap();
        for &area in &vor.areas {
            assert_relative_eq!(area, cell_area, max_relative = 1e-9);
        }
        for i in 0..ms.n_fibers() {
            assert_eq!(vor.neighbors_of(i).len(), 6, "hexagonal site must have 6 neighbors");
        }
        assert_eq!(vor.neighbors.len(), 3 * ms.n_fibers());
    }

    #[test]
    fn periodic_areas_tile_the_domain() {
        for seed in 0..10u64 {
            let domain = Domain::periodic(1.3, 0.9);
            let ms = poisson_ms(60, domain, seed, 0.01);
            let vor = voronoi(&ms).unwrap();
            let total: f64 = vor.areas.iter().sum();
            assert!((total - domain.area()).abs() <= 1e-9 * domain.area());
            assert!(vor.boundary_touching.iter().all(|&b| !b));
        }
    }

    #[test]
    fn areas_match_half_plane_oracle() {
        for seed in [3u64, 17, 40] {
            let ms = poisson_ms(40, Domain::unit(), seed, 0.01);
            let vor = voronoi(&ms).unwrap();
            for i in 0..ms.n_fibers() {
                let oracle = oracle_cell_area(&ms, i);
                assert_relative_eq!(vor.areas[i], oracle, max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn packed_structure_matches_oracle() {
        let params = SrmParams {
            n_fibers: 50,
            target_vf: 0.6,
            swelling_rate: 0.02,
            migration_intensity: 0.3,
            min_gap: 0.01,
            max_steps: 50_000,
            radius_dist: RadiusDist::Monodisperse,
            seed: 5,
        };
        let (ms, _) = srm_generate(&params, &Domain::unit()).unwrap();
        let vor = voronoi(&ms).unwrap();
        for i in 0..ms.n_fibers() {
            assert_relative_eq!(vor.areas[i], oracle_cell_area(&ms, i), max_relative = 1e-9);
        }
        let total: f64 = vor.areas.iter().sum();
        assert!((total - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn nearest_neighbor_is_a_voronoi_neighbor() {
        let ms = poisson_ms(80, Domain::unit(), 9, 0.01);
        let vor = voronoi(&ms).unwrap();
        let grid = SpatialGrid::build(&ms.domain, &ms.fibers);
        for i in 0..ms.n_fibers() {
            let (nn, _) = grid.nearest_neighbor(&ms, i, NnMetric::Center).unwrap();
            assert!(
                vor.neighbors_of(i).contains(&nn),
                "fiber {i}: center-NN {nn} missing from Voronoi neighbors"
            );
        }
    }

    #[test]
    fn rect_clipped_diagram_flags_boundary_cells() {
        let domain = Domain::rect(1.0, 1.0);
        let ms = poisson_ms(50, domain, 21, 0.01);
        let vor = voronoi(&ms).unwrap();
        assert!(!vor.periodic);
        let total: f64 = vor.areas.iter().sum();
        assert!((total - 1.0).abs() <= 1e-9, "rect cells partition the window");
        assert!(vor.boundary_touching.iter().any(|&b| b), "some cell reaches the window edge");
        assert!(!vor.boundary_touching.iter().all(|&b| b), "interior cells exist at n = 50");
        // Symmetric relation, no self pairs, indices valid.
        for &(a, b) in &vor.neighbors {
            assert!(a < b && b < ms.n_fibers());
        }
    }

    #[test]
    fn coincident_centers_rejected() {
        let fibers = vec![
            Fiber::new(0.3, 0.3, 0.01),
            Fiber::new(0.3, 0.3, 0.01),
            Fiber::new(0.7, 0.7, 0.01),
        ];
        let ms = Microstructure::new(
            Domain::unit(),
            fibers,
            Provenance::new("test", None, "dimensionless"),
        )
        .unwrap();
        assert!(matches!(voronoi(&ms), Err(Error::Degenerate(_))));
    }

    #[test]
    fn translation_leaves_areas_unchanged() {
        let ms = poisson_ms(40, Domain::unit(), 33, 0.01);
        let vor = voronoi(&ms).unwrap();
        let shifted: Vec<Fiber> = ms
            .fibers
            .iter()
            .map(|f| {
                let (x, y) = ms.domain.wrap(f.x + 0.37, f.y + 0.81);
                Fiber::new(x, y, f.r)
            })
            .collect();
        let ms2 = Microstructure::new(ms.domain, shifted, ms.meta.clone()).unwrap();
        let vor2 = voronoi(&ms2).unwrap();
        for (a, b) in vor.areas.iter().zip(&vor2.areas) {
            assert_relative_eq!(a, b, max_relative = 1e-9);
        }
        assert_eq!(vor.neighbors, vor2.neighbors);
    }

    #[test]
    fn lvf_area_weighted_mean_is_global_vf() {
        let ms = poisson_ms(70, Domain::unit(), 51, 0.02);
        let vor = voronoi(&ms).unwrap();
        let fiber_area: f64 = ms.fibers.iter().map(|f| f.area()).sum();
        let weighted: f64 = ms
            .fibers
            .iter()
            .zip(&vor.areas)
            .map(|(f, &a)| (f.area() / a) * a)
            .sum::<f64>()
            / vor.areas.iter().sum::<f64>();
        assert_relative_eq!(weighted, fiber_area / ms.domain.area(), max_relative = 1e-9);
        assert_relative_eq!(weighted, volume_fraction(&ms), max_relative = 1e-9);
    }
}
