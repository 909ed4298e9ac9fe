//! Core value types for 2D fiber microstructures and the exact geometric
//! predicates everything else builds on.
//!
//! Distances in periodic domains always use the minimum-image convention;
//! fiber centers are kept canonical in `[0, lx) x [0, ly)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Schema version written to and accepted from microstructure files.
pub const SCHEMA_VERSION: u64 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fiber {
    pub x: f64,
    pub y: f64,
    pub r: f64,
}

impl Fiber {
    pub fn new(x: f64, y: f64, r: f64) -> Self {
        Fiber { x, y, r }
    }

    pub fn area(&self) -> f64 {
        std::f64::consts::PI * self.r * self.r
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub lx: f64,
    pub ly: f64,
    pub periodic: bool,
}

impl Domain {
    pub fn periodic(lx: f64, ly: f64) -> Self {
        Domain { lx, ly, periodic: true }
    }

    pub fn rect(lx: f64, ly: f64) -> Self {
        Domain { lx, ly, periodic: false }
    }

    pub fn unit() -> Self {
        Domain::periodic(1.0, 1.0)
    }

    pub fn area(&self) -> f64 {
        self.lx * self.ly
    }

    /// Wrap a point into `[0, lx) x [0, ly)`. No-op for non-periodic domains.
    pub fn wrap(&self, x: f64, y: f64) -> (f64, f64) {
        if !self.periodic {
            return (x, y);
        }
        (wrap_coord(x, self.lx), wrap_coord(y, self.ly))
    }

    /// Separation vector from `a` to `b`, minimum-image if periodic.
    pub fn separation(&self, ax: f64, ay: f64, bx: f64, by: f64) -> (f64, f64) {
        let mut dx = bx - ax;
        let mut dy = by - ay;
        if self.periodic {
            dx -= (dx / self.lx).round() * self.lx;
            dy -= (dy / self.ly).round() * self.ly;
        }
        (dx, dy)
    }

    pub fn distance(&self, ax: f64, ay: f64, bx: f64, by: f64) -> f64 {
        let (dx, dy) = self.separation(ax, ay, bx, by);
        dx.hypot(dy)
    }
}

/// `rem_euclid` can land exactly on `l` after rounding (e.g. -1e-18 mod 1);
/// fold that case back to 0 so the canonical interval stays half-open.
fn wrap_coord(x: f64, l: f64) -> f64 {
    let w = x.rem_euclid(l);
    if w >= l {
        w - l
    } else {
        w
    }
}

/// Axis-aligned rectangle `[x0, x1] x [y0, y1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Rect { x0, y0, x1, y1 }
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x0 && x <= self.x1 && y >= self.y0 && y <= self.y1
    }
}

/// Provenance carried by every microstructure: how it was made, with what
/// seed and units, so a file is reproducible from its own metadata.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub generator: String,
    pub prng: Option<String>,
    pub seed: Option<u64>,
    pub units: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<serde_json::Value>,
}

impl Provenance {
    pub fn new(generator: &str, seed: Option<u64>, units: &str) -> Self {
        Provenance {
            generator: generator.to_string(),
            prng: seed.map(|_| crate::rng::PRNG_ID.to_string()),
            seed,
            units: units.to_string(),
            params: None,
        }
    }

    pub fn with_params<P: Serialize>(mut self, params: &P) -> Self {
        self.params = serde_json::to_value(params).ok();
        self
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Microstructure {
    pub domain: Domain,
    pub fibers: Vec<Fiber>,
    pub meta: Provenance,
}

impl Microstructure {
    /// Build a microstructure, canonicalizing centers (periodic domains) and
    /// rejecting non-finite coordinates and non-positive radii.
    pub fn new(domain: Domain, mut fibers: Vec<Fiber>, meta: Provenance) -> Result<Self> {
        if !(domain.lx > 0.0 && domain.ly > 0.0 && domain.lx.is_finite() && domain.ly.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "domain extents must be positive and finite, got {} x {}",
                domain.lx, domain.ly
            )));
        }
        for (i, f) in fibers.iter_mut().enumerate() {
            if !(f.x.is_finite() && f.y.is_finite() && f.r.is_finite()) {
                return Err(Error::InvalidInput(format!("fiber {i} has non-finite fields")));
            }
            if f.r <= 0.0 {
                return Err(Error::InvalidInput(format!("fiber {i} has radius {} <= 0", f.r)));
            }
            if domain.periodic {
                let (x, y) = domain.wrap(f.x, f.y);
                f.x = x;
                f.y = y;
            } else if !(f.x >= 0.0 && f.x <= domain.lx && f.y >= 0.0 && f.y <= domain.ly) {
                return Err(Error::InvalidInput(format!(
                    "fiber {i} center ({}, {}) outside non-periodic domain",
                    f.x, f.y
                )));
            }
        }
        Ok(Microstructure { domain, fibers, meta })
    }

    pub fn n_fibers(&self) -> usize {
        self.fibers.len()
    }

    pub fn mean_radius(&self) -> f64 {
        if self.fibers.is_empty() {
            return 0.0;
        }
        self.fibers.iter().map(|f| f.r).sum::<f64>() / self.fibers.len() as f64
    }

    pub fn max_radius(&self) -> f64 {
        self.fibers.iter().map(|f| f.r).fold(0.0, f64::max)
    }
}

/// Minimum-image center-to-center distance.
pub fn center_distance(a: &Fiber, b: &Fiber, domain: &Domain) -> f64 {
    domain.distance(a.x, a.y, b.x, b.y)
}

/// Surface-to-surface distance; negative when the fibers overlap.
pub fn surface_gap(a: &Fiber, b: &Fiber, domain: &Domain) -> f64 {
    center_distance(a, b, domain) - (a.r + b.r)
}

/// Fiber area fraction of the domain. Periodic domains count full disc
/// areas (discs wrap); non-periodic domains clip each disc to the domain
/// rectangle so protruding fibers contribute only their inside part.
pub fn volume_fraction(ms: &Microstructure) -> f64 {
    let a = if ms.domain.periodic {
        ms.fibers.iter().map(Fiber::area).sum::<f64>()
    } else {
        let rect = Rect::new(0.0, 0.0, ms.domain.lx, ms.domain.ly);
        ms.fibers
            .iter()
            .map(|f| disc_rect_intersection_area(f.x, f.y, f.r, &rect))
            .sum::<f64>()
    };
    a / ms.domain.area()
}

/// Area of `disc((cx, cy), r)` intersected with an axis-aligned rectangle.
///
/// Exact closed form assembled from the quadrant primitive
/// `G(a, b) = area of unit disc within {x <= a, y <= b}` by
/// inclusion-exclusion over the four corners.
pub fn disc_rect_intersection_area(cx: f64, cy: f64, r: f64, rect: &Rect) -> f64 {
    debug_assert!(r > 0.0);
    let g = |x: f64, y: f64| unit_disc_quadrant_area((x - cx) / r, (y - cy) / r);
    let a = g(rect.x1, rect.y1) - g(rect.x0, rect.y1) - g(rect.x1, rect.y0) + g(rect.x0, rect.y0);
    (a * r * r).max(0.0)
}

/// Area of the unit disc inside the quarter-plane `{x <= a, y <= b}`.
///
/// Slice integration over x: the chord `[-s(x), s(x)]` with `s = sqrt(1-x^2)`
/// intersected with `y <= b` has length `min(b, s) + s` where `b >= -s`, zero
/// elsewhere; the breakpoints sit at `|x| = sqrt(1 - b^2)`.
fn unit_disc_quadrant_area(a: f64, b: f64) -> f64 {
    let a = a.clamp(-1.0, 1.0);
    let b = b.clamp(-1.0, 1.0);
    // Antiderivative of s(x).
    let f = |t: f64| 0.5 * (t * (1.0 - t * t).max(0.0).sqrt() + t.asin());
    let xb = (1.0 - b * b).max(0.0).sqrt();
    let mut total = 0.0;
    if b >= 0.0 {
        // Outer slices (|x| > xb) lie fully below y = b: full chords.
        let v = a.min(-xb);
        if v > -1.0 {
            total += 2.0 * (f(v) - f(-1.0));
        }
        if a > xb {
            total += 2.0 * (f(a) - f(xb));
        }
    }
    // Inner slices (|x| <= xb): chord clipped at y = b.
    let u = -xb;
    let v = a.min(xb);
    if v > u {
        total += b * (v - u) + f(v) - f(u);
    }
    total.max(0.0)
}

/// Outcome of [`validate`]: the exact global minimum surface gap, which pair
/// attains it, and whether the structure is admissible under `overlap_tol`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ValidationReport {
    pub n_fibers: usize,
    pub volume_fraction: f64,
    /// Global minimum surface gap over all minimum-image pairs
    /// (`+inf` when fewer than two fibers).
    pub min_surface_gap: f64,
    pub worst_pair: Option<(usize, usize)>,
    pub overlap_tol: f64,
    pub ok: bool,
}

/// Exhaustive validity check. The minimum gap is computed exactly via a
/// spatial grid whose ring search never prunes a candidate that could beat
/// the current best; tests pin it against the all-pairs oracle.
///
/// `overlap_tol` defaults to `1e-9 * mean_radius`.
pub fn validate(ms: &Microstructure, overlap_tol: Option<f64>) -> ValidationReport {
    let tol = overlap_tol.unwrap_or(1e-9 * ms.mean_radius());
    let mut min_gap = f64::INFINITY;
    let mut worst = None;
    if ms.n_fibers() >= 2 {
        let grid = SpatialGrid::build(&ms.domain, &ms.fibers);
        for i in 0..ms.n_fibers() {
            if let Some((j, gap)) = grid.nearest_neighbor(ms, i, NnMetric::SurfaceGap) {
                if gap < min_gap {
                    min_gap = gap;
                    worst = Some((i.min(j), i.max(j)));
                }
            }
        }
    }
    ValidationReport {
        n_fibers: ms.n_fibers(),
        volume_fraction: volume_fraction(ms),
        min_surface_gap: min_gap,
        worst_pair: worst,
        overlap_tol: tol,
        ok: min_gap >= -tol,
    }
}

/// Per-fiber nearest-neighbor surface gap (minimum-image), exact.
pub fn nn_gaps(ms: &Microstructure) -> Vec<f64> {
    if ms.n_fibers() < 2 {
        return vec![f64::INFINITY; ms.n_fibers()];
    }
    let grid = SpatialGrid::build(&ms.domain, &ms.fibers);
    (0..ms.n_fibers())
        .map(|i| grid.nearest_neighbor(ms, i, NnMetric::SurfaceGap).unwrap().1)
        .collect()
}

/// Smallest fiber-surface-to-boundary distance (negative when a fiber
/// crosses the boundary). The window-selection objective.
pub fn min_boundary_distance(ms: &Microstructure) -> f64 {
    ms.fibers
        .iter()
        .map(|f| f.x.min(ms.domain.lx - f.x).min(f.y).min(ms.domain.ly - f.y) - f.r)
        .fold(f64::INFINITY, f64::min)
}

/// Shift the periodic window to the offset, out of `n_candidates` random
/// candidates (plus the identity), that maximizes the minimum
/// fiber-to-boundary distance. Rigid translation: all periodic descriptors
/// are unchanged.
pub fn select_window<R: Rng>(
    ms: &Microstructure,
    n_candidates: usize,
    rng: &mut R,
) -> Result<Microstructure> {
    if !ms.domain.periodic {
        return Err(Error::InvalidInput(
            "select_window requires a periodic domain".into(),
        ));
    }
    if n_candidates == 0 {
        return Err(Error::InvalidInput("select_window needs n_candidates >= 1".into()));
    }
    let (lx, ly) = (ms.domain.lx, ms.domain.ly);
    let mut best = (0.0f64, 0.0f64);
    let mut best_score = f64::NEG_INFINITY;
    let consider = |u: f64, v: f64, best: &mut (f64, f64), best_score: &mut f64| {
        let mut score = f64::INFINITY;
        for f in &ms.fibers {
            let x = wrap_coord(f.x - u, lx);
            let y = wrap_coord(f.y - v, ly);
            let d = x.min(lx - x).min(y).min(ly - y) - f.r;
            score = score.min(d);
            if score <= *best_score {
                break;
            }
        }
        if score > *best_score {
            *best_score = score;
            *best = (u, v);
        }
    };
    consider(0.0, 0.0, &mut best, &mut best_score);
    for _ in 0..n_candidates {
        let u = rng.random_range(0.0..lx);
        let v = rng.random_range(0.0..ly);
        consider(u, v, &mut best, &mut best_score);
    }
    let fibers = ms
        .fibers
        .iter()
        .map(|f| {
            let (x, y) = ms.domain.wrap(f.x - best.0, f.y - best.1);
            Fiber::new(x, y, f.r)
        })
        .collect();
    Microstructure::new(ms.domain, fibers, ms.meta.clone())
}

/// Which quantity a nearest-neighbor query minimizes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NnMetric {
    /// Center-to-center distance.
    Center,
    /// Surface-to-surface distance (accounts for both radii).
    SurfaceGap,
}

/// Uniform-bin spatial index over fiber centers. Acceleration only — every
/// query is exact, with expanding ring searches that stop only once no
/// unvisited cell can contain a better candidate.
pub struct SpatialGrid {
    ncx: usize,
    ncy: usize,
    cell_x: f64,
    cell_y: f64,
    domain: Domain,
    r_max: f64,
    cells: Vec<Vec<u32>>,
}

impl SpatialGrid {
    pub fn build(domain: &Domain, fibers: &[Fiber]) -> Self {
        // Aim for O(1) occupancy per cell; exactness never depends on size.
        let n = fibers.len().max(1);
        let target = (domain.area() / n as f64).sqrt();
        let ncx = (domain.lx / target).round().max(1.0) as usize;
        let ncy = (domain.ly / target).round().max(1.0) as usize;
        let mut grid = SpatialGrid {
            ncx,
            ncy,
            cell_x: domain.lx / ncx as f64,
            cell_y: domain.ly / ncy as f64,
            domain: *domain,
            r_max: fibers.iter().map(|f| f.r).fold(0.0, f64::max),
            cells: vec![Vec::new(); ncx * ncy],
        };
        for (i, f) in fibers.iter().enumerate() {
            let c = grid.cell_of(f.x, f.y);
            grid.cells[c].push(i as u32);
        }
        grid
    }

    fn cell_of(&self, x: f64, y: f64) -> usize {
        let i = ((x / self.cell_x) as usize).min(self.ncx - 1);
        let j = ((y / self.cell_y) as usize).min(self.ncy - 1);
        j * self.ncx + i
    }

    fn cell_index(&self, ci: i64, cj: i64) -> Option<usize> {
        let (ci, cj) = if self.domain.periodic {
            (ci.rem_euclid(self.ncx as i64), cj.rem_euclid(self.ncy as i64))
        } else {
            if ci < 0 || cj < 0 || ci >= self.ncx as i64 || cj >= self.ncy as i64 {
                return None;
            }
            (ci, cj)
        };
        Some(cj as usize * self.ncx + ci as usize)
    }

    /// Exact nearest neighbor of fiber `i` under `metric`.
    pub fn nearest_neighbor(
        &self,
        ms: &Microstructure,
        i: usize,
        metric: NnMetric,
    ) -> Option<(usize, f64)> {
        let f = &ms.fibers[i];
        let (ci, cj) = {
            let c = self.cell_of(f.x, f.y);
            ((c % self.ncx) as i64, (c / self.ncx) as i64)
        };
        let mut visited = vec![false; self.cells.len()];
        let mut best: Option<(usize, f64)> = None;
        let cell_min = self.cell_x.min(self.cell_y);
        let max_ring = self.ncx.max(self.ncy) as i64; // covers everything, wrapped or not
        for ring in 0..=max_ring {
            // Any candidate in an unvisited ring sits at center distance
            // >= (ring - 1) * cell_min from fiber i.
            if let Some((_, b)) = best {
                let reach = match metric {
                    NnMetric::Center => b,
                    NnMetric::SurfaceGap => b + f.r + self.r_max,
                };
                if (ring - 1) as f64 * cell_min > reach {
                    break;
                }
            }
            let mut any_new = false;
            for (dx, dy) in ring_offsets(ring) {
                let Some(c) = self.cell_index(ci + dx, cj + dy) else {
                    continue;
                };
                if visited[c] {
                    continue;
                }
                visited[c] = true;
                any_new = true;
                for &ju in &self.cells[c] {
                    let j = ju as usize;
                    if j == i {
                        continue;
                    }
                    let g = &ms.fibers[j];
                    let d = self.domain.distance(f.x, f.y, g.x, g.y);
                    let val = match metric {
                        NnMetric::Center => d,
                        NnMetric::SurfaceGap => d - f.r - g.r,
                    };
                    if best.is_none_or(|(_, b)| val < b) {
                        best = Some((j, val));
                    }
                }
            }
            if !any_new && ring > 0 && best.is_some() {
                // Every cell seen; nothing left to search.
                break;
            }
        }
        best
    }

    /// All unordered pairs with center distance <= `cutoff`, each exactly once.
    pub fn pairs_within(&self, fibers: &[Fiber], cutoff: f64) -> Vec<(usize, usize, f64)> {
        let reach_x = (cutoff / self.cell_x).ceil() as i64 + 1;
        let reach_y = (cutoff / self.cell_y).ceil() as i64 + 1;
        let mut out = Vec::new();
        let mut seen_cells: Vec<usize> = Vec::new();
        for (i, f) in fibers.iter().enumerate() {
            let c = self.cell_of(f.x, f.y);
            let (ci, cj) = ((c % self.ncx) as i64, (c / self.ncx) as i64);
            seen_cells.clear();
            for dy in -reach_y..=reach_y {
                for dx in -reach_x..=reach_x {
                    let Some(cc) = self.cell_index(ci + dx, cj + dy) else {
                        continue;
                    };
                    if seen_cells.contains(&cc) {
                        continue; // wrapped duplicate on small grids
                    }
                    seen_cells.push(cc);
                    for &ju in &self.cells[cc] {
                        let j = ju as usize;
                        if j <= i {
                            continue;
                        }
                        let g = &fibers[j];
                        let d = self.domain.distance(f.x, f.y, g.x, g.y);
                        if d <= cutoff {
                            out.push((i, j, d));
                        }
                    }
                }
            }
        }
        out
    }
}

/// Chebyshev ring of cell offsets at distance `ring` (ring 0 = center cell).
fn ring_offsets(ring: i64) -> Vec<(i64, i64)> {
    if ring == 0 {
        return vec![(0, 0)];
    }
    let mut v = Vec::with_capacity((8 * ring) as usize);
    for d in -ring..=ring {
        v.push((d, -ring));
        v.push((d, ring));
    }
    for d in (-ring + 1)..ring {
        v.push((-ring, d));
        v.push((ring, d));
    }
    v
}
