//! Microstructure generation: the swelling/random-migration process, seed
//! point sampling, diameter-distribution fitting, hexagonal and depleted
//! lattices, constant-density relaxation, and mean-NN matching.

mod lattice;
mod srm;

pub use lattice::{depleted_hexagonal, hexagonal_lattice, DepletionPattern};
pub use srm::{match_mnn, relax, srm_generate, srm_generate_restricted, MatchMnnParams, RelaxParams};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Domain;

/// Densest packing fraction of equal discs (hexagonal).
pub const HEX_PACKING_LIMIT: f64 = 0.906_899_682_117_089_3; // pi / (2 sqrt(3))

/// Fiber radius distribution, drawn once per run and then uniformly
/// rescaled so the final volume fraction is exact.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum RadiusDist {
    Monodisperse,
    /// Log-normal in the *diameter*: `ln d ~ N(mu, sigma^2)`.
    Lognormal { mu: f64, sigma: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SrmParams {
    pub n_fibers: usize,
    pub target_vf: f64,
    /// Radius growth factor per swelling step: `r <- r * (1 + swelling_rate)`.
    pub swelling_rate: f64,
    /// Random kick magnitude per step, in units of the current mean radius.
    pub migration_intensity: f64,
    /// Required surface separation between fibers i and j, expressed as
    /// `min_gap * (r_i + r_j) / 2` (equals `min_gap * R` for equal radii).
    pub min_gap: f64,
    pub max_steps: usize,
    #[serde(default = "RadiusDist::default")]
    pub radius_dist: RadiusDist,
    pub seed: u64,
}

impl Default for RadiusDist {
    fn default() -> Self {
        RadiusDist::Monodisperse
    }
}

impl Default for SrmParams {
    /// Equilibrium-regime baseline; override what a study varies.
    fn default() -> Self {
        SrmParams {
            n_fibers: 250,
            target_vf: 0.6,
            swelling_rate: 0.02,
            migration_intensity: 0.3,
            min_gap: 0.01,
            max_steps: 50_000,
            radius_dist: RadiusDist::Monodisperse,
            seed: 0,
        }
    }
}

impl SrmParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_fibers == 0 {
            return Err(Error::InvalidInput("n_fibers must be >= 1".into()));
        }
        if !(self.target_vf > 0.0 && self.target_vf < 1.0) {
            return Err(Error::InvalidInput(format!(
                "target_vf must be in (0, 1), got {}",
                self.target_vf
            )));
        }
        if !(self.swelling_rate > 0.0 && self.swelling_rate < 1.0) {
            return Err(Error::InvalidInput("swelling_rate must be in (0, 1)".into()));
        }
        if self.migration_intensity < 0.0 || !self.migration_intensity.is_finite() {
            return Err(Error::InvalidInput("migration_intensity must be >= 0".into()));
        }
        if self.min_gap < 0.0 || !self.min_gap.is_finite() {
            return Err(Error::InvalidInput("min_gap must be >= 0".into()));
        }
        if let RadiusDist::Lognormal { sigma, .. } = self.radius_dist {
            if !(sigma >= 0.0 && sigma.is_finite()) {
                return Err(Error::InvalidInput("lognormal sigma must be >= 0".into()));
            }
        }
        // Discs with pairwise surface gap g*(r_i+r_j)/2 pack exactly like
        // discs inflated by (1 + g/2); the hexagonal limit shrinks accordingly.
        let limit = self.gap_adjusted_limit();
        if self.target_vf > limit {
            return Err(Error::UnreachableVolumeFraction {
                target: self.target_vf,
                limit,
            });
        }
        Ok(())
    }

    pub fn gap_adjusted_limit(&self) -> f64 {
        HEX_PACKING_LIMIT / (1.0 + 0.5 * self.min_gap).powi(2)
    }
}

/// Circular or capsule (stadium) region constraining fiber centers.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum RegionShape {
    Disc { cx: f64, cy: f64, radius: f64 },
    /// Rectangle with semicircular caps around the segment (x0,y0)-(x1,y1).
    Capsule { x0: f64, y0: f64, x1: f64, y1: f64, half_width: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionMode {
    /// Fiber centers must stay outside the region.
    ForbiddenToEnter,
    /// Fiber centers must stay inside (the union of) such regions.
    ConfinedWithin,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RestrictedRegion {
    #[serde(flatten)]
    pub shape: RegionShape,
    pub mode: RegionMode,
}

impl RegionShape {
    pub fn area(&self) -> f64 {
        match *self {
            RegionShape::Disc { radius, .. } => std::f64::consts::PI * radius * radius,
            RegionShape::Capsule { x0, y0, x1, y1, half_width } => {
                let len = (x1 - x0).hypot(y1 - y0);
                2.0 * half_width * len + std::f64::consts::PI * half_width * half_width
            }
        }
    }

    /// Area after growing (positive `m`) or shrinking (negative) the
    /// boundary offset by |m|; used for feasibility estimates.
    pub fn offset_area(&self, m: f64) -> f64 {
        match *self {
            RegionShape::Disc { radius, .. } => {
                let r = (radius + m).max(0.0);
                std::f64::consts::PI * r * r
            }
            RegionShape::Capsule { x0, y0, x1, y1, half_width } => {
                let w = (half_width + m).max(0.0);
                let len = (x1 - x0).hypot(y1 - y0);
                2.0 * w * len + std::f64::consts::PI * w * w
            }
        }
    }

    /// Signed distance from the region boundary (negative inside) and the
    /// unit outward direction at the nearest boundary point, minimum-image.
    /// The direction is used to project a violating center back.
    pub fn signed_distance(&self, domain: &Domain, x: f64, y: f64) -> (f64, (f64, f64)) {
        match *self {
            RegionShape::Disc { cx, cy, radius } => {
                let (dx, dy) = domain.separation(cx, cy, x, y);
                let d = dx.hypot(dy);
                if d > 0.0 {
                    (d - radius, (dx / d, dy / d))
                } else {
                    (-radius, (1.0, 0.0))
                }
            }
            RegionShape::Capsule { x0, y0, x1, y1, half_width } => {
                // Compare the center against the segment in each periodic
                // image; the capsule itself is given in absolute coordinates.
                let mut best = (f64::INFINITY, (1.0, 0.0));
                let (sx, sy) = (x1 - x0, y1 - y0);
                let ss = sx * sx + sy * sy;
                let shifts_x: &[f64] = if domain.periodic { &[-1.0, 0.0, 1.0] } else { &[0.0] };
                for kx in shifts_x {
                    for ky in shifts_x {
                        let px = x + kx * domain.lx;
                        let py = y + ky * domain.ly;
                        let t = if ss > 0.0 {
                            (((px - x0) * sx + (py - y0) * sy) / ss).clamp(0.0, 1.0)
                        } else {
                            0.0
                        };
                        let qx = x0 + t * sx;
                        let qy = y0 + t * sy;
                        let (vx, vy) = (px - qx, py - qy);
                        let d = vx.hypot(vy);
                        if d < best.0 {
                            best = (d, if d > 0.0 { (vx / d, vy / d) } else { (-sy, sx) });
                        }
                    }
                }
                let (d, dir) = best;
                let norm = dir.0.hypot(dir.1);
                let dir = if norm > 0.0 { (dir.0 / norm, dir.1 / norm) } else { (1.0, 0.0) };
                (d - half_width, dir)
            }
        }
    }

    pub fn contains(&self, domain: &Domain, x: f64, y: f64) -> bool {
        self.signed_distance(domain, x, y).0 <= 0.0
    }
}

/// Center satisfies every region constraint.
pub fn center_allowed(regions: &[RestrictedRegion], domain: &Domain, x: f64, y: f64) -> bool {
    let mut any_confined = false;
    let mut in_confined = false;
    for reg in regions {
        match reg.mode {
            RegionMode::ForbiddenToEnter => {
                if reg.shape.contains(domain, x, y) {
                    return false;
                }
            }
            RegionMode::ConfinedWithin => {
                any_confined = true;
                in_confined |= reg.shape.contains(domain, x, y);
            }
        }
    }
    !any_confined || in_confined
}

/// Project a center onto the allowed set (nearest boundary point of the
/// violated constraint, overshot by a sliver so the result tests as
/// strictly allowed). One pass per mode suffices for the shapes used here.
pub fn project_center(regions: &[RestrictedRegion], domain: &Domain, x: f64, y: f64) -> (f64, f64) {
    let eps = 1e-9 * domain.lx.min(domain.ly);
    let (mut x, mut y) = (x, y);
    // Confinement first: snap to the nearest confined region if outside all.
    let confined: Vec<_> = regions
        .iter()
        .filter(|r| r.mode == RegionMode::ConfinedWithin)
        .collect();
    if !confined.is_empty() {
        let mut best: Option<(f64, (f64, f64))> = None;
        for reg in &confined {
            let (sd, dir) = reg.shape.signed_distance(domain, x, y);
            if sd <= 0.0 {
                best = None;
                break;
            }
            if best.is_none_or(|(b, _)| sd < b) {
                best = Some((sd, dir));
            }
        }
        if let Some((sd, dir)) = best {
            x -= (sd + eps) * dir.0;
            y -= (sd + eps) * dir.1;
        }
    }
    for reg in regions {
        if reg.mode == RegionMode::ForbiddenToEnter {
            let (sd, dir) = reg.shape.signed_distance(domain, x, y);
            if sd < eps {
                x -= (sd - eps) * dir.0;
                y -= (sd - eps) * dir.1;
            }
        }
    }
    domain.wrap(x, y)
}

/// Step-by-step record of a generation run, carried by both successful
/// results and stall errors.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GenerationTrace {
    pub steps_used: usize,
    pub final_vf: f64,
    /// Stall events: each halves both the swelling rate and the kick size.
    pub anneal_halvings: usize,
    pub stalled: bool,
    pub vf_history: Vec<f64>,
}

/// `n` independent uniform points in the domain — the Poisson seed pattern.
pub fn seed_poisson<R: Rng>(n: usize, domain: &Domain, rng: &mut R) -> Result<Vec<(f64, f64)>> {
    if n == 0 {
        return Err(Error::InvalidInput("seed_poisson needs n >= 1".into()));
    }
    Ok((0..n)
        .map(|_| (rng.random_range(0.0..domain.lx), rng.random_range(0.0..domain.ly)))
        .collect())
}

/// Maximum-likelihood log-normal fit to a diameter sample:
/// `mu = mean(ln d)`, `sigma^2 = mean((ln d - mu)^2)`.
pub fn fit_lognormal(diameters: &[f64]) -> Result<(f64, f64)> {
    if diameters.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "lognormal fit needs at least 2 diameters, got {}",
            diameters.len()
        )));
    }
    let mut logs = Vec::with_capacity(diameters.len());
    for (i, &d) in diameters.iter().enumerate() {
        if !(d > 0.0 && d.is_finite()) {
            return Err(Error::InvalidInput(format!("diameter {i} = {d} is not positive/finite")));
        }
        logs.push(d.ln());
    }
    let n = logs.len() as f64;
    let mu = logs.iter().sum::<f64>() / n;
    let var = logs.iter().map(|l| (l - mu).powi(2)).sum::<f64>() / n;
    Ok((mu, var.sqrt()))
}
