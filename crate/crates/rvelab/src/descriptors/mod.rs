//! Spatial statistics of fiber arrangements: nearest-neighbor and Voronoi
//! neighbor distance distributions, Ripley's K, the pair distribution
//! function, local volume fractions, and a comparison metric between two
//! descriptor sets.
//!
//! Periodic microstructures are measured with minimum-image distances over
//! the whole domain. Non-periodic data (micrograph windows) use cropped
//! observation: samples come from fibers away from the window edge while
//! distances are measured against everything, which removes boundary bias.

mod voronoi;

pub use voronoi::{voronoi, VoronoiDiagram};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{surface_gap, Microstructure, NnMetric, Rect, SpatialGrid};

/// Histogram binning request.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct BinSpec {
    pub n_bins: usize,
    /// Explicit `(lo, hi)`; `None` spans `[min(0, smallest sample), 99.5th
    /// percentile]`, with overflow clamped into the last bin.
    pub range: Option<(f64, f64)>,
}

impl Default for BinSpec {
    fn default() -> Self {
        BinSpec { n_bins: 60, range: None }
    }
}

/// A sample set with its histogram density and moments.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EmpiricalDistribution {
    /// `n_bins + 1` strictly increasing edges.
    pub bin_edges: Vec<f64>,
    /// Per-bin probability density; integrates to 1.
    pub density: Vec<f64>,
    /// Raw samples, sorted ascending.
    pub samples: Vec<f64>,
    pub n_samples: usize,
    pub mean: f64,
    pub std: f64,
}

fn percentile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 < sorted.len() {
        sorted[i] * (1.0 - frac) + sorted[i + 1] * frac
    } else {
        sorted[i]
    }
}

impl EmpiricalDistribution {
    pub fn from_samples(mut samples: Vec<f64>, spec: &BinSpec) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidInput("empirical distribution needs samples".into()));
        }
        if spec.n_bins == 0 {
            return Err(Error::InvalidInput("empirical distribution needs bins".into()));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::InvalidInput("non-finite sample".into()));
        }
        samples.sort_unstable_by(f64::total_cmp);
        let n = samples.len();
        let (lo, hi) = match spec.range {
            Some((lo, hi)) => {
                if !(hi > lo) {
                    return Err(Error::InvalidInput("empty histogram range".into()));
                }
                (lo, hi)
            }
            None => {
                let lo = samples[0].min(0.0);
                let hi = percentile(&samples, 0.995);
                if hi > lo {
                    (lo, hi)
                } else {
                    (lo, lo + 1.0) // degenerate sample set: keep a finite bin width
                }
            }
        };
        let width = (hi - lo) / spec.n_bins as f64;
        let mut counts = vec![0usize; spec.n_bins];
        for &s in &samples {
            let k = ((s - lo) / width).floor();
            let k = (k.max(0.0) as usize).min(spec.n_bins - 1);
            counts[k] += 1;
        }
        let density: Vec<f64> = counts.iter().map(|&c| c as f64 / (n as f64 * width)).collect();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let var = samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n as f64;
        let bin_edges = (0..=spec.n_bins).map(|k| lo + k as f64 * width).collect();
        Ok(EmpiricalDistribution {
            bin_edges,
            density,
            samples,
            n_samples: n,
            mean,
            std: var.sqrt(),
        })
    }
}

/// Two-sample Kolmogorov-Smirnov statistic (sup distance of empirical CDFs).
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let (mut a, mut b) = (a.to_vec(), b.to_vec());
    a.sort_unstable_by(f64::total_cmp);
    b.sort_unstable_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        // Step past every sample at the current value in both sets, so a
        // tie never registers as a spurious CDF gap.
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d.max((i as f64 / na - j as f64 / nb).abs())
}

/// How neighbor counts are observed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum ObservationWindow {
    /// The whole periodic cell; distances by minimum image.
    PeriodicFull,
    /// Fibers inside `crop` count neighbors against the full data extent
    /// with plain distances; `crop` must be inset from the domain rectangle
    /// by at least the largest probe radius.
    CroppedAgainstFull { crop: Rect },
}

/// Ripley's K: expected neighbor count within distance h, normalized by the
/// areal density.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KFunction {
    pub h_values: Vec<f64>,
    pub k_values: Vec<f64>,
    pub window: ObservationWindow,
}

/// Pair distribution function g(h) over hoops `[h, h + delta_h)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PairDistribution {
    pub h_values: Vec<f64>,
    pub g_values: Vec<f64>,
    pub delta_h: f64,
    pub window: ObservationWindow,
}

fn check_h_values(h_values: &[f64]) -> Result<()> {
    if h_values.is_empty() {
        return Err(Error::InvalidInput("empty probe radius grid".into()));
    }
    if h_values.iter().any(|h| !(h.is_finite() && *h > 0.0)) {
        return Err(Error::InvalidInput("probe radii must be positive and finite".into()));
    }
    if h_values.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput("probe radii must be strictly increasing".into()));
    }
    Ok(())
}

/// Sorted center-to-center distances as seen through `window`, plus the
/// window's area, sample count, and the multiplicity of each stored
/// distance (2 when each unordered pair stands for both directions).
fn window_distances(
    ms: &Microstructure,
    max_h: f64,
    window: &ObservationWindow,
) -> Result<(Vec<f64>, f64, usize, f64)> {
    let n = ms.n_fibers();
    if n < 2 {
        return Err(Error::InvalidInput("point statistics need at least 2 fibers".into()));
    }
    match window {
        ObservationWindow::PeriodicFull => {
            if !ms.domain.periodic {
                return Err(Error::InvalidInput(
                    "periodic observation window on a non-periodic domain".into(),
                ));
            }
            if max_h > 0.5 * ms.domain.lx.min(ms.domain.ly) {
                return Err(Error::InvalidInput(format!(
                    "probe radius {max_h} exceeds half the domain ({} x {})",
                    ms.domain.lx, ms.domain.ly
                )));
            }
            let mut d = Vec::with_capacity(n * (n - 1) / 2);
            for i in 0..n {
                let fi = &ms.fibers[i];
                for fj in &ms.fibers[i + 1..] {
                    d.push(ms.domain.distance(fi.x, fi.y, fj.x, fj.y));
                }
            }
            d.sort_unstable_by(f64::total_cmp);
            Ok((d, ms.domain.area(), n, 2.0))
        }
        ObservationWindow::CroppedAgainstFull { crop } => {
            let margin_ok = crop.x0 >= max_h - 1e-12
                && crop.y0 >= max_h - 1e-12
                && crop.x1 <= ms.domain.lx - max_h + 1e-12
                && crop.y1 <= ms.domain.ly - max_h + 1e-12
                && crop.x1 > crop.x0
                && crop.y1 > crop.y0;
            if !margin_ok {
                return Err(Error::InvalidInput(format!(
                    "crop window must sit inside the data extent with margin >= {max_h}"
                )));
            }
            let inside: Vec<usize> = (0..n)
                .filter(|&i| {
                    let f = &ms.fibers[i];
                    f.x >= crop.x0 && f.x <= crop.x1 && f.y >= crop.y0 && f.y <= crop.y1
                })
                .collect();
            if inside.is_empty() {
                return Err(Error::InvalidInput("no fibers inside the crop window".into()));
            }
            let mut d = Vec::new();
            for &i in &inside {
                let fi = &ms.fibers[i];
                for (j, fj) in ms.fibers.iter().enumerate() {
                    if j != i {
                        let dist = (fj.x - fi.x).hypot(fj.y - fi.y);
                        if dist <= max_h {
                            d.push(dist);
                        }
                    }
                }
            }
            d.sort_unstable_by(f64::total_cmp);
            Ok((d, crop.area(), inside.len(), 1.0))
        }
    }
}

/// K(h) = (A/N²)·Σᵢ nᵢ(h), neighbor counts center-to-center with `d < h`.
pub fn ripley_k(
    ms: &Microstructure,
    h_values: &[f64],
    window: ObservationWindow,
) -> Result<KFunction> {
    check_h_values(h_values)?;
    let max_h = *h_values.last().expect("nonempty");
    let (d, area, n_obs, mult) = window_distances(ms, max_h, &window)?;
    let norm = mult * area / (n_obs as f64 * n_obs as f64);
    let k_values = h_values
        .iter()
        .map(|&h| norm * d.partition_point(|&x| x < h) as f64)
        .collect();
    Ok(KFunction { h_values: h_values.to_vec(), k_values, window })
}

/// g(h) per hoop `[h, h + delta_h)`: the density of neighbors at range h
/// relative to a Poisson process of the same intensity.
pub fn pair_distribution(
    ms: &Microstructure,
    h_values: &[f64],
    delta_h: f64,
    window: ObservationWindow,
) -> Result<PairDistribution> {
    check_h_values(h_values)?;
    if !(delta_h > 0.0 && delta_h.is_finite()) {
        return Err(Error::InvalidInput("delta_h must be positive".into()));
    }
    let max_h = h_values.last().expect("nonempty") + delta_h;
    let (d, area, n_obs, mult) = window_distances(ms, max_h, &window)?;
    let norm = mult * area / (n_obs as f64 * n_obs as f64);
    let g_values = h_values
        .iter()
        .map(|&h| {
            let count =
                d.partition_point(|&x| x < h + delta_h) - d.partition_point(|&x| x < h);
            norm * count as f64 / (2.0 * std::f64::consts::PI * h * delta_h)
        })
        .collect();
    Ok(PairDistribution { h_values: h_values.to_vec(), g_values, delta_h, window })
}

/// Indices whose centers sit at least `margin` from every edge of the
/// domain rectangle (identity for periodic domains).
fn sample_indices(ms: &Microstructure, margin: f64) -> Vec<usize> {
    if ms.domain.periodic {
        return (0..ms.n_fibers()).collect();
    }
    (0..ms.n_fibers())
        .filter(|&i| {
            let f = &ms.fibers[i];
            f.x >= margin
                && f.x <= ms.domain.lx - margin
                && f.y >= margin
                && f.y <= ms.domain.ly - margin
        })
        .collect()
}

fn nn_gap_samples(ms: &Microstructure, margin: f64) -> Result<Vec<f64>> {
    if ms.n_fibers() < 2 {
        return Err(Error::InvalidInput("nearest-neighbor statistics need >= 2 fibers".into()));
    }
    let idx = sample_indices(ms, margin);
    if idx.is_empty() {
        return Err(Error::InvalidInput(
            "no fibers remain after boundary-margin sampling".into(),
        ));
    }
    let grid = SpatialGrid::build(&ms.domain, &ms.fibers);
    Ok(idx
        .into_iter()
        .map(|i| grid.nearest_neighbor(ms, i, NnMetric::SurfaceGap).expect("n >= 2").1)
        .collect())
}

fn default_margin(ms: &Microstructure) -> f64 {
    4.0 * ms.max_radius()
}

/// PDF of per-fiber nearest-neighbor surface gaps.
pub fn nearest_neighbor_distribution(
    ms: &Microstructure,
    bins: &BinSpec,
) -> Result<EmpiricalDistribution> {
    EmpiricalDistribution::from_samples(nn_gap_samples(ms, default_margin(ms))?, bins)
}

/// Mean nearest-neighbor surface gap normalized by the mean radius.
pub fn mean_nn_distance(ms: &Microstructure) -> Result<f64> {
    let gaps = nn_gap_samples(ms, default_margin(ms))?;
    Ok(gaps.iter().sum::<f64>() / gaps.len() as f64 / ms.mean_radius())
}

/// PDF of surface gaps over Voronoi neighbor pairs, each unordered pair
/// once. Non-periodic diagrams skip pairs involving boundary cells.
pub fn voronoi_neighbor_distribution(
    ms: &Microstructure,
    diagram: &VoronoiDiagram,
    bins: &BinSpec,
) -> Result<EmpiricalDistribution> {
    if diagram.areas.len() != ms.n_fibers() {
        return Err(Error::IncompatibleDescriptors(
            "diagram does not belong to this microstructure".into(),
        ));
    }
    let samples: Vec<f64> = diagram
        .neighbors
        .iter()
        .filter(|&&(i, j)| {
            diagram.periodic || !(diagram.boundary_touching[i] || diagram.boundary_touching[j])
        })
        .map(|&(i, j)| surface_gap(&ms.fibers[i], &ms.fibers[j], &ms.domain))
        .collect();
    EmpiricalDistribution::from_samples(samples, bins)
}

/// PDF of per-fiber local volume fractions (fiber area over cell area).
/// Non-periodic diagrams skip boundary cells.
pub fn local_volume_fraction(
    ms: &Microstructure,
    diagram: &VoronoiDiagram,
    bins: &BinSpec,
) -> Result<EmpiricalDistribution> {
    if diagram.areas.len() != ms.n_fibers() {
        return Err(Error::IncompatibleDescriptors(
            "diagram does not belong to this microstructure".into(),
        ));
    }
    let samples: Vec<f64> = ms
        .fibers
        .iter()
        .zip(&diagram.areas)
        .zip(&diagram.boundary_touching)
        .filter(|&((_, _), &boundary)| diagram.periodic || !boundary)
        .map(|((f, &area), _)| f.area() / area)
        .collect();
    EmpiricalDistribution::from_samples(samples, bins)
}

/// Knobs for assembling a full descriptor set; lengths in mean radii.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct DescriptorConfig {
    pub n_bins: usize,
    /// Hoop width for g(h), in units of the mean radius.
    pub delta_h: f64,
    /// Largest probe radius for K and g, in units of the mean radius
    /// (capped by the domain size).
    pub h_max: f64,
    /// Boundary sampling margin for non-periodic data, in mean radii.
    pub boundary_margin: f64,
}

impl Default for DescriptorConfig {
    fn default() -> Self {
        DescriptorConfig { n_bins: 60, delta_h: 0.2, h_max: 12.0, boundary_margin: 8.0 }
    }
}

/// Every descriptor of one microstructure, distance-valued quantities
/// normalized by its own mean radius so sets from different length scales
/// compare directly.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DescriptorSet {
    pub nn: EmpiricalDistribution,
    pub voronoi_neighbor: EmpiricalDistribution,
    pub lvf: EmpiricalDistribution,
    pub ripley: KFunction,
    pub pair: PairDistribution,
    pub mean_nn: f64,
    pub mean_radius: f64,
    pub n_fibers: usize,
}

/// Compute the full descriptor set of a microstructure.
pub fn compute_descriptors(ms: &Microstructure, cfg: &DescriptorConfig) -> Result<DescriptorSet> {
    let r = ms.mean_radius();
    let bins = BinSpec { n_bins: cfg.n_bins, range: None };
    let margin = cfg.boundary_margin * r;

    let nn_samples: Vec<f64> = nn_gap_samples(ms, margin)?.iter().map(|g| g / r).collect();
    let mean_nn = nn_samples.iter().sum::<f64>() / nn_samples.len() as f64;
    let nn = EmpiricalDistribution::from_samples(nn_samples, &bins)?;

    let diagram = voronoi(ms)?;
    let voronoi_neighbor = {
        let mut d = voronoi_neighbor_distribution(ms, &diagram, &bins)?;
        let scaled: Vec<f64> = d.samples.iter().map(|s| s / r).collect();
        d = EmpiricalDistribution::from_samples(scaled, &bins)?;
        d
    };
    let lvf = local_volume_fraction(ms, &diagram, &bins)?;

    // The farthest distance ever probed is the last grid point plus one
    // hoop width, so the cap applies to that reach, not the grid itself.
    let delta_h = cfg.delta_h * r;
    let (reach, window) = if ms.domain.periodic {
        let reach = (cfg.h_max * r + delta_h).min(0.499 * ms.domain.lx.min(ms.domain.ly));
        (reach, ObservationWindow::PeriodicFull)
    } else {
        let reach = (cfg.h_max * r + delta_h).min(0.25 * ms.domain.lx.min(ms.domain.ly));
        let crop = Rect::new(reach, reach, ms.domain.lx - reach, ms.domain.ly - reach);
        (reach, ObservationWindow::CroppedAgainstFull { crop })
    };
    let m = ((reach - delta_h) / delta_h).floor() as usize;
    if m < 2 {
        return Err(Error::InvalidInput("domain too small for the probe radius grid".into()));
    }
    let h_values: Vec<f64> = (1..=m).map(|j| j as f64 * delta_h).collect();
    let mut ripley = ripley_k(ms, &h_values, window)?;
    let mut pair = pair_distribution(ms, &h_values, delta_h, window)?;
    for h in ripley.h_values.iter_mut().chain(pair.h_values.iter_mut()) {
        *h /= r;
    }
    for k in ripley.k_values.iter_mut() {
        *k /= r * r;
    }
    pair.delta_h /= r;

    Ok(DescriptorSet {
        nn,
        voronoi_neighbor,
        lvf,
        ripley,
        pair,
        mean_nn,
        mean_radius: r,
        n_fibers: ms.n_fibers(),
    })
}

/// Distances between one pair of like distributions.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ComparisonEntry {
    /// L2 distance between PDFs rebinned on a common grid.
    pub l2: f64,
    /// Two-sample Kolmogorov-Smirnov statistic.
    pub ks: f64,
    /// |mean difference| over the average of the means.
    pub rel_mean_diff: f64,
}

/// Pairwise distances between two descriptor sets.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct DescriptorComparison {
    pub nn: ComparisonEntry,
    pub voronoi_neighbor: ComparisonEntry,
    pub lvf: ComparisonEntry,
    /// Relative L2 mismatch of K over the overlapping probe range.
    pub ripley_rel_l2: f64,
    /// Relative L2 mismatch of g over the overlapping probe range.
    pub pair_rel_l2: f64,
    /// Largest KS statistic among nn, voronoi_neighbor, and lvf.
    pub summary: f64,
}

fn compare_entry(a: &EmpiricalDistribution, b: &EmpiricalDistribution, n_bins: usize) -> ComparisonEntry {
    let lo = a.samples[0].min(b.samples[0]).min(0.0);
    let hi = percentile(&a.samples, 0.995).max(percentile(&b.samples, 0.995));
    let spec = BinSpec { n_bins, range: Some((lo, if hi > lo { hi } else { lo + 1.0 })) };
    let pa = EmpiricalDistribution::from_samples(a.samples.clone(), &spec).expect("valid rebin");
    let pb = EmpiricalDistribution::from_samples(b.samples.clone(), &spec).expect("valid rebin");
    let w = (pa.bin_edges[1] - pa.bin_edges[0]).abs();
    let l2 = pa
        .density
        .iter()
        .zip(&pb.density)
        .map(|(x, y)| (x - y) * (x - y) * w)
        .sum::<f64>()
        .sqrt();
    let ks = ks_statistic(&a.samples, &b.samples);
    let denom = 0.5 * (a.mean.abs() + b.mean.abs());
    let rel_mean_diff = if denom > 0.0 { (a.mean - b.mean).abs() / denom } else { 0.0 };
    ComparisonEntry { l2, ks, rel_mean_diff }
}

fn curve_rel_l2(ha: &[f64], ka: &[f64], hb: &[f64], kb: &[f64]) -> Result<f64> {
    let lo = ha[0].max(hb[0]);
    let hi = ha.last().unwrap().min(*hb.last().unwrap());
    let pts: Vec<usize> = (0..ha.len()).filter(|&i| ha[i] >= lo - 1e-12 && ha[i] <= hi + 1e-12).collect();
    if hi <= lo || pts.len() < 2 {
        return Err(Error::IncompatibleDescriptors(
            "probe radius ranges do not overlap".into(),
        ));
    }
    let interp = |h: f64| {
        let j = hb.partition_point(|&x| x < h).clamp(1, hb.len() - 1);
        let t = (h - hb[j - 1]) / (hb[j] - hb[j - 1]);
        kb[j - 1] * (1.0 - t) + kb[j] * t
    };
    let (mut num, mut den) = (0.0, 0.0);
    for &i in &pts {
        let d = ka[i] - interp(ha[i]);
        num += d * d;
        den += ka[i] * ka[i];
    }
    Ok(if den > 0.0 { (num / den).sqrt() } else { num.sqrt() })
}

/// Distance record between two descriptor sets; the scalar `summary` is the
/// worst KS statistic over the three sample-based descriptors.
pub fn compare_descriptors(a: &DescriptorSet, b: &DescriptorSet) -> Result<DescriptorComparison> {
    let n_bins = 60;
    let nn = compare_entry(&a.nn, &b.nn, n_bins);
    let vn = compare_entry(&a.voronoi_neighbor, &b.voronoi_neighbor, n_bins);
    let lvf = compare_entry(&a.lvf, &b.lvf, n_bins);
    let ripley_rel_l2 =
        curve_rel_l2(&a.ripley.h_values, &a.ripley.k_values, &b.ripley.h_values, &b.ripley.k_values)?;
    let pair_rel_l2 =
        curve_rel_l2(&a.pair.h_values, &a.pair.g_values, &b.pair.h_values, &b.pair.g_values)?;
    let summary = nn.ks.max(vn.ks).max(lvf.ks);
    Ok(DescriptorComparison { nn, voronoi_neighbor: vn, lvf, ripley_rel_l2, pair_rel_l2, summary })
}
