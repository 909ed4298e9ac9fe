//! Regular hexagonal packings and their symmetric depletions.
//!
//! Sites live on the triangular lattice `m*a1 + n*a2` with `a1 = (a, 0)` and
//! `a2 = (a/2, √3a/2)`. The domain is `n_cols * a` by `n_rows * √3/2 * a`
//! with an even row count, which tiles periodically. Depletion masks are
//! expressed in the lattice coordinates `(m, n)` and must be compatible with
//! the periodic wrap: `x`-wrap shifts `m` by `n_cols`; `y`-wrap shifts `n`
//! by `n_rows` and `m` by `-n_rows/2`.

use serde::{Deserialize, Serialize};

use super::HEX_PACKING_LIMIT;
use crate::error::{Error, Result};
use crate::geometry::{Domain, Fiber, Microstructure, Provenance};

/// Which superlattice of sites to delete from the base hexagonal packing.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "pattern", rename_all = "snake_case")]
pub enum DepletionPattern {
    /// √3×√3 R30° superlattice: removes sites with `(m - n) % 3 == 0`,
    /// exactly one third, leaving a honeycomb. Needs `n_cells_x % 3 == 0`.
    Third,
    /// 2×2 superlattice: removes sites with even `m` and even `n`, exactly
    /// one quarter, leaving a kagome net. Needs `n_cells_x % 2 == 0`.
    Quarter,
    /// Arbitrary mask on the `px * py` unit: site `(m, n)` is removed when
    /// `removed` contains `(m mod px, n mod py)`.
    Custom { px: usize, py: usize, removed: Vec<(usize, usize)> },
}

impl DepletionPattern {
    fn removes(&self, m: i64, n: i64) -> bool {
        match self {
            DepletionPattern::Third => (m - n).rem_euclid(3) == 0,
            DepletionPattern::Quarter => m.rem_euclid(2) == 0 && n.rem_euclid(2) == 0,
            DepletionPattern::Custom { px, py, removed } => {
                let key = (m.rem_euclid(*px as i64) as usize, n.rem_euclid(*py as i64) as usize);
                removed.contains(&key)
            }
        }
    }

    /// Column-count divisibility and the row constraints `n_rows % row_mod
    /// == 0` needed so the mask survives both periodic wraps.
    fn tiling_requirements(&self) -> Result<(usize, usize)> {
        match self {
            // (m - n) mod 3: the y-wrap changes m - n by -3*(n_rows/2).
            DepletionPattern::Third => Ok((3, 2)),
            // Even rows unaffected by y-wrap only when n_rows/2 is even.
            DepletionPattern::Quarter => Ok((2, 4)),
            DepletionPattern::Custom { px, py, removed } => {
                if *px == 0 || *py == 0 {
                    return Err(Error::InvalidInput("custom depletion mask needs px, py >= 1".into()));
                }
                if removed.iter().any(|&(a, b)| a >= *px || b >= *py) {
                    return Err(Error::InvalidInput("custom mask entry outside px x py unit".into()));
                }
                // n_rows % py == 0 and (n_rows / 2) % px == 0, n_rows even.
                let rows = lcm(lcm(*py, 2), 2 * *px);
                Ok((*px, rows))
            }
        }
    }
}

fn lcm(a: usize, b: usize) -> usize {
    fn gcd(a: usize, b: usize) -> usize {
        if b == 0 { a } else { gcd(b, a % b) }
    }
    a / gcd(a, b) * b
}

fn hex_spacing(vf: f64, radius: f64) -> f64 {
    radius * (2.0 * std::f64::consts::PI / (3.0f64.sqrt() * vf)).sqrt()
}

fn check_lattice_inputs(vf: f64, n_cells_x: usize, diameter: f64) -> Result<()> {
    if !(vf > 0.0 && vf <= HEX_PACKING_LIMIT) {
        return Err(Error::InvalidInput(format!(
            "hexagonal lattice volume fraction must be in (0, {HEX_PACKING_LIMIT:.4}], got {vf}"
        )));
    }
    if n_cells_x == 0 {
        return Err(Error::InvalidInput("n_cells_x must be >= 1".into()));
    }
    if !(diameter > 0.0 && diameter.is_finite()) {
        return Err(Error::InvalidInput("fiber diameter must be positive and finite".into()));
    }
    Ok(())
}

/// Even row count giving the squarest domain that satisfies `rows % row_mod
/// == 0` (`row_mod` itself even).
fn pick_rows(n_cells_x: usize, row_mod: usize) -> usize {
    let ideal = 2 * (n_cells_x as f64 / 3.0f64.sqrt()).round().max(1.0) as usize;
    let down = (ideal / row_mod) * row_mod;
    let up = down + row_mod;
    if down >= row_mod && ideal - down < up - ideal {
        down
    } else {
        up
    }
}

fn build(
    vf: f64,
    n_cells_x: usize,
    diameter: f64,
    pattern: Option<&DepletionPattern>,
) -> Result<Microstructure> {
    check_lattice_inputs(vf, n_cells_x, diameter)?;
    let (col_mod, row_mod) = match pattern {
        Some(p) => p.tiling_requirements()?,
        None => (1, 2),
    };
    if n_cells_x % col_mod != 0 {
        return Err(Error::InvalidInput(format!(
            "depletion pattern does not tile: n_cells_x = {n_cells_x} is not a multiple of {col_mod}"
        )));
    }
    let n_rows = pick_rows(n_cells_x, row_mod);
    let r = 0.5 * diameter;
    let a = hex_spacing(vf, r);
    let domain = Domain::periodic(n_cells_x as f64 * a, n_rows as f64 * 0.5 * 3.0f64.sqrt() * a);
    let mut fibers = Vec::with_capacity(n_cells_x * n_rows);
    for j in 0..n_rows {
        for i in 0..n_cells_x {
            let (m, n) = (i as i64 - (j / 2) as i64, j as i64);
            if pattern.is_some_and(|p| p.removes(m, n)) {
                continue;
            }
            let x = (i as f64 + 0.5 * (j % 2) as f64) * a;
            let y = j as f64 * 0.5 * 3.0f64.sqrt() * a;
            fibers.push(Fiber::new(x, y, r));
        }
    }
    if fibers.is_empty() {
        return Err(Error::InvalidInput("depletion mask removes every fiber".into()));
    }
    let (generator, params) = match pattern {
        None => ("hexagonal-lattice", serde_json::json!({ "vf": vf, "n_cells_x": n_cells_x, "diameter": diameter })),
        Some(p) => (
            "depleted-hexagonal",
            serde_json::json!({ "base_vf": vf, "n_cells_x": n_cells_x, "diameter": diameter, "pattern": p }),
        ),
    };
    let meta = Provenance::new(generator, None, "dimensionless").with_params(&params);
    Microstructure::new(domain, fibers, meta)
}

/// Periodic monodisperse hexagonal packing at exactly `vf`, with `n_cells_x`
/// columns and a row count chosen for a near-square domain.
pub fn hexagonal_lattice(vf: f64, n_cells_x: usize, diameter: f64) -> Result<Microstructure> {
    build(vf, n_cells_x, diameter, None)
}

/// Hexagonal packing at `base_vf` with a symmetric superlattice of sites
/// removed; the result keeps in-plane isotropy at a lower volume fraction
/// (`base_vf` times the kept fraction).
pub fn depleted_hexagonal(
    base_vf: f64,
    n_cells_x: usize,
    pattern: &DepletionPattern,
    diameter: f64,
) -> Result<Microstructure> {
    build(base_vf, n_cells_x, diameter, Some(pattern))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{nn_gaps, volume_fraction, NnMetric, SpatialGrid};
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn nn_distances(ms: &Microstructure) -> Vec<f64> {
        let grid = SpatialGrid::build(&ms.domain, &ms.fibers);
        (0..ms.n_fibers())
            .map(|i| grid.nearest_neighbor(ms, i, NnMetric::Center).unwrap().1)
            .collect()
    }

    #[test]
    fn gap_at_065_matches_closed_form() {
        let ms = hexagonal_lattice(0.65, 10, 1.0).unwrap();
        let r = ms.fibers[0].r;
        let expected = r * ((2.0 * std::f64::consts::PI / (3.0f64.sqrt() * 0.65)).sqrt() - 2.0);
        for gap in nn_gaps(&ms) {
            assert_relative_eq!(gap, expected, max_relative = 1e-12);
            assert_abs_diff_eq!(gap / r, 0.36241, epsilon = 2e-5);
        }
    }

    #[test]
    fn volume_fraction_is_exact_and_lattice_is_uniform() {
        for vf in [0.3, 0.65, 0.9] {
            let ms = hexagonal_lattice(vf, 8, 2.0).unwrap();
            assert_relative_eq!(volume_fraction(&ms), vf, max_relative = 1e-12);
            let d = nn_distances(&ms);
            let first = d[0];
            assert!(d.iter().all(|&x| (x - first).abs() < 1e-12 * first), "NN spread must vanish");
        }
    }

    #[test]
    fn densest_packing_touches() {
        let ms = hexagonal_lattice(HEX_PACKING_LIMIT, 6, 1.0).unwrap();
        let r = ms.fibers[0].r;
        for gap in nn_gaps(&ms) {
            assert_abs_diff_eq!(gap, 0.0, epsilon = 1e-12 * r);
        }
    }

    #[test]
    fn out_of_range_vf_rejected() {
        assert!(hexagonal_lattice(0.0, 6, 1.0).is_err());
        assert!(hexagonal_lattice(0.91, 6, 1.0).is_err());
        assert!(hexagonal_lattice(0.5, 0, 1.0).is_err());
        assert!(hexagonal_lattice(0.5, 6, 0.0).is_err());
    }

    #[test]
    fn third_depletion_removes_exactly_one_third() {
        let full = hexagonal_lattice(0.9, 12, 1.0).unwrap();
        let ms = depleted_hexagonal(0.9, 12, &DepletionPattern::Third, 1.0).unwrap();
        assert_eq!(ms.n_fibers() * 3, full.n_fibers() * 2);
        assert_relative_eq!(volume_fraction(&ms), 0.6, max_relative = 1e-12);
        assert_eq!(ms.domain, full.domain);
    }

    #[test]
    fn quarter_depletion_removes_exactly_one_quarter() {
        let ms = depleted_hexagonal(0.9, 12, &DepletionPattern::Quarter, 1.0).unwrap();
        assert_relative_eq!(volume_fraction(&ms), 0.675, max_relative = 1e-12);
        // Every kept even-row site has odd m; kagome rows alternate.
        let n_rows_kept: std::collections::BTreeSet<i64> =
            ms.fibers.iter().map(|f| (f.y / (0.5 * 3.0f64.sqrt() * ms.fibers[0].r * 2.0)).round() as i64).collect();
        assert!(n_rows_kept.len() > 1);
    }

    #[test]
    fn empty_mask_is_the_plain_lattice() {
        let full = hexagonal_lattice(0.8, 6, 1.0).unwrap();
        let pattern = DepletionPattern::Custom { px: 1, py: 1, removed: vec![] };
        let ms = depleted_hexagonal(0.8, 6, &pattern, 1.0).unwrap();
        assert_eq!(full.fibers, ms.fibers);
        assert_eq!(full.domain, ms.domain);
    }

    #[test]
    fn non_tiling_patterns_rejected() {
        assert!(depleted_hexagonal(0.9, 10, &DepletionPattern::Third, 1.0).is_err());
        assert!(depleted_hexagonal(0.9, 7, &DepletionPattern::Quarter, 1.0).is_err());
        let bad = DepletionPattern::Custom { px: 5, py: 1, removed: vec![(0, 0)] };
        assert!(depleted_hexagonal(0.9, 12, &bad, 1.0).is_err());
        let degenerate = DepletionPattern::Custom { px: 1, py: 1, removed: vec![(0, 0)] };
        assert!(depleted_hexagonal(0.9, 12, &degenerate, 1.0).is_err());
    }

    #[test]
    fn depletion_masks_survive_periodic_wraps() {
        // Shift every site by one full period in x and in y and check the
        // kept/removed decision is unchanged: the mask tiles.
        for (pattern, n_cols) in [
            (DepletionPattern::Third, 12usize),
            (DepletionPattern::Quarter, 12),
            (DepletionPattern::Custom { px: 3, py: 2, removed: vec![(0, 0), (1, 1)] }, 12),
        ] {
            let ms = depleted_hexagonal(0.9, n_cols, &pattern, 1.0).unwrap();
            let (col_mod, _) = pattern.tiling_requirements().unwrap();
            assert_eq!(n_cols % col_mod, 0);
            let n_rows = (2.0 * ms.domain.ly / (3.0f64.sqrt() * hex_spacing(0.9, 0.5))).round() as i64;
            for j in 0..n_rows {
                for i in 0..n_cols as i64 {
                    let (m, n) = (i - j.div_euclid(2), j);
                    let base = pattern.removes(m, n);
                    assert_eq!(base, pattern.removes(m + n_cols as i64, n), "x-wrap at ({m},{n})");
                    assert_eq!(base, pattern.removes(m - n_rows / 2, n + n_rows), "y-wrap at ({m},{n})");
                }
            }
        }
    }
}
