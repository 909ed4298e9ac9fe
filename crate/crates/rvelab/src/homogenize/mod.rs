//! Effective elastic properties of fiber cross-sections by numerical
//! homogenization on a regular grid.
//!
//! A microstructure is rasterized into per-cell fiber fractions, each cell
//! gets a volume-fraction-weighted blend of the two isotropic phases, and
//! unit macroscopic strains are applied under periodic, mixed, or uniform-
//! displacement boundary conditions. Generalized plane strain couples the
//! in-plane problem to one uniform axial strain, so transverse and axial
//! moduli come out of the same solve. Closed-form Mori-Tanaka and
//! hexagonal-bound models are included for cross-checking the numerics.

mod blend;
mod fem;
mod grid;

pub use grid::{rasterize, PeriodicGridModel};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generate::hexagonal_lattice;
use crate::geometry::Microstructure;

use fem::{PeriodicSolver, RectSolver, SolverOpts};

/// Isotropic elastic phase: Young's modulus and Poisson ratio.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElasticPhase {
    pub e: f64,
    pub nu: f64,
}

impl ElasticPhase {
    pub fn new(e: f64, nu: f64) -> Result<Self> {
        if !(e > 0.0 && e.is_finite()) {
            return Err(Error::InvalidInput(format!("Young's modulus must be positive, got {e}")));
        }
        if !(nu > -1.0 && nu < 0.5) {
            return Err(Error::InvalidInput(format!(
                "Poisson ratio must lie in (-1, 0.5), got {nu}"
            )));
        }
        Ok(ElasticPhase { e, nu })
    }

    fn lame(&self) -> (f64, f64) {
        let lambda = self.e * self.nu / ((1.0 + self.nu) * (1.0 - 2.0 * self.nu));
        let mu = self.e / (2.0 * (1.0 + self.nu));
        (lambda, mu)
    }
}

/// The two phases of a fiber-matrix cross-section.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Phases {
    pub fiber: ElasticPhase,
    pub matrix: ElasticPhase,
}

/// 4x4 isotropic stiffness in (xx, yy, xy, zz) order with engineering
/// shear, i.e. plane strain augmented by the out-of-plane normal terms.
pub fn stiffness_matrix(phase: &ElasticPhase) -> [[f64; 4]; 4] {
    let (l, m) = phase.lame();
    [
        [l + 2.0 * m, l, 0.0, l],
        [l, l + 2.0 * m, 0.0, l],
        [0.0, 0.0, m, 0.0],
        [l, l, 0.0, l + 2.0 * m],
    ]
}


/// Macroscopic unit-strain load cases, one per effective-stiffness column.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LoadCase {
    XX,
    YY,
    XY,
    ZZ,
}

impl LoadCase {
    fn unit_strain(self) -> [f64; 4] {
        match self {
            LoadCase::XX => [1.0, 0.0, 0.0, 0.0],
            LoadCase::YY => [0.0, 1.0, 0.0, 0.0],
            LoadCase::XY => [0.0, 0.0, 1.0, 0.0],
            LoadCase::ZZ => [0.0, 0.0, 0.0, 1.0],
        }
    }
}

/// Boundary-condition family used for the cell problems.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BcMode {
    /// Periodic fluctuations; requires a periodic domain.
    Periodic,
    /// Prescribed normal displacement on the loaded faces, traction-free
    /// lateral faces, free axial strain. Suited to non-periodic windows.
    Mixed,
    /// Uniform displacement (kinematic) on the whole boundary; stiffest.
    Displacement,
}

/// One solved load case: volume-averaged fields and solver diagnostics.
#[derive(Clone, Debug)]
pub struct SolvedCase {
    /// Volume-averaged stress (xx, yy, xy, zz).
    pub mean_stress: [f64; 4],
    /// Volume-averaged strain (xx, yy, xy, zz).
    pub mean_strain: [f64; 4],
    /// Nodal displacements: the periodic fluctuation for periodic solves,
    /// the total displacement otherwise, interleaved (ux, uy) per node.
    pub displacement: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

/// Solve a single load case on an already-rasterized grid.
///
/// Under `BcMode::Mixed` the XX/YY/ZZ cases use mixed uniaxial conditions;
/// the XY case falls back to uniform-displacement shear because pure shear
/// with traction-free lateral faces does not constrain rigid rotation.
pub fn solve(
    grid: &PeriodicGridModel,
    phases: &Phases,
    case: LoadCase,
    mode: BcMode,
) -> Result<SolvedCase> {
    match mode {
        BcMode::Periodic => {
            ensure_periodic(grid)?;
            PeriodicSolver::new(grid, phases).solve_case(case.unit_strain(), SolverOpts::periodic())
        }
        BcMode::Mixed => {
            let solver = RectSolver::new(grid, phases);
            match case {
                LoadCase::XX => solver.solve_mixed_axis(0, 1.0, SolverOpts::masked()),
                LoadCase::YY => solver.solve_mixed_axis(1, 1.0, SolverOpts::masked()),
                LoadCase::ZZ => solver.solve_mixed_zz(1.0, SolverOpts::masked()),
                LoadCase::XY => solver.solve_kubc(LoadCase::XY.unit_strain(), SolverOpts::masked()),
            }
        }
        BcMode::Displacement => {
            RectSolver::new(grid, phases).solve_kubc(case.unit_strain(), SolverOpts::masked())
        }
    }
}

fn ensure_periodic(grid: &PeriodicGridModel) -> Result<()> {
    if !grid.periodic {
        return Err(Error::InvalidInput(
            "periodic homogenization requires a periodic domain; use mixed or displacement mode"
                .into(),
        ));
    }
    Ok(())
}

/// Per-case solver effort, reported alongside the effective properties.
#[derive(Clone, Debug, Serialize)]
pub struct SolveDiagnostics {
    pub nx: usize,
    pub ny: usize,
    pub iterations: Vec<usize>,
    pub residuals: Vec<f64>,
}

/// Effective transversely-loaded properties of the homogenized section.
#[derive(Clone, Debug, Serialize)]
pub struct EffectiveProperties {
    pub e_x: f64,
    pub e_y: f64,
    pub e_z: f64,
    pub g_xy: f64,
    pub nu_xy: f64,
    pub nu_yx: f64,
    pub nu_xz: f64,
    pub nu_yz: f64,
    /// Effective stiffness in (xx, yy, xy, zz) order.
    pub stiffness: [[f64; 4]; 4],
    /// Effective compliance, the inverse of `stiffness`.
    pub compliance: [[f64; 4]; 4],
    pub diagnostics: SolveDiagnostics,
}

/// Rasterize a microstructure and compute its effective properties.
pub fn effective_properties(
    ms: &Microstructure,
    phases: &Phases,
    nx: usize,
    mode: BcMode,
) -> Result<EffectiveProperties> {
    let grid = rasterize(ms, nx)?;
    effective_properties_grid(&grid, phases, mode)
}

/// Effective properties of an already-rasterized grid.
pub fn effective_properties_grid(
    grid: &PeriodicGridModel,
    phases: &Phases,
    mode: BcMode,
) -> Result<EffectiveProperties> {
    match mode {
        BcMode::Periodic => {
            ensure_periodic(grid)?;
            let solver = PeriodicSolver::new(grid, phases);
            let mut cases = Vec::with_capacity(4);
            for lc in [LoadCase::XX, LoadCase::YY, LoadCase::XY, LoadCase::ZZ] {
                cases.push(solver.solve_case(lc.unit_strain(), SolverOpts::periodic())?);
            }
            from_stiffness_columns(grid, &cases)
        }
        BcMode::Displacement => {
            let solver = RectSolver::new(grid, phases);
            let mut cases = Vec::with_capacity(4);
            for lc in [LoadCase::XX, LoadCase::YY, LoadCase::XY, LoadCase::ZZ] {
                cases.push(solver.solve_kubc(lc.unit_strain(), SolverOpts::masked())?);
            }
            from_stiffness_columns(grid, &cases)
        }
        BcMode::Mixed => {
            let solver = RectSolver::new(grid, phases);
            let cx = solver.solve_mixed_axis(0, 1.0, SolverOpts::masked())?;
            let cy = solver.solve_mixed_axis(1, 1.0, SolverOpts::masked())?;
            let cz = solver.solve_mixed_zz(1.0, SolverOpts::masked())?;
            let cs = solver.solve_kubc(LoadCase::XY.unit_strain(), SolverOpts::masked())?;
            from_mixed_cases(grid, &[cx, cy, cz, cs])
        }
    }
}

/// Build properties from four strain-controlled cases (columns of C).
fn from_stiffness_columns(
    grid: &PeriodicGridModel,
    cases: &[SolvedCase],
) -> Result<EffectiveProperties> {
    let mut c = [[0.0; 4]; 4];
    for (k, case) in cases.iter().enumerate() {
        for p in 0..4 {
            c[p][k] = case.mean_stress[p];
        }
    }
    // Minor asymmetry is solver tolerance noise; symmetrize before inverting.
    for p in 0..4 {
        for q in p + 1..4 {
            let avg = 0.5 * (c[p][q] + c[q][p]);
            c[p][q] = avg;
            c[q][p] = avg;
        }
    }
    let s = invert4(&c)?;
    Ok(props_from_matrices(grid, cases, c, s))
}

fn from_mixed_cases(grid: &PeriodicGridModel, cases: &[SolvedCase]) -> Result<EffectiveProperties> {
    let (cx, cy, cz, cs) = (&cases[0], &cases[1], &cases[2], &cases[3]);
    let e_x = cx.mean_stress[0] / cx.mean_strain[0];
    let nu_xy = -cx.mean_strain[1] / cx.mean_strain[0];
    let nu_xz = -cx.mean_strain[3] / cx.mean_strain[0];
    let e_y = cy.mean_stress[1] / cy.mean_strain[1];
    let nu_yx = -cy.mean_strain[0] / cy.mean_strain[1];
    let nu_yz = -cy.mean_strain[3] / cy.mean_strain[1];
    let e_z = cz.mean_stress[3] / cz.mean_strain[3];
    let g_xy = cs.mean_stress[2] / cs.mean_strain[2];

    let mut s = [[0.0; 4]; 4];
    s[0][0] = 1.0 / e_x;
    s[1][1] = 1.0 / e_y;
    s[2][2] = 1.0 / g_xy;
    s[3][3] = 1.0 / e_z;
    s[1][0] = -nu_xy / e_x;
    s[0][1] = s[1][0];
    s[3][0] = -nu_xz / e_x;
    s[0][3] = s[3][0];
    s[3][1] = -nu_yz / e_y;
    s[1][3] = s[3][1];
    let c = invert4(&s)?;
    Ok(EffectiveProperties {
        e_x,
        e_y,
        e_z,
        g_xy,
        nu_xy,
        nu_yx,
        nu_xz,
        nu_yz,
        stiffness: c,
        compliance: s,
        diagnostics: diagnostics_of(grid, cases),
    })
}

fn props_from_matrices(
    grid: &PeriodicGridModel,
    cases: &[SolvedCase],
    c: [[f64; 4]; 4],
    s: [[f64; 4]; 4],
) -> EffectiveProperties {
    let e_x = 1.0 / s[0][0];
    let e_y = 1.0 / s[1][1];
    EffectiveProperties {
        e_x,
        e_y,
        e_z: 1.0 / s[3][3],
        g_xy: 1.0 / s[2][2],
        nu_xy: -s[1][0] * e_x,
        nu_yx: -s[0][1] * e_y,
        nu_xz: -s[3][0] * e_x,
        nu_yz: -s[3][1] * e_y,
        stiffness: c,
        compliance: s,
        diagnostics: diagnostics_of(grid, cases),
    }
}

fn diagnostics_of(grid: &PeriodicGridModel, cases: &[SolvedCase]) -> SolveDiagnostics {
    SolveDiagnostics {
        nx: grid.nx,
        ny: grid.ny,
        iterations: cases.iter().map(|c| c.iterations).collect(),
        residuals: cases.iter().map(|c| c.residual).collect(),
    }
}

/// Dense 4x4 inverse by Gauss-Jordan elimination with partial pivoting.
fn invert4(a: &[[f64; 4]; 4]) -> Result<[[f64; 4]; 4]> {
    let mut m = *a;
    let mut inv = [[0.0; 4]; 4];
    for (i, row) in inv.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for col in 0..4 {
        let piv = (col..4)
            .max_by(|&p, &q| m[p][col].abs().total_cmp(&m[q][col].abs()))
            .expect("non-empty range");
        if m[piv][col].abs() < 1e-300 {
            return Err(Error::Degenerate("effective stiffness is singular".into()));
        }
        m.swap(col, piv);
        inv.swap(col, piv);
        let d = m[col][col];
        for c in 0..4 {
            m[col][c] /= d;
            inv[col][c] /= d;
        }
        for r in 0..4 {
            if r == col {
                continue;
            }
            let f = m[r][col];
            if f == 0.0 {
                continue;
            }
            for c in 0..4 {
                m[r][c] -= f * m[col][c];
                inv[r][c] -= f * inv[col][c];
            }
        }
    }
    Ok(inv)
}

/// Plane-strain bulk and shear moduli of an isotropic phase.
pub fn plane_moduli(phase: &ElasticPhase) -> (f64, f64) {
    let (l, m) = phase.lame();
    (l + m, m)
}

/// Mori-Tanaka estimate for the transverse plane-strain bulk and shear
/// moduli of a composite with circular inclusions. Arguments are
/// (bulk, shear) pairs of plane-strain moduli; `c` is the inclusion
/// fraction.
pub fn mori_tanaka_2d(
    matrix: (f64, f64),
    inclusion: (f64, f64),
    c: f64,
) -> Result<(f64, f64)> {
    if !(0.0..=1.0).contains(&c) {
        return Err(Error::InvalidInput(format!(
            "inclusion fraction must lie in [0, 1], got {c}"
        )));
    }
    let (km, gm) = matrix;
    let (ki, gi) = inclusion;
    let kt = km + c * (ki - km) * (km + gm) / ((1.0 - c) * (ki - km) + km + gm);
    let gt = gm
        + c * (gi - gm)
            / (1.0 + (1.0 - c) * (gi - gm) * (km + 2.0 * gm) / (2.0 * gm * (km + gm)));
    Ok((kt, gt))
}

/// Transverse Young's modulus of a transversely isotropic material from its
/// plane-strain bulk/shear moduli and axial modulus/Poisson ratio.
fn transverse_modulus(k: f64, g: f64, e_z: f64, nu_z: f64) -> f64 {
    let m = 1.0 + 4.0 * k * nu_z * nu_z / e_z;
    4.0 * k * g / (k + m * g)
}

/// Upper reference curve for the transverse modulus at reduced fiber
/// content: a numerically homogenized hexagonal packing at V_f = 0.9 is
/// diluted with soft matrix inclusions by Mori-Tanaka, and the axial
/// properties follow mixture rules between the two steps.
pub fn two_step_upper(phases: &Phases, vf: f64, nx: usize) -> Result<f64> {
    const STEP_VF: f64 = 0.9;
    if !(0.0..=STEP_VF + 1e-12).contains(&vf) {
        return Err(Error::InvalidInput(format!(
            "two-step model is defined for volume fractions in [0, {STEP_VF}], got {vf}"
        )));
    }
    let hex = hexagonal_lattice(STEP_VF, 2, 1.0)?;
    let props = effective_properties(&hex, phases, nx, BcMode::Periodic)?;
    let ch = &props.stiffness;
    let c00 = 0.5 * (ch[0][0] + ch[1][1]);
    let c01 = 0.5 * (ch[0][1] + ch[1][0]);
    let k1 = 0.5 * (c00 + c01);
    let g1 = 0.5 * (0.5 * (c00 - c01) + ch[2][2]);
    let ez1 = props.e_z;
    let nu_z1 = -props.compliance[0][3] * ez1;

    let f1 = vf / STEP_VF;
    let (kt, gt) = mori_tanaka_2d((k1, g1), plane_moduli(&phases.matrix), 1.0 - f1)?;
    let ez = f1 * ez1 + (1.0 - f1) * phases.matrix.e;
    let nu_z = f1 * nu_z1 + (1.0 - f1) * phases.matrix.nu;
    Ok(transverse_modulus(kt, gt, ez, nu_z))
}

/// One resolution level of a mesh-refinement study.
#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceRow {
    pub nx: usize,
    /// Cell size relative to the mean fiber radius.
    pub cell_over_r: f64,
    pub e_x: f64,
    /// Relative change from the previous (coarser) level.
    pub rel_change: Option<f64>,
}

/// Transverse modulus across raster resolutions, with successive relative
/// changes for judging discretization convergence.
pub fn convergence_study(
    ms: &Microstructure,
    phases: &Phases,
    resolutions: &[usize],
) -> Result<Vec<ConvergenceRow>> {
    if resolutions.len() < 2 {
        return Err(Error::InvalidInput(
            "a convergence study needs at least two resolutions".into(),
        ));
    }
    if ms.fibers.is_empty() {
        return Err(Error::InvalidInput("a convergence study needs fibers".into()));
    }
    let mean_r = ms.fibers.iter().map(|f| f.r).sum::<f64>() / ms.fibers.len() as f64;
    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(resolutions.len());
    for &nx in resolutions {
        let props = effective_properties(ms, phases, nx, BcMode::Periodic)?;
        let rel_change = rows
            .last()
            .map(|prev: &ConvergenceRow| (props.e_x - prev.e_x).abs() / prev.e_x.abs());
        let cell_over_r = ms.domain.lx / nx as f64 / mean_r;
        rows.push(ConvergenceRow { nx, cell_over_r, e_x: props.e_x, rel_change });
    }
    Ok(rows)
}
