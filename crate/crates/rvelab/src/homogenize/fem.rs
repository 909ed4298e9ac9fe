//! Finite-element machinery behind the grid homogenizer: bilinear quad
//! elements, sparse assembly, an FFT-preconditioned conjugate-gradient
//! solver for the periodic cell problems, and Jacobi-preconditioned CG for
//! the non-periodic boundary-condition modes.
//!
//! The kinematics are generalized plane strain: in-plane displacements per
//! node plus a single uniform out-of-plane strain, with material vectors
//! ordered (xx, yy, xy, zz) and engineering shear.

use std::collections::BTreeMap;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

use super::blend::cell_stiffness;
use super::grid::PeriodicGridModel;
use super::{Phases, SolvedCase};

const GAUSS: f64 = 0.577_350_269_189_625_8;

/// Convergence settings for the iterative solvers.
#[derive(Clone, Copy, Debug)]
pub(super) struct SolverOpts {
    pub tol: f64,
    pub max_iter: usize,
}

impl SolverOpts {
    pub fn periodic() -> Self {
        SolverOpts { tol: 1e-8, max_iter: 5000 }
    }

    pub fn masked() -> Self {
        SolverOpts { tol: 1e-8, max_iter: 80_000 }
    }
}

/// Plane strain-displacement rows of the bilinear quad at a local point.
/// Local node order: (-1,-1), (1,-1), (1,1), (-1,1).
fn b_rows(xi: f64, eta: f64, hx: f64, hy: f64) -> [[f64; 8]; 3] {
    let dndxi = [-(1.0 - eta) / 4.0, (1.0 - eta) / 4.0, (1.0 + eta) / 4.0, -(1.0 + eta) / 4.0];
    let dndeta = [-(1.0 - xi) / 4.0, -(1.0 + xi) / 4.0, (1.0 + xi) / 4.0, (1.0 - xi) / 4.0];
    let mut b = [[0.0; 8]; 3];
    for n in 0..4 {
        let dx = dndxi[n] * 2.0 / hx;
        let dy = dndeta[n] * 2.0 / hy;
        b[0][2 * n] = dx;
        b[1][2 * n + 1] = dy;
        b[2][2 * n] = dy;
        b[2][2 * n + 1] = dx;
    }
    b
}

/// Integrated basis products for one cell shape, shared by every element of
/// a uniform grid.
pub(super) struct ElementBasis {
    /// m[a][b][p][q] = integral of B_a[p] * B_b[q] over the cell.
    m: [[[[f64; 8]; 8]; 3]; 3],
    /// Strain-displacement rows at the cell center (the cell average).
    pub bbar: [[f64; 8]; 3],
    pub area: f64,
}

impl ElementBasis {
    pub fn new(hx: f64, hy: f64) -> Self {
        let det = hx * hy / 4.0;
        let mut m = [[[[0.0; 8]; 8]; 3]; 3];
        for &xi in &[-GAUSS, GAUSS] {
            for &eta in &[-GAUSS, GAUSS] {
                let b = b_rows(xi, eta, hx, hy);
                for a in 0..3 {
                    for bb in 0..3 {
                        for p in 0..8 {
                            for q in 0..8 {
                                m[a][bb][p][q] += det * b[a][p] * b[bb][q];
                            }
                        }
                    }
                }
            }
        }
        ElementBasis { m, bbar: b_rows(0.0, 0.0, hx, hy), area: hx * hy }
    }

    /// 8x8 element stiffness for the plane block of a 4x4 material matrix.
    pub fn k_elem(&self, c: &[[f64; 4]; 4]) -> [[f64; 8]; 8] {
        let mut k = [[0.0; 8]; 8];
        for a in 0..3 {
            for b in 0..3 {
                let cab = c[a][b];
                if cab == 0.0 {
                    continue;
                }
                let mab = &self.m[a][b];
                for p in 0..8 {
                    for q in 0..8 {
                        k[p][q] += cab * mab[p][q];
                    }
                }
            }
        }
        k
    }

    /// Element coupling between displacements and the uniform axial strain.
    pub fn c_elem(&self, c: &[[f64; 4]; 4]) -> [f64; 8] {
        let mut v = [0.0; 8];
        for a in 0..3 {
            let caz = c[a][3];
            for p in 0..8 {
                v[p] += self.area * caz * self.bbar[a][p];
            }
        }
        v
    }
}

/// Compressed sparse rows, symmetric by construction.
pub(super) struct Csr {
    pub n: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<u32>,
    pub data: Vec<f64>,
}

impl Csr {
    fn from_maps(maps: Vec<BTreeMap<u32, f64>>) -> Self {
        let n = maps.len();
        let nnz: usize = maps.iter().map(|m| m.len()).sum();
        let mut indptr = Vec::with_capacity(n + 1);
        let mut indices = Vec::with_capacity(nnz);
        let mut data = Vec::with_capacity(nnz);
        indptr.push(0);
        for row in maps {
            for (c, v) in row {
                indices.push(c);
                data.push(v);
            }
            indptr.push(indices.len());
        }
        Csr { n, indptr, indices, data }
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for r in 0..self.n {
            let mut acc = 0.0;
            for idx in self.indptr[r]..self.indptr[r + 1] {
                acc += self.data[idx] * x[self.indices[idx] as usize];
            }
            y[r] = acc;
        }
    }

    pub fn get(&self, r: usize, c: u32) -> f64 {
        let lo = self.indptr[r];
        let hi = self.indptr[r + 1];
        match self.indices[lo..hi].binary_search(&c) {
            Ok(pos) => self.data[lo + pos],
            Err(_) => 0.0,
        }
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.n).map(|r| self.get(r, r as u32)).collect()
    }
}

fn elem_nodes_periodic(i: usize, j: usize, nx: usize, ny: usize) -> [usize; 4] {
    let ip = (i + 1) % nx;
    let jp = (j + 1) % ny;
    [j * nx + i, j * nx + ip, jp * nx + ip, jp * nx + i]
}

fn elem_nodes_rect(i: usize, j: usize, nx: usize) -> [usize; 4] {
    let w = nx + 1;
    [j * w + i, j * w + i + 1, (j + 1) * w + i + 1, (j + 1) * w + i]
}

fn scatter(maps: &mut [BTreeMap<u32, f64>], nodes: &[usize; 4], k: &[[f64; 8]; 8]) {
    for (ln, &na) in nodes.iter().enumerate() {
        for ca in 0..2 {
            let row = 2 * na + ca;
            let map = &mut maps[row];
            for (lm, &nb) in nodes.iter().enumerate() {
                for cb in 0..2 {
                    let col = (2 * nb + cb) as u32;
                    *map.entry(col).or_insert(0.0) += k[2 * ln + ca][2 * lm + cb];
                }
            }
        }
    }
}

/// Assemble the periodic-grid stiffness over node displacements.
fn assemble_periodic(
    nx: usize,
    ny: usize,
    basis: &ElementBasis,
    cmat: &dyn Fn(usize) -> [[f64; 4]; 4],
) -> Csr {
    let mut maps = vec![BTreeMap::new(); 2 * nx * ny];
    for j in 0..ny {
        for i in 0..nx {
            let e = j * nx + i;
            let k = basis.k_elem(&cmat(e));
            scatter(&mut maps, &elem_nodes_periodic(i, j, nx, ny), &k);
        }
    }
    Csr::from_maps(maps)
}

/// Assemble the non-periodic stiffness plus the axial-strain coupling.
fn assemble_rect(
    nx: usize,
    ny: usize,
    basis: &ElementBasis,
    cmat: &dyn Fn(usize) -> [[f64; 4]; 4],
) -> (Csr, Vec<f64>, f64) {
    let nn = (nx + 1) * (ny + 1);
    let mut maps = vec![BTreeMap::new(); 2 * nn];
    let mut coupling = vec![0.0; 2 * nn];
    let mut kzz = 0.0;
    for j in 0..ny {
        for i in 0..nx {
            let e = j * nx + i;
            let c = cmat(e);
            let k = basis.k_elem(&c);
            let ce = basis.c_elem(&c);
            let nodes = elem_nodes_rect(i, j, nx);
            scatter(&mut maps, &nodes, &k);
            for (ln, &nd) in nodes.iter().enumerate() {
                coupling[2 * nd] += ce[2 * ln];
                coupling[2 * nd + 1] += ce[2 * ln + 1];
            }
            kzz += basis.area * c[3][3];
        }
    }
    (Csr::from_maps(maps), coupling, kzz)
}

pub(super) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..a.len() {
        acc += a[i] * b[i];
    }
    acc
}

fn l2(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Remove the per-component mean (the rigid-translation null space).
fn project_means(v: &mut [f64]) {
    let nn = v.len() / 2;
    let mut mx = 0.0;
    let mut my = 0.0;
    for n in 0..nn {
        mx += v[2 * n];
        my += v[2 * n + 1];
    }
    mx /= nn as f64;
    my /= nn as f64;
    for n in 0..nn {
        v[2 * n] -= mx;
        v[2 * n + 1] -= my;
    }
}

/// Block-diagonal spectral inverse of a constant-coefficient reference
/// operator on the same grid, applied through 2-D FFTs. Exact for the
/// reference operator (zero mode excluded), a preconditioner otherwise.
pub(super) struct FftPrecond {
    nx: usize,
    ny: usize,
    inv: Vec<[Complex<f64>; 4]>,
    fwd_x: Arc<dyn Fft<f64>>,
    inv_x: Arc<dyn Fft<f64>>,
    fwd_y: Arc<dyn Fft<f64>>,
    inv_y: Arc<dyn Fft<f64>>,
}

pub(super) struct PrecondWork {
    bx: Vec<Complex<f64>>,
    by: Vec<Complex<f64>>,
    col: Vec<Complex<f64>>,
}

impl FftPrecond {
    pub fn new(nx: usize, ny: usize, hx: f64, hy: f64, c0: &[[f64; 4]; 4]) -> Self {
        // Read the 9-point stencil off a small assembled grid with the same
        // cell shape; offsets -1..1 stay distinct on a 4x4 grid.
        let basis = ElementBasis::new(hx, hy);
        let small = assemble_periodic(4, 4, &basis, &|_| *c0);
        let mut stencil = Vec::with_capacity(9);
        for dj in -1i64..=1 {
            for di in -1i64..=1 {
                let node = (dj.rem_euclid(4) * 4 + di.rem_euclid(4)) as usize;
                let block = [
                    small.get(0, (2 * node) as u32),
                    small.get(0, (2 * node + 1) as u32),
                    small.get(1, (2 * node) as u32),
                    small.get(1, (2 * node + 1) as u32),
                ];
                stencil.push((di as f64, dj as f64, block));
            }
        }

        let mut inv = vec![[Complex::new(0.0, 0.0); 4]; nx * ny];
        let tau = std::f64::consts::TAU;
        for m2 in 0..ny {
            for m1 in 0..nx {
                if m1 == 0 && m2 == 0 {
                    continue; // zero mode: translations, projected out
                }
                let mut sym = [Complex::new(0.0, 0.0); 4];
                for &(di, dj, ref s) in &stencil {
                    let phase =
                        tau * (m1 as f64 * di / nx as f64 + m2 as f64 * dj / ny as f64);
                    let e = Complex::new(phase.cos(), phase.sin());
                    for p in 0..4 {
                        sym[p] += s[p] * e;
                    }
                }
                let det = sym[0] * sym[3] - sym[1] * sym[2];
                inv[m2 * nx + m1] =
                    [sym[3] / det, -sym[1] / det, -sym[2] / det, sym[0] / det];
            }
        }

        let mut planner = FftPlanner::new();
        FftPrecond {
            nx,
            ny,
            inv,
            fwd_x: planner.plan_fft_forward(nx),
            inv_x: planner.plan_fft_inverse(nx),
            fwd_y: planner.plan_fft_forward(ny),
            inv_y: planner.plan_fft_inverse(ny),
        }
    }

    pub fn work(&self) -> PrecondWork {
        PrecondWork {
            bx: vec![Complex::new(0.0, 0.0); self.nx * self.ny],
            by: vec![Complex::new(0.0, 0.0); self.nx * self.ny],
            col: vec![Complex::new(0.0, 0.0); self.ny],
        }
    }

    fn fft2(&self, buf: &mut [Complex<f64>], col: &mut [Complex<f64>], forward: bool) {
        let (row_plan, col_plan) =
            if forward { (&self.fwd_x, &self.fwd_y) } else { (&self.inv_x, &self.inv_y) };
        row_plan.process(buf);
        for i in 0..self.nx {
            for j in 0..self.ny {
                col[j] = buf[j * self.nx + i];
            }
            col_plan.process(col);
            for j in 0..self.ny {
                buf[j * self.nx + i] = col[j];
            }
        }
    }

    pub fn apply(&self, r: &[f64], z: &mut [f64], w: &mut PrecondWork) {
        let nn = self.nx * self.ny;
        for c in 0..nn {
            w.bx[c] = Complex::new(r[2 * c], 0.0);
            w.by[c] = Complex::new(r[2 * c + 1], 0.0);
        }
        let mut col = std::mem::take(&mut w.col);
        self.fft2(&mut w.bx, &mut col, true);
        self.fft2(&mut w.by, &mut col, true);
        for m in 0..nn {
            let iv = &self.inv[m];
            let (x, y) = (w.bx[m], w.by[m]);
            w.bx[m] = iv[0] * x + iv[1] * y;
            w.by[m] = iv[2] * x + iv[3] * y;
        }
        self.fft2(&mut w.bx, &mut col, false);
        self.fft2(&mut w.by, &mut col, false);
        w.col = col;
        let scale = 1.0 / (nn as f64);
        for c in 0..nn {
            z[2 * c] = w.bx[c].re * scale;
            z[2 * c + 1] = w.by[c].re * scale;
        }
    }
}

/// Preconditioned CG on the periodic fluctuation system.
fn pcg_periodic(
    k: &Csr,
    f: &[f64],
    pre: &FftPrecond,
    opts: SolverOpts,
) -> Result<(Vec<f64>, usize, f64)> {
    let n = f.len();
    let mut rhs = f.to_vec();
    project_means(&mut rhs);
    let norm_f = l2(&rhs);
    if norm_f == 0.0 {
        return Ok((vec![0.0; n], 0, 0.0));
    }
    let mut work = pre.work();
    let mut u = vec![0.0; n];
    let mut r = rhs;
    let mut z = vec![0.0; n];
    pre.apply(&r, &mut z, &mut work);
    let mut p = z.clone();
    let mut q = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut rel = l2(&r) / norm_f;
    for it in 1..=opts.max_iter {
        k.matvec(&p, &mut q);
        project_means(&mut q);
        let alpha = rz / dot(&p, &q);
        for i in 0..n {
            u[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        project_means(&mut r);
        rel = l2(&r) / norm_f;
        if rel <= opts.tol {
            return Ok((u, it, rel));
        }
        pre.apply(&r, &mut z, &mut work);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::SolveFailed { iterations: opts.max_iter, residual: rel })
}

/// Jacobi-preconditioned CG with Dirichlet handled by a fixed-DOF mask.
fn pcg_masked(
    apply: &dyn Fn(&[f64], &mut [f64]),
    diag: &[f64],
    rhs: &[f64],
    opts: SolverOpts,
) -> Result<(Vec<f64>, usize, f64)> {
    let n = rhs.len();
    let norm_f = l2(rhs);
    if norm_f == 0.0 {
        return Ok((vec![0.0; n], 0, 0.0));
    }
    let mut u = vec![0.0; n];
    let mut r = rhs.to_vec();
    let mut z: Vec<f64> = r.iter().zip(diag).map(|(ri, di)| ri / di).collect();
    let mut p = z.clone();
    let mut q = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut rel = 1.0;
    for it in 1..=opts.max_iter {
        apply(&p, &mut q);
        let alpha = rz / dot(&p, &q);
        for i in 0..n {
            u[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        rel = l2(&r) / norm_f;
        if rel <= opts.tol {
            return Ok((u, it, rel));
        }
        for i in 0..n {
            z[i] = r[i] / diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::SolveFailed { iterations: opts.max_iter, residual: rel })
}

/// Volume averages of stress and strain accumulated at the Gauss points.
fn mean_fields(
    nx: usize,
    ny: usize,
    basis: &ElementBasis,
    cstore: &[[[f64; 4]; 4]],
    hx: f64,
    hy: f64,
    u: &[f64],
    periodic: bool,
    eps_plane: [f64; 3],
    ezz: f64,
) -> ([f64; 4], [f64; 4]) {
    let det = basis.area / 4.0;
    let total = (nx * ny) as f64 * basis.area;
    let mut sig = [0.0; 4];
    let mut eps = [0.0; 4];
    let mut ue = [0.0; 8];
    for j in 0..ny {
        for i in 0..nx {
            let e = j * nx + i;
            let nodes = if periodic {
                elem_nodes_periodic(i, j, nx, ny)
            } else {
                elem_nodes_rect(i, j, nx)
            };
            for (ln, &nd) in nodes.iter().enumerate() {
                ue[2 * ln] = u[2 * nd];
                ue[2 * ln + 1] = u[2 * nd + 1];
            }
            let c = &cstore[e];
            for &xi in &[-GAUSS, GAUSS] {
                for &eta in &[-GAUSS, GAUSS] {
                    let b = b_rows(xi, eta, hx, hy);
                    let mut strain = [0.0, 0.0, 0.0, ezz];
                    for a in 0..3 {
                        let mut s = eps_plane[a];
                        for p in 0..8 {
                            s += b[a][p] * ue[p];
                        }
                        strain[a] = s;
                    }
                    for p in 0..4 {
                        let mut s = 0.0;
                        for q in 0..4 {
                            s += c[p][q] * strain[q];
                        }
                        sig[p] += det * s;
                        eps[p] += det * strain[p];
                    }
                }
            }
        }
    }
    for p in 0..4 {
        sig[p] /= total;
        eps[p] /= total;
    }
    (sig, eps)
}

/// Periodic cell-problem solver: assembled once per grid and phase pair,
/// reused across load cases.
pub(super) struct PeriodicSolver {
    nx: usize,
    ny: usize,
    hx: f64,
    hy: f64,
    basis: ElementBasis,
    k: Csr,
    pre: FftPrecond,
    cstore: Vec<[[f64; 4]; 4]>,
}

impl PeriodicSolver {
    pub fn new(grid: &PeriodicGridModel, phases: &Phases) -> Self {
        let basis = ElementBasis::new(grid.hx, grid.hy);
        let cstore: Vec<[[f64; 4]; 4]> = grid
            .phi
            .iter()
            .zip(&grid.normals)
            .map(|(&phi, &n)| cell_stiffness(phases, phi, n))
            .collect();
        let k = assemble_periodic(grid.nx, grid.ny, &basis, &|e| cstore[e]);
        let mut c0 = [[0.0; 4]; 4];
        for c in &cstore {
            for p in 0..4 {
                for q in 0..4 {
                    c0[p][q] += c[p][q];
                }
            }
        }
        for row in &mut c0 {
            for v in row {
                *v /= cstore.len() as f64;
            }
        }
        let pre = FftPrecond::new(grid.nx, grid.ny, grid.hx, grid.hy, &c0);
        PeriodicSolver { nx: grid.nx, ny: grid.ny, hx: grid.hx, hy: grid.hy, basis, k, pre, cstore }
    }

    fn rhs(&self, eps: [f64; 4]) -> Vec<f64> {
        let mut f = vec![0.0; 2 * self.nx * self.ny];
        for j in 0..self.ny {
            for i in 0..self.nx {
                let e = j * self.nx + i;
                let c = &self.cstore[e];
                let mut s = [0.0; 4];
                for p in 0..4 {
                    for q in 0..4 {
                        s[p] += c[p][q] * eps[q];
                    }
                }
                let nodes = elem_nodes_periodic(i, j, self.nx, self.ny);
                for (ln, &nd) in nodes.iter().enumerate() {
                    for comp in 0..2 {
                        let mut acc = 0.0;
                        for a in 0..3 {
                            acc += self.basis.bbar[a][2 * ln + comp] * s[a];
                        }
                        f[2 * nd + comp] -= self.basis.area * acc;
                    }
                }
            }
        }
        f
    }

    /// Solve one macroscopic strain case and return averaged fields. The
    /// average stress is cross-checked against the work identity
    /// 2E = A eps:sigma, which fails if assembly, loads, and the solution
    /// are mutually inconsistent.
    pub fn solve_case(&self, eps: [f64; 4], opts: SolverOpts) -> Result<SolvedCase> {
        let f = self.rhs(eps);
        let (u, iterations, residual) = pcg_periodic(&self.k, &f, &self.pre, opts)?;
        let (sig, mean_eps) = mean_fields(
            self.nx,
            self.ny,
            &self.basis,
            &self.cstore,
            self.hx,
            self.hy,
            &u,
            true,
            [eps[0], eps[1], eps[2]],
            eps[3],
        );

        let area_total = (self.nx * self.ny) as f64 * self.basis.area;
        let mut ku = vec![0.0; u.len()];
        self.k.matvec(&u, &mut ku);
        let mut const_term = 0.0;
        for c in &self.cstore {
            let mut s = 0.0;
            for p in 0..4 {
                for q in 0..4 {
                    s += eps[p] * c[p][q] * eps[q];
                }
            }
            const_term += self.basis.area * s;
        }
        let two_e = dot(&u, &ku) - 2.0 * dot(&u, &f) + const_term;
        let work = area_total * dot(&eps, &sig);
        let scale = two_e.abs().max(work.abs());
        if scale > 1e-300 && (two_e - work).abs() > 1e-6 * scale {
            return Err(Error::SolveFailed {
                iterations,
                residual: (two_e - work).abs() / scale,
            });
        }

        Ok(SolvedCase {
            mean_stress: sig,
            mean_strain: mean_eps,
            displacement: u,
            iterations,
            residual,
        })
    }
}

/// Non-periodic solver shared by the mixed and uniform-displacement modes.
pub(super) struct RectSolver {
    nx: usize,
    ny: usize,
    hx: f64,
    hy: f64,
    basis: ElementBasis,
    k: Csr,
    coupling: Vec<f64>,
    kzz: f64,
    diag: Vec<f64>,
    cstore: Vec<[[f64; 4]; 4]>,
}

impl RectSolver {
    pub fn new(grid: &PeriodicGridModel, phases: &Phases) -> Self {
        let basis = ElementBasis::new(grid.hx, grid.hy);
        let cstore: Vec<[[f64; 4]; 4]> = grid
            .phi
            .iter()
            .zip(&grid.normals)
            .map(|(&phi, &n)| cell_stiffness(phases, phi, n))
            .collect();
        let (k, coupling, kzz) = assemble_rect(grid.nx, grid.ny, &basis, &|e| cstore[e]);
        let diag = k.diag();
        RectSolver {
            nx: grid.nx,
            ny: grid.ny,
            hx: grid.hx,
            hy: grid.hy,
            basis,
            k,
            coupling,
            kzz,
            diag,
            cstore,
        }
    }

    fn n_nodes(&self) -> usize {
        (self.nx + 1) * (self.ny + 1)
    }

    fn node(&self, i: usize, j: usize) -> usize {
        j * (self.nx + 1) + i
    }

    /// Solve with prescribed displacement values on `fixed` DOFs, an axial
    /// strain that is either prescribed or left as one free unknown
    /// (work-free, i.e. zero net axial force), and everything else natural.
    fn solve_general(
        &self,
        fixed: &[(usize, f64)],
        free_ezz: bool,
        ezz_value: f64,
        opts: SolverOpts,
    ) -> Result<SolvedCase> {
        let nu = 2 * self.n_nodes();
        let n = nu + usize::from(free_ezz);
        let mut is_fixed = vec![false; n];
        let mut u_lift = vec![0.0; nu];
        for &(dof, val) in fixed {
            is_fixed[dof] = true;
            u_lift[dof] = val;
        }

        let mut rhs = vec![0.0; n];
        self.k.matvec(&u_lift, &mut rhs[..nu]);
        for d in 0..nu {
            rhs[d] = -rhs[d];
            if !free_ezz {
                rhs[d] -= self.coupling[d] * ezz_value;
            }
        }
        if free_ezz {
            rhs[nu] = -dot(&self.coupling, &u_lift);
        }
        for d in 0..nu {
            if is_fixed[d] {
                rhs[d] = 0.0;
            }
        }

        let mut diag = vec![0.0; n];
        for d in 0..nu {
            diag[d] = if is_fixed[d] { 1.0 } else { self.diag[d] };
        }
        if free_ezz {
            diag[nu] = self.kzz;
        }

        let k = &self.k;
        let coupling = &self.coupling;
        let kzz = self.kzz;
        let fixed_mask = is_fixed.clone();
        let apply = move |x: &[f64], y: &mut [f64]| {
            k.matvec(&x[..nu], &mut y[..nu]);
            if free_ezz {
                let e = x[nu];
                for d in 0..nu {
                    y[d] += coupling[d] * e;
                }
                y[nu] = dot(coupling, &x[..nu]) + kzz * e;
            }
            for d in 0..nu {
                if fixed_mask[d] {
                    y[d] = 0.0;
                }
            }
        };

        let (sol, iterations, residual) = pcg_masked(&apply, &diag, &rhs, opts)?;

        let mut u_total = u_lift;
        for d in 0..nu {
            u_total[d] += sol[d];
        }
        let ezz = if free_ezz { sol[nu] } else { ezz_value };
        let (sig, eps) = mean_fields(
            self.nx,
            self.ny,
            &self.basis,
            &self.cstore,
            self.hx,
            self.hy,
            &u_total,
            false,
            [0.0; 3],
            ezz,
        );
        Ok(SolvedCase {
            mean_stress: sig,
            mean_strain: eps,
            displacement: u_total,
            iterations,
            residual,
        })
    }

    /// Mixed uniaxial extension: prescribed normal displacement on the two
    /// faces orthogonal to the load, zero shear there, traction-free lateral
    /// faces, and a free uniform axial strain.
    pub fn solve_mixed_axis(&self, axis: usize, strain: f64, opts: SolverOpts) -> Result<SolvedCase> {
        let mut fixed = Vec::new();
        match axis {
            0 => {
                let stretch = strain * self.nx as f64 * self.hx;
                for j in 0..=self.ny {
                    fixed.push((2 * self.node(0, j), 0.0));
                    fixed.push((2 * self.node(self.nx, j), stretch));
                }
                fixed.push((2 * self.node(0, 0) + 1, 0.0));
            }
            1 => {
                let stretch = strain * self.ny as f64 * self.hy;
                for i in 0..=self.nx {
                    fixed.push((2 * self.node(i, 0) + 1, 0.0));
                    fixed.push((2 * self.node(i, self.ny) + 1, stretch));
                }
                fixed.push((2 * self.node(0, 0), 0.0));
            }
            _ => unreachable!("axis is 0 or 1"),
        }
        self.solve_general(&fixed, true, 0.0, opts)
    }

    /// Mixed axial extension: uniform out-of-plane strain with all in-plane
    /// faces traction-free (rigid motion pinned at two corners).
    pub fn solve_mixed_zz(&self, strain: f64, opts: SolverOpts) -> Result<SolvedCase> {
        let fixed = vec![
            (2 * self.node(0, 0), 0.0),
            (2 * self.node(0, 0) + 1, 0.0),
            (2 * self.node(self.nx, 0) + 1, 0.0),
        ];
        self.solve_general(&fixed, false, strain, opts)
    }

    /// Uniform-displacement (kinematic) boundary conditions for the full
    /// macroscopic strain vector.
    pub fn solve_kubc(&self, eps: [f64; 4], opts: SolverOpts) -> Result<SolvedCase> {
        let mut fixed = Vec::new();
        for j in 0..=self.ny {
            for i in 0..=self.nx {
                if i == 0 || i == self.nx || j == 0 || j == self.ny {
                    let x = i as f64 * self.hx;
                    let y = j as f64 * self.hy;
                    let nd = self.node(i, j);
                    fixed.push((2 * nd, eps[0] * x + 0.5 * eps[2] * y));
                    fixed.push((2 * nd + 1, 0.5 * eps[2] * x + eps[1] * y));
                }
            }
        }
        self.solve_general(&fixed, false, eps[3], opts)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::homogenize::{stiffness_matrix, ElasticPhase};

    fn phases(ef: f64, nuf: f64, em: f64, num: f64) -> Phases {
        Phases {
            fiber: ElasticPhase::new(ef, nuf).unwrap(),
            matrix: ElasticPhase::new(em, num).unwrap(),
        }
    }

    fn grid_from(phi: Vec<f64>, nx: usize, ny: usize, lx: f64, ly: f64) -> PeriodicGridModel {
        let normals = vec![[0.0; 2]; phi.len()];
        PeriodicGridModel {
            nx,
            ny,
            hx: lx / nx as f64,
            hy: ly / ny as f64,
            phi,
            normals,
            lx,
            ly,
            periodic: true,
        }
    }

    /// Plain Gauss elimination with partial pivoting, for small test systems.
    fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
        let n = b.len();
        for col in 0..n {
            let piv = (col..n).max_by(|&p, &q| a[p][col].abs().total_cmp(&a[q][col].abs())).unwrap();
            a.swap(col, piv);
            b.swap(col, piv);
            let d = a[col][col];
            for r in col + 1..n {
                let f = a[r][col] / d;
                if f == 0.0 {
                    continue;
                }
                for c in col..n {
                    a[r][c] -= f * a[col][c];
                }
                b[r] -= f * b[col];
            }
        }
        let mut x = vec![0.0; n];
        for r in (0..n).rev() {
            let mut acc = b[r];
            for c in r + 1..n {
                acc -= a[r][c] * x[c];
            }
            x[r] = acc / a[r][r];
        }
        x
    }

    #[test]
    fn element_stiffness_ignores_rigid_translation() {
        let c = stiffness_matrix(&ElasticPhase::new(3.0, 0.3).unwrap());
        let basis = ElementBasis::new(0.7, 0.4);
        let k = basis.k_elem(&c);
        for p in 0..8 {
            let tx: f64 = (0..4).map(|n| k[p][2 * n]).sum();
            let ty: f64 = (0..4).map(|n| k[p][2 * n + 1]).sum();
            assert!(tx.abs() < 1e-12 && ty.abs() < 1e-12, "row {p} not translation-free");
            assert!((k[p][p] > 0.0) && (k[p][p].is_finite()));
            for q in 0..8 {
                assert!((k[p][q] - k[q][p]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn periodic_solution_matches_dense_oracle() {
        // 2x2 periodic grid, four distinct cell fractions, solved in the
        // test by direct Gauss-point assembly and dense elimination with a
        // pinned-node gauge. Average stress is gauge-invariant.
        let ph = phases(10.0, 0.2, 1.0, 0.35);
        let (hx, hy) = (0.7, 0.4);
        let phi = vec![1.0, 0.0, 0.5, 0.25];
        let grid = grid_from(phi.clone(), 2, 2, 2.0 * hx, 2.0 * hy);
        let eps = [1.0, 0.0, 0.0, 0.0];

        let solver = PeriodicSolver::new(&grid, &ph);
        let case = solver.solve_case(eps, SolverOpts { tol: 1e-13, max_iter: 500 }).unwrap();

        // Oracle: dense assembly over the 4 nodes (8 DOFs) of the wrapped
        // 2x2 grid, integrating each element with its own Gauss loop.
        let cf = stiffness_matrix(&ph.fiber);
        let cm = stiffness_matrix(&ph.matrix);
        let cmats: Vec<[[f64; 4]; 4]> = phi
            .iter()
            .map(|&p| {
                let mut c = [[0.0; 4]; 4];
                for a in 0..4 {
                    for b in 0..4 {
                        c[a][b] = p * cf[a][b] + (1.0 - p) * cm[a][b];
                    }
                }
                c
            })
            .collect();
        let mut kd = vec![vec![0.0; 8]; 8];
        let mut fd = vec![0.0; 8];
        let det = hx * hy / 4.0;
        let g = 1.0 / 3.0_f64.sqrt();
        for j in 0..2usize {
            for i in 0..2usize {
                let c = &cmats[j * 2 + i];
                let nodes =
                    [j * 2 + i, j * 2 + (i + 1) % 2, ((j + 1) % 2) * 2 + (i + 1) % 2, ((j + 1) % 2) * 2 + i];
                for &xi in &[-g, g] {
                    for &eta in &[-g, g] {
                        let b = b_rows(xi, eta, hx, hy);
                        for (ln, &na) in nodes.iter().enumerate() {
                            for ca in 0..2 {
                                let pr = 2 * na + ca;
                                let pl = 2 * ln + ca;
                                // Load: -B^T (C eps), plane rows.
                                let mut s = [0.0; 4];
                                for a in 0..4 {
                                    for q in 0..4 {
                                        s[a] += c[a][q] * eps[q];
                                    }
                                }
                                for a in 0..3 {
                                    fd[pr] -= det * b[a][pl] * s[a];
                                }
                                for (lm, &nb) in nodes.iter().enumerate() {
                                    for cb in 0..2 {
                                        let qc = 2 * nb + cb;
                                        let ql = 2 * lm + cb;
                                        let mut acc = 0.0;
                                        for a in 0..3 {
                                            for bb in 0..3 {
                                                acc += b[a][pl] * c[a][bb] * b[bb][ql];
                                            }
                                        }
                                        kd[pr][qc] += det * acc;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        // Gauge: pin node 0 completely, solve the remaining 6x6.
        let keep: Vec<usize> = (2..8).collect();
        let a_red: Vec<Vec<f64>> =
            keep.iter().map(|&r| keep.iter().map(|&c| kd[r][c]).collect()).collect();
        let b_red: Vec<f64> = keep.iter().map(|&r| fd[r]).collect();
        let x = dense_solve(a_red, b_red);
        let mut u_oracle = vec![0.0; 8];
        for (idx, &dof) in keep.iter().enumerate() {
            u_oracle[dof] = x[idx];
        }
        // Oracle average stress from Gauss-point stresses.
        let mut sig = [0.0; 4];
        let area_total = 4.0 * hx * hy;
        for j in 0..2usize {
            for i in 0..2usize {
                let c = &cmats[j * 2 + i];
                let nodes =
                    [j * 2 + i, j * 2 + (i + 1) % 2, ((j + 1) % 2) * 2 + (i + 1) % 2, ((j + 1) % 2) * 2 + i];
                for &xi in &[-g, g] {
                    for &eta in &[-g, g] {
                        let b = b_rows(xi, eta, hx, hy);
                        let mut strain = eps;
                        for a in 0..3 {
                            for (ln, &nd) in nodes.iter().enumerate() {
                                strain[a] += b[a][2 * ln] * u_oracle[2 * nd]
                                    + b[a][2 * ln + 1] * u_oracle[2 * nd + 1];
                            }
                        }
                        for p in 0..4 {
                            for q in 0..4 {
                                sig[p] += det * c[p][q] * strain[q] / area_total;
                            }
                        }
                    }
                }
            }
        }

        for p in 0..4 {
            assert!(
                (case.mean_stress[p] - sig[p]).abs() <= 1e-8 * sig[0].abs(),
                "component {p}: {} vs oracle {}",
                case.mean_stress[p],
                sig[p]
            );
        }
        // The two gauges differ by a constant shift per component only.
        let dx0 = case.displacement[0] - u_oracle[0];
        let dy0 = case.displacement[1] - u_oracle[1];
        for nd in 0..4 {
            assert!((case.displacement[2 * nd] - u_oracle[2 * nd] - dx0).abs() < 1e-9);
            assert!((case.displacement[2 * nd + 1] - u_oracle[2 * nd + 1] - dy0).abs() < 1e-9);
        }
    }

    #[test]
    fn fft_preconditioner_inverts_its_reference_operator() {
        let c0 = stiffness_matrix(&ElasticPhase::new(2.3, 0.3).unwrap());
        let (nx, ny, hx, hy) = (8usize, 6usize, 0.13, 0.21);
        let basis = ElementBasis::new(hx, hy);
        let k = assemble_periodic(nx, ny, &basis, &|_| c0);
        let pre = FftPrecond::new(nx, ny, hx, hy, &c0);
        let mut work = pre.work();

        // Deterministic mean-free test vector.
        let n = 2 * nx * ny;
        let mut v: Vec<f64> = (0..n).map(|i| ((i * 2654435761) % 1000) as f64 / 1000.0 - 0.5).collect();
        project_means(&mut v);
        let mut kv = vec![0.0; n];
        k.matvec(&v, &mut kv);
        let mut z = vec![0.0; n];
        pre.apply(&kv, &mut z, &mut work);
        let scale = l2(&v);
        for i in 0..n {
            assert!(
                (z[i] - v[i]).abs() <= 1e-10 * scale,
                "component {i}: {} vs {}",
                z[i],
                v[i]
            );
        }
    }

    #[test]
    fn uniform_material_transmits_macro_strain_exactly() {
        let ph = phases(5.0, 0.25, 5.0, 0.25);
        let c = stiffness_matrix(&ph.matrix);
        let phi: Vec<f64> = (0..16 * 12).map(|i| (i % 7) as f64 / 6.0).collect();
        let grid = grid_from(phi, 16, 12, 1.0, 0.75);
        let solver = PeriodicSolver::new(&grid, &ph);
        for eps in [[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]] {
            let case = solver.solve_case(eps, SolverOpts::periodic()).unwrap();
            let mut expected = [0.0; 4];
            for p in 0..4 {
                for q in 0..4 {
                    expected[p] += c[p][q] * eps[q];
                }
            }
            for p in 0..4 {
                assert!(
                    (case.mean_stress[p] - expected[p]).abs() <= 1e-9 * c[0][0],
                    "{:?}: got {:?}",
                    eps,
                    case.mean_stress
                );
            }
            let fluct = l2(&case.displacement);
            assert!(fluct <= 1e-9, "uniform material should produce no fluctuation, got {fluct}");
        }
    }

    #[test]
    fn zero_macro_strain_produces_zero_fields() {
        let ph = phases(20.0, 0.2, 1.0, 0.3);
        let phi: Vec<f64> = (0..64).map(|i| if i % 3 == 0 { 1.0 } else { 0.0 }).collect();
        let grid = grid_from(phi, 8, 8, 1.0, 1.0);
        let solver = PeriodicSolver::new(&grid, &ph);
        let case = solver.solve_case([0.0; 4], SolverOpts::periodic()).unwrap();
        assert_eq!(case.iterations, 0);
        assert!(case.mean_stress.iter().all(|&s| s == 0.0));
        assert!(case.displacement.iter().all(|&u| u == 0.0));
    }

    #[test]
    fn homogeneous_mixed_extension_is_uniaxial_stress() {
        let e = 3.5;
        let nu = 0.35;
        let ph = phases(e, nu, e, nu);
        let grid = PeriodicGridModel {
            nx: 10,
            ny: 8,
            hx: 0.1,
            hy: 0.1,
            phi: vec![0.0; 80],
            normals: vec![[0.0; 2]; 80],
            lx: 1.0,
            ly: 0.8,
            periodic: false,
        };
        let solver = RectSolver::new(&grid, &ph);
        let case = solver.solve_mixed_axis(0, 1.0, SolverOpts::masked()).unwrap();
        let ex = case.mean_stress[0] / case.mean_strain[0];
        assert!((ex - e).abs() <= 1e-8 * e, "E_x {ex} vs {e}");
        assert!(case.mean_stress[1].abs() <= 1e-8 * e, "lateral stress {}", case.mean_stress[1]);
        assert!(case.mean_stress[3].abs() <= 1e-8 * e, "axial stress {}", case.mean_stress[3]);
        let nu_xy = -case.mean_strain[1] / case.mean_strain[0];
        let nu_xz = -case.mean_strain[3] / case.mean_strain[0];
        assert!((nu_xy - nu).abs() <= 1e-8);
        assert!((nu_xz - nu).abs() <= 1e-8);

        let zz = solver.solve_mixed_zz(1.0, SolverOpts::masked()).unwrap();
        let ez = zz.mean_stress[3] / zz.mean_strain[3];
        assert!((ez - e).abs() <= 1e-8 * e, "E_z {ez} vs {e}");

        let sh = solver.solve_kubc([0.0, 0.0, 1.0, 0.0], SolverOpts::masked()).unwrap();
        let g = e / (2.0 * (1.0 + nu));
        let gm = sh.mean_stress[2] / sh.mean_strain[2];
        assert!((gm - g).abs() <= 1e-8 * g, "G {gm} vs {g}");
    }

    #[test]
    fn iteration_cap_reports_failure() {
        let ph = phases(100.0, 0.2, 1.0, 0.3);
        let phi: Vec<f64> = (0..256).map(|i| if (i / 16 + i % 16) % 2 == 0 { 1.0 } else { 0.0 }).collect();
        let grid = grid_from(phi, 16, 16, 1.0, 1.0);
        let solver = PeriodicSolver::new(&grid, &ph);
        let err = solver
            .solve_case([1.0, 0.0, 0.0, 0.0], SolverOpts { tol: 1e-12, max_iter: 2 })
            .unwrap_err();
        match err {
            Error::SolveFailed { iterations, residual } => {
                assert_eq!(iterations, 2);
                assert!(residual > 1e-12);
            }
            other => panic!("expected SolveFailed, got {other:?}"),
        }
    }

}
