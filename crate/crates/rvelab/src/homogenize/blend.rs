//! Per-cell material models: pure phases for uncut cells and an
//! interface-oriented laminate (composite voxel) for cells cut by a fiber
//! boundary. The laminate is exact for layered two-phase material, which
//! removes most of the staircase stiffening a plain arithmetic blend
//! produces at high phase contrast.

use super::{stiffness_matrix, Phases};

/// Kelvin scaling factors between engineering-shear and tensor notation.
const KELVIN: [f64; 4] = [1.0, 1.0, std::f64::consts::SQRT_2, 1.0];

fn to_kelvin(c: &[[f64; 4]; 4]) -> [[f64; 4]; 4] {
    let mut k = [[0.0; 4]; 4];
    for p in 0..4 {
        for q in 0..4 {
            k[p][q] = c[p][q] * KELVIN[p] * KELVIN[q];
        }
    }
    k
}

fn from_kelvin(k: &[[f64; 4]; 4]) -> [[f64; 4]; 4] {
    let mut c = [[0.0; 4]; 4];
    for p in 0..4 {
        for q in 0..4 {
            c[p][q] = k[p][q] / (KELVIN[p] * KELVIN[q]);
        }
    }
    c
}

/// Rotation of (xx, yy, sqrt2*xy, zz) Kelvin components by the in-plane
/// rotation taking local axes to global ones, local x = (c, s).
fn kelvin_rotation(c: f64, s: f64) -> [[f64; 4]; 4] {
    let r2 = std::f64::consts::SQRT_2;
    [
        [c * c, s * s, -r2 * c * s, 0.0],
        [s * s, c * c, r2 * c * s, 0.0],
        [r2 * c * s, -r2 * c * s, c * c - s * s, 0.0],
        [0.0, 0.0, 0.0, 1.0],
    ]
}

fn mat4_mul(a: &[[f64; 4]; 4], b: &[[f64; 4]; 4]) -> [[f64; 4]; 4] {
    let mut out = [[0.0; 4]; 4];
    for p in 0..4 {
        for q in 0..4 {
            let mut acc = 0.0;
            for r in 0..4 {
                acc += a[p][r] * b[r][q];
            }
            out[p][q] = acc;
        }
    }
    out
}

fn transpose4(a: &[[f64; 4]; 4]) -> [[f64; 4]; 4] {
    let mut t = [[0.0; 4]; 4];
    for p in 0..4 {
        for q in 0..4 {
            t[p][q] = a[q][p];
        }
    }
    t
}

fn inv2(m: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    [[m[1][1] / det, -m[0][1] / det], [-m[1][0] / det, m[0][0] / det]]
}

fn mul2(a: [[f64; 2]; 2], b: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
    [
        [a[0][0] * b[0][0] + a[0][1] * b[1][0], a[0][0] * b[0][1] + a[0][1] * b[1][1]],
        [a[1][0] * b[0][0] + a[1][1] * b[1][0], a[1][0] * b[0][1] + a[1][1] * b[1][1]],
    ]
}

fn t2(a: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
    [[a[0][0], a[1][0]], [a[0][1], a[1][1]]]
}

/// Exact stiffness of a two-phase laminate with layering normal along the
/// local x axis, in (xx, yy, xy, zz) engineering notation. Traction
/// components (xx, xy) are continuous across layers, in-plane strains
/// (yy, zz) are common to both.
fn laminate_local(cf: &[[f64; 4]; 4], cm: &[[f64; 4]; 4], phi: f64) -> [[f64; 4]; 4] {
    let layers = [(cf, phi), (cm, 1.0 - phi)];
    let mut sum_ainv = [[0.0; 2]; 2];
    let mut sum_ainvb = [[0.0; 2]; 2];
    let mut sum_d = [[0.0; 2]; 2];
    for (c, f) in layers {
        let a = [[c[0][0], c[0][2]], [c[2][0], c[2][2]]];
        let b = [[c[0][1], c[0][3]], [c[2][1], c[2][3]]];
        let d = [[c[1][1], c[1][3]], [c[3][1], c[3][3]]];
        let ainv = inv2(a);
        let ainvb = mul2(ainv, b);
        let btainvb = mul2(t2(b), ainvb);
        for p in 0..2 {
            for q in 0..2 {
                sum_ainv[p][q] += f * ainv[p][q];
                sum_ainvb[p][q] += f * ainvb[p][q];
                sum_d[p][q] += f * (d[p][q] - btainvb[p][q]);
            }
        }
    }
    let a_eff = inv2(sum_ainv);
    let b_eff = mul2(a_eff, sum_ainvb);
    let mut d_eff = sum_d;
    let cross = mul2(t2(sum_ainvb), b_eff);
    for p in 0..2 {
        for q in 0..2 {
            d_eff[p][q] += cross[p][q];
        }
    }
    let mut c = [[0.0; 4]; 4];
    // Scatter the (t; s) = ((xx, xy); (yy, zz)) blocks back.
    let tix = [0usize, 2];
    let six = [1usize, 3];
    for p in 0..2 {
        for q in 0..2 {
            c[tix[p]][tix[q]] = a_eff[p][q];
            c[tix[p]][six[q]] = b_eff[p][q];
            c[six[q]][tix[p]] = b_eff[p][q];
            c[six[p]][six[q]] = d_eff[p][q];
        }
    }
    c
}

/// Laminate stiffness for an arbitrary (not necessarily unit) in-plane
/// layering normal.
pub(super) fn laminate_stiffness(
    cf: &[[f64; 4]; 4],
    cm: &[[f64; 4]; 4],
    phi: f64,
    normal: [f64; 2],
) -> [[f64; 4]; 4] {
    // Isotropic layers look the same in any frame, so build the laminate in
    // the normal-aligned frame and rotate the result to global axes.
    let local = laminate_local(cf, cm, phi);
    let len = normal[0].hypot(normal[1]);
    let (c, s) = (normal[0] / len, normal[1] / len);
    if s == 0.0 && c > 0.0 {
        return local;
    }
    let r = kelvin_rotation(c, s);
    let k = mat4_mul(&mat4_mul(&r, &to_kelvin(&local)), &transpose4(&r));
    from_kelvin(&k)
}

/// Stiffness of one raster cell: pure phase when uncut, oriented laminate
/// when the cell straddles a fiber boundary, arithmetic blend as the
/// normal-free fallback.
pub(super) fn cell_stiffness(phases: &Phases, phi: f64, normal: [f64; 2]) -> [[f64; 4]; 4] {
    let cf = stiffness_matrix(&phases.fiber);
    let cm = stiffness_matrix(&phases.matrix);
    if phi >= 1.0 {
        return cf;
    }
    if phi <= 0.0 {
        return cm;
    }
    let len2 = normal[0] * normal[0] + normal[1] * normal[1];
    if len2 > 0.0 {
        let len = len2.sqrt();
        laminate_stiffness(&cf, &cm, phi, [normal[0] / len, normal[1] / len])
    } else {
        let mut c = [[0.0; 4]; 4];
        for p in 0..4 {
            for q in 0..4 {
                c[p][q] = phi * cf[p][q] + (1.0 - phi) * cm[p][q];
            }
        }
        c
    }
}
