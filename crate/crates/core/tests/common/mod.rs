//! Independent oracles for the integration suites: a brute-force dense
//! materialization of the strided dictionary, a Jacobi eigensolver, dense
//! least-squares helpers and small utilities. Everything here is written
//! from scratch against the definitions, not by calling the operators
//! under test.

#![allow(dead_code)]

use csc_core::dict::LocalDictionary;
use csc_core::image::Image;
use csc_core::rng::StreamRng;

/// Dense matrix of the strided dictionary: one row per pixel (row-major),
/// one column per coefficient in map-major order, i.e. column index
/// `map * sites + lr * lattice_w + lc`, matching the feature-map layout.
pub fn dense_dictionary(
    dict: &LocalDictionary<f64>,
    stride: usize,
    offset: (usize, usize),
    h: usize,
    w: usize,
) -> Vec<Vec<f64>> {
    let lh = (h - offset.0).div_ceil(stride);
    let lw = (w - offset.1).div_ceil(stride);
    let sites = lh * lw;
    let (ph, pw) = (dict.patch_h(), dict.patch_w());
    let mut cols = vec![vec![0.0; h * w]; dict.num_atoms() * sites];
    for map in 0..dict.num_atoms() {
        let atom = dict.atom(map);
        for lr in 0..lh {
            for lc in 0..lw {
                let col = &mut cols[map * sites + lr * lw + lc];
                let row0 = offset.0 + lr * stride;
                let col0 = offset.1 + lc * stride;
                for r in 0..ph {
                    for c in 0..pw {
                        let pr = (row0 + r) % h;
                        let pc = (col0 + c) % w;
                        col[pr * w + pc] += atom[r * pw + c];
                    }
                }
            }
        }
    }
    cols
}

/// `A x` where A is given by columns.
pub fn mat_vec(cols: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    let rows = cols[0].len();
    let mut out = vec![0.0; rows];
    for (col, &xi) in cols.iter().zip(x) {
        if xi != 0.0 {
            for (o, &cv) in out.iter_mut().zip(col) {
                *o += xi * cv;
            }
        }
    }
    out
}

/// `A^T y` where A is given by columns.
pub fn mat_t_vec(cols: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    cols.iter()
        .map(|col| col.iter().zip(y).map(|(&a, &b)| a * b).sum())
        .collect()
}

/// Gram matrix `A^T A` from columns.
pub fn gram(cols: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = cols.len();
    let mut g = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i..n {
            let v: f64 = cols[i].iter().zip(&cols[j]).map(|(&a, &b)| a * b).sum();
            g[i][j] = v;
            g[j][i] = v;
        }
    }
    g
}

/// Largest eigenvalue of a symmetric matrix by cyclic Jacobi rotations.
pub fn jacobi_max_eigenvalue(mut a: Vec<Vec<f64>>) -> f64 {
    let n = a.len();
    if n == 1 {
        return a[0][0];
    }
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += a[i][j] * a[i][j];
            }
        }
        if off.sqrt() < 1e-12 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[i][i]).fold(f64::NEG_INFINITY, f64::max)
}

/// Residual norm of the least-squares fit `min ||A x - y||` computed by
/// projecting onto an orthonormal basis of the column space (modified
/// Gram-Schmidt with dependent-column dropping).
pub fn least_squares_residual(cols: &[Vec<f64>], y: &[f64]) -> f64 {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for col in cols {
        let mut v = col.clone();
        for b in &basis {
            let dot: f64 = v.iter().zip(b).map(|(&a, &c)| a * c).sum();
            for (vi, &bi) in v.iter_mut().zip(b) {
                *vi -= dot * bi;
            }
        }
        let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let col_norm: f64 = col.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-10 * col_norm.max(1.0) {
            v.iter_mut().for_each(|x| *x /= norm);
            basis.push(v);
        }
    }
    let mut residual = y.to_vec();
    for b in &basis {
        let dot: f64 = residual.iter().zip(b).map(|(&a, &c)| a * c).sum();
        for (ri, &bi) in residual.iter_mut().zip(b) {
            *ri -= dot * bi;
        }
    }
    residual.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Solve a symmetric positive-definite system by Gaussian elimination
/// with partial pivoting.
pub fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = a.len();
    for k in 0..n {
        let pivot = (k..n)
            .max_by(|&i, &j| a[i][k].abs().partial_cmp(&a[j][k].abs()).unwrap())
            .unwrap();
        a.swap(k, pivot);
        b.swap(k, pivot);
        assert!(a[k][k].abs() > 1e-300, "singular system");
        for i in (k + 1)..n {
            let f = a[i][k] / a[k][k];
            for j in k..n {
                a[i][j] -= f * a[k][j];
            }
            b[i] -= f * b[k];
        }
    }
    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let mut acc = b[k];
        for j in (k + 1)..n {
            acc -= a[k][j] * x[j];
        }
        x[k] = acc / a[k][k];
    }
    x
}

/// Random dictionary with unit-norm atoms.
pub fn random_dict(
    rng: &mut StreamRng,
    patch_side: usize,
    num_atoms: usize,
) -> LocalDictionary<f64> {
    let n = patch_side * patch_side;
    let mut atoms = vec![0.0; n * num_atoms];
    for j in 0..num_atoms {
        let col = &mut atoms[j * n..(j + 1) * n];
        for v in col.iter_mut() {
            *v = rng.normal();
        }
        let norm: f64 = col.iter().map(|x| x * x).sum::<f64>().sqrt();
        col.iter_mut().for_each(|v| *v /= norm);
    }
    LocalDictionary::new(patch_side, num_atoms, atoms).unwrap()
}

pub fn random_image(rng: &mut StreamRng, h: usize, w: usize, scale: f64) -> Image<f64> {
    Image::from_fn(h, w, |_, _| rng.normal() * scale)
}
