//! Reference implementations used only by tests. They share no code with the
//! library: plain `Vec` matrices, nested loops and a cyclic Jacobi eigensolver.

#![allow(dead_code, clippy::needless_range_loop)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Mat = Vec<Vec<f64>>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(r: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = r.random::<f64>().max(1e-300);
    let u2: f64 = r.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

pub fn zeros(r: usize, c: usize) -> Mat {
    vec![vec![0.0; c]; r]
}

pub fn transpose(a: &Mat) -> Mat {
    let (r, c) = (a.len(), a[0].len());
    (0..c).map(|j| (0..r).map(|i| a[i][j]).collect()).collect()
}

pub fn matmul(a: &Mat, b: &Mat) -> Mat {
    let (n, m, p) = (a.len(), b.len(), b[0].len());
    let mut out = zeros(n, p);
    for i in 0..n {
        for k in 0..m {
            for j in 0..p {
                out[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    out
}

/// Cyclic Jacobi rotations; returns (eigenvalues, eigenvectors as columns).
pub fn jacobi_eigen(sym: &Mat) -> (Vec<f64>, Mat) {
    let n = sym.len();
    let mut a = sym.clone();
    let mut v = zeros(n, n);
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        let scale: f64 = (0..n).map(|i| a[i][i] * a[i][i]).sum::<f64>().max(1e-300);
        if off <= 1e-30 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    ((0..n).map(|i| a[i][i]).collect(), v)
}

/// Flat cross-view QDA: solves `S_E w = λ (S_I + reg·I) w` through the
/// symmetric inverse square root of the regularized `S_I`. Returns the `keep`
/// leading directions (unit-norm columns) and their eigenvalues.
pub fn flat_xqda(
    parents: &[Vec<f64>],
    children: &[Vec<f64>],
    positives: &[(usize, usize)],
    negatives: &[(usize, usize)],
    reg_scale: f64,
    keep: usize,
) -> (Mat, Vec<f64>) {
    let n = parents[0].len();
    let scatter = |pairs: &[(usize, usize)]| {
        let mut s = zeros(n, n);
        for &(p, c) in pairs {
            let d: Vec<f64> = (0..n).map(|i| parents[p][i] - children[c][i]).collect();
            for i in 0..n {
                for j in 0..n {
                    s[i][j] += d[i] * d[j] / pairs.len() as f64;
                }
            }
        }
        s
    };
    let mut s_i = scatter(positives);
    let s_e = scatter(negatives);
    let trace: f64 = (0..n).map(|i| s_i[i][i]).sum();
    let reg = reg_scale * trace / n as f64;
    for (i, row) in s_i.iter_mut().enumerate() {
        row[i] += reg;
    }
    let (vals, vecs) = jacobi_eigen(&s_i);
    let mut inv_sqrt = zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            inv_sqrt[i][j] = (0..n).map(|k| vecs[i][k] * vecs[j][k] / vals[k].sqrt()).sum();
        }
    }
    let c = matmul(&matmul(&inv_sqrt, &s_e), &inv_sqrt);
    let (lam, v) = jacobi_eigen(&c);
    let w_all = matmul(&inv_sqrt, &v);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| lam[b].total_cmp(&lam[a]));
    let mut w = zeros(n, keep);
    for (col, &src) in order.iter().take(keep).enumerate() {
        let norm: f64 = (0..n).map(|i| w_all[i][src] * w_all[i][src]).sum::<f64>().sqrt();
        for i in 0..n {
            w[i][col] = w_all[i][src] / norm;
        }
    }
    (w, order.iter().take(keep).map(|&i| lam[i]).collect())
}

pub fn project(w: &Mat, x: &[f64]) -> Vec<f64> {
    (0..w[0].len())
        .map(|j| (0..x.len()).map(|i| w[i][j] * x[i]).sum())
        .collect()
}

pub fn cosine(u: &[f64], v: &[f64]) -> f64 {
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu: f64 = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv: f64 = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    dot / (nu * nv)
}

/// Dense order-3 array with explicit `[i][j][k]` indexing.
pub type Cube = Vec<Vec<Vec<f64>>>;

pub fn random_cube(dims: [usize; 3], r: &mut ChaCha8Rng) -> Cube {
    (0..dims[0])
        .map(|_| (0..dims[1]).map(|_| (0..dims[2]).map(|_| gaussian(r)).collect()).collect())
        .collect()
}

pub fn random_mat(rows: usize, cols: usize, r: &mut ChaCha8Rng) -> Mat {
    (0..rows).map(|_| (0..cols).map(|_| gaussian(r)).collect()).collect()
}

/// `(t ×_mode A)[..j..] = Σ_i t[..i..] · A[j][i]` by nested loops.
pub fn mode_product_loops(t: &Cube, a: &Mat, mode: usize) -> Cube {
    let dims = [t.len(), t[0].len(), t[0][0].len()];
    let mut out_dims = dims;
    out_dims[mode] = a.len();
    let mut out = vec![vec![vec![0.0; out_dims[2]]; out_dims[1]]; out_dims[0]];
    for i0 in 0..out_dims[0] {
        for i1 in 0..out_dims[1] {
            for i2 in 0..out_dims[2] {
                let mut acc = 0.0;
                for s in 0..dims[mode] {
                    let v = match mode {
                        0 => t[s][i1][i2] * a[i0][s],
                        1 => t[i0][s][i2] * a[i1][s],
                        _ => t[i0][i1][s] * a[i2][s],
                    };
                    acc += v;
                }
                out[i0][i1][i2] = acc;
            }
        }
    }
    out
}

/// Mode-k unfolding with the remaining modes ordered earliest-fastest.
pub fn unfold_loops(t: &Cube, mode: usize) -> Mat {
    let dims = [t.len(), t[0].len(), t[0][0].len()];
    let rest: Vec<usize> = (0..3).filter(|&m| m != mode).collect();
    let mut out = zeros(dims[mode], dims[rest[0]] * dims[rest[1]]);
    for i0 in 0..dims[0] {
        for i1 in 0..dims[1] {
            for i2 in 0..dims[2] {
                let idx = [i0, i1, i2];
                let col = idx[rest[0]] + dims[rest[0]] * idx[rest[1]];
                out[idx[mode]][col] = t[i0][i1][i2];
            }
        }
    }
    out
}

fn mirror(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let m = i.rem_euclid(period);
    (if m < n { m } else { period - 1 - m }) as usize
}

/// `out(r, c) = Σ k(dy, dx) · img(r + dy, c + dx)` with half-sample mirrored
/// borders; `kernel` is `(2R+1)²`, row-major with `(−R, −R)` first.
pub fn correlate_loops(img: &[f64], h: usize, w: usize, kernel: &[f64], radius: usize) -> Vec<f64> {
    let side = 2 * radius + 1;
    let (ph, pw) = (h + 2 * radius, w + 2 * radius);
    let mut padded = vec![0.0; ph * pw];
    for r in 0..ph {
        for c in 0..pw {
            let sr = mirror(r as isize - radius as isize, h);
            let sc = mirror(c as isize - radius as isize, w);
            padded[r * pw + c] = img[sr * w + sc];
        }
    }
    let mut out = vec![0.0; h * w];
    for r in 0..h {
        for c in 0..w {
            let mut acc = 0.0;
            for ky in 0..side {
                let row = &padded[(r + ky) * pw + c..(r + ky) * pw + c + side];
                let krow = &kernel[ky * side..(ky + 1) * side];
                for kx in 0..side {
                    acc += krow[kx] * row[kx];
                }
            }
            out[r * w + c] = acc;
        }
    }
    out
}

/// Gabor kernel entry from the closed form, independent of the library.
pub fn gabor_entry(x: f64, y: f64, lambda: f64, theta: f64, psi: f64, gamma: f64, imaginary: bool) -> f64 {
    let sigma = lambda;
    let xr = x * theta.cos() + y * theta.sin();
    let yr = -x * theta.sin() + y * theta.cos();
    let env = (-(xr * xr + gamma * gamma * yr * yr) / (2.0 * sigma * sigma)).exp();
    let phase = std::f64::consts::TAU * xr / lambda + psi;
    env * if imaginary { phase.sin() } else { phase.cos() }
}

/// Pearson correlation.
pub fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}
