//! Helpers shared by the integration tests: random inputs and reference
//! implementations written directly from the defining formulas.

#![allow(dead_code, clippy::needless_range_loop)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tvmap::Image;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_image(rng: &mut ChaCha8Rng, w: usize, h: usize, lo: f64, hi: f64) -> Image {
    Image::from_fn(w, h, |_, _| rng.random_range(lo..hi))
}

/// Smooth blobs plus a hard edge, scaled into `[0.1, 0.9]`.
pub fn blob_image(w: usize, h: usize, seed: u64) -> Image {
    let mut r = rng(seed);
    let cx = r.random_range(0.2..0.8) * w as f64;
    let cy = r.random_range(0.2..0.8) * h as f64;
    let edge = r.random_range(0.3..0.7) * w as f64;
    Image::from_fn(w, h, |row, col| {
        let d2 = (row as f64 - cy).powi(2) + (col as f64 - cx).powi(2);
        let blob = (-d2 / (0.1 * (w * h) as f64)).exp();
        let step = if (col as f64) < edge { 0.0 } else { 0.3 };
        0.1 + 0.5 * blob + step
    })
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Forward differences with zero in the last column / row.
pub fn diffs(x: &Image) -> (Vec<f64>, Vec<f64>) {
    let (w, h) = (x.width(), x.height());
    let mut dh = vec![0.0; w * h];
    let mut dv = vec![0.0; w * h];
    for r in 0..h {
        for c in 0..w {
            if c + 1 < w {
                dh[r * w + c] = x.get(r, c + 1) - x.get(r, c);
            }
            if r + 1 < h {
                dv[r * w + c] = x.get(r + 1, c) - x.get(r, c);
            }
        }
    }
    (dh, dv)
}

pub fn tv_oracle(x: &Image, eps: f64) -> f64 {
    let (dh, dv) = diffs(x);
    dh.iter()
        .zip(&dv)
        .map(|(a, b)| (a * a + b * b + eps * eps).sqrt())
        .sum()
}

pub fn gaussian_oracle(x: &Image, y: &Image, w: &[f64]) -> f64 {
    x.as_slice()
        .iter()
        .zip(y.as_slice())
        .zip(w)
        .map(|((a, b), m)| m * 0.5 * (a - b).powi(2))
        .sum()
}

pub fn kl_oracle(x: &Image, y: &Image, w: &[f64], eta: f64) -> f64 {
    x.as_slice()
        .iter()
        .zip(y.as_slice())
        .zip(w)
        .map(|((&xi, &yi), m)| {
            let log_term = if yi == 0.0 {
                0.0
            } else {
                yi * (yi / (xi + eta)).ln()
            };
            m * (log_term + xi - yi)
        })
        .sum()
}

/// Central-difference gradient with step `h`.
pub fn central_diff(f: impl Fn(&Image) -> f64, x: &Image, h: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len());
    let mut probe = x.clone();
    for i in 0..x.len() {
        let orig = probe.as_slice()[i];
        probe.as_mut_slice()[i] = orig + h;
        let up = f(&probe);
        probe.as_mut_slice()[i] = orig - h;
        let down = f(&probe);
        probe.as_mut_slice()[i] = orig;
        out.push((up - down) / (2.0 * h));
    }
    out
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&diff) / norm(b).max(1e-300)
}

/// Plain gradient descent at step `1/(max μ + 8/ε)` on the least-squares
/// problem, with the gradient assembled from the pixel-wise formula.
pub fn plain_gd_oracle(y: &Image, mu: &[f64], eps: f64, iters: usize) -> Image {
    let (w, h) = (y.width(), y.height());
    let lip = mu.iter().cloned().fold(0.0, f64::max) + 8.0 / eps;
    let mut x = y.clone();
    for _ in 0..iters {
        let (dh, dv) = diffs(&x);
        let n: Vec<f64> = dh
            .iter()
            .zip(&dv)
            .map(|(a, b)| (a * a + b * b + eps * eps).sqrt())
            .collect();
        let mut g = vec![0.0; w * h];
        for r in 0..h {
            for c in 0..w {
                let i = r * w + c;
                g[i] += mu[i] * (x.get(r, c) - y.get(r, c));
                let (qh, qv) = (dh[i] / n[i], dv[i] / n[i]);
                if c + 1 < w {
                    g[i] -= qh;
                    g[i + 1] += qh;
                }
                if r + 1 < h {
                    g[i] -= qv;
                    g[i + w] += qv;
                }
            }
        }
        for (xi, gi) in x.as_mut_slice().iter_mut().zip(&g) {
            *xi -= gi / lip;
        }
    }
    x
}

/// Direct SSIM: for every valid 11×11 placement, weighted local statistics
/// from an explicitly built 2-D Gaussian kernel, then the arithmetic mean.
pub fn ssim_textbook(a: &Image, b: &Image) -> f64 {
    const K: usize = 11;
    let sigma = 1.5f64;
    let mut kernel = [[0.0f64; K]; K];
    let mut total = 0.0;
    for (i, row) in kernel.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let (di, dj) = (i as f64 - 5.0, j as f64 - 5.0);
            *v = (-(di * di + dj * dj) / (2.0 * sigma * sigma)).exp();
            total += *v;
        }
    }
    let c1 = 0.01f64.powi(2);
    let c2 = 0.03f64.powi(2);
    let (w, h) = (a.width(), a.height());
    let mut sum = 0.0;
    let mut count = 0usize;
    for r in 0..=h - K {
        for c in 0..=w - K {
            let (mut ma, mut mb) = (0.0, 0.0);
            for i in 0..K {
                for j in 0..K {
                    let g = kernel[i][j] / total;
                    ma += g * a.get(r + i, c + j);
                    mb += g * b.get(r + i, c + j);
                }
            }
            let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
            for i in 0..K {
                for j in 0..K {
                    let g = kernel[i][j] / total;
                    let da = a.get(r + i, c + j) - ma;
                    let db = b.get(r + i, c + j) - mb;
                    va += g * da * da;
                    vb += g * db * db;
                    cov += g * da * db;
                }
            }
            sum += (2.0 * ma * mb + c1) * (2.0 * cov + c2)
                / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            count += 1;
        }
    }
    sum / count as f64
}

/// `n` log-spaced points covering `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| (lo.ln() + (hi.ln() - lo.ln()) * k as f64 / (n - 1) as f64).exp())
        .collect()
}

/// Fixed-step projected gradient descent on `[0,1]` for the weighted KL
/// problem, run for exactly `iters` gradient evaluations from `clamp(y)`.
/// Returns the final objective.
pub fn projected_gd_oracle(
    y: &Image,
    mu: &[f64],
    eps: f64,
    eta: f64,
    step: f64,
    iters: usize,
) -> f64 {
    let (w, h) = (y.width(), y.height());
    let mut x = y.clamped(0.0, 1.0);
    for _ in 0..iters {
        let (dh, dv) = diffs(&x);
        let mut g = vec![0.0; w * h];
        for r in 0..h {
            for c in 0..w {
                let i = r * w + c;
                g[i] += mu[i] * (1.0 - y.get(r, c) / (x.get(r, c) + eta));
                let n = (dh[i] * dh[i] + dv[i] * dv[i] + eps * eps).sqrt();
                let (qh, qv) = (dh[i] / n, dv[i] / n);
                if c + 1 < w {
                    g[i] -= qh;
                    g[i + 1] += qh;
                }
                if r + 1 < h {
                    g[i] -= qv;
                    g[i + w] += qv;
                }
            }
        }
        for (xi, gi) in x.as_mut_slice().iter_mut().zip(&g) {
            *xi = (*xi - step * gi).clamp(0.0, 1.0);
        }
    }
    kl_oracle(&x, y, mu, eta) + tv_oracle(&x, eps)
}
