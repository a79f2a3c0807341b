//! Smoothed isotropic total variation on a forward-difference grid with
//! Neumann boundary.

use crate::error::{Error, Result};
use crate::image::Image;

/// Default TV smoothing. Labels must be generated with the same value that
/// is used at inference time.
pub const DEFAULT_EPS: f64 = 1e-3;

/// Forward differences; the last column of `dh` and last row of `dv` are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientField {
    pub width: usize,
    pub height: usize,
    pub dh: Vec<f64>,
    pub dv: Vec<f64>,
}

pub fn forward_diff(x: &Image) -> GradientField {
    let (w, h) = (x.width(), x.height());
    let s = x.as_slice();
    let mut dh = vec![0.0; w * h];
    let mut dv = vec![0.0; w * h];
    for r in 0..h {
        for c in 0..w {
            let i = r * w + c;
            if c + 1 < w {
                dh[i] = s[i + 1] - s[i];
            }
            if r + 1 < h {
                dv[i] = s[i + w] - s[i];
            }
        }
    }
    GradientField {
        width: w,
        height: h,
        dh,
        dv,
    }
}

/// Adjoint of [`forward_diff`] (negative divergence).
pub fn forward_diff_adjoint(p: &GradientField) -> Image {
    let mut out = vec![0.0; p.width * p.height];
    adjoint_into(p.width, p.height, &p.dh, &p.dv, &mut out);
    Image::new(p.width, p.height, out).expect("adjoint of a finite field is finite")
}

/// Overwrites `out` with `Dᵀ(ph, pv)`.
fn adjoint_into(w: usize, h: usize, ph: &[f64], pv: &[f64], out: &mut [f64]) {
    for r in 0..h {
        for c in 0..w {
            let i = r * w + c;
            let mut v = 0.0;
            if c + 1 < w {
                v -= ph[i];
            }
            if c > 0 {
                v += ph[i - 1];
            }
            if r + 1 < h {
                v -= pv[i];
            }
            if r > 0 {
                v += pv[i - w];
            }
            out[i] = v;
        }
    }
}

/// Scratch buffers reused across solver iterations.
#[derive(Debug, Default)]
pub(crate) struct TvWorkspace {
    qh: Vec<f64>,
    qv: Vec<f64>,
    div: Vec<f64>,
}

impl TvWorkspace {
    pub(crate) fn new(n: usize) -> Self {
        Self {
            qh: vec![0.0; n],
            qv: vec![0.0; n],
            div: vec![0.0; n],
        }
    }
}

pub(crate) fn tv_value_slice(w: usize, h: usize, x: &[f64], eps: f64) -> f64 {
    let eps2 = eps * eps;
    let mut value = 0.0;
    for r in 0..h {
        for c in 0..w {
            let i = r * w + c;
            let dh = if c + 1 < w { x[i + 1] - x[i] } else { 0.0 };
            let dv = if r + 1 < h { x[i + w] - x[i] } else { 0.0 };
            value += (dh * dh + dv * dv + eps2).sqrt();
        }
    }
    value
}

/// Adds `∇TV_ε(x)` into `grad` and returns `TV_ε(x)`.
pub(crate) fn tv_accumulate(
    w: usize,
    h: usize,
    x: &[f64],
    eps: f64,
    ws: &mut TvWorkspace,
    grad: &mut [f64],
) -> f64 {
    let eps2 = eps * eps;
    let mut value = 0.0;
    for r in 0..h {
        for c in 0..w {
            let i = r * w + c;
            let dh = if c + 1 < w { x[i + 1] - x[i] } else { 0.0 };
            let dv = if r + 1 < h { x[i + w] - x[i] } else { 0.0 };
            let norm = (dh * dh + dv * dv + eps2).sqrt();
            value += norm;
            ws.qh[i] = dh / norm;
            ws.qv[i] = dv / norm;
        }
    }
    adjoint_into(w, h, &ws.qh, &ws.qv, &mut ws.div);
    for (g, d) in grad.iter_mut().zip(&ws.div) {
        *g += d;
    }
    value
}

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps.is_finite() {
        Ok(())
    } else {
        Err(Error::Argument(format!(
            "TV smoothing must be positive, got {eps}"
        )))
    }
}

pub fn tv_value(x: &Image, eps: f64) -> Result<f64> {
    check_eps(eps)?;
    Ok(tv_value_slice(x.width(), x.height(), x.as_slice(), eps))
}

/// `Σ_i sqrt(dh_i² + dv_i² + ε²)` and its gradient `Dᵀ(Dx / |Dx|_ε)`.
pub fn tv_value_grad(x: &Image, eps: f64) -> Result<(f64, Image)> {
    check_eps(eps)?;
    let (w, h) = (x.width(), x.height());
    let mut ws = TvWorkspace::new(w * h);
    let mut grad = Image::zeros(w, h);
    let value = tv_accumulate(w, h, x.as_slice(), eps, &mut ws, grad.as_mut_slice());
    Ok((value, grad))
}
