//! Weighted data-fidelity terms: least squares for Gaussian noise and the
//! Kullback-Leibler divergence for Poisson noise.
//!
//! Scalar weights are represented by a constant [`MuMap`], so the patch-wise
//! problem and the whole-image map-weighted problem share one code path.

use crate::error::{Error, Result};
use crate::image::Image;
use crate::solver::MuMap;

/// Which fidelity term a solve uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FidelityKind {
    Gaussian,
    Poisson,
}

impl FidelityKind {
    /// 1 for Gaussian, 0 for Poisson.
    pub fn delta(self) -> u8 {
        match self {
            FidelityKind::Gaussian => 1,
            FidelityKind::Poisson => 0,
        }
    }

    pub fn from_delta(delta: u8) -> Result<Self> {
        match delta {
            1 => Ok(FidelityKind::Gaussian),
            0 => Ok(FidelityKind::Poisson),
            d => Err(Error::Argument(format!(
                "fidelity selector must be 0 or 1, got {d}"
            ))),
        }
    }
}

impl std::fmt::Display for FidelityKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FidelityKind::Gaussian => "gaussian",
            FidelityKind::Poisson => "poisson",
        })
    }
}

fn check_shapes(x: &Image, y: &Image, w: &MuMap) -> Result<()> {
    x.check_same_shape(y, "data")?;
    x.check_same_shape(w.as_image(), "weights")
}

pub(crate) fn gaussian_value_slice(x: &[f64], y: &[f64], w: &[f64]) -> f64 {
    let mut value = 0.0;
    for i in 0..x.len() {
        let r = x[i] - y[i];
        value += w[i] * 0.5 * r * r;
    }
    value
}

/// Adds the gradient into `grad` and returns the value.
pub(crate) fn gaussian_accumulate(x: &[f64], y: &[f64], w: &[f64], grad: &mut [f64]) -> f64 {
    let mut value = 0.0;
    for i in 0..x.len() {
        let r = x[i] - y[i];
        value += w[i] * 0.5 * r * r;
        grad[i] += w[i] * r;
    }
    value
}

#[inline]
fn kl_term(x: f64, y: f64, eta: f64) -> f64 {
    if y == 0.0 {
        x
    } else {
        y * (y / (x + eta)).ln() + x - y
    }
}

pub(crate) fn poisson_value_slice(x: &[f64], y: &[f64], w: &[f64], eta: f64) -> f64 {
    let mut value = 0.0;
    for i in 0..x.len() {
        value += w[i] * kl_term(x[i], y[i], eta);
    }
    value
}

pub(crate) fn poisson_accumulate(
    x: &[f64],
    y: &[f64],
    w: &[f64],
    eta: f64,
    grad: &mut [f64],
) -> f64 {
    let mut value = 0.0;
    for i in 0..x.len() {
        value += w[i] * kl_term(x[i], y[i], eta);
        grad[i] += w[i] * (1.0 - y[i] / (x[i] + eta));
    }
    value
}

/// `Σ w_i ½(x_i − y_i)²` and its gradient `w ⊙ (x − y)`.
pub fn gaussian_value_grad(x: &Image, y: &Image, w: &MuMap) -> Result<(f64, Image)> {
    check_shapes(x, y, w)?;
    let mut grad = Image::zeros(x.width(), x.height());
    let value = gaussian_accumulate(
        x.as_slice(),
        y.as_slice(),
        w.as_slice(),
        grad.as_mut_slice(),
    );
    Ok((value, grad))
}

/// `Σ w_i [y_i log(y_i/(x_i+η)) + x_i − y_i]` (with `0·log 0 = 0`) and its
/// gradient `w ⊙ (1 − y/(x+η))`.
pub fn poisson_value_grad(x: &Image, y: &Image, w: &MuMap, eta: f64) -> Result<(f64, Image)> {
    check_shapes(x, y, w)?;
    if !(eta > 0.0) {
        return Err(Error::Argument(format!("eta must be positive, got {eta}")));
    }
    if x.as_slice().iter().chain(y.as_slice()).any(|&v| v < 0.0) {
        return Err(Error::Domain(
            "KL fidelity requires non-negative x and y".into(),
        ));
    }
    let mut grad = Image::zeros(x.width(), x.height());
    let value = poisson_accumulate(
        x.as_slice(),
        y.as_slice(),
        w.as_slice(),
        eta,
        grad.as_mut_slice(),
    );
    Ok((value, grad))
}
