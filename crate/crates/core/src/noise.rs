//! Reproducible Gaussian and Poisson corruption.
//!
//! Every pixel draws from its own ChaCha8 stream (rand_chacha 0.9), keyed by
//! the 64-bit seed and selected with the pixel's linear index as the stream
//! id. Outputs therefore do not depend on evaluation order or thread count,
//! and are stable across platforms for a given generator version.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::Image;

/// Default Poisson stabiliser.
pub const DEFAULT_ETA: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Seed(pub u64);

impl Seed {
    /// Derives an independent child seed, e.g. per patch or per realisation.
    pub fn derive(self, tag: &[u64]) -> Seed {
        let mut h = self.0 ^ 0x9e37_79b9_7f4a_7c15;
        for &t in tag {
            h = splitmix64(h ^ splitmix64(t));
        }
        Seed(h)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseModel {
    Gaussian { sigma2: f64 },
    Poisson { alpha: f64, eta: f64 },
}

impl NoiseModel {
    pub fn gaussian(sigma2: f64) -> Result<Self> {
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(Error::Argument(format!(
                "sigma2 must be positive, got {sigma2}"
            )));
        }
        Ok(NoiseModel::Gaussian { sigma2 })
    }

    pub fn poisson(alpha: f64, eta: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) || !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::Argument(format!(
                "alpha and eta must be positive, got alpha={alpha} eta={eta}"
            )));
        }
        Ok(NoiseModel::Poisson { alpha, eta })
    }

    pub fn is_gaussian(&self) -> bool {
        matches!(self, NoiseModel::Gaussian { .. })
    }

    /// σ² for Gaussian, α for Poisson.
    pub fn param(&self) -> f64 {
        match *self {
            NoiseModel::Gaussian { sigma2 } => sigma2,
            NoiseModel::Poisson { alpha, .. } => alpha,
        }
    }

    pub fn apply(&self, img: &Image, seed: Seed) -> Result<Image> {
        match *self {
            NoiseModel::Gaussian { sigma2 } => add_gaussian(img, sigma2, seed),
            NoiseModel::Poisson { alpha, eta } => add_poisson(img, alpha, eta, seed),
        }
    }
}

#[inline]
fn pixel_rng(seed: Seed, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.0);
    rng.set_stream(index as u64);
    rng
}

/// `y = x + e` with `e ~ N(0, sigma2)` i.i.d.; the result is not clipped.
pub fn add_gaussian(img: &Image, sigma2: f64, seed: Seed) -> Result<Image> {
    if !(sigma2 >= 0.0 && sigma2.is_finite()) {
        return Err(Error::Argument(format!(
            "sigma2 must be non-negative, got {sigma2}"
        )));
    }
    if sigma2 == 0.0 {
        return Ok(img.clone());
    }
    let sigma = sigma2.sqrt();
    let data: Vec<f64> = img
        .as_slice()
        .par_iter()
        .enumerate()
        .map(|(i, &x)| {
            let e: f64 = pixel_rng(seed, i).sample(StandardNormal);
            x + sigma * e
        })
        .collect();
    Image::new(img.width(), img.height(), data)
}

/// `y = z / alpha` with `z ~ Poisson(alpha * x + eta)`.
pub fn add_poisson(img: &Image, alpha: f64, eta: f64, seed: Seed) -> Result<Image> {
    if !(alpha > 0.0) || !(eta > 0.0) {
        return Err(Error::Argument(format!(
            "alpha and eta must be positive, got alpha={alpha} eta={eta}"
        )));
    }
    if let Some(i) = img.as_slice().iter().position(|&v| v < 0.0) {
        return Err(Error::Domain(format!(
            "Poisson input must be non-negative; pixel {i} is {}",
            img.as_slice()[i]
        )));
    }
    let data: Vec<f64> = img
        .as_slice()
        .par_iter()
        .enumerate()
        .map(|(i, &x)| {
            let mut rng = pixel_rng(seed, i);
            sample_poisson(&mut rng, alpha * x + eta) as f64 / alpha
        })
        .collect();
    Image::new(img.width(), img.height(), data)
}

/// Exact Poisson variate: sequential inversion below mean 10, Hörmann's
/// PTRS transformed rejection above.
pub fn sample_poisson<R: Rng + ?Sized>(rng: &mut R, lambda: f64) -> u64 {
    if lambda <= 0.0 {
        return 0;
    }
    if lambda < 10.0 {
        poisson_inversion(rng, lambda)
    } else {
        poisson_ptrs(rng, lambda)
    }
}

fn poisson_inversion<R: Rng + ?Sized>(rng: &mut R, lambda: f64) -> u64 {
    let u: f64 = rng.random();
    let mut k = 0u64;
    let mut p = (-lambda).exp();
    let mut cdf = p;
    // the tail past k = 200 has mass far below f64 resolution for lambda < 10
    while u > cdf && k < 200 {
        k += 1;
        p *= lambda / k as f64;
        cdf += p;
    }
    k
}

fn poisson_ptrs<R: Rng + ?Sized>(rng: &mut R, lambda: f64) -> u64 {
    let slam = lambda.sqrt();
    let loglam = lambda.ln();
    let b = 0.931 + 2.53 * slam;
    let a = -0.059 + 0.02483 * b;
    let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    let vr = 0.9277 - 3.6224 / (b - 2.0);
    loop {
        let u: f64 = rng.random::<f64>() - 0.5;
        let v: f64 = rng.random();
        let us = 0.5 - u.abs();
        let k = ((2.0 * a / us + b) * u + lambda + 0.43).floor();
        if us >= 0.07 && v <= vr {
            return k as u64;
        }
        if k < 0.0 || (us < 0.013 && v > us) {
            continue;
        }
        let lhs = v.ln() + inv_alpha.ln() - (a / (us * us) + b).ln();
        let rhs = -lambda + k * loglam - ln_factorial(k as u64);
        if lhs <= rhs {
            return k as u64;
        }
    }
}

/// `ln(k!)`, exact summation for small `k`, Stirling series beyond.
pub(crate) fn ln_factorial(k: u64) -> f64 {
    if k < 20 {
        (2..=k).map(|i| (i as f64).ln()).sum()
    } else {
        let n = k as f64;
        let inv = 1.0 / n;
        let inv2 = inv * inv;
        n * n.ln() - n
            + 0.5 * (2.0 * std::f64::consts::PI * n).ln()
            + inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 / 1260.0))
    }
}
