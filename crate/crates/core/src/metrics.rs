//! Image quality and model-fit metrics.

use crate::error::{Error, Result};
use crate::image::Image;

/// SSIM parameters. The defaults are the canonical 11×11 Gaussian window
/// with standard deviation 1.5, `k1 = 0.01`, `k2 = 0.03` and unit data range;
/// label generation and evaluation both rely on them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsimConfig {
    pub window: usize,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
    pub data_range: f64,
}

impl Default for SsimConfig {
    fn default() -> Self {
        Self {
            window: 11,
            sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
            data_range: 1.0,
        }
    }
}

impl SsimConfig {
    /// Normalised 1-D Gaussian taps; the 2-D window is their outer product.
    pub fn taps(&self) -> Vec<f64> {
        let half = (self.window / 2) as f64;
        let raw: Vec<f64> = (0..self.window)
            .map(|i| {
                let d = i as f64 - half;
                (-d * d / (2.0 * self.sigma * self.sigma)).exp()
            })
            .collect();
        let sum: f64 = raw.iter().sum();
        raw.into_iter().map(|v| v / sum).collect()
    }
}

/// Valid-mode separable filtering of a row-major `w`×`h` buffer.
fn filter_valid(src: &[f64], w: usize, h: usize, taps: &[f64]) -> Vec<f64> {
    let k = taps.len();
    let ow = w - k + 1;
    let oh = h - k + 1;
    let mut rows = vec![0.0; ow * h];
    for r in 0..h {
        let line = &src[r * w..(r + 1) * w];
        for c in 0..ow {
            let mut acc = 0.0;
            for (t, &g) in taps.iter().enumerate() {
                acc += g * line[c + t];
            }
            rows[r * ow + c] = acc;
        }
    }
    let mut out = vec![0.0; ow * oh];
    for r in 0..oh {
        for c in 0..ow {
            let mut acc = 0.0;
            for (t, &g) in taps.iter().enumerate() {
                acc += g * rows[(r + t) * ow + c];
            }
            out[r * ow + c] = acc;
        }
    }
    out
}

/// Mean SSIM over all window positions that fit inside the image.
pub fn ssim(a: &Image, b: &Image, cfg: &SsimConfig) -> Result<f64> {
    a.check_same_shape(b, "ssim")?;
    let (w, h) = (a.width(), a.height());
    if w < cfg.window || h < cfg.window {
        return Err(Error::Argument(format!(
            "ssim needs at least {0}x{0} pixels, got {w}x{h}",
            cfg.window
        )));
    }
    let taps = cfg.taps();
    let (sa, sb) = (a.as_slice(), b.as_slice());
    let aa: Vec<f64> = sa.iter().map(|v| v * v).collect();
    let bb: Vec<f64> = sb.iter().map(|v| v * v).collect();
    let ab: Vec<f64> = sa.iter().zip(sb).map(|(x, y)| x * y).collect();

    let mu_a = filter_valid(sa, w, h, &taps);
    let mu_b = filter_valid(sb, w, h, &taps);
    let e_aa = filter_valid(&aa, w, h, &taps);
    let e_bb = filter_valid(&bb, w, h, &taps);
    let e_ab = filter_valid(&ab, w, h, &taps);

    let c1 = (cfg.k1 * cfg.data_range).powi(2);
    let c2 = (cfg.k2 * cfg.data_range).powi(2);
    let mut total = 0.0;
    for i in 0..mu_a.len() {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let var_a = e_aa[i] - ma * ma;
        let var_b = e_bb[i] - mb * mb;
        let cov = e_ab[i] - ma * mb;
        let num = (2.0 * ma * mb + c1) * (2.0 * cov + c2);
        let den = (ma * ma + mb * mb + c1) * (var_a + var_b + c2);
        total += num / den;
    }
    Ok(total / mu_a.len() as f64)
}

pub fn mse(a: &Image, b: &Image) -> Result<f64> {
    a.check_same_shape(b, "mse")?;
    let sum: f64 = a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok(sum / a.len() as f64)
}

/// PSNR in dB for unit data range; `f64::INFINITY` for identical images.
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    let m = mse(a, b)?;
    if m == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (1.0 / m).log10())
}

/// Coefficient of determination with squared residuals.
pub fn r2_score(labels: &[f64], preds: &[f64]) -> Result<f64> {
    if labels.is_empty() || labels.len() != preds.len() {
        return Err(Error::Argument(format!(
            "r2 needs equal non-zero lengths, got {} labels and {} predictions",
            labels.len(),
            preds.len()
        )));
    }
    let mean = labels.iter().sum::<f64>() / labels.len() as f64;
    let ss_tot: f64 = labels.iter().map(|l| (l - mean) * (l - mean)).sum();
    if ss_tot == 0.0 {
        return Err(Error::UndefinedScore("labels have zero variance".into()));
    }
    let ss_res: f64 = labels
        .iter()
        .zip(preds)
        .map(|(l, p)| (l - p) * (l - p))
        .sum();
    Ok(1.0 - ss_res / ss_tot)
}

pub fn accuracy(correct: usize, total: usize) -> Result<f64> {
    if total == 0 || correct > total {
        return Err(Error::Argument(format!(
            "accuracy needs 0 <= correct <= total and total > 0, got {correct}/{total}"
        )));
    }
    Ok(correct as f64 / total as f64)
}
