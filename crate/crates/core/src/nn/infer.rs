//! Patch-level predictions and their image-level aggregation.

use log::warn;
use rayon::prelude::*;

use super::arch::Architecture;
use super::forward::Network;
use super::weights::WeightBundle;
use crate::error::{Error, Result};
use crate::fidelity::FidelityKind;
use crate::image::{extract_patches, reflect_extend, Image, Margins, Patch};
use crate::solver::{MuMap, MU_MAX, MU_MIN};

pub const REGRESSOR_PATCH: usize = 32;
pub const CLASSIFIER_PATCH: usize = 64;
/// Stride between classified patches in [`classify_image`].
pub const CLASSIFIER_STRIDE: usize = 32;

/// Margins placing window element `(16, 16)` on each pixel of the image.
pub const WINDOW_MARGINS: Margins = Margins {
    top: REGRESSOR_PATCH / 2,
    left: REGRESSOR_PATCH / 2,
    bottom: REGRESSOR_PATCH / 2 - 1,
    right: REGRESSOR_PATCH / 2 - 1,
};

fn expect_arch(bundle: &WeightBundle, arch: Architecture) -> Result<()> {
    if bundle.architecture() == arch {
        Ok(())
    } else {
        Err(Error::Argument(format!(
            "expected {arch} weights, got {}",
            bundle.architecture()
        )))
    }
}

fn to_f32(data: &[f64]) -> Vec<f32> {
    data.iter().map(|&v| v as f32).collect()
}

/// Patch → μ network with its output clamped to `[MU_MIN, MU_MAX]`.
#[derive(Debug, Clone)]
pub struct Regressor {
    net: Network,
}

impl Regressor {
    pub fn new(bundle: &WeightBundle) -> Result<Self> {
        expect_arch(bundle, Architecture::RegressorV1)?;
        Ok(Self {
            net: Network::new(bundle)?,
        })
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    /// Unclamped network output for a row-major 32×32 window.
    pub fn raw_output(&self, window: &[f32]) -> Result<f32> {
        Ok(self.net.forward(window)?[0])
    }

    pub fn predict_window(&self, window: &[f32]) -> Result<f64> {
        Ok((self.raw_output(window)? as f64).clamp(MU_MIN, MU_MAX))
    }

    pub fn predict(&self, patch: &Patch) -> Result<f64> {
        if patch.size != REGRESSOR_PATCH {
            return Err(Error::Argument(format!(
                "regressor needs a {REGRESSOR_PATCH}x{REGRESSOR_PATCH} patch, got {0}x{0}",
                patch.size
            )));
        }
        self.predict_window(&to_f32(&patch.data))
    }
}

/// Gaussian-vs-Poisson patch classifier.
#[derive(Debug, Clone)]
pub struct Classifier {
    net: Network,
}

impl Classifier {
    pub fn new(bundle: &WeightBundle) -> Result<Self> {
        expect_arch(bundle, Architecture::ClassifierV1)?;
        Ok(Self {
            net: Network::new(bundle)?,
        })
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    /// `(p_gaussian, p_poisson)`.
    pub fn probabilities(&self, patch: &Patch) -> Result<(f64, f64)> {
        if patch.size != CLASSIFIER_PATCH {
            return Err(Error::Argument(format!(
                "classifier needs a {CLASSIFIER_PATCH}x{CLASSIFIER_PATCH} patch, got {0}x{0}",
                patch.size
            )));
        }
        let logits = self.net.forward(&to_f32(&patch.data))?;
        Ok(softmax2(logits[0] as f64, logits[1] as f64))
    }

    pub fn predict(&self, patch: &Patch) -> Result<FidelityKind> {
        let (pg, pp) = self.probabilities(patch)?;
        Ok(if pg >= pp {
            FidelityKind::Gaussian
        } else {
            FidelityKind::Poisson
        })
    }
}

fn softmax2(a: f64, b: f64) -> (f64, f64) {
    let m = a.max(b);
    let (ea, eb) = ((a - m).exp(), (b - m).exp());
    let s = ea + eb;
    (ea / s, eb / s)
}

pub fn forward_regressor(patch: &Patch, weights: &WeightBundle) -> Result<f64> {
    Regressor::new(weights)?.predict(patch)
}

pub fn forward_classifier(patch: &Patch, weights: &WeightBundle) -> Result<(f64, f64)> {
    Classifier::new(weights)?.probabilities(patch)
}

/// Evaluates `window_fn` on the 32×32 window centred (at index 16,16) on every
/// pixel of the reflection-padded image and clamps the result into the μ range.
///
/// Images smaller than the padding margins are extended by repeated reflection.
pub fn predict_mu_map_with<F>(img: &Image, window_fn: F) -> Result<MuMap>
where
    F: Fn(&[f32]) -> Result<f64> + Sync,
{
    let padded = reflect_extend(img, WINDOW_MARGINS);
    let pw = padded.width();
    let src = to_f32(padded.as_slice());
    let (w, h) = (img.width(), img.height());
    let values: Vec<f64> = (0..w * h)
        .into_par_iter()
        .map_init(
            || vec![0.0f32; REGRESSOR_PATCH * REGRESSOR_PATCH],
            |window, i| {
                let (r, c) = (i / w, i % w);
                for wr in 0..REGRESSOR_PATCH {
                    let start = (r + wr) * pw + c;
                    window[wr * REGRESSOR_PATCH..(wr + 1) * REGRESSOR_PATCH]
                        .copy_from_slice(&src[start..start + REGRESSOR_PATCH]);
                }
                window_fn(window).map(|v| v.clamp(MU_MIN, MU_MAX))
            },
        )
        .collect::<Result<_>>()?;
    MuMap::new(Image::new(w, h, values)?)
}

/// Sliding-window μ map from the regression network.
pub fn predict_mu_map(img: &Image, regressor: &Regressor) -> Result<MuMap> {
    predict_mu_map_with(img, |window| regressor.predict_window(window))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Classification {
    pub kind: FidelityKind,
    /// Fraction of patches voting for `kind`.
    pub confidence: f64,
    pub gaussian_votes: usize,
    pub total_votes: usize,
}

/// Majority vote; ties resolve to Gaussian with confidence 0.5.
pub fn majority_vote(votes: &[FidelityKind]) -> Result<Classification> {
    if votes.is_empty() {
        return Err(Error::Argument("no votes to aggregate".into()));
    }
    let total = votes.len();
    let gaussian = votes
        .iter()
        .filter(|&&k| k == FidelityKind::Gaussian)
        .count();
    let poisson = total - gaussian;
    let (kind, confidence) = if gaussian > poisson {
        (FidelityKind::Gaussian, gaussian as f64 / total as f64)
    } else if poisson > gaussian {
        (FidelityKind::Poisson, poisson as f64 / total as f64)
    } else {
        warn!("noise classification tied {gaussian}:{poisson}; defaulting to Gaussian");
        (FidelityKind::Gaussian, 0.5)
    };
    Ok(Classification {
        kind,
        confidence,
        gaussian_votes: gaussian,
        total_votes: total,
    })
}

/// Classifies 64×64 patches at stride 32 and takes a majority vote.
pub fn classify_image(img: &Image, classifier: &Classifier) -> Result<Classification> {
    if img.width() < CLASSIFIER_PATCH || img.height() < CLASSIFIER_PATCH {
        return Err(Error::Argument(format!(
            "noise classification needs at least {CLASSIFIER_PATCH}x{CLASSIFIER_PATCH} pixels, got {}x{}",
            img.width(),
            img.height()
        )));
    }
    let patches = extract_patches(img, CLASSIFIER_PATCH, CLASSIFIER_STRIDE)?;
    let votes: Vec<FidelityKind> = patches
        .par_iter()
        .map(|p| classifier.predict(p))
        .collect::<Result<_>>()?;
    majority_vote(&votes)
}
