//! Spatially adaptive total-variation denoising.
//!
//! The pipeline classifies the noise model of an image (Gaussian or Poisson),
//! predicts a per-pixel regularisation map with a patch regressor evaluated
//! in a sliding window, and solves the map-weighted smoothed-TV problem.
//! Training labels come from a golden-section search of the scalar weight
//! that maximises SSIM against the clean patch.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataset;
pub mod error;
pub mod fidelity;
pub mod image;
pub mod label;
pub mod mapfile;
pub mod metrics;
pub mod nn;
pub mod noise;
pub mod solver;
pub mod synth;
pub mod tv;

pub use error::{Error, Result};
pub use fidelity::FidelityKind;
pub use image::{Image, MaxVal, Patch};
pub use noise::{NoiseModel, Seed};
pub use solver::{Backtracking, MuMap, SolveReport, SolverConfig, MU_MAX, MU_MIN};
