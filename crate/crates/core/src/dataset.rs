//! Supervised patch dataset: extraction, noise realisations, labelling,
//! IQR filtering and the `TVDS` binary format.
//!
//! File layout (little-endian):
//!
//! ```text
//! "TVDS" | u32 version = 1 | u32 patch_size | u8 noise_kind | f32 noise_param | u64 count
//! count × ( u32 source_id | u32 row | u32 col | f32 label | f32[patch_size²] pixels )
//! ```
//!
//! `noise_kind` is 1 for Gaussian and 0 for Poisson; `noise_param` is σ² or α.

use std::fs;
use std::path::{Path, PathBuf};

use log::warn;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fidelity::FidelityKind;
use crate::image::{extract_patches, load_pgm, Image};
use crate::label::{optimal_mu_image, SearchConfig};
use crate::noise::{NoiseModel, Seed};
use crate::solver::SolverConfig;

pub const MAGIC: &[u8; 4] = b"TVDS";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 4 + 1 + 4 + 8;

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRecord {
    pub source_id: u32,
    /// `(row, col)` of the patch's top-left pixel.
    pub origin: (u32, u32),
    pub label: f32,
    /// Row-major noisy intensities.
    pub patch: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub patch_size: u32,
    pub noise_kind: FidelityKind,
    pub noise_param: f32,
    pub records: Vec<DatasetRecord>,
}

impl Dataset {
    pub fn labels(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.label as f64).collect()
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let pixels = (self.patch_size as usize).pow(2);
        let mut out = Vec::with_capacity(HEADER_LEN + self.records.len() * (16 + 4 * pixels));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&self.patch_size.to_le_bytes());
        out.push(self.noise_kind.delta());
        out.extend_from_slice(&self.noise_param.to_le_bytes());
        out.extend_from_slice(&(self.records.len() as u64).to_le_bytes());
        for (i, rec) in self.records.iter().enumerate() {
            if rec.patch.len() != pixels {
                return Err(Error::Argument(format!(
                    "record {i} has {} pixels, expected {pixels}",
                    rec.patch.len()
                )));
            }
            out.extend_from_slice(&rec.source_id.to_le_bytes());
            out.extend_from_slice(&rec.origin.0.to_le_bytes());
            out.extend_from_slice(&rec.origin.1.to_le_bytes());
            out.extend_from_slice(&rec.label.to_le_bytes());
            for v in &rec.patch {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Dataset> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::format(0, "bad TVDS magic"));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::format(
                4,
                format!("unsupported TVDS version {version}"),
            ));
        }
        let patch_size = r.u32()?;
        let kind_at = r.pos;
        let noise_kind = FidelityKind::from_delta(r.u8()?)
            .map_err(|_| Error::format(kind_at as u64, "noise kind must be 0 or 1"))?;
        let noise_param = r.f32()?;
        let count = r.u64()?;
        let pixels = (patch_size as usize).pow(2);
        let record_len = 16 + 4 * pixels;
        let remaining = bytes.len() - r.pos;
        if (remaining as u64) < count.saturating_mul(record_len as u64) {
            return Err(Error::format(
                bytes.len() as u64,
                format!("truncated: header announces {count} records"),
            ));
        }
        let mut records = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let source_id = r.u32()?;
            let row = r.u32()?;
            let col = r.u32()?;
            let label = r.f32()?;
            let mut patch = Vec::with_capacity(pixels);
            for _ in 0..pixels {
                patch.push(r.f32()?);
            }
            records.push(DatasetRecord {
                source_id,
                origin: (row, col),
                label,
                patch,
            });
        }
        if r.pos != bytes.len() {
            return Err(Error::format(
                r.pos as u64,
                "trailing bytes after last record",
            ));
        }
        Ok(Dataset {
            patch_size,
            noise_kind,
            noise_param,
            records,
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::format(
                self.bytes.len() as u64,
                format!("truncated: need {n} bytes at offset {}", self.pos),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn write_dataset(path: impl AsRef<Path>, ds: &Dataset) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, ds.encode()?).map_err(|e| Error::io(path, e))
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Dataset::decode(&bytes)
}

/// Sorted `*.pgm` files of a directory, decoded. Every unreadable file is
/// reported in a single ingestion error.
pub fn load_corpus(dir: impl AsRef<Path>) -> Result<Vec<(PathBuf, Image)>> {
    let dir = dir.as_ref();
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .is_some_and(|ext| ext.eq_ignore_ascii_case("pgm"))
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Ingestion {
            offenders: vec![(dir.to_path_buf(), "no .pgm files".into())],
        });
    }
    let mut images = Vec::with_capacity(paths.len());
    let mut offenders = Vec::new();
    for p in paths {
        match load_pgm(&p) {
            Ok(img) => images.push((p, img)),
            Err(e) => offenders.push((p, e.to_string())),
        }
    }
    if !offenders.is_empty() {
        return Err(Error::Ingestion { offenders });
    }
    Ok(images)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuildOptions {
    pub patch_size: usize,
    pub stride: usize,
    pub realisations: usize,
    pub seed: Seed,
    pub solver: SolverConfig,
    pub search: SearchConfig,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self {
            patch_size: 32,
            stride: 16,
            realisations: 1,
            seed: Seed(0),
            solver: SolverConfig::default(),
            search: SearchConfig::default(),
        }
    }
}

pub fn fidelity_for(noise: &NoiseModel) -> FidelityKind {
    if noise.is_gaussian() {
        FidelityKind::Gaussian
    } else {
        FidelityKind::Poisson
    }
}

/// Extracts patches from every image, corrupts each `realisations` times and
/// labels every noisy patch with `labeler(clean, noisy)`.
///
/// Records come out ordered by image, patch origin (row-major), then
/// realisation, regardless of how labelling is scheduled.
pub fn build_records<L>(
    images: &[Image],
    noise: &NoiseModel,
    opts: &BuildOptions,
    labeler: L,
) -> Result<Vec<DatasetRecord>>
where
    L: Fn(&Image, &Image) -> Result<f64> + Sync,
{
    let mut jobs = Vec::new();
    for (source_id, img) in images.iter().enumerate() {
        for patch in extract_patches(img, opts.patch_size, opts.stride)? {
            for realisation in 0..opts.realisations {
                jobs.push((source_id as u32, patch.clone(), realisation as u64));
            }
        }
    }
    jobs.par_iter()
        .map(|(source_id, patch, realisation)| {
            let (row, col) = patch.origin;
            let seed = opts
                .seed
                .derive(&[*source_id as u64, row as u64, col as u64, *realisation]);
            let clean = patch.to_image();
            let noisy = noise.apply(&clean, seed)?;
            let label = labeler(&clean, &noisy)?;
            Ok(DatasetRecord {
                source_id: *source_id,
                origin: (row as u32, col as u32),
                label: label as f32,
                patch: noisy.as_slice().iter().map(|&v| v as f32).collect(),
            })
        })
        .collect()
}

/// Builds the unfiltered labelled dataset for a corpus directory using the
/// golden-section SSIM labeller.
pub fn build_dataset(
    corpus_dir: impl AsRef<Path>,
    noise: &NoiseModel,
    opts: &BuildOptions,
) -> Result<Dataset> {
    let images: Vec<Image> = load_corpus(corpus_dir)?
        .into_iter()
        .map(|(_, img)| img)
        .collect();
    let kind = fidelity_for(noise);
    let records = build_records(&images, noise, opts, |clean, noisy| {
        optimal_mu_image(clean, noisy, kind, &opts.solver, &opts.search).map(|r| r.mu)
    })?;
    Ok(Dataset {
        patch_size: opts.patch_size as u32,
        noise_kind: kind,
        noise_param: noise.param() as f32,
        records,
    })
}

/// Quantile by linear interpolation between order statistics of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutlierRule {
    /// Keep labels in `(0, 1.5·IQR]`.
    #[default]
    Literal,
    /// Keep labels in `[Q1 − 1.5·IQR, Q3 + 1.5·IQR]`.
    Fence,
}

/// Returns `(lower_exclusive, upper_inclusive)` bounds for the rule; the
/// fence lower bound is inclusive and reported as-is.
pub fn iqr_bounds(labels: &[f64], rule: OutlierRule) -> Result<(f64, f64)> {
    if labels.len() < 4 {
        return Err(Error::Argument(format!(
            "IQR filtering needs at least 4 records, got {}",
            labels.len()
        )));
    }
    let mut sorted = labels.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q1 = quantile(&sorted, 0.25);
    let q3 = quantile(&sorted, 0.75);
    let iqr = q3 - q1;
    Ok(match rule {
        OutlierRule::Literal => (0.0, 1.5 * iqr),
        OutlierRule::Fence => (q1 - 1.5 * iqr, q3 + 1.5 * iqr),
    })
}

/// Drops outlier labels, preserving record order.
pub fn iqr_filter(records: Vec<DatasetRecord>, rule: OutlierRule) -> Result<Vec<DatasetRecord>> {
    let labels: Vec<f64> = records.iter().map(|r| r.label as f64).collect();
    let (lo, hi) = iqr_bounds(&labels, rule)?;
    let keep = |l: f64| match rule {
        OutlierRule::Literal => l > lo && l <= hi,
        OutlierRule::Fence => l >= lo && l <= hi,
    };
    let before = records.len();
    let kept: Vec<DatasetRecord> = records
        .into_iter()
        .filter(|r| keep(r.label as f64))
        .collect();
    if kept.is_empty() {
        warn!("IQR filter removed all {before} records (bounds ({lo}, {hi}])");
    }
    Ok(kept)
}
