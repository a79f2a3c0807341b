//! Tensors, weight bundles and the `TVMW` weight file.
//!
//! Layout (little-endian):
//!
//! ```text
//! "TVMW" | u32 version = 1 | u32 tag_len | tag (UTF-8) | u32 tensor_count
//! tensor_count × ( u32 name_len | name (UTF-8) | u8 ndim | u64[ndim] extents | f32[Π extents] )
//! ```
//!
//! Batch-norm epsilon is stored as a one-element tensor named `<layer>.eps`.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::arch::{is_trainable, Architecture};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"TVMW";
pub const VERSION: u32 = 1;
pub const DEFAULT_BN_EPS: f32 = 1e-5;

/// Channels-first dense tensor of up to four dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        if dims.len() > 4 {
            return Err(Error::Argument(format!(
                "tensor rank {} exceeds 4",
                dims.len()
            )));
        }
        let n: usize = dims.iter().product();
        if n != data.len() {
            return Err(Error::Argument(format!(
                "tensor {dims:?} needs {n} values, got {}",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: Vec<usize>) -> Self {
        let n = dims.iter().product();
        Self {
            dims,
            data: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Named tensors for one network, validated against its manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightBundle {
    arch: Architecture,
    tensors: Vec<(String, Tensor)>,
}

impl WeightBundle {
    pub fn new(arch: Architecture, tensors: Vec<(String, Tensor)>) -> Result<Self> {
        let bundle = Self { arch, tensors };
        bundle.validate()?;
        Ok(bundle)
    }

    /// All weights zero, batch norms the identity (unit scale and variance).
    pub fn identity_bn_zeros(arch: Architecture) -> Self {
        let tensors = arch
            .manifest()
            .into_iter()
            .map(|(name, dims)| {
                let mut t = Tensor::zeros(dims);
                if name.ends_with(".running_var")
                    || (name.starts_with("bn") && name.ends_with(".weight"))
                {
                    t.data.fill(1.0);
                } else if name.ends_with(".eps") {
                    t.data.fill(DEFAULT_BN_EPS);
                }
                (name, t)
            })
            .collect();
        Self { arch, tensors }
    }

    /// He-style random initialisation with randomised batch-norm statistics.
    pub fn random(arch: Architecture, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut bundle = Self::identity_bn_zeros(arch);
        for (name, t) in &mut bundle.tensors {
            if name.ends_with(".eps") {
                continue;
            }
            if name.starts_with("bn") {
                let (lo, hi) = match name.rsplit('.').next().unwrap() {
                    "weight" => (0.5, 1.5),
                    "bias" => (-0.2, 0.2),
                    "running_mean" => (-0.1, 0.1),
                    _ => (0.5, 2.0),
                };
                t.data
                    .iter_mut()
                    .for_each(|v| *v = rng.random_range(lo..hi));
            } else if name.ends_with(".weight") {
                let fan_in: usize = t.dims[1..].iter().product();
                let bound = (6.0 / fan_in as f32).sqrt();
                t.data
                    .iter_mut()
                    .for_each(|v| *v = rng.random_range(-bound..bound));
            } else {
                t.data
                    .iter_mut()
                    .for_each(|v| *v = rng.random_range(-0.05..0.05));
            }
        }
        bundle
    }

    pub fn architecture(&self) -> Architecture {
        self.arch
    }

    pub fn tensors(&self) -> &[(String, Tensor)] {
        &self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    /// Mutable access for tools that patch individual tensors; shapes must be
    /// left unchanged.
    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors
            .iter_mut()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors
            .iter()
            .filter(|(n, _)| is_trainable(n))
            .map(|(_, t)| t.len())
            .sum()
    }

    pub fn validate(&self) -> Result<()> {
        let manifest = self.arch.manifest();
        for (i, (name, dims)) in manifest.iter().enumerate() {
            let Some((found, tensor)) = self.tensors.get(i) else {
                return Err(Error::Argument(format!(
                    "{} bundle is missing tensor `{name}`",
                    self.arch
                )));
            };
            if found != name {
                return Err(Error::Argument(format!(
                    "{} bundle: expected tensor `{name}` at position {i}, found `{found}`",
                    self.arch
                )));
            }
            if &tensor.dims != dims {
                return Err(Error::ShapeMismatch {
                    name: name.clone(),
                    expected: dims.clone(),
                    found: tensor.dims.clone(),
                });
            }
            if tensor.data.iter().any(|v| !v.is_finite()) {
                return Err(Error::Domain(format!(
                    "tensor `{name}` has non-finite values"
                )));
            }
        }
        if self.tensors.len() != manifest.len() {
            let extra = &self.tensors[manifest.len()].0;
            return Err(Error::Argument(format!(
                "{} bundle has unexpected tensor `{extra}`",
                self.arch
            )));
        }
        Ok(())
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        let tag = self.arch.tag().as_bytes();
        out.extend_from_slice(&(tag.len() as u32).to_le_bytes());
        out.extend_from_slice(tag);
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in &self.tensors {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(t.dims.len() as u8);
            for &d in &t.dims {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    /// Parses and validates a bundle.
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Cursor { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::format(0, "bad TVMW magic"));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::format(
                4,
                format!("unsupported TVMW version {version}"),
            ));
        }
        let tag_at = r.pos;
        let tag_len = r.u32()? as usize;
        let tag = std::str::from_utf8(r.take(tag_len)?)
            .map_err(|_| Error::format(tag_at as u64, "architecture tag is not UTF-8"))?;
        let arch: Architecture = tag
            .parse()
            .map_err(|_| Error::format(tag_at as u64, format!("unknown architecture `{tag}`")))?;
        let count = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(count.min(64));
        for _ in 0..count {
            let name_at = r.pos;
            let name_len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| Error::format(name_at as u64, "tensor name is not UTF-8"))?
                .to_owned();
            let ndim_at = r.pos;
            let ndim = r.u8()? as usize;
            if ndim > 4 {
                return Err(Error::format(
                    ndim_at as u64,
                    format!("tensor `{name}` has rank {ndim}"),
                ));
            }
            let mut dims = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                dims.push(r.u64()? as usize);
            }
            let n = dims
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .filter(|&n| n.checked_mul(4).is_some_and(|b| b <= bytes.len()))
                .ok_or_else(|| {
                    Error::format(
                        ndim_at as u64,
                        format!("tensor `{name}` extents {dims:?} too large"),
                    )
                })?;
            let raw = r.take(4 * n)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            tensors.push((name, Tensor { dims, data }));
        }
        if r.pos != bytes.len() {
            return Err(Error::format(
                r.pos as u64,
                "trailing bytes after last tensor",
            ));
        }
        WeightBundle::new(arch, tensors)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if n > self.bytes.len() - self.pos {
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
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<WeightBundle> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    WeightBundle::decode(&bytes)
}

pub fn save_weights(path: impl AsRef<Path>, bundle: &WeightBundle) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, bundle.encode()).map_err(|e| Error::io(path, e))
}
