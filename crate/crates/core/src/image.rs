//! Grayscale images, binary PGM I/O, reflection padding and patch extraction.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Row-major grayscale image with `f64` intensities.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Argument(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(Error::Argument(format!(
                "data length {} does not match {width}x{height}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite value at index {i}")));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0.0)
    }

    /// Builds an image from a function of `(row, col)`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        let mut data = Vec::with_capacity(width * height);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn same_shape(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.width + col] = value;
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Image {
        Image {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn clamped(&self, lo: f64, hi: f64) -> Image {
        self.map(|v| v.clamp(lo, hi))
    }

    /// Copies the `width`×`height` block whose top-left corner is `(row, col)`.
    pub fn crop(&self, row: usize, col: usize, width: usize, height: usize) -> Result<Image> {
        if row + height > self.height || col + width > self.width {
            return Err(Error::Argument(format!(
                "crop {width}x{height} at ({row},{col}) exceeds {}x{}",
                self.width, self.height
            )));
        }
        let mut data = Vec::with_capacity(width * height);
        for r in row..row + height {
            let start = r * self.width + col;
            data.extend_from_slice(&self.data[start..start + width]);
        }
        Image::new(width, height, data)
    }

    pub(crate) fn check_same_shape(&self, other: &Image, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::Argument(format!(
                "{what}: shape {}x{} does not match {}x{}",
                other.width, other.height, self.width, self.height
            )))
        }
    }
}

/// Square block copied out of a larger image.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub size: usize,
    /// `(row, col)` of the top-left pixel in the source image.
    pub origin: (usize, usize),
    pub data: Vec<f64>,
}

impl Patch {
    pub fn to_image(&self) -> Image {
        Image {
            width: self.size,
            height: self.size,
            data: self.data.clone(),
        }
    }

    pub fn from_image(img: &Image, origin: (usize, usize)) -> Result<Patch> {
        if img.width != img.height {
            return Err(Error::Argument(format!(
                "patch must be square, got {}x{}",
                img.width, img.height
            )));
        }
        Ok(Patch {
            size: img.width,
            origin,
            data: img.data.clone(),
        })
    }
}

/// Accepted PGM sample depths.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaxVal {
    Eight,
    Sixteen,
}

impl MaxVal {
    pub fn value(self) -> u32 {
        match self {
            MaxVal::Eight => 255,
            MaxVal::Sixteen => 65535,
        }
    }

    pub fn from_value(v: u32) -> Option<Self> {
        match v {
            255 => Some(MaxVal::Eight),
            65535 => Some(MaxVal::Sixteen),
            _ => None,
        }
    }
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderCursor<'_> {
    fn skip_whitespace_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            let b = self.bytes[self.pos];
            if b == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<u32> {
        self.skip_whitespace_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::format(start as u64, format!("expected {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::format(start as u64, format!("{what} out of range")))
    }
}

/// Decodes a binary (P5) PGM held in memory.
pub fn decode_pgm(bytes: &[u8]) -> Result<Image> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(Error::format(0, "missing P5 magic"));
    }
    let mut cur = HeaderCursor { bytes, pos: 2 };
    let width = cur.number("width")? as usize;
    let height = cur.number("height")? as usize;
    let maxval_at = cur.pos as u64;
    let maxval = cur.number("maxval")?;
    let depth = MaxVal::from_value(maxval)
        .ok_or_else(|| Error::format(maxval_at, format!("unsupported maxval {maxval}")))?;
    if width == 0 || height == 0 {
        return Err(Error::format(maxval_at, "zero image dimension"));
    }
    // exactly one whitespace byte separates the header from the raster
    if cur.pos >= bytes.len() || !bytes[cur.pos].is_ascii_whitespace() {
        return Err(Error::format(
            cur.pos as u64,
            "expected whitespace after maxval",
        ));
    }
    let payload_at = cur.pos + 1;
    let bytes_per_sample = if depth == MaxVal::Eight { 1 } else { 2 };
    let need = width * height * bytes_per_sample;
    let payload = &bytes[payload_at..];
    if payload.len() < need {
        return Err(Error::format(
            (payload_at + payload.len()) as u64,
            format!(
                "truncated payload: need {need} bytes, found {}",
                payload.len()
            ),
        ));
    }
    let scale = maxval as f64;
    let data = match depth {
        MaxVal::Eight => payload[..need].iter().map(|&b| b as f64 / scale).collect(),
        MaxVal::Sixteen => payload[..need]
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 / scale)
            .collect(),
    };
    Image::new(width, height, data)
}

/// Encodes an image as binary PGM, clamping to [0,1] and rounding half to even.
pub fn encode_pgm(img: &Image, maxval: MaxVal) -> Vec<u8> {
    let m = maxval.value();
    let mut out = format!("P5\n{} {}\n{}\n", img.width, img.height, m).into_bytes();
    let quantise = |v: f64| (v.clamp(0.0, 1.0) * m as f64).round_ties_even() as u32;
    match maxval {
        MaxVal::Eight => out.extend(img.data.iter().map(|&v| quantise(v) as u8)),
        MaxVal::Sixteen => {
            for &v in &img.data {
                out.extend_from_slice(&(quantise(v) as u16).to_be_bytes());
            }
        }
    }
    out
}

pub fn load_pgm(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pgm(&bytes)
}

pub fn save_pgm(img: &Image, path: impl AsRef<Path>, maxval: MaxVal) -> Result<()> {
    let path = path.as_ref();
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&encode_pgm(img, maxval))
        .map_err(|e| Error::io(path, e))
}

/// Mirror index into `0..n` without repeating the edge sample.
///
/// Out-of-range indices fold back and forth with period `2(n-1)`, so any
/// offset is valid; for `n == 1` every index maps to 0.
#[inline]
pub fn reflect_index(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - m) as usize
    }
}

/// Per-side padding widths.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Margins {
    pub top: usize,
    pub bottom: usize,
    pub left: usize,
    pub right: usize,
}

impl Margins {
    pub fn uniform(m: usize) -> Self {
        Self {
            top: m,
            bottom: m,
            left: m,
            right: m,
        }
    }
}

/// Reflection padding by the same margin on every side.
pub fn reflect_pad(img: &Image, margin: usize) -> Result<Image> {
    reflect_pad_with(img, Margins::uniform(margin))
}

/// Reflection padding with per-side margins; each margin must be smaller than
/// the extent it reflects across.
pub fn reflect_pad_with(img: &Image, m: Margins) -> Result<Image> {
    if m.top.max(m.bottom) >= img.height || m.left.max(m.right) >= img.width {
        return Err(Error::Argument(format!(
            "padding {m:?} too large for {}x{} image",
            img.width, img.height
        )));
    }
    Ok(reflect_extend(img, m))
}

/// Reflection padding without the single-fold restriction.
pub(crate) fn reflect_extend(img: &Image, m: Margins) -> Image {
    let w = img.width + m.left + m.right;
    let h = img.height + m.top + m.bottom;
    Image::from_fn(w, h, |r, c| {
        let sr = reflect_index(r as isize - m.top as isize, img.height);
        let sc = reflect_index(c as isize - m.left as isize, img.width);
        img.get(sr, sc)
    })
}

/// Number of patch placements along one axis.
#[inline]
pub fn patches_along(extent: usize, size: usize, stride: usize) -> usize {
    if size > extent {
        0
    } else {
        (extent - size) / stride + 1
    }
}

/// Copies every `size`×`size` window on the stride grid, origins in row-major order.
pub fn extract_patches(img: &Image, size: usize, stride: usize) -> Result<Vec<Patch>> {
    if stride == 0 {
        return Err(Error::Argument("stride must be at least 1".into()));
    }
    if size == 0 || size > img.width.min(img.height) {
        return Err(Error::Argument(format!(
            "patch size {size} does not fit {}x{} image",
            img.width, img.height
        )));
    }
    let rows = patches_along(img.height, size, stride);
    let cols = patches_along(img.width, size, stride);
    let mut out = Vec::with_capacity(rows * cols);
    for pr in 0..rows {
        for pc in 0..cols {
            let (r0, c0) = (pr * stride, pc * stride);
            let mut data = Vec::with_capacity(size * size);
            for r in r0..r0 + size {
                let start = r * img.width + c0;
                data.extend_from_slice(&img.data[start..start + size]);
            }
            out.push(Patch {
                size,
                origin: (r0, c0),
                data,
            });
        }
    }
    Ok(out)
}
