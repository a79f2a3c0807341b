//! μ maps on disk: a 16-bit PGM holding `(μ − lo)/(hi − lo)` plus a sidecar
//! text file `<name>.range` with the two lines `mu_min <lo>` and `mu_max <hi>`.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::image::{load_pgm, save_pgm, Image, MaxVal};
use crate::solver::{MuMap, MU_MAX, MU_MIN};

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".range");
    PathBuf::from(name)
}

/// The map scaled into `[0, 1]` over `[MU_MIN, MU_MAX]`.
pub fn to_unit(map: &MuMap) -> Image {
    map.as_image().map(|mu| (mu - MU_MIN) / (MU_MAX - MU_MIN))
}

/// Inverse of [`to_unit`] for an arbitrary stored range.
pub fn from_unit(img: &Image, lo: f64, hi: f64) -> MuMap {
    MuMap::from_clamped(img.map(|v| lo + v * (hi - lo)))
}

pub fn save_mu_map(map: &MuMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    save_pgm(&to_unit(map), path, MaxVal::Sixteen)?;
    let side = sidecar_path(path);
    fs::write(&side, format!("mu_min {MU_MIN}\nmu_max {MU_MAX}\n")).map_err(|e| Error::io(&side, e))
}

fn parse_range(text: &str) -> Option<(f64, f64)> {
    let mut lo = None;
    let mut hi = None;
    for line in text.lines() {
        let mut parts = line.split_whitespace();
        match (
            parts.next(),
            parts.next().and_then(|v| v.parse::<f64>().ok()),
        ) {
            (Some("mu_min"), Some(v)) => lo = Some(v),
            (Some("mu_max"), Some(v)) => hi = Some(v),
            _ => {}
        }
    }
    lo.zip(hi).filter(|(l, h)| l < h)
}

/// Loads a map written by [`save_mu_map`]. Without a sidecar the default
/// range is assumed.
pub fn load_mu_map(path: impl AsRef<Path>) -> Result<MuMap> {
    let path = path.as_ref();
    let img = load_pgm(path)?;
    let side = sidecar_path(path);
    let (lo, hi) = match fs::read_to_string(&side) {
        Ok(text) => parse_range(&text)
            .ok_or_else(|| Error::format(0, format!("malformed range file {}", side.display())))?,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => (MU_MIN, MU_MAX),
        Err(e) => return Err(Error::io(&side, e)),
    };
    Ok(from_unit(&img, lo, hi))
}
