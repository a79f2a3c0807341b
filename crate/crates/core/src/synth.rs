//! Deterministic synthetic scenes mixing fine texture with piecewise-constant
//! geometry, for tests, benchmarks and demos.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::image::Image;

/// Number of distinct scene layouts produced by [`mixed_scene`].
pub const SCENES: usize = 5;

fn disk(r: usize, c: usize, cy: f64, cx: f64, rad: f64) -> bool {
    let (dy, dx) = (r as f64 - cy, c as f64 - cx);
    dy * dy + dx * dx <= rad * rad
}

/// A `size`×`size` scene; `index` selects the layout (mod [`SCENES`]) and
/// `seed` perturbs levels and texture phases. Values lie in `[0.05, 0.95]`.
pub fn mixed_scene(index: usize, size: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (index as u64).wrapping_mul(0x9e37_79b9));
    let lo = rng.random_range(0.1..0.3);
    let hi = rng.random_range(0.7..0.9);
    let bg = rng.random_range(0.35..0.55);
    let phase = rng.random_range(0.0..std::f64::consts::TAU);
    let n = size as f64;
    let mut blocks: Vec<f64> = (0..(size / 2 + 1).pow(2))
        .map(|_| rng.random_range(lo..hi))
        .collect();
    if blocks.is_empty() {
        blocks.push(bg);
    }
    let img = match index % SCENES {
        0 => Image::from_fn(size, size, |r, c| {
            if c < size / 2 {
                if (c / 2) % 2 == 0 {
                    lo
                } else {
                    hi
                }
            } else if disk(r, c, n * 0.5, n * 0.75, n * 0.18) {
                hi
            } else {
                bg
            }
        }),
        1 => Image::from_fn(size, size, |r, c| {
            if r < size / 2 {
                if (r / 3 + c / 3) % 2 == 0 {
                    lo
                } else {
                    hi
                }
            } else if c > size / 5 && c < 3 * size / 5 && r > 5 * size / 8 {
                lo
            } else {
                bg
            }
        }),
        2 => Image::from_fn(size, size, |r, c| {
            if disk(r, c, n * 0.5, n * 0.5, n * 0.3) {
                let v = (c as f64 * 1.6 + r as f64 * 0.4 + phase).sin();
                0.5 * (lo + hi) + 0.5 * (hi - lo) * v
            } else if r < size / 6 {
                hi
            } else {
                bg
            }
        }),
        3 => Image::from_fn(size, size, |r, c| {
            if r < size / 2 && c < size / 2 {
                let d = ((r as f64).powi(2) + (c as f64).powi(2)).sqrt();
                if ((d / 2.0) as usize).is_multiple_of(2) {
                    lo
                } else {
                    hi
                }
            } else if r + c > size && r > c / 2 {
                hi
            } else if disk(r, c, n * 0.25, n * 0.75, n * 0.15) {
                lo
            } else {
                bg
            }
        }),
        _ => Image::from_fn(size, size, |r, c| {
            if r >= size / 3 && r < 2 * size / 3 {
                blocks[(r / 2) * (size / 2 + 1) + c / 2]
            } else if c < size / 2 {
                lo
            } else {
                hi
            }
        }),
    };
    img.clamped(0.05, 0.95)
}
