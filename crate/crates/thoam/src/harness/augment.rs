//! Interpolation-free image augmentation: horizontal/vertical flips and
//! 90-degree rotations, applied to the visual modality only.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::encoders::ImageSlice;

use super::config::AugmentConfig;

fn flip_h(img: &ImageSlice) -> ImageSlice {
    let (w, h) = (img.width(), img.height());
    let src = img.pixels();
    let mut px = vec![0u8; w * h];
    for y in 0..h {
        for x in 0..w {
            px[y * w + x] = src[y * w + (w - 1 - x)];
        }
    }
    ImageSlice::new(w, h, px).expect("same dimensions")
}

fn flip_v(img: &ImageSlice) -> ImageSlice {
    let (w, h) = (img.width(), img.height());
    let src = img.pixels();
    let mut px = vec![0u8; w * h];
    for y in 0..h {
        px[y * w..(y + 1) * w].copy_from_slice(&src[(h - 1 - y) * w..(h - y) * w]);
    }
    ImageSlice::new(w, h, px).expect("same dimensions")
}

/// Quarter-turn counter-clockwise; output is height x width.
fn rot90(img: &ImageSlice) -> ImageSlice {
    let (w, h) = (img.width(), img.height());
    let src = img.pixels();
    let mut px = vec![0u8; w * h];
    for y in 0..h {
        for x in 0..w {
            // (x, y) -> (y, w-1-x) in the rotated frame of width h.
            px[(w - 1 - x) * h + y] = src[y * w + x];
        }
    }
    ImageSlice::new(h, w, px).expect("swapped dimensions")
}

/// Randomly augment one slice. Draw order is fixed (hflip, vflip, rotation)
/// so a given RNG state always produces the same result. Rotation is only
/// applied to square slices, keeping batch shapes uniform.
pub fn augment(img: &ImageSlice, cfg: &AugmentConfig, rng: &mut ChaCha8Rng) -> ImageSlice {
    let mut out = img.clone();
    if cfg.hflip && rng.gen_bool(0.5) {
        out = flip_h(&out);
    }
    if cfg.vflip && rng.gen_bool(0.5) {
        out = flip_v(&out);
    }
    if cfg.rot90 && img.width() == img.height() {
        let quarters = rng.gen_range(0..4);
        for _ in 0..quarters {
            out = rot90(&out);
        }
    }
    out
}
