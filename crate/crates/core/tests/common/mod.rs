#![allow(dead_code)]

use std::path::PathBuf;

use despeckle::{GradientField, Image};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_image(rng: &mut ChaCha8Rng, m: usize, n: usize, lo: f64, hi: f64) -> Image {
    Image::from_shape_simple_fn((m, n), || rng.random_range(lo..hi))
}

pub fn uniform_field(rng: &mut ChaCha8Rng, m: usize, n: usize, lo: f64, hi: f64) -> GradientField {
    GradientField {
        h: uniform_image(rng, m, n, lo, hi),
        v: uniform_image(rng, m, n, lo, hi),
    }
}

pub fn max_abs_diff(a: &Image, b: &Image) -> f64 {
    assert_eq!(a.dim(), b.dim());
    a.iter().zip(b.iter()).fold(0.0, |acc, (x, y)| acc.max((x - y).abs()))
}

/// `|a - b| <= rel * max(|a|, |b|, floor)`.
pub fn close(a: f64, b: f64, rel: f64, floor: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(floor)
}

/// Test images live in `$DESPECKLE_DATA` or `<workspace>/data`.
pub fn data_dir() -> PathBuf {
    match std::env::var_os("DESPECKLE_DATA") {
        Some(p) => PathBuf::from(p),
        None => workspace_root().join("data"),
    }
}

pub fn workspace_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

/// Clean test image, or `None` when it has not been fetched.
pub fn test_image(name: &str) -> Option<Image> {
    let path = data_dir().join(format!("{name}.pgm"));
    if !path.exists() {
        return None;
    }
    Some(despeckle::pgm::read_pgm(&path).expect("test image parses"))
}

/// 64×64 piecewise-constant scene: background, a disc and a square.
pub fn synthetic_scene() -> Image {
    Image::from_shape_fn((64, 64), |(i, j)| {
        let (y, x) = (i as f64, j as f64);
        if (x - 24.0).powi(2) + (y - 20.0).powi(2) <= 14.0f64.powi(2) {
            180.0
        } else if (36..=58).contains(&j) && (30..=56).contains(&i) {
            135.0
        } else {
            90.0
        }
    })
}
