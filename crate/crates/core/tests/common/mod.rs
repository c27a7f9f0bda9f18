#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::OnceLock;

use fieldnet::{BinaryImage, Dataset, PhysicalConfig, CELLS, GRID};
use proptest::prelude::*;

/// Direct summation written out independently of the library: for every
#[allow(clippy::needless_range_loop)]
/// sensor, every grid point, add `K·q/r` when the pixel is charged.
pub fn oracle_potential(img: &BinaryImage, cfg: &PhysicalConfig) -> Vec<f64> {
    let mut charged = [[false; GRID]; GRID];
    for &i in img.indices() {
        charged[i as usize / GRID][i as usize % GRID] = true;
    }
    let mut out = vec![0.0; CELLS];
    for i in 0..GRID {
        for j in 0..GRID {
            let mut acc = 0.0;
            for r in 0..GRID {
                for c in 0..GRID {
                    if charged[r][c] {
                        let dy = (i as f64 - r as f64) * cfg.pixel_pitch;
                        let dx = (j as f64 - c as f64) * cfg.pixel_pitch;
                        let dist = (dx * dx + dy * dy + cfg.plane_gap * cfg.plane_gap).sqrt();
                        acc += cfg.coulomb_k * cfg.charge / dist;
                    }
                }
            }
            out[i * GRID + j] = acc;
        }
    }
    out
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

pub fn max_rel_err(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| rel_err(x, y)).fold(0.0, f64::max)
}

/// Random image with each pixel on with probability `density`.
pub fn random_image(rng: &mut impl rand::Rng, density: f64) -> BinaryImage {
    BinaryImage::from_indices((0..CELLS).filter(|_| rng.gen_bool(density))).unwrap()
}

pub fn image_strategy() -> impl Strategy<Value = BinaryImage> {
    prop::collection::vec(0..CELLS, 0..200)
        .prop_map(|v| BinaryImage::from_indices(v).unwrap())
}

pub fn nonempty_image_strategy() -> impl Strategy<Value = BinaryImage> {
    prop::collection::vec(0..CELLS, 1..200)
        .prop_map(|v| BinaryImage::from_indices(v).unwrap())
}

pub fn data_dir() -> PathBuf {
    std::env::var_os("MNIST_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data"))
}

pub fn try_dataset() -> Option<&'static Dataset> {
    static DATA: OnceLock<Option<Dataset>> = OnceLock::new();
    DATA.get_or_init(|| {
        let dir = data_dir();
        let pick = |stem: &str| {
            let gz = dir.join(format!("{stem}.gz"));
            if gz.exists() {
                gz
            } else {
                dir.join(stem)
            }
        };
        Dataset::load(pick("t10k-images-idx3-ubyte"), pick("t10k-labels-idx1-ubyte")).ok()
    })
    .as_ref()
}
