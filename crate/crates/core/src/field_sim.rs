//! Electrostatics of the charged image planes and the sensor plane.
//!
//! Every white pixel of a binarized image carries a point charge `q` at its
//! grid point. Image planes sit at distance `d2` from a 28×28 plane of
//! potential sensors whose cells align one-to-one with the pixel grid, pitch
//! `d1`. The potential at sensor `s` from an image is
//!
//! ```text
//! phi(s) = sum over active p of K * q / sqrt((Δrow·d1)² + (Δcol·d1)² + d2²)
//! ```
//!
//! A pair weight table is `phi_A - phi_B`: image A carries `+q`, image B `-q`.
//!
//! Both the naive path ([`potential_table`]) and the kernel path
//! ([`potential_table_fast`]) accumulate each sensor's terms in row-major
//! pixel order starting from zero, and both derive a term from the same
//! `(Δrow, Δcol)` arithmetic, so the two agree bit for bit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mnist_io::{BinaryImage, DEFAULT_BIN_THRESHOLD};
use crate::{CELLS, GRID};

/// Coulomb constant, V·m/C.
pub const COULOMB_K: f64 = 8.9875e9;

/// Span of signed offsets a kernel must cover: `-(GRID-1)..=GRID-1`.
pub const KERNEL_SIDE: usize = 2 * GRID - 1;

/// Physical constants of the simulated system, SI units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConfig {
    /// Coulomb constant K, V·m/C.
    pub coulomb_k: f64,
    /// Charge per white pixel, coulombs.
    pub charge: f64,
    /// Distance between adjacent pixels and adjacent sensors (d1), meters.
    pub pixel_pitch: f64,
    /// Distance from each image plane to the sensor plane (d2), meters.
    pub plane_gap: f64,
    /// Intensity strictly above which a pixel is charged.
    pub bin_threshold: u8,
}

impl Default for PhysicalConfig {
    fn default() -> Self {
        Self {
            coulomb_k: COULOMB_K,
            charge: 1e-9,
            pixel_pitch: 0.02,
            plane_gap: 0.04,
            bin_threshold: DEFAULT_BIN_THRESHOLD,
        }
    }
}

impl PhysicalConfig {
    /// Builds a config from centimeter distances, the unit used on the
    /// command line.
    pub fn from_cm(coulomb_k: f64, charge: f64, d1_cm: f64, d2_cm: f64, bin_threshold: u8) -> Result<Self> {
        let cfg = Self {
            coulomb_k,
            charge,
            pixel_pitch: d1_cm / 100.0,
            plane_gap: d2_cm / 100.0,
            bin_threshold,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let checks = [
            ("coulomb_k", self.coulomb_k),
            ("charge", self.charge),
            ("pixel_pitch", self.pixel_pitch),
            ("plane_gap", self.plane_gap),
        ];
        for (name, v) in checks {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive and finite, got {v}")));
            }
        }
        Ok(())
    }

    pub fn with_plane_gap(mut self, meters: f64) -> Self {
        self.plane_gap = meters;
        self
    }

    pub fn with_charge(mut self, coulombs: f64) -> Self {
        self.charge = coulombs;
        self
    }

    pub fn with_coulomb_k(mut self, k: f64) -> Self {
        self.coulomb_k = k;
        self
    }

    /// True when two configs produce the same field (the binarization
    /// threshold does not enter the field).
    pub fn same_field(&self, other: &Self) -> bool {
        self.coulomb_k.to_bits() == other.coulomb_k.to_bits()
            && self.charge.to_bits() == other.charge.to_bits()
            && self.pixel_pitch.to_bits() == other.pixel_pitch.to_bits()
            && self.plane_gap.to_bits() == other.plane_gap.to_bits()
    }

    /// On-axis potential of a single charge, `K·q/d2`.
    pub fn on_axis_potential(&self) -> f64 {
        self.coulomb_k * self.charge / self.plane_gap
    }
}

#[inline]
fn offset_distance(drow: f64, dcol: f64, cfg: &PhysicalConfig) -> f64 {
    let y = drow * cfg.pixel_pitch;
    let x = dcol * cfg.pixel_pitch;
    (y * y + x * x + cfg.plane_gap * cfg.plane_gap).sqrt()
}

#[inline]
fn offset_potential(drow: f64, dcol: f64, cfg: &PhysicalConfig) -> f64 {
    cfg.coulomb_k * cfg.charge / offset_distance(drow, dcol, cfg)
}

/// Distance in meters from the charge at image cell `p_img` to the sensor at
/// `p_sensor`. Always at least `d2`.
pub fn charge_sensor_distance(
    p_img: (usize, usize),
    p_sensor: (usize, usize),
    cfg: &PhysicalConfig,
) -> f64 {
    offset_distance(
        p_sensor.0 as f64 - p_img.0 as f64,
        p_sensor.1 as f64 - p_img.1 as f64,
        cfg,
    )
}

/// Read access shared by potential and weight tables.
pub trait CellTable {
    fn values(&self) -> &[f64];

    fn get(&self, row: usize, col: usize) -> f64 {
        self.values()[row * GRID + col]
    }

    fn min(&self) -> f64 {
        self.values().iter().copied().fold(f64::INFINITY, f64::min)
    }

    fn max(&self) -> f64 {
        self.values().iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Sum of the cells selected by `img`, accumulated in row-major order.
    fn dot(&self, img: &BinaryImage) -> f64 {
        let v = self.values();
        img.indices().iter().map(|&i| v[i as usize]).sum()
    }
}

/// Summed potential (volts) sampled on the 28×28 sensor plane from one image.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialTable {
    values: Vec<f64>,
}

/// `phi_A - phi_B` on the sensor plane, volts. The weights of one pair neuron.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightTable {
    values: Vec<f64>,
}

impl PotentialTable {
    pub fn zeros() -> Self {
        Self {
            values: vec![0.0; CELLS],
        }
    }

    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        check_len(&values)?;
        Ok(Self { values })
    }
}

impl WeightTable {
    pub fn difference(a: &PotentialTable, b: &PotentialTable) -> Self {
        let values = a.values.iter().zip(&b.values).map(|(x, y)| x - y).collect();
        Self { values }
    }

    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        check_len(&values)?;
        Ok(Self { values })
    }

    /// Elementwise negation; exact in IEEE arithmetic.
    pub fn negated(&self) -> Self {
        Self {
            values: self.values.iter().map(|v| -v).collect(),
        }
    }

    pub fn bit_identical(&self, other: &Self) -> bool {
        self.values
            .iter()
            .zip(&other.values)
            .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

fn check_len(values: &[f64]) -> Result<()> {
    if values.len() != CELLS {
        return Err(Error::Input(format!(
            "table needs {CELLS} cells, got {}",
            values.len()
        )));
    }
    Ok(())
}

impl CellTable for PotentialTable {
    fn values(&self) -> &[f64] {
        &self.values
    }
}

impl CellTable for WeightTable {
    fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Direct summation: for every sensor, add the contribution of every active
/// pixel. O(784 · |active|).
pub fn potential_table(img: &BinaryImage, cfg: &PhysicalConfig) -> PotentialTable {
    let mut values = vec![0.0; CELLS];
    for (cell, slot) in values.iter_mut().enumerate() {
        let sensor = (cell / GRID, cell % GRID);
        let mut acc = 0.0;
        for p in img.coords() {
            acc += cfg.coulomb_k * cfg.charge / charge_sensor_distance(p, sensor, cfg);
        }
        *slot = acc;
    }
    PotentialTable { values }
}

/// Weight table of the pair neuron comparing `a` (charge `+q`) with `b`
/// (charge `-q`).
pub fn pair_weight_table(a: &BinaryImage, b: &BinaryImage, cfg: &PhysicalConfig) -> WeightTable {
    WeightTable::difference(&potential_table(a, cfg), &potential_table(b, cfg))
}

/// Per-charge potential for every signed offset between a pixel and a
/// sensor, precomputed once per configuration.
#[derive(Debug, Clone)]
pub struct DistanceKernel {
    values: Vec<f64>,
    cfg: PhysicalConfig,
}

impl DistanceKernel {
    pub fn get(&self, drow: isize, dcol: isize) -> f64 {
        let half = (GRID - 1) as isize;
        assert!(drow.abs() <= half && dcol.abs() <= half, "offset outside kernel");
        self.values[(drow + half) as usize * KERNEL_SIDE + (dcol + half) as usize]
    }

    pub fn config(&self) -> &PhysicalConfig {
        &self.cfg
    }

    fn row(&self, drow: usize) -> &[f64] {
        &self.values[drow * KERNEL_SIDE..(drow + 1) * KERNEL_SIDE]
    }
}

pub fn build_kernel(cfg: &PhysicalConfig) -> DistanceKernel {
    let half = (GRID - 1) as isize;
    let mut values = Vec::with_capacity(KERNEL_SIDE * KERNEL_SIDE);
    for drow in -half..=half {
        for dcol in -half..=half {
            values.push(offset_potential(drow as f64, dcol as f64, cfg));
        }
    }
    DistanceKernel { values, cfg: *cfg }
}

/// Cross-correlation of the active-pixel indicator with the kernel: each
/// charge adds a shifted copy of the kernel to the table.
pub fn potential_table_fast(
    img: &BinaryImage,
    kernel: &DistanceKernel,
    cfg: &PhysicalConfig,
) -> Result<PotentialTable> {
    if !kernel.cfg.same_field(cfg) {
        return Err(Error::Config(
            "distance kernel was built for a different physical configuration".into(),
        ));
    }
    let mut values = vec![0.0; CELLS];
    let half = GRID - 1;
    for (r, c) in img.coords() {
        // sensor (i, j) reads kernel offset (i - r, j - c)
        for (i, out_row) in values.chunks_exact_mut(GRID).enumerate() {
            let k_row = kernel.row(i + half - r);
            let k_cols = &k_row[half - c..half - c + GRID];
            for (o, k) in out_row.iter_mut().zip(k_cols) {
                *o += k;
            }
        }
    }
    Ok(PotentialTable { values })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> PhysicalConfig {
        PhysicalConfig::default()
    }

    #[test]
    fn distances() {
        let c = cfg();
        assert_eq!(charge_sensor_distance((5, 5), (5, 5), &c), 0.04);
        let d = charge_sensor_distance((3, 7), (4, 7), &c);
        assert!((d - (0.02f64.powi(2) + 0.04f64.powi(2)).sqrt()).abs() < 1e-15);
        assert!((d - 0.044721).abs() < 1e-6);
        let flat = PhysicalConfig {
            plane_gap: 1e-12,
            ..c
        };
        assert!((charge_sensor_distance((0, 0), (3, 4), &flat) - 0.10).abs() < 1e-12);
    }

    #[test]
    fn empty_image_gives_zero_table() {
        let t = potential_table(&BinaryImage::empty(), &cfg());
        assert!(t.values().iter().all(|&v| v == 0.0));
        let k = build_kernel(&cfg());
        let f = potential_table_fast(&BinaryImage::empty(), &k, &cfg()).unwrap();
        assert!(f.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_centre_charge() {
        let img = BinaryImage::from_coords([(14, 14)]).unwrap();
        let t = potential_table(&img, &cfg());
        let expected = 8.9875e9 * 1e-9 / 0.04;
        assert!((t.get(14, 14) - expected).abs() / expected < 1e-12);
        assert!((t.get(14, 14) - 224.6875).abs() < 1e-9);
        assert_eq!(t.max(), t.get(14, 14));
    }

    #[test]
    fn single_pixel_fast_path_is_recentred_kernel() {
        let k = build_kernel(&cfg());
        let img = BinaryImage::from_coords([(3, 20)]).unwrap();
        let t = potential_table_fast(&img, &k, &cfg()).unwrap();
        for i in 0..GRID {
            for j in 0..GRID {
                assert_eq!(t.get(i, j), k.get(i as isize - 3, j as isize - 20));
            }
        }
    }

    #[test]
    fn kernel_symmetry_and_peak() {
        let k = build_kernel(&cfg());
        assert_eq!(k.get(0, 0), cfg().on_axis_potential());
        for a in -27..=27isize {
            for b in -27..=27isize {
                assert_eq!(k.get(a, b), k.get(-a, -b));
                assert_eq!(k.get(a, b), k.get(b, a));
                assert!(k.get(a, b) <= k.get(0, 0));
            }
        }
        assert!(k.get(0, 1) > k.get(1, 1));
        assert!(k.get(1, 1) > k.get(0, 2));
    }

    #[test]
    fn mismatched_kernel_is_config_error() {
        let k = build_kernel(&cfg());
        let other = cfg().with_plane_gap(0.02);
        let err = potential_table_fast(&BinaryImage::empty(), &k, &other).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        // the threshold does not enter the field
        let rethresholded = PhysicalConfig {
            bin_threshold: 10,
            ..cfg()
        };
        assert!(potential_table_fast(&BinaryImage::empty(), &k, &rethresholded).is_ok());
    }

    #[test]
    fn pair_table_identities() {
        let a = BinaryImage::from_coords([(1, 2), (10, 10), (20, 5)]).unwrap();
        let b = BinaryImage::from_coords([(1, 3), (11, 10)]).unwrap();
        let ab = pair_weight_table(&a, &b, &cfg());
        let ba = pair_weight_table(&b, &a, &cfg());
        assert!(ab.negated().bit_identical(&ba));
        assert!(pair_weight_table(&a, &a, &cfg()).values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn invalid_configs() {
        assert!(PhysicalConfig::from_cm(8.9875e9, 1e-9, 2.0, 4.0, 150).is_ok());
        assert!(PhysicalConfig::from_cm(8.9875e9, 0.0, 2.0, 4.0, 150).is_err());
        assert!(PhysicalConfig::from_cm(8.9875e9, 1e-9, -2.0, 4.0, 150).is_err());
        assert!(PhysicalConfig::from_cm(f64::NAN, 1e-9, 2.0, 4.0, 150).is_err());
        let c = PhysicalConfig::from_cm(9e9, 1e-9, 2.0, 4.0, 150).unwrap();
        assert_eq!(c.plane_gap, 0.04);
        assert_eq!(c.pixel_pitch, 0.02);
    }
}
