//! MNIST ingestion: IDX containers, binarization and per-class lookup.
//!
//! IDX layout (all integers big-endian):
//!
//! ```text
//! images: magic 0x00000803 | count u32 | rows u32 | cols u32 | count*rows*cols u8
//! labels: magic 0x00000801 | count u32 | count u8
//! ```
//!
//! Files may also be gzip-compressed; the gzip magic is sniffed and the
//! stream inflated before parsing.

use std::fmt;
use std::fs;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use byteorder::{BigEndian, ByteOrder};
use flate2::read::GzDecoder;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::{CELLS, DIGITS, GRID};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

/// Intensity strictly above which a pixel counts as white (charged).
pub const DEFAULT_BIN_THRESHOLD: u8 = 150;

/// One 28×28 grayscale image, row-major.
#[derive(Clone, PartialEq, Eq)]
pub struct RawImage {
    pixels: [u8; CELLS],
}

impl RawImage {
    pub fn from_pixels(pixels: &[u8]) -> Result<Self> {
        let pixels: [u8; CELLS] = pixels.try_into().map_err(|_| Error::Format {
            field: "pixels",
            detail: format!("expected {CELLS} pixels, got {}", pixels.len()),
        })?;
        Ok(Self { pixels })
    }

    pub fn blank() -> Self {
        Self { pixels: [0; CELLS] }
    }

    pub fn pixels(&self) -> &[u8; CELLS] {
        &self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.pixels[row * GRID + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: u8) {
        self.pixels[row * GRID + col] = value;
    }
}

impl fmt::Debug for RawImage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let lit = self.pixels.iter().filter(|&&p| p > 0).count();
        write!(f, "RawImage {{ nonzero: {lit} }}")
    }
}

/// The set of white pixels of a binarized image.
///
/// Stored as sorted, deduplicated row-major cell indices, so iteration
/// order is the fixed row-major order used for every summation.
#[derive(Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BinaryImage {
    active: Vec<u16>,
}

impl BinaryImage {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Builds an image from `(row, col)` pairs. Duplicates collapse.
    pub fn from_coords<I>(coords: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut active = Vec::new();
        for (r, c) in coords {
            if r >= GRID || c >= GRID {
                return Err(Error::Input(format!(
                    "pixel ({r}, {c}) outside the {GRID}x{GRID} grid"
                )));
            }
            active.push((r * GRID + c) as u16);
        }
        active.sort_unstable();
        active.dedup();
        Ok(Self { active })
    }

    /// Builds an image from row-major cell indices. Duplicates collapse.
    pub fn from_indices<I>(indices: I) -> Result<Self>
    where
        I: IntoIterator<Item = usize>,
    {
        Self::from_coords(indices.into_iter().map(|i| (i / GRID, i % GRID)))
    }

    pub fn indices(&self) -> &[u16] {
        &self.active
    }

    pub fn coords(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.active
            .iter()
            .map(|&i| (i as usize / GRID, i as usize % GRID))
    }

    pub fn len(&self) -> usize {
        self.active.len()
    }

    pub fn is_empty(&self) -> bool {
        self.active.is_empty()
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        row < GRID
            && col < GRID
            && self.active.binary_search(&((row * GRID + col) as u16)).is_ok()
    }

    pub fn union(&self, other: &Self) -> Self {
        let mut active: Vec<u16> = self.active.iter().chain(&other.active).copied().collect();
        active.sort_unstable();
        active.dedup();
        Self { active }
    }

    pub fn is_disjoint(&self, other: &Self) -> bool {
        self.active
            .iter()
            .all(|i| other.active.binary_search(i).is_err())
    }
}

impl fmt::Debug for BinaryImage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BinaryImage {{ active: {} }}", self.active.len())
    }
}

/// A pixel is active iff its intensity is strictly greater than `threshold`.
pub fn binarize(img: &RawImage, threshold: u8) -> BinaryImage {
    let active = img
        .pixels
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > threshold)
        .map(|(i, _)| i as u16)
        .collect();
    BinaryImage { active }
}

fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path).map_err(|e| Error::io(path, e))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| Error::io(path, e))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn check_magic(bytes: &[u8], expected: u32) -> Result<()> {
    if bytes.len() < 4 {
        return Err(Error::Format {
            field: "magic",
            detail: format!("file holds {} bytes, need at least 4", bytes.len()),
        });
    }
    let magic = BigEndian::read_u32(&bytes[..4]);
    if magic != expected {
        return Err(Error::Format {
            field: "magic",
            detail: format!("expected 0x{expected:08X}, found 0x{magic:08X}"),
        });
    }
    Ok(())
}

fn header_u32(bytes: &[u8], offset: usize, field: &'static str) -> Result<usize> {
    bytes
        .get(offset..offset + 4)
        .map(|b| BigEndian::read_u32(b) as usize)
        .ok_or_else(|| Error::Format {
            field,
            detail: "header ends before this field".into(),
        })
}

/// Parses an in-memory IDX image container.
pub fn parse_idx_images(bytes: &[u8]) -> Result<Vec<RawImage>> {
    check_magic(bytes, IMAGES_MAGIC)?;
    let count = header_u32(bytes, 4, "count")?;
    let rows = header_u32(bytes, 8, "rows")?;
    let cols = header_u32(bytes, 12, "cols")?;
    if rows != GRID {
        return Err(Error::Format {
            field: "rows",
            detail: format!("expected {GRID}, found {rows}"),
        });
    }
    if cols != GRID {
        return Err(Error::Format {
            field: "cols",
            detail: format!("expected {GRID}, found {cols}"),
        });
    }
    let payload = &bytes[16..];
    let available = payload.len() / CELLS;
    if available < count {
        return Err(Error::Truncated {
            declared: count,
            available,
        });
    }
    payload
        .chunks_exact(CELLS)
        .take(count)
        .map(RawImage::from_pixels)
        .collect()
}

/// Parses an in-memory IDX label container.
pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    check_magic(bytes, LABELS_MAGIC)?;
    let count = header_u32(bytes, 4, "count")?;
    let payload = &bytes[8..];
    if payload.len() < count {
        return Err(Error::Truncated {
            declared: count,
            available: payload.len(),
        });
    }
    let labels = payload[..count].to_vec();
    if let Some((pos, &bad)) = labels.iter().enumerate().find(|(_, &l)| l as usize >= DIGITS) {
        return Err(Error::Data(format!("label {bad} at position {pos} is not a digit")));
    }
    Ok(labels)
}

pub fn load_idx_images(path: impl AsRef<Path>) -> Result<Vec<RawImage>> {
    parse_idx_images(&read_maybe_gz(path.as_ref())?)
}

pub fn load_idx_labels(path: impl AsRef<Path>) -> Result<Vec<u8>> {
    parse_idx_labels(&read_maybe_gz(path.as_ref())?)
}

/// Images and labels loaded as an aligned pair.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub images: Vec<RawImage>,
    pub labels: Vec<u8>,
}

impl Dataset {
    pub fn new(images: Vec<RawImage>, labels: Vec<u8>) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(Error::Input(format!(
                "{} images but {} labels",
                images.len(),
                labels.len()
            )));
        }
        Ok(Self { images, labels })
    }

    pub fn load(images: impl AsRef<Path>, labels: impl AsRef<Path>) -> Result<Self> {
        Self::new(load_idx_images(images)?, load_idx_labels(labels)?)
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn binarized(&self, threshold: u8) -> Vec<BinaryImage> {
        self.images.iter().map(|img| binarize(img, threshold)).collect()
    }

    pub fn index(&self) -> DatasetIndex {
        // labels were validated on load or by the caller of `new`
        DatasetIndex::from_labels(&self.labels).expect("dataset labels are digits")
    }
}

/// File-order positions of every image, grouped by digit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetIndex {
    by_digit: [Vec<usize>; DIGITS],
    total: usize,
}

impl DatasetIndex {
    pub fn from_labels(labels: &[u8]) -> Result<Self> {
        let mut by_digit: [Vec<usize>; DIGITS] = Default::default();
        for (pos, &label) in labels.iter().enumerate() {
            let slot = by_digit
                .get_mut(label as usize)
                .ok_or_else(|| Error::Data(format!("label {label} at position {pos}")))?;
            slot.push(pos);
        }
        Ok(Self {
            by_digit,
            total: labels.len(),
        })
    }

    pub fn class_counts(&self) -> [usize; DIGITS] {
        std::array::from_fn(|d| self.by_digit[d].len())
    }

    pub fn positions(&self, digit: u8) -> &[usize] {
        self.by_digit
            .get(digit as usize)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn total(&self) -> usize {
        self.total
    }

    /// Dataset position of the `ordinal`-th (0-based) image of `digit`.
    pub fn resolve_class_ordinal(&self, digit: u8, ordinal: usize) -> Result<usize> {
        let positions = self
            .by_digit
            .get(digit as usize)
            .ok_or_else(|| Error::Lookup(format!("{digit} is not a digit")))?;
        positions.get(ordinal).copied().ok_or_else(|| {
            Error::Lookup(format!(
                "digit {digit} has {} images, ordinal {ordinal} does not exist",
                positions.len()
            ))
        })
    }
}

/// How the number in an image name such as `0_157` is interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NameConvention {
    /// Absolute position in the dataset file; the digit must match its label.
    Index,
    /// 0-based position among images of that digit.
    Ordinal0,
    /// 1-based position among images of that digit.
    Ordinal1,
}

impl NameConvention {
    pub const ALL: [NameConvention; 3] = [Self::Index, Self::Ordinal0, Self::Ordinal1];
}

impl fmt::Display for NameConvention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Index => "index",
            Self::Ordinal0 => "ordinal0",
            Self::Ordinal1 => "ordinal1",
        })
    }
}

impl FromStr for NameConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "index" => Ok(Self::Index),
            "ordinal0" => Ok(Self::Ordinal0),
            "ordinal1" => Ok(Self::Ordinal1),
            other => Err(Error::Input(format!("unknown naming convention `{other}`"))),
        }
    }
}

/// Splits `"0_157"` into `(0, 157)`.
pub fn parse_image_name(name: &str) -> Result<(u8, usize)> {
    let bad = || Error::Lookup(format!("`{name}` is not a `<digit>_<number>` image name"));
    let (d, n) = name.trim().split_once('_').ok_or_else(bad)?;
    let digit: u8 = d.parse().map_err(|_| bad())?;
    if digit as usize >= DIGITS {
        return Err(bad());
    }
    let number = n.parse().map_err(|_| bad())?;
    Ok((digit, number))
}

/// Resolves an image name to a dataset position.
pub fn resolve_name(
    name: &str,
    convention: NameConvention,
    index: &DatasetIndex,
    labels: &[u8],
) -> Result<usize> {
    let (digit, number) = parse_image_name(name)?;
    match convention {
        NameConvention::Index => match labels.get(number) {
            Some(&l) if l == digit => Ok(number),
            Some(&l) => Err(Error::Lookup(format!(
                "`{name}`: image {number} is labelled {l}, not {digit}"
            ))),
            None => Err(Error::Lookup(format!(
                "`{name}`: dataset holds {} images",
                labels.len()
            ))),
        },
        NameConvention::Ordinal0 => index.resolve_class_ordinal(digit, number),
        NameConvention::Ordinal1 => {
            let ordinal = number
                .checked_sub(1)
                .ok_or_else(|| Error::Lookup(format!("`{name}`: 1-based ordinal 0")))?;
            index.resolve_class_ordinal(digit, ordinal)
        }
    }
}
