//! CSV and PGM renderings of 28×28 tables.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::{CELLS, GRID};

/// 28 lines of 28 comma-separated values. Each value is printed in the
/// shortest form that parses back to the same `f64`.
pub fn table_csv(values: &[f64]) -> String {
    assert_eq!(values.len(), CELLS);
    let mut out = String::with_capacity(CELLS * 20);
    for row in values.chunks_exact(GRID) {
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            let _ = write!(out, "{v}");
        }
        out.push('\n');
    }
    out
}

pub fn parse_table_csv(text: &str) -> Result<Vec<f64>> {
    let values = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .flat_map(|l| l.split(','))
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::Input(format!("`{v}` is not a number")))
        })
        .collect::<Result<Vec<_>>>()?;
    if values.len() != CELLS {
        return Err(Error::Input(format!(
            "table CSV holds {} values, expected {CELLS}",
            values.len()
        )));
    }
    Ok(values)
}

/// Binary 8-bit PGM (`P5`). Values are mapped affinely so the table minimum
/// becomes 0 and the maximum 255; a constant table renders black.
pub fn table_pgm(values: &[f64]) -> Vec<u8> {
    assert_eq!(values.len(), CELLS);
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    let mut out = format!("P5\n{GRID} {GRID}\n255\n").into_bytes();
    out.extend(values.iter().map(|&v| {
        if span > 0.0 {
            ((v - lo) / span * 255.0).round().clamp(0.0, 255.0) as u8
        } else {
            0
        }
    }));
    out
}

/// Writes `<stem>.csv` and `<stem>.pgm` under `dir`; returns both paths.
pub fn write_table(dir: &Path, stem: &str, values: &[f64]) -> Result<(PathBuf, PathBuf)> {
    let csv = dir.join(format!("{stem}.csv"));
    let pgm = dir.join(format!("{stem}.pgm"));
    fs::write(&csv, table_csv(values)).map_err(|e| Error::io(&csv, e))?;
    fs::write(&pgm, table_pgm(values)).map_err(|e| Error::io(&pgm, e))?;
    Ok((csv, pgm))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp() -> Vec<f64> {
        (0..CELLS).map(|i| (i as f64 * 0.37).sin() * 1e4 + 1.0 / 3.0).collect()
    }

    #[test]
    fn csv_is_exact() {
        let v = ramp();
        let csv = table_csv(&v);
        assert_eq!(csv.lines().count(), GRID);
        assert!(csv.lines().all(|l| l.split(',').count() == GRID));
        let back = parse_table_csv(&csv).unwrap();
        assert!(v.iter().zip(&back).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn pgm_extremes_follow_table_extremes() {
        let v = ramp();
        let pgm = table_pgm(&v);
        let header = b"P5\n28 28\n255\n";
        assert_eq!(&pgm[..header.len()], header);
        let px = &pgm[header.len()..];
        assert_eq!(px.len(), CELLS);
        let argmax = (0..CELLS).max_by(|&a, &b| v[a].total_cmp(&v[b])).unwrap();
        let argmin = (0..CELLS).min_by(|&a, &b| v[a].total_cmp(&v[b])).unwrap();
        assert_eq!(px[argmax], 255);
        assert_eq!(px[argmin], 0);
    }

    #[test]
    fn constant_table_is_black() {
        let pgm = table_pgm(&[0.0; CELLS]);
        assert!(pgm[13..].iter().all(|&p| p == 0));
    }
}
