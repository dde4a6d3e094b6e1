//! Portable image files.
//!
//! * `.pgm`: binary P5, maxval 65535, big-endian samples. Values are clamped
//!   to `[0, 1]` and scaled by 65535.
//! * `.txt`: one row per line, space-separated floats at 17 significant
//!   digits, exact on read-back.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;

use crate::error::{CliError, CliResult};

const MAXVAL: u32 = 65535;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageFormat {
    Pgm,
    FloatText,
}

impl ImageFormat {
    /// `.txt` selects the float variant; everything else is PGM.
    pub fn for_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("txt") => ImageFormat::FloatText,
            _ => ImageFormat::Pgm,
        }
    }
}

pub fn encode_pgm(image: &Array2<f64>) -> Vec<u8> {
    let (rows, cols) = image.dim();
    let mut out = format!("P5\n{cols} {rows}\n{MAXVAL}\n").into_bytes();
    out.reserve(rows * cols * 2);
    for &v in image {
        let q = (v.clamp(0.0, 1.0) * MAXVAL as f64).round() as u16;
        out.extend_from_slice(&q.to_be_bytes());
    }
    out
}

/// Reads 8- or 16-bit P5 data and scales samples to `[0, 1]`.
pub fn decode_pgm(bytes: &[u8]) -> Result<Array2<f64>, String> {
    let mut pos = 0;
    let mut token = || -> Result<String, String> {
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(_) => break,
                None => return Err("truncated header".into()),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|b| !b.is_ascii_whitespace()) {
            pos += 1;
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    if token()? != "P5" {
        return Err("not a binary PGM (P5)".into());
    }
    let mut number = |what: &str| -> Result<usize, String> {
        token()?
            .parse()
            .map_err(|_| format!("bad {what} in PGM header"))
    };
    let cols = number("width")?;
    let rows = number("height")?;
    let maxval = number("maxval")?;
    if maxval == 0 || maxval > MAXVAL as usize {
        return Err(format!("maxval {maxval} out of range"));
    }
    // Exactly one whitespace byte separates the header from the samples.
    pos += 1;
    let width = if maxval > 255 { 2 } else { 1 };
    let data = bytes.get(pos..).unwrap_or(&[]);
    if data.len() != rows * cols * width {
        return Err(format!(
            "expected {} sample bytes, found {}",
            rows * cols * width,
            data.len()
        ));
    }
    let samples: Vec<f64> = data
        .chunks_exact(width)
        .map(|c| {
            let v = if width == 2 {
                u16::from_be_bytes([c[0], c[1]]) as f64
            } else {
                c[0] as f64
            };
            v / maxval as f64
        })
        .collect();
    Array2::from_shape_vec((rows, cols), samples).map_err(|e| e.to_string())
}

pub fn encode_text(image: &Array2<f64>) -> String {
    let mut out = String::new();
    for row in image.rows() {
        let line: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
        let _ = writeln!(out, "{}", line.join(" "));
    }
    out
}

pub fn decode_text(text: &str) -> Result<Array2<f64>, String> {
    let mut values = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (no, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| format!("line {}: bad number '{t}'", no + 1)))
            .collect::<Result<Vec<_>, _>>()?;
        match cols {
            None => cols = Some(row.len()),
            Some(c) if c != row.len() => {
                return Err(format!("line {}: {} values, expected {c}", no + 1, row.len()))
            }
            _ => {}
        }
        values.extend(row);
        rows += 1;
    }
    let cols = cols.ok_or("empty image")?;
    Array2::from_shape_vec((rows, cols), values).map_err(|e| e.to_string())
}

pub fn write_image(path: &Path, image: &Array2<f64>) -> CliResult<()> {
    let bytes = match ImageFormat::for_path(path) {
        ImageFormat::Pgm => encode_pgm(image),
        ImageFormat::FloatText => encode_text(image).into_bytes(),
    };
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

pub fn read_image(path: &Path) -> CliResult<Array2<f64>> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    let decoded = match ImageFormat::for_path(path) {
        ImageFormat::Pgm => decode_pgm(&bytes),
        ImageFormat::FloatText => String::from_utf8(bytes)
            .map_err(|e| e.to_string())
            .and_then(|t| decode_text(&t)),
    };
    decoded.map_err(|e| CliError::io(path, e))
}
