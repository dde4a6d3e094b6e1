//! Measurement series and their line-oriented text form.
//!
//! ```text
//! # key=value            (header, one per line)
//! index,bucket_plus[,bucket_minus]
//! ```
//!
//! Buckets are written with 17 significant digits so a parse reproduces the
//! exact `f64` bits.

use std::fmt::Write as _;

use super::{ImperfectionModel, NoiseModel, SourceModel};
use crate::error::{Error, Result};
use crate::hadamard::Ordering;

/// How the illumination pattern of each record is regenerated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PatternSource {
    /// Record index is a natural-order Sylvester row.
    Hadamard { grid_log2: u32, ordering: Ordering },
    /// Record index is the pattern number of a speckle family seeded with the
    /// noise seed.
    Speckle { side: usize, speckle_size: usize },
}

impl PatternSource {
    pub fn side(&self) -> usize {
        match *self {
            PatternSource::Hadamard { grid_log2, .. } => 1 << grid_log2,
            PatternSource::Speckle { side, .. } => side,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Record {
    pub index: usize,
    pub bucket_plus: f64,
    pub bucket_minus: Option<f64>,
}

impl Record {
    /// `B⁺ − B⁻`, if the record is differential.
    pub fn difference(&self) -> Option<f64> {
        self.bucket_minus.map(|m| self.bucket_plus - m)
    }
}

/// Buckets in acquisition order plus everything needed to replay them.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSeries {
    pub source: PatternSource,
    pub imperfection: ImperfectionModel,
    pub source_model: Option<SourceModel>,
    pub noise: NoiseModel,
    pub pixel_pitch_um: f64,
    pub records: Vec<Record>,
    /// Free-form `key=value` pairs echoed into the header (e.g. phantom info).
    pub metadata: Vec<(String, String)>,
}

const FORMAT_TAG: &str = "ghostpixel-series-1";

impl MeasurementSeries {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn side(&self) -> usize {
        self.source.side()
    }

    pub fn is_differential(&self) -> bool {
        !self.records.is_empty() && self.records.iter().all(|r| r.bucket_minus.is_some())
    }

    pub fn indices(&self) -> Vec<usize> {
        self.records.iter().map(|r| r.index).collect()
    }

    pub fn buckets_plus(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.bucket_plus).collect()
    }

    /// Differential buckets; `None` if any record lacks a complementary value.
    pub fn differences(&self) -> Option<Vec<f64>> {
        self.records.iter().map(Record::difference).collect()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "# {k}={v}");
        };
        kv("format", FORMAT_TAG.into());
        match self.source {
            PatternSource::Hadamard {
                grid_log2,
                ordering,
            } => {
                kv("patterns", "hadamard".into());
                kv("basis.k", grid_log2.to_string());
                kv("basis.ordering", ordering.to_string());
            }
            PatternSource::Speckle { side, speckle_size } => {
                kv("patterns", "speckle".into());
                kv("speckle.side", side.to_string());
                kv("speckle.size_px", speckle_size.to_string());
            }
        }
        kv("pixel_pitch_um", self.pixel_pitch_um.to_string());
        kv("mask.modulation_depth", self.imperfection.modulation_depth.to_string());
        kv("mask.edge_blur_sigma", self.imperfection.edge_blur_sigma.to_string());
        kv("mask.jitter_sigma", self.imperfection.jitter_sigma.to_string());
        match &self.source_model {
            Some(s) => {
                kv("source.enabled", "true".into());
                kv("source.fwhm_x_um", s.fwhm_um[0].to_string());
                kv("source.fwhm_y_um", s.fwhm_um[1].to_string());
                kv("source.source_to_mask_mm", s.source_to_mask_mm.to_string());
                kv("source.mask_to_object_mm", s.mask_to_object_mm.to_string());
            }
            None => kv("source.enabled", "false".into()),
        }
        kv("noise.photon_scale", self.noise.photon_scale.to_string());
        kv("noise.read_noise_sigma", self.noise.read_noise_sigma.to_string());
        kv("noise.dark_current", self.noise.dark_current.to_string());
        kv("seed", self.noise.seed.to_string());
        kv("differential", self.is_differential().to_string());
        kv("records", self.records.len().to_string());
        for (k, v) in &self.metadata {
            kv(k, v.clone());
        }
        for r in &self.records {
            let _ = write!(out, "{},{:.16e}", r.index, r.bucket_plus);
            if let Some(m) = r.bucket_minus {
                let _ = write!(out, ",{m:.16e}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut header: Vec<(usize, String, String)> = Vec::new();
        let mut records = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let (k, v) = rest.trim().split_once('=').ok_or(Error::Parse {
                    line: line_no,
                    msg: "header line without '='".into(),
                })?;
                header.push((line_no, k.trim().to_string(), v.trim().to_string()));
                continue;
            }
            records.push(parse_record(line, line_no)?);
        }

        let lookup = |key: &str| header.iter().find(|(_, k, _)| k == key);
        let get = |key: &str| -> Result<&str> {
            lookup(key).map(|(_, _, v)| v.as_str()).ok_or(Error::Parse {
                line: 0,
                msg: format!("missing header key '{key}'"),
            })
        };
        let num = |key: &str| -> Result<f64> {
            let (line, _, v) = lookup(key).ok_or(Error::Parse {
                line: 0,
                msg: format!("missing header key '{key}'"),
            })?;
            v.parse().map_err(|_| Error::Parse {
                line: *line,
                msg: format!("'{key}' is not a number: {v}"),
            })
        };
        let int = |key: &str| -> Result<u64> {
            let (line, _, v) = lookup(key).ok_or(Error::Parse {
                line: 0,
                msg: format!("missing header key '{key}'"),
            })?;
            v.parse().map_err(|_| Error::Parse {
                line: *line,
                msg: format!("'{key}' is not an integer: {v}"),
            })
        };

        if get("format")? != FORMAT_TAG {
            return Err(Error::Parse {
                line: 1,
                msg: format!("unsupported format '{}'", get("format")?),
            });
        }
        let source = match get("patterns")? {
            "hadamard" => PatternSource::Hadamard {
                grid_log2: int("basis.k")? as u32,
                ordering: get("basis.ordering")?.parse()?,
            },
            "speckle" => PatternSource::Speckle {
                side: int("speckle.side")? as usize,
                speckle_size: int("speckle.size_px")? as usize,
            },
            other => {
                return Err(Error::Parse {
                    line: 0,
                    msg: format!("unknown pattern family '{other}'"),
                })
            }
        };
        let imperfection = ImperfectionModel::new(
            num("mask.modulation_depth")?,
            num("mask.edge_blur_sigma")?,
            num("mask.jitter_sigma")?,
        )?;
        let source_model = match get("source.enabled")? {
            "true" => Some(SourceModel::new(
                [num("source.fwhm_x_um")?, num("source.fwhm_y_um")?],
                num("source.source_to_mask_mm")?,
                num("source.mask_to_object_mm")?,
            )?),
            _ => None,
        };
        let noise = NoiseModel {
            photon_scale: num("noise.photon_scale")?,
            read_noise_sigma: num("noise.read_noise_sigma")?,
            dark_current: num("noise.dark_current")?,
            seed: int("seed")?,
        };
        noise.validate()?;
        let expected = int("records")? as usize;
        if expected != records.len() {
            return Err(Error::Parse {
                line: 0,
                msg: format!("header declares {expected} records, found {}", records.len()),
            });
        }
        let limit = match source {
            PatternSource::Hadamard { grid_log2, .. } => Some(1usize << (2 * grid_log2)),
            PatternSource::Speckle { .. } => None,
        };
        if let Some(limit) = limit {
            if let Some(r) = records.iter().find(|r| r.index >= limit) {
                return Err(Error::Parse {
                    line: 0,
                    msg: format!("record index {} exceeds basis size {limit}", r.index),
                });
            }
        }

        const KNOWN: &[&str] = &[
            "format",
            "patterns",
            "basis.k",
            "basis.ordering",
            "speckle.side",
            "speckle.size_px",
            "pixel_pitch_um",
            "mask.modulation_depth",
            "mask.edge_blur_sigma",
            "mask.jitter_sigma",
            "source.enabled",
            "source.fwhm_x_um",
            "source.fwhm_y_um",
            "source.source_to_mask_mm",
            "source.mask_to_object_mm",
            "noise.photon_scale",
            "noise.read_noise_sigma",
            "noise.dark_current",
            "seed",
            "differential",
            "records",
        ];
        let metadata = header
            .iter()
            .filter(|(_, k, _)| !KNOWN.contains(&k.as_str()))
            .map(|(_, k, v)| (k.clone(), v.clone()))
            .collect();

        Ok(MeasurementSeries {
            source,
            imperfection,
            source_model,
            noise,
            pixel_pitch_um: num("pixel_pitch_um")?,
            records,
            metadata,
        })
    }
}

fn parse_record(line: &str, line_no: usize) -> Result<Record> {
    let bad = |msg: String| Error::Parse { line: line_no, msg };
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    if !(2..=3).contains(&fields.len()) {
        return Err(bad(format!("expected 2 or 3 fields, got {}", fields.len())));
    }
    let index = fields[0]
        .parse()
        .map_err(|_| bad(format!("bad index '{}'", fields[0])))?;
    let float = |s: &str| -> Result<f64> {
        s.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| bad(format!("bad bucket value '{s}'")))
    };
    Ok(Record {
        index,
        bucket_plus: float(fields[1])?,
        bucket_minus: fields.get(2).map(|s| float(s)).transpose()?,
    })
}
