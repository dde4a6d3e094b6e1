//! Deterministic test objects.
//!
//! Features transmit (value 1) on an opaque background (value 0), like the
//! stenciled plate and the exposed sample regions being imaged. `uniform`
//! is the exception and fills the grid with a single value.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::hadamard::MAX_GRID_LOG2;
use crate::optics::Phantom;

#[derive(Debug, Clone, PartialEq)]
pub enum PhantomKind {
    /// Text rendered with an embedded 5×7 font.
    Letters { text: String },
    /// Disk with rectangular teeth.
    Gear {
        teeth: usize,
        /// Outer (tip) radius as a fraction of the side.
        outer_radius: f64,
        /// Tooth height as a fraction of the side.
        tooth_depth: f64,
    },
    /// Half disk and a rectangular column separated by a vertical gap.
    SemicylinderGap { gap_px: usize },
    /// Transmitting half-plane to the right of a vertical edge.
    KnifeEdge { position: f64 },
    /// Vertical bars, 50% duty cycle.
    BarTarget { period_px: usize },
    Uniform { value: f64 },
}

impl PhantomKind {
    pub fn name(&self) -> &'static str {
        match self {
            PhantomKind::Letters { .. } => "letters",
            PhantomKind::Gear { .. } => "gear",
            PhantomKind::SemicylinderGap { .. } => "semicylinder_gap",
            PhantomKind::KnifeEdge { .. } => "knife_edge",
            PhantomKind::BarTarget { .. } => "bar_target",
            PhantomKind::Uniform { .. } => "uniform",
        }
    }

    /// Builds a kind from its name and string parameters; missing parameters
    /// take defaults, unknown parameters are rejected.
    pub fn from_params(kind: &str, params: &BTreeMap<String, String>) -> Result<Self> {
        let allowed: &[&str] = match kind {
            "letters" => &["text"],
            "gear" => &["teeth", "outer_radius", "tooth_depth"],
            "semicylinder_gap" => &["gap_px"],
            "knife_edge" => &["position"],
            "bar_target" => &["period_px"],
            "uniform" => &["value"],
            other => return Err(Error::Domain(format!("unknown phantom kind '{other}'"))),
        };
        if let Some(k) = params.keys().find(|k| !allowed.contains(&k.as_str())) {
            return Err(Error::Domain(format!("unknown parameter '{k}' for {kind}")));
        }
        let num = |key: &str, default: f64| -> Result<f64> {
            match params.get(key) {
                Some(v) => v
                    .parse()
                    .map_err(|_| Error::Domain(format!("parameter {key}='{v}' is not a number"))),
                None => Ok(default),
            }
        };
        let int = |key: &str, default: usize| -> Result<usize> {
            match params.get(key) {
                Some(v) => v.parse().map_err(|_| {
                    Error::Domain(format!("parameter {key}='{v}' is not a non-negative integer"))
                }),
                None => Ok(default),
            }
        };
        Ok(match kind {
            "letters" => PhantomKind::Letters {
                text: params.get("text").cloned().unwrap_or_else(|| "CAS".into()),
            },
            "gear" => PhantomKind::Gear {
                teeth: int("teeth", 14)?,
                outer_radius: num("outer_radius", 0.42)?,
                tooth_depth: num("tooth_depth", 0.1)?,
            },
            "semicylinder_gap" => PhantomKind::SemicylinderGap {
                gap_px: int("gap_px", 1)?,
            },
            "knife_edge" => PhantomKind::KnifeEdge {
                position: num("position", 0.5)?,
            },
            "bar_target" => PhantomKind::BarTarget {
                period_px: int("period_px", 4)?,
            },
            _ => PhantomKind::Uniform {
                value: num("value", 1.0)?,
            },
        })
    }
}

impl fmt::Display for PhantomKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PhantomKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PhantomKind::from_params(s, &BTreeMap::new())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhantomSpec {
    pub kind: PhantomKind,
    pub side: usize,
    pub pixel_pitch_um: f64,
}

impl PhantomSpec {
    pub fn new(kind: PhantomKind, side: usize, pixel_pitch_um: f64) -> Self {
        PhantomSpec {
            kind,
            side,
            pixel_pitch_um,
        }
    }
}

pub fn generate(spec: &PhantomSpec) -> Result<Phantom> {
    let n = spec.side;
    if !n.is_power_of_two() || n > 1 << MAX_GRID_LOG2 {
        return Err(Error::Size(format!(
            "phantom side {n} must be a power of two no larger than {}",
            1 << MAX_GRID_LOG2
        )));
    }
    let image = match &spec.kind {
        PhantomKind::Letters { text } => letters(n, text)?,
        PhantomKind::Gear {
            teeth,
            outer_radius,
            tooth_depth,
        } => gear(n, *teeth, *outer_radius, *tooth_depth)?,
        PhantomKind::SemicylinderGap { gap_px } => semicylinder_gap(n, *gap_px)?,
        PhantomKind::KnifeEdge { position } => {
            if !(0.0..=1.0).contains(position) {
                return Err(Error::Domain(format!("edge position {position} not in [0, 1]")));
            }
            let edge = position * n as f64;
            Array2::from_shape_fn((n, n), |(_, x)| if x as f64 + 0.5 >= edge { 1.0 } else { 0.0 })
        }
        PhantomKind::BarTarget { period_px } => {
            if *period_px < 2 || *period_px > n {
                return Err(Error::Domain(format!("bar period {period_px} must be in 2..={n}")));
            }
            let on = period_px / 2;
            Array2::from_shape_fn((n, n), |(_, x)| if x % period_px < on { 1.0 } else { 0.0 })
        }
        PhantomKind::Uniform { value } => {
            if !(0.0..=1.0).contains(value) {
                return Err(Error::Domain(format!("uniform value {value} not in [0, 1]")));
            }
            Array2::from_elem((n, n), *value)
        }
    };
    Phantom::new(image, spec.pixel_pitch_um)
}

fn gear(n: usize, teeth: usize, outer: f64, depth: f64) -> Result<Array2<f64>> {
    if teeth == 0 || teeth > n {
        return Err(Error::Domain(format!("tooth count {teeth} must be in 1..={n}")));
    }
    if !(outer > 0.0 && outer <= 0.5 && depth > 0.0 && depth < outer) {
        return Err(Error::Domain(format!(
            "gear radii outer={outer}, depth={depth} out of range"
        )));
    }
    let c = n as f64 / 2.0;
    let r_tip = outer * n as f64;
    let r_root = r_tip - depth * n as f64;
    Ok(Array2::from_shape_fn((n, n), |(y, x)| {
        let dx = x as f64 + 0.5 - c;
        let dy = y as f64 + 0.5 - c;
        let r = dx.hypot(dy);
        let phase = (dy.atan2(dx) + PI) / (2.0 * PI) * teeth as f64;
        let radius = if phase.fract() < 0.5 { r_tip } else { r_root };
        if r <= radius {
            1.0
        } else {
            0.0
        }
    }))
}

/// Column at which the gap starts.
pub fn semicylinder_gap_column(n: usize) -> usize {
    n / 2
}

fn semicylinder_gap(n: usize, gap: usize) -> Result<Array2<f64>> {
    if gap == 0 || gap > n / 8 {
        return Err(Error::Domain(format!("gap width {gap} must be in 1..={}", n / 8)));
    }
    let nf = n as f64;
    let flat = semicylinder_gap_column(n);
    let radius = 0.3 * nf;
    let cy = nf / 2.0;
    let column_end = flat + gap + (0.2 * nf).round() as usize;
    let (top, bottom) = ((0.15 * nf).round() as usize, (0.85 * nf).round() as usize);
    Ok(Array2::from_shape_fn((n, n), |(y, x)| {
        let py = y as f64 + 0.5 - cy;
        let px = x as f64 + 0.5 - flat as f64;
        let in_half_disk = x < flat && px.hypot(py) <= radius;
        let in_column = x >= flat + gap && x < column_end && y >= top && y < bottom;
        if in_half_disk || in_column {
            1.0
        } else {
            0.0
        }
    }))
}

fn letters(n: usize, text: &str) -> Result<Array2<f64>> {
    let glyphs = text
        .chars()
        .map(|c| {
            glyph(c.to_ascii_uppercase())
                .ok_or_else(|| Error::Domain(format!("no glyph for character '{c}'")))
        })
        .collect::<Result<Vec<_>>>()?;
    if glyphs.is_empty() {
        return Err(Error::Domain("letters phantom needs non-empty text".into()));
    }
    let cells_w = 6 * glyphs.len() - 1;
    let nf = n as f64;
    let scale = (0.9 * nf / cells_w as f64).min(0.9 * nf / 7.0);
    if scale < 1.0 {
        return Err(Error::Domain(format!(
            "text '{text}' does not fit a {n}×{n} grid"
        )));
    }
    let x0 = (nf - scale * cells_w as f64) / 2.0;
    let y0 = (nf - scale * 7.0) / 2.0;
    Ok(Array2::from_shape_fn((n, n), |(y, x)| {
        let u = (x as f64 + 0.5 - x0) / scale;
        let v = (y as f64 + 0.5 - y0) / scale;
        if u < 0.0 || v < 0.0 {
            return 0.0;
        }
        let (cu, cv) = (u as usize, v as usize);
        if cu >= cells_w || cv >= 7 {
            return 0.0;
        }
        let (g, col) = (cu / 6, cu % 6);
        if col == 5 {
            return 0.0;
        }
        if glyphs[g][cv] >> (4 - col) & 1 == 1 {
            1.0
        } else {
            0.0
        }
    }))
}

/// 5×7 glyph rows, most significant of the low five bits is the left column.
fn glyph(c: char) -> Option<[u8; 7]> {
    Some(match c {
        'A' => [0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11],
        'B' => [0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E],
        'C' => [0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E],
        'D' => [0x1E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x1E],
        'E' => [0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F],
        'F' => [0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10],
        'G' => [0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F],
        'H' => [0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11],
        'I' => [0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E],
        'J' => [0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C],
        'K' => [0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11],
        'L' => [0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F],
        'M' => [0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11],
        'N' => [0x11, 0x11, 0x19, 0x15, 0x13, 0x11, 0x11],
        'O' => [0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E],
        'P' => [0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10],
        'Q' => [0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D],
        'R' => [0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11],
        'S' => [0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E],
        'T' => [0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04],
        'U' => [0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E],
        'V' => [0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04],
        'W' => [0x11, 0x11, 0x11, 0x15, 0x15, 0x15, 0x0A],
        'X' => [0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11],
        'Y' => [0x11, 0x11, 0x11, 0x0A, 0x04, 0x04, 0x04],
        'Z' => [0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F],
        '0' => [0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E],
        '1' => [0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E],
        '2' => [0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F],
        '3' => [0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E],
        '4' => [0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02],
        '5' => [0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E],
        '6' => [0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E],
        '7' => [0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08],
        '8' => [0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E],
        '9' => [0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C],
        ' ' => [0; 7],
        _ => return None,
    })
}
