//! Image-quality metrics: CNR, modulation depth, MSE/PSNR/correlation and a
//! knife-edge resolution estimate.

use ndarray::{Array2, Zip};

use crate::error::{check_shape, Error, Result};
use crate::optics::FWHM_PER_SIGMA;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    /// Transmission-1 pixel.
    One,
    /// Transmission-0 pixel.
    Zero,
    Ignore,
}

/// Per-pixel region labels for CNR.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionMask {
    labels: Array2<Region>,
}

impl RegionMask {
    pub fn new(labels: Array2<Region>) -> Result<Self> {
        let count = |r: Region| labels.iter().filter(|&&l| l == r).count();
        let (ones, zeros) = (count(Region::One), count(Region::Zero));
        if ones < 2 || zeros < 2 {
            return Err(Error::Domain(format!(
                "CNR needs at least 2 pixels per region, got {ones} and {zeros}"
            )));
        }
        Ok(RegionMask { labels })
    }

    /// Labels pixels of a reference transmission map: `>= 0.5` is region 1.
    pub fn from_reference(reference: &Array2<f64>) -> Result<Self> {
        Self::new(reference.mapv(|v| if v >= 0.5 { Region::One } else { Region::Zero }))
    }

    pub fn labels(&self) -> &Array2<Region> {
        &self.labels
    }

    /// Swaps regions 1 and 0.
    pub fn swapped(&self) -> Self {
        RegionMask {
            labels: self.labels.mapv(|l| match l {
                Region::One => Region::Zero,
                Region::Zero => Region::One,
                Region::Ignore => Region::Ignore,
            }),
        }
    }
}

fn mean_var(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var)
}

/// `(⟨G₁⟩ − ⟨G₀⟩) / √(σ₁² + σ₀²)` with population variances.
pub fn cnr(image: &Array2<f64>, regions: &RegionMask) -> Result<f64> {
    check_shape(regions.labels.dim(), image.dim())?;
    let mut g1 = Vec::new();
    let mut g0 = Vec::new();
    Zip::from(image).and(&regions.labels).for_each(|&v, &l| match l {
        Region::One => g1.push(v),
        Region::Zero => g0.push(v),
        Region::Ignore => {}
    });
    let (m1, v1) = mean_var(&g1);
    let (m0, v0) = mean_var(&g0);
    let pooled = v1 + v0;
    if pooled <= 0.0 {
        return Err(Error::DegenerateVariance(
            "both regions are constant; CNR is undefined".into(),
        ));
    }
    Ok((m1 - m0) / pooled.sqrt())
}

/// `(max − min) / max` of an intensity profile.
pub fn modulation_depth(profile: &[f64]) -> Result<f64> {
    let max = profile.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = profile.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(max > 0.0) {
        return Err(Error::Domain("profile maximum must be positive".into()));
    }
    Ok((max - min) / max)
}

/// Pixel-wise comparison of two images.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Comparison {
    pub mse: f64,
    /// Peak 1.0; `+∞` when the images are identical.
    pub psnr: f64,
    /// Pearson correlation over all pixels.
    pub ncorr: f64,
}

pub fn mse(a: &Array2<f64>, b: &Array2<f64>) -> Result<f64> {
    check_shape(a.dim(), b.dim())?;
    let mut acc = 0.0;
    Zip::from(a).and(b).for_each(|&x, &y| acc += (x - y) * (x - y));
    Ok(acc / a.len() as f64)
}

pub fn psnr(a: &Array2<f64>, b: &Array2<f64>) -> Result<f64> {
    let m = mse(a, b)?;
    Ok(if m == 0.0 {
        f64::INFINITY
    } else {
        -10.0 * m.log10()
    })
}

pub fn normalized_correlation(a: &Array2<f64>, b: &Array2<f64>) -> Result<f64> {
    check_shape(a.dim(), b.dim())?;
    let n = a.len() as f64;
    let ma = a.sum() / n;
    let mb = b.sum() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    Zip::from(a).and(b).for_each(|&x, &y| {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    });
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::DegenerateVariance(
            "correlation of a constant image is undefined".into(),
        ));
    }
    Ok(sab / (saa * sbb).sqrt())
}

pub fn mse_psnr_ncorr(a: &Array2<f64>, b: &Array2<f64>) -> Result<Comparison> {
    Ok(Comparison {
        mse: mse(a, b)?,
        psnr: psnr(a, b)?,
        ncorr: normalized_correlation(a, b)?,
    })
}

/// Affine map onto `[0, 1]`. A constant image maps to zeros.
pub fn min_max_normalize(image: &Array2<f64>) -> Array2<f64> {
    let lo = image.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = image.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    if span > 0.0 {
        image.mapv(|v| (v - lo) / span)
    } else {
        Array2::zeros(image.dim())
    }
}

/// Variance added by the central-difference operator `(f(x+1) − f(x−1)) / 2`,
/// which averages the line-spread function over a unit-density box of width 2.
const CENTRAL_DIFFERENCE_VARIANCE: f64 = 1.0 / 3.0;

/// FWHM of the line-spread function behind an edge-spread profile, in the
/// units of `pitch`.
///
/// The profile is differentiated by central differences and a Gaussian is
/// fitted to the derivative by damped Gauss–Newton, starting from the 10–90%
/// rise width. The fitted variance is corrected for the smoothing of the
/// difference operator.
pub fn knife_edge_fwhm(profile: &[f64], pitch: f64) -> Result<f64> {
    if profile.len() < 5 {
        return Err(Error::NoEdge("profile needs at least 5 samples".into()));
    }
    if !(pitch > 0.0) {
        return Err(Error::Domain(format!("pitch {pitch} must be positive")));
    }
    let rising = profile[profile.len() - 1] >= profile[0];
    let esf: Vec<f64> = if rising {
        profile.to_vec()
    } else {
        profile.iter().map(|v| -v).collect()
    };
    let lo = esf.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = esf.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    if !(span > 0.0) {
        return Err(Error::NoEdge("profile is flat".into()));
    }
    let x10 = crossing(&esf, lo + 0.1 * span).ok_or(Error::NoEdge("no 10% crossing".into()))?;
    let x90 = crossing(&esf, lo + 0.9 * span).ok_or(Error::NoEdge("no 90% crossing".into()))?;
    if x90 <= x10 {
        return Err(Error::NoEdge("edge is not monotone across 10–90%".into()));
    }

    let n = esf.len();
    let lsf: Vec<f64> = (0..n)
        .map(|i| match i {
            0 => esf[1] - esf[0],
            i if i == n - 1 => esf[n - 1] - esf[n - 2],
            i => 0.5 * (esf[i + 1] - esf[i - 1]),
        })
        .collect();

    let peak = lsf
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best });
    let sigma0 = ((x90 - x10) / 1.083 / FWHM_PER_SIGMA).max(0.3);
    let center0 = 0.5 * (x10 + x90);
    let (_, _, sigma) = fit_gaussian(&lsf, [peak.1, center0, sigma0]);
    let var = (sigma * sigma - CENTRAL_DIFFERENCE_VARIANCE).max(0.0);
    Ok(FWHM_PER_SIGMA * var.sqrt() * pitch)
}

/// Linearly interpolated position where `values` first reaches `level`.
fn crossing(values: &[f64], level: f64) -> Option<f64> {
    if values[0] >= level {
        return Some(0.0);
    }
    values.windows(2).enumerate().find_map(|(i, w)| {
        (w[0] < level && w[1] >= level).then(|| i as f64 + (level - w[0]) / (w[1] - w[0]))
    })
}

/// Levenberg–Marquardt fit of `a·exp(−(x − μ)² / 2s²)` to samples at
/// `x = 0, 1, …`. Returns `(a, μ, |s|)`.
fn fit_gaussian(samples: &[f64], init: [f64; 3]) -> (f64, f64, f64) {
    let cost = |p: &[f64; 3]| -> f64 {
        samples
            .iter()
            .enumerate()
            .map(|(i, &d)| {
                let z = (i as f64 - p[1]) / p[2];
                let r = p[0] * (-0.5 * z * z).exp() - d;
                r * r
            })
            .sum()
    };
    let mut p = init;
    let mut current = cost(&p);
    let mut damping = 1e-3;
    for _ in 0..500 {
        let mut jtj = [[0.0; 3]; 3];
        let mut jtr = [0.0; 3];
        for (i, &d) in samples.iter().enumerate() {
            let dx = i as f64 - p[1];
            let e = (-0.5 * dx * dx / (p[2] * p[2])).exp();
            let r = p[0] * e - d;
            let j = [
                e,
                p[0] * e * dx / (p[2] * p[2]),
                p[0] * e * dx * dx / (p[2] * p[2] * p[2]),
            ];
            for a in 0..3 {
                jtr[a] += j[a] * r;
                for b in 0..3 {
                    jtj[a][b] += j[a] * j[b];
                }
            }
        }
        let mut improved = false;
        while damping < 1e12 {
            let mut m = jtj;
            for (a, row) in m.iter_mut().enumerate() {
                row[a] += damping * jtj[a][a].max(1e-12);
            }
            let Some(step) = solve3(m, jtr.map(|v| -v)) else {
                damping *= 10.0;
                continue;
            };
            let trial = [p[0] + step[0], p[1] + step[1], (p[2] + step[2]).abs().max(1e-3)];
            let c = cost(&trial);
            if c < current {
                let rel = (current - c) / current.max(f64::MIN_POSITIVE);
                p = trial;
                current = c;
                damping = (damping / 10.0).max(1e-12);
                improved = rel > 1e-14;
                break;
            }
            damping *= 10.0;
        }
        if !improved {
            break;
        }
    }
    (p[0], p[1], p[2].abs())
}

fn solve3(mut m: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let pivot = (col..3).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        if m[pivot][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..3 {
            let f = m[row][col] / m[col][col];
            for k in col..3 {
                m[row][k] -= f * m[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let tail: f64 = (row + 1..3).map(|k| m[row][k] * x[k]).sum();
        x[row] = (b[row] - tail) / m[row][row];
    }
    Some(x)
}
