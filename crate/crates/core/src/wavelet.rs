//! Multi-level orthonormal 2D Haar transform.

use ndarray::{Array2, Zip};

use crate::error::{Error, Result};

/// Detail bands of one decomposition level.
#[derive(Debug, Clone, PartialEq)]
pub struct DetailBands {
    /// Differences across columns.
    pub horizontal: Array2<f64>,
    /// Differences across rows.
    pub vertical: Array2<f64>,
    pub diagonal: Array2<f64>,
}

impl DetailBands {
    fn bands(&self) -> [&Array2<f64>; 3] {
        [&self.horizontal, &self.vertical, &self.diagonal]
    }

    fn bands_mut(&mut self) -> [&mut Array2<f64>; 3] {
        [&mut self.horizontal, &mut self.vertical, &mut self.diagonal]
    }
}

/// Haar decomposition. `details[0]` is the finest level.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveletPyramid {
    pub approx: Array2<f64>,
    pub details: Vec<DetailBands>,
}

impl WaveletPyramid {
    pub fn levels(&self) -> usize {
        self.details.len()
    }

    /// Side of the reconstructed image.
    pub fn side(&self) -> usize {
        self.approx.nrows() << self.levels()
    }

    /// Zero pyramid for an `n × n` image.
    pub fn zeros(n: usize, levels: usize) -> Result<Self> {
        check_levels(n, n, levels)?;
        let details = (0..levels)
            .map(|l| {
                let s = n >> (l + 1);
                DetailBands {
                    horizontal: Array2::zeros((s, s)),
                    vertical: Array2::zeros((s, s)),
                    diagonal: Array2::zeros((s, s)),
                }
            })
            .collect();
        Ok(WaveletPyramid {
            approx: Array2::zeros((n >> levels, n >> levels)),
            details,
        })
    }

    /// All detail coefficients, finest level first.
    pub fn detail_coefficients(&self) -> impl Iterator<Item = f64> + '_ {
        self.details
            .iter()
            .flat_map(|d| d.bands().into_iter().flat_map(|b| b.iter().copied()))
    }

    pub fn detail_l1(&self) -> f64 {
        self.detail_coefficients().map(f64::abs).sum()
    }

    pub fn energy(&self) -> f64 {
        self.approx.iter().map(|v| v * v).sum::<f64>()
            + self.detail_coefficients().map(|v| v * v).sum::<f64>()
    }

    pub fn coefficient_count(&self) -> usize {
        self.approx.len() + self.details.iter().map(|d| 3 * d.horizontal.len()).sum::<usize>()
    }

    fn validate(&self) -> Result<()> {
        let (r, c) = self.approx.dim();
        if r != c {
            return Err(Error::Size(format!("approximation band is {r}×{c}")));
        }
        for (l, d) in self.details.iter().enumerate() {
            let s = r << (self.levels() - 1 - l);
            for band in d.bands() {
                if band.dim() != (s, s) {
                    return Err(Error::ShapeMismatch {
                        expected: (s, s),
                        got: band.dim(),
                    });
                }
            }
        }
        Ok(())
    }
}

fn check_levels(rows: usize, cols: usize, levels: usize) -> Result<()> {
    if rows != cols {
        return Err(Error::Size(format!("image must be square, got {rows}×{cols}")));
    }
    if levels == 0 {
        return Err(Error::Size("at least one level is required".into()));
    }
    if levels >= usize::BITS as usize || rows == 0 || !rows.is_multiple_of(1usize << levels) {
        return Err(Error::Size(format!(
            "side {rows} is not divisible by 2^{levels}"
        )));
    }
    Ok(())
}

fn analyze(image: &Array2<f64>) -> (Array2<f64>, DetailBands) {
    let s = image.nrows() / 2;
    let mut a = Array2::zeros((s, s));
    let mut h = Array2::zeros((s, s));
    let mut v = Array2::zeros((s, s));
    let mut d = Array2::zeros((s, s));
    for y in 0..s {
        for x in 0..s {
            let p = image[[2 * y, 2 * x]];
            let q = image[[2 * y, 2 * x + 1]];
            let r = image[[2 * y + 1, 2 * x]];
            let t = image[[2 * y + 1, 2 * x + 1]];
            a[[y, x]] = 0.5 * (p + q + r + t);
            h[[y, x]] = 0.5 * (p - q + r - t);
            v[[y, x]] = 0.5 * (p + q - r - t);
            d[[y, x]] = 0.5 * (p - q - r + t);
        }
    }
    (
        a,
        DetailBands {
            horizontal: h,
            vertical: v,
            diagonal: d,
        },
    )
}

fn synthesize(approx: &Array2<f64>, det: &DetailBands) -> Array2<f64> {
    let s = approx.nrows();
    let mut out = Array2::zeros((2 * s, 2 * s));
    for y in 0..s {
        for x in 0..s {
            let a = approx[[y, x]];
            let h = det.horizontal[[y, x]];
            let v = det.vertical[[y, x]];
            let d = det.diagonal[[y, x]];
            out[[2 * y, 2 * x]] = 0.5 * (a + h + v + d);
            out[[2 * y, 2 * x + 1]] = 0.5 * (a - h + v - d);
            out[[2 * y + 1, 2 * x]] = 0.5 * (a + h - v - d);
            out[[2 * y + 1, 2 * x + 1]] = 0.5 * (a - h - v + d);
        }
    }
    out
}

/// Orthonormal Haar analysis, applied `levels` times to the approximation.
pub fn dwt2(image: &Array2<f64>, levels: usize) -> Result<WaveletPyramid> {
    let (rows, cols) = image.dim();
    check_levels(rows, cols, levels)?;
    let mut approx = image.to_owned();
    let mut details = Vec::with_capacity(levels);
    for _ in 0..levels {
        let (a, d) = analyze(&approx);
        details.push(d);
        approx = a;
    }
    Ok(WaveletPyramid { approx, details })
}

/// Exact inverse of [`dwt2`].
pub fn idwt2(pyramid: &WaveletPyramid) -> Result<Array2<f64>> {
    pyramid.validate()?;
    let mut image = pyramid.approx.clone();
    for det in pyramid.details.iter().rev() {
        image = synthesize(&image, det);
    }
    Ok(image)
}

/// Scalar soft-threshold `sign(c)·max(|c| − λ, 0)`.
#[inline]
pub fn shrink(c: f64, lambda: f64) -> f64 {
    let m = c.abs() - lambda;
    if m > 0.0 {
        m.copysign(c)
    } else {
        0.0
    }
}

/// Soft-thresholds every detail coefficient; the approximation band is kept.
pub fn soft_threshold(pyramid: &WaveletPyramid, lambda: f64) -> Result<WaveletPyramid> {
    let mut out = pyramid.clone();
    soft_threshold_in_place(&mut out, lambda)?;
    Ok(out)
}

pub fn soft_threshold_in_place(pyramid: &mut WaveletPyramid, lambda: f64) -> Result<()> {
    if !(lambda >= 0.0) {
        return Err(Error::Domain(format!("threshold {lambda} must be non-negative")));
    }
    for det in &mut pyramid.details {
        for band in det.bands_mut() {
            Zip::from(band).for_each(|c| *c = shrink(*c, lambda));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;

    #[test]
    fn constant_image_has_no_details() {
        let img = Array2::from_elem((16, 16), 3.0);
        for levels in 1..=4 {
            let p = dwt2(&img, levels).unwrap();
            assert!(p.detail_coefficients().all(|c| c.abs() < 1e-12));
            let expected = 3.0 * (1 << levels) as f64;
            assert!(p.approx.iter().all(|&a| (a - expected).abs() < 1e-12));
        }
    }

    #[test]
    fn two_by_two_by_hand() {
        let (a, b, c, d) = (1.0, 4.0, -2.0, 7.0);
        let p = dwt2(&arr2(&[[a, b], [c, d]]), 1).unwrap();
        assert!((p.approx[[0, 0]] - (a + b + c + d) / 2.0).abs() < 1e-15);
        assert!((p.details[0].horizontal[[0, 0]] - (a - b + c - d) / 2.0).abs() < 1e-15);
        assert!((p.details[0].vertical[[0, 0]] - (a + b - c - d) / 2.0).abs() < 1e-15);
        assert!((p.details[0].diagonal[[0, 0]] - (a - b - c + d) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_indivisible_side() {
        let img = Array2::<f64>::zeros((12, 12));
        assert!(dwt2(&img, 3).is_err());
        assert!(dwt2(&img, 2).is_ok());
        assert!(dwt2(&Array2::<f64>::zeros((8, 4)), 1).is_err());
    }

    #[test]
    fn zero_pyramid_is_zero_image() {
        let p = WaveletPyramid::zeros(32, 3).unwrap();
        assert_eq!(p.coefficient_count(), 32 * 32);
        let img = idwt2(&p).unwrap();
        assert_eq!(img.dim(), (32, 32));
        assert!(img.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_detail_is_unit_atom() {
        let mut p = WaveletPyramid::zeros(16, 2).unwrap();
        p.details[1].diagonal[[1, 2]] = 1.0;
        let atom = idwt2(&p).unwrap();
        let norm: f64 = atom.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
        // Level-2 atom spans a 4×4 block: 16 entries of ±1/4.
        let support = atom.iter().filter(|v| v.abs() > 0.0).count();
        assert_eq!(support, 16);
        assert!(atom.iter().all(|v| v.abs() == 0.0 || (v.abs() - 0.25).abs() < 1e-15));
    }

    #[test]
    fn mismatched_pyramid_is_rejected() {
        let mut p = WaveletPyramid::zeros(8, 2).unwrap();
        p.details[0].vertical = Array2::zeros((3, 3));
        assert!(idwt2(&p).is_err());
    }

    #[test]
    fn soft_threshold_definition() {
        assert_eq!(shrink(3.0, 1.0), 2.0);
        assert_eq!(shrink(-0.5, 1.0), 0.0);
        assert_eq!(shrink(-3.0, 1.0), -2.0);

        let img = Array2::from_shape_fn((8, 8), |(y, x)| ((y * 8 + x) as f64 * 1.3).sin());
        let p = dwt2(&img, 2).unwrap();
        assert_eq!(soft_threshold(&p, 0.0).unwrap(), p);
        let t = soft_threshold(&p, 0.3).unwrap();
        assert_eq!(t.approx, p.approx);
        assert!(soft_threshold(&p, -1.0).is_err());
    }
}
