//! Separable Gaussian convolution with zero padding.

use ndarray::Array2;

/// FWHM of a Gaussian per unit σ, `2·√(2 ln 2)`.
pub const FWHM_PER_SIGMA: f64 = 2.3548;

/// Sigmas below this are treated as no blur.
const MIN_SIGMA: f64 = 1e-6;

/// Normalized Gaussian taps truncated at ±⌈3σ⌉. Returns `[1.0]` for σ ≈ 0.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    if sigma < MIN_SIGMA {
        return vec![1.0];
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let mut taps: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= sum);
    taps
}

fn convolve_axis(image: &Array2<f64>, taps: &[f64], along_rows: bool) -> Array2<f64> {
    if taps.len() == 1 {
        return image.clone();
    }
    let (rows, cols) = image.dim();
    let radius = (taps.len() / 2) as isize;
    Array2::from_shape_fn((rows, cols), |(y, x)| {
        let mut acc = 0.0;
        for (k, &w) in taps.iter().enumerate() {
            let off = k as isize - radius;
            let (sy, sx) = if along_rows {
                (y as isize, x as isize - off)
            } else {
                (y as isize - off, x as isize)
            };
            if sy >= 0 && sx >= 0 && (sy as usize) < rows && (sx as usize) < cols {
                acc += w * image[[sy as usize, sx as usize]];
            }
        }
        acc
    })
}

/// Blurs with independent σ across columns (`sigma_x`) and across rows
/// (`sigma_y`). Pixels outside the image are zero.
pub fn gaussian_blur(image: &Array2<f64>, sigma_x: f64, sigma_y: f64) -> Array2<f64> {
    let horizontal = convolve_axis(image, &gaussian_kernel(sigma_x), true);
    convolve_axis(&horizontal, &gaussian_kernel(sigma_y), false)
}
