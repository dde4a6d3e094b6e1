//! Forward model of the acquisition chain.
//!
//! A binary mask pattern is rendered with finite modulation depth and
//! sloped (Gaussian-blurred) edges, optionally shifted by per-exposure
//! jitter, blurred by the penumbra of an extended source and finally
//! integrated against the object transmission by a noisy bucket detector.
//!
//! Every random draw comes from a ChaCha stream keyed by `(seed, purpose,
//! exposure)`, so exposures can be evaluated in any order or in parallel
//! and still reproduce bit-for-bit.

mod blur;
mod series;

pub use blur::{gaussian_blur, gaussian_kernel, FWHM_PER_SIGMA};
pub use series::{MeasurementSeries, PatternSource, Record};

use ndarray::{Array2, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;

use crate::error::{check_shape, Error, Result};
use crate::hadamard::{make_pattern_pair, HadamardBasis};

/// Mask fabrication imperfections.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImperfectionModel {
    /// Modulation depth ratio `(D_max − D_min) / D_max`.
    pub modulation_depth: f64,
    /// Edge slope as a Gaussian σ, in pattern pixels.
    pub edge_blur_sigma: f64,
    /// Per-exposure misalignment σ, in pattern pixels.
    pub jitter_sigma: f64,
}

impl ImperfectionModel {
    pub const IDEAL: ImperfectionModel = ImperfectionModel {
        modulation_depth: 1.0,
        edge_blur_sigma: 0.0,
        jitter_sigma: 0.0,
    };

    pub fn new(modulation_depth: f64, edge_blur_sigma: f64, jitter_sigma: f64) -> Result<Self> {
        let m = ImperfectionModel {
            modulation_depth,
            edge_blur_sigma,
            jitter_sigma,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.modulation_depth) {
            return Err(Error::Domain(format!(
                "modulation depth {} not in [0, 1]",
                self.modulation_depth
            )));
        }
        if !(self.edge_blur_sigma >= 0.0 && self.jitter_sigma >= 0.0) {
            return Err(Error::Domain("blur and jitter sigmas must be >= 0".into()));
        }
        Ok(())
    }

    pub fn is_ideal(&self) -> bool {
        self.modulation_depth == 1.0 && self.edge_blur_sigma == 0.0 && self.jitter_sigma == 0.0
    }
}

impl Default for ImperfectionModel {
    fn default() -> Self {
        Self::IDEAL
    }
}

/// Extended incoherent source and projection geometry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceModel {
    /// Source FWHM in μm, `[across columns, across rows]`.
    pub fwhm_um: [f64; 2],
    pub source_to_mask_mm: f64,
    pub mask_to_object_mm: f64,
}

impl SourceModel {
    pub fn new(fwhm_um: [f64; 2], source_to_mask_mm: f64, mask_to_object_mm: f64) -> Result<Self> {
        let s = SourceModel {
            fwhm_um,
            source_to_mask_mm,
            mask_to_object_mm,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let lengths = [
            self.fwhm_um[0],
            self.fwhm_um[1],
            self.source_to_mask_mm,
            self.mask_to_object_mm,
        ];
        if lengths.iter().all(|&l| l > 0.0 && l.is_finite()) {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "source lengths must be positive, got {lengths:?}"
            )))
        }
    }

    /// Penumbral blur FWHM in object-plane pixels, `[x, y]`.
    pub fn blur_fwhm_px(&self, pixel_pitch_um: f64) -> [f64; 2] {
        let mag = self.mask_to_object_mm / self.source_to_mask_mm;
        self.fwhm_um.map(|f| f * mag / pixel_pitch_um)
    }
}

/// Bucket detector noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    /// Expected photon count for a unit-intensity bucket; 0 disables shot noise.
    pub photon_scale: f64,
    pub read_noise_sigma: f64,
    pub dark_current: f64,
    pub seed: u64,
}

impl NoiseModel {
    pub fn noiseless(seed: u64) -> Self {
        NoiseModel {
            photon_scale: 0.0,
            read_noise_sigma: 0.0,
            dark_current: 0.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.photon_scale >= 0.0 && self.read_noise_sigma >= 0.0) {
            return Err(Error::Domain(
                "photon_scale and read_noise_sigma must be >= 0".into(),
            ));
        }
        if !self.dark_current.is_finite() {
            return Err(Error::Domain("dark_current must be finite".into()));
        }
        Ok(())
    }
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self::noiseless(0)
    }
}

/// Object transmission map.
#[derive(Debug, Clone, PartialEq)]
pub struct Phantom {
    transmission: Array2<f64>,
    pixel_pitch_um: f64,
}

impl Phantom {
    pub fn new(transmission: Array2<f64>, pixel_pitch_um: f64) -> Result<Self> {
        if let Some(v) = transmission.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Domain(format!("transmission {v} not in [0, 1]")));
        }
        if !(pixel_pitch_um > 0.0) {
            return Err(Error::Domain(format!(
                "pixel pitch {pixel_pitch_um} must be positive"
            )));
        }
        Ok(Phantom {
            transmission,
            pixel_pitch_um,
        })
    }

    pub fn transmission(&self) -> &Array2<f64> {
        &self.transmission
    }

    pub fn pixel_pitch_um(&self) -> f64 {
        self.pixel_pitch_um
    }

    pub fn side(&self) -> usize {
        self.transmission.nrows()
    }
}

const STREAM_BUCKET: u64 = 1;
const STREAM_JITTER: u64 = 2;
const STREAM_SPECKLE: u64 = 3;

/// Independent ChaCha stream for one `(seed, purpose, index)` triple.
fn stream_rng(seed: u64, purpose: u64, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&purpose.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}

/// Renders a binary mask: opaque pixels transmit `1 − D_r`, open pixels 1,
/// then the etched edges are softened by a Gaussian of σ = `edge_blur_sigma`.
pub fn render_mask(pattern: &Array2<u8>, imp: &ImperfectionModel) -> Result<Array2<f64>> {
    imp.validate()?;
    if pattern.iter().any(|&v| v > 1) {
        return Err(Error::Domain("mask pattern must be binary".into()));
    }
    let floor = 1.0 - imp.modulation_depth;
    let gray = pattern.mapv(|v| if v == 1 { 1.0 } else { floor });
    Ok(gaussian_blur(&gray, imp.edge_blur_sigma, imp.edge_blur_sigma))
}

/// Penumbral blur of an image projected through the mask.
pub fn source_blur(image: &Array2<f64>, src: &SourceModel, pixel_pitch_um: f64) -> Result<Array2<f64>> {
    src.validate()?;
    if !(pixel_pitch_um > 0.0) {
        return Err(Error::Domain(format!(
            "pixel pitch {pixel_pitch_um} must be positive"
        )));
    }
    let [fx, fy] = src.blur_fwhm_px(pixel_pitch_um);
    Ok(gaussian_blur(
        image,
        fx / FWHM_PER_SIGMA,
        fy / FWHM_PER_SIGMA,
    ))
}

/// Integrates a rendered pattern against the phantom and adds detector noise
/// drawn from the stream for `exposure_index`.
pub fn bucket_measure(
    rendered: &Array2<f64>,
    phantom: &Phantom,
    noise: &NoiseModel,
    exposure_index: u64,
) -> Result<f64> {
    check_shape(phantom.transmission.dim(), rendered.dim())?;
    noise.validate()?;
    let mut signal = 0.0;
    Zip::from(rendered)
        .and(&phantom.transmission)
        .for_each(|&p, &t| signal += p * t);
    Ok(add_noise(signal, noise, exposure_index))
}

fn add_noise(signal: f64, noise: &NoiseModel, exposure_index: u64) -> f64 {
    let mut value = signal;
    if noise.photon_scale > 0.0 || noise.read_noise_sigma > 0.0 {
        let mut rng = stream_rng(noise.seed, STREAM_BUCKET, exposure_index);
        if noise.photon_scale > 0.0 {
            let mean = signal.max(0.0) * noise.photon_scale;
            let counts = if mean > 0.0 {
                Poisson::new(mean).map(|p| p.sample(&mut rng)).unwrap_or(mean)
            } else {
                0.0
            };
            value = counts / noise.photon_scale;
        }
        if noise.read_noise_sigma > 0.0 {
            let normal = Normal::new(0.0, noise.read_noise_sigma).expect("sigma validated");
            value += normal.sample(&mut rng);
        }
    }
    value + noise.dark_current
}

/// Zero-padded integer translation: `out[y][x] = image[y − dy][x − dx]`.
pub fn shift(image: &Array2<f64>, dy: isize, dx: isize) -> Array2<f64> {
    let (rows, cols) = image.dim();
    Array2::from_shape_fn((rows, cols), |(y, x)| {
        let sy = y as isize - dy;
        let sx = x as isize - dx;
        if sy >= 0 && sx >= 0 && (sy as usize) < rows && (sx as usize) < cols {
            image[[sy as usize, sx as usize]]
        } else {
            0.0
        }
    })
}

fn jitter_offsets(sigma: f64, seed: u64, exposure: u64) -> (isize, isize) {
    if sigma <= 0.0 {
        return (0, 0);
    }
    let mut rng = stream_rng(seed, STREAM_JITTER, exposure);
    let normal = Normal::new(0.0, sigma).expect("sigma validated");
    let dy = normal.sample(&mut rng).round() as isize;
    let dx = normal.sample(&mut rng).round() as isize;
    (dy, dx)
}

/// Optical chain shared by acquisition and model-aware operators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpticalChain {
    pub imperfection: ImperfectionModel,
    pub source: Option<SourceModel>,
    pub pixel_pitch_um: f64,
}

impl OpticalChain {
    pub fn ideal(pixel_pitch_um: f64) -> Self {
        OpticalChain {
            imperfection: ImperfectionModel::IDEAL,
            source: None,
            pixel_pitch_um,
        }
    }

    /// Renders a binary mask through edge blur and source blur, without jitter.
    pub fn project(&self, pattern: &Array2<u8>) -> Result<Array2<f64>> {
        let rendered = render_mask(pattern, &self.imperfection)?;
        self.blur_source(rendered)
    }

    fn blur_source(&self, image: Array2<f64>) -> Result<Array2<f64>> {
        match &self.source {
            Some(src) => source_blur(&image, src, self.pixel_pitch_um),
            None => Ok(image),
        }
    }
}

/// Simulates one bucket (or bucket pair) per selected basis row.
///
/// Record `i` uses jitter stream `i` and bucket streams `2i` (positive mask)
/// and `2i + 1` (complementary mask). Both masks of a record share the same
/// jitter offset.
pub fn run_acquisition(
    basis: &HadamardBasis,
    indices: &[usize],
    phantom: &Phantom,
    imp: &ImperfectionModel,
    src: Option<&SourceModel>,
    noise: &NoiseModel,
    differential: bool,
) -> Result<MeasurementSeries> {
    imp.validate()?;
    noise.validate()?;
    if let Some(s) = src {
        s.validate()?;
    }
    let n = basis.side();
    check_shape((n, n), phantom.transmission.dim())?;
    let chain = OpticalChain {
        imperfection: *imp,
        source: src.copied(),
        pixel_pitch_um: phantom.pixel_pitch_um,
    };

    let records = indices
        .par_iter()
        .enumerate()
        .map(|(i, &index)| {
            let pair = make_pattern_pair(basis, index, n)?;
            let (dy, dx) = jitter_offsets(imp.jitter_sigma, noise.seed, i as u64);
            let expose = |mask: &Array2<u8>, stream: u64| -> Result<f64> {
                let rendered = render_mask(mask, imp)?;
                let moved = if (dy, dx) == (0, 0) {
                    rendered
                } else {
                    shift(&rendered, dy, dx)
                };
                let projected = chain.blur_source(moved)?;
                bucket_measure(&projected, phantom, noise, stream)
            };
            let plus = expose(&pair.positive, 2 * i as u64)?;
            let minus = if differential {
                Some(expose(&pair.negative, 2 * i as u64 + 1)?)
            } else {
                None
            };
            Ok(Record {
                index,
                bucket_plus: plus,
                bucket_minus: minus,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(MeasurementSeries {
        source: PatternSource::Hadamard {
            grid_log2: basis.grid_log2(),
            ordering: basis.ordering(),
        },
        imperfection: *imp,
        source_model: src.copied(),
        noise: *noise,
        pixel_pitch_um: phantom.pixel_pitch_um,
        records,
        metadata: Vec::new(),
    })
}

/// Speckle pattern `index` of the family `(n, speckle_size, seed)`: white
/// Gaussian noise on a coarse grid, nearest-neighbor upsampled and min-max
/// normalized to `[0, 1]`. A constant pattern maps to 0.5.
pub fn speckle_pattern(n: usize, speckle_size: usize, seed: u64, index: u64) -> Result<Array2<f64>> {
    if speckle_size == 0 || speckle_size > n {
        return Err(Error::Domain(format!(
            "speckle size {speckle_size} must be in 1..={n}"
        )));
    }
    let cells = n.div_ceil(speckle_size);
    let mut rng = stream_rng(seed, STREAM_SPECKLE, index);
    let coarse: Vec<f64> = (0..cells * cells)
        .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
        .collect();
    let (lo, hi) = coarse
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = hi - lo;
    Ok(Array2::from_shape_fn((n, n), |(y, x)| {
        let v = coarse[(y / speckle_size) * cells + x / speckle_size];
        if span > 0.0 {
            (v - lo) / span
        } else {
            0.5
        }
    }))
}

pub fn random_speckle_patterns(
    n: usize,
    count: usize,
    speckle_size: usize,
    seed: u64,
) -> Result<Vec<Array2<f64>>> {
    if count == 0 {
        return Err(Error::Domain("speckle count must be >= 1".into()));
    }
    (0..count as u64)
        .into_par_iter()
        .map(|i| speckle_pattern(n, speckle_size, seed, i))
        .collect()
}

/// Simulates a random-speckle acquisition. Speckles are gray illumination
/// patterns, so mask modulation depth and edge blur do not apply; source blur
/// and detector noise do. Patterns reuse the noise seed.
pub fn run_speckle_acquisition(
    count: usize,
    speckle_size: usize,
    phantom: &Phantom,
    src: Option<&SourceModel>,
    noise: &NoiseModel,
) -> Result<MeasurementSeries> {
    noise.validate()?;
    if count == 0 {
        return Err(Error::Domain("speckle count must be >= 1".into()));
    }
    let n = phantom.side();
    let chain = OpticalChain {
        imperfection: ImperfectionModel::IDEAL,
        source: src.copied(),
        pixel_pitch_um: phantom.pixel_pitch_um,
    };
    let records = (0..count)
        .into_par_iter()
        .map(|i| {
            let pattern = speckle_pattern(n, speckle_size, noise.seed, i as u64)?;
            let projected = chain.blur_source(pattern)?;
            Ok(Record {
                index: i,
                bucket_plus: bucket_measure(&projected, phantom, noise, 2 * i as u64)?,
                bucket_minus: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MeasurementSeries {
        source: PatternSource::Speckle {
            side: n,
            speckle_size,
        },
        imperfection: ImperfectionModel::IDEAL,
        source_model: src.copied(),
        noise: *noise,
        pixel_pitch_um: phantom.pixel_pitch_um,
        records,
        metadata: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hadamard::Ordering;
    use ndarray::arr2;

    fn ones(n: usize) -> Phantom {
        Phantom::new(Array2::ones((n, n)), 10.0).unwrap()
    }

    #[test]
    fn render_mask_depths() {
        let pat = arr2(&[[1u8, 0], [0, 1]]);
        let imp = ImperfectionModel::new(0.75, 0.0, 0.0).unwrap();
        let r = render_mask(&pat, &imp).unwrap();
        assert_eq!(r, arr2(&[[1.0, 0.25], [0.25, 1.0]]));
        let ideal = render_mask(&pat, &ImperfectionModel::IDEAL).unwrap();
        assert_eq!(ideal, pat.mapv(f64::from));
        assert!(render_mask(&arr2(&[[2u8]]), &imp).is_err());
        assert!(ImperfectionModel::new(1.2, 0.0, 0.0).is_err());
    }

    #[test]
    fn render_mask_blurred_checkerboard_stays_inside() {
        // Interior pixels of a blurred checkerboard are strict averages of
        // 1.0 and 0.17, so they lie strictly between the two levels.
        let n = 16;
        let pat = Array2::from_shape_fn((n, n), |(y, x)| ((y + x) % 2) as u8);
        let imp = ImperfectionModel::new(0.83, 1.0, 0.0).unwrap();
        let r = render_mask(&pat, &imp).unwrap();
        let interior = r.slice(ndarray::s![3..n - 3, 3..n - 3]);
        let min = interior.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = interior.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(min > 0.17 && max < 1.0, "min {min} max {max}");
    }

    #[test]
    fn source_geometry() {
        let src = SourceModel::new([37.0, 30.0], 100.0, 100.0).unwrap();
        let [fx, fy] = src.blur_fwhm_px(10.0);
        assert!((fx - 3.7).abs() < 1e-12 && (fy - 3.0).abs() < 1e-12);
        assert!(SourceModel::new([37.0, 30.0], 0.0, 100.0).is_err());
        assert!(SourceModel::new([37.0, 30.0], 100.0, -1.0).is_err());
    }

    #[test]
    fn source_blur_delta_is_kernel() {
        let mut img = Array2::zeros((41, 41));
        img[[20, 20]] = 1.0;
        let src = SourceModel::new([37.0, 30.0], 100.0, 100.0).unwrap();
        let out = source_blur(&img, &src, 10.0).unwrap();
        assert!((out.sum() - 1.0).abs() < 1e-9);
        assert!(out[[20, 20]] < 1.0);

        let contact = SourceModel::new([37.0, 30.0], 100.0, 1e-9).unwrap();
        let same = source_blur(&img, &contact, 10.0).unwrap();
        assert!((same[[20, 20]] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn noiseless_buckets() {
        let p = ones(2);
        let pat = Array2::ones((2, 2));
        assert_eq!(bucket_measure(&pat, &p, &NoiseModel::noiseless(0), 0).unwrap(), 4.0);

        let dark = NoiseModel {
            dark_current: 0.1,
            ..NoiseModel::noiseless(0)
        };
        let zero = Phantom::new(Array2::zeros((2, 2)), 1.0).unwrap();
        assert_eq!(bucket_measure(&pat, &zero, &dark, 0).unwrap(), 0.1);

        let wrong = Array2::ones((3, 3));
        assert!(matches!(
            bucket_measure(&wrong, &p, &dark, 0),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn bucket_matches_loop_oracle() {
        let n = 8;
        let pat = Array2::from_shape_fn((n, n), |(y, x)| ((y * 7 + x * 3) % 5) as f64 / 4.0);
        let t = Array2::from_shape_fn((n, n), |(y, x)| ((y * 3 + x * 11) % 7) as f64 / 6.0);
        let phantom = Phantom::new(t.clone(), 1.0).unwrap();
        let mut expected = 0.0;
        for y in 0..n {
            for x in 0..n {
                expected += pat[[y, x]] * t[[y, x]];
            }
        }
        let got = bucket_measure(&pat, &phantom, &NoiseModel::noiseless(0), 5).unwrap();
        assert!((got - expected).abs() < 1e-12);
    }

    #[test]
    fn noisy_bucket_is_keyed_by_exposure() {
        let p = ones(4);
        let pat = Array2::from_elem((4, 4), 0.5);
        let noise = NoiseModel {
            photon_scale: 100.0,
            read_noise_sigma: 0.01,
            dark_current: 0.0,
            seed: 9,
        };
        let a = bucket_measure(&pat, &p, &noise, 3).unwrap();
        let b = bucket_measure(&pat, &p, &noise, 3).unwrap();
        let c = bucket_measure(&pat, &p, &noise, 4).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
        assert_ne!(a, c);
        assert!((a - 8.0).abs() < 2.0);
    }

    #[test]
    fn shift_moves_and_pads() {
        let img = arr2(&[[1.0, 2.0], [3.0, 4.0]]);
        assert_eq!(shift(&img, 1, 0), arr2(&[[0.0, 0.0], [1.0, 2.0]]));
        assert_eq!(shift(&img, 0, -1), arr2(&[[2.0, 0.0], [4.0, 0.0]]));
    }

    #[test]
    fn acquisition_of_first_row_sums_phantom() {
        let basis = HadamardBasis::new(3, Ordering::Natural).unwrap();
        let t = Array2::from_shape_fn((8, 8), |(y, x)| ((y + 2 * x) % 3) as f64 / 2.0);
        let phantom = Phantom::new(t.clone(), 10.0).unwrap();
        let s = run_acquisition(
            &basis,
            &[0],
            &phantom,
            &ImperfectionModel::IDEAL,
            None,
            &NoiseModel::noiseless(0),
            false,
        )
        .unwrap();
        assert_eq!(s.records.len(), 1);
        assert!((s.records[0].bucket_plus - t.sum()).abs() < 1e-12);
        assert!(s.records[0].bucket_minus.is_none());
    }

    #[test]
    fn speckle_patterns() {
        let flat = speckle_pattern(16, 16, 1, 0).unwrap();
        assert!(flat.iter().all(|&v| v == flat[[0, 0]]));
        let p = speckle_pattern(16, 4, 1, 2).unwrap();
        assert!(p.iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert_eq!(p[[0, 0]], p[[3, 3]]);
        assert!(speckle_pattern(16, 17, 1, 0).is_err());
        assert!(random_speckle_patterns(16, 0, 1, 0).is_err());
        assert_eq!(p, speckle_pattern(16, 4, 1, 2).unwrap());
    }
}
