use std::time::Instant;

use ndarray::Array2;

use super::{to_image, ReconResult};
use crate::error::{check_shape, Error, Result};
use crate::hadamard::{fwht_in_place, HadamardBasis};
use crate::optics::{speckle_pattern, MeasurementSeries, PatternSource};

/// Covariance estimator `⟨P·B⟩ − ⟨P⟩⟨B⟩`, evaluated as `⟨P·(B − ⟨B⟩)⟩`.
///
/// Patterns are consumed one at a time so long speckle series never need to
/// be held in memory.
pub fn correlation<I>(patterns: I, buckets: &[f64]) -> Result<Array2<f64>>
where
    I: IntoIterator,
    I::Item: std::borrow::Borrow<Array2<f64>>,
{
    use std::borrow::Borrow;

    let m = buckets.len();
    if m < 2 {
        return Err(Error::Size(format!("correlation needs at least 2 exposures, got {m}")));
    }
    let mean_b = buckets.iter().sum::<f64>() / m as f64;
    let mut acc: Option<Array2<f64>> = None;
    let mut seen = 0;
    for (pattern, &b) in patterns.into_iter().zip(buckets) {
        let p = pattern.borrow();
        let w = b - mean_b;
        match acc.as_mut() {
            None => acc = Some(p.mapv(|v| v * w)),
            Some(a) => {
                check_shape(a.dim(), p.dim())?;
                a.scaled_add(w, p);
            }
        }
        seen += 1;
    }
    if seen != m {
        return Err(Error::Size(format!("{seen} patterns for {m} buckets")));
    }
    let mut g = acc.expect("m >= 2");
    g.mapv_inplace(|v| v / m as f64);
    Ok(g)
}

/// Correlation GI of the positive-mask buckets against `patterns`.
pub fn correlation_gi(series: &MeasurementSeries, patterns: &[Array2<f64>]) -> Result<ReconResult> {
    let start = Instant::now();
    if patterns.len() != series.len() {
        return Err(Error::Size(format!(
            "{} patterns for {} records",
            patterns.len(),
            series.len()
        )));
    }
    let image = correlation(patterns, &series.buckets_plus())?;
    Ok(ReconResult::direct(image, start.elapsed()))
}

/// Designed illumination patterns of a series: binary `P⁺` for Hadamard rows,
/// the regenerated gray pattern for speckle.
pub fn series_patterns(series: &MeasurementSeries) -> Result<Vec<Array2<f64>>> {
    match series.source {
        PatternSource::Hadamard { grid_log2, .. } => {
            let basis = HadamardBasis::new(grid_log2, crate::hadamard::Ordering::Natural)?;
            Ok(series
                .records
                .iter()
                .map(|r| basis.signed_pattern(r.index).mapv(|v| if v > 0 { 1.0 } else { 0.0 }))
                .collect())
        }
        PatternSource::Speckle { side, speckle_size } => series
            .records
            .iter()
            .map(|r| speckle_pattern(side, speckle_size, series.noise.seed, r.index as u64))
            .collect(),
    }
}

/// `G = (1/M) Σ (P⁺ᵢ − P⁻ᵢ)(B⁺ᵢ − B⁻ᵢ)`, evaluated with one FWHT.
pub fn differential_gi(series: &MeasurementSeries) -> Result<ReconResult> {
    let start = Instant::now();
    let PatternSource::Hadamard { grid_log2, .. } = series.source else {
        return Err(Error::Domain("differential GI needs a Hadamard series".into()));
    };
    let diffs = series
        .differences()
        .ok_or_else(|| Error::Domain("differential GI needs bucket_minus on every record".into()))?;
    if diffs.is_empty() {
        return Err(Error::Size("empty series".into()));
    }
    let side = 1usize << grid_log2;
    let mut coeffs = vec![0.0; side * side];
    for (r, d) in series.records.iter().zip(&diffs) {
        coeffs[r.index] += d;
    }
    fwht_in_place(&mut coeffs)?;
    let m = diffs.len() as f64;
    coeffs.iter_mut().for_each(|c| *c /= m);
    Ok(ReconResult::direct(to_image(coeffs, side), start.elapsed()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hadamard::Ordering;
    use crate::optics::{run_acquisition, ImperfectionModel, NoiseModel, Phantom};
    use ndarray::arr2;

    #[test]
    fn constant_buckets_give_zero() {
        let pats = vec![arr2(&[[1.0, 0.0], [0.3, 0.2]]), arr2(&[[0.0, 1.0], [0.9, 0.1]])];
        let g = correlation(&pats, &[2.5, 2.5]).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn two_exposure_hand_example() {
        let mut delta = Array2::zeros((3, 3));
        delta[[1, 2]] = 1.0;
        let pats = vec![delta, Array2::zeros((3, 3))];
        let g = correlation(&pats, &[1.0, 0.0]).unwrap();
        for ((y, x), &v) in g.indexed_iter() {
            let expected = if (y, x) == (1, 2) { 0.25 } else { 0.0 };
            assert_eq!(v, expected);
        }
    }

    #[test]
    fn correlation_errors() {
        let pats = vec![Array2::zeros((2, 2))];
        assert!(correlation(&pats, &[1.0]).is_err());
        assert!(correlation(&pats, &[1.0, 2.0]).is_err());
        let mixed = vec![Array2::zeros((2, 2)), Array2::zeros((3, 3))];
        assert!(correlation(&mixed, &[1.0, 2.0]).is_err());
    }

    fn random_phantom(n: usize, seed: u64) -> Phantom {
        let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let t = Array2::from_shape_fn((n, n), |_| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 11) as f64 / (1u64 << 53) as f64
        });
        Phantom::new(t, 10.0).unwrap()
    }

    #[test]
    fn full_differential_series_is_exact() {
        let basis = HadamardBasis::new(3, Ordering::Sequency).unwrap();
        let phantom = random_phantom(8, 3);
        let s = run_acquisition(
            &basis,
            basis.permutation(),
            &phantom,
            &ImperfectionModel::IDEAL,
            None,
            &NoiseModel::noiseless(0),
            true,
        )
        .unwrap();
        let g = differential_gi(&s).unwrap().image;
        for (a, b) in g.iter().zip(phantom.transmission()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn differential_needs_pairs() {
        let basis = HadamardBasis::new(2, Ordering::Natural).unwrap();
        let phantom = random_phantom(4, 1);
        let s = run_acquisition(
            &basis,
            &[0, 1, 2],
            &phantom,
            &ImperfectionModel::IDEAL,
            None,
            &NoiseModel::noiseless(0),
            false,
        )
        .unwrap();
        assert!(differential_gi(&s).is_err());
        let pats = series_patterns(&s).unwrap();
        assert_eq!(pats.len(), 3);
        assert!(correlation_gi(&s, &pats[..2]).is_err());
        assert!(correlation_gi(&s, &pats).is_ok());
    }
}
