use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hadamard::{fwht_in_place, make_pattern_pair, HadamardBasis};
use crate::optics::OpticalChain;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorMode {
    /// Selected Sylvester rows applied through the FWHT.
    IdealHadamard,
    /// Dense rows holding the rendered, imperfect patterns.
    Explicit,
}

#[derive(Debug, Clone, PartialEq)]
enum Rows {
    Hadamard { indices: Vec<usize>, signed: bool },
    /// Patterns as rows, plus a row-major copy of the transpose so the
    /// adjoint also streams contiguous memory.
    Dense { a: Array2<f64>, at: Array2<f64> },
}

/// Linear map from an `n × n` image (flattened row-major) to `M` buckets.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementOperator {
    rows: Rows,
    side: usize,
}

impl MeasurementOperator {
    /// Rows `h_i` (signed) or `(1 + h_i) / 2` (binary) of the Sylvester matrix.
    pub fn ideal_hadamard(grid_log2: u32, indices: Vec<usize>, signed: bool) -> Result<Self> {
        let side = 1usize << grid_log2;
        let total = side * side;
        if indices.is_empty() {
            return Err(Error::Size("operator needs at least one row".into()));
        }
        if let Some(&i) = indices.iter().find(|&&i| i >= total) {
            return Err(Error::Size(format!("row index {i} out of range 0..{total}")));
        }
        Ok(MeasurementOperator {
            rows: Rows::Hadamard { indices, signed },
            side,
        })
    }

    /// Dense operator whose rows are flattened `side × side` patterns.
    pub fn explicit(rows: Array2<f64>, side: usize) -> Result<Self> {
        if rows.ncols() != side * side || rows.nrows() == 0 {
            return Err(Error::Size(format!(
                "explicit operator of shape {:?} does not match side {side}",
                rows.dim()
            )));
        }
        let rows = rows.as_standard_layout().into_owned();
        Ok(MeasurementOperator {
            rows: Rows::Dense {
                at: rows.t().as_standard_layout().into_owned(),
                a: rows,
            },
            side,
        })
    }

    pub fn mode(&self) -> OperatorMode {
        match self.rows {
            Rows::Hadamard { .. } => OperatorMode::IdealHadamard,
            Rows::Dense { .. } => OperatorMode::Explicit,
        }
    }

    pub fn side(&self) -> usize {
        self.side
    }

    /// Number of measurements `M`.
    pub fn rows(&self) -> usize {
        match &self.rows {
            Rows::Hadamard { indices, .. } => indices.len(),
            Rows::Dense { a, .. } => a.nrows(),
        }
    }

    /// Number of pixels `N`.
    pub fn cols(&self) -> usize {
        self.side * self.side
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols(), "operator input length");
        match &self.rows {
            Rows::Hadamard { indices, signed } => {
                let mut full = x.to_vec();
                fwht_in_place(&mut full).expect("power-of-two length");
                if *signed {
                    indices.iter().map(|&i| full[i]).collect()
                } else {
                    let total: f64 = x.iter().sum();
                    indices.iter().map(|&i| 0.5 * (total + full[i])).collect()
                }
            }
            Rows::Dense { a, .. } => dense_product(a, x),
        }
    }

    pub fn adjoint(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.rows(), "operator output length");
        match &self.rows {
            Rows::Hadamard { indices, signed } => {
                let mut coeffs = vec![0.0; self.cols()];
                for (&i, &v) in indices.iter().zip(y) {
                    coeffs[i] += v;
                }
                fwht_in_place(&mut coeffs).expect("power-of-two length");
                if *signed {
                    coeffs
                } else {
                    let total: f64 = y.iter().sum();
                    coeffs.iter().map(|c| 0.5 * (total + c)).collect()
                }
            }
            Rows::Dense { at, .. } => dense_product(at, y),
        }
    }

    /// `AᵀA x`.
    pub fn normal(&self, x: &[f64]) -> Vec<f64> {
        self.adjoint(&self.apply(x))
    }

    /// Estimate of `‖A‖²` (largest eigenvalue of `AᵀA`) from power iteration
    /// with a fixed starting vector.
    pub fn norm_squared_estimate(&self, iterations: usize) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let mut v: Vec<f64> = (0..self.cols()).map(|_| StandardNormal.sample(&mut rng)).collect();
        let mut estimate = 0.0;
        for _ in 0..iterations.max(1) {
            let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            if norm == 0.0 {
                return 0.0;
            }
            v.iter_mut().for_each(|a| *a /= norm);
            let w = self.normal(&v);
            estimate = v.iter().zip(&w).map(|(a, b)| a * b).sum();
            v = w;
        }
        estimate
    }
}

/// `m · v`, one sequential dot product per row so the result does not depend
/// on the thread count.
fn dense_product(m: &Array2<f64>, v: &[f64]) -> Vec<f64> {
    (0..m.nrows())
        .into_par_iter()
        .map(|r| {
            let row = m.row(r);
            let row = row.as_slice().expect("standard layout");
            lane_dot(row, v)
        })
        .collect()
}

/// Dot product with eight independent partial sums, combined in a fixed
/// order.
fn lane_dot(a: &[f64], b: &[f64]) -> f64 {
    const LANES: usize = 8;
    let mut acc = [0.0f64; LANES];
    let (a_main, a_tail) = a.split_at(a.len() - a.len() % LANES);
    let (b_main, b_tail) = b.split_at(a_main.len());
    for (ca, cb) in a_main.chunks_exact(LANES).zip(b_main.chunks_exact(LANES)) {
        for k in 0..LANES {
            acc[k] += ca[k] * cb[k];
        }
    }
    let tail: f64 = a_tail.iter().zip(b_tail).map(|(x, y)| x * y).sum();
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail
}

/// Operator for the selected rows of `basis`.
///
/// `signed` selects `P⁺ − P⁻` rows (differential data) instead of `P⁺`.
/// Ideal mode requires an ideal optical chain; explicit mode renders every
/// row through `chain`.
pub fn build_operator(
    basis: &HadamardBasis,
    indices: &[usize],
    chain: &OpticalChain,
    mode: OperatorMode,
    signed: bool,
) -> Result<MeasurementOperator> {
    match mode {
        OperatorMode::IdealHadamard => {
            if !chain.imperfection.is_ideal() || chain.source.is_some() {
                return Err(Error::Domain(
                    "ideal Hadamard operator requires D_r = 1, no blur and no source".into(),
                ));
            }
            MeasurementOperator::ideal_hadamard(basis.grid_log2(), indices.to_vec(), signed)
        }
        OperatorMode::Explicit => {
            let n = basis.side();
            let rows: Vec<Vec<f64>> = indices
                .par_iter()
                .map(|&i| {
                    let pair = make_pattern_pair(basis, i, n)?;
                    let mut row = chain.project(&pair.positive)?;
                    if signed {
                        row = row - chain.project(&pair.negative)?;
                    }
                    Ok(row.into_iter().collect())
                })
                .collect::<Result<_>>()?;
            let flat: Vec<f64> = rows.into_iter().flatten().collect();
            let dense = Array2::from_shape_vec((indices.len(), n * n), flat)
                .map_err(|e| Error::Size(e.to_string()))?;
            MeasurementOperator::explicit(dense, n)
        }
    }
}
