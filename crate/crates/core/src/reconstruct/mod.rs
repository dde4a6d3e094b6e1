//! Image recovery from bucket measurements.
//!
//! * [`correlation_gi`]: second-order (covariance) ghost imaging.
//! * [`differential_gi`]: signed-pattern correlation for complementary pairs.
//! * [`tv_admm`]: anisotropic-TV compressed sensing by augmented-Lagrangian ADMM.
//! * [`wavelet_fista`]: Haar-sparse recovery by monotone FISTA.

mod fista;
mod gi;
mod operator;
mod tv;

pub use fista::{wavelet_fista, FistaParams};
pub use gi::{correlation, correlation_gi, differential_gi, series_patterns};
pub use operator::{build_operator, MeasurementOperator, OperatorMode};
pub use tv::{total_variation, tv_admm, TvParams};

use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::hadamard::HadamardBasis;
use crate::optics::{MeasurementSeries, OpticalChain, PatternSource};

/// Reconstructed image plus solver diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct ReconResult {
    pub image: Array2<f64>,
    pub iterations: usize,
    /// `‖Ax − b‖ / ‖b‖` for operator-based solvers.
    pub final_residual: Option<f64>,
    pub objective_trace: Vec<f64>,
    pub converged: bool,
    pub wall_time: Duration,
}

impl ReconResult {
    fn direct(image: Array2<f64>, wall_time: Duration) -> Self {
        ReconResult {
            image,
            iterations: 0,
            final_residual: None,
            objective_trace: Vec::new(),
            converged: true,
            wall_time,
        }
    }

    /// `key=value` diagnostics, one per line.
    pub fn diagnostics(&self) -> String {
        let residual = self
            .final_residual
            .map_or_else(|| "none".to_string(), |r| format!("{r:.9e}"));
        let last = self
            .objective_trace
            .last()
            .map_or_else(|| "none".to_string(), |v| format!("{v:.9e}"));
        format!(
            "iterations={}\nconverged={}\nfinal_residual={}\nfinal_objective={}\nwall_time={:.6}\n",
            self.iterations,
            self.converged,
            residual,
            last,
            self.wall_time.as_secs_f64()
        )
    }
}

/// `‖Ax − b‖ / ‖b‖`, or `‖Ax‖` when `b = 0`.
pub(crate) fn relative_residual(op: &MeasurementOperator, x: &[f64], b: &[f64]) -> f64 {
    let ax = op.apply(x);
    let res: f64 = ax.iter().zip(b).map(|(a, y)| (a - y) * (a - y)).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if nb > 0.0 {
        res / nb
    } else {
        res
    }
}

pub(crate) fn to_image(x: Vec<f64>, side: usize) -> Array2<f64> {
    Array2::from_shape_vec((side, side), x).expect("length is side²")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReconMethod {
    Gi,
    Dgi,
    Tv,
    Wfista,
}

impl ReconMethod {
    pub fn name(self) -> &'static str {
        match self {
            ReconMethod::Gi => "gi",
            ReconMethod::Dgi => "dgi",
            ReconMethod::Tv => "tv",
            ReconMethod::Wfista => "wfista",
        }
    }
}

impl fmt::Display for ReconMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ReconMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gi" => Ok(ReconMethod::Gi),
            "dgi" => Ok(ReconMethod::Dgi),
            "tv" => Ok(ReconMethod::Tv),
            "wfista" => Ok(ReconMethod::Wfista),
            other => Err(Error::Domain(format!("unknown reconstruction method '{other}'"))),
        }
    }
}

/// Which operator the iterative solvers assume.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OperatorModel {
    /// Designed (ideal) patterns, regardless of the simulated imperfections.
    #[default]
    Designed,
    /// Patterns rendered through the imperfection and source models recorded
    /// in the series.
    Calibrated,
}

/// Operator and right-hand side for a Hadamard series. Differential series
/// use signed rows and `B⁺ − B⁻`; single-mask series use binary rows and `B⁺`.
pub fn series_problem(
    series: &MeasurementSeries,
    model: OperatorModel,
) -> Result<(MeasurementOperator, Vec<f64>)> {
    let PatternSource::Hadamard { grid_log2, .. } = series.source else {
        return Err(Error::Domain(
            "iterative solvers need a Hadamard series".into(),
        ));
    };
    let signed = series.is_differential();
    let buckets = if signed {
        series.differences().expect("differential series")
    } else {
        series.buckets_plus()
    };
    let indices = series.indices();
    let op = match model {
        OperatorModel::Designed => MeasurementOperator::ideal_hadamard(grid_log2, indices, signed)?,
        OperatorModel::Calibrated => {
            let basis = HadamardBasis::new(grid_log2, crate::hadamard::Ordering::Natural)?;
            let chain = OpticalChain {
                imperfection: series.imperfection,
                source: series.source_model,
                pixel_pitch_um: series.pixel_pitch_um,
            };
            build_operator(&basis, &indices, &chain, OperatorMode::Explicit, signed)?
        }
    };
    Ok((op, buckets))
}
