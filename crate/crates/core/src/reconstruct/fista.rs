//! Haar-sparse recovery, `min_x ½‖Ax − b‖² + λ‖W_d x‖₁`, where `W_d` keeps
//! the detail bands of an orthonormal multi-level Haar transform.
//!
//! Uses the monotone FISTA variant: the proximal-gradient candidate is only
//! accepted when it lowers the objective, while the momentum sequence keeps
//! using every candidate.

use std::time::Instant;

use ndarray::Array2;

use super::{relative_residual, to_image, MeasurementOperator, ReconResult};
use crate::error::{Error, Result};
use crate::wavelet::{dwt2, idwt2, soft_threshold_in_place};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FistaParams {
    /// Weight λ on the ℓ₁ norm of detail coefficients.
    pub lambda: f64,
    pub levels: usize,
    pub max_iters: usize,
    /// Stop when consecutive candidates differ by less than `tol` (relative).
    pub tol: f64,
}

impl Default for FistaParams {
    fn default() -> Self {
        FistaParams {
            lambda: 1.0,
            levels: 3,
            max_iters: 300,
            tol: 1e-6,
        }
    }
}

/// Power iterations used for the Lipschitz constant.
const POWER_ITERATIONS: usize = 20;
/// Power iteration approaches ‖A‖² from below.
const LIPSCHITZ_MARGIN: f64 = 1.01;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

pub fn wavelet_fista(
    op: &MeasurementOperator,
    buckets: &[f64],
    params: &FistaParams,
) -> Result<ReconResult> {
    let start = Instant::now();
    if !(params.lambda >= 0.0) {
        return Err(Error::Domain(format!("lambda {} must be >= 0", params.lambda)));
    }
    if buckets.len() != op.rows() {
        return Err(Error::Size(format!(
            "{} buckets for an operator with {} rows",
            buckets.len(),
            op.rows()
        )));
    }
    let n = op.side();
    let levels = params.levels;
    // Validates that n is divisible by 2^levels.
    dwt2(&Array2::zeros((n, n)), levels)?;

    let lipschitz = LIPSCHITZ_MARGIN * op.norm_squared_estimate(POWER_ITERATIONS);
    if !(lipschitz > 0.0) {
        return Err(Error::Domain("operator has zero norm".into()));
    }
    let threshold = params.lambda / lipschitz;

    // The operator is linear, so images and their projections `A·` are
    // carried together and each iteration costs one apply and one adjoint.
    let objective = |x: &[f64], ax: &[f64]| -> Result<f64> {
        let fit: f64 = ax.iter().zip(buckets).map(|(a, b)| (a - b) * (a - b)).sum();
        let pyramid = dwt2(&to_image(x.to_vec(), n), levels)?;
        Ok(0.5 * fit + params.lambda * pyramid.detail_l1())
    };
    let prox = |v: Vec<f64>| -> Result<Vec<f64>> {
        let mut pyramid = dwt2(&to_image(v, n), levels)?;
        soft_threshold_in_place(&mut pyramid, threshold)?;
        Ok(idwt2(&pyramid)?.into_iter().collect())
    };

    let len = op.cols();
    let mut x = vec![0.0; len];
    let mut ax = vec![0.0; op.rows()];
    let mut x_obj = objective(&x, &ax)?;
    let mut y = x.clone();
    let mut ay = ax.clone();
    let mut z_prev = x.clone();
    let mut t = 1.0f64;
    let mut trace = Vec::with_capacity(params.max_iters);
    let mut converged = false;
    let mut iterations = 0;

    for _ in 0..params.max_iters {
        iterations += 1;
        let residual: Vec<f64> = ay.iter().zip(buckets).map(|(a, b)| a - b).collect();
        let grad = op.adjoint(&residual);
        let step: Vec<f64> = y
            .iter()
            .zip(&grad)
            .map(|(yi, gi)| yi - gi / lipschitz)
            .collect();
        let z = prox(step)?;
        let az = op.apply(&z);
        let z_obj = objective(&z, &az)?;

        let x_prev = x.clone();
        let ax_prev = ax.clone();
        if z_obj <= x_obj {
            x.copy_from_slice(&z);
            ax.copy_from_slice(&az);
            x_obj = z_obj;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let (c1, c2) = (t / t_next, (t - 1.0) / t_next);
        for i in 0..len {
            y[i] = x[i] + c1 * (z[i] - x[i]) + c2 * (x[i] - x_prev[i]);
        }
        for i in 0..ay.len() {
            ay[i] = ax[i] + c1 * (az[i] - ax[i]) + c2 * (ax[i] - ax_prev[i]);
        }
        t = t_next;
        trace.push(x_obj);

        let diff: Vec<f64> = z.iter().zip(&z_prev).map(|(a, b)| a - b).collect();
        let scale = norm(&z_prev);
        let rel = if scale > 0.0 { norm(&diff) / scale } else { norm(&diff) };
        z_prev = z;
        if rel < params.tol {
            converged = true;
            break;
        }
    }

    let final_residual = relative_residual(op, &x, buckets);
    Ok(ReconResult {
        image: to_image(x, n),
        iterations,
        final_residual: Some(final_residual),
        objective_trace: trace,
        converged,
        wall_time: start.elapsed(),
    })
}
