//! Anisotropic total-variation recovery.
//!
//! Solves `min_x TV(x) + (μ/2)‖Ax − b‖²` with the splitting `w = ∇x`:
//!
//! ```text
//! x ← argmin (μ/2)‖Ax − b‖² + (β/2)‖∇x − w + u‖²     (conjugate gradients)
//! w ← shrink(∇x + u, 1/β)
//! u ← u + ∇x − w
//! ```
//!
//! ADMM iterates are not monotone in the objective, so the solver reports the
//! best iterate seen so far; the ADMM state itself is never reset.

use std::time::Instant;

use ndarray::Array2;

use super::{relative_residual, to_image, MeasurementOperator, ReconResult};
use crate::error::{Error, Result};
use crate::wavelet::shrink;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TvParams {
    /// Data-fidelity weight μ.
    pub mu: f64,
    /// Augmented-Lagrangian penalty β.
    pub beta: f64,
    pub max_iters: usize,
    /// Stop when `‖x_k − x_{k−1}‖ / ‖x_{k−1}‖ < tol`.
    pub tol: f64,
    /// Conjugate-gradient iterations per x-update.
    pub cg_iters: usize,
}

impl Default for TvParams {
    fn default() -> Self {
        TvParams {
            mu: 1.0,
            beta: 32.0,
            max_iters: 500,
            tol: 1e-5,
            cg_iters: 30,
        }
    }
}

/// Forward differences with zero gradient on the last column / row.
fn gradient(x: &[f64], n: usize, gh: &mut [f64], gv: &mut [f64]) {
    for y in 0..n {
        for c in 0..n {
            let i = y * n + c;
            gh[i] = if c + 1 < n { x[i + 1] - x[i] } else { 0.0 };
            gv[i] = if y + 1 < n { x[i + n] - x[i] } else { 0.0 };
        }
    }
}

/// Adjoint of [`gradient`].
fn gradient_adjoint(gh: &[f64], gv: &[f64], n: usize, out: &mut [f64]) {
    for y in 0..n {
        for c in 0..n {
            let i = y * n + c;
            let mut v = 0.0;
            if c + 1 < n {
                v -= gh[i];
            }
            if c > 0 {
                v += gh[i - 1];
            }
            if y + 1 < n {
                v -= gv[i];
            }
            if y > 0 {
                v += gv[i - n];
            }
            out[i] = v;
        }
    }
}

fn tv_flat(x: &[f64], n: usize) -> f64 {
    let mut total = 0.0;
    for y in 0..n {
        for c in 0..n {
            let i = y * n + c;
            if c + 1 < n {
                total += (x[i + 1] - x[i]).abs();
            }
            if y + 1 < n {
                total += (x[i + n] - x[i]).abs();
            }
        }
    }
    total
}

/// Anisotropic TV `Σ |∇ₕx| + |∇ᵥx|` of a square image.
pub fn total_variation(image: &Array2<f64>) -> f64 {
    let n = image.nrows();
    let flat: Vec<f64> = image.iter().copied().collect();
    tv_flat(&flat, n)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Conjugate gradients on a symmetric positive semi-definite system, warm
/// started from `x`.
fn conjugate_gradient<F>(apply: F, rhs: &[f64], x: &mut [f64], max_iters: usize)
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let ax = apply(x);
    let mut r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let stop = 1e-24 * dot(rhs, rhs).max(f64::MIN_POSITIVE);
    for _ in 0..max_iters {
        if rr <= stop {
            break;
        }
        let ap = apply(&p);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            break;
        }
        let alpha = rr / pap;
        x.iter_mut().zip(&p).for_each(|(xi, pi)| *xi += alpha * pi);
        r.iter_mut().zip(&ap).for_each(|(ri, api)| *ri -= alpha * api);
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        p.iter_mut().zip(&r).for_each(|(pi, ri)| *pi = ri + beta * *pi);
        rr = rr_new;
    }
}

pub fn tv_admm(op: &MeasurementOperator, buckets: &[f64], params: &TvParams) -> Result<ReconResult> {
    let start = Instant::now();
    if !(params.mu > 0.0 && params.beta > 0.0) {
        return Err(Error::Domain(format!(
            "mu ({}) and beta ({}) must be positive",
            params.mu, params.beta
        )));
    }
    if buckets.len() != op.rows() {
        return Err(Error::Size(format!(
            "{} buckets for an operator with {} rows",
            buckets.len(),
            op.rows()
        )));
    }
    let n = op.side();
    let len = op.cols();
    let (mu, beta) = (params.mu, params.beta);

    let objective = |x: &[f64]| -> f64 {
        let ax = op.apply(x);
        let fit: f64 = ax.iter().zip(buckets).map(|(a, b)| (a - b) * (a - b)).sum();
        tv_flat(x, n) + 0.5 * mu * fit
    };
    let normal = |v: &[f64]| -> Vec<f64> {
        let mut ata = op.normal(v);
        let (mut gh, mut gv) = (vec![0.0; len], vec![0.0; len]);
        gradient(v, n, &mut gh, &mut gv);
        let mut dtd = vec![0.0; len];
        gradient_adjoint(&gh, &gv, n, &mut dtd);
        ata.iter_mut()
            .zip(&dtd)
            .for_each(|(a, d)| *a = mu * *a + beta * d);
        ata
    };

    let atb: Vec<f64> = op.adjoint(buckets).iter().map(|v| mu * v).collect();
    let mut x = vec![0.0; len];
    let (mut wh, mut wv) = (vec![0.0; len], vec![0.0; len]);
    let (mut uh, mut uv) = (vec![0.0; len], vec![0.0; len]);
    let (mut gh, mut gv) = (vec![0.0; len], vec![0.0; len]);
    let (mut th, mut tv) = (vec![0.0; len], vec![0.0; len]);
    let mut dtw = vec![0.0; len];

    let mut best = x.clone();
    let mut best_obj = objective(&x);
    let mut trace = Vec::with_capacity(params.max_iters);
    let mut converged = false;
    let mut iterations = 0;

    for _ in 0..params.max_iters {
        iterations += 1;
        for i in 0..len {
            th[i] = wh[i] - uh[i];
            tv[i] = wv[i] - uv[i];
        }
        gradient_adjoint(&th, &tv, n, &mut dtw);
        let rhs: Vec<f64> = atb.iter().zip(&dtw).map(|(a, d)| a + beta * d).collect();
        let previous = x.clone();
        conjugate_gradient(normal, &rhs, &mut x, params.cg_iters);

        gradient(&x, n, &mut gh, &mut gv);
        for i in 0..len {
            wh[i] = shrink(gh[i] + uh[i], 1.0 / beta);
            wv[i] = shrink(gv[i] + uv[i], 1.0 / beta);
            uh[i] += gh[i] - wh[i];
            uv[i] += gv[i] - wv[i];
        }

        let obj = objective(&x);
        if obj <= best_obj {
            best_obj = obj;
            best.copy_from_slice(&x);
        }
        trace.push(best_obj);

        let change: f64 = x
            .iter()
            .zip(&previous)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let scale = dot(&previous, &previous).sqrt();
        let rel = if scale > 0.0 { change / scale } else { change };
        if rel < params.tol {
            converged = true;
            break;
        }
    }

    let final_residual = relative_residual(op, &best, buckets);
    Ok(ReconResult {
        image: to_image(best, n),
        iterations,
        final_residual: Some(final_residual),
        objective_trace: trace,
        converged,
        wall_time: start.elapsed(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gradient_adjoint_identity() {
        let n = 6;
        let x: Vec<f64> = (0..n * n).map(|i| ((i * 7) % 13) as f64 - 6.0).collect();
        let ph: Vec<f64> = (0..n * n).map(|i| ((i * 5) % 11) as f64 * 0.3).collect();
        let pv: Vec<f64> = (0..n * n).map(|i| ((i * 3) % 7) as f64 - 2.0).collect();
        let (mut gh, mut gv) = (vec![0.0; n * n], vec![0.0; n * n]);
        gradient(&x, n, &mut gh, &mut gv);
        let mut adj = vec![0.0; n * n];
        gradient_adjoint(&ph, &pv, n, &mut adj);
        let lhs = dot(&gh, &ph) + dot(&gv, &pv);
        let rhs = dot(&x, &adj);
        assert!((lhs - rhs).abs() < 1e-9);
    }

    #[test]
    fn tv_of_step() {
        let img = Array2::from_shape_fn((4, 4), |(_, x)| if x >= 2 { 1.0 } else { 0.0 });
        assert_eq!(total_variation(&img), 4.0);
    }

    #[test]
    fn zero_data_gives_zero_image() {
        let op = MeasurementOperator::ideal_hadamard(3, (0..20).collect(), true).unwrap();
        let r = tv_admm(&op, &[0.0; 20], &TvParams::default()).unwrap();
        assert!(r.image.iter().all(|&v| v == 0.0));
        assert!(r.converged);
    }

    #[test]
    fn rejects_bad_parameters() {
        let op = MeasurementOperator::ideal_hadamard(2, vec![0, 1], true).unwrap();
        let bad = TvParams {
            mu: 0.0,
            ..TvParams::default()
        };
        assert!(tv_admm(&op, &[1.0, 2.0], &bad).is_err());
        assert!(tv_admm(&op, &[1.0], &TvParams::default()).is_err());
    }
}
