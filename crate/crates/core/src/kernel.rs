//! Geometric-anisotropic Matérn 5/2 correlation.
//!
//! `k(d) = (1 + sqrt5 d + 5 d^2 / 3) exp(-sqrt5 d)` with
//! `d = |(u - v) / theta|`, one correlation length per input dimension.

use nalgebra::{DMatrix, DVector};

use crate::design::DesignSet;
use crate::error::{Error, Result};

const SQRT5: f64 = 2.236_067_977_499_79;

/// Per-dimension correlation lengths, all strictly positive and finite.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationLengths(Vec<f64>);

impl CorrelationLengths {
    pub fn new(theta: Vec<f64>) -> Result<Self> {
        if theta.is_empty() {
            return Err(Error::Domain("no correlation lengths".into()));
        }
        if let Some(t) = theta.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
            return Err(Error::Domain(format!(
                "correlation lengths must be positive and finite, got {t}"
            )));
        }
        Ok(Self(theta))
    }

    pub fn from_log(log_theta: &[f64]) -> Result<Self> {
        Self::new(log_theta.iter().map(|v| v.exp()).collect())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn to_log(&self) -> Vec<f64> {
        self.0.iter().map(|t| t.ln()).collect()
    }
}

pub fn aniso_dist(u: &[f64], v: &[f64], theta: &CorrelationLengths) -> Result<f64> {
    if u.len() != v.len() || u.len() != theta.len() {
        return Err(Error::DimensionMismatch {
            expected: theta.len(),
            got: if u.len() != theta.len() {
                u.len()
            } else {
                v.len()
            },
        });
    }
    Ok(scaled_dist(u, v, theta.as_slice()))
}

#[inline]
fn scaled_dist(u: &[f64], v: &[f64], theta: &[f64]) -> f64 {
    u.iter()
        .zip(v)
        .zip(theta)
        .map(|((a, b), t)| {
            let s = (a - b) / t;
            s * s
        })
        .sum::<f64>()
        .sqrt()
}

pub fn matern52(d: f64) -> Result<f64> {
    if !(d >= 0.0) {
        return Err(Error::Domain(format!("distance must be >= 0, got {d}")));
    }
    Ok(matern52_unchecked(d))
}

#[inline]
fn matern52_unchecked(d: f64) -> f64 {
    let s = SQRT5 * d;
    (1.0 + s + s * s / 3.0) * (-s).exp()
}

fn check_dims(design: &DesignSet, theta: &CorrelationLengths) -> Result<()> {
    if design.r() != theta.len() {
        return Err(Error::DimensionMismatch {
            expected: design.r(),
            got: theta.len(),
        });
    }
    Ok(())
}

/// `Sigma_theta`, the `n x n` correlation matrix of the design.
pub fn corr_matrix(design: &DesignSet, theta: &CorrelationLengths) -> Result<DMatrix<f64>> {
    check_dims(design, theta)?;
    let n = design.n();
    let t = theta.as_slice();
    let mut sigma = DMatrix::identity(n, n);
    for j in 0..n {
        let pj = design.point(j);
        for i in (j + 1)..n {
            let k = matern52_unchecked(scaled_dist(design.point(i), pj, t));
            sigma[(i, j)] = k;
            sigma[(j, i)] = k;
        }
    }
    Ok(sigma)
}

/// Correlations between `x0` and every design point.
pub fn corr_cross(
    design: &DesignSet,
    x0: &[f64],
    theta: &CorrelationLengths,
) -> Result<DVector<f64>> {
    check_dims(design, theta)?;
    if x0.len() != design.r() {
        return Err(Error::DimensionMismatch {
            expected: design.r(),
            got: x0.len(),
        });
    }
    let t = theta.as_slice();
    Ok(DVector::from_iterator(
        design.n(),
        design
            .points()
            .map(|p| matern52_unchecked(scaled_dist(p, x0, t))),
    ))
}

/// `d Sigma_theta / d theta_k` (0-based `k`).
pub fn corr_matrix_grad(
    design: &DesignSet,
    theta: &CorrelationLengths,
    k: usize,
) -> Result<DMatrix<f64>> {
    check_dims(design, theta)?;
    if k >= theta.len() {
        return Err(Error::Domain(format!(
            "dimension index {k} out of range for r = {}",
            theta.len()
        )));
    }
    let (_, mut grads) = corr_matrix_with_grads(design, theta)?;
    Ok(grads.swap_remove(k))
}

/// `Sigma_theta` together with all `r` partial derivatives, sharing the
/// distance and exponential evaluations.
pub fn corr_matrix_with_grads(
    design: &DesignSet,
    theta: &CorrelationLengths,
) -> Result<(DMatrix<f64>, Vec<DMatrix<f64>>)> {
    check_dims(design, theta)?;
    let n = design.n();
    let r = design.r();
    let t = theta.as_slice();
    let inv_cube: Vec<f64> = t.iter().map(|v| 1.0 / (v * v * v)).collect();
    let mut sigma = DMatrix::identity(n, n);
    let mut grads = vec![DMatrix::zeros(n, n); r];
    for j in 0..n {
        let pj = design.point(j);
        for i in (j + 1)..n {
            let pi = design.point(i);
            let s = SQRT5 * scaled_dist(pi, pj, t);
            let e = (-s).exp();
            sigma[(i, j)] = (1.0 + s + s * s / 3.0) * e;
            // dk/dtheta_l = k'(d)/d * (-(du_l^2) / theta_l^3)
            let f = (5.0 / 3.0) * (1.0 + s) * e;
            for (l, g) in grads.iter_mut().enumerate() {
                let du = pi[l] - pj[l];
                g[(i, j)] = f * du * du * inv_cube[l];
            }
        }
    }
    sigma.fill_upper_triangle_with_lower_triangle();
    for g in &mut grads {
        g.fill_upper_triangle_with_lower_triangle();
    }
    Ok((sigma, grads))
}
