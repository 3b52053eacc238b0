//! Output-space transformations.
//!
//! The model family is the sinh-log map
//!
//! ```text
//! C_a(t) = sinh(a ln t) / a   (a > 0),      C_0(t) = ln t
//! ```
//!
//! which is a strictly increasing bijection from (0, inf) onto the whole real
//! line for every `a >= 0`. The classical Box-Cox family is kept for
//! comparison only; for `a > 0` its range is bounded below by `-1/a`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Below this value of `|a ln t|` the sinh ratio is evaluated by its Taylor
/// series in `a ln t`.
const SERIES_CUTOFF: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    #[default]
    SinhLog,
    BoxCox,
}

/// A member of a transformation family, selected by `alpha >= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformFamily {
    alpha: f64,
    family: Family,
}

impl TransformFamily {
    pub fn new(alpha: f64, family: Family) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(Self { alpha, family })
    }

    pub fn sinh_log(alpha: f64) -> Result<Self> {
        Self::new(alpha, Family::SinhLog)
    }

    pub fn box_cox(alpha: f64) -> Result<Self> {
        Self::new(alpha, Family::BoxCox)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        match self.family {
            Family::SinhLog => c_eval(self.alpha, t),
            Family::BoxCox => boxcox_eval(self.alpha, t),
        }
    }

    pub fn deriv(&self, t: f64) -> Result<f64> {
        match self.family {
            Family::SinhLog => c_deriv(self.alpha, t),
            Family::BoxCox => {
                check_t(t)?;
                Ok(((self.alpha - 1.0) * t.ln()).exp())
            }
        }
    }

    pub fn inverse(&self, y: f64) -> Result<f64> {
        match self.family {
            Family::SinhLog => c_inverse(self.alpha, y),
            Family::BoxCox => {
                if self.alpha == 0.0 {
                    return Ok(y.exp());
                }
                let base = self.alpha * y + 1.0;
                if base <= 0.0 {
                    return Err(Error::Domain(format!(
                        "{y} is outside the Box-Cox range (-1/{}, inf)",
                        self.alpha
                    )));
                }
                Ok((base.ln() / self.alpha).exp())
            }
        }
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(Error::Domain(format!("alpha must be >= 0, got {alpha}")));
    }
    Ok(())
}

fn check_t(t: f64) -> Result<()> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::Domain(format!("argument must be positive, got {t}")));
    }
    Ok(())
}

/// `C_alpha(t)`; continuous in `alpha` down to zero.
pub fn c_eval(alpha: f64, t: f64) -> Result<f64> {
    check_alpha(alpha)?;
    check_t(t)?;
    let log_t = t.ln();
    let x = alpha * log_t;
    if x.abs() < SERIES_CUTOFF {
        let x2 = x * x;
        Ok(log_t * (1.0 + x2 / 6.0 + x2 * x2 / 120.0))
    } else {
        Ok(x.sinh() / alpha)
    }
}

/// `C_alpha'(t) = cosh(alpha ln t) / t`.
pub fn c_deriv(alpha: f64, t: f64) -> Result<f64> {
    check_alpha(alpha)?;
    check_t(t)?;
    Ok((alpha * t.ln()).cosh() / t)
}

/// `ln C_alpha'(t)`, without the overflow of `cosh` for large `alpha ln t`.
pub fn c_log_deriv(alpha: f64, t: f64) -> Result<f64> {
    check_alpha(alpha)?;
    check_t(t)?;
    let log_t = t.ln();
    let x = (alpha * log_t).abs();
    // ln cosh x = x + ln(1 + e^{-2x}) - ln 2
    Ok(x + (-2.0 * x).exp().ln_1p() - std::f64::consts::LN_2 - log_t)
}

/// Inverse of [`c_eval`]: `exp(asinh(alpha y) / alpha)`.
pub fn c_inverse(alpha: f64, y: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if !y.is_finite() {
        return Err(Error::Domain(format!("cannot invert non-finite value {y}")));
    }
    let u = alpha * y;
    let log_t = if u.abs() < SERIES_CUTOFF {
        let u2 = u * u;
        y * (1.0 - u2 / 6.0 + 3.0 * u2 * u2 / 40.0)
    } else {
        u.asinh() / alpha
    };
    Ok(log_t.exp())
}

/// Box-Cox power transform `(t^alpha - 1) / alpha`, `ln t` at zero.
pub fn boxcox_eval(alpha: f64, t: f64) -> Result<f64> {
    check_alpha(alpha)?;
    check_t(t)?;
    if alpha == 0.0 {
        Ok(t.ln())
    } else {
        Ok((alpha * t.ln()).exp_m1() / alpha)
    }
}

/// Transformed observations together with the log-Jacobian of the map.
#[derive(Debug, Clone, PartialEq)]
pub struct Transformed {
    pub values: Vec<f64>,
    pub log_jacobian: f64,
}

/// Applies `C_alpha` componentwise and accumulates `sum ln C_alpha'(z_i)`.
pub fn transform_obs(alpha: f64, z: &[f64]) -> Result<Transformed> {
    check_alpha(alpha)?;
    let mut values = Vec::with_capacity(z.len());
    let mut log_jacobian = 0.0;
    for (index, &value) in z.iter().enumerate() {
        if !(value > 0.0) || !value.is_finite() {
            return Err(Error::NonPositiveObservation { index, value });
        }
        values.push(c_eval(alpha, value)?);
        log_jacobian += c_log_deriv(alpha, value)?;
    }
    Ok(Transformed {
        values,
        log_jacobian,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn c_eval_examples() {
        assert_eq!(c_eval(0.0, 1.0).unwrap(), 0.0);
        let e = std::f64::consts::E;
        assert_relative_eq!(
            c_eval(1.0, e).unwrap(),
            (e - 1.0 / e) / 2.0,
            epsilon = 1e-14
        );
        // mpmath, 40 digits
        assert_relative_eq!(
            c_eval(0.32, 2.0).unwrap(),
            0.698_844_798_924_984_1,
            max_relative = 1e-14
        );
    }

    #[test]
    fn c_eval_rejects_bad_arguments() {
        assert!(c_eval(0.3, 0.0).is_err());
        assert!(c_eval(0.3, -1.0).is_err());
        assert!(c_eval(-0.1, 2.0).is_err());
        assert!(c_inverse(-0.1, 2.0).is_err());
    }

    #[test]
    fn c_deriv_examples() {
        assert_eq!(c_deriv(0.0, 4.0).unwrap(), 0.25);
        for alpha in [0.0, 0.3, 1.0, 7.0] {
            assert_eq!(c_deriv(alpha, 1.0).unwrap(), 1.0);
        }
        assert_relative_eq!(c_deriv(1.0, 2.0).unwrap(), 0.625, epsilon = 1e-15);
        assert_relative_eq!(
            c_log_deriv(0.7, 3.5).unwrap(),
            c_deriv(0.7, 3.5).unwrap().ln(),
            epsilon = 1e-14
        );
    }

    #[test]
    fn c_inverse_examples() {
        for alpha in [0.0, 0.2, 1.0] {
            assert_eq!(c_inverse(alpha, 0.0).unwrap(), 1.0);
        }
        assert_relative_eq!(
            c_inverse(0.0, 1.0).unwrap(),
            std::f64::consts::E,
            epsilon = 1e-15
        );
        let back = c_eval(0.5, c_inverse(0.5, 3.0).unwrap()).unwrap();
        assert!((back - 3.0).abs() < 1e-10);
    }

    #[test]
    fn boxcox_examples() {
        assert_relative_eq!(boxcox_eval(1.0, 5.0).unwrap(), 4.0, epsilon = 1e-14);
        assert_relative_eq!(
            boxcox_eval(0.0, std::f64::consts::E).unwrap(),
            1.0,
            epsilon = 1e-15
        );
        assert_relative_eq!(boxcox_eval(0.5, 4.0).unwrap(), 2.0, epsilon = 1e-14);
        let bc = TransformFamily::box_cox(0.5).unwrap();
        assert!(bc.inverse(-2.5).is_err());
        assert_relative_eq!(
            bc.inverse(bc.eval(3.0).unwrap()).unwrap(),
            3.0,
            epsilon = 1e-13
        );
    }

    #[test]
    fn transform_obs_examples() {
        let t = transform_obs(0.0, &[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(t.values, vec![0.0, 0.0, 0.0]);
        assert_eq!(t.log_jacobian, 0.0);
        let t = transform_obs(0.41, &[1.0, 1.0]).unwrap();
        assert_eq!(t.values, vec![0.0, 0.0]);
        assert_eq!(t.log_jacobian, 0.0);

        let z: Vec<f64> = (0..100).map(|i| 0.05 + 0.37 * i as f64).collect();
        let t = transform_obs(0.32, &z).unwrap();
        // mpmath, 40 digits
        assert_relative_eq!(t.log_jacobian, -223.548_643_611_097_1, max_relative = 1e-13);
    }

    #[test]
    fn transform_obs_names_offending_index() {
        match transform_obs(0.3, &[1.0, 2.0, -0.5, 4.0]) {
            Err(Error::NonPositiveObservation { index, .. }) => assert_eq!(index, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn inverse_round_trip_over_grid() {
        for k in 0..=100 {
            let alpha = 0.01 * k as f64;
            for j in 0..=40 {
                let t = 10f64.powf(-2.0 + 0.1 * j as f64);
                let back = c_inverse(alpha, c_eval(alpha, t).unwrap()).unwrap();
                assert!((back - t).abs() / t < 1e-10, "alpha {alpha} t {t}");
            }
        }
    }

    #[test]
    fn continuity_at_zero() {
        for &t in &[1e-3, 0.2, 1.0, 3.0, 50.0, 1e4] {
            let lt: f64 = f64::ln(t);
            let v = c_eval(1e-8, t).unwrap();
            assert!((v - lt).abs() < 1e-8 * (1.0 + lt.abs().powi(3)));
        }
    }

    #[test]
    fn asymptotically_half_identity() {
        let t = 1e4;
        let ratio = c_eval(1.0, t).unwrap() / (0.5 * t);
        assert!((ratio - 1.0).abs() < 1e-4);
    }

    #[test]
    fn boxcox_range_is_bounded_below() {
        let alpha = 0.5;
        let v = boxcox_eval(alpha, 1e-12).unwrap();
        assert!(v > -1.0 / alpha && v < -1.0 / alpha + 1e-5);
    }

    proptest! {
        #[test]
        fn monotone_in_t(alpha in 0.0f64..2.0, t1 in 1e-3f64..1e3, f in 1.0001f64..10.0) {
            let t2 = t1 * f;
            prop_assert!(c_eval(alpha, t1).unwrap() < c_eval(alpha, t2).unwrap());
        }

        #[test]
        fn derivative_matches_central_difference(alpha in 0.0f64..1.5, t in 0.05f64..50.0) {
            let h = 1e-5 * t;
            let fd = (c_eval(alpha, t + h).unwrap() - c_eval(alpha, t - h).unwrap()) / (2.0 * h);
            let d = c_deriv(alpha, t).unwrap();
            prop_assert!((fd - d).abs() / d < 1e-6);
        }
    }
}
