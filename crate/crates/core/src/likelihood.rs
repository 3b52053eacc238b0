//! Likelihood surfaces of the (Trans-)Gaussian Kriging model and the two
//! pseudo-likelihoods of the transformation parameter.
//!
//! Everything is computed in log space: for `n = 100` the raw likelihoods
//! underflow.

use log::{debug, warn};
use nalgebra::DVector;
use rayon::prelude::*;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::kernel::CorrelationLengths;
use crate::linalg::{cholesky, inv_quad, log_det};
use crate::model::KrigingModel;
use crate::posterior::{self, MapConfig, McmcConfig, Prior, ThetaDraws};
use crate::transform::transform_obs;

/// Fraction of ill-conditioned draws above which Monte Carlo averages over
/// posterior draws are refused.
pub const MAX_SKIPPED_FRACTION: f64 = 0.2;

/// Trend coefficients and process variance.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianHyper {
    pub beta: Vec<f64>,
    pub sigma2: f64,
}

impl GaussianHyper {
    pub fn new(beta: Vec<f64>, sigma2: f64) -> Result<Self> {
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(Error::Domain(format!(
                "sigma2 must be positive, got {sigma2}"
            )));
        }
        Ok(Self { beta, sigma2 })
    }
}

fn check_len(model: &KrigingModel, len: usize) -> Result<()> {
    if len != model.n() {
        return Err(Error::DimensionMismatch {
            expected: model.n(),
            got: len,
        });
    }
    Ok(())
}

/// `ln L(y | beta, sigma2, theta)` for the Gaussian model with mean `H beta`
/// and covariance `sigma2 Sigma_theta`.
pub fn log_lik_full(
    y: &[f64],
    hyper: &GaussianHyper,
    theta: &CorrelationLengths,
    model: &KrigingModel,
) -> Result<f64> {
    check_len(model, y.len())?;
    if hyper.beta.len() != model.p() {
        return Err(Error::DimensionMismatch {
            expected: model.p(),
            got: hyper.beta.len(),
        });
    }
    let n = model.n() as f64;
    let chol = cholesky(model.correlation(theta)?)?;
    let beta = DVector::from_column_slice(&hyper.beta);
    let resid = DVector::from_column_slice(y) - model.h() * beta;
    let quad = inv_quad(&chol, &resid);
    Ok(-0.5 * n * (2.0 * std::f64::consts::PI * hyper.sigma2).ln()
        - 0.5 * log_det(&chol)
        - quad / (2.0 * hyper.sigma2))
}

/// The normalizing term of the integrated likelihood,
/// `-ln(2 pi^{k} / Gamma(k))` with `k = (n - p) / 2`.
///
/// Integrating `L / sigma2` over `beta` and `sigma2` in closed form gives
/// instead `pi^{-k} Gamma(k) |H^T H|^{-1/2}`, i.e. this term plus
/// `ln 2 - ln|H^T H| / 2`. The difference depends on the design only, not
/// on `theta`, `alpha` or the data, so it shifts every profile uniformly and
/// leaves argmaxima and posterior shapes unchanged.
pub fn integrated_log_constant(dof: usize) -> f64 {
    let k = 0.5 * dof as f64;
    ln_gamma(k) - std::f64::consts::LN_2 - k * std::f64::consts::PI.ln()
}

pub(crate) fn integrated_from_parts(dof: usize, log_det_m: f64, quad: f64) -> Result<f64> {
    if !(quad > 0.0) || !quad.is_finite() {
        return Err(Error::DegenerateQuadraticForm(quad));
    }
    let k = 0.5 * dof as f64;
    Ok(integrated_log_constant(dof) - 0.5 * log_det_m - k * quad.ln())
}

/// `ln L^1(y | theta)`: `beta` and `sigma2` integrated out under the prior
/// `1 / sigma2`, via the error contrasts `W^T y`.
pub fn log_lik_integrated(
    y: &[f64],
    theta: &CorrelationLengths,
    model: &KrigingModel,
) -> Result<f64> {
    check_len(model, y.len())?;
    let proj = model.projection();
    let chol = cholesky(proj.project_sym(&model.correlation(theta)?))?;
    let wy = proj.project_vec(y);
    integrated_from_parts(proj.dof(), log_det(&chol), inv_quad(&chol, &wy))
}

pub fn log_lik_tg(
    z: &[f64],
    hyper: &GaussianHyper,
    theta: &CorrelationLengths,
    alpha: f64,
    model: &KrigingModel,
) -> Result<f64> {
    let t = transform_obs(alpha, z)?;
    Ok(log_lik_full(&t.values, hyper, theta, model)? + t.log_jacobian)
}

pub fn log_lik_tg_integrated(
    z: &[f64],
    theta: &CorrelationLengths,
    alpha: f64,
    model: &KrigingModel,
) -> Result<f64> {
    let t = transform_obs(alpha, z)?;
    Ok(log_lik_integrated(&t.values, theta, model)? + t.log_jacobian)
}

/// `ln L^MAP(z | alpha)` and the MAP it was evaluated at.
pub fn l_map(
    z: &[f64],
    alpha: f64,
    model: &KrigingModel,
    prior: Prior,
    config: &MapConfig,
) -> Result<(f64, CorrelationLengths)> {
    let map = posterior::map_theta(z, alpha, model, prior, config)?;
    let value = log_lik_tg_integrated(z, &map.theta, alpha, model)?;
    Ok((value, map.theta))
}

/// Monte Carlo estimate of `ln L^LOG(z | alpha)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogPseudoLikelihood {
    pub value: f64,
    /// Standard error of the mean, treating draws as independent.
    pub std_error: f64,
    pub used: usize,
    pub skipped: usize,
}

/// `ln L^LOG(z | alpha)`: posterior mean of `ln L^1(z | theta, alpha)`.
pub fn l_log(
    z: &[f64],
    alpha: f64,
    draws: &ThetaDraws,
    model: &KrigingModel,
) -> Result<LogPseudoLikelihood> {
    if draws.draws.is_empty() {
        return Err(Error::InsufficientPoints { needed: 1, got: 0 });
    }
    let t = transform_obs(alpha, z)?;
    let mut values = Vec::with_capacity(draws.draws.len());
    let mut skipped = 0;
    for theta in &draws.draws {
        match log_lik_integrated(&t.values, theta, model) {
            Ok(v) => values.push(v + t.log_jacobian),
            Err(Error::IllConditioned { .. }) => skipped += 1,
            Err(e) => return Err(e),
        }
    }
    let total = draws.draws.len();
    if skipped > 0 {
        warn!("l_log at alpha = {alpha}: skipped {skipped} of {total} ill-conditioned draws");
    }
    if skipped as f64 > MAX_SKIPPED_FRACTION * total as f64 {
        return Err(Error::TooManySkipped { skipped, total });
    }
    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0)
    } else {
        0.0
    };
    Ok(LogPseudoLikelihood {
        value: mean,
        std_error: (var / m).sqrt(),
        used: values.len(),
        skipped,
    })
}

/// Pseudo-likelihoods of `alpha` over a grid.
#[derive(Debug, Clone)]
pub struct AlphaProfile {
    pub alphas: Vec<f64>,
    pub log_l_log: Vec<Option<f64>>,
    pub log_l_map: Vec<Option<f64>>,
    pub map_theta: Vec<Option<CorrelationLengths>>,
    pub draws: Vec<Option<ThetaDraws>>,
}

impl AlphaProfile {
    pub fn len(&self) -> usize {
        self.alphas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alphas.is_empty()
    }

    fn argmax(values: &[Option<f64>]) -> Option<usize> {
        values
            .iter()
            .enumerate()
            .filter_map(|(i, v)| v.map(|v| (i, v)))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(i, _)| i)
    }

    /// Grid index maximizing `L^LOG`.
    pub fn argmax_log(&self) -> Option<usize> {
        Self::argmax(&self.log_l_log)
    }

    pub fn argmax_map(&self) -> Option<usize> {
        Self::argmax(&self.log_l_map)
    }
}

/// Summary of `ln L^MAP - ln L^LOG` over a window of `alpha`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapSummary {
    pub mean: f64,
    pub sd: f64,
    pub count: usize,
}

/// Mean and standard deviation of `ln L^MAP - ln L^LOG` over the grid points
/// in `[lo, hi]` where both exist. Under the asymptotic/Jeffreys heuristic the
/// gap is constant and equal to `r / 2`.
pub fn heuristic_gap(profile: &AlphaProfile, lo: f64, hi: f64) -> Result<GapSummary> {
    let gaps: Vec<f64> = profile
        .alphas
        .iter()
        .zip(profile.log_l_map.iter().zip(&profile.log_l_log))
        .filter(|(a, _)| **a >= lo - 1e-12 && **a <= hi + 1e-12)
        .filter_map(|(_, (m, l))| Some((*m)? - (*l)?))
        .collect();
    if gaps.len() < 5 {
        return Err(Error::InsufficientPoints {
            needed: 5,
            got: gaps.len(),
        });
    }
    let m = gaps.len() as f64;
    let mean = gaps.iter().sum::<f64>() / m;
    let sd = (gaps.iter().map(|g| (g - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt();
    Ok(GapSummary {
        mean,
        sd,
        count: gaps.len(),
    })
}

/// Settings of an `alpha` scan.
#[derive(Debug, Clone)]
pub struct ProfileConfig {
    pub prior: Prior,
    pub mcmc: McmcConfig,
    pub map: MapConfig,
    /// Skip the MAP search (and `L^MAP`) entirely.
    pub skip_map: bool,
}

/// For every `alpha` on the grid: MAP search, posterior sampling of `theta`,
/// and both pseudo-likelihoods. Failures at one `alpha` leave that entry
/// absent. Grid points run in parallel; each uses a seed derived from the
/// base seed and `alpha`, so results do not depend on the schedule.
pub fn alpha_profile(
    z: &[f64],
    alpha_grid: &[f64],
    model: &KrigingModel,
    config: &ProfileConfig,
) -> Result<AlphaProfile> {
    if alpha_grid.is_empty() {
        return Err(Error::InsufficientPoints { needed: 1, got: 0 });
    }
    if alpha_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Config(
            "alpha grid must be strictly increasing".into(),
        ));
    }
    if let Some(a) = alpha_grid.iter().find(|a| !(0.0..=1.0).contains(*a)) {
        return Err(Error::Config(format!("alpha {a} outside [0,1]")));
    }
    transform_obs(0.0, z)?;
    check_len(model, z.len())?;

    let entries: Vec<_> = alpha_grid
        .par_iter()
        .map(|&alpha| profile_point(z, alpha, model, config))
        .collect();

    let mut profile = AlphaProfile {
        alphas: alpha_grid.to_vec(),
        log_l_log: Vec::with_capacity(entries.len()),
        log_l_map: Vec::with_capacity(entries.len()),
        map_theta: Vec::with_capacity(entries.len()),
        draws: Vec::with_capacity(entries.len()),
    };
    for e in entries {
        profile.log_l_log.push(e.log_l_log);
        profile.log_l_map.push(e.log_l_map);
        profile.map_theta.push(e.map_theta);
        profile.draws.push(e.draws);
    }
    Ok(profile)
}

struct ProfilePoint {
    log_l_log: Option<f64>,
    log_l_map: Option<f64>,
    map_theta: Option<CorrelationLengths>,
    draws: Option<ThetaDraws>,
}

fn profile_point(
    z: &[f64],
    alpha: f64,
    model: &KrigingModel,
    config: &ProfileConfig,
) -> ProfilePoint {
    let seed = posterior::alpha_seed(config.mcmc.seed, alpha);
    let (log_l_map, map_theta) = if config.skip_map {
        (None, None)
    } else {
        let map_config = MapConfig {
            seed,
            ..config.map.clone()
        };
        match l_map(z, alpha, model, config.prior, &map_config) {
            Ok((v, th)) => (Some(v), Some(th)),
            Err(e) => {
                debug!("alpha = {alpha}: no MAP ({e})");
                (None, None)
            }
        }
    };
    let mcmc = McmcConfig {
        seed,
        ..config.mcmc.clone()
    };
    let draws =
        match posterior::sample_theta(z, alpha, model, config.prior, &mcmc, map_theta.as_ref()) {
            Ok(d) => Some(d),
            Err(e) => {
                warn!("alpha = {alpha}: sampler failed ({e})");
                None
            }
        };
    let log_l_log = draws
        .as_ref()
        .and_then(|d| match l_log(z, alpha, d, model) {
            Ok(v) => Some(v.value),
            Err(e) => {
                warn!("alpha = {alpha}: L^LOG unavailable ({e})");
                None
            }
        });
    ProfilePoint {
        log_l_log,
        log_l_map,
        map_theta,
        draws,
    }
}
