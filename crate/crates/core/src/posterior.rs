//! Posterior over the correlation lengths.
//!
//! With `beta` and `sigma2` integrated out, the posterior of `theta` is taken
//! proportional to `L^1(z | theta, alpha) * pi(theta)` where `pi` is the
//! Jeffreys-rule prior `|I(theta)|^{1/2}` of the integrated model. The
//! reference posterior this stands in for has no closed form; the Jeffreys
//! posterior is its asymptotic approximation.
//!
//! Sampling is Metropolis-within-Gibbs: one random-walk update per
//! coordinate and sweep, with step sizes tuned during burn-in only.

use argmin::core::{CostFunction, Executor, State};
use argmin::solver::neldermead::NelderMead;
use log::debug;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::design::ProjectionPair;
use crate::error::{Error, Result};
use crate::kernel::CorrelationLengths;
use crate::likelihood::integrated_from_parts;
use crate::linalg::{cholesky, inv_quad, log_det, spd_inverse};
use crate::model::KrigingModel;
use crate::sampling::latin_hypercube;
use crate::transform::transform_obs;

/// Which Fisher information defines the Jeffreys-rule prior.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FisherForm {
    /// `I_ij = tr(Q_i Q_j) / 2`: the contrasts' information with the scale
    /// held fixed.
    FixedScale,
    /// `I_ij = [tr(Q_i Q_j) - tr(Q_i) tr(Q_j) / (n - p)] / 2`: the
    /// information left once the scale `sigma2` is integrated out (Schur
    /// complement of the `(sigma2, theta)` information).
    #[default]
    IntegratedScale,
}

/// Prior on `theta`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "fisher")]
pub enum Prior {
    Jeffreys(FisherForm),
    Flat,
}

impl Default for Prior {
    fn default() -> Self {
        Prior::Jeffreys(FisherForm::default())
    }
}

/// `r x r` Fisher information of the integrated model.
#[derive(Debug, Clone, PartialEq)]
pub struct FisherInfo(pub DMatrix<f64>);

/// Quantities at one `theta` shared by likelihood, prior and posterior.
struct Evaluation {
    /// `ln L^1` without the Jacobian of the output transformation.
    log_lik: f64,
    fisher: Option<DMatrix<f64>>,
}

fn evaluate(
    model: &KrigingModel,
    theta: &CorrelationLengths,
    wy: Option<&DVector<f64>>,
    fisher: Option<FisherForm>,
) -> Result<Evaluation> {
    let proj = model.projection();
    let (sigma, grads) = if fisher.is_some() {
        let (s, g) = model.correlation_with_grads(theta)?;
        (s, Some(g))
    } else {
        (model.correlation(theta)?, None)
    };
    let chol = cholesky(proj.project_sym(&sigma))?;
    let log_lik = match wy {
        Some(wy) => integrated_from_parts(proj.dof(), log_det(&chol), inv_quad(&chol, wy))?,
        None => 0.0,
    };
    let fisher = match (fisher, grads) {
        (Some(form), Some(grads)) => {
            Some(fisher_from_parts(proj, &spd_inverse(&chol), &grads, form))
        }
        _ => None,
    };
    Ok(Evaluation { log_lik, fisher })
}

fn fisher_from_parts(
    proj: &ProjectionPair,
    m_inv: &DMatrix<f64>,
    grads: &[DMatrix<f64>],
    form: FisherForm,
) -> DMatrix<f64> {
    let r = grads.len();
    let dof = proj.dof() as f64;
    // Q_k = (W' S W)^{-1} W' dS_k W
    let q: Vec<DMatrix<f64>> = grads.iter().map(|g| m_inv * proj.project_sym(g)).collect();
    let q_t: Vec<DMatrix<f64>> = q.iter().map(|m| m.transpose()).collect();
    let traces: Vec<f64> = q.iter().map(|m| m.trace()).collect();
    let mut info = DMatrix::zeros(r, r);
    for i in 0..r {
        for j in 0..=i {
            // tr(Q_i Q_j) = sum_ab Q_i[a,b] Q_j[b,a]
            let mut v = 0.5
                * q[i]
                    .as_slice()
                    .iter()
                    .zip(q_t[j].as_slice())
                    .map(|(a, b)| a * b)
                    .sum::<f64>();
            if form == FisherForm::IntegratedScale {
                v -= 0.5 * traces[i] * traces[j] / dof;
            }
            info[(i, j)] = v;
            info[(j, i)] = v;
        }
    }
    info
}

/// Fisher information of the integrated model at `theta`.
pub fn fisher_info(
    model: &KrigingModel,
    theta: &CorrelationLengths,
    form: FisherForm,
) -> Result<FisherInfo> {
    let e = evaluate(model, theta, None, Some(form))?;
    Ok(FisherInfo(e.fisher.expect("requested")))
}

fn log_jeffreys_from_info(info: &DMatrix<f64>) -> Result<f64> {
    let eig = info.clone().symmetric_eigenvalues();
    let min = eig.min();
    if !(min > 1e-12) {
        return Err(Error::SingularPrior {
            min_eigenvalue: min,
        });
    }
    Ok(0.5 * eig.iter().map(|v| v.ln()).sum::<f64>())
}

/// `ln |I(theta)|^{1/2}`, unnormalized.
pub fn log_jeffreys_prior(
    model: &KrigingModel,
    theta: &CorrelationLengths,
    form: FisherForm,
) -> Result<f64> {
    log_jeffreys_from_info(&fisher_info(model, theta, form)?.0)
}

/// Unnormalized log posterior density of `theta` (with respect to Lebesgue
/// measure on `theta`), including the Jacobian of the output transformation.
pub fn log_unnorm_posterior(
    z: &[f64],
    theta: &CorrelationLengths,
    alpha: f64,
    model: &KrigingModel,
    prior: Prior,
) -> Result<f64> {
    PosteriorTarget::new(z, alpha, model, prior)?.log_posterior(theta)
}

/// A log density on `(0, inf)^r`.
pub trait LogTarget {
    fn dim(&self) -> usize;
    /// `None` where the density is zero or cannot be evaluated.
    fn log_density(&self, theta: &[f64]) -> Option<f64>;
}

/// The posterior of `theta` for fixed data and `alpha`, with the contrasts
/// `W^T g_alpha(z)` precomputed.
pub struct PosteriorTarget<'a> {
    model: &'a KrigingModel,
    wy: DVector<f64>,
    log_jacobian: f64,
    prior: Prior,
}

impl<'a> PosteriorTarget<'a> {
    pub fn new(z: &[f64], alpha: f64, model: &'a KrigingModel, prior: Prior) -> Result<Self> {
        if z.len() != model.n() {
            return Err(Error::DimensionMismatch {
                expected: model.n(),
                got: z.len(),
            });
        }
        let t = transform_obs(alpha, z)?;
        Ok(Self {
            model,
            wy: model.projection().project_vec(&t.values),
            log_jacobian: t.log_jacobian,
            prior,
        })
    }

    pub fn log_posterior(&self, theta: &CorrelationLengths) -> Result<f64> {
        let form = match self.prior {
            Prior::Jeffreys(f) => Some(f),
            Prior::Flat => None,
        };
        let e = evaluate(self.model, theta, Some(&self.wy), form)?;
        let log_prior = match e.fisher {
            Some(info) => log_jeffreys_from_info(&info)?,
            None => 0.0,
        };
        Ok(e.log_lik + self.log_jacobian + log_prior)
    }
}

impl LogTarget for PosteriorTarget<'_> {
    fn dim(&self) -> usize {
        self.model.r()
    }

    fn log_density(&self, theta: &[f64]) -> Option<f64> {
        let theta = CorrelationLengths::new(theta.to_vec()).ok()?;
        self.log_posterior(&theta).ok().filter(|v| v.is_finite())
    }
}

/// Settings of the multi-start MAP search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MapConfig {
    pub n_starts: usize,
    /// Starting box for `theta`, searched in log coordinates.
    pub lower: f64,
    pub upper: f64,
    pub max_iters: u64,
    /// Two best terminal objectives must agree to this tolerance.
    pub agreement: f64,
    pub seed: u64,
}

impl Default for MapConfig {
    fn default() -> Self {
        Self {
            n_starts: 8,
            lower: 0.05,
            upper: 20.0,
            max_iters: 3000,
            agreement: 1e-4,
            seed: 0,
        }
    }
}

/// Result of [`map_theta`].
#[derive(Debug, Clone)]
pub struct MapEstimate {
    pub theta: CorrelationLengths,
    pub log_posterior: f64,
    /// Terminal objective of every start that produced one, best first.
    pub terminal_values: Vec<f64>,
}

struct NegLogPosterior<'a, 'b>(&'b PosteriorTarget<'a>);

impl CostFunction for NegLogPosterior<'_, '_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, log_theta: &Self::Param) -> std::result::Result<f64, argmin::core::Error> {
        let theta: Vec<f64> = log_theta.iter().map(|v| v.exp()).collect();
        Ok(self
            .0
            .log_density(&theta)
            .map(|v| -v)
            .unwrap_or(f64::INFINITY))
    }
}

/// Mode of the posterior density of `theta`, by Nelder-Mead in `ln theta`
/// from Latin-hypercube starts.
pub fn map_theta(
    z: &[f64],
    alpha: f64,
    model: &KrigingModel,
    prior: Prior,
    config: &MapConfig,
) -> Result<MapEstimate> {
    if config.n_starts < 4 {
        return Err(Error::Config(format!(
            "MAP search needs at least 4 starts, got {}",
            config.n_starts
        )));
    }
    if model.projection().dof() < 2 {
        return Err(Error::Unreliable(
            "with n = p + 1 the integrated likelihood does not depend on theta".into(),
        ));
    }
    let target = PosteriorTarget::new(z, alpha, model, prior)?;
    let r = model.r();
    let (lo, hi) = (config.lower.ln(), config.upper.ln());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let starts = latin_hypercube(config.n_starts, r, &mut rng);

    let mut results: Vec<(f64, Vec<f64>)> = Vec::new();
    for start in starts {
        let x0: Vec<f64> = start.iter().map(|u| lo + u * (hi - lo)).collect();
        if target.log_density(&exp_all(&x0)).is_none() {
            continue;
        }
        let mut simplex = vec![x0.clone()];
        for k in 0..r {
            let mut v = x0.clone();
            v[k] += 0.5;
            simplex.push(v);
        }
        let solver = match NelderMead::new(simplex).with_sd_tolerance(1e-10) {
            Ok(s) => s,
            Err(e) => return Err(Error::Unreliable(e.to_string())),
        };
        let run = Executor::new(NegLogPosterior(&target), solver)
            .configure(|s| s.max_iters(config.max_iters))
            .run();
        match run {
            Ok(res) => {
                let state = res.state();
                let cost = state.get_best_cost();
                if let (true, Some(p)) = (cost.is_finite(), state.get_best_param()) {
                    results.push((-cost, p.clone()));
                }
            }
            Err(e) => debug!("Nelder-Mead start failed: {e}"),
        }
    }
    results.sort_by(|a, b| b.0.total_cmp(&a.0));
    if results.len() < 2 {
        return Err(Error::Unreliable(format!(
            "only {} of {} starts produced a finite optimum",
            results.len(),
            config.n_starts
        )));
    }
    let (best, second) = (results[0].0, results[1].0);
    if (best - second).abs() > config.agreement {
        return Err(Error::Unreliable(format!(
            "best two starts disagree: {best} vs {second}"
        )));
    }
    Ok(MapEstimate {
        theta: CorrelationLengths::from_log(&results[0].1)?,
        log_posterior: best,
        terminal_values: results.iter().map(|r| r.0).collect(),
    })
}

fn exp_all(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| x.exp()).collect()
}

/// Coordinates in which the random walk moves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WalkScale {
    /// `ln theta_k' = ln theta_k + eps`
    #[default]
    Log,
    /// `theta_k' = theta_k + eps`, rejecting nonpositive proposals.
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McmcConfig {
    /// Sweeps after burn-in.
    pub n_iterations: usize,
    /// Keep one sweep out of `thin`.
    pub thin: usize,
    /// Adaptation sweeps, discarded.
    pub burn_in: usize,
    pub seed: u64,
    pub walk: WalkScale,
    /// Target acceptance rate of each coordinate update during adaptation.
    pub target_acceptance: f64,
    /// Sweeps per adaptation batch.
    pub adapt_batch: usize,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self {
            n_iterations: 9000,
            thin: 90,
            burn_in: 1000,
            seed: 0,
            walk: WalkScale::Log,
            target_acceptance: 0.44,
            adapt_batch: 25,
        }
    }
}

/// Thinned posterior draws of `theta` at one `alpha`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaDraws {
    pub alpha: f64,
    pub draws: Vec<CorrelationLengths>,
    pub n_iterations: usize,
    pub thin: usize,
    pub burn_in: usize,
    pub seed: u64,
    /// Post-burn-in acceptance rate per coordinate.
    pub acceptance_rates: Vec<f64>,
    pub warnings: Vec<String>,
}

/// Raw output of [`run_chain`].
#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    pub draws: Vec<Vec<f64>>,
    pub acceptance_rates: Vec<f64>,
    pub step_sizes: Vec<f64>,
    pub warnings: Vec<String>,
}

/// Metropolis-within-Gibbs on `(0, inf)^r`. Deterministic given the seed.
pub fn run_chain<T: LogTarget>(target: &T, init: &[f64], config: &McmcConfig) -> Result<Chain> {
    let r = target.dim();
    if init.len() != r {
        return Err(Error::DimensionMismatch {
            expected: r,
            got: init.len(),
        });
    }
    if config.thin == 0 || config.n_iterations < config.thin {
        return Err(Error::Config(format!(
            "need 1 <= thin <= n_iterations, got thin = {} and n_iterations = {}",
            config.thin, config.n_iterations
        )));
    }
    let walk = config.walk;
    // density of the walk coordinates: ln theta adds the Jacobian sum ln theta_k
    let log_target = |x: &[f64]| -> Option<f64> {
        let lp = target.log_density(x)?;
        Some(match walk {
            WalkScale::Log => lp + x.iter().map(|v| v.ln()).sum::<f64>(),
            WalkScale::Linear => lp,
        })
    };

    let mut x = init.to_vec();
    let mut current = log_target(&x)
        .ok_or_else(|| Error::Sampler(format!("initial point {init:?} has zero density")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut steps: Vec<f64> = match walk {
        WalkScale::Log => vec![0.5; r],
        WalkScale::Linear => x.iter().map(|v| 0.5 * v).collect(),
    };
    let mut batch_accepts = vec![0usize; r];
    let mut batch_index = 0usize;
    let mut accepts = vec![0usize; r];
    let mut draws = Vec::with_capacity(config.n_iterations / config.thin);

    for sweep in 0..(config.burn_in + config.n_iterations) {
        let adapting = sweep < config.burn_in;
        for k in 0..r {
            let eps: f64 = rng.sample::<f64, _>(StandardNormal) * steps[k];
            let old = x[k];
            let proposal = match walk {
                WalkScale::Log => old * eps.exp(),
                WalkScale::Linear => old + eps,
            };
            let u: f64 = rng.gen();
            if !(proposal > 0.0 && proposal.is_finite()) {
                continue;
            }
            x[k] = proposal;
            match log_target(&x) {
                Some(lp) if u.ln() < lp - current => {
                    current = lp;
                    if adapting {
                        batch_accepts[k] += 1;
                    } else {
                        accepts[k] += 1;
                    }
                }
                _ => x[k] = old,
            }
        }
        if adapting && (sweep + 1) % config.adapt_batch == 0 {
            batch_index += 1;
            let gain = 2.0 / (batch_index as f64).sqrt();
            for k in 0..r {
                let rate = batch_accepts[k] as f64 / config.adapt_batch as f64;
                steps[k] *= (gain * (rate - config.target_acceptance)).exp();
                batch_accepts[k] = 0;
            }
        }
        if !adapting && (sweep + 1 - config.burn_in).is_multiple_of(config.thin) {
            draws.push(x.clone());
        }
    }

    let acceptance_rates: Vec<f64> = accepts
        .iter()
        .map(|a| *a as f64 / config.n_iterations as f64)
        .collect();
    if accepts.iter().all(|a| *a == 0) {
        return Err(Error::Sampler(
            "every proposal after burn-in was rejected".into(),
        ));
    }
    let warnings = acceptance_rates
        .iter()
        .enumerate()
        .filter(|(_, r)| !(0.1..=0.8).contains(*r))
        .map(|(k, r)| format!("coordinate {k}: acceptance rate {r:.3} outside [0.1, 0.8]"))
        .collect();
    Ok(Chain {
        draws,
        acceptance_rates,
        step_sizes: steps,
        warnings,
    })
}

/// Best of a few candidate points, used to start a chain when no MAP is
/// available.
fn default_start(target: &PosteriorTarget<'_>, seed: u64) -> Result<Vec<f64>> {
    let r = target.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5851_f42d_4c95_7f2d);
    let (lo, hi) = (0.05f64.ln(), 20f64.ln());
    let mut candidates = vec![vec![0.3; r]];
    candidates.extend(
        latin_hypercube(16, r, &mut rng)
            .into_iter()
            .map(|u| u.iter().map(|v| (lo + v * (hi - lo)).exp()).collect()),
    );
    candidates
        .into_iter()
        .filter_map(|c| target.log_density(&c).map(|v| (v, c)))
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, c)| c)
        .ok_or_else(|| Error::Sampler("no starting point with positive density".into()))
}

/// Posterior draws of `theta` at one `alpha`, started from `init` or from
/// the best of a few space-filling candidates.
pub fn sample_theta(
    z: &[f64],
    alpha: f64,
    model: &KrigingModel,
    prior: Prior,
    config: &McmcConfig,
    init: Option<&CorrelationLengths>,
) -> Result<ThetaDraws> {
    let target = PosteriorTarget::new(z, alpha, model, prior)?;
    let start = match init {
        Some(t) => t.as_slice().to_vec(),
        None => default_start(&target, config.seed)?,
    };
    let chain = run_chain(&target, &start, config)?;
    Ok(ThetaDraws {
        alpha,
        draws: chain
            .draws
            .into_iter()
            .map(CorrelationLengths::new)
            .collect::<Result<_>>()?,
        n_iterations: config.n_iterations,
        thin: config.thin,
        burn_in: config.burn_in,
        seed: config.seed,
        acceptance_rates: chain.acceptance_rates,
        warnings: chain.warnings,
    })
}

/// Seed for the chain at `alpha`, independent of the grid it belongs to.
pub fn alpha_seed(seed: u64, alpha: f64) -> u64 {
    splitmix64(seed ^ splitmix64((alpha * 1e6).round() as u64))
}

pub(crate) fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
