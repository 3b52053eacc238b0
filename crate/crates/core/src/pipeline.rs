//! End-to-end stages: synthetic data, fitting `alpha`, prediction and POD.

use log::info;
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::config::{RunConfig, SyntheticTruth};
use crate::design::{build_h, DesignSet, TrendBasis};
use crate::error::{Error, Result};
use crate::io::PredictionRow;
use crate::kernel::{corr_matrix, CorrelationLengths};
use crate::likelihood::{alpha_profile, AlphaProfile};
use crate::linalg::cholesky;
use crate::model::KrigingModel;
use crate::pod::{pod_curves, pod_integrated_alpha, FixedAlphaSafety, PodCurve};
use crate::predict::{safe_prob, MixturePredictor};
use crate::transform::c_inverse;

/// A draw of the transformed field `y ~ N(H beta, sigma2 Sigma_theta)` at the
/// design points.
pub fn simulate_transformed(
    design: &DesignSet,
    basis: TrendBasis,
    truth: &SyntheticTruth,
) -> Result<Vec<f64>> {
    truth.validate()?;
    let h = build_h(design, basis)?;
    if truth.beta.len() != h.ncols() {
        return Err(Error::DimensionMismatch {
            expected: h.ncols(),
            got: truth.beta.len(),
        });
    }
    let theta = CorrelationLengths::new(truth.theta_true.clone())?;
    let chol = cholesky(corr_matrix(design, &theta)?)?;
    let mut rng = ChaCha8Rng::seed_from_u64(truth.seed);
    let e: DVector<f64> = DVector::from_fn(design.n(), |_, _| StandardNormal.sample(&mut rng));
    let y = h * DVector::from_column_slice(&truth.beta) + chol.l() * e * truth.sigma2.sqrt();
    Ok(y.as_slice().to_vec())
}

/// Raw outputs `z = C_alpha^{-1}(y)` for a draw `y` of the transformed field.
/// Positive by construction.
pub fn simulate_truth(
    design: &DesignSet,
    basis: TrendBasis,
    truth: &SyntheticTruth,
) -> Result<Vec<f64>> {
    simulate_transformed(design, basis, truth)?
        .into_iter()
        .map(|y| c_inverse(truth.alpha_true, y))
        .collect()
}

pub fn build_model(config: &RunConfig, design: DesignSet) -> Result<KrigingModel> {
    if design.r() != config.r {
        return Err(Error::DimensionMismatch {
            expected: config.r,
            got: design.r(),
        });
    }
    Ok(KrigingModel::new(design, config.basis)?.with_jitter(config.jitter))
}

/// Physical coordinates to the unit cube, defect depth first.
pub fn preprocess(config: &RunConfig, points: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    if config.nuisance.dim() + 1 != config.r {
        return Err(Error::Config(format!(
            "{} nuisance marginals given for r = {}",
            config.nuisance.dim(),
            config.r
        )));
    }
    points
        .iter()
        .map(|p| {
            if p.len() != config.r {
                return Err(Error::DimensionMismatch {
                    expected: config.r,
                    got: p.len(),
                });
            }
            let mut u = vec![config.a_marginal.to_unit(p[0])?];
            u.extend(config.nuisance.to_unit(&p[1..])?);
            Ok(u)
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct FitOutput {
    pub profile: AlphaProfile,
    /// Grid value maximizing `L^LOG`.
    pub alpha_hat: f64,
}

pub fn run_fit(config: &RunConfig, model: &KrigingModel, z: &[f64]) -> Result<FitOutput> {
    let grid = config.alpha_grid.values()?;
    info!("scanning {} values of alpha", grid.len());
    let profile = alpha_profile(z, &grid, model, &config.profile_config())?;
    let best = profile
        .argmax_log()
        .ok_or_else(|| Error::Sampler("no value of alpha produced a pseudo-likelihood".into()))?;
    Ok(FitOutput {
        alpha_hat: profile.alphas[best],
        profile,
    })
}

/// Moment-matched summary of the mixture predictive at each point: mean of
/// the component locations, and the scale whose square is the mean squared
/// component scale plus the spread of the locations.
pub fn predict_rows(
    config: &RunConfig,
    predictor: &MixturePredictor,
    points: &[Vec<f64>],
) -> Result<Vec<PredictionRow>> {
    points
        .iter()
        .map(|x| {
            let mix = predictor.predict(x)?;
            let m = mix.components.len() as f64;
            let loc = mix.mean_location();
            let spread = mix
                .components
                .iter()
                .map(|c| c.scale * c.scale + (c.location - loc).powi(2))
                .sum::<f64>()
                / m;
            Ok(PredictionRow {
                x: x.clone(),
                location_transformed: loc,
                scale_transformed: spread.sqrt(),
                safe_prob: safe_prob(&mix, config.pod.threshold, config.pod.normal_approx)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct PodOutput {
    pub fixed: PodCurve,
    /// Curve with `alpha` integrated out, and the `(alpha, weight)` pairs used.
    pub integrated: Option<(PodCurve, Vec<(f64, f64)>)>,
}

/// POD curves at a fixed `alpha` and, when configured and a profile with
/// draws is given, with `alpha` integrated out. Both share the seed.
pub fn run_pod(
    config: &RunConfig,
    model: &KrigingModel,
    z: &[f64],
    alpha: f64,
    draws: &[CorrelationLengths],
    profile: Option<&AlphaProfile>,
) -> Result<PodOutput> {
    let predictor = MixturePredictor::from_thetas(z, alpha, draws, model)?;
    let safety = FixedAlphaSafety::new(predictor, config.pod.threshold, config.pod.normal_approx)?;
    let fixed = pod_curves(&safety, &config.pod)?;
    let integrated = match (config.integrate_alpha, profile) {
        (true, Some(p)) => Some(pod_integrated_alpha(
            p,
            z,
            model,
            &config.pod,
            config.mass_cutoff,
        )?),
        (true, None) => {
            return Err(Error::Config(
                "integrate_alpha needs a fitted profile with draws".into(),
            ))
        }
        (false, _) => None,
    };
    Ok(PodOutput { fixed, integrated })
}
