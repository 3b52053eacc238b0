//! Run configuration, read from TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::design::TrendBasis;
use crate::error::{Error, Result};
use crate::likelihood::ProfileConfig;
use crate::pod::{Marginal, NuisanceDistribution, PodConfig};
use crate::posterior::{MapConfig, McmcConfig, Prior};

/// `start, start + step, ...` up to `stop`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlphaGrid {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Default for AlphaGrid {
    fn default() -> Self {
        Self {
            start: 0.0,
            stop: 1.0,
            step: 0.01,
        }
    }
}

impl AlphaGrid {
    pub fn single(alpha: f64) -> Self {
        Self {
            start: alpha,
            stop: alpha,
            step: 1.0,
        }
    }

    /// Grid values, rounded to 10 decimals so that they print as typed.
    pub fn values(&self) -> Result<Vec<f64>> {
        if !(self.step > 0.0) || !(self.start <= self.stop) {
            return Err(Error::Config(format!("invalid alpha grid {self:?}")));
        }
        if self.start < 0.0 || self.stop > 1.0 {
            return Err(Error::Config("alpha grid must lie in [0,1]".into()));
        }
        let k = ((self.stop - self.start) / self.step + 1e-9).floor() as usize;
        Ok((0..=k)
            .map(|i| ((self.start + i as f64 * self.step) * 1e10).round() / 1e10)
            .collect())
    }
}

/// Generative model used by `simulate`: the transformed output is Gaussian
/// with mean `H beta` and covariance `sigma2 Sigma_theta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticTruth {
    pub beta: Vec<f64>,
    pub sigma2: f64,
    pub theta_true: Vec<f64>,
    pub alpha_true: f64,
    pub seed: u64,
}

impl Default for SyntheticTruth {
    fn default() -> Self {
        Self {
            beta: vec![1.0, 3.0],
            sigma2: 1.0,
            theta_true: vec![0.3; 3],
            alpha_true: 0.5,
            seed: 1,
        }
    }
}

impl SyntheticTruth {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma2 > 0.0) {
            return Err(Error::Config("truth.sigma2 must be positive".into()));
        }
        if self.theta_true.iter().any(|t| !(*t > 0.0)) {
            return Err(Error::Config("truth.theta_true must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.alpha_true) {
            return Err(Error::Config("truth.alpha_true must be in [0,1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub observations: PathBuf,
    pub design: PathBuf,
    pub alpha_profile: PathBuf,
    pub predictions: PathBuf,
    pub pod_curve: PathBuf,
    /// Points to predict at (same layout as `design.csv`).
    pub predict_points: PathBuf,
    /// Raw observations in physical units, input of `preprocess`.
    pub physical_observations: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            observations: "observations.csv".into(),
            design: "design.csv".into(),
            alpha_profile: "alpha_profile.csv".into(),
            predictions: "predictions.csv".into(),
            pod_curve: "pod_curve.csv".into(),
            predict_points: "design.csv".into(),
            physical_observations: "physical_observations.csv".into(),
        }
    }
}

impl Paths {
    /// Relative paths are taken relative to `dir`.
    pub fn resolve(&self, dir: &Path) -> Self {
        let f = |p: &PathBuf| {
            if p.is_absolute() {
                p.clone()
            } else {
                dir.join(p)
            }
        };
        Self {
            observations: f(&self.observations),
            design: f(&self.design),
            alpha_profile: f(&self.alpha_profile),
            predictions: f(&self.predictions),
            pod_curve: f(&self.pod_curve),
            predict_points: f(&self.predict_points),
            physical_observations: f(&self.physical_observations),
        }
    }
}

/// Everything a pipeline run needs. Every field has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Input dimension, defect depth included.
    pub r: usize,
    /// Number of design points for `gen-design`.
    pub n: usize,
    pub seed: u64,
    pub basis: TrendBasis,
    pub alpha_grid: AlphaGrid,
    pub prior: Prior,
    pub mcmc: McmcConfig,
    pub map: MapConfig,
    pub skip_map: bool,
    pub jitter: f64,
    pub pod: PodConfig,
    /// Also compute POD curves with `alpha` integrated out.
    pub integrate_alpha: bool,
    pub mass_cutoff: f64,
    /// Alpha used by `sample-theta`, `predict` and `pod`; the argmax of the
    /// fitted profile when absent.
    pub alpha: Option<f64>,
    /// Law of the defect depth in physical units.
    pub a_marginal: Marginal,
    pub nuisance: NuisanceDistribution,
    pub truth: SyntheticTruth,
    pub paths: Paths,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            r: 3,
            n: 100,
            seed: 0,
            basis: TrendBasis::AffineA,
            alpha_grid: AlphaGrid::default(),
            prior: Prior::default(),
            mcmc: McmcConfig::default(),
            map: MapConfig::default(),
            skip_map: false,
            jitter: 0.0,
            pod: PodConfig::default(),
            integrate_alpha: false,
            mass_cutoff: 0.999,
            alpha: None,
            a_marginal: Marginal::Uniform { lo: 0.0, hi: 1.0 },
            nuisance: NuisanceDistribution {
                marginals: vec![Marginal::Uniform { lo: 0.0, hi: 1.0 }; 2],
            },
            truth: SyntheticTruth::default(),
            paths: Paths::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Uses `seed` for every random stage.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.mcmc.seed = seed;
        self.map.seed = seed;
        self.pod.seed = seed;
        self.truth.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.r == 0 || self.n < 2 {
            return Err(Error::Config("need r >= 1 and n >= 2".into()));
        }
        if self.mcmc.n_iterations == 0 || self.mcmc.thin == 0 || self.mcmc.adapt_batch == 0 {
            return Err(Error::Config("MCMC counts must be positive".into()));
        }
        if !(self.jitter >= 0.0) {
            return Err(Error::Config("jitter must be nonnegative".into()));
        }
        if !(self.mass_cutoff > 0.0 && self.mass_cutoff <= 1.0) {
            return Err(Error::Config("mass_cutoff must be in (0,1]".into()));
        }
        if let Some(a) = self.alpha {
            if !(0.0..=1.0).contains(&a) {
                return Err(Error::Config(format!("alpha {a} outside [0,1]")));
            }
        }
        self.alpha_grid.values()?;
        self.pod.validate()?;
        self.a_marginal.validate()?;
        for m in &self.nuisance.marginals {
            m.validate()?;
        }
        self.truth.validate()
    }

    pub fn profile_config(&self) -> ProfileConfig {
        ProfileConfig {
            prior: self.prior,
            mcmc: self.mcmc.clone(),
            map: self.map.clone(),
            skip_map: self.skip_map,
        }
    }
}
