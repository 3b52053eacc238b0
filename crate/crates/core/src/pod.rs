//! Nuisance-parameter laws, the unit-cube reparametrization and Monte Carlo
//! probability-of-detection curves.

use log::{info, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::AlphaProfile;
use crate::model::KrigingModel;
use crate::predict::{safe_prob, MixturePredictor};
use crate::special::{normal_cdf, normal_quantile, normal_sf};

/// Law of one nuisance parameter in physical units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Marginal {
    Uniform {
        lo: f64,
        hi: f64,
    },
    Normal {
        mean: f64,
        variance: f64,
    },
    /// Normal law conditioned on being nonnegative.
    TruncatedNormalAtZero {
        mean: f64,
        variance: f64,
    },
}

impl Marginal {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Marginal::Uniform { lo, hi } => lo.is_finite() && hi.is_finite() && lo < hi,
            Marginal::Normal { mean, variance }
            | Marginal::TruncatedNormalAtZero { mean, variance } => {
                mean.is_finite() && variance > 0.0 && variance.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid marginal {self:?}")))
        }
    }

    fn in_support(&self, x: f64) -> bool {
        match *self {
            Marginal::Uniform { lo, hi } => (lo..=hi).contains(&x),
            Marginal::Normal { .. } => x.is_finite(),
            Marginal::TruncatedNormalAtZero { .. } => x >= 0.0 && x.is_finite(),
        }
    }

    /// The marginal CDF at a physical value.
    pub fn to_unit(&self, x: f64) -> Result<f64> {
        self.validate()?;
        if !self.in_support(x) {
            return Err(Error::Domain(format!(
                "{x} outside the support of {self:?}"
            )));
        }
        Ok(match *self {
            Marginal::Uniform { lo, hi } => (x - lo) / (hi - lo),
            Marginal::Normal { mean, variance } => normal_cdf((x - mean) / variance.sqrt()),
            Marginal::TruncatedNormalAtZero { mean, variance } => {
                let sd = variance.sqrt();
                // upper tails avoid cancellation when the cut is far below the mean
                let tail0 = normal_sf(-mean / sd);
                let tail = normal_sf((x - mean) / sd);
                1.0 - tail / tail0
            }
        })
    }

    /// The quantile function; inverse of [`Marginal::to_unit`].
    pub fn from_unit(&self, u: f64) -> Result<f64> {
        self.validate()?;
        if !(u > 0.0 && u < 1.0) {
            return Err(Error::Domain(format!(
                "unit value must be in (0,1), got {u}"
            )));
        }
        Ok(match *self {
            Marginal::Uniform { lo, hi } => lo + u * (hi - lo),
            Marginal::Normal { mean, variance } => mean + variance.sqrt() * normal_quantile(u),
            Marginal::TruncatedNormalAtZero { mean, variance } => {
                let sd = variance.sqrt();
                let (mut lo, mut hi) = (0.0, mean.max(0.0) + sd);
                while self.to_unit(hi)? < u {
                    hi = 2.0 * hi + sd;
                }
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if self.to_unit(mid)? < u {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                    if hi - lo <= 4.0 * f64::EPSILON * hi {
                        break;
                    }
                }
                0.5 * (lo + hi)
            }
        })
    }
}

/// Independent laws of the `r - 1` nuisance parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct NuisanceDistribution {
    pub marginals: Vec<Marginal>,
}

impl NuisanceDistribution {
    pub fn new(marginals: Vec<Marginal>) -> Result<Self> {
        for m in &marginals {
            m.validate()?;
        }
        Ok(Self { marginals })
    }

    pub fn dim(&self) -> usize {
        self.marginals.len()
    }

    pub fn to_unit(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_len(x.len())?;
        self.marginals
            .iter()
            .zip(x)
            .map(|(m, v)| m.to_unit(*v))
            .collect()
    }

    pub fn from_unit(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.check_len(u.len())?;
        self.marginals
            .iter()
            .zip(u)
            .map(|(m, v)| m.from_unit(*v))
            .collect()
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: len,
            });
        }
        Ok(())
    }
}

fn uniform_points<R: Rng>(rng: &mut R, n: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..dim).map(|_| rng.gen::<f64>()).collect())
        .collect()
}

/// `n` i.i.d. points of the nuisance law in unit coordinates, i.e. uniform
/// on the unit cube.
pub fn sample_nuisance(dist: &NuisanceDistribution, n: usize, seed: u64) -> Vec<Vec<f64>> {
    uniform_points(&mut ChaCha8Rng::seed_from_u64(seed), n, dist.dim())
}

/// The probability, according to a surrogate, that a defect at a unit-cube
/// point produces a signal above the threshold.
pub trait SafetyModel: Sync {
    /// Number of input coordinates, defect depth first.
    fn dim(&self) -> usize;
    fn safe(&self, x: &[f64]) -> Result<f64>;
}

/// Safety under one fixed `alpha`, averaged over posterior draws of `theta`.
#[derive(Debug, Clone)]
pub struct FixedAlphaSafety<'a> {
    predictor: MixturePredictor<'a>,
    threshold: f64,
    normal_approx: bool,
}

impl<'a> FixedAlphaSafety<'a> {
    pub fn new(
        predictor: MixturePredictor<'a>,
        threshold: f64,
        normal_approx: bool,
    ) -> Result<Self> {
        if !(threshold > 0.0) {
            return Err(Error::Domain(format!(
                "threshold must be positive, got {threshold}"
            )));
        }
        Ok(Self {
            predictor,
            threshold,
            normal_approx,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.predictor.alpha()
    }
}

impl SafetyModel for FixedAlphaSafety<'_> {
    fn dim(&self) -> usize {
        self.predictor.dim()
    }

    fn safe(&self, x: &[f64]) -> Result<f64> {
        safe_prob(
            &self.predictor.predict(x)?,
            self.threshold,
            self.normal_approx,
        )
    }
}

/// Weighted average of fixed-`alpha` safeties.
#[derive(Debug, Clone)]
pub struct WeightedSafety<'a> {
    components: Vec<(f64, FixedAlphaSafety<'a>)>,
}

impl<'a> WeightedSafety<'a> {
    /// Weights are normalized to sum to one.
    pub fn new(components: Vec<(f64, FixedAlphaSafety<'a>)>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InsufficientPoints { needed: 1, got: 0 });
        }
        if components
            .iter()
            .any(|(w, _)| !(*w >= 0.0 && w.is_finite()))
        {
            return Err(Error::Domain(
                "weights must be finite and nonnegative".into(),
            ));
        }
        let total: f64 = components.iter().map(|(w, _)| w).sum();
        if !(total > 0.0) {
            return Err(Error::Domain("weights sum to zero".into()));
        }
        let dim = components[0].1.dim();
        if components.iter().any(|(_, c)| c.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: components
                    .iter()
                    .map(|(_, c)| c.dim())
                    .find(|d| *d != dim)
                    .unwrap_or(dim),
            });
        }
        Ok(Self {
            components: components
                .into_iter()
                .map(|(w, c)| (w / total, c))
                .collect(),
        })
    }

    pub fn weights(&self) -> Vec<(f64, f64)> {
        self.components
            .iter()
            .map(|(w, c)| (c.alpha(), *w))
            .collect()
    }
}

impl SafetyModel for WeightedSafety<'_> {
    fn dim(&self) -> usize {
        self.components[0].1.dim()
    }

    fn safe(&self, x: &[f64]) -> Result<f64> {
        let mut total = 0.0;
        for (w, c) in &self.components {
            total += w * c.safe(x)?;
        }
        Ok(total.clamp(0.0, 1.0))
    }
}

/// Settings of the POD Monte Carlo.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PodConfig {
    /// Detection threshold in raw output units.
    pub threshold: f64,
    pub gammas: Vec<f64>,
    pub a_step: f64,
    pub n_mc: usize,
    pub seed: u64,
    /// Reuse one nuisance sample for every `a` instead of a fresh one.
    pub common_random_numbers: bool,
    /// Use the normal tail for large degrees of freedom.
    pub normal_approx: bool,
}

impl Default for PodConfig {
    fn default() -> Self {
        Self {
            threshold: 200.0,
            gammas: vec![0.95, 0.99],
            a_step: 0.01,
            n_mc: 1000,
            seed: 0,
            common_random_numbers: false,
            normal_approx: false,
        }
    }
}

impl PodConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0) {
            return Err(Error::Config(format!(
                "threshold must be positive, got {}",
                self.threshold
            )));
        }
        if !(self.a_step > 0.0 && self.a_step <= 1.0) {
            return Err(Error::Config(format!(
                "a_step must be in (0,1], got {}",
                self.a_step
            )));
        }
        if self.n_mc == 0 {
            return Err(Error::Config("n_mc must be positive".into()));
        }
        if let Some(g) = self.gammas.iter().find(|g| !(**g > 0.0 && **g < 1.0)) {
            return Err(Error::Config(format!("safety level {g} outside (0,1)")));
        }
        Ok(())
    }

    /// `0, a_step, 2 a_step, ...` up to 1, with 1 always included.
    pub fn a_grid(&self) -> Vec<f64> {
        let k = (1.0 / self.a_step - 1e-9).ceil() as usize;
        (0..=k).map(|i| (i as f64 * self.a_step).min(1.0)).collect()
    }
}

/// Mean POD and POD at safety levels over a grid of defect depths.
#[derive(Debug, Clone, PartialEq)]
pub struct PodCurve {
    pub a_grid: Vec<f64>,
    pub pod_mean: Vec<f64>,
    /// `(gamma, values over the grid)`, in the configured order.
    pub pod_gamma: Vec<(f64, Vec<f64>)>,
    pub n_mc: usize,
    pub seed: u64,
}

/// Nuisance sample for grid index `index`: a fixed stream of the seed, so the
/// result does not depend on the order in which grid points are processed.
fn grid_sample(config: &PodConfig, index: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    if !config.common_random_numbers {
        rng.set_stream(index as u64);
    }
    uniform_points(&mut rng, config.n_mc, dim)
}

/// POD curves of a safety model: for each `a`, SAFE at `n_mc` nuisance
/// points, averaged and counted against every safety level.
pub fn pod_curves<M: SafetyModel>(model: &M, config: &PodConfig) -> Result<PodCurve> {
    config.validate()?;
    if model.dim() < 1 {
        return Err(Error::Config("safety model has no inputs".into()));
    }
    let a_grid = config.a_grid();
    let rows: Vec<(f64, Vec<f64>)> = a_grid
        .par_iter()
        .enumerate()
        .map(|(k, &a)| {
            let sample = grid_sample(config, k, model.dim() - 1);
            let mut x = vec![0.0; model.dim()];
            x[0] = a;
            let mut safes = Vec::with_capacity(config.n_mc);
            for u in sample {
                x[1..].copy_from_slice(&u);
                safes.push(model.safe(&x)?);
            }
            let n = safes.len() as f64;
            let mean = safes.iter().sum::<f64>() / n;
            let at_level = config
                .gammas
                .iter()
                .map(|g| safes.iter().filter(|s| **s >= *g).count() as f64 / n)
                .collect();
            Ok((mean, at_level))
        })
        .collect::<Result<_>>()?;
    let pod_gamma = config
        .gammas
        .iter()
        .enumerate()
        .map(|(j, g)| (*g, rows.iter().map(|r| r.1[j]).collect()))
        .collect();
    Ok(PodCurve {
        a_grid,
        pod_mean: rows.iter().map(|r| r.0).collect(),
        pod_gamma,
        n_mc: config.n_mc,
        seed: config.seed,
    })
}

/// Posterior weights of `alpha` under a uniform prior, `exp(ln L^LOG)`
/// integrated by the rectangle rule, restricted to the smallest contiguous
/// window of grid points holding at least `mass_cutoff` of the mass and
/// renormalized. Returns `(grid index, weight)`.
pub fn alpha_weights(profile: &AlphaProfile, mass_cutoff: f64) -> Result<Vec<(usize, f64)>> {
    if !(mass_cutoff > 0.0 && mass_cutoff <= 1.0) {
        return Err(Error::Config(format!(
            "mass cutoff must be in (0,1], got {mass_cutoff}"
        )));
    }
    let k = profile.len();
    let max = profile
        .log_l_log
        .iter()
        .flatten()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::InsufficientPoints { needed: 1, got: 0 });
    }
    let missing = profile.log_l_log.iter().filter(|v| v.is_none()).count();
    if missing > 0 {
        warn!("{missing} grid values of alpha have no L^LOG and get zero weight");
    }
    let a = &profile.alphas;
    let width = |i: usize| -> f64 {
        if k == 1 {
            return 1.0;
        }
        let left = if i == 0 {
            a[0]
        } else {
            0.5 * (a[i - 1] + a[i])
        };
        let right = if i + 1 == k {
            a[k - 1]
        } else {
            0.5 * (a[i] + a[i + 1])
        };
        // the end cells extend half a spacing beyond the grid
        let ext_l = if i == 0 { 0.5 * (a[1] - a[0]) } else { 0.0 };
        let ext_r = if i + 1 == k {
            0.5 * (a[k - 1] - a[k - 2])
        } else {
            0.0
        };
        right - left + ext_l + ext_r
    };
    let mass: Vec<f64> = (0..k)
        .map(|i| profile.log_l_log[i].map_or(0.0, |v| (v - max).exp() * width(i)))
        .collect();
    let total: f64 = mass.iter().sum();

    let mut best: Option<(usize, usize, f64)> = None;
    let mut hi = 0;
    let mut acc = 0.0;
    for lo in 0..k {
        while hi < k && acc < mass_cutoff * total {
            acc += mass[hi];
            hi += 1;
        }
        if acc < mass_cutoff * total * (1.0 - 1e-12) {
            break;
        }
        if best.is_none_or(|(l, h, _)| hi - lo < h - l) {
            best = Some((lo, hi, acc));
        }
        acc -= mass[lo];
    }
    let (lo, hi, held) = best.expect("the full grid holds all the mass");
    Ok((lo..hi)
        .filter(|&i| mass[i] > 0.0)
        .map(|i| (i, mass[i] / held))
        .collect())
}

/// POD curves with `alpha` integrated out over its pseudo-posterior.
pub fn pod_integrated_alpha(
    profile: &AlphaProfile,
    z: &[f64],
    model: &KrigingModel,
    config: &PodConfig,
    mass_cutoff: f64,
) -> Result<(PodCurve, Vec<(f64, f64)>)> {
    let weights = alpha_weights(profile, mass_cutoff)?;
    if weights.len() == 1 {
        info!(
            "all posterior mass of alpha within one grid point ({}); using the fixed-alpha curve",
            profile.alphas[weights[0].0]
        );
    }
    let mut components = Vec::with_capacity(weights.len());
    for &(i, w) in &weights {
        let alpha = profile.alphas[i];
        let draws = profile.draws[i]
            .as_ref()
            .ok_or_else(|| Error::Config(format!("no theta draws at alpha = {alpha}")))?;
        let predictor = MixturePredictor::new(z, alpha, draws, model)?;
        components.push((
            w,
            FixedAlphaSafety::new(predictor, config.threshold, config.normal_approx)?,
        ));
    }
    let safety = WeightedSafety::new(components)?;
    let used = safety.weights();
    Ok((pod_curves(&safety, config)?, used))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::Rng;

    struct Fixed(fn(&[f64]) -> f64, usize);

    impl SafetyModel for Fixed {
        fn dim(&self) -> usize {
            self.1
        }
        fn safe(&self, x: &[f64]) -> Result<f64> {
            Ok((self.0)(x))
        }
    }

    #[test]
    fn to_unit_examples() {
        assert_relative_eq!(
            Marginal::Uniform { lo: 0.0, hi: 2.0 }.to_unit(0.5).unwrap(),
            0.25
        );
        assert_relative_eq!(
            Marginal::Normal {
                mean: 3.0,
                variance: 2.0
            }
            .to_unit(3.0)
            .unwrap(),
            0.5
        );
        let phi = |x: f64| normal_cdf(x);
        let expect = (phi(0.0) - phi(-1.0)) / (1.0 - phi(-1.0));
        let got = Marginal::TruncatedNormalAtZero {
            mean: 1.0,
            variance: 1.0,
        }
        .to_unit(1.0)
        .unwrap();
        assert_relative_eq!(got, expect, epsilon = 1e-14);
        // scipy.stats.truncnorm(-1, inf, loc=1).cdf(1)
        assert_relative_eq!(got, 0.405_713_291_327_469_97, epsilon = 1e-10);
        assert!(Marginal::Uniform { lo: 0.0, hi: 1.0 }.to_unit(1.5).is_err());
        assert!(Marginal::TruncatedNormalAtZero {
            mean: 1.0,
            variance: 1.0
        }
        .to_unit(-0.1)
        .is_err());
    }

    #[test]
    fn from_unit_examples() {
        assert_relative_eq!(
            Marginal::Uniform { lo: 2.0, hi: 6.0 }
                .from_unit(0.5)
                .unwrap(),
            4.0
        );
        // norm.ppf(0.975)
        let q = Marginal::Normal {
            mean: 1.0,
            variance: 4.0,
        }
        .from_unit(0.975)
        .unwrap();
        assert_relative_eq!(q, 1.0 + 2.0 * 1.959_963_984_540_054, epsilon = 1e-9);
        assert!(Marginal::Normal {
            mean: 0.0,
            variance: 1.0
        }
        .from_unit(0.0)
        .is_err());
        assert!(Marginal::Uniform { lo: 1.0, hi: 1.0 }
            .from_unit(0.5)
            .is_err());
    }

    #[test]
    fn round_trips() {
        let marginals = [
            Marginal::Uniform { lo: -1.0, hi: 3.0 },
            Marginal::Normal {
                mean: 2.0,
                variance: 0.3,
            },
            Marginal::TruncatedNormalAtZero {
                mean: 0.5,
                variance: 1.5,
            },
            Marginal::TruncatedNormalAtZero {
                mean: -2.0,
                variance: 0.25,
            },
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for m in marginals {
            for _ in 0..1000 {
                let u: f64 = rng.gen_range(1e-6..1.0 - 1e-6);
                let x = m.from_unit(u).unwrap();
                assert_relative_eq!(m.to_unit(x).unwrap(), u, max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn nuisance_sample() {
        let dist =
            NuisanceDistribution::new(vec![Marginal::Uniform { lo: 0.0, hi: 1.0 }; 3]).unwrap();
        assert!(sample_nuisance(&dist, 0, 1).is_empty());
        let n = 5000;
        let s = sample_nuisance(&dist, n, 1);
        assert_eq!(s, sample_nuisance(&dist, n, 1));
        for j in 0..3 {
            let mean = s.iter().map(|p| p[j]).sum::<f64>() / n as f64;
            assert!((mean - 0.5).abs() < 3.0 / (12.0 * n as f64).sqrt());
        }
    }

    #[test]
    fn physical_marginals_reproduced() {
        let dist = NuisanceDistribution::new(vec![
            Marginal::Normal {
                mean: 1.0,
                variance: 0.5,
            },
            Marginal::TruncatedNormalAtZero {
                mean: 0.2,
                variance: 1.0,
            },
        ])
        .unwrap();
        let n = 10_000;
        let sample = sample_nuisance(&dist, n, 8);
        for (j, m) in dist.marginals.iter().enumerate() {
            let mut xs: Vec<f64> = sample
                .iter()
                .map(|u| dist.from_unit(u).unwrap()[j])
                .collect();
            xs.sort_by(f64::total_cmp);
            let ks = xs
                .iter()
                .enumerate()
                .map(|(i, x)| {
                    let f = m.to_unit(*x).unwrap();
                    (f - i as f64 / n as f64)
                        .abs()
                        .max((f - (i + 1) as f64 / n as f64).abs())
                })
                .fold(0.0, f64::max);
            assert!(ks < 0.03, "KS {ks}");
        }
    }

    #[test]
    fn grid_includes_both_ends() {
        let c = PodConfig::default();
        let g = c.a_grid();
        assert_eq!(g.len(), 101);
        assert_eq!((g[0], g[100]), (0.0, 1.0));
        let g = PodConfig { a_step: 0.3, ..c }.a_grid();
        assert_eq!(g, vec![0.0, 0.3, 0.6, 0.8999999999999999, 1.0]);
    }

    #[test]
    fn certain_detection() {
        let cfg = PodConfig {
            n_mc: 50,
            a_step: 0.1,
            ..Default::default()
        };
        let curve = pod_curves(&Fixed(|_| 1.0, 3), &cfg).unwrap();
        assert!(curve.pod_mean.iter().all(|v| *v == 1.0));
        assert!(curve
            .pod_gamma
            .iter()
            .all(|(_, v)| v.iter().all(|p| *p == 1.0)));
    }

    #[test]
    fn substreams_and_common_numbers() {
        let cfg = PodConfig {
            n_mc: 200,
            a_step: 0.25,
            seed: 3,
            ..Default::default()
        };
        // SAFE depends only on the nuisance coordinate
        let m = Fixed(|x| x[1], 2);
        let fresh = pod_curves(&m, &cfg).unwrap();
        assert_eq!(fresh, pod_curves(&m, &cfg).unwrap());
        assert!(fresh.pod_mean.windows(2).any(|w| w[0] != w[1]));
        let crn = pod_curves(
            &m,
            &PodConfig {
                common_random_numbers: true,
                ..cfg
            },
        )
        .unwrap();
        assert!(crn.pod_mean.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn schedule_independent() {
        let cfg = PodConfig {
            n_mc: 100,
            a_step: 0.05,
            seed: 9,
            ..Default::default()
        };
        let m = Fixed(|x| (x[0] + x[1] * x[2]).min(1.0), 3);
        let serial = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let a = serial.install(|| pod_curves(&m, &cfg).unwrap());
        let wide = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap();
        let b = wide.install(|| pod_curves(&m, &cfg).unwrap());
        assert_eq!(a, b);
    }

    fn profile(alphas: Vec<f64>, ll: Vec<Option<f64>>) -> AlphaProfile {
        let k = alphas.len();
        AlphaProfile {
            alphas,
            log_l_log: ll,
            log_l_map: vec![None; k],
            map_theta: vec![None; k],
            draws: vec![None; k],
        }
    }

    #[test]
    fn weights_window() {
        let alphas: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
        let mut ll = vec![Some(-1000.0); 11];
        ll[4] = Some(0.0);
        let w = alpha_weights(&profile(alphas.clone(), ll.clone()), 0.999).unwrap();
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].0, 4);
        assert_relative_eq!(w[0].1, 1.0);

        ll[5] = Some(0.0);
        let w = alpha_weights(&profile(alphas.clone(), ll), 0.999).unwrap();
        assert_eq!(w.iter().map(|p| p.0).collect::<Vec<_>>(), vec![4, 5]);
        assert_relative_eq!(w[0].1, 0.5, epsilon = 1e-12);

        let flat = alpha_weights(&profile(alphas, vec![Some(0.0); 11]), 1.0).unwrap();
        assert_eq!(flat.len(), 11);
        // rectangle rule: every cell has the same width
        assert!(flat.iter().all(|p| (p.1 - 1.0 / 11.0).abs() < 1e-12));
    }

    #[test]
    fn weights_window_is_smallest() {
        let alphas: Vec<f64> = (0..20).map(|i| i as f64 / 19.0).collect();
        let ll: Vec<Option<f64>> = alphas
            .iter()
            .map(|a| Some(-200.0 * (a - 0.4).powi(2)))
            .collect();
        let w = alpha_weights(&profile(alphas, ll.clone()), 0.9).unwrap();
        let mass: Vec<f64> = ll.iter().map(|v| v.unwrap().exp()).collect();
        let total: f64 = mass.iter().sum();
        let held: f64 = w.iter().map(|p| mass[p.0]).sum();
        assert!(held >= 0.9 * total);
        // dropping either end breaks the cutoff
        let first = w.first().unwrap().0;
        let last = w.last().unwrap().0;
        assert!(held - mass[first] < 0.9 * total);
        assert!(held - mass[last] < 0.9 * total);
    }

    #[test]
    fn weighted_safety_is_linear() {
        struct Pair;
        impl SafetyModel for Pair {
            fn dim(&self) -> usize {
                2
            }
            fn safe(&self, x: &[f64]) -> Result<f64> {
                Ok(0.5 * (x[0] * x[1] + (1.0 - x[1])))
            }
        }
        let cfg = PodConfig {
            n_mc: 100,
            a_step: 0.5,
            ..Default::default()
        };
        let mixed = pod_curves(&Pair, &cfg).unwrap();
        let one = pod_curves(&Fixed(|x| x[0] * x[1], 2), &cfg).unwrap();
        let two = pod_curves(&Fixed(|x| 1.0 - x[1], 2), &cfg).unwrap();
        for k in 0..mixed.a_grid.len() {
            assert_relative_eq!(
                mixed.pod_mean[k],
                0.5 * (one.pod_mean[k] + two.pod_mean[k]),
                epsilon = 1e-12
            );
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn pod_levels_are_ordered(seed in any::<u64>(), g1 in 0.01f64..0.99, g2 in 0.01f64..0.99) {
            let cfg = PodConfig { n_mc: 64, a_step: 0.2, seed, gammas: vec![g1.min(g2), g1.max(g2)], ..Default::default() };
            let curve = pod_curves(&Fixed(|x| (x[0] * x[1] + 0.3 * x[2]).min(1.0), 3), &cfg).unwrap();
            let (lo, hi) = (&curve.pod_gamma[0].1, &curve.pod_gamma[1].1);
            for k in 0..curve.a_grid.len() {
                prop_assert!(hi[k] <= lo[k]);
                prop_assert!((0.0..=1.0).contains(&curve.pod_mean[k]));
            }
        }
    }
}
