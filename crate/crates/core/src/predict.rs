//! Bayesian predictive distributions of the transformed output at new
//! points, and exceedance ("safety") probabilities of a raw threshold.

use log::warn;
use nalgebra::{DMatrix, DVector};
use statrs::function::beta::beta_reg;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::kernel::{corr_cross, CorrelationLengths};
use crate::likelihood::MAX_SKIPPED_FRACTION;
use crate::linalg::{cholesky, solve_lower, solve_lower_mat, Chol};
use crate::model::KrigingModel;
use crate::posterior::ThetaDraws;
use crate::special::normal_sf;
use crate::transform::{c_eval, transform_obs};

/// Degrees of freedom from which the normal tail may replace the Student-t
/// tail when explicitly requested.
pub const NORMAL_APPROX_MIN_DOF: usize = 200;

/// Non-standardized Student-t law `location + scale * T_dof`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StudentTPredictive {
    pub dof: usize,
    pub location: f64,
    pub scale: f64,
}

impl StudentTPredictive {
    /// `P(Y > c)`. A zero scale is a point mass at the location.
    pub fn survival(&self, c: f64, normal_approx: bool) -> Result<f64> {
        if self.scale > 0.0 {
            student_t_survival(self.dof, (c - self.location) / self.scale, normal_approx)
        } else if self.location > c {
            Ok(1.0)
        } else if self.location < c {
            Ok(0.0)
        } else {
            Ok(0.5)
        }
    }

    pub fn cdf(&self, c: f64) -> Result<f64> {
        Ok(1.0 - self.survival(c, false)?)
    }

    /// Central interval of probability `level`.
    pub fn interval(&self, level: f64) -> Result<(f64, f64)> {
        if !(level > 0.0 && level < 1.0) {
            return Err(Error::Domain(format!(
                "level must be in (0,1), got {level}"
            )));
        }
        let q = student_t_quantile(self.dof, 0.5 + 0.5 * level)?;
        Ok((
            self.location - q * self.scale,
            self.location + q * self.scale,
        ))
    }
}

/// Upper tail `P(T > t)` of the standard Student-t with `dof` degrees of
/// freedom, through the regularized incomplete beta function. With
/// `normal_approx` and `dof >= NORMAL_APPROX_MIN_DOF` the standard normal
/// tail is used instead.
pub fn student_t_survival(dof: usize, t: f64, normal_approx: bool) -> Result<f64> {
    if dof < 1 {
        return Err(Error::Domain("Student-t needs dof >= 1".into()));
    }
    if t.is_nan() {
        return Err(Error::Domain("NaN argument to Student-t survival".into()));
    }
    if normal_approx && dof >= NORMAL_APPROX_MIN_DOF {
        return Ok(normal_sf(t));
    }
    if t == 0.0 {
        return Ok(0.5);
    }
    if t.is_infinite() {
        return Ok(if t > 0.0 { 0.0 } else { 1.0 });
    }
    let nu = dof as f64;
    let t2 = t * t;
    // near zero nu / (nu + t^2) rounds to 1, so go through the central mass;
    // very close to zero the incomplete beta underflows and the density's
    // Taylor expansion is exact to double precision
    let tail = if t2 < 1e-8 {
        let f0 = (ln_gamma(0.5 * (nu + 1.0)) - ln_gamma(0.5 * nu)).exp()
            / (nu * std::f64::consts::PI).sqrt();
        0.5 - f0 * t.abs() * (1.0 - (nu + 1.0) * t2 / (6.0 * nu))
    } else if t2 < nu {
        0.5 - 0.5 * beta_reg(0.5, 0.5 * nu, t2 / (nu + t2))
    } else {
        0.5 * beta_reg(0.5 * nu, 0.5, nu / (nu + t2))
    };
    Ok(if t > 0.0 { tail } else { 1.0 - tail })
}

/// Quantile of the standard Student-t by bisection on the survival function.
pub fn student_t_quantile(dof: usize, p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!(
            "probability must be in (0,1), got {p}"
        )));
    }
    let (mut lo, mut hi) = (-1.0, 1.0);
    while 1.0 - student_t_survival(dof, lo, false)? > p {
        lo *= 2.0;
    }
    while 1.0 - student_t_survival(dof, hi, false)? < p {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if 1.0 - student_t_survival(dof, mid, false)? < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * mid.abs().max(1.0) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn check_point(model: &KrigingModel, x0: &[f64]) -> Result<()> {
    if x0.len() != model.r() {
        return Err(Error::DimensionMismatch {
            expected: model.r(),
            got: x0.len(),
        });
    }
    if let Some(c) = x0.iter().find(|c| !(0.0..=1.0).contains(*c)) {
        return Err(Error::Domain(format!(
            "prediction point coordinate {c} is outside [0,1]"
        )));
    }
    Ok(())
}

/// Generalized least squares quantities for one `theta`, so that each
/// prediction point costs `O(n^2)`.
#[derive(Debug, Clone)]
pub struct GlsPredictor<'a> {
    model: &'a KrigingModel,
    theta: CorrelationLengths,
    y: Vec<f64>,
    chol: Chol,
    /// `L^{-1} H`
    white_h: DMatrix<f64>,
    /// Cholesky factor of `H^T Sigma^{-1} H`
    gram: Chol,
    beta: DVector<f64>,
    /// `L^{-1} (y - H beta)`
    white_resid: DVector<f64>,
    q2: f64,
}

impl<'a> GlsPredictor<'a> {
    pub fn new(y_t: &[f64], model: &'a KrigingModel, theta: &CorrelationLengths) -> Result<Self> {
        if y_t.len() != model.n() {
            return Err(Error::DimensionMismatch {
                expected: model.n(),
                got: y_t.len(),
            });
        }
        let chol = cholesky(model.correlation(theta)?)?;
        let white_h = solve_lower_mat(&chol, model.h());
        let white_y = solve_lower(&chol, &DVector::from_column_slice(y_t));
        let gram = cholesky(white_h.transpose() * &white_h)?;
        let beta = gram.solve(&(white_h.transpose() * &white_y));
        let white_resid = white_y - &white_h * &beta;
        let q2 = white_resid.norm_squared();
        if !(q2 > 0.0) {
            return Err(Error::DegenerateQuadraticForm(q2));
        }
        Ok(Self {
            model,
            theta: theta.clone(),
            y: y_t.to_vec(),
            chol,
            white_h,
            gram,
            beta,
            white_resid,
            q2,
        })
    }

    /// Generalized least squares trend coefficients.
    pub fn beta(&self) -> &[f64] {
        self.beta.as_slice()
    }

    /// `(y - H beta)^T Sigma^{-1} (y - H beta)`.
    pub fn quad_form(&self) -> f64 {
        self.q2
    }

    pub fn theta(&self) -> &CorrelationLengths {
        &self.theta
    }

    pub fn predict(&self, x0: &[f64]) -> Result<StudentTPredictive> {
        check_point(self.model, x0)?;
        let dof = self.model.projection().dof();
        // the predictive is degenerate at design points; evaluating the
        // general formula there only returns rounding noise of order 1e-8
        if self.model.jitter() == 0.0 {
            if let Some(i) = self.model.design().points().position(|p| p == x0) {
                return Ok(StudentTPredictive {
                    dof,
                    location: self.y[i],
                    scale: 0.0,
                });
            }
        }
        let h0 = DVector::from_vec(self.model.basis().eval(x0));
        let a = solve_lower(
            &self.chol,
            &corr_cross(self.model.design(), x0, &self.theta)?,
        );
        let location = h0.dot(&self.beta) + a.dot(&self.white_resid);
        let u = h0 - self.white_h.transpose() * &a;
        let ginv_u = self.gram.solve(&u);
        let factor = 1.0 + self.model.jitter() - a.norm_squared() + u.dot(&ginv_u);
        let scale2 = self.q2 / dof as f64 * factor.max(0.0);
        Ok(StudentTPredictive {
            dof,
            location,
            scale: scale2.sqrt(),
        })
    }
}

/// Predictive law of the transformed output at `x0` for fixed `theta`, with
/// `beta` and `sigma2` integrated out under the prior `1 / sigma2`.
pub fn predictive_at(
    y_t: &[f64],
    model: &KrigingModel,
    theta: &CorrelationLengths,
    x0: &[f64],
) -> Result<StudentTPredictive> {
    GlsPredictor::new(y_t, model, theta)?.predict(x0)
}

/// The same law computed from the orthonormal bases `P` and `W` only, as an
/// independent check of [`predictive_at`].
pub fn predictive_at_projection(
    y_t: &[f64],
    model: &KrigingModel,
    theta: &CorrelationLengths,
    x0: &[f64],
) -> Result<StudentTPredictive> {
    check_point(model, x0)?;
    let proj = model.projection();
    let (p, w) = (proj.p_basis(), proj.w_basis());
    let y = DVector::from_column_slice(y_t);
    let sigma = model.correlation(theta)?;
    let s0 = corr_cross(model.design(), x0, theta)?;
    // trend row at x0 in the coordinates of P: k0 = R^{-T} h0 with H = P R
    let r = p.transpose() * model.h();
    let k0 = r
        .transpose()
        .lu()
        .solve(&DVector::from_vec(model.basis().eval(x0)))
        .ok_or_else(|| Error::RankDeficient {
            basis: model.basis().name().into(),
            detail: "P^T H is singular".into(),
        })?;
    let pk0 = p * &k0;
    let e0 = pk0.dot(&y);
    let s_row = sigma.transpose() * &pk0 - &s0;
    let s00 = pk0.dot(&(&sigma * &pk0)) - 2.0 * pk0.dot(&s0) + 1.0 + model.jitter();
    let m = cholesky(proj.project_sym(&sigma))?;
    let wy = proj.project_vec(y_t);
    let ws = w.transpose() * &s_row;
    let m_wy = m.solve(&wy);
    let q2 = wy.dot(&m_wy);
    let dof = proj.dof();
    let location = e0 - ws.dot(&m_wy);
    let factor = s00 - ws.dot(&m.solve(&ws));
    Ok(StudentTPredictive {
        dof,
        location,
        scale: (q2 / dof as f64 * factor.max(0.0)).sqrt(),
    })
}

/// Equal-weight mixture of per-draw predictive laws at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveMixture {
    pub components: Vec<StudentTPredictive>,
    pub alpha: f64,
}

impl PredictiveMixture {
    pub fn mean_location(&self) -> f64 {
        self.components.iter().map(|c| c.location).sum::<f64>() / self.components.len() as f64
    }
}

/// Per-draw predictors on `g_alpha(z)`, reusable across prediction points.
#[derive(Debug, Clone)]
pub struct MixturePredictor<'a> {
    alpha: f64,
    predictors: Vec<GlsPredictor<'a>>,
}

impl<'a> MixturePredictor<'a> {
    /// Ill-conditioned draws are skipped; more than
    /// [`MAX_SKIPPED_FRACTION`] of them is an error.
    pub fn new(z: &[f64], alpha: f64, draws: &ThetaDraws, model: &'a KrigingModel) -> Result<Self> {
        Self::from_thetas(z, alpha, &draws.draws, model)
    }

    pub fn from_thetas(
        z: &[f64],
        alpha: f64,
        thetas: &[CorrelationLengths],
        model: &'a KrigingModel,
    ) -> Result<Self> {
        if thetas.is_empty() {
            return Err(Error::InsufficientPoints { needed: 1, got: 0 });
        }
        let y_t = transform_obs(alpha, z)?.values;
        let mut predictors = Vec::with_capacity(thetas.len());
        let mut skipped = 0;
        for theta in thetas {
            match GlsPredictor::new(&y_t, model, theta) {
                Ok(p) => predictors.push(p),
                Err(Error::IllConditioned { .. }) => skipped += 1,
                Err(e) => return Err(e),
            }
        }
        let total = thetas.len();
        if skipped > 0 {
            warn!(
                "prediction at alpha = {alpha}: skipped {skipped} of {total} ill-conditioned draws"
            );
        }
        if skipped as f64 > MAX_SKIPPED_FRACTION * total as f64 {
            return Err(Error::TooManySkipped { skipped, total });
        }
        Ok(Self { alpha, predictors })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Number of input coordinates.
    pub fn dim(&self) -> usize {
        self.predictors.first().map_or(0, |p| p.model.r())
    }

    pub fn len(&self) -> usize {
        self.predictors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.predictors.is_empty()
    }

    pub fn predict(&self, x0: &[f64]) -> Result<PredictiveMixture> {
        Ok(PredictiveMixture {
            components: self
                .predictors
                .iter()
                .map(|p| p.predict(x0))
                .collect::<Result<_>>()?,
            alpha: self.alpha,
        })
    }
}

/// One predictive law per posterior draw of `theta`, equally weighted.
pub fn predictive_mixture(
    z: &[f64],
    alpha: f64,
    draws: &ThetaDraws,
    model: &KrigingModel,
    x0: &[f64],
) -> Result<PredictiveMixture> {
    MixturePredictor::new(z, alpha, draws, model)?.predict(x0)
}

/// Probability that the raw output exceeds `s`, averaged over the mixture.
pub fn safe_prob(mixture: &PredictiveMixture, s: f64, normal_approx: bool) -> Result<f64> {
    if !(s > 0.0) {
        return Err(Error::Domain(format!(
            "threshold must be positive, got {s}"
        )));
    }
    if mixture.components.is_empty() {
        return Err(Error::InsufficientPoints { needed: 1, got: 0 });
    }
    let c = c_eval(mixture.alpha, s)?;
    let mut total = 0.0;
    for comp in &mixture.components {
        total += comp.survival(c, normal_approx)?;
    }
    Ok((total / mixture.components.len() as f64).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::TrendBasis;
    use crate::likelihood::log_lik_integrated;
    use crate::testutil::random_design;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Gamma, StandardNormal};

    fn th(v: &[f64]) -> CorrelationLengths {
        CorrelationLengths::new(v.to_vec()).unwrap()
    }

    fn setup(
        seed: u64,
        n: usize,
        r: usize,
        basis: TrendBasis,
    ) -> (KrigingModel, Vec<f64>, CorrelationLengths) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = KrigingModel::new(random_design(n, r, &mut rng), basis).unwrap();
        let y = (0..n)
            .map(|i| (4.0 * m.design().point(i)[0]).sin() + 0.3 * rng.gen::<f64>())
            .collect();
        let theta = th(&(0..r).map(|_| rng.gen_range(0.1..0.8)).collect::<Vec<_>>());
        (m, y, theta)
    }

    #[test]
    fn survival_examples() {
        for dof in [1, 3, 50, 400] {
            assert_eq!(student_t_survival(dof, 0.0, false).unwrap(), 0.5);
        }
        assert_relative_eq!(
            student_t_survival(1, 1.0, false).unwrap(),
            0.25,
            epsilon = 1e-15
        );
        // scipy.stats.t.sf(2.015, 5)
        assert_relative_eq!(
            student_t_survival(5, 2.015, false).unwrap(),
            0.050_003_086_163_403_127,
            epsilon = 1e-14
        );
        assert!(student_t_survival(0, 1.0, false).is_err());
        // scipy.stats.t.sf(1e-9, 4)
        assert_relative_eq!(
            0.5 - student_t_survival(4, 1e-9, false).unwrap(),
            3.75e-10,
            max_relative = 1e-6
        );
        // continuity across the series switch
        let below = student_t_survival(3, 0.999_999e-4, false).unwrap();
        let above = student_t_survival(3, 1.000_001e-4, false).unwrap();
        assert!(below > above && below - above < 1e-9);
    }

    #[test]
    fn normal_approximation_only_when_requested() {
        let exact = student_t_survival(300, 1.5, false).unwrap();
        let approx = student_t_survival(300, 1.5, true).unwrap();
        assert_ne!(exact, approx);
        assert!((exact - approx).abs() < 1e-3);
        assert_eq!(
            student_t_survival(100, 1.5, true).unwrap(),
            student_t_survival(100, 1.5, false).unwrap()
        );
    }

    #[test]
    fn quantile_inverts_survival() {
        for dof in [1, 4, 30] {
            for p in [0.05, 0.5, 0.95, 0.999] {
                let q = student_t_quantile(dof, p).unwrap();
                assert_relative_eq!(
                    1.0 - student_t_survival(dof, q, false).unwrap(),
                    p,
                    epsilon = 1e-12
                );
            }
        }
    }

    #[test]
    fn interpolates_design_points() {
        for seed in 0..20 {
            let (m, y, theta) = setup(seed, 15, 2, TrendBasis::AffineA);
            let pred = GlsPredictor::new(&y, &m, &theta).unwrap();
            for (i, yi) in y.iter().enumerate() {
                let p = pred.predict(m.design().point(i)).unwrap();
                assert!((p.location - yi).abs() < 1e-8);
                assert!(p.scale < 1e-8, "scale {}", p.scale);
                // the general formula is continuous into the design point
                let mut near = m.design().point(i).to_vec();
                near[0] = if near[0] > 0.5 {
                    near[0] - 1e-9
                } else {
                    near[0] + 1e-9
                };
                let q = pred.predict(&near).unwrap();
                assert!((q.location - yi).abs() < 1e-6);
                assert!(q.scale < 1e-6, "scale {}", q.scale);
            }
        }
    }

    #[test]
    fn quadratic_form_matches_projection() {
        for seed in 0..10 {
            let (m, y, theta) = setup(seed, 25, 3, TrendBasis::FullAffine);
            let pred = GlsPredictor::new(&y, &m, &theta).unwrap();
            let proj = m.projection();
            let chol = cholesky(proj.project_sym(&m.correlation(&theta).unwrap())).unwrap();
            let q = crate::linalg::inv_quad(&chol, &proj.project_vec(&y));
            assert_relative_eq!(pred.quad_form(), q, max_relative = 1e-9);
        }
    }

    #[test]
    fn projection_route_agrees() {
        for seed in 0..10 {
            let (m, y, theta) = setup(seed, 18, 2, TrendBasis::AffineA);
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
            for _ in 0..5 {
                let x0 = [rng.gen(), rng.gen()];
                let a = predictive_at(&y, &m, &theta, &x0).unwrap();
                let b = predictive_at_projection(&y, &m, &theta, &x0).unwrap();
                assert_eq!(a.dof, b.dof);
                assert_relative_eq!(a.location, b.location, epsilon = 1e-8, max_relative = 1e-8);
                assert_relative_eq!(a.scale, b.scale, epsilon = 1e-8, max_relative = 1e-7);
            }
        }
    }

    #[test]
    fn independent_limit() {
        let (m, y, _) = setup(3, 12, 2, TrendBasis::Constant);
        let theta = th(&[1e-4, 1e-4]);
        let n = m.n() as f64;
        let mean = y.iter().sum::<f64>() / n;
        let q2: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
        let p = predictive_at(&y, &m, &theta, &[0.123_456, 0.654_321]).unwrap();
        assert_relative_eq!(p.location, mean, epsilon = 1e-12);
        assert_relative_eq!(
            p.scale * p.scale,
            q2 / (n - 1.0) * (1.0 + 1.0 / n),
            max_relative = 1e-10
        );
    }

    #[test]
    fn rejects_points_outside_cube() {
        let (m, y, theta) = setup(1, 10, 2, TrendBasis::AffineA);
        assert!(matches!(
            predictive_at(&y, &m, &theta, &[1.01, 0.5]),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            predictive_at(&y, &m, &theta, &[0.5]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    /// sigma2 from its inverse-gamma posterior, beta given sigma2, then Y0
    /// given both, all with dense textbook formulas.
    fn hierarchical_draws(
        m: &KrigingModel,
        y: &[f64],
        theta: &CorrelationLengths,
        x0: &[f64],
        count: usize,
        seed: u64,
    ) -> Vec<f64> {
        let (n, p) = (m.n(), m.p());
        let h = m.h();
        let sigma = m.correlation(theta).unwrap();
        let sinv = sigma.clone().try_inverse().unwrap();
        let yv = DVector::from_column_slice(y);
        let g = h.transpose() * &sinv * h;
        let ginv = g.clone().try_inverse().unwrap();
        let beta_hat = &ginv * h.transpose() * &sinv * &yv;
        let resid = &yv - h * &beta_hat;
        let q2 = (resid.transpose() * &sinv * &resid)[0];
        let lg = ginv.cholesky().unwrap().l();
        let s0 = corr_cross(m.design(), x0, theta).unwrap();
        let h0 = DVector::from_vec(m.basis().eval(x0));
        let kw = &sinv * &s0;
        let cond_var = 1.0 - s0.dot(&kw);
        let shape = Gamma::new(0.5 * (n - p) as f64, 2.0 / q2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|_| {
                let sigma2 = 1.0 / shape.sample(&mut rng);
                let e = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
                let beta = &beta_hat + sigma2.sqrt() * (&lg * e);
                let mean = h0.dot(&beta) + kw.dot(&(&yv - h * &beta));
                mean + (sigma2 * cond_var).sqrt() * rng.sample::<f64, _>(StandardNormal)
            })
            .collect()
    }

    #[test]
    fn matches_hierarchical_sampling() {
        let (m, y, theta) = setup(5, 12, 2, TrendBasis::AffineA);
        let x0 = [0.37, 0.81];
        let pred = predictive_at(&y, &m, &theta, &x0).unwrap();
        let mut draws = hierarchical_draws(&m, &y, &theta, &x0, 40_000, 9);
        draws.sort_by(f64::total_cmp);
        let k = draws.len() as f64;
        let ks = draws
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let f = pred.cdf(*v).unwrap();
                (f - i as f64 / k).abs().max((f - (i + 1) as f64 / k).abs())
            })
            .fold(0.0, f64::max);
        assert!(ks < 0.02, "KS distance {ks}");
    }

    fn mixture_of(
        z: &[f64],
        alpha: f64,
        thetas: Vec<CorrelationLengths>,
        m: &KrigingModel,
        x0: &[f64],
    ) -> PredictiveMixture {
        MixturePredictor::from_thetas(z, alpha, &thetas, m)
            .unwrap()
            .predict(x0)
            .unwrap()
    }

    #[test]
    fn mixture_examples() {
        let (m, y, theta) = setup(2, 14, 2, TrendBasis::AffineA);
        let z: Vec<f64> = y.iter().map(|v| v.exp()).collect();
        let alpha = 0.4;
        let x0 = [0.2, 0.9];
        let single = mixture_of(&z, alpha, vec![theta.clone()], &m, &x0);
        let y_t = transform_obs(alpha, &z).unwrap().values;
        assert_eq!(
            single.components,
            vec![predictive_at(&y_t, &m, &theta, &x0).unwrap()]
        );

        let same = mixture_of(&z, alpha, vec![theta.clone(); 4], &m, &x0);
        assert!(same.components.iter().all(|c| *c == same.components[0]));

        let thetas = vec![th(&[0.1, 0.2]), th(&[0.5, 0.3]), th(&[1.2, 0.9])];
        let at = mixture_of(&z, alpha, thetas, &m, m.design().point(4));
        assert_relative_eq!(at.mean_location(), y_t[4], epsilon = 1e-8);
    }

    #[test]
    fn skip_policy() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = KrigingModel::new(random_design(40, 1, &mut rng), TrendBasis::Constant).unwrap();
        let z: Vec<f64> = (0..40).map(|_| rng.gen_range(1.0..2.0)).collect();
        // long correlation lengths make Sigma numerically singular
        let bad = th(&[1e4]);
        let good = th(&[0.05]);
        let mut thetas = vec![good.clone(); 9];
        thetas.push(bad.clone());
        assert_eq!(
            MixturePredictor::from_thetas(&z, 0.5, &thetas, &m)
                .unwrap()
                .len(),
            9
        );
        let thetas = vec![good, bad.clone(), bad];
        assert!(matches!(
            MixturePredictor::from_thetas(&z, 0.5, &thetas, &m),
            Err(Error::TooManySkipped {
                skipped: 2,
                total: 3
            })
        ));
    }

    #[test]
    fn safe_prob_examples() {
        let alpha = 0.3;
        let far = PredictiveMixture {
            components: vec![StudentTPredictive {
                dof: 98,
                location: 10.0,
                scale: 0.1,
            }],
            alpha,
        };
        let s = 1.0;
        assert!(c_eval(alpha, s).unwrap() <= 10.0 - 40.0 * 0.1);
        assert_relative_eq!(safe_prob(&far, s, false).unwrap(), 1.0, epsilon = 1e-12);

        let c = c_eval(alpha, 3.0).unwrap();
        let centered = PredictiveMixture {
            components: vec![StudentTPredictive {
                dof: 7,
                location: c,
                scale: 0.4,
            }],
            alpha,
        };
        assert_relative_eq!(
            safe_prob(&centered, 3.0, false).unwrap(),
            0.5,
            epsilon = 1e-15
        );
        assert!(safe_prob(&centered, 0.0, false).is_err());
    }

    #[test]
    fn safe_at_design_point_above_threshold() {
        let (m, y, theta) = setup(4, 12, 2, TrendBasis::AffineA);
        let z: Vec<f64> = y.iter().map(|v| 2.0 + v).collect();
        let i = (0..12).max_by(|a, b| z[*a].total_cmp(&z[*b])).unwrap();
        let mix = mixture_of(&z, 0.5, vec![theta], &m, m.design().point(i));
        assert_relative_eq!(
            safe_prob(&mix, 0.9 * z[i], false).unwrap(),
            1.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn safe_prob_of_degenerate_component() {
        let mix = PredictiveMixture {
            components: vec![
                StudentTPredictive {
                    dof: 3,
                    location: 1.0,
                    scale: 0.0,
                },
                StudentTPredictive {
                    dof: 3,
                    location: -1.0,
                    scale: 0.0,
                },
            ],
            alpha: 0.5,
        };
        assert_eq!(safe_prob(&mix, 1.0, false).unwrap(), 0.5);
    }

    #[test]
    fn likelihood_and_predictor_share_the_quadratic_form() {
        // L^1 depends on the data only through q2 for fixed theta
        let (m, y, theta) = setup(8, 16, 2, TrendBasis::AffineA);
        let pred = GlsPredictor::new(&y, &m, &theta).unwrap();
        let y2: Vec<f64> = y.iter().map(|v| 2.0 * v).collect();
        let pred2 = GlsPredictor::new(&y2, &m, &theta).unwrap();
        assert_relative_eq!(
            pred2.quad_form(),
            4.0 * pred.quad_form(),
            max_relative = 1e-12
        );
        let k = 0.5 * (m.n() - m.p()) as f64;
        assert_relative_eq!(
            log_lik_integrated(&y, &theta, &m).unwrap()
                - log_lik_integrated(&y2, &theta, &m).unwrap(),
            k * 4f64.ln(),
            epsilon = 1e-9
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn safe_prob_nonincreasing_in_threshold(seed in 0u64..1000, alpha in 0.0f64..1.0) {
            let (m, y, theta) = setup(seed, 10, 2, TrendBasis::AffineA);
            let z: Vec<f64> = y.iter().map(|v| v.exp()).collect();
            let mix = mixture_of(&z, alpha, vec![theta.clone(), th(&[0.3, 0.3])], &m, &[0.5, 0.5]);
            let mut prev = 1.0;
            for k in 1..60 {
                let s = 0.05 * k as f64;
                let v = safe_prob(&mix, s, false).unwrap();
                prop_assert!((0.0..=1.0).contains(&v));
                prop_assert!(v <= prev + 1e-15);
                prev = v;
            }
        }
    }
}
