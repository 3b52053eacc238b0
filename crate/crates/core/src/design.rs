//! Design sets, trend bases and the two orthonormal bases derived from the
//! trend matrix `H`: `P` spanning its columns and `W` spanning the
//! orthogonal complement.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `n` distinct points in the unit cube `[0,1]^r`. Coordinate 0 is the
/// parameter of interest (defect depth `a`).
#[derive(Debug, Clone, PartialEq)]
pub struct DesignSet {
    data: Vec<f64>,
    n: usize,
    r: usize,
}

impl DesignSet {
    pub fn new(points: Vec<Vec<f64>>) -> Result<Self> {
        let n = points.len();
        if n == 0 {
            return Err(Error::InvalidDesign("design set is empty".into()));
        }
        let r = points[0].len();
        if r == 0 {
            return Err(Error::InvalidDesign("points have no coordinates".into()));
        }
        let mut data = Vec::with_capacity(n * r);
        for (i, p) in points.iter().enumerate() {
            if p.len() != r {
                return Err(Error::DimensionMismatch {
                    expected: r,
                    got: p.len(),
                });
            }
            if let Some(c) = p.iter().find(|c| !(0.0..=1.0).contains(*c)) {
                return Err(Error::InvalidDesign(format!(
                    "point {i} has coordinate {c} outside [0,1]"
                )));
            }
            data.extend_from_slice(p);
        }
        let design = Self { data, n, r };
        design.check_distinct()?;
        Ok(design)
    }

    fn check_distinct(&self) -> Result<()> {
        let mut order: Vec<usize> = (0..self.n).collect();
        order.sort_by(|&i, &j| {
            self.point(i)
                .iter()
                .zip(self.point(j))
                .map(|(a, b)| a.total_cmp(b))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        for w in order.windows(2) {
            if self.point(w[0]) == self.point(w[1]) {
                return Err(Error::InvalidDesign(format!(
                    "points {} and {} are identical",
                    w[0].min(w[1]),
                    w[0].max(w[1])
                )));
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.r..(i + 1) * self.r]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.r)
    }

    /// Keeps the rows selected by `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        Self::new(indices.iter().map(|&i| self.point(i).to_vec()).collect())
    }
}

/// Polynomial trend spaces supported by the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TrendBasis {
    /// `{1}`
    Constant,
    /// `{1, a}`: affine in the parameter of interest.
    #[default]
    AffineA,
    /// `{1, x_1, ..., x_r}`
    FullAffine,
}

impl TrendBasis {
    pub fn name(&self) -> &'static str {
        match self {
            TrendBasis::Constant => "constant",
            TrendBasis::AffineA => "affine_a",
            TrendBasis::FullAffine => "full_affine",
        }
    }

    pub fn dim(&self, r: usize) -> usize {
        match self {
            TrendBasis::Constant => 1,
            TrendBasis::AffineA => 2,
            TrendBasis::FullAffine => r + 1,
        }
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut row = Vec::with_capacity(self.dim(x.len()));
        self.eval_into(x, &mut row);
        row
    }

    fn eval_into(&self, x: &[f64], row: &mut Vec<f64>) {
        row.push(1.0);
        match self {
            TrendBasis::Constant => {}
            TrendBasis::AffineA => row.push(x[0]),
            TrendBasis::FullAffine => row.extend_from_slice(x),
        }
    }
}

/// The `n x p` matrix `H[i][j] = f_j(x_i)`, checked for full column rank.
pub fn build_h(design: &DesignSet, basis: TrendBasis) -> Result<DMatrix<f64>> {
    let n = design.n();
    let p = basis.dim(design.r());
    if p >= n {
        return Err(Error::RankDeficient {
            basis: basis.name().into(),
            detail: format!("p = {p} basis functions need more than {n} points"),
        });
    }
    let mut h = DMatrix::zeros(n, p);
    let mut row = Vec::with_capacity(p);
    for (i, x) in design.points().enumerate() {
        row.clear();
        basis.eval_into(x, &mut row);
        for (j, v) in row.iter().enumerate() {
            h[(i, j)] = *v;
        }
    }
    let sv = h.clone().svd(false, false).singular_values;
    let max = sv.max();
    let min = sv.min();
    if !(min > 1e-10 * max) {
        return Err(Error::RankDeficient {
            basis: basis.name().into(),
            detail: format!("singular values span [{min:e}, {max:e}]"),
        });
    }
    Ok(h)
}

fn flip_to_first_positive(col: &mut [f64]) -> f64 {
    let scale = col.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let first = col.iter().find(|v| v.abs() > 1e-12 * scale).copied();
    if first.is_some_and(|v| v < 0.0) {
        col.iter_mut().for_each(|v| *v = -*v);
        -1.0
    } else {
        1.0
    }
}

/// Orthonormal basis of the column space of `H` by classical Gram-Schmidt
/// with one reorthogonalization pass.
pub fn orthonormalize(h: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (n, p) = h.shape();
    let scale = h.norm().max(f64::MIN_POSITIVE);
    let mut q = DMatrix::zeros(n, p);
    for j in 0..p {
        let mut v: DVector<f64> = h.column(j).into_owned();
        for _ in 0..2 {
            let coeffs = q.columns(0, j).transpose() * &v;
            v -= q.columns(0, j) * coeffs;
        }
        let norm = v.norm();
        if !(norm > 1e-10 * scale) {
            return Err(Error::RankDeficient {
                basis: format!("column {j}"),
                detail: "linearly dependent on previous columns".into(),
            });
        }
        v /= norm;
        flip_to_first_positive(v.as_mut_slice());
        q.set_column(j, &v);
    }
    Ok(q)
}

#[derive(Debug, Clone)]
struct Reflector {
    start: usize,
    v: Vec<f64>,
    beta: f64,
}

/// `P` (`n x p`, spans `col(H)`) and `W` (`n x (n-p)`, `W^T H = 0`,
/// `W^T W = I`).
///
/// When built by [`ProjectionPair::new`], `W` is the trailing block of the
/// Householder `Q` of `H`, and projections `W^T A W` are applied through the
/// `p` reflectors in `O(n^2 p)` rather than by dense products.
#[derive(Debug, Clone)]
pub struct ProjectionPair {
    p: DMatrix<f64>,
    w: DMatrix<f64>,
    reflectors: Option<(Vec<Reflector>, Vec<f64>)>,
}

impl ProjectionPair {
    pub fn new(h: &DMatrix<f64>) -> Result<Self> {
        let p = orthonormalize(h)?;
        let (w, reflectors, signs) = householder_null_space(h)?;
        Ok(Self {
            p,
            w,
            reflectors: Some((reflectors, signs)),
        })
    }

    /// Builds a pair from an explicit null-space basis, which must satisfy
    /// `W^T H = 0` and `W^T W = I`.
    pub fn from_parts(h: &DMatrix<f64>, w: DMatrix<f64>) -> Result<Self> {
        let (n, p) = h.shape();
        if w.nrows() != n || w.ncols() != n - p {
            return Err(Error::DimensionMismatch {
                expected: n - p,
                got: w.ncols(),
            });
        }
        let scale = h.norm();
        let wth = (w.transpose() * h).abs().max();
        let wtw = (w.transpose() * &w - DMatrix::identity(n - p, n - p))
            .abs()
            .max();
        if wth > 1e-10 * scale.max(1.0) || wtw > 1e-10 {
            return Err(Error::Domain(format!(
                "not an orthonormal null-space basis (|W'H| = {wth:e}, |W'W - I| = {wtw:e})"
            )));
        }
        Ok(Self {
            p: orthonormalize(h)?,
            w,
            reflectors: None,
        })
    }

    /// Same subspace, basis `W Q` for an orthogonal `Q`.
    pub fn rotated(&self, q: &DMatrix<f64>) -> Self {
        Self {
            p: self.p.clone(),
            w: &self.w * q,
            reflectors: None,
        }
    }

    pub fn p_basis(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn w_basis(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn n(&self) -> usize {
        self.w.nrows()
    }

    /// `n - p`, the number of error contrasts.
    pub fn dof(&self) -> usize {
        self.w.ncols()
    }

    /// `W^T y`.
    pub fn project_vec(&self, y: &[f64]) -> DVector<f64> {
        match &self.reflectors {
            Some((refl, signs)) => {
                let mut x = y.to_vec();
                for rf in refl {
                    let s = &mut x[rf.start..];
                    let dot: f64 = rf.v.iter().zip(s.iter()).map(|(a, b)| a * b).sum();
                    let c = rf.beta * dot;
                    s.iter_mut().zip(&rf.v).for_each(|(si, vi)| *si -= c * vi);
                }
                let p = refl.len();
                DVector::from_iterator(signs.len(), x[p..].iter().zip(signs).map(|(v, s)| v * s))
            }
            None => self.w.tr_mul(&DVector::from_column_slice(y)),
        }
    }

    /// `W^T A W` for symmetric `A`.
    pub fn project_sym(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        match &self.reflectors {
            Some((refl, signs)) => {
                let mut a = a.clone();
                let n = a.nrows();
                let mut w = vec![0.0; n];
                for rf in refl {
                    let j = rf.start;
                    // w = beta * A v on the trailing block (A symmetric)
                    for (row, wr) in w.iter_mut().enumerate().skip(j) {
                        let col = a.column(row);
                        let acc: f64 =
                            rf.v.iter()
                                .zip(&col.as_slice()[j..])
                                .map(|(x, y)| x * y)
                                .sum();
                        *wr = rf.beta * acc;
                    }
                    let vw: f64 = rf.v.iter().zip(&w[j..]).map(|(a, b)| a * b).sum();
                    let c = 0.5 * rf.beta * vw;
                    for (k, wk) in w[j..].iter_mut().enumerate() {
                        *wk -= c * rf.v[k];
                    }
                    // A <- A - v u' - u v' on the trailing block; rows and
                    // columns before `j` never feed the final block.
                    for col in j..n {
                        let vc = rf.v[col - j];
                        let uc = w[col];
                        let column = &mut a.column_mut(col);
                        let column = &mut column.as_mut_slice()[j..];
                        for (row, entry) in column.iter_mut().enumerate() {
                            *entry -= rf.v[row] * uc + w[j + row] * vc;
                        }
                    }
                }
                let p = refl.len();
                let m = n - p;
                DMatrix::from_fn(m, m, |r, c| a[(p + r, p + c)] * signs[r] * signs[c])
            }
            None => {
                let aw = a * &self.w;
                self.w.tr_mul(&aw)
            }
        }
    }
}

/// Null space of `H` as the trailing `n - p` columns of its full Householder
/// `Q`. Each column is a left singular vector of `H` for the (repeated) zero
/// singular value. Columns are signed so their first nonzero entry is
/// positive.
fn householder_null_space(h: &DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<Reflector>, Vec<f64>)> {
    let (n, p) = h.shape();
    if p >= n {
        return Err(Error::RankDeficient {
            basis: format!("{p} columns"),
            detail: format!("no null space with only {n} rows"),
        });
    }
    let scale = h.norm().max(f64::MIN_POSITIVE);
    let mut a = h.clone();
    let mut refl = Vec::with_capacity(p);
    for j in 0..p {
        let x: Vec<f64> = (j..n).map(|i| a[(i, j)]).collect();
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm > 1e-10 * scale) {
            return Err(Error::RankDeficient {
                basis: format!("column {j}"),
                detail: "linearly dependent on previous columns".into(),
            });
        }
        let mut v = x;
        let alpha = if v[0] >= 0.0 { norm } else { -norm };
        v[0] += alpha;
        let beta = 2.0 / v.iter().map(|t| t * t).sum::<f64>();
        for col in j..p {
            let dot: f64 = (j..n).map(|i| v[i - j] * a[(i, col)]).sum();
            let c = beta * dot;
            for i in j..n {
                a[(i, col)] -= c * v[i - j];
            }
        }
        refl.push(Reflector { start: j, v, beta });
    }
    // Q e_k for k >= p: apply H_p ... H_1 in reverse to unit vectors.
    let m = n - p;
    let mut w = DMatrix::zeros(n, m);
    let mut signs = Vec::with_capacity(m);
    for c in 0..m {
        let mut e = vec![0.0; n];
        e[p + c] = 1.0;
        for rf in refl.iter().rev() {
            let s = &mut e[rf.start..];
            let dot: f64 = rf.v.iter().zip(s.iter()).map(|(a, b)| a * b).sum();
            let k = rf.beta * dot;
            s.iter_mut().zip(&rf.v).for_each(|(si, vi)| *si -= k * vi);
        }
        signs.push(flip_to_first_positive(&mut e));
        w.set_column(c, &DVector::from_vec(e));
    }
    Ok((w, refl, signs))
}

/// Null-space basis `W` of `H`.
pub fn null_space(h: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Ok(householder_null_space(h)?.0)
}
