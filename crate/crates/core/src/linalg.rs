use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

pub(crate) type Chol = Cholesky<f64, Dyn>;

/// Cholesky factorization; on failure reports the first nonpositive pivot.
pub(crate) fn cholesky(a: DMatrix<f64>) -> Result<Chol> {
    match a.clone().cholesky() {
        Some(c)
            if c.l_dirty()
                .diagonal()
                .iter()
                .all(|d| *d > 0.0 && d.is_finite()) =>
        {
            Ok(c)
        }
        _ => Err(Error::IllConditioned {
            min_pivot: min_pivot(&a),
        }),
    }
}

fn min_pivot(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut l = DMatrix::<f64>::zeros(n, n);
    let mut min = f64::INFINITY;
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        min = min.min(d);
        if !(d > 0.0) {
            return d;
        }
        let ljj = d.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    min
}

pub(crate) fn log_det(chol: &Chol) -> f64 {
    2.0 * chol
        .l_dirty()
        .diagonal()
        .iter()
        .map(|d| d.ln())
        .sum::<f64>()
}

/// `|L^{-1} v|^2 = v^T A^{-1} v`.
pub(crate) fn inv_quad(chol: &Chol, v: &DVector<f64>) -> f64 {
    let x = chol
        .l_dirty()
        .solve_lower_triangular(v)
        .expect("Cholesky factor has a positive diagonal");
    x.norm_squared()
}

pub(crate) fn solve_lower(chol: &Chol, v: &DVector<f64>) -> DVector<f64> {
    chol.l_dirty()
        .solve_lower_triangular(v)
        .expect("Cholesky factor has a positive diagonal")
}

pub(crate) fn solve_lower_mat(chol: &Chol, m: &DMatrix<f64>) -> DMatrix<f64> {
    chol.l_dirty()
        .solve_lower_triangular(m)
        .expect("Cholesky factor has a positive diagonal")
}

/// `A^{-1}` from the Cholesky factor, as `L^{-T} L^{-1}`.
pub(crate) fn spd_inverse(chol: &Chol) -> DMatrix<f64> {
    let l = chol.l_dirty();
    let n = l.nrows();
    let ls = l.as_slice();
    // column j of L^{-1} by forward substitution, walking columns of L
    let mut linv = DMatrix::<f64>::zeros(n, n);
    for (j, x) in linv.as_mut_slice().chunks_exact_mut(n).enumerate() {
        x[j] = 1.0;
        for k in j..n {
            let lk = &ls[k * n..(k + 1) * n];
            let xk = x[k] / lk[k];
            x[k] = xk;
            for (xi, li) in x[k + 1..].iter_mut().zip(&lk[k + 1..]) {
                *xi -= li * xk;
            }
        }
    }
    linv.transpose() * &linv
}
