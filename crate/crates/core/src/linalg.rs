use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

pub(crate) fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Cholesky factorization with one regularization retry: on failure,
/// `1e-8 · trace/d` is added to the diagonal and the factorization repeated.
pub(crate) fn cholesky_reg(m: &DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    let sym = symmetrize(m);
    if let Some(c) = Cholesky::new(sym.clone()) {
        return Ok(c);
    }
    let d = sym.nrows().max(1) as f64;
    let ridge = 1e-8 * sym.trace() / d;
    let mut reg = sym;
    for i in 0..reg.nrows() {
        reg[(i, i)] += ridge;
    }
    Cholesky::new(reg).ok_or_else(|| Error::Singular(what.to_string()))
}

pub(crate) fn logdet(chol: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * chol.l_dirty().diagonal().iter().map(|x| x.ln()).sum::<f64>()
}

pub(crate) fn inverse(chol: &Cholesky<f64, Dyn>) -> DMatrix<f64> {
    symmetrize(&chol.inverse())
}

pub(crate) fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub(crate) fn from_rows(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != m) {
        return Err(Error::InvalidConfig(format!("{what}: ragged matrix rows")));
    }
    if rows.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::InvalidConfig(format!("{what}: non-finite entry")));
    }
    Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

pub(crate) fn outer(v: &DVector<f64>) -> DMatrix<f64> {
    v * v.transpose()
}
