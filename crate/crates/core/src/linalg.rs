//! Small dense helpers on top of nalgebra.

use alloc::format;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

pub(crate) type Mat = DMatrix<f64>;
pub(crate) type Vector = DVector<f64>;

pub(crate) fn cholesky(m: Mat, what: &str) -> Result<Cholesky<f64, Dyn>> {
    m.cholesky()
        .ok_or_else(|| Error::Singular(format!("{what} is not positive definite")))
}

pub(crate) fn chol_logdet(c: &Cholesky<f64, Dyn>) -> f64 {
    c.l_dirty()
        .diagonal()
        .iter()
        .map(|d| 2.0 * libm::log(*d))
        .sum()
}

/// Symmetric part of `m`, to wash out round-off asymmetry.
pub(crate) fn symmetrize(m: &mut Mat) {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}
