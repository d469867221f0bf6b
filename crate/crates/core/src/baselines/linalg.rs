use nalgebra::{DMatrix, DVector};

use super::BaselineError;

/// Relative threshold on `|R_ii|` below which a design counts as rank-deficient.
const RANK_TOL: f64 = 1e-10;
/// Ridge strength used when an unpenalised design is rank-deficient.
pub const FALLBACK_RIDGE: f64 = 1e-8;

/// Least squares `min ‖Xβ − Y‖² + μ‖Pβ‖²` via thin QR, one column of `Y`
/// per equation. `P` drops the first column when `free_first` is set so an
/// intercept stays unpenalised. A rank-deficient design with `μ = 0` is
/// retried with [`FALLBACK_RIDGE`] and a warning.
pub fn least_squares(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    ridge: f64,
    free_first: bool,
) -> Result<DMatrix<f64>, BaselineError> {
    if x.nrows() != y.nrows() {
        return Err(BaselineError::Misaligned(format!(
            "design has {} rows, targets {}",
            x.nrows(),
            y.nrows()
        )));
    }
    if x.ncols() == 0 || x.nrows() == 0 {
        return Err(BaselineError::TooShort { len: x.nrows(), needed: x.ncols().max(1) });
    }
    if !x.iter().chain(y.iter()).all(|v| v.is_finite()) {
        return Err(BaselineError::NonFinite);
    }
    match solve(x, y, ridge, free_first) {
        Some(beta) => Ok(beta),
        None if ridge == 0.0 => {
            log::warn!(
                "rank-deficient {}x{} design; using ridge {FALLBACK_RIDGE}",
                x.nrows(),
                x.ncols()
            );
            solve(x, y, FALLBACK_RIDGE, free_first).ok_or(BaselineError::Singular)
        }
        None => Err(BaselineError::Singular),
    }
}

fn solve(x: &DMatrix<f64>, y: &DMatrix<f64>, ridge: f64, free_first: bool) -> Option<DMatrix<f64>> {
    let (n, k) = x.shape();
    let (a, b) = if ridge > 0.0 {
        let skip = usize::from(free_first);
        let extra = k - skip;
        let mut a = DMatrix::zeros(n + extra, k);
        a.rows_mut(0, n).copy_from(x);
        let s = ridge.sqrt();
        for j in 0..extra {
            a[(n + j, skip + j)] = s;
        }
        let mut b = DMatrix::zeros(n + extra, y.ncols());
        b.rows_mut(0, n).copy_from(y);
        (a, b)
    } else {
        (x.clone(), y.clone())
    };
    if a.nrows() < k {
        return None;
    }
    let qr = a.qr();
    let r = qr.r();
    let scale = r.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 || r.diagonal().iter().any(|v| v.abs() <= RANK_TOL * scale) {
        return None;
    }
    let rhs = qr.q().transpose() * b;
    r.solve_upper_triangular(&rhs)
}

/// Single-equation convenience wrapper.
pub fn least_squares_vec(
    x: &DMatrix<f64>,
    y: &[f64],
    ridge: f64,
    free_first: bool,
) -> Result<Vec<f64>, BaselineError> {
    let y = DMatrix::from_column_slice(y.len(), 1, y);
    Ok(least_squares(x, &y, ridge, free_first)?.column(0).iter().copied().collect())
}

/// Residual sum of squares of `Xβ` against `y`.
pub fn residual_ss(x: &DMatrix<f64>, beta: &[f64], y: &[f64]) -> f64 {
    let fitted = x * DVector::from_column_slice(beta);
    fitted.iter().zip(y).map(|(f, v)| (f - v).powi(2)).sum()
}
