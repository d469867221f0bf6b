use std::f64::consts::TAU;
use std::ops::Range;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::linalg::{least_squares_vec, residual_ss};
use super::BaselineError;

/// Regression bases over the absolute grid index `t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Basis {
    /// `{1, t}`
    Linear,
    /// `{1, sin(2πt/P), cos(2πt/P)}`
    Cyclic,
    /// `{1, t, sin(2πt/P), cos(2πt/P)}`
    GeoStyle,
}

impl Basis {
    pub fn size(self) -> usize {
        match self {
            Self::Linear => 2,
            Self::Cyclic => 3,
            Self::GeoStyle => 4,
        }
    }

    /// Basis function values at grid index `t`.
    pub fn row(self, t: usize, period: usize) -> Vec<f64> {
        let tf = t as f64;
        let w = TAU * tf / period as f64;
        match self {
            Self::Linear => vec![1.0, tf],
            Self::Cyclic => vec![1.0, w.sin(), w.cos()],
            Self::GeoStyle => vec![1.0, tf, w.sin(), w.cos()],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BasisFit {
    pub basis: Basis,
    pub period: usize,
    pub weights: Vec<f64>,
    pub residual_ss: f64,
}

impl BasisFit {
    pub fn eval(&self, t: usize) -> f64 {
        self.basis
            .row(t, self.period)
            .iter()
            .zip(&self.weights)
            .map(|(b, w)| b * w)
            .sum()
    }
}

/// Design matrix for grid indices `start..start + len`.
pub fn basis_design(basis: Basis, start: usize, len: usize, period: usize) -> DMatrix<f64> {
    let rows: Vec<f64> = (start..start + len).flat_map(|t| basis.row(t, period)).collect();
    DMatrix::from_row_slice(len, basis.size(), &rows)
}

/// Ordinary least squares of `input` (starting at grid index `start`) on
/// the basis; rank-deficient designs fall back to a tiny ridge.
pub fn basis_fit(
    input: &[f64],
    start: usize,
    basis: Basis,
    period: usize,
) -> Result<BasisFit, BaselineError> {
    if input.is_empty() {
        return Err(BaselineError::EmptyInput);
    }
    if input.len() < basis.size() {
        return Err(BaselineError::TooShort {
            len: input.len(),
            needed: basis.size(),
        });
    }
    if period == 0 {
        return Err(BaselineError::Misaligned("grid period must be positive".into()));
    }
    let x = basis_design(basis, start, input.len(), period);
    let weights = least_squares_vec(&x, input, 0.0, true)?;
    let residual_ss = residual_ss(&x, &weights, input);
    Ok(BasisFit {
        basis,
        period,
        weights,
        residual_ss,
    })
}

/// Evaluates the fitted function on the grid indices in `range`.
pub fn basis_forecast(fit: &BasisFit, range: Range<usize>) -> Vec<f64> {
    range.map(|t| fit.eval(t)).collect()
}
