//! Classical comparison forecasters: Mean, Last, AR, VAR, ES, Linear,
//! Cyclic and GeoStyle. Every fit is closed-form least squares or a grid
//! search, and forecasts are raw (clamping happens in the harness).

mod autoreg;
mod basis;
mod es;
pub mod linalg;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use autoreg::{
    ar_fit, ar_forecast, ar_select, var_fit, var_forecast, var_select, ArFit, VarFit,
    DEFAULT_VAR_RIDGE, MAX_ORDER,
};
pub use basis::{basis_fit, basis_forecast, Basis, BasisFit};
pub use es::{es_fit, es_forecast, es_with_alpha, EsFit};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BaselineError {
    #[error("empty input")]
    EmptyInput,
    #[error("input of length {len} is too short (need {needed})")]
    TooShort { len: usize, needed: usize },
    #[error("misaligned inputs: {0}")]
    Misaligned(String),
    #[error("VAR needs at least two series")]
    SingleSeries,
    #[error("singular design matrix")]
    Singular,
    #[error("non-finite input")]
    NonFinite,
}

/// Forecasting methods in report order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    Mean,
    Last,
    Ar,
    Var,
    Es,
    Linear,
    Cyclic,
    GeoStyle,
    Kern,
}

impl Method {
    pub const ALL: [Method; 9] = [
        Method::Mean,
        Method::Last,
        Method::Ar,
        Method::Var,
        Method::Es,
        Method::Linear,
        Method::Cyclic,
        Method::GeoStyle,
        Method::Kern,
    ];

    pub const BASELINES: [Method; 8] = [
        Method::Mean,
        Method::Last,
        Method::Ar,
        Method::Var,
        Method::Es,
        Method::Linear,
        Method::Cyclic,
        Method::GeoStyle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Mean => "Mean",
            Self::Last => "Last",
            Self::Ar => "AR",
            Self::Var => "VAR",
            Self::Es => "ES",
            Self::Linear => "Linear",
            Self::Cyclic => "Cyclic",
            Self::GeoStyle => "GeoStyle",
            Self::Kern => "KERN",
        }
    }

    pub fn is_baseline(self) -> bool {
        self != Self::Kern
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown method `{s}`"))
    }
}

/// `T'` copies of the input mean.
pub fn mean_forecast(input: &[f64], horizon: usize) -> Result<Vec<f64>, BaselineError> {
    if input.is_empty() {
        return Err(BaselineError::EmptyInput);
    }
    Ok(vec![input.iter().sum::<f64>() / input.len() as f64; horizon])
}

/// `T'` copies of the last input value.
pub fn last_forecast(input: &[f64], horizon: usize) -> Result<Vec<f64>, BaselineError> {
    let last = *input.last().ok_or(BaselineError::EmptyInput)?;
    Ok(vec![last; horizon])
}

/// A fitted single-series forecaster and the window it was fitted on.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedForecaster {
    pub method: Method,
    pub model: FittedModel,
    /// Grid index of the first fitted point.
    pub fit_start: usize,
    pub fit_len: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FittedModel {
    Constant(f64),
    Ar { fit: ArFit, tail: Vec<f64> },
    Es(EsFit),
    Basis(BasisFit),
}

impl FittedForecaster {
    /// Fits any single-series method; VAR and KERN are fitted elsewhere.
    pub fn fit(
        method: Method,
        input: &[f64],
        start_index: usize,
        grid_period: usize,
        horizon: usize,
    ) -> Result<Self, BaselineError> {
        let model = match method {
            Method::Mean => FittedModel::Constant(mean_forecast(input, 1)?[0]),
            Method::Last => FittedModel::Constant(last_forecast(input, 1)?[0]),
            Method::Ar => {
                let fit = ar_select(input, horizon)?;
                let tail = input[input.len() - fit.order()..].to_vec();
                FittedModel::Ar { fit, tail }
            }
            Method::Es => FittedModel::Es(es_fit(input)?),
            Method::Linear => FittedModel::Basis(basis_fit(input, start_index, Basis::Linear, grid_period)?),
            Method::Cyclic => FittedModel::Basis(basis_fit(input, start_index, Basis::Cyclic, grid_period)?),
            Method::GeoStyle => {
                FittedModel::Basis(basis_fit(input, start_index, Basis::GeoStyle, grid_period)?)
            }
            Method::Var | Method::Kern => {
                return Err(BaselineError::Misaligned(format!(
                    "{method} is not a single-series method"
                )))
            }
        };
        Ok(Self {
            method,
            model,
            fit_start: start_index,
            fit_len: input.len(),
        })
    }

    /// Forecasts the `horizon` points following the fit window.
    pub fn forecast(&self, horizon: usize) -> Vec<f64> {
        match &self.model {
            FittedModel::Constant(c) => vec![*c; horizon],
            FittedModel::Ar { fit, tail } => ar_forecast(fit, tail, horizon),
            FittedModel::Es(fit) => es_forecast(fit, horizon),
            FittedModel::Basis(fit) => {
                let start = self.fit_start + self.fit_len;
                basis_forecast(fit, start..start + horizon)
            }
        }
    }
}

/// Clamps every value into `[0, 1]`.
pub fn clamp_unit(values: &mut [f64]) {
    for v in values {
        *v = v.clamp(0.0, 1.0);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_and_last_examples() {
        assert_eq!(mean_forecast(&[1.0, 2.0, 3.0], 2).unwrap(), vec![2.0, 2.0]);
        assert_eq!(mean_forecast(&[0.3; 5], 3).unwrap(), vec![0.3; 3]);
        assert_eq!(mean_forecast(&[0.7], 2).unwrap(), vec![0.7; 2]);
        assert_eq!(last_forecast(&[1.0, 2.0, 3.0], 2).unwrap(), vec![3.0, 3.0]);
        assert_eq!(last_forecast(&[0.2; 4], 3).unwrap(), vec![0.2; 3]);
        assert_eq!(last_forecast(&[0.1, 0.9], 1).unwrap(), vec![0.9]);
        assert_eq!(mean_forecast(&[], 2), Err(BaselineError::EmptyInput));
        assert_eq!(last_forecast(&[], 2), Err(BaselineError::EmptyInput));
    }

    #[test]
    fn method_names_parse_case_insensitively() {
        for m in Method::ALL {
            assert_eq!(m.name().to_lowercase().parse::<Method>().unwrap(), m);
        }
        assert!("arima".parse::<Method>().is_err());
        assert_eq!(Method::BASELINES.len(), 8);
    }

    #[test]
    fn fitted_forecasters_on_constant_series() {
        let input = vec![0.35; 30];
        for m in Method::BASELINES.into_iter().filter(|&m| m != Method::Var) {
            let f = FittedForecaster::fit(m, &input, 5, 24, 6).unwrap();
            for v in f.forecast(6) {
                assert!((v - 0.35).abs() < 1e-8, "{m}: {v}");
            }
        }
        assert!(FittedForecaster::fit(Method::Var, &input, 0, 24, 6).is_err());
    }

    #[test]
    fn clamping() {
        let mut v = vec![-0.2, 0.5, 1.7];
        clamp_unit(&mut v);
        assert_eq!(v, vec![0.0, 0.5, 1.0]);
    }
}
