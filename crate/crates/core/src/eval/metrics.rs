use serde::{Deserialize, Serialize};

use super::EvalError;

/// Truth values at or below this are excluded from MAPE.
pub const MAPE_EPSILON: f64 = 1e-6;

fn check_lengths(pred: &[f64], truth: &[f64]) -> Result<(), EvalError> {
    if pred.len() != truth.len() {
        return Err(EvalError::LengthMismatch {
            pred: pred.len(),
            truth: truth.len(),
        });
    }
    Ok(())
}

/// Mean absolute error.
pub fn mae(pred: &[f64], truth: &[f64]) -> Result<f64, EvalError> {
    check_lengths(pred, truth)?;
    if pred.is_empty() {
        return Err(EvalError::Empty);
    }
    Ok(pred.iter().zip(truth).map(|(p, t)| (p - t).abs()).sum::<f64>() / pred.len() as f64)
}

/// MAPE in percent with the number of excluded near-zero truth points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mape {
    /// `None` when every point was excluded.
    pub value: Option<f64>,
    pub excluded: usize,
}

/// `100 · mean(|p − t| / t)` over points with `t > ε`.
pub fn mape(pred: &[f64], truth: &[f64]) -> Result<Mape, EvalError> {
    check_lengths(pred, truth)?;
    let mut sum = 0.0;
    let mut used = 0usize;
    for (p, t) in pred.iter().zip(truth) {
        if *t > MAPE_EPSILON {
            sum += (p - t).abs() / t;
            used += 1;
        }
    }
    Ok(Mape {
        value: (used > 0).then(|| 100.0 * sum / used as f64),
        excluded: pred.len() - used,
    })
}

/// 1-based horizon positions: odd ones validate, even ones test.
pub fn odd_even_split(horizon: usize) -> Result<(Vec<usize>, Vec<usize>), EvalError> {
    if horizon < 2 {
        return Err(EvalError::HorizonTooShort(horizon));
    }
    Ok((1..=horizon).partition(|p| p % 2 == 1))
}
