use super::BaselineError;

/// Simple exponential smoothing state after the last observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EsFit {
    pub alpha: f64,
    /// One-step-ahead level `ŷ_{n+1}`.
    pub level: f64,
    /// In-sample one-step MAE over `t = 2..n`.
    pub mae: f64,
}

/// Runs `ŷ_{t+1} = α·y_t + (1−α)·ŷ_t` from `ŷ_1 = y_1`.
pub fn es_with_alpha(input: &[f64], alpha: f64) -> Result<EsFit, BaselineError> {
    let (&first, _) = input.split_first().ok_or(BaselineError::EmptyInput)?;
    let mut level = first;
    let mut err = 0.0;
    for (t, &y) in input.iter().enumerate() {
        if t > 0 {
            err += (y - level).abs();
        }
        level = alpha * y + (1.0 - alpha) * level;
    }
    let steps = input.len().saturating_sub(1).max(1);
    Ok(EsFit {
        alpha,
        level,
        mae: err / steps as f64,
    })
}

/// Grid search over `α ∈ {0.01, 0.02, …, 0.99}` minimising in-sample
/// one-step MAE; ties keep the smaller α.
pub fn es_fit(input: &[f64]) -> Result<EsFit, BaselineError> {
    let mut best = es_with_alpha(input, 0.01)?;
    for k in 2..=99 {
        let fit = es_with_alpha(input, k as f64 / 100.0)?;
        if fit.mae < best.mae {
            best = fit;
        }
    }
    Ok(best)
}

/// Flat forecast at the final level.
pub fn es_forecast(fit: &EsFit, horizon: usize) -> Vec<f64> {
    vec![fit.level; horizon]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::last_forecast;

    #[test]
    fn alpha_extremes() {
        let y = [0.3, 0.1, 0.7, 0.4];
        let one = es_with_alpha(&y, 1.0).unwrap();
        assert_eq!(es_forecast(&one, 3), last_forecast(&y, 3).unwrap());
        let zero = es_with_alpha(&y, 0.0).unwrap();
        assert_eq!(zero.level, 0.3);
    }

    #[test]
    fn constant_series_for_every_alpha() {
        let y = [0.25; 12];
        for k in 1..=99 {
            assert_eq!(es_with_alpha(&y, k as f64 / 100.0).unwrap().level, 0.25);
        }
        assert_eq!(es_forecast(&es_fit(&y).unwrap(), 2), vec![0.25; 2]);
    }

    #[test]
    fn grid_prefers_fast_tracking_on_a_step() {
        let mut y = vec![0.1; 10];
        y.extend(vec![0.9; 10]);
        let fit = es_fit(&y).unwrap();
        assert!(fit.alpha > 0.9, "{fit:?}");
        assert!(matches!(es_fit(&[]), Err(BaselineError::EmptyInput)));
    }
}
