use nalgebra::DMatrix;

use super::linalg::least_squares;
use super::BaselineError;

/// Largest AR/VAR order considered by order selection.
pub const MAX_ORDER: usize = 8;
/// Ridge strength on VAR lag coefficients (the intercept is not penalised).
pub const DEFAULT_VAR_RIDGE: f64 = 1e-8;

/// `y_t = c + Σ_i a_i · y_{t−1−i}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ArFit {
    pub intercept: f64,
    pub coeffs: Vec<f64>,
}

impl ArFit {
    pub fn order(&self) -> usize {
        self.coeffs.len()
    }
}

fn check_finite(values: &[f64]) -> Result<(), BaselineError> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(BaselineError::NonFinite)
    }
}

/// Least-squares AR(`order`) with intercept.
pub fn ar_fit(input: &[f64], order: usize) -> Result<ArFit, BaselineError> {
    if input.is_empty() {
        return Err(BaselineError::EmptyInput);
    }
    if order == 0 || input.len() <= order {
        return Err(BaselineError::TooShort {
            len: input.len(),
            needed: order + 1,
        });
    }
    check_finite(input)?;
    let rows = input.len() - order;
    let x = DMatrix::from_fn(rows, order + 1, |r, c| {
        if c == 0 {
            1.0
        } else {
            input[r + order - c]
        }
    });
    let y = DMatrix::from_fn(rows, 1, |r, _| input[r + order]);
    let beta = least_squares(&x, &y, 0.0, true)?;
    Ok(ArFit {
        intercept: beta[(0, 0)],
        coeffs: (1..=order).map(|i| beta[(i, 0)]).collect(),
    })
}

/// Recursive multi-step forecast from the last `order` points of `history`.
pub fn ar_forecast(fit: &ArFit, history: &[f64], horizon: usize) -> Vec<f64> {
    let p = fit.order();
    let mut buf: Vec<f64> = history[history.len().saturating_sub(p)..].to_vec();
    let mut out = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let n = buf.len();
        let next = fit.intercept
            + fit
                .coeffs
                .iter()
                .enumerate()
                .map(|(i, a)| a * buf.get(n.wrapping_sub(1 + i)).copied().unwrap_or(0.0))
                .sum::<f64>();
        out.push(next);
        buf.push(next);
    }
    out
}

fn validation_len(len: usize, horizon: usize) -> usize {
    horizon.min(len / 3).max(1)
}

fn mae(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}

/// Picks the order in `1..=MAX_ORDER` with the lowest MAE on a held-out
/// tail of the input, then refits on the whole input. Ties go to the lower
/// order.
pub fn ar_select(input: &[f64], horizon: usize) -> Result<ArFit, BaselineError> {
    if input.len() < 2 {
        return Err(BaselineError::TooShort {
            len: input.len(),
            needed: 2,
        });
    }
    let v = validation_len(input.len(), horizon);
    let (train, tail) = input.split_at(input.len() - v);
    let mut best: Option<(f64, usize)> = None;
    for p in (1..=MAX_ORDER).filter(|p| train.len() > 2 * p) {
        let fit = ar_fit(train, p)?;
        let score = mae(&ar_forecast(&fit, train, v), tail);
        if best.is_none_or(|(s, _)| score < s) {
            best = Some((score, p));
        }
    }
    let order = best.map_or(1, |(_, p)| p);
    ar_fit(input, order.min(input.len() - 1))
}

/// `y_t = c + Σ_l A_l · y_{t−l}` over a set of aligned series.
#[derive(Debug, Clone, PartialEq)]
pub struct VarFit {
    pub intercept: Vec<f64>,
    /// `coeffs[l][(i, j)]`: effect of series `j` at lag `l+1` on series `i`.
    pub coeffs: Vec<DMatrix<f64>>,
}

impl VarFit {
    pub fn order(&self) -> usize {
        self.coeffs.len()
    }

    pub fn dim(&self) -> usize {
        self.intercept.len()
    }
}

fn check_aligned(series: &[Vec<f64>]) -> Result<usize, BaselineError> {
    if series.len() < 2 {
        return Err(BaselineError::SingleSeries);
    }
    let len = series[0].len();
    if series.iter().any(|s| s.len() != len) {
        return Err(BaselineError::Misaligned("series lengths differ".into()));
    }
    for s in series {
        check_finite(s)?;
    }
    Ok(len)
}

/// Per-equation ridge least squares for VAR(`order`) with intercepts.
pub fn var_fit(series: &[Vec<f64>], order: usize, ridge: f64) -> Result<VarFit, BaselineError> {
    let len = check_aligned(series)?;
    if order == 0 || len <= order {
        return Err(BaselineError::TooShort {
            len,
            needed: order + 1,
        });
    }
    let dim = series.len();
    let rows = len - order;
    let x = DMatrix::from_fn(rows, 1 + order * dim, |r, c| {
        if c == 0 {
            1.0
        } else {
            let (lag, j) = ((c - 1) / dim + 1, (c - 1) % dim);
            series[j][r + order - lag]
        }
    });
    let y = DMatrix::from_fn(rows, dim, |r, i| series[i][r + order]);
    let beta = least_squares(&x, &y, ridge, true)?;
    Ok(VarFit {
        intercept: (0..dim).map(|i| beta[(0, i)]).collect(),
        coeffs: (0..order)
            .map(|l| DMatrix::from_fn(dim, dim, |i, j| beta[(1 + l * dim + j, i)]))
            .collect(),
    })
}

/// Recursive multi-step forecast; returns one vector per series.
pub fn var_forecast(fit: &VarFit, history: &[Vec<f64>], horizon: usize) -> Vec<Vec<f64>> {
    let dim = fit.dim();
    let mut buf: Vec<Vec<f64>> = history.to_vec();
    let mut out = vec![Vec::with_capacity(horizon); dim];
    for _ in 0..horizon {
        let n = buf[0].len();
        let next: Vec<f64> = (0..dim)
            .map(|i| {
                let mut v = fit.intercept[i];
                for (l, a) in fit.coeffs.iter().enumerate() {
                    for (j, s) in buf.iter().enumerate() {
                        v += a[(i, j)] * s[n - 1 - l];
                    }
                }
                v
            })
            .collect();
        for (i, v) in next.into_iter().enumerate() {
            out[i].push(v);
            buf[i].push(v);
        }
    }
    out
}

/// VAR order selection by held-out tail MAE averaged over all series.
/// Orders whose design would have more unknowns than rows are skipped.
pub fn var_select(series: &[Vec<f64>], horizon: usize, ridge: f64) -> Result<VarFit, BaselineError> {
    let len = check_aligned(series)?;
    if len < 2 {
        return Err(BaselineError::TooShort { len, needed: 2 });
    }
    let dim = series.len();
    let v = validation_len(len, horizon);
    let train: Vec<Vec<f64>> = series.iter().map(|s| s[..len - v].to_vec()).collect();
    let train_len = len - v;
    let mut best: Option<(f64, usize)> = None;
    for p in (1..=MAX_ORDER).filter(|p| train_len > p + 1 + p * dim) {
        let fit = var_fit(&train, p, ridge)?;
        let fc = var_forecast(&fit, &train, v);
        let score = fc
            .iter()
            .zip(series)
            .map(|(f, s)| mae(f, &s[len - v..]))
            .sum::<f64>()
            / dim as f64;
        if best.is_none_or(|(s, _)| score < s) {
            best = Some((score, p));
        }
    }
    var_fit(series, best.map_or(1, |(_, p)| p), ridge)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_geometric_decay() {
        let y: Vec<f64> = (0..30).map(|t| 0.9 * 0.8f64.powi(t)).collect();
        let fit = ar_fit(&y, 1).unwrap();
        assert!((fit.coeffs[0] - 0.8).abs() < 1e-8, "{fit:?}");
        assert!(fit.intercept.abs() < 1e-8);
        let fc = ar_forecast(&fit, &y, 3);
        assert!((fc[0] - 0.9 * 0.8f64.powi(30)).abs() < 1e-9);
    }

    #[test]
    fn constant_series_forecasts_constant() {
        let y = vec![0.42; 20];
        let fit = ar_select(&y, 5).unwrap();
        for v in ar_forecast(&fit, &y, 5) {
            assert!((v - 0.42).abs() < 1e-8);
        }
    }

    #[test]
    fn ar_order_and_length_errors() {
        assert!(matches!(ar_fit(&[0.1, 0.2], 2), Err(BaselineError::TooShort { .. })));
        assert!(matches!(ar_fit(&[], 1), Err(BaselineError::EmptyInput)));
        assert!(matches!(ar_select(&[0.1], 1), Err(BaselineError::TooShort { .. })));
    }

    #[test]
    fn var_recovers_lagged_copy() {
        let s1: Vec<f64> = (0..40).map(|t| 0.5 + 0.3 * (t as f64 * 0.7).sin()).collect();
        let s2: Vec<f64> = (0..40).map(|t| if t == 0 { 0.5 } else { s1[t - 1] }).collect();
        let fit = var_fit(&[s1.clone(), s2.clone()], 1, DEFAULT_VAR_RIDGE).unwrap();
        let a = &fit.coeffs[0];
        assert!((a[(1, 0)] - 1.0).abs() < 1e-6, "{a}");
        assert!(a[(1, 1)].abs() < 1e-6);
        let fc = var_forecast(&fit, &[s1.clone(), s2], 1);
        assert!((fc[1][0] - s1[39]).abs() < 1e-6);
    }

    #[test]
    fn var_contract_errors() {
        let s = vec![0.1; 10];
        assert!(matches!(var_fit(&[s.clone()], 1, 0.0), Err(BaselineError::SingleSeries)));
        assert!(matches!(
            var_fit(&[s.clone(), vec![0.1; 9]], 1, 0.0),
            Err(BaselineError::Misaligned(_))
        ));
    }
}
