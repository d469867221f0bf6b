use kern_core::baselines::{ar_fit, basis_fit, es_forecast, es_with_alpha, last_forecast, var_fit, Basis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::normal_equations;

pub const TOL: f64 = 1e-8;

fn noise_series(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(0.0..1.0)).collect()
}

pub fn assert_close(a: &[f64], b: &[f64], tol: f64, what: &str) {
    assert_eq!(a.len(), b.len(), "{what}");
    for (x, y) in a.iter().zip(b) {
        assert!((x - y).abs() < tol, "{what}: {a:?} vs {b:?}");
    }
}

/// Rows `[1, y_{t−1}, …, y_{t−p}]` and targets `y_t`.
fn ar_design(y: &[f64], p: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    (p..y.len())
        .map(|t| {
            let mut row = vec![1.0];
            row.extend((1..=p).map(|l| y[t - l]));
            (row, y[t])
        })
        .unzip()
}

pub fn ar_matches_oracle(seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = rng.random_range(30..80);
    let p = rng.random_range(1..5);
    let y = noise_series(&mut rng, len);
    let fit = ar_fit(&y, p).unwrap();
    let (rows, targets) = ar_design(&y, p);
    let beta = normal_equations(&rows, &targets, 0.0, true);
    let mut ours = vec![fit.intercept];
    ours.extend(&fit.coeffs);
    assert_close(&ours, &beta, TOL, &format!("AR seed {seed}"));
}

pub fn var_matches_oracle(seed: u64, ridge: f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = rng.random_range(2..4);
    let p = rng.random_range(1..3);
    let len = rng.random_range(50..90);
    let series: Vec<Vec<f64>> = (0..dim).map(|_| noise_series(&mut rng, len)).collect();
    let fit = var_fit(&series, p, ridge).unwrap();
    let rows: Vec<Vec<f64>> = (p..len)
        .map(|t| {
            let mut row = vec![1.0];
            for l in 1..=p {
                row.extend(series.iter().map(|s| s[t - l]));
            }
            row
        })
        .collect();
    for (i, s) in series.iter().enumerate() {
        let beta = normal_equations(&rows, &s[p..], ridge, true);
        let mut ours = vec![fit.intercept[i]];
        for a in &fit.coeffs {
            ours.extend((0..dim).map(|j| a[(i, j)]));
        }
        assert_close(&ours, &beta, TOL, &format!("VAR seed {seed} equation {i}"));
    }
}

fn basis_row(basis: Basis, t: usize, period: usize) -> Vec<f64> {
    let tf = t as f64;
    let w = 2.0 * std::f64::consts::PI * tf / period as f64;
    match basis {
        Basis::Linear => vec![1.0, tf],
        Basis::Cyclic => vec![1.0, w.sin(), w.cos()],
        Basis::GeoStyle => vec![1.0, tf, w.sin(), w.cos()],
    }
}

pub fn basis_matches_oracle(seed: u64, basis: Basis) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = rng.random_range(24..100);
    let start = rng.random_range(0..60);
    let period = if rng.random_bool(0.5) { 24 } else { 52 };
    let y = noise_series(&mut rng, len);
    let fit = basis_fit(&y, start, basis, period).unwrap();
    let rows: Vec<Vec<f64>> = (start..start + len).map(|t| basis_row(basis, t, period)).collect();
    let beta = normal_equations(&rows, &y, 0.0, true);
    assert_close(&fit.weights, &beta, TOL, &format!("{basis:?} seed {seed}"));
}

pub fn es_one_is_last(seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = rng.random_range(1..60);
    let y = noise_series(&mut rng, len);
    let fit = es_with_alpha(&y, 1.0).unwrap();
    assert_eq!(es_forecast(&fit, 5), last_forecast(&y, 5).unwrap(), "seed {seed}");
}

