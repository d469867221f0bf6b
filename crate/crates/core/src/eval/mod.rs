//! Evaluation protocol: the last window of every series is held out; odd
//! horizon positions are validation points and even positions are test
//! points. Every method (KERN included) is scored on the same series, with
//! forecasts clamped to `[0, 1]`.

mod metrics;
mod report;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use metrics::{mae, mape, odd_even_split, Mape, MAPE_EPSILON};

use crate::baselines::{clamp_unit, var_forecast, var_select, FittedForecaster, Method, DEFAULT_VAR_RIDGE};
use crate::corpus::{make_samples, Corpus, CorpusError, Sample, WindowSpec};
use crate::kern::{train, Checkpoint, ForecastQuery, KernError, TrainConfig, Variant};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("length mismatch: {pred} predictions vs {truth} truth values")]
    LengthMismatch { pred: usize, truth: usize },
    #[error("empty input")]
    Empty,
    #[error("horizon {0} is too short for the odd/even split (need at least 2)")]
    HorizonTooShort(usize),
    #[error("empty method list")]
    NoMethods,
    #[error("KERN requires a checkpoint")]
    MissingCheckpoint,
    #[error("checkpoint was trained with T={ck_input}, T'={ck_horizon} but the setting needs T={input}, T'={horizon}")]
    SettingMismatch {
        ck_input: usize,
        ck_horizon: usize,
        input: usize,
        horizon: usize,
    },
    #[error("corpus grid period {corpus} does not match setting period {setting}")]
    GridMismatch { corpus: usize, setting: usize },
    #[error("no series can be evaluated")]
    NothingToEvaluate,
    #[error(transparent)]
    Kern(#[from] KernError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

/// Input/horizon geometry of an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Setting {
    /// 48 half-month points in, 12 out.
    HalfYear,
    /// 48 half-month points in, 24 out.
    OneYear,
    /// 52 weekly points in, 26 out.
    GeoStyle,
}

impl Setting {
    pub const ALL: [Setting; 3] = [Setting::HalfYear, Setting::OneYear, Setting::GeoStyle];

    pub fn input_len(self) -> usize {
        match self {
            Self::HalfYear | Self::OneYear => 48,
            Self::GeoStyle => 52,
        }
    }

    pub fn horizon(self) -> usize {
        match self {
            Self::HalfYear => 12,
            Self::OneYear => 24,
            Self::GeoStyle => 26,
        }
    }

    pub fn grid_period(self) -> usize {
        match self {
            Self::HalfYear | Self::OneYear => 24,
            Self::GeoStyle => 52,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::HalfYear => "half-year",
            Self::OneYear => "one-year",
            Self::GeoStyle => "geostyle",
        }
    }

    /// `config` with this setting's `T` and `T'`.
    pub fn apply(self, config: &TrainConfig) -> TrainConfig {
        TrainConfig {
            input_len: self.input_len(),
            horizon: self.horizon(),
            ..config.clone()
        }
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Setting {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Setting::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| format!("unknown setting `{s}` (expected half-year, one-year or geostyle)"))
    }
}

/// Scores on one split (validation or test points).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitScores {
    /// MAE pooled over all points of all series.
    pub mae: f64,
    /// Mean of per-series MAE.
    pub mae_series_mean: f64,
    pub mape: Option<f64>,
    pub mape_excluded: usize,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodScores {
    pub method: String,
    pub test: SplitScores,
    pub validation: SplitScores,
}

/// KERN's relative gain over the best baseline in each column, in percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Improvement {
    pub mae_pct: f64,
    pub mape_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedSeries {
    pub series_id: usize,
    pub label: String,
    pub method: Option<String>,
    pub reason: String,
}

/// Inputs, truth and every method's (clamped) forecast for one series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesForecast {
    pub series_id: usize,
    pub group: usize,
    pub element: usize,
    /// Grid index of the first input point.
    pub start_index: usize,
    pub input: Vec<f64>,
    pub truth: Vec<f64>,
    pub predictions: BTreeMap<String, Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub setting: Setting,
    pub split: String,
    pub scores: Vec<MethodScores>,
    pub improvement: Option<Improvement>,
    pub evaluated_series: usize,
    pub skipped: Vec<SkippedSeries>,
    pub forecasts: Vec<SeriesForecast>,
    pub kern_config: Option<TrainConfig>,
}

impl EvalReport {
    pub fn score(&self, method: &str) -> Option<&MethodScores> {
        self.scores.iter().find(|s| s.method == method)
    }
}

const SPLIT_TAG: &str = "validation=odd horizon positions, test=even horizon positions";

/// The last window of every series that can be imputed and is long enough.
fn evaluation_samples(
    corpus: &Corpus,
    window: WindowSpec,
    skipped: &mut Vec<SkippedSeries>,
) -> Vec<Sample> {
    let mut out = Vec::new();
    for (id, s) in corpus.series.iter().enumerate() {
        let result = s
            .imputed()
            .and_then(|d| make_samples(id, &d, window, corpus.grid_period));
        match result {
            Ok(mut samples) => out.push(samples.pop().expect("at least one window")),
            Err(e) => skipped.push(SkippedSeries {
                series_id: id,
                label: series_label(corpus, id),
                method: None,
                reason: e.to_string(),
            }),
        }
    }
    out
}

fn series_label(corpus: &Corpus, id: usize) -> String {
    let s = &corpus.series[id];
    format!("{}:{}", corpus.group_label(s.group), corpus.elements[s.element].name)
}

fn window_start(corpus: &Corpus, s: &Sample) -> usize {
    corpus.series[s.series_id].start_index + s.offset
}

type Forecasts = BTreeMap<usize, Result<Vec<f64>, String>>;

fn single_series_forecasts(
    corpus: &Corpus,
    method: Method,
    samples: &[Sample],
    horizon: usize,
) -> Forecasts {
    samples
        .iter()
        .map(|s| {
            let fc = FittedForecaster::fit(
                method,
                &s.input,
                window_start(corpus, s),
                corpus.grid_period,
                horizon,
            )
            .map(|f| f.forecast(horizon))
            .map_err(|e| e.to_string());
            (s.series_id, fc)
        })
        .collect()
}

/// VAR over all series sharing a group and an aligned window.
fn var_forecasts(corpus: &Corpus, samples: &[Sample], horizon: usize) -> Forecasts {
    let mut blocks: BTreeMap<(usize, usize), Vec<&Sample>> = BTreeMap::new();
    for s in samples {
        blocks
            .entry((s.group, window_start(corpus, s)))
            .or_default()
            .push(s);
    }
    let mut out = Forecasts::new();
    for members in blocks.values() {
        let inputs: Vec<Vec<f64>> = members.iter().map(|s| s.input.clone()).collect();
        match var_select(&inputs, horizon, DEFAULT_VAR_RIDGE) {
            Ok(fit) => {
                for (s, fc) in members.iter().zip(var_forecast(&fit, &inputs, horizon)) {
                    out.insert(s.series_id, Ok(fc));
                }
            }
            Err(e) => {
                for s in members {
                    out.insert(s.series_id, Err(e.to_string()));
                }
            }
        }
    }
    out
}

fn kern_forecasts(corpus: &Corpus, ck: &Checkpoint, samples: &[Sample]) -> Result<Forecasts, EvalError> {
    let queries: Vec<ForecastQuery> = samples
        .iter()
        .map(|s| {
            let g = corpus.groups[s.group];
            ForecastQuery {
                city: g.city,
                age_band: g.age_band,
                gender: g.gender,
                element: s.element,
                input: s.input.clone(),
                start_index: window_start(corpus, s),
            }
        })
        .collect();
    let mut out = Forecasts::new();
    for (chunk_s, chunk_q) in samples.chunks(512).zip(queries.chunks(512)) {
        let preds = ck.forecast_batch(chunk_q)?;
        for (s, p) in chunk_s.iter().zip(preds) {
            out.insert(s.series_id, Ok(p));
        }
    }
    Ok(out)
}

fn split_scores(rows: &[(&[f64], &[f64])]) -> SplitScores {
    let mut abs_sum = 0.0;
    let mut points = 0;
    let mut per_series = Vec::with_capacity(rows.len());
    let (mut pct_sum, mut pct_used, mut excluded) = (0.0, 0usize, 0usize);
    let mut per_series_mape = Vec::new();
    for (pred, truth) in rows {
        let e: f64 = pred.iter().zip(*truth).map(|(p, t)| (p - t).abs()).sum();
        abs_sum += e;
        points += pred.len();
        per_series.push(e / pred.len() as f64);
        let m = mape(pred, truth).expect("equal lengths");
        excluded += m.excluded;
        let used = pred.len() - m.excluded;
        if let Some(v) = m.value {
            pct_sum += v * used as f64;
            pct_used += used;
            per_series_mape.push(v);
        }
    }
    SplitScores {
        mae: abs_sum / points as f64,
        mae_series_mean: per_series.iter().sum::<f64>() / per_series.len() as f64,
        mape: (pct_used > 0).then(|| pct_sum / pct_used as f64),
        mape_excluded: excluded,
        points,
    }
}

fn pick(values: &[f64], positions: &[usize]) -> Vec<f64> {
    positions.iter().map(|&p| values[p - 1]).collect()
}

/// Fits and scores every method on the last window of each series.
///
/// A series on which any method fails is dropped for all methods and listed
/// in [`EvalReport::skipped`].
pub fn run_benchmark(
    corpus: &Corpus,
    methods: &[Method],
    setting: Setting,
    kern: Option<&Checkpoint>,
) -> Result<EvalReport, EvalError> {
    if methods.is_empty() {
        return Err(EvalError::NoMethods);
    }
    if corpus.grid_period != setting.grid_period() {
        return Err(EvalError::GridMismatch {
            corpus: corpus.grid_period,
            setting: setting.grid_period(),
        });
    }
    let methods: Vec<Method> = Method::ALL
        .into_iter()
        .filter(|m| methods.contains(m))
        .collect();
    let horizon = setting.horizon();
    let (val_pos, test_pos) = odd_even_split(horizon)?;
    if methods.contains(&Method::Kern) {
        let ck = kern.ok_or(EvalError::MissingCheckpoint)?;
        if ck.input_len() != setting.input_len() || ck.horizon() != horizon {
            return Err(EvalError::SettingMismatch {
                ck_input: ck.input_len(),
                ck_horizon: ck.horizon(),
                input: setting.input_len(),
                horizon,
            });
        }
        ck.vocabulary.check_corpus(corpus)?;
    }
    let window = WindowSpec::new(setting.input_len(), horizon, 1)?;
    let mut skipped = Vec::new();
    let samples = evaluation_samples(corpus, window, &mut skipped);

    let mut per_method: Vec<(Method, Forecasts)> = Vec::with_capacity(methods.len());
    for &m in &methods {
        let fc = match m {
            Method::Var => var_forecasts(corpus, &samples, horizon),
            Method::Kern => kern_forecasts(corpus, kern.expect("checked above"), &samples)?,
            _ => single_series_forecasts(corpus, m, &samples, horizon),
        };
        per_method.push((m, fc));
    }

    let mut failed = BTreeSet::new();
    for (m, fc) in &per_method {
        for (&id, r) in fc {
            let reason = match r {
                Err(e) => Some(e.clone()),
                Ok(v) if v.iter().any(|x| !x.is_finite()) => Some("non-finite forecast".into()),
                Ok(_) => None,
            };
            if let Some(reason) = reason {
                failed.insert(id);
                skipped.push(SkippedSeries {
                    series_id: id,
                    label: series_label(corpus, id),
                    method: Some(m.name().into()),
                    reason,
                });
            }
        }
    }
    let kept: Vec<&Sample> = samples.iter().filter(|s| !failed.contains(&s.series_id)).collect();
    if kept.is_empty() {
        return Err(EvalError::NothingToEvaluate);
    }

    let mut forecasts: Vec<SeriesForecast> = kept
        .iter()
        .map(|s| SeriesForecast {
            series_id: s.series_id,
            group: s.group,
            element: s.element,
            start_index: window_start(corpus, s),
            input: s.input.clone(),
            truth: s.target.clone(),
            predictions: BTreeMap::new(),
        })
        .collect();
    let mut scores = Vec::with_capacity(methods.len());
    for (m, fc) in &per_method {
        let mut val_rows = Vec::with_capacity(kept.len());
        let mut test_rows = Vec::with_capacity(kept.len());
        for (s, record) in kept.iter().zip(forecasts.iter_mut()) {
            let mut pred = fc[&s.series_id].clone().expect("failures removed");
            clamp_unit(&mut pred);
            val_rows.push((pick(&pred, &val_pos), pick(&s.target, &val_pos)));
            test_rows.push((pick(&pred, &test_pos), pick(&s.target, &test_pos)));
            record.predictions.insert(m.name().into(), pred);
        }
        let as_refs = |rows: &[(Vec<f64>, Vec<f64>)]| -> SplitScores {
            let r: Vec<(&[f64], &[f64])> = rows.iter().map(|(p, t)| (p.as_slice(), t.as_slice())).collect();
            split_scores(&r)
        };
        scores.push(MethodScores {
            method: m.name().into(),
            test: as_refs(&test_rows),
            validation: as_refs(&val_rows),
        });
    }

    let improvement = improvement_row(&scores);
    skipped.sort_by(|a, b| (a.series_id, &a.method).cmp(&(b.series_id, &b.method)));
    Ok(EvalReport {
        setting,
        split: SPLIT_TAG.into(),
        scores,
        improvement,
        evaluated_series: kept.len(),
        skipped,
        forecasts,
        kern_config: kern.filter(|_| methods.contains(&Method::Kern)).map(|c| c.config.clone()),
    })
}

/// `(best − KERN) / best · 100` against the best baseline per column.
fn improvement_row(scores: &[MethodScores]) -> Option<Improvement> {
    let kern = scores.iter().find(|s| s.method == Method::Kern.name())?;
    let baselines: Vec<&MethodScores> = scores.iter().filter(|s| s.method != Method::Kern.name()).collect();
    let best_mae = baselines.iter().map(|s| s.test.mae).reduce(f64::min)?;
    let best_mape = baselines.iter().filter_map(|s| s.test.mape).reduce(f64::min);
    let pct = |best: f64, k: f64| if best > 0.0 { (best - k) / best * 100.0 } else { 0.0 };
    Some(Improvement {
        mae_pct: pct(best_mae, kern.test.mae),
        mape_pct: best_mape.zip(kern.test.mape).map(|(b, k)| pct(b, k)),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: Variant,
    pub test: SplitScores,
    pub validation: SplitScores,
    pub final_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub setting: Setting,
    pub config: TrainConfig,
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    pub fn row(&self, variant: Variant) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.variant == variant)
    }
}

/// Trains KERN-IE, KERN-E, KERN-I and KERN with otherwise identical
/// configuration (in parallel) and scores each on the test points.
pub fn run_ablation(
    corpus: &Corpus,
    setting: Setting,
    config: &TrainConfig,
) -> Result<AblationReport, EvalError> {
    let base = setting.apply(config);
    let results: Vec<Result<AblationRow, EvalError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = Variant::ALL
            .into_iter()
            .map(|v| {
                let cfg = base.clone().with_variant(v);
                scope.spawn(move || -> Result<AblationRow, EvalError> {
                    let ck = train(corpus, &cfg)?;
                    let report = run_benchmark(corpus, &[Method::Kern], setting, Some(&ck))?;
                    let s = &report.scores[0];
                    Ok(AblationRow {
                        variant: v,
                        test: s.test,
                        validation: s.validation,
                        final_loss: ck.history.last().map_or(f64::NAN, |r| r.loss),
                    })
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("ablation worker panicked"))
            .collect()
    });
    Ok(AblationReport {
        setting,
        config: base,
        rows: results.into_iter().collect::<Result<_, _>>()?,
    })
}
