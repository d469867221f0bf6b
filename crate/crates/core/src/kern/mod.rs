//! The KERN forecaster: categorical embeddings, an LSTM encoder with
//! teacher forcing, a bidirectional LSTM decoder, a triplet hinge on hidden
//! states (internal knowledge) and taxonomy message passing on element
//! embeddings (external knowledge).

mod checkpoint;
mod model;
mod train;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::CorpusError;
use crate::gradkernel::{GradError, OptimizerConfig};
use crate::taxonomy::TaxonomyError;

pub use checkpoint::{Checkpoint, Vocabulary, CHECKPOINT_FORMAT_VERSION};
pub use model::{ForecastQuery, ForwardOutput, KernModel, ModelDims};
pub use train::{train, training_windows, LossRecord, Objective};

#[derive(Debug, Error)]
pub enum KernError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("empty sequence")]
    EmptySequence,
    #[error("need at least 3 samples to form a triplet, found {0}")]
    BatchTooSmall(usize),
    #[error("no untied triplet found after {0} draws")]
    TripletTies(usize),
    #[error("stage misalignment: {0}")]
    StageMismatch(String),
    #[error("{kind} id {id} out of range (vocabulary size {len})")]
    IdOutOfRange {
        kind: &'static str,
        id: usize,
        len: usize,
    },
    #[error("non-finite loss at iteration {iteration} (sequence {sequence}, triplet {triplet})")]
    NonFiniteLoss {
        iteration: usize,
        sequence: f64,
        triplet: f64,
    },
    #[error("no training windows: every series is shorter than {needed} points")]
    NoTrainingData { needed: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Grad(#[from] GradError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Taxonomy(#[from] TaxonomyError),
}

/// How relation weights are initialised.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightInit {
    /// `1/|N_i|`
    #[default]
    Uniform,
    /// Child share of summed series means among its siblings.
    Frequency,
}

impl FromStr for WeightInit {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "uniform" => Ok(Self::Uniform),
            "frequency" => Ok(Self::Frequency),
            other => Err(format!("unknown weight init `{other}` (expected uniform or frequency)")),
        }
    }
}

/// The four ablation variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    /// No internal, no external knowledge.
    KernIE,
    /// Internal only.
    KernE,
    /// External only.
    KernI,
    Kern,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::KernIE, Variant::KernE, Variant::KernI, Variant::Kern];

    pub fn from_flags(internal: bool, external: bool) -> Self {
        match (internal, external) {
            (false, false) => Self::KernIE,
            (true, false) => Self::KernE,
            (false, true) => Self::KernI,
            (true, true) => Self::Kern,
        }
    }

    /// `(use_internal, use_external)`
    pub fn flags(self) -> (bool, bool) {
        match self {
            Self::KernIE => (false, false),
            Self::KernE => (true, false),
            Self::KernI => (false, true),
            Self::Kern => (true, true),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::KernIE => "KERN-IE",
            Self::KernE => "KERN-E",
            Self::KernI => "KERN-I",
            Self::Kern => "KERN",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Embedding size `D`.
    pub embed_dim: usize,
    /// LSTM hidden size `H`.
    pub hidden: usize,
    /// Triplet weight `λ`.
    pub lambda: f64,
    pub batch_size: usize,
    pub iterations: usize,
    pub input_len: usize,
    pub horizon: usize,
    pub stride: usize,
    pub optimizer: OptimizerConfig,
    pub seed: u64,
    pub use_internal_knowledge: bool,
    pub use_external_knowledge: bool,
    pub weight_init: WeightInit,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            embed_dim: 10,
            hidden: 50,
            lambda: 2e-4,
            batch_size: 400,
            iterations: 600,
            input_len: 48,
            horizon: 12,
            stride: 1,
            optimizer: OptimizerConfig::default(),
            seed: 0,
            use_internal_knowledge: true,
            use_external_knowledge: true,
            weight_init: WeightInit::Uniform,
        }
    }
}

impl TrainConfig {
    pub fn variant(&self) -> Variant {
        Variant::from_flags(self.use_internal_knowledge, self.use_external_knowledge)
    }

    pub fn with_variant(mut self, variant: Variant) -> Self {
        (self.use_internal_knowledge, self.use_external_knowledge) = variant.flags();
        self
    }

    pub fn validate(&self) -> Result<(), KernError> {
        let bad = |m: &str| Err(KernError::InvalidConfig(m.into()));
        if self.embed_dim == 0 || self.hidden == 0 {
            return bad("embed_dim and hidden must be positive");
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be a finite value >= 0");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if self.use_internal_knowledge && self.batch_size < 3 {
            return bad("batch_size must be at least 3 with internal knowledge");
        }
        if self.input_len < 2 || self.horizon == 0 {
            return bad("input_len must be >= 2 and horizon >= 1");
        }
        if self.stride == 0 {
            return bad("stride must be positive");
        }
        if !(self.optimizer.learning_rate > 0.0 && self.optimizer.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        Ok(())
    }
}

/// Mean absolute error between a prediction and its target.
pub fn sequence_loss(pred: &[f64], truth: &[f64]) -> Result<f64, KernError> {
    if pred.len() != truth.len() {
        return Err(KernError::LengthMismatch {
            expected: truth.len(),
            found: pred.len(),
        });
    }
    if pred.is_empty() {
        return Err(KernError::EmptySequence);
    }
    Ok(pred.iter().zip(truth).map(|(p, t)| (p - t).abs()).sum::<f64>() / pred.len() as f64)
}

fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Hidden states of one sample, split by stage.
#[derive(Debug, Clone, PartialEq)]
pub struct StageHiddens {
    /// Encoder states compared by the regulariser, each of size `H`.
    pub encoder: Vec<Vec<f64>>,
    /// Decoder states, each of size `2H`.
    pub decoder: Vec<Vec<f64>>,
}

fn check_stage(name: &str, a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<(), KernError> {
    if a.len() != b.len() {
        return Err(KernError::StageMismatch(format!(
            "{name} step counts {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if let Some((x, y)) = a.iter().zip(b).find(|(x, y)| x.len() != y.len()) {
        return Err(KernError::StageMismatch(format!(
            "{name} state sizes {} vs {}",
            x.len(),
            y.len()
        )));
    }
    Ok(())
}

/// `r = mean_t max(0, ‖h_t^k − h_t^p‖₁ − ‖h_t^k − h_t^q‖₁)` over every
/// encoder and decoder step.
pub fn triplet_regularizer(
    k: &StageHiddens,
    p: &StageHiddens,
    q: &StageHiddens,
) -> Result<f64, KernError> {
    for other in [p, q] {
        check_stage("encoder", &k.encoder, &other.encoder)?;
        check_stage("decoder", &k.decoder, &other.decoder)?;
    }
    let steps = k.encoder.len() + k.decoder.len();
    if steps == 0 {
        return Err(KernError::EmptySequence);
    }
    let hinge: f64 = (0..k.encoder.len())
        .map(|t| (&k.encoder[t], &p.encoder[t], &q.encoder[t]))
        .chain((0..k.decoder.len()).map(|t| (&k.decoder[t], &p.decoder[t], &q.decoder[t])))
        .map(|(hk, hp, hq)| (l1(hk, hp) - l1(hk, hq)).max(0.0))
        .sum();
    Ok(hinge / steps as f64)
}

/// `Σ_s (L_e^s + L_d^s) + λ·r` for one triplet, given `(L_e, L_d)` per member.
pub fn total_loss(losses: &[(f64, f64)], triplet: f64, lambda: f64) -> f64 {
    losses.iter().map(|(e, d)| e + d).sum::<f64>() + lambda * triplet
}

/// Draws three distinct windows and orders them so that
/// `‖y_k − y_p‖₁ < ‖y_k − y_q‖₁`; exact ties are re-drawn.
pub fn sample_triplet<R: Rng>(
    windows: &[Vec<f64>],
    rng: &mut R,
) -> Result<(usize, usize, usize), KernError> {
    const MAX_DRAWS: usize = 64;
    if windows.len() < 3 {
        return Err(KernError::BatchTooSmall(windows.len()));
    }
    let len = windows[0].len();
    if let Some(w) = windows.iter().find(|w| w.len() != len) {
        return Err(KernError::LengthMismatch {
            expected: len,
            found: w.len(),
        });
    }
    for _ in 0..MAX_DRAWS {
        let picked = rand::seq::index::sample(rng, windows.len(), 3);
        let (k, p, q) = (picked.index(0), picked.index(1), picked.index(2));
        let (dp, dq) = (l1(&windows[k], &windows[p]), l1(&windows[k], &windows[q]));
        if dp < dq {
            return Ok((k, p, q));
        }
        if dq < dp {
            return Ok((k, q, p));
        }
    }
    Err(KernError::TripletTies(MAX_DRAWS))
}
