//! Versioned JSON checkpoint: config, vocabulary, named parameter tensors
//! as nested rows, relation weights keyed by edge, and the loss history.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{ModelDims, RELATION_PARAM};
use super::{ForecastQuery, KernError, KernModel, LossRecord, TrainConfig, Variant};
use crate::corpus::{write_atomic, Corpus, FashionElement};
use crate::gradkernel::{ParamStore, Tensor};
use crate::taxonomy::build_taxonomy;

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

/// Names behind the model's categorical ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub cities: Vec<String>,
    pub elements: Vec<FashionElement>,
    pub grid_period: usize,
    pub taxonomy_edges: Vec<(String, String)>,
}

impl Vocabulary {
    pub fn from_corpus(corpus: &Corpus) -> Self {
        Self {
            cities: corpus.cities.clone(),
            elements: corpus.elements.clone(),
            grid_period: corpus.grid_period,
            taxonomy_edges: corpus
                .taxonomy
                .as_ref()
                .map(|t| t.edge_names())
                .unwrap_or_default(),
        }
    }

    /// Checks that corpus ids mean the same cities and elements.
    pub fn check_corpus(&self, corpus: &Corpus) -> Result<(), KernError> {
        let mismatch = |what: &str| Err(KernError::Checkpoint(format!("corpus {what} differ from checkpoint vocabulary")));
        if corpus.grid_period != self.grid_period {
            return mismatch("grid periods");
        }
        if corpus.cities != self.cities {
            return mismatch("cities");
        }
        if corpus.elements != self.elements {
            return mismatch("elements");
        }
        Ok(())
    }
}

/// A trained model with everything needed to forecast and to resume analysis.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub vocabulary: Vocabulary,
    pub model: KernModel,
    pub history: Vec<LossRecord>,
}

#[derive(Serialize, Deserialize)]
struct NamedTensor {
    name: String,
    shape: (usize, usize),
    values: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct EdgeWeight {
    parent: String,
    child: String,
    weight: f64,
}

#[derive(Serialize, Deserialize)]
struct Repr {
    format_version: u32,
    variant: Variant,
    config: TrainConfig,
    dims: ModelDims,
    vocabulary: Vocabulary,
    parameters: Vec<NamedTensor>,
    relation_weights: Vec<EdgeWeight>,
    history: Vec<LossRecord>,
}

impl Checkpoint {
    pub fn variant(&self) -> Variant {
        self.config.variant()
    }

    pub fn input_len(&self) -> usize {
        self.config.input_len
    }

    pub fn horizon(&self) -> usize {
        self.config.horizon
    }

    /// `T'` decoder predictions for one query.
    pub fn forecast(&self, query: &ForecastQuery) -> Result<Vec<f64>, KernError> {
        Ok(self
            .forecast_batch(std::slice::from_ref(query))?
            .pop()
            .expect("one row per query"))
    }

    pub fn forecast_batch(&self, queries: &[ForecastQuery]) -> Result<Vec<Vec<f64>>, KernError> {
        if let Some(q) = queries.iter().find(|q| q.input.len() != self.config.input_len) {
            return Err(KernError::LengthMismatch {
                expected: self.config.input_len,
                found: q.input.len(),
            });
        }
        self.model.forecast_batch(queries, self.config.horizon)
    }

    pub fn to_json(&self) -> Result<String, KernError> {
        let store = self.model.store();
        let parameters = store
            .iter()
            .filter(|(_, p)| p.name != RELATION_PARAM)
            .map(|(_, p)| NamedTensor {
                name: p.name.clone(),
                shape: p.value.shape(),
                values: p.value.to_rows(),
            })
            .collect();
        let relation_weights = match (self.model.taxonomy(), self.model.relation_weights()) {
            (Some(t), Some(w)) => t
                .edge_names()
                .into_iter()
                .zip(w.as_slice())
                .map(|((parent, child), &weight)| EdgeWeight {
                    parent,
                    child,
                    weight,
                })
                .collect(),
            _ => Vec::new(),
        };
        let repr = Repr {
            format_version: CHECKPOINT_FORMAT_VERSION,
            variant: self.variant(),
            config: self.config.clone(),
            dims: self.model.dims(),
            vocabulary: self.vocabulary.clone(),
            parameters,
            relation_weights,
            history: self.history.clone(),
        };
        serde_json::to_string_pretty(&repr).map_err(|e| KernError::Checkpoint(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self, KernError> {
        let repr: Repr =
            serde_json::from_str(text).map_err(|e| KernError::Checkpoint(e.to_string()))?;
        if repr.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(KernError::Checkpoint(format!(
                "unsupported format version {} (expected {CHECKPOINT_FORMAT_VERSION})",
                repr.format_version
            )));
        }
        let vocab = repr.vocabulary;
        let taxonomy = if vocab.taxonomy_edges.is_empty() {
            None
        } else {
            Some(build_taxonomy(&vocab.taxonomy_edges, &vocab.elements)?)
        };
        let mut store = ParamStore::new();
        for t in repr.parameters {
            let value = if t.values.is_empty() {
                Tensor::zeros(t.shape.0, t.shape.1)
            } else {
                Tensor::from_rows(&t.values)
                    .ok_or_else(|| KernError::Checkpoint(format!("ragged tensor `{}`", t.name)))?
            };
            if value.shape() != t.shape {
                return Err(KernError::Checkpoint(format!(
                    "tensor `{}` declares shape {:?} but holds {:?}",
                    t.name,
                    t.shape,
                    value.shape()
                )));
            }
            store.insert(t.name, value)?;
        }
        if let Some(tax) = taxonomy.as_ref().filter(|t| t.edge_count() > 0) {
            let weights = tax
                .edge_names()
                .iter()
                .map(|(p, c)| {
                    repr.relation_weights
                        .iter()
                        .find(|w| &w.parent == p && &w.child == c)
                        .map(|w| w.weight)
                        .ok_or_else(|| KernError::Checkpoint(format!("missing relation weight {p}->{c}")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            store.insert(RELATION_PARAM, Tensor::row(&weights))?;
        }
        let model = KernModel::from_store(
            store,
            repr.dims,
            taxonomy,
            repr.config.use_external_knowledge,
        )?;
        Ok(Self {
            config: repr.config,
            vocabulary: vocab,
            model,
            history: repr.history,
        })
    }

    /// Writes to a temporary sibling and renames it into place.
    pub fn save(&self, path: &Path) -> Result<(), KernError> {
        write_atomic(path, &self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, KernError> {
        let text = fs::read_to_string(path)
            .map_err(|e| KernError::Checkpoint(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}
