use rand::Rng;
use serde::{Deserialize, Serialize};

use super::KernError;
use crate::corpus::{timestep_position, Corpus, Sample, AGE_BANDS, GENDERS};
use crate::gradkernel::{Graph, LstmCellParams, NodeId, ParamId, ParamStore, Tensor};
use crate::taxonomy::{message_pass_graph, RelationWeights, Taxonomy};

/// Vocabulary and layer sizes fixed at construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub cities: usize,
    pub elements: usize,
    pub grid_period: usize,
    pub embed_dim: usize,
    pub hidden: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Ids {
    city: ParamId,
    age: ParamId,
    gender: ParamId,
    element: ParamId,
    timestep: ParamId,
    w_g: ParamId,
    b_g: ParamId,
    encoder: LstmCellParams,
    decoder_fwd: LstmCellParams,
    decoder_bwd: LstmCellParams,
    w_e: ParamId,
    b_e: ParamId,
    w_d: ParamId,
    b_d: ParamId,
    relation: Option<ParamId>,
}

pub(crate) const RELATION_PARAM: &str = "relation.weights";

/// One forecasting request: a group, an element and its last `T` values.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastQuery {
    pub city: usize,
    pub age_band: u8,
    pub gender: u8,
    pub element: usize,
    pub input: Vec<f64>,
    /// Grid index of the first input point.
    pub start_index: usize,
}

/// Column-major view of a batch: one entry per row.
#[derive(Debug, Clone, Default)]
pub(crate) struct Batch {
    pub city: Vec<usize>,
    pub age: Vec<usize>,
    pub gender: Vec<usize>,
    pub element: Vec<usize>,
    /// `T + T'` within-year positions per row.
    pub positions: Vec<Vec<usize>>,
    pub inputs: Vec<Vec<f64>>,
}

impl Batch {
    pub fn from_samples(corpus: &Corpus, samples: &[&Sample]) -> Self {
        let mut b = Batch::default();
        for s in samples {
            let g = &corpus.groups[s.group];
            b.city.push(g.city);
            b.age.push(g.age_band as usize);
            b.gender.push(g.gender as usize);
            b.element.push(s.element);
            b.positions.push(s.positions.clone());
            b.inputs.push(s.input.clone());
        }
        b
    }

    pub fn from_queries(queries: &[ForecastQuery], horizon: usize, grid_period: usize) -> Self {
        let mut b = Batch::default();
        for q in queries {
            b.city.push(q.city);
            b.age.push(q.age_band as usize);
            b.gender.push(q.gender as usize);
            b.element.push(q.element);
            b.positions.push(
                (0..q.input.len() + horizon)
                    .map(|i| timestep_position(q.start_index + i, grid_period))
                    .collect(),
            );
            b.inputs.push(q.input.clone());
        }
        b
    }

    pub fn len(&self) -> usize {
        self.city.len()
    }
}

/// Recorded nodes of one batched forward pass.
#[derive(Debug, Clone)]
pub struct ForwardOutput {
    /// `h_1..h_T`, each `B × H`.
    pub encoder_hidden: Vec<NodeId>,
    /// `[→h_t; ←h_t]` per horizon step, each `B × 2H`.
    pub decoder_hidden: Vec<NodeId>,
    /// `B × (T−1)`: column `t` predicts input point `t+1`.
    pub encoder_pred: NodeId,
    /// `B × T'`
    pub decoder_pred: NodeId,
}

/// Scalar nodes of the training objective.
#[derive(Debug, Clone, Copy)]
pub(crate) struct LossNodes {
    pub total: NodeId,
    pub sequence: NodeId,
    pub triplet: Option<NodeId>,
}

/// All learnable tensors plus the taxonomy they pass messages over.
#[derive(Debug, Clone, PartialEq)]
pub struct KernModel {
    store: ParamStore,
    dims: ModelDims,
    ids: Ids,
    taxonomy: Option<Taxonomy>,
    use_external: bool,
}

impl KernModel {
    /// Fresh parameters. Embedding rows are uniform in `[−1, 1]`; dense
    /// layers use `±1/sqrt(fan_in)`.
    pub fn new<R: Rng>(
        dims: ModelDims,
        taxonomy: Option<Taxonomy>,
        relation_init: Option<RelationWeights>,
        use_external: bool,
        rng: &mut R,
    ) -> Result<Self, KernError> {
        let (d, h) = (dims.embed_dim, dims.hidden);
        let mut s = ParamStore::new();
        s.insert_uniform("embed.city", dims.cities, d, 1, rng)?;
        s.insert_uniform("embed.age", AGE_BANDS, d, 1, rng)?;
        s.insert_uniform("embed.gender", GENDERS, d, 1, rng)?;
        s.insert_uniform("embed.element", dims.elements, d, 1, rng)?;
        s.insert_uniform("embed.timestep", dims.grid_period, d, 1, rng)?;
        s.insert_uniform("group.w", d, 3 * d, 3 * d, rng)?;
        s.insert_uniform("group.b", 1, d, 3 * d, rng)?;
        LstmCellParams::init(&mut s, "encoder", 3 * d + 1, h, rng)?;
        LstmCellParams::init(&mut s, "decoder_fwd", 3 * d, h, rng)?;
        LstmCellParams::init(&mut s, "decoder_bwd", 3 * d, h, rng)?;
        s.insert_uniform("head_e.w", 1, h, h, rng)?;
        s.insert_uniform("head_e.b", 1, 1, h, rng)?;
        s.insert_uniform("head_d.w", 1, 2 * h, 2 * h, rng)?;
        s.insert_uniform("head_d.b", 1, 1, 2 * h, rng)?;
        if let Some(t) = taxonomy.as_ref().filter(|t| t.edge_count() > 0) {
            let w = relation_init.unwrap_or_else(|| RelationWeights::uniform(t));
            if w.len() != t.edge_count() {
                return Err(KernError::InvalidConfig(format!(
                    "{} relation weights for {} taxonomy edges",
                    w.len(),
                    t.edge_count()
                )));
            }
            s.insert(RELATION_PARAM, Tensor::row(w.as_slice()))?;
        }
        Self::from_store(s, dims, taxonomy, use_external)
    }

    /// Rebinds a store holding every expected parameter name and shape.
    pub fn from_store(
        store: ParamStore,
        dims: ModelDims,
        taxonomy: Option<Taxonomy>,
        use_external: bool,
    ) -> Result<Self, KernError> {
        let (d, h) = (dims.embed_dim, dims.hidden);
        let get = |name: &str, shape: (usize, usize)| -> Result<ParamId, KernError> {
            let id = store
                .id(name)
                .ok_or_else(|| KernError::Checkpoint(format!("missing parameter `{name}`")))?;
            let found = store.value(id).shape();
            if found != shape {
                return Err(KernError::Checkpoint(format!(
                    "parameter `{name}` has shape {found:?}, expected {shape:?}"
                )));
            }
            Ok(id)
        };
        let lstm = |prefix: &str, input: usize| -> Result<LstmCellParams, KernError> {
            Ok(LstmCellParams {
                w_ih: get(&format!("{prefix}.w_ih"), (4 * h, input))?,
                w_hh: get(&format!("{prefix}.w_hh"), (4 * h, h))?,
                bias: get(&format!("{prefix}.bias"), (1, 4 * h))?,
            })
        };
        let edges = taxonomy.as_ref().map_or(0, Taxonomy::edge_count);
        if let Some(t) = &taxonomy {
            if t.node_count() != dims.elements {
                return Err(KernError::InvalidConfig(format!(
                    "taxonomy has {} nodes, vocabulary has {} elements",
                    t.node_count(),
                    dims.elements
                )));
            }
        }
        let ids = Ids {
            city: get("embed.city", (dims.cities, d))?,
            age: get("embed.age", (AGE_BANDS, d))?,
            gender: get("embed.gender", (GENDERS, d))?,
            element: get("embed.element", (dims.elements, d))?,
            timestep: get("embed.timestep", (dims.grid_period, d))?,
            w_g: get("group.w", (d, 3 * d))?,
            b_g: get("group.b", (1, d))?,
            encoder: lstm("encoder", 3 * d + 1)?,
            decoder_fwd: lstm("decoder_fwd", 3 * d)?,
            decoder_bwd: lstm("decoder_bwd", 3 * d)?,
            w_e: get("head_e.w", (1, h))?,
            b_e: get("head_e.b", (1, 1))?,
            w_d: get("head_d.w", (1, 2 * h))?,
            b_d: get("head_d.b", (1, 1))?,
            relation: if edges > 0 {
                Some(get(RELATION_PARAM, (1, edges))?)
            } else {
                None
            },
        };
        if store.len() != 20 + ids.relation.is_some() as usize {
            return Err(KernError::Checkpoint("unexpected extra parameters".into()));
        }
        Ok(Self {
            store,
            dims,
            ids,
            taxonomy,
            use_external,
        })
    }

    pub fn dims(&self) -> ModelDims {
        self.dims
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn taxonomy(&self) -> Option<&Taxonomy> {
        self.taxonomy.as_ref()
    }

    pub fn uses_external_knowledge(&self) -> bool {
        self.use_external && self.ids.relation.is_some()
    }

    /// Current relation weights, if the model has a taxonomy with edges.
    pub fn relation_weights(&self) -> Option<RelationWeights> {
        self.ids
            .relation
            .map(|id| RelationWeights::from_vec(self.store.value(id).data().to_vec()))
    }

    pub fn relation_param(&self) -> Option<ParamId> {
        self.ids.relation
    }

    /// `W_g·[c; a; n] + b_g` for one group.
    pub fn group_embed(&self, city: usize, age_band: usize, gender: usize) -> Result<Vec<f64>, KernError> {
        self.check_ids(&[city], &[age_band], &[gender], &[])?;
        let mut g = Graph::new();
        let node = self.group_node(&mut g, &[city], &[age_band], &[gender])?;
        Ok(g.value(node).data().to_vec())
    }

    /// Element embeddings after message passing (when enabled).
    pub fn element_embeddings(&self) -> Result<Vec<Vec<f64>>, KernError> {
        let mut g = Graph::new();
        let node = self.element_table(&mut g)?;
        Ok(g.value(node).to_rows())
    }

    fn check_ids(
        &self,
        city: &[usize],
        age: &[usize],
        gender: &[usize],
        element: &[usize],
    ) -> Result<(), KernError> {
        let checks: [(&'static str, &[usize], usize); 4] = [
            ("city", city, self.dims.cities),
            ("age band", age, AGE_BANDS),
            ("gender", gender, GENDERS),
            ("element", element, self.dims.elements),
        ];
        for (kind, ids, len) in checks {
            if let Some(&id) = ids.iter().find(|&&i| i >= len) {
                return Err(KernError::IdOutOfRange { kind, id, len });
            }
        }
        Ok(())
    }

    fn group_node(
        &self,
        g: &mut Graph,
        city: &[usize],
        age: &[usize],
        gender: &[usize],
    ) -> Result<NodeId, KernError> {
        let p = |g: &mut Graph, id| g.param(&self.store, id);
        let (ct, at, nt) = (p(g, self.ids.city), p(g, self.ids.age), p(g, self.ids.gender));
        let c = g.gather_rows(ct, city)?;
        let a = g.gather_rows(at, age)?;
        let n = g.gather_rows(nt, gender)?;
        let can = g.concat_cols(&[c, a, n])?;
        let (w, b) = (p(g, self.ids.w_g), p(g, self.ids.b_g));
        Ok(g.linear(can, w, b)?)
    }

    fn element_table(&self, g: &mut Graph) -> Result<NodeId, KernError> {
        let table = g.param(&self.store, self.ids.element);
        match (&self.taxonomy, self.ids.relation) {
            (Some(t), Some(rel)) if self.use_external => {
                let w = g.param(&self.store, rel);
                Ok(message_pass_graph(g, table, w, t)?)
            }
            _ => Ok(table),
        }
    }

    /// Records the encoder over the inputs and the decoder over `horizon` steps.
    pub(crate) fn forward(
        &self,
        g: &mut Graph,
        batch: &Batch,
        horizon: usize,
    ) -> Result<ForwardOutput, KernError> {
        let rows = batch.len();
        let t_in = batch.inputs.first().map_or(0, Vec::len);
        if rows == 0 || t_in < 2 {
            return Err(KernError::EmptySequence);
        }
        for (inp, pos) in batch.inputs.iter().zip(&batch.positions) {
            if inp.len() != t_in {
                return Err(KernError::LengthMismatch {
                    expected: t_in,
                    found: inp.len(),
                });
            }
            if pos.len() != t_in + horizon {
                return Err(KernError::LengthMismatch {
                    expected: t_in + horizon,
                    found: pos.len(),
                });
            }
        }
        self.check_ids(&batch.city, &batch.age, &batch.gender, &batch.element)?;
        if let Some(&bad) = batch.positions.iter().flatten().find(|&&p| p >= self.dims.grid_period) {
            return Err(KernError::IdOutOfRange {
                kind: "timestep",
                id: bad,
                len: self.dims.grid_period,
            });
        }

        let group = self.group_node(g, &batch.city, &batch.age, &batch.gender)?;
        let elements = self.element_table(g)?;
        let f = g.gather_rows(elements, &batch.element)?;
        let stat = g.concat_cols(&[group, f])?;
        let time_table = g.param(&self.store, self.ids.timestep);
        let time_at = |g: &mut Graph, t: usize| {
            let ids: Vec<usize> = batch.positions.iter().map(|p| p[t]).collect();
            g.gather_rows(time_table, &ids)
        };

        let hidden = self.dims.hidden;
        let enc = self.ids.encoder.leaves(g, &self.store);
        let mut h = g.constant(Tensor::zeros(rows, hidden));
        let mut c = g.constant(Tensor::zeros(rows, hidden));
        let mut encoder_hidden = Vec::with_capacity(t_in);
        for t in 0..t_in {
            let m = time_at(g, t)?;
            let y: Vec<f64> = batch.inputs.iter().map(|v| v[t]).collect();
            let y = g.constant(Tensor::column(&y));
            let x = g.concat_cols(&[stat, m, y])?;
            (h, c) = self.ids.encoder.step(g, &enc, x, h, c)?;
            encoder_hidden.push(h);
        }
        let (w_e, b_e) = (g.param(&self.store, self.ids.w_e), g.param(&self.store, self.ids.b_e));
        let enc_preds = encoder_hidden[..t_in - 1]
            .iter()
            .map(|&ht| g.linear(ht, w_e, b_e))
            .collect::<Result<Vec<_>, _>>()?;
        let encoder_pred = g.concat_cols(&enc_preds)?;

        let dec_inputs = (0..horizon)
            .map(|k| {
                let m = time_at(g, t_in + k)?;
                g.concat_cols(&[stat, m])
            })
            .collect::<Result<Vec<_>, _>>()?;
        let fwd = self.ids.decoder_fwd.leaves(g, &self.store);
        let bwd = self.ids.decoder_bwd.leaves(g, &self.store);
        let (mut hf, mut cf) = (h, c);
        let mut fwd_states = Vec::with_capacity(horizon);
        for &x in &dec_inputs {
            (hf, cf) = self.ids.decoder_fwd.step(g, &fwd, x, hf, cf)?;
            fwd_states.push(hf);
        }
        let (mut hb, mut cb) = (h, c);
        let mut bwd_states = vec![h; horizon];
        for k in (0..horizon).rev() {
            (hb, cb) = self.ids.decoder_bwd.step(g, &bwd, dec_inputs[k], hb, cb)?;
            bwd_states[k] = hb;
        }
        let (w_d, b_d) = (g.param(&self.store, self.ids.w_d), g.param(&self.store, self.ids.b_d));
        let mut decoder_hidden = Vec::with_capacity(horizon);
        let mut dec_preds = Vec::with_capacity(horizon);
        for k in 0..horizon {
            let hd = g.concat_cols(&[fwd_states[k], bwd_states[k]])?;
            dec_preds.push(g.linear(hd, w_d, b_d)?);
            decoder_hidden.push(hd);
        }
        let decoder_pred = g.concat_cols(&dec_preds)?;
        Ok(ForwardOutput {
            encoder_hidden,
            decoder_hidden,
            encoder_pred,
            decoder_pred,
        })
    }

    /// `mean_s(L_e^s + L_d^s) + (λ/3)·mean_triplets(r)`.
    pub(crate) fn loss(
        &self,
        g: &mut Graph,
        out: &ForwardOutput,
        batch: &Batch,
        targets: &[Vec<f64>],
        triplets: &[(usize, usize, usize)],
        lambda: f64,
    ) -> Result<LossNodes, KernError> {
        let rows = batch.len();
        let t_in = batch.inputs[0].len();
        let horizon = g.value(out.decoder_pred).cols();
        if targets.len() != rows {
            return Err(KernError::LengthMismatch {
                expected: rows,
                found: targets.len(),
            });
        }
        if let Some(t) = targets.iter().find(|t| t.len() != horizon) {
            return Err(KernError::LengthMismatch {
                expected: horizon,
                found: t.len(),
            });
        }
        let enc_truth: Vec<f64> = batch.inputs.iter().flat_map(|v| v[1..].iter().copied()).collect();
        let enc_truth = g.constant(Tensor::from_vec(rows, t_in - 1, enc_truth));
        let dec_truth = g.constant(Tensor::from_vec(rows, horizon, targets.concat()));
        let l1_mean = |g: &mut Graph, pred, truth, n: usize| -> Result<NodeId, KernError> {
            let diff = g.sub(pred, truth)?;
            let abs = g.abs(diff);
            let sum = g.sum_all(abs);
            Ok(g.scale(sum, 1.0 / n as f64))
        };
        let le = l1_mean(g, out.encoder_pred, enc_truth, rows * (t_in - 1))?;
        let ld = l1_mean(g, out.decoder_pred, dec_truth, rows * horizon)?;
        let sequence = g.add(le, ld)?;
        if triplets.is_empty() || lambda == 0.0 {
            return Ok(LossNodes {
                total: sequence,
                sequence,
                triplet: None,
            });
        }
        let ks: Vec<usize> = triplets.iter().map(|t| t.0).collect();
        let ps: Vec<usize> = triplets.iter().map(|t| t.1).collect();
        let qs: Vec<usize> = triplets.iter().map(|t| t.2).collect();
        let steps: Vec<NodeId> = out.encoder_hidden[..t_in - 1]
            .iter()
            .chain(&out.decoder_hidden)
            .copied()
            .collect();
        let hinges = steps
            .iter()
            .map(|&hs| {
                let dkp = g.row_l1_dist(hs, &ks, &ps)?;
                let dkq = g.row_l1_dist(hs, &ks, &qs)?;
                let diff = g.sub(dkp, dkq)?;
                Ok(g.relu(diff))
            })
            .collect::<Result<Vec<_>, KernError>>()?;
        let hinge_sum = g.add_all(&hinges)?;
        let hinge_sum = g.sum_all(hinge_sum);
        let r = g.scale(hinge_sum, 1.0 / (triplets.len() * steps.len()) as f64);
        let weighted = g.scale(r, lambda / 3.0);
        let total = g.add(sequence, weighted)?;
        Ok(LossNodes {
            total,
            sequence,
            triplet: Some(r),
        })
    }

    /// Decoder predictions for each query; a pure function of the parameters.
    pub fn forecast_batch(
        &self,
        queries: &[ForecastQuery],
        horizon: usize,
    ) -> Result<Vec<Vec<f64>>, KernError> {
        if queries.is_empty() {
            return Ok(Vec::new());
        }
        let batch = Batch::from_queries(queries, horizon, self.dims.grid_period);
        let mut g = Graph::new();
        let out = self.forward(&mut g, &batch, horizon)?;
        Ok(g.value(out.decoder_pred).to_rows())
    }

    /// Per-row encoder and decoder hidden states for a batch of queries.
    pub fn hidden_states(
        &self,
        queries: &[ForecastQuery],
        horizon: usize,
    ) -> Result<Vec<super::StageHiddens>, KernError> {
        let batch = Batch::from_queries(queries, horizon, self.dims.grid_period);
        let mut g = Graph::new();
        let out = self.forward(&mut g, &batch, horizon)?;
        let t_in = batch.inputs[0].len();
        Ok((0..batch.len())
            .map(|r| super::StageHiddens {
                encoder: out.encoder_hidden[..t_in - 1]
                    .iter()
                    .map(|&n| g.value(n).row_slice(r).to_vec())
                    .collect(),
                decoder: out
                    .decoder_hidden
                    .iter()
                    .map(|&n| g.value(n).row_slice(r).to_vec())
                    .collect(),
            })
            .collect())
    }
}
