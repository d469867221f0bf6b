//! Minimal differentiable-computation substrate.
//!
//! Values are dense `f64` matrices. A [`Graph`] records operations as they
//! run; [`Graph::backward`] accumulates `dLoss/dθ` into the [`ParamStore`].
//! The LSTM cell is a single fused node so long unrolls stay cheap.

mod check;
mod graph;
mod optim;
mod params;
mod tensor;

use rand::Rng;
use thiserror::Error;

pub use check::{finite_diff_check, GradCheckReport};
pub use graph::{Graph, NodeId, ScatterEdge};
pub use optim::{Optimizer, OptimizerConfig, OptimizerKind};
pub use params::{ParamId, ParamStore, Parameter};
pub use tensor::Tensor;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GradError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("backward called on non-scalar node of shape {shape:?}")]
    NonScalarLoss { shape: (usize, usize) },
    #[error("non-finite gradient in parameter `{0}`")]
    NonFiniteGradient(String),
    #[error("duplicate parameter name `{0}`")]
    DuplicateParameter(String),
    #[error("empty input to {0}")]
    Empty(&'static str),
}

/// Parameters of one LSTM cell, gate order `(input, forget, cell, output)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LstmCellParams {
    /// `4H × input_dim`
    pub w_ih: ParamId,
    /// `4H × H`
    pub w_hh: ParamId,
    /// `1 × 4H`
    pub bias: ParamId,
}

impl LstmCellParams {
    /// Registers `{prefix}.w_ih`, `{prefix}.w_hh` and `{prefix}.bias`.
    ///
    /// Weights are uniform in `±1/sqrt(H)`; the forget-gate bias starts at 1.
    pub fn init<R: Rng>(
        store: &mut ParamStore,
        prefix: &str,
        input_dim: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self, GradError> {
        if hidden == 0 {
            return Err(GradError::Empty("lstm hidden size"));
        }
        let w_ih = store.insert_uniform(format!("{prefix}.w_ih"), 4 * hidden, input_dim, hidden, rng)?;
        let w_hh = store.insert_uniform(format!("{prefix}.w_hh"), 4 * hidden, hidden, hidden, rng)?;
        let bias = store.insert_uniform(format!("{prefix}.bias"), 1, 4 * hidden, hidden, rng)?;
        for v in &mut store.get_mut(bias).value.data_mut()[hidden..2 * hidden] {
            *v = 1.0;
        }
        Ok(Self { w_ih, w_hh, bias })
    }

    pub fn hidden(&self, store: &ParamStore) -> usize {
        store.value(self.w_hh).cols()
    }

    pub fn input_dim(&self, store: &ParamStore) -> usize {
        store.value(self.w_ih).cols()
    }

    /// Records one cell step and returns `(h', c')`.
    pub fn step(
        &self,
        graph: &mut Graph,
        leaves: &LstmLeaves,
        x: NodeId,
        h: NodeId,
        c: NodeId,
    ) -> Result<(NodeId, NodeId), GradError> {
        let out = graph.lstm_cell(x, h, c, leaves.w_ih, leaves.w_hh, leaves.bias)?;
        let hidden = graph.value(out).cols() / 2;
        Ok((
            graph.slice_cols(out, 0, hidden)?,
            graph.slice_cols(out, hidden, hidden)?,
        ))
    }

    /// Registers the weights as graph leaves once per forward pass.
    pub fn leaves(&self, graph: &mut Graph, store: &ParamStore) -> LstmLeaves {
        LstmLeaves {
            w_ih: graph.param(store, self.w_ih),
            w_hh: graph.param(store, self.w_hh),
            bias: graph.param(store, self.bias),
        }
    }
}

/// Graph nodes of an LSTM cell's weights within one recorded pass.
#[derive(Debug, Clone, Copy)]
pub struct LstmLeaves {
    pub w_ih: NodeId,
    pub w_hh: NodeId,
    pub bias: NodeId,
}

/// One LSTM step on plain vectors: returns `(h', c')`.
pub fn lstm_cell(
    x: &[f64],
    h: &[f64],
    c: &[f64],
    params: &LstmCellParams,
    store: &ParamStore,
) -> Result<(Vec<f64>, Vec<f64>), GradError> {
    let mut g = Graph::new();
    let leaves = params.leaves(&mut g, store);
    let xn = g.constant(Tensor::row(x));
    let hn = g.constant(Tensor::row(h));
    let cn = g.constant(Tensor::row(c));
    let (h2, c2) = params.step(&mut g, &leaves, xn, hn, cn)?;
    Ok((g.value(h2).data().to_vec(), g.value(c2).data().to_vec()))
}
