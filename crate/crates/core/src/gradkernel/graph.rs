//! Recorded computation graph with reverse-mode gradient accumulation.
//!
//! Every operation appends a node holding its forward value; [`Graph::backward`]
//! walks the nodes in reverse creation order, which is a valid topological
//! order because a node can only reference nodes created before it.

use super::tensor::gemm;
use super::{GradError, ParamId, ParamStore, Tensor};

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

/// One `(parent row, child row, weight index)` term of a weighted row scatter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScatterEdge {
    pub target: usize,
    pub source: usize,
    pub weight: usize,
}

#[derive(Debug)]
enum Op {
    Constant,
    Param(ParamId),
    MatMulT { x: NodeId, w: NodeId },
    AddRow { x: NodeId, bias: NodeId },
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Abs(NodeId),
    Relu(NodeId),
    ConcatCols(Vec<NodeId>),
    SliceCols { x: NodeId, start: usize },
    GatherRows { table: NodeId, ids: Vec<usize> },
    SumAll(NodeId),
    RowL1Dist { x: NodeId, left: Vec<usize>, right: Vec<usize> },
    ScatterWeighted { table: NodeId, weights: NodeId, edges: Vec<ScatterEdge> },
    LstmCell(Box<LstmCache>),
}

#[derive(Debug)]
struct LstmCache {
    x: NodeId,
    h: NodeId,
    c: NodeId,
    w_ih: NodeId,
    w_hh: NodeId,
    bias: NodeId,
    /// Activated gates `[i | f | g | o]`, `B × 4H`.
    gates: Tensor,
    /// `tanh(c')`, `B × H`.
    tanh_c: Tensor,
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// A single-use recording of a forward computation.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

#[inline]
fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

#[inline]
fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn mismatch(op: &'static str, left: (usize, usize), right: (usize, usize)) -> GradError {
    GradError::ShapeMismatch { op, left, right }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn shape(&self, id: NodeId) -> (usize, usize) {
        self.nodes[id.0].value.shape()
    }

    fn push(&mut self, value: Tensor, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Constant)
    }

    /// Records the current value of a parameter as a leaf.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> NodeId {
        self.push(store.value(id).clone(), Op::Param(id))
    }

    /// `x · wᵀ` for `x: n × k`, `w: m × k`.
    pub fn matmul_t(&mut self, x: NodeId, w: NodeId) -> Result<NodeId, GradError> {
        let (xs, ws) = (self.shape(x), self.shape(w));
        if xs.1 != ws.1 {
            return Err(mismatch("matmul_t", xs, ws));
        }
        let mut out = Tensor::zeros(xs.0, ws.0);
        gemm(1.0, self.value(x), false, self.value(w), true, 0.0, &mut out);
        Ok(self.push(out, Op::MatMulT { x, w }))
    }

    /// Adds a `1 × m` bias row to every row of `x`.
    pub fn add_row(&mut self, x: NodeId, bias: NodeId) -> Result<NodeId, GradError> {
        let (xs, bs) = (self.shape(x), self.shape(bias));
        if bs.0 != 1 || bs.1 != xs.1 {
            return Err(mismatch("add_row", xs, bs));
        }
        let mut out = self.value(x).clone();
        let b = self.value(bias).data().to_vec();
        for r in 0..xs.0 {
            for (o, bv) in out.row_slice_mut(r).iter_mut().zip(&b) {
                *o += bv;
            }
        }
        Ok(self.push(out, Op::AddRow { x, bias }))
    }

    /// `x · wᵀ + b`.
    pub fn linear(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId, GradError> {
        let y = self.matmul_t(x, w)?;
        self.add_row(y, b)
    }

    fn zip_with(
        &mut self,
        name: &'static str,
        a: NodeId,
        b: NodeId,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor, GradError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(mismatch(name, sa, sb));
        }
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&p, &q)| f(p, q))
            .collect();
        Ok(Tensor::from_vec(sa.0, sa.1, data))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, GradError> {
        let v = self.zip_with("add", a, b, |p, q| p + q)?;
        Ok(self.push(v, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, GradError> {
        let v = self.zip_with("sub", a, b, |p, q| p - q)?;
        Ok(self.push(v, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, GradError> {
        let v = self.zip_with("mul", a, b, |p, q| p * q)?;
        Ok(self.push(v, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> NodeId {
        let v = self.value(a).map(|x| x * factor);
        self.push(v, Op::Scale(a, factor))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(sigmoid);
        self.push(v, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(f64::tanh);
        self.push(v, Op::Tanh(a))
    }

    /// Elementwise `|a|`; the subgradient at zero is zero.
    pub fn abs(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(f64::abs);
        self.push(v, Op::Abs(a))
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(|x| x.max(0.0));
        self.push(v, Op::Relu(a))
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId, GradError> {
        let rows = parts.first().map_or(0, |&p| self.shape(p).0);
        for &p in parts {
            if self.shape(p).0 != rows {
                return Err(mismatch("concat_cols", (rows, 0), self.shape(p)));
            }
        }
        let cols: usize = parts.iter().map(|&p| self.shape(p).1).sum();
        let mut out = Tensor::zeros(rows, cols);
        for r in 0..rows {
            let dst = out.row_slice_mut(r);
            let mut off = 0;
            for &p in parts {
                let src = self.nodes[p.0].value.row_slice(r);
                dst[off..off + src.len()].copy_from_slice(src);
                off += src.len();
            }
        }
        Ok(self.push(out, Op::ConcatCols(parts.to_vec())))
    }

    pub fn slice_cols(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId, GradError> {
        let xs = self.shape(x);
        if start + len > xs.1 {
            return Err(mismatch("slice_cols", xs, (start, len)));
        }
        let mut out = Tensor::zeros(xs.0, len);
        for r in 0..xs.0 {
            out.row_slice_mut(r)
                .copy_from_slice(&self.value(x).row_slice(r)[start..start + len]);
        }
        Ok(self.push(out, Op::SliceCols { x, start }))
    }

    /// Selects rows of `table` (embedding lookup).
    pub fn gather_rows(&mut self, table: NodeId, ids: &[usize]) -> Result<NodeId, GradError> {
        let ts = self.shape(table);
        if let Some(&bad) = ids.iter().find(|&&i| i >= ts.0) {
            return Err(GradError::IndexOutOfRange { index: bad, len: ts.0 });
        }
        let mut out = Tensor::zeros(ids.len(), ts.1);
        for (r, &i) in ids.iter().enumerate() {
            out.row_slice_mut(r)
                .copy_from_slice(self.value(table).row_slice(i));
        }
        Ok(self.push(
            out,
            Op::GatherRows {
                table,
                ids: ids.to_vec(),
            },
        ))
    }

    pub fn sum_all(&mut self, a: NodeId) -> NodeId {
        let v = Tensor::scalar(self.value(a).sum());
        self.push(v, Op::SumAll(a))
    }

    /// Sums several nodes of identical shape.
    pub fn add_all(&mut self, parts: &[NodeId]) -> Result<NodeId, GradError> {
        let (&first, rest) = parts
            .split_first()
            .ok_or(GradError::Empty("add_all"))?;
        rest.iter().try_fold(first, |acc, &p| self.add(acc, p))
    }

    /// Per-pair L1 distance between rows: `out[i] = Σ_j |x[left[i], j] − x[right[i], j]|`.
    pub fn row_l1_dist(
        &mut self,
        x: NodeId,
        left: &[usize],
        right: &[usize],
    ) -> Result<NodeId, GradError> {
        let xs = self.shape(x);
        if left.len() != right.len() {
            return Err(mismatch("row_l1_dist", (left.len(), 0), (right.len(), 0)));
        }
        if let Some(&bad) = left.iter().chain(right).find(|&&i| i >= xs.0) {
            return Err(GradError::IndexOutOfRange { index: bad, len: xs.0 });
        }
        let xv = self.value(x);
        let data = left
            .iter()
            .zip(right)
            .map(|(&a, &b)| {
                xv.row_slice(a)
                    .iter()
                    .zip(xv.row_slice(b))
                    .map(|(p, q)| (p - q).abs())
                    .sum()
            })
            .collect();
        let out = Tensor::from_vec(left.len(), 1, data);
        Ok(self.push(
            out,
            Op::RowL1Dist {
                x,
                left: left.to_vec(),
                right: right.to_vec(),
            },
        ))
    }

    /// `out = table; out[target] += w[weight] · table[source]` for every edge.
    ///
    /// Sources are always read from the input `table`, never from rows
    /// already updated by this call.
    pub fn scatter_weighted(
        &mut self,
        table: NodeId,
        weights: NodeId,
        edges: &[ScatterEdge],
    ) -> Result<NodeId, GradError> {
        let ts = self.shape(table);
        let nw = self.value(weights).len();
        for e in edges {
            for (idx, len) in [(e.target, ts.0), (e.source, ts.0), (e.weight, nw)] {
                if idx >= len {
                    return Err(GradError::IndexOutOfRange { index: idx, len });
                }
            }
        }
        let tv = self.value(table);
        let wv = self.value(weights).data();
        let mut out = tv.clone();
        for e in edges {
            let w = wv[e.weight];
            for c in 0..ts.1 {
                let v = out.get(e.target, c) + w * tv.get(e.source, c);
                out.set(e.target, c, v);
            }
        }
        Ok(self.push(
            out,
            Op::ScatterWeighted {
                table,
                weights,
                edges: edges.to_vec(),
            },
        ))
    }

    /// Fused LSTM cell with gate order `(input, forget, cell candidate, output)`.
    ///
    /// Shapes: `x: B × in`, `h, c: B × H`, `w_ih: 4H × in`, `w_hh: 4H × H`,
    /// `bias: 1 × 4H`. The returned node holds `[h' | c']` as `B × 2H`; use
    /// [`Graph::slice_cols`] to split it.
    pub fn lstm_cell(
        &mut self,
        x: NodeId,
        h: NodeId,
        c: NodeId,
        w_ih: NodeId,
        w_hh: NodeId,
        bias: NodeId,
    ) -> Result<NodeId, GradError> {
        let (xs, hs, cs) = (self.shape(x), self.shape(h), self.shape(c));
        let (wis, whs, bs) = (self.shape(w_ih), self.shape(w_hh), self.shape(bias));
        let hidden = hs.1;
        if hidden == 0 {
            return Err(GradError::Empty("lstm hidden size"));
        }
        if hs != cs || hs.0 != xs.0 {
            return Err(mismatch("lstm_cell state", hs, cs));
        }
        if wis != (4 * hidden, xs.1) {
            return Err(mismatch("lstm_cell w_ih", wis, (4 * hidden, xs.1)));
        }
        if whs != (4 * hidden, hidden) {
            return Err(mismatch("lstm_cell w_hh", whs, (4 * hidden, hidden)));
        }
        if bs != (1, 4 * hidden) {
            return Err(mismatch("lstm_cell bias", bs, (1, 4 * hidden)));
        }
        let batch = xs.0;
        let mut gates = Tensor::zeros(batch, 4 * hidden);
        for r in 0..batch {
            gates.row_slice_mut(r).copy_from_slice(self.value(bias).data());
        }
        gemm(1.0, self.value(x), false, self.value(w_ih), true, 1.0, &mut gates);
        gemm(1.0, self.value(h), false, self.value(w_hh), true, 1.0, &mut gates);

        let mut out = Tensor::zeros(batch, 2 * hidden);
        let mut tanh_c = Tensor::zeros(batch, hidden);
        let c_prev = &self.nodes[c.0].value;
        for r in 0..batch {
            let g = gates.row_slice_mut(r);
            for v in &mut g[..2 * hidden] {
                *v = sigmoid(*v);
            }
            for v in &mut g[2 * hidden..3 * hidden] {
                *v = v.tanh();
            }
            for v in &mut g[3 * hidden..] {
                *v = sigmoid(*v);
            }
            let g = gates.row_slice(r);
            let cp = c_prev.row_slice(r);
            let o_row = out.row_slice_mut(r);
            let tc_row = tanh_c.row_slice_mut(r);
            for j in 0..hidden {
                let (ig, fg, gg, og) = (g[j], g[hidden + j], g[2 * hidden + j], g[3 * hidden + j]);
                let cn = fg * cp[j] + ig * gg;
                let tc = cn.tanh();
                tc_row[j] = tc;
                o_row[j] = og * tc;
                o_row[hidden + j] = cn;
            }
        }
        Ok(self.push(
            out,
            Op::LstmCell(Box::new(LstmCache {
                x,
                h,
                c,
                w_ih,
                w_hh,
                bias,
                gates,
                tanh_c,
            })),
        ))
    }

    /// Gradients of the scalar `loss` with respect to every node.
    pub fn gradients(&self, loss: NodeId) -> Result<Vec<Option<Tensor>>, GradError> {
        let ls = self.shape(loss);
        if ls != (1, 1) {
            return Err(GradError::NonScalarLoss { shape: ls });
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::scalar(1.0));

        fn acc(grads: &mut [Option<Tensor>], id: NodeId, g: Tensor) {
            match &mut grads[id.0] {
                Some(existing) => existing.add_assign(&g),
                slot @ None => *slot = Some(g),
            }
        }

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].clone() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Constant | Op::Param(_) => {}
                Op::MatMulT { x, w } => {
                    let xv = self.value(*x);
                    let wv = self.value(*w);
                    let mut dx = Tensor::zeros(xv.rows(), xv.cols());
                    gemm(1.0, &g, false, wv, false, 0.0, &mut dx);
                    let mut dw = Tensor::zeros(wv.rows(), wv.cols());
                    gemm(1.0, &g, true, xv, false, 0.0, &mut dw);
                    acc(&mut grads, *x, dx);
                    acc(&mut grads, *w, dw);
                }
                Op::AddRow { x, bias } => {
                    let mut db = Tensor::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (d, v) in db.data_mut().iter_mut().zip(g.row_slice(r)) {
                            *d += v;
                        }
                    }
                    acc(&mut grads, *bias, db);
                    acc(&mut grads, *x, g);
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, g);
                }
                Op::Sub(a, b) => {
                    acc(&mut grads, *b, g.map(|v| -v));
                    acc(&mut grads, *a, g);
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let da = zip(&g, bv, |d, q| d * q);
                    let db = zip(&g, av, |d, p| d * p);
                    acc(&mut grads, *a, da);
                    acc(&mut grads, *b, db);
                }
                Op::Scale(a, f) => acc(&mut grads, *a, g.map(|v| v * f)),
                Op::Sigmoid(a) => {
                    let d = zip(&g, &node.value, |d, s| d * s * (1.0 - s));
                    acc(&mut grads, *a, d);
                }
                Op::Tanh(a) => {
                    let d = zip(&g, &node.value, |d, t| d * (1.0 - t * t));
                    acc(&mut grads, *a, d);
                }
                Op::Abs(a) => {
                    let d = zip(&g, self.value(*a), |d, x| d * sign(x));
                    acc(&mut grads, *a, d);
                }
                Op::Relu(a) => {
                    let d = zip(&g, self.value(*a), |d, x| if x > 0.0 { d } else { 0.0 });
                    acc(&mut grads, *a, d);
                }
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let (rows, cols) = self.shape(p);
                        let mut d = Tensor::zeros(rows, cols);
                        for r in 0..rows {
                            d.row_slice_mut(r)
                                .copy_from_slice(&g.row_slice(r)[off..off + cols]);
                        }
                        off += cols;
                        acc(&mut grads, p, d);
                    }
                }
                Op::SliceCols { x, start } => {
                    let (rows, cols) = self.shape(*x);
                    let mut d = Tensor::zeros(rows, cols);
                    for r in 0..rows {
                        d.row_slice_mut(r)[*start..*start + g.cols()]
                            .copy_from_slice(g.row_slice(r));
                    }
                    acc(&mut grads, *x, d);
                }
                Op::GatherRows { table, ids } => {
                    let (rows, cols) = self.shape(*table);
                    let mut d = Tensor::zeros(rows, cols);
                    for (r, &i) in ids.iter().enumerate() {
                        for (dv, gv) in d.row_slice_mut(i).iter_mut().zip(g.row_slice(r)) {
                            *dv += gv;
                        }
                    }
                    acc(&mut grads, *table, d);
                }
                Op::SumAll(a) => {
                    let (rows, cols) = self.shape(*a);
                    acc(&mut grads, *a, Tensor::filled(rows, cols, g.data()[0]));
                }
                Op::RowL1Dist { x, left, right } => {
                    let xv = self.value(*x);
                    let mut d = Tensor::zeros(xv.rows(), xv.cols());
                    for (k, (&a, &b)) in left.iter().zip(right).enumerate() {
                        let gk = g.data()[k];
                        for c in 0..xv.cols() {
                            let s = sign(xv.get(a, c) - xv.get(b, c)) * gk;
                            d.set(a, c, d.get(a, c) + s);
                            d.set(b, c, d.get(b, c) - s);
                        }
                    }
                    acc(&mut grads, *x, d);
                }
                Op::ScatterWeighted {
                    table,
                    weights,
                    edges,
                } => {
                    let tv = self.value(*table);
                    let wv = self.value(*weights);
                    let mut dt = g.clone();
                    let mut dw = Tensor::zeros(wv.rows(), wv.cols());
                    for e in edges {
                        let w = wv.data()[e.weight];
                        let mut dot = 0.0;
                        for c in 0..tv.cols() {
                            let gt = g.get(e.target, c);
                            dot += gt * tv.get(e.source, c);
                            dt.set(e.source, c, dt.get(e.source, c) + w * gt);
                        }
                        dw.data_mut()[e.weight] += dot;
                    }
                    acc(&mut grads, *table, dt);
                    acc(&mut grads, *weights, dw);
                }
                Op::LstmCell(cache) => {
                    let hidden = cache.tanh_c.cols();
                    let batch = g.rows();
                    let c_prev = self.value(cache.c);
                    let mut dpre = Tensor::zeros(batch, 4 * hidden);
                    let mut dc_prev = Tensor::zeros(batch, hidden);
                    for r in 0..batch {
                        let gr = g.row_slice(r);
                        let gates = cache.gates.row_slice(r);
                        let tc = cache.tanh_c.row_slice(r);
                        let cp = c_prev.row_slice(r);
                        let dp = dpre.row_slice_mut(r);
                        let dcp = dc_prev.row_slice_mut(r);
                        for j in 0..hidden {
                            let (ig, fg, gg, og) = (
                                gates[j],
                                gates[hidden + j],
                                gates[2 * hidden + j],
                                gates[3 * hidden + j],
                            );
                            let dh = gr[j];
                            let dc = gr[hidden + j] + dh * og * (1.0 - tc[j] * tc[j]);
                            dp[j] = dc * gg * ig * (1.0 - ig);
                            dp[hidden + j] = dc * cp[j] * fg * (1.0 - fg);
                            dp[2 * hidden + j] = dc * ig * (1.0 - gg * gg);
                            dp[3 * hidden + j] = dh * tc[j] * og * (1.0 - og);
                            dcp[j] = dc * fg;
                        }
                    }
                    let xv = self.value(cache.x);
                    let hv = self.value(cache.h);
                    let wiv = self.value(cache.w_ih);
                    let whv = self.value(cache.w_hh);
                    let mut dx = Tensor::zeros(xv.rows(), xv.cols());
                    gemm(1.0, &dpre, false, wiv, false, 0.0, &mut dx);
                    let mut dh = Tensor::zeros(hv.rows(), hv.cols());
                    gemm(1.0, &dpre, false, whv, false, 0.0, &mut dh);
                    let mut dwi = Tensor::zeros(wiv.rows(), wiv.cols());
                    gemm(1.0, &dpre, true, xv, false, 0.0, &mut dwi);
                    let mut dwh = Tensor::zeros(whv.rows(), whv.cols());
                    gemm(1.0, &dpre, true, hv, false, 0.0, &mut dwh);
                    let mut db = Tensor::zeros(1, 4 * hidden);
                    for r in 0..batch {
                        for (d, v) in db.data_mut().iter_mut().zip(dpre.row_slice(r)) {
                            *d += v;
                        }
                    }
                    acc(&mut grads, cache.x, dx);
                    acc(&mut grads, cache.h, dh);
                    acc(&mut grads, cache.c, dc_prev);
                    acc(&mut grads, cache.w_ih, dwi);
                    acc(&mut grads, cache.w_hh, dwh);
                    acc(&mut grads, cache.bias, db);
                }
            }
        }
        Ok(grads)
    }

    /// Back-propagates from `loss` and adds the result to each parameter's
    /// gradient accumulator. Calling it twice doubles the accumulated gradient.
    pub fn backward(&self, loss: NodeId, store: &mut ParamStore) -> Result<(), GradError> {
        let grads = self.gradients(loss)?;
        for (node, grad) in self.nodes.iter().zip(grads) {
            if let (Op::Param(id), Some(g)) = (&node.op, grad) {
                let p = store.get_mut(*id);
                if p.grad.shape() != g.shape() {
                    return Err(mismatch("backward", p.grad.shape(), g.shape()));
                }
                p.grad.add_assign(&g);
            }
        }
        Ok(())
    }
}

fn zip(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&p, &q)| f(p, q))
        .collect();
    Tensor::from_vec(a.rows(), a.cols(), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_gradient() {
        let mut store = ParamStore::new();
        let x = store.insert("x", Tensor::scalar(3.0)).unwrap();
        let mut g = Graph::new();
        let xn = g.param(&store, x);
        let sq = g.mul(xn, xn).unwrap();
        g.backward(sq, &mut store).unwrap();
        assert_eq!(g.value(sq).item(), Some(9.0));
        assert_eq!(store.grad(x).item(), Some(6.0));
    }

    #[test]
    fn l1_sign_convention() {
        let mut store = ParamStore::new();
        let x = store.insert("x", Tensor::scalar(2.0)).unwrap();
        let y = store.insert("y", Tensor::scalar(1.0)).unwrap();
        let mut g = Graph::new();
        let (xn, yn) = (g.param(&store, x), g.param(&store, y));
        let d = g.sub(xn, yn).unwrap();
        let l = g.abs(d);
        g.backward(l, &mut store).unwrap();
        assert_eq!(store.grad(x).item(), Some(1.0));
        assert_eq!(store.grad(y).item(), Some(-1.0));

        // tie: subgradient zero
        store.zero_grad();
        store.get_mut(y).value = Tensor::scalar(2.0);
        let mut g = Graph::new();
        let (xn, yn) = (g.param(&store, x), g.param(&store, y));
        let d = g.sub(xn, yn).unwrap();
        let l = g.abs(d);
        g.backward(l, &mut store).unwrap();
        assert_eq!(store.grad(x).item(), Some(0.0));
        assert_eq!(store.grad(y).item(), Some(0.0));
    }

    #[test]
    fn backward_requires_scalar() {
        let mut store = ParamStore::new();
        let mut g = Graph::new();
        let v = g.constant(Tensor::row(&[1.0, 2.0]));
        assert!(matches!(
            g.backward(v, &mut store),
            Err(GradError::NonScalarLoss { shape: (1, 2) })
        ));
    }

    #[test]
    fn backward_twice_doubles() {
        let mut store = ParamStore::new();
        let w = store
            .insert("w", Tensor::from_vec(2, 3, vec![0.1, -0.2, 0.3, 0.5, 0.7, -1.1]))
            .unwrap();
        let mut g = Graph::new();
        let wn = g.param(&store, w);
        let x = g.constant(Tensor::row(&[1.0, 2.0, -3.0]));
        let y = g.matmul_t(x, wn).unwrap();
        let t = g.tanh(y);
        let s = g.sum_all(t);
        g.backward(s, &mut store).unwrap();
        let once = store.grad(w).clone();
        g.backward(s, &mut store).unwrap();
        for (a, b) in store.grad(w).data().iter().zip(once.data()) {
            assert_eq!(*a, 2.0 * b);
        }
    }

    #[test]
    fn shape_mismatch_reported() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::zeros(2, 3));
        let b = g.constant(Tensor::zeros(3, 2));
        assert!(matches!(g.add(a, b), Err(GradError::ShapeMismatch { .. })));
        assert!(matches!(
            g.gather_rows(a, &[5]),
            Err(GradError::IndexOutOfRange { index: 5, len: 2 })
        ));
    }
}
