use rand::Rng;

use super::params::{GradStore, ParamId, ParamStore};
use super::tensor::{matmul_acc, matmul_at_acc, matmul_bt_acc, Tensor};
use pharmvig_core::rng::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug)]
enum Op {
    Input,
    Param(ParamId),
    Gather { table: ParamId, ids: Vec<usize> },
    MatMul(NodeId, NodeId),
    MatMulBT(NodeId, NodeId),
    Add(NodeId, NodeId),
    AddRow(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f32),
    Gelu(NodeId),
    Tanh(NodeId),
    Sigmoid(NodeId),
    Relu(NodeId),
    LayerNorm { x: NodeId, gamma: NodeId, beta: NodeId, xhat: Tensor, inv_std: Vec<f32> },
    SoftmaxRows(NodeId),
    SliceCols { a: NodeId, start: usize },
    ConcatCols(Vec<NodeId>),
    SliceRows { a: NodeId, start: usize },
    MaxRows { a: NodeId, argmax: Vec<usize> },
    Dropout { a: NodeId, mask: Vec<f32> },
    CrossEntropy { logits: NodeId, targets: Vec<Option<usize>>, probs: Tensor, weight: f32 },
}

struct Node {
    value: Option<Tensor>,
    op: Op,
}

/// Single-use reverse-mode tape. Parameters are read from the store by
/// reference; their gradients are accumulated into a GradStore on backward.
pub struct Graph<'a> {
    params: &'a ParamStore,
    rng: Option<&'a mut SeededRng>,
    nodes: Vec<Node>,
}

fn gelu(x: f32) -> f32 {
    0.5 * x * (1.0 + libm::erff(x / std::f32::consts::SQRT_2))
}

fn gelu_grad(x: f32) -> f32 {
    let cdf = 0.5 * (1.0 + libm::erff(x / std::f32::consts::SQRT_2));
    let pdf = (-0.5 * x * x).exp() / (2.0 * std::f32::consts::PI).sqrt();
    cdf + x * pdf
}

fn sigmoid(x: f32) -> f32 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softmax_row(row: &mut [f32]) {
    let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let mut sum = 0.0;
    for x in row.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in row.iter_mut() {
        *x /= sum;
    }
}

fn grad_buf(grads: &mut [Option<Tensor>], id: NodeId, shape: (usize, usize)) -> &mut Tensor {
    grads[id.0].get_or_insert_with(|| Tensor::zeros(shape.0, shape.1))
}

impl<'a> Graph<'a> {
    /// Inference graph: dropout is the identity.
    pub fn eval(params: &'a ParamStore) -> Self {
        Self { params, rng: None, nodes: Vec::new() }
    }

    /// Training graph: dropout draws from `rng`.
    pub fn train(params: &'a ParamStore, rng: &'a mut SeededRng) -> Self {
        Self { params, rng: Some(rng), nodes: Vec::new() }
    }

    pub fn is_training(&self) -> bool {
        self.rng.is_some()
    }

    fn push(&mut self, value: Tensor, op: Op) -> NodeId {
        self.nodes.push(Node { value: Some(value), op });
        NodeId(self.nodes.len() - 1)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        match &self.nodes[id.0].op {
            Op::Param(p) => self.params.get(*p),
            _ => self.nodes[id.0].value.as_ref().expect("non-param nodes store values"),
        }
    }

    fn shape(&self, id: NodeId) -> (usize, usize) {
        self.value(id).shape()
    }

    pub fn input(&mut self, t: Tensor) -> NodeId {
        self.push(t, Op::Input)
    }

    pub fn param(&mut self, id: ParamId) -> NodeId {
        self.nodes.push(Node { value: None, op: Op::Param(id) });
        NodeId(self.nodes.len() - 1)
    }

    /// Rows of a parameter table selected by index.
    pub fn gather(&mut self, table: ParamId, ids: &[usize]) -> NodeId {
        let t = self.params.get(table);
        let mut out = Tensor::zeros(ids.len(), t.cols);
        for (r, &i) in ids.iter().enumerate() {
            out.row_mut(r).copy_from_slice(t.row(i));
        }
        self.push(out, Op::Gather { table, ids: ids.to_vec() })
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(ta.cols, tb.rows, "matmul shape mismatch");
        let mut out = Tensor::zeros(ta.rows, tb.cols);
        matmul_acc(&ta.data, &tb.data, &mut out.data, ta.rows, ta.cols, tb.cols);
        self.push(out, Op::MatMul(a, b))
    }

    /// a · bᵀ
    pub fn matmul_bt(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(ta.cols, tb.cols, "matmul_bt shape mismatch");
        let mut out = Tensor::zeros(ta.rows, tb.rows);
        matmul_bt_acc(&ta.data, &tb.data, &mut out.data, ta.rows, ta.cols, tb.rows);
        self.push(out, Op::MatMulBT(a, b))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(ta.shape(), tb.shape(), "add shape mismatch");
        let mut out = ta.clone();
        out.add_assign(tb);
        self.push(out, Op::Add(a, b))
    }

    /// Adds a 1×cols row to every row of `a`.
    pub fn add_row(&mut self, a: NodeId, row: NodeId) -> NodeId {
        let (ta, tr) = (self.value(a), self.value(row));
        assert!(tr.rows == 1 && tr.cols == ta.cols, "add_row shape mismatch");
        let mut out = ta.clone();
        for r in 0..out.rows {
            for (x, b) in out.row_mut(r).iter_mut().zip(&tr.data) {
                *x += b;
            }
        }
        self.push(out, Op::AddRow(a, row))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(ta.shape(), tb.shape(), "mul shape mismatch");
        let data = ta.data.iter().zip(&tb.data).map(|(x, y)| x * y).collect();
        let out = Tensor::from_vec(ta.rows, ta.cols, data);
        self.push(out, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: NodeId, s: f32) -> NodeId {
        let out = self.value(a).map(|x| x * s);
        self.push(out, Op::Scale(a, s))
    }

    /// x · w + b with w stored (in × out) and b a 1×out row.
    pub fn linear(&mut self, x: NodeId, w: ParamId, b: ParamId) -> NodeId {
        let wn = self.param(w);
        let bn = self.param(b);
        let h = self.matmul(x, wn);
        self.add_row(h, bn)
    }

    pub fn gelu(&mut self, a: NodeId) -> NodeId {
        let out = self.value(a).map(gelu);
        self.push(out, Op::Gelu(a))
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let out = self.value(a).map(f32::tanh);
        self.push(out, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let out = self.value(a).map(sigmoid);
        self.push(out, Op::Sigmoid(a))
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let out = self.value(a).map(|x| x.max(0.0));
        self.push(out, Op::Relu(a))
    }

    /// Row-wise layer normalization with 1×cols gain and bias.
    pub fn layer_norm(&mut self, x: NodeId, gamma: ParamId, beta: ParamId, eps: f32) -> NodeId {
        let g = self.param(gamma);
        let b = self.param(beta);
        let tx = self.value(x);
        let (gv, bv) = (self.params.get(gamma), self.params.get(beta));
        let n = tx.cols;
        let mut xhat = Tensor::zeros(tx.rows, n);
        let mut out = Tensor::zeros(tx.rows, n);
        let mut inv_std = Vec::with_capacity(tx.rows);
        for r in 0..tx.rows {
            let row = tx.row(r);
            let mean = row.iter().sum::<f32>() / n as f32;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() / n as f32;
            let is = 1.0 / (var + eps).sqrt();
            inv_std.push(is);
            for c in 0..n {
                let h = (row[c] - mean) * is;
                xhat.set(r, c, h);
                out.set(r, c, h * gv.data[c] + bv.data[c]);
            }
        }
        self.push(out, Op::LayerNorm { x, gamma: g, beta: b, xhat, inv_std })
    }

    pub fn softmax_rows(&mut self, a: NodeId) -> NodeId {
        let mut out = self.value(a).clone();
        for r in 0..out.rows {
            softmax_row(out.row_mut(r));
        }
        self.push(out, Op::SoftmaxRows(a))
    }

    pub fn slice_cols(&mut self, a: NodeId, start: usize, len: usize) -> NodeId {
        let ta = self.value(a);
        assert!(start + len <= ta.cols, "slice_cols out of range");
        let mut out = Tensor::zeros(ta.rows, len);
        for r in 0..ta.rows {
            out.row_mut(r).copy_from_slice(&ta.row(r)[start..start + len]);
        }
        self.push(out, Op::SliceCols { a, start })
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty(), "concat of nothing");
        let rows = self.value(parts[0]).rows;
        let cols: usize = parts.iter().map(|&p| self.value(p).cols).sum();
        let mut out = Tensor::zeros(rows, cols);
        let mut off = 0;
        for &p in parts {
            let t = self.value(p);
            assert_eq!(t.rows, rows, "concat_cols row mismatch");
            for r in 0..rows {
                out.row_mut(r)[off..off + t.cols].copy_from_slice(t.row(r));
            }
            off += t.cols;
        }
        self.push(out, Op::ConcatCols(parts.to_vec()))
    }

    pub fn slice_rows(&mut self, a: NodeId, start: usize, len: usize) -> NodeId {
        let ta = self.value(a);
        assert!(start + len <= ta.rows, "slice_rows out of range");
        let out = Tensor::from_vec(len, ta.cols, ta.data[start * ta.cols..(start + len) * ta.cols].to_vec());
        self.push(out, Op::SliceRows { a, start })
    }

    /// Column-wise max over rows, giving 1×cols. Ties go to the first row.
    pub fn max_rows(&mut self, a: NodeId) -> NodeId {
        let ta = self.value(a);
        assert!(ta.rows > 0, "max over zero rows");
        let mut out = Tensor::row_vector(ta.row(0).to_vec());
        let mut argmax = vec![0; ta.cols];
        for r in 1..ta.rows {
            for (c, &v) in ta.row(r).iter().enumerate() {
                if v > out.data[c] {
                    out.data[c] = v;
                    argmax[c] = r;
                }
            }
        }
        self.push(out, Op::MaxRows { a, argmax })
    }

    /// Inverted dropout; identity in eval graphs or when p == 0.
    pub fn dropout(&mut self, a: NodeId, p: f32) -> NodeId {
        if p <= 0.0 || self.rng.is_none() {
            return a;
        }
        let keep = 1.0 - p;
        let n = self.value(a).len();
        let rng = self.rng.as_mut().expect("checked above");
        let mask: Vec<f32> = (0..n).map(|_| if rng.gen::<f32>() < keep { 1.0 / keep } else { 0.0 }).collect();
        let ta = self.value(a);
        let data = ta.data.iter().zip(&mask).map(|(x, m)| x * m).collect();
        let out = Tensor::from_vec(ta.rows, ta.cols, data);
        self.push(out, Op::Dropout { a, mask })
    }

    /// weight · Σ over rows with a target of −log softmax(logits)[target].
    /// Rows whose target is None contribute nothing.
    pub fn cross_entropy(&mut self, logits: NodeId, targets: &[Option<usize>], weight: f32) -> NodeId {
        let tl = self.value(logits);
        assert_eq!(tl.rows, targets.len(), "one target per logit row");
        let mut probs = tl.clone();
        let mut loss = 0.0f32;
        for (r, t) in targets.iter().enumerate() {
            softmax_row(probs.row_mut(r));
            if let Some(t) = *t {
                assert!(t < tl.cols, "target outside label set");
                let row = tl.row(r);
                let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
                let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f32>().ln();
                loss += lse - row[t];
            }
        }
        let out = Tensor::from_vec(1, 1, vec![loss * weight]);
        self.push(out, Op::CrossEntropy { logits, targets: targets.to_vec(), probs, weight })
    }

    /// Accumulates d(root)/d(param) into `grads`. `root` must be 1×1.
    pub fn backward(&self, root: NodeId, grads: &mut GradStore) {
        assert_eq!(self.shape(root), (1, 1), "backward from a non-scalar");
        let mut g: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        g[root.0] = Some(Tensor::filled(1, 1, 1.0));
        for i in (0..=root.0).rev() {
            let Some(gi) = g[i].take() else { continue };
            match &self.nodes[i].op {
                Op::Input => {}
                Op::Param(p) => grads.get_mut(*p).add_assign(&gi),
                Op::Gather { table, ids } => {
                    let gt = grads.get_mut(*table);
                    for (r, &id) in ids.iter().enumerate() {
                        for (d, s) in gt.row_mut(id).iter_mut().zip(gi.row(r)) {
                            *d += s;
                        }
                    }
                }
                Op::MatMul(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    let da = grad_buf(&mut g, *a, ta.shape());
                    matmul_bt_acc(&gi.data, &tb.data, &mut da.data, ta.rows, tb.cols, ta.cols);
                    let db = grad_buf(&mut g, *b, tb.shape());
                    matmul_at_acc(&ta.data, &gi.data, &mut db.data, ta.rows, ta.cols, tb.cols);
                }
                Op::MatMulBT(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    // out (m×n) = a (m×k) · bᵀ, b (n×k)
                    let da = grad_buf(&mut g, *a, ta.shape());
                    matmul_acc(&gi.data, &tb.data, &mut da.data, ta.rows, tb.rows, ta.cols);
                    let db = grad_buf(&mut g, *b, tb.shape());
                    matmul_at_acc(&gi.data, &ta.data, &mut db.data, ta.rows, tb.rows, ta.cols);
                }
                Op::Add(a, b) => {
                    grad_buf(&mut g, *a, gi.shape()).add_assign(&gi);
                    grad_buf(&mut g, *b, gi.shape()).add_assign(&gi);
                }
                Op::AddRow(a, row) => {
                    grad_buf(&mut g, *a, gi.shape()).add_assign(&gi);
                    let dr = grad_buf(&mut g, *row, (1, gi.cols));
                    for r in 0..gi.rows {
                        for (d, s) in dr.data.iter_mut().zip(gi.row(r)) {
                            *d += s;
                        }
                    }
                }
                Op::Mul(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    let da = grad_buf(&mut g, *a, ta.shape());
                    for j in 0..gi.data.len() {
                        da.data[j] += gi.data[j] * tb.data[j];
                    }
                    let db = grad_buf(&mut g, *b, tb.shape());
                    for j in 0..gi.data.len() {
                        db.data[j] += gi.data[j] * ta.data[j];
                    }
                }
                Op::Scale(a, s) => {
                    let da = grad_buf(&mut g, *a, gi.shape());
                    for (d, x) in da.data.iter_mut().zip(&gi.data) {
                        *d += s * x;
                    }
                }
                Op::Gelu(a) => {
                    let ta = self.value(*a);
                    let da = grad_buf(&mut g, *a, gi.shape());
                    for j in 0..gi.data.len() {
                        da.data[j] += gi.data[j] * gelu_grad(ta.data[j]);
                    }
                }
                Op::Tanh(a) => {
                    let y = self.nodes[i].value.as_ref().expect("stored");
                    let da = grad_buf(&mut g, *a, gi.shape());
                    for j in 0..gi.data.len() {
                        da.data[j] += gi.data[j] * (1.0 - y.data[j] * y.data[j]);
                    }
                }
                Op::Sigmoid(a) => {
                    let y = self.nodes[i].value.as_ref().expect("stored");
                    let da = grad_buf(&mut g, *a, gi.shape());
                    for j in 0..gi.data.len() {
                        da.data[j] += gi.data[j] * y.data[j] * (1.0 - y.data[j]);
                    }
                }
                Op::Relu(a) => {
                    let ta = self.value(*a);
                    let da = grad_buf(&mut g, *a, gi.shape());
                    for j in 0..gi.data.len() {
                        if ta.data[j] > 0.0 {
                            da.data[j] += gi.data[j];
                        }
                    }
                }
                Op::LayerNorm { x, gamma, beta, xhat, inv_std } => {
                    let gv = self.value(*gamma).clone();
                    let n = gi.cols;
                    let mut dgamma = vec![0.0; n];
                    let mut dbeta = vec![0.0; n];
                    let dx = grad_buf(&mut g, *x, gi.shape());
                    for r in 0..gi.rows {
                        let gr = gi.row(r);
                        let xr = xhat.row(r);
                        let mut sum_d = 0.0;
                        let mut sum_dx = 0.0;
                        for c in 0..n {
                            dgamma[c] += gr[c] * xr[c];
                            dbeta[c] += gr[c];
                            let d = gr[c] * gv.data[c];
                            sum_d += d;
                            sum_dx += d * xr[c];
                        }
                        let scale = inv_std[r] / n as f32;
                        let dxr = dx.row_mut(r);
                        for c in 0..n {
                            let d = gr[c] * gv.data[c];
                            dxr[c] += scale * (n as f32 * d - sum_d - xr[c] * sum_dx);
                        }
                    }
                    grad_buf(&mut g, *gamma, (1, n)).add_assign(&Tensor::row_vector(dgamma));
                    grad_buf(&mut g, *beta, (1, n)).add_assign(&Tensor::row_vector(dbeta));
                }
                Op::SoftmaxRows(a) => {
                    let y = self.nodes[i].value.as_ref().expect("stored");
                    let da = grad_buf(&mut g, *a, gi.shape());
                    for r in 0..gi.rows {
                        let (gr, yr) = (gi.row(r), y.row(r));
                        let dot: f32 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
                        for (c, d) in da.row_mut(r).iter_mut().enumerate() {
                            *d += yr[c] * (gr[c] - dot);
                        }
                    }
                }
                Op::SliceCols { a, start } => {
                    let shape = self.shape(*a);
                    let da = grad_buf(&mut g, *a, shape);
                    for r in 0..gi.rows {
                        for (d, s) in da.row_mut(r)[*start..*start + gi.cols].iter_mut().zip(gi.row(r)) {
                            *d += s;
                        }
                    }
                }
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let shape = self.shape(*p);
                        let dp = grad_buf(&mut g, *p, shape);
                        for r in 0..gi.rows {
                            for (d, s) in dp.row_mut(r).iter_mut().zip(&gi.row(r)[off..off + shape.1]) {
                                *d += s;
                            }
                        }
                        off += shape.1;
                    }
                }
                Op::SliceRows { a, start } => {
                    let shape = self.shape(*a);
                    let da = grad_buf(&mut g, *a, shape);
                    let off = start * shape.1;
                    for (d, s) in da.data[off..off + gi.data.len()].iter_mut().zip(&gi.data) {
                        *d += s;
                    }
                }
                Op::MaxRows { a, argmax } => {
                    let shape = self.shape(*a);
                    let da = grad_buf(&mut g, *a, shape);
                    for (c, &r) in argmax.iter().enumerate() {
                        da.data[r * shape.1 + c] += gi.data[c];
                    }
                }
                Op::Dropout { a, mask } => {
                    let da = grad_buf(&mut g, *a, gi.shape());
                    for j in 0..gi.data.len() {
                        da.data[j] += gi.data[j] * mask[j];
                    }
                }
                Op::CrossEntropy { logits, targets, probs, weight } => {
                    let up = gi.scalar() * weight;
                    let dl = grad_buf(&mut g, *logits, probs.shape());
                    for (r, t) in targets.iter().enumerate() {
                        let Some(t) = *t else { continue };
                        let pr = probs.row(r);
                        for (c, d) in dl.row_mut(r).iter_mut().enumerate() {
                            let y = if c == t { 1.0 } else { 0.0 };
                            *d += up * (pr[c] - y);
                        }
                    }
                }
            }
        }
    }
}
