use std::collections::HashMap;

use super::params::{ParamId, ParamStore};
use super::{Result, Tensor, TensorError};

/// Handle to a node on a [`Graph`] tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

/// Padding mode for [`Graph::conv1d`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// No padding, output length `L - K + 1`.
    Valid,
    /// Zero padding so the output length equals the input length.
    Same,
}

const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug)]
enum Op {
    Input,
    Param,
    MatMul(NodeId, NodeId),
    AddBias(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    AddScalar(NodeId),
    Relu(NodeId),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Softmax(NodeId),
    Concat(Vec<NodeId>),
    SliceLast {
        src: NodeId,
        start: usize,
    },
    Reshape(NodeId),
    Embedding {
        table: NodeId,
        indices: Vec<usize>,
    },
    EmbeddingBag {
        table: NodeId,
        bags: Vec<Vec<usize>>,
    },
    Conv1d {
        x: NodeId,
        w: NodeId,
        pad_left: usize,
    },
    SelectTime {
        src: NodeId,
        t: usize,
    },
    StackTime(Vec<NodeId>),
    MeanTime(NodeId),
    BatchMatMul(NodeId, NodeId),
    TransposeLast(NodeId),
    AddExpand(NodeId, NodeId),
    LayerNorm {
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    L2Normalize {
        src: NodeId,
        norms: Vec<f64>,
    },
    Sum(NodeId),
    Mean(NodeId),
    Mse(NodeId, NodeId),
    Mae(NodeId, NodeId),
    BceWithLogits(NodeId, NodeId),
    CrossEntropy {
        logits: NodeId,
        targets: Vec<usize>,
        probs: Vec<f64>,
    },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Input => "input",
            Op::Param => "param",
            Op::MatMul(..) => "matmul",
            Op::AddBias(..) => "add_bias",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::AddScalar(..) => "add_scalar",
            Op::Relu(_) => "relu",
            Op::Sigmoid(_) => "sigmoid",
            Op::Tanh(_) => "tanh",
            Op::Softmax(_) => "softmax",
            Op::Concat(_) => "concat",
            Op::SliceLast { .. } => "slice",
            Op::Reshape(_) => "reshape",
            Op::Embedding { .. } => "embedding",
            Op::EmbeddingBag { .. } => "embedding_bag",
            Op::Conv1d { .. } => "conv1d",
            Op::SelectTime { .. } => "select_time",
            Op::StackTime(_) => "stack_time",
            Op::MeanTime(_) => "mean_time",
            Op::BatchMatMul(..) => "bmm",
            Op::TransposeLast(_) => "transpose",
            Op::AddExpand(..) => "add_expand",
            Op::LayerNorm { .. } => "layer_norm",
            Op::L2Normalize { .. } => "l2_normalize",
            Op::Sum(_) => "sum",
            Op::Mean(_) => "mean",
            Op::Mse(..) => "mse",
            Op::Mae(..) => "mae",
            Op::BceWithLogits(..) => "bce_with_logits",
            Op::CrossEntropy { .. } => "cross_entropy",
        }
    }
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Tensor,
    needs_grad: bool,
}

/// Define-by-run computation tape.
///
/// Nodes are appended in evaluation order, so insertion order is a valid
/// topological order and `backward` visits each node exactly once.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
    param_nodes: HashMap<ParamId, NodeId>,
    names: HashMap<String, NodeId>,
}

fn mismatch(node: String, detail: String) -> TensorError {
    TensorError::ShapeMismatch { node, detail }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softmax_rows(data: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; data.len()];
    for (row, o) in data.chunks(n).zip(out.chunks_mut(n)) {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for (y, &x) in o.iter_mut().zip(row) {
            *y = (x - max).exp();
            sum += *y;
        }
        o.iter_mut().for_each(|y| *y /= sum);
    }
    out
}

/// `out[m,n] += a[m,k] * b[k,n]`
fn gemm(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

/// `out[m,k] += dy[m,n] * b[k,n]^T`
fn gemm_bt(dy: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    for i in 0..m {
        let drow = &dy[i * n..(i + 1) * n];
        let orow = &mut out[i * k..(i + 1) * k];
        for (p, o) in orow.iter_mut().enumerate() {
            let brow = &b[p * n..(p + 1) * n];
            *o += drow.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
        }
    }
}

/// `out[k,n] += a[m,k]^T * dy[m,n]`
fn gemm_at(a: &[f64], dy: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let drow = &dy[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let orow = &mut out[p * n..(p + 1) * n];
            for (o, &d) in orow.iter_mut().zip(drow) {
                *o += av * d;
            }
        }
    }
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

    pub fn shape(&self, id: NodeId) -> &[usize] {
        self.nodes[id.0].value.shape()
    }

    /// Gradient of the last `backward` loss w.r.t. `id`, if it was reached.
    pub fn grad(&self, id: NodeId) -> Option<&[f64]> {
        self.grads.get(id.0).and_then(|g| g.as_deref())
    }

    fn label(&self, id: NodeId) -> String {
        format!("{}#{}", self.nodes[id.0].op.name(), id.0)
    }

    fn push(&mut self, op: Op, value: Tensor, needs_grad: bool) -> Result<NodeId> {
        let id = NodeId(self.nodes.len());
        if value.data().iter().any(|v| !v.is_finite()) {
            return Err(TensorError::NumericOverflow {
                node: format!("{}#{}", op.name(), id.0),
            });
        }
        self.nodes.push(Node {
            op,
            value,
            needs_grad,
        });
        Ok(id)
    }

    fn ng(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|i| self.nodes[i.0].needs_grad)
    }

    /// Constant input (no gradient).
    pub fn input(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Input, value, false)
            .expect("Tensor values are finite by construction")
    }

    /// Input that receives a gradient during `backward`.
    pub fn input_var(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Input, value, true)
            .expect("Tensor values are finite by construction")
    }

    /// Bind a name to a node (inputs or outputs) for later lookup.
    pub fn input_named(&mut self, name: &str, value: Tensor, requires_grad: bool) -> NodeId {
        let id = if requires_grad {
            self.input_var(value)
        } else {
            self.input(value)
        };
        self.names.insert(name.to_string(), id);
        id
    }

    pub fn name_node(&mut self, name: &str, id: NodeId) {
        self.names.insert(name.to_string(), id);
    }

    pub fn named(&self, name: &str) -> Option<NodeId> {
        self.names.get(name).copied()
    }

    /// Leaf for a trainable parameter; repeated calls return the same node.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> NodeId {
        if let Some(&n) = self.param_nodes.get(&id) {
            return n;
        }
        let node = self
            .push(Op::Param, store.value(id).clone(), true)
            .expect("parameters are finite");
        self.param_nodes.insert(id, node);
        node
    }

    // ---------------------------------------------------------------- linear

    /// `a[..., k] x b[k, n] -> [..., n]`
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let k = *sa.last().unwrap();
        if sb.len() != 2 || sb[0] != k {
            return Err(mismatch(
                format!("matmul#{}", self.nodes.len()),
                format!("{} {:?} x {} {:?}", self.label(a), sa, self.label(b), sb),
            ));
        }
        let n = sb[1];
        let m = self.value(a).numel() / k;
        let mut out = vec![0.0; m * n];
        gemm(self.value(a).data(), self.value(b).data(), m, k, n, &mut out);
        let mut shape = sa;
        *shape.last_mut().unwrap() = n;
        let ng = self.ng(&[a, b]);
        self.push(Op::MatMul(a, b), Tensor::from_parts(shape, out), ng)
    }

    /// Broadcast-add a bias vector over the last axis.
    pub fn add_bias(&mut self, a: NodeId, bias: NodeId) -> Result<NodeId> {
        let n = self.value(a).last_dim();
        if self.shape(bias) != [n] {
            return Err(mismatch(
                format!("add_bias#{}", self.nodes.len()),
                format!("{:?} + bias {:?}", self.shape(a), self.shape(bias)),
            ));
        }
        let b = self.value(bias).data();
        let mut out = self.value(a).data().to_vec();
        for row in out.chunks_mut(n) {
            row.iter_mut().zip(b).for_each(|(o, v)| *o += v);
        }
        let shape = self.shape(a).to_vec();
        let ng = self.ng(&[a, bias]);
        self.push(Op::AddBias(a, bias), Tensor::from_parts(shape, out), ng)
    }

    fn same_shape(&self, op: &str, a: NodeId, b: NodeId) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(mismatch(
                format!("{op}#{}", self.nodes.len()),
                format!(
                    "{} {:?} vs {} {:?}",
                    self.label(a),
                    self.shape(a),
                    self.label(b),
                    self.shape(b)
                ),
            ));
        }
        Ok(())
    }

    fn zip_with(&self, a: NodeId, b: NodeId, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        Tensor::from_parts(self.shape(a).to_vec(), data)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("add", a, b)?;
        let v = self.zip_with(a, b, |x, y| x + y);
        let ng = self.ng(&[a, b]);
        self.push(Op::Add(a, b), v, ng)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("sub", a, b)?;
        let v = self.zip_with(a, b, |x, y| x - y);
        let ng = self.ng(&[a, b]);
        self.push(Op::Sub(a, b), v, ng)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("mul", a, b)?;
        let v = self.zip_with(a, b, |x, y| x * y);
        let ng = self.ng(&[a, b]);
        self.push(Op::Mul(a, b), v, ng)
    }

    fn map(&self, a: NodeId, f: impl Fn(f64) -> f64) -> Tensor {
        let data = self.value(a).data().iter().map(|&x| f(x)).collect();
        Tensor::from_parts(self.shape(a).to_vec(), data)
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> Result<NodeId> {
        let v = self.map(a, |x| x * c);
        let ng = self.ng(&[a]);
        self.push(Op::Scale(a, c), v, ng)
    }

    pub fn add_scalar(&mut self, a: NodeId, c: f64) -> Result<NodeId> {
        let v = self.map(a, |x| x + c);
        let ng = self.ng(&[a]);
        self.push(Op::AddScalar(a), v, ng)
    }

    /// `1 - a`
    pub fn one_minus(&mut self, a: NodeId) -> Result<NodeId> {
        let neg = self.scale(a, -1.0)?;
        self.add_scalar(neg, 1.0)
    }

    // ----------------------------------------------------------- activations

    pub fn relu(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.map(a, |x| x.max(0.0));
        let ng = self.ng(&[a]);
        self.push(Op::Relu(a), v, ng)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.map(a, sigmoid);
        let ng = self.ng(&[a]);
        self.push(Op::Sigmoid(a), v, ng)
    }

    pub fn tanh(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.map(a, f64::tanh);
        let ng = self.ng(&[a]);
        self.push(Op::Tanh(a), v, ng)
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, a: NodeId) -> Result<NodeId> {
        let n = self.value(a).last_dim();
        let data = softmax_rows(self.value(a).data(), n);
        let v = Tensor::from_parts(self.shape(a).to_vec(), data);
        let ng = self.ng(&[a]);
        self.push(Op::Softmax(a), v, ng)
    }

    // ------------------------------------------------------------ structural

    /// Concatenate along the last axis; leading dims must agree.
    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let first = *parts
            .first()
            .ok_or_else(|| TensorError::Invalid("concat of zero tensors".into()))?;
        let lead = &self.shape(first)[..self.shape(first).len() - 1];
        let rows = self.value(first).numel() / self.value(first).last_dim();
        let mut total = 0;
        for &p in parts {
            let s = self.shape(p);
            if &s[..s.len() - 1] != lead {
                return Err(mismatch(
                    format!("concat#{}", self.nodes.len()),
                    format!("{} has shape {:?}, expected leading {:?}", self.label(p), s, lead),
                ));
            }
            total += s[s.len() - 1];
        }
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &p in parts {
                let w = self.value(p).last_dim();
                out.extend_from_slice(&self.value(p).data()[r * w..(r + 1) * w]);
            }
        }
        let mut shape = lead.to_vec();
        shape.push(total);
        let ng = self.ng(parts);
        self.push(Op::Concat(parts.to_vec()), Tensor::from_parts(shape, out), ng)
    }

    /// `a[..., start..end]`
    pub fn slice_last(&mut self, a: NodeId, start: usize, end: usize) -> Result<NodeId> {
        let n = self.value(a).last_dim();
        if start >= end || end > n {
            return Err(mismatch(
                format!("slice#{}", self.nodes.len()),
                format!("range {start}..{end} on {} {:?}", self.label(a), self.shape(a)),
            ));
        }
        let w = end - start;
        let out: Vec<f64> = self
            .value(a)
            .data()
            .chunks(n)
            .flat_map(|row| row[start..end].iter().copied())
            .collect();
        let mut shape = self.shape(a).to_vec();
        *shape.last_mut().unwrap() = w;
        let ng = self.ng(&[a]);
        self.push(Op::SliceLast { src: a, start }, Tensor::from_parts(shape, out), ng)
    }

    pub fn reshape(&mut self, a: NodeId, shape: &[usize]) -> Result<NodeId> {
        if shape.iter().product::<usize>() != self.value(a).numel() {
            return Err(mismatch(
                format!("reshape#{}", self.nodes.len()),
                format!("{} {:?} into {:?}", self.label(a), self.shape(a), shape),
            ));
        }
        let v = Tensor::from_parts(shape.to_vec(), self.value(a).data().to_vec());
        let ng = self.ng(&[a]);
        self.push(Op::Reshape(a), v, ng)
    }

    /// Row lookup: `table[V, d]` gathered at `indices` -> `[len, d]`.
    pub fn embedding(&mut self, table: NodeId, indices: &[usize]) -> Result<NodeId> {
        let s = self.shape(table).to_vec();
        if s.len() != 2 || indices.is_empty() {
            return Err(mismatch(
                format!("embedding#{}", self.nodes.len()),
                format!("table {:?} with {} indices", s, indices.len()),
            ));
        }
        let (v, d) = (s[0], s[1]);
        let mut out = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            if i >= v {
                return Err(TensorError::IndexOutOfRange {
                    node: format!("embedding#{}", self.nodes.len()),
                    index: i,
                    size: v,
                });
            }
            out.extend_from_slice(&self.value(table).data()[i * d..(i + 1) * d]);
        }
        let ng = self.ng(&[table]);
        self.push(
            Op::Embedding {
                table,
                indices: indices.to_vec(),
            },
            Tensor::from_parts(vec![indices.len(), d], out),
            ng,
        )
    }

    /// Mean of embedding rows per bag -> `[bags, d]`. Bags must be non-empty.
    pub fn embedding_bag(&mut self, table: NodeId, bags: &[Vec<usize>]) -> Result<NodeId> {
        let s = self.shape(table).to_vec();
        let node = format!("embedding_bag#{}", self.nodes.len());
        if s.len() != 2 || bags.is_empty() {
            return Err(mismatch(node, format!("table {:?} with {} bags", s, bags.len())));
        }
        let (v, d) = (s[0], s[1]);
        let mut out = vec![0.0; bags.len() * d];
        for (bag, o) in bags.iter().zip(out.chunks_mut(d)) {
            if bag.is_empty() {
                return Err(mismatch(node, "empty bag".into()));
            }
            let w = 1.0 / bag.len() as f64;
            for &i in bag {
                if i >= v {
                    return Err(TensorError::IndexOutOfRange {
                        node,
                        index: i,
                        size: v,
                    });
                }
                let row = &self.value(table).data()[i * d..(i + 1) * d];
                o.iter_mut().zip(row).for_each(|(a, b)| *a += w * b);
            }
        }
        let ng = self.ng(&[table]);
        self.push(
            Op::EmbeddingBag {
                table,
                bags: bags.to_vec(),
            },
            Tensor::from_parts(vec![bags.len(), d], out),
            ng,
        )
    }

    /// 1-D convolution without bias: `x[B, L, Cin] * w[K, Cin, Cout] -> [B, L', Cout]`.
    pub fn conv1d(&mut self, x: NodeId, w: NodeId, padding: Padding) -> Result<NodeId> {
        let (sx, sw) = (self.shape(x).to_vec(), self.shape(w).to_vec());
        let node = format!("conv1d#{}", self.nodes.len());
        if sx.len() != 3 || sw.len() != 3 || sx[2] != sw[1] {
            return Err(mismatch(node, format!("input {sx:?} kernel {sw:?}")));
        }
        let (b, l, cin) = (sx[0], sx[1], sx[2]);
        let (k, cout) = (sw[0], sw[2]);
        let (pl, pr) = match padding {
            Padding::Valid => (0, 0),
            Padding::Same => ((k - 1) / 2, k - 1 - (k - 1) / 2),
        };
        if l + pl + pr < k {
            return Err(mismatch(node, format!("kernel {k} longer than input {l}")));
        }
        let lout = l + pl + pr - k + 1;
        let xd = self.value(x).data();
        let wd = self.value(w).data();
        let mut out = vec![0.0; b * lout * cout];
        for bi in 0..b {
            for t in 0..lout {
                let o = &mut out[(bi * lout + t) * cout..(bi * lout + t + 1) * cout];
                for kk in 0..k {
                    let src = t + kk;
                    if src < pl || src - pl >= l {
                        continue;
                    }
                    let xrow = &xd[(bi * l + src - pl) * cin..(bi * l + src - pl + 1) * cin];
                    gemm(xrow, &wd[kk * cin * cout..(kk + 1) * cin * cout], 1, cin, cout, o);
                }
            }
        }
        let ng = self.ng(&[x, w]);
        self.push(
            Op::Conv1d { x, w, pad_left: pl },
            Tensor::from_parts(vec![b, lout, cout], out),
            ng,
        )
    }

    /// `a[B, T, C]` at time `t` -> `[B, C]`.
    pub fn select_time(&mut self, a: NodeId, t: usize) -> Result<NodeId> {
        let s = self.shape(a).to_vec();
        if s.len() != 3 || t >= s[1] {
            return Err(mismatch(
                format!("select_time#{}", self.nodes.len()),
                format!("t={t} on {} {:?}", self.label(a), s),
            ));
        }
        let (b, tt, c) = (s[0], s[1], s[2]);
        let d = self.value(a).data();
        let mut out = Vec::with_capacity(b * c);
        for bi in 0..b {
            out.extend_from_slice(&d[(bi * tt + t) * c..(bi * tt + t + 1) * c]);
        }
        let ng = self.ng(&[a]);
        self.push(Op::SelectTime { src: a, t }, Tensor::from_parts(vec![b, c], out), ng)
    }

    /// Stack `[B, C]` steps into `[B, T, C]`.
    pub fn stack_time(&mut self, steps: &[NodeId]) -> Result<NodeId> {
        let first = *steps
            .first()
            .ok_or_else(|| TensorError::Invalid("stack of zero steps".into()))?;
        let s = self.shape(first).to_vec();
        for &st in steps {
            if self.shape(st) != s.as_slice() || s.len() != 2 {
                return Err(mismatch(
                    format!("stack_time#{}", self.nodes.len()),
                    format!("{} {:?} vs {:?}", self.label(st), self.shape(st), s),
                ));
            }
        }
        let (b, c, t) = (s[0], s[1], steps.len());
        let mut out = vec![0.0; b * t * c];
        for (ti, &st) in steps.iter().enumerate() {
            let d = self.value(st).data();
            for bi in 0..b {
                out[(bi * t + ti) * c..(bi * t + ti + 1) * c]
                    .copy_from_slice(&d[bi * c..(bi + 1) * c]);
            }
        }
        let ng = self.ng(steps);
        self.push(
            Op::StackTime(steps.to_vec()),
            Tensor::from_parts(vec![b, t, c], out),
            ng,
        )
    }

    /// Mean over the time axis: `[B, T, C] -> [B, C]` (global average pool).
    pub fn mean_time(&mut self, a: NodeId) -> Result<NodeId> {
        let s = self.shape(a).to_vec();
        if s.len() != 3 {
            return Err(mismatch(
                format!("mean_time#{}", self.nodes.len()),
                format!("{} {:?}", self.label(a), s),
            ));
        }
        let (b, t, c) = (s[0], s[1], s[2]);
        let d = self.value(a).data();
        let mut out = vec![0.0; b * c];
        let w = 1.0 / t as f64;
        for bi in 0..b {
            for ti in 0..t {
                let row = &d[(bi * t + ti) * c..(bi * t + ti + 1) * c];
                out[bi * c..(bi + 1) * c]
                    .iter_mut()
                    .zip(row)
                    .for_each(|(o, v)| *o += w * v);
            }
        }
        let ng = self.ng(&[a]);
        self.push(Op::MeanTime(a), Tensor::from_parts(vec![b, c], out), ng)
    }

    /// Batched matmul `a[B, m, k] x b[B, k, n] -> [B, m, n]`.
    pub fn bmm(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] || sa[2] != sb[1] {
            return Err(mismatch(
                format!("bmm#{}", self.nodes.len()),
                format!("{} {:?} x {} {:?}", self.label(a), sa, self.label(b), sb),
            ));
        }
        let (bs, m, k, n) = (sa[0], sa[1], sa[2], sb[2]);
        let mut out = vec![0.0; bs * m * n];
        let (ad, bd) = (self.value(a).data(), self.value(b).data());
        for i in 0..bs {
            gemm(
                &ad[i * m * k..(i + 1) * m * k],
                &bd[i * k * n..(i + 1) * k * n],
                m,
                k,
                n,
                &mut out[i * m * n..(i + 1) * m * n],
            );
        }
        let ng = self.ng(&[a, b]);
        self.push(Op::BatchMatMul(a, b), Tensor::from_parts(vec![bs, m, n], out), ng)
    }

    /// Swap the last two axes of a rank-3 tensor.
    pub fn transpose_last(&mut self, a: NodeId) -> Result<NodeId> {
        let s = self.shape(a).to_vec();
        if s.len() != 3 {
            return Err(mismatch(
                format!("transpose#{}", self.nodes.len()),
                format!("{} {:?}", self.label(a), s),
            ));
        }
        let (b, m, n) = (s[0], s[1], s[2]);
        let d = self.value(a).data();
        let mut out = vec![0.0; d.len()];
        for bi in 0..b {
            for i in 0..m {
                for j in 0..n {
                    out[bi * m * n + j * m + i] = d[bi * m * n + i * n + j];
                }
            }
        }
        let ng = self.ng(&[a]);
        self.push(Op::TransposeLast(a), Tensor::from_parts(vec![b, n, m], out), ng)
    }

    /// `a[B, T, C] + b[B, C]` broadcast over time.
    pub fn add_expand(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 3 || sb != [sa[0], sa[2]] {
            return Err(mismatch(
                format!("add_expand#{}", self.nodes.len()),
                format!("{} {:?} + {} {:?}", self.label(a), sa, self.label(b), sb),
            ));
        }
        let (bs, t, c) = (sa[0], sa[1], sa[2]);
        let mut out = self.value(a).data().to_vec();
        let bd = self.value(b).data();
        for bi in 0..bs {
            for ti in 0..t {
                out[(bi * t + ti) * c..(bi * t + ti + 1) * c]
                    .iter_mut()
                    .zip(&bd[bi * c..(bi + 1) * c])
                    .for_each(|(o, v)| *o += v);
            }
        }
        let ng = self.ng(&[a, b]);
        self.push(Op::AddExpand(a, b), Tensor::from_parts(sa, out), ng)
    }

    /// Layer normalization over the last axis with affine `gamma`, `beta`.
    pub fn layer_norm(&mut self, x: NodeId, gamma: NodeId, beta: NodeId) -> Result<NodeId> {
        let n = self.value(x).last_dim();
        if self.shape(gamma) != [n] || self.shape(beta) != [n] {
            return Err(mismatch(
                format!("layer_norm#{}", self.nodes.len()),
                format!(
                    "input {:?}, gamma {:?}, beta {:?}",
                    self.shape(x),
                    self.shape(gamma),
                    self.shape(beta)
                ),
            ));
        }
        let xd = self.value(x).data();
        let (g, b) = (self.value(gamma).data(), self.value(beta).data());
        let mut xhat = vec![0.0; xd.len()];
        let mut out = vec![0.0; xd.len()];
        let mut inv_std = Vec::with_capacity(xd.len() / n);
        for ((row, xh), o) in xd.chunks(n).zip(xhat.chunks_mut(n)).zip(out.chunks_mut(n)) {
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let is = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            inv_std.push(is);
            for j in 0..n {
                xh[j] = (row[j] - mean) * is;
                o[j] = g[j] * xh[j] + b[j];
            }
        }
        let shape = self.shape(x).to_vec();
        let ng = self.ng(&[x, gamma, beta]);
        self.push(
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
            Tensor::from_parts(shape, out),
            ng,
        )
    }

    /// Unit L2 norm along the last axis; all-zero rows stay zero.
    pub fn l2_normalize(&mut self, a: NodeId) -> Result<NodeId> {
        let n = self.value(a).last_dim();
        let d = self.value(a).data();
        let mut out = vec![0.0; d.len()];
        let mut norms = Vec::with_capacity(d.len() / n);
        for (row, o) in d.chunks(n).zip(out.chunks_mut(n)) {
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            norms.push(norm);
            if norm > 0.0 {
                o.iter_mut().zip(row).for_each(|(y, x)| *y = x / norm);
            }
        }
        let shape = self.shape(a).to_vec();
        let ng = self.ng(&[a]);
        self.push(Op::L2Normalize { src: a, norms }, Tensor::from_parts(shape, out), ng)
    }

    // ------------------------------------------------------------ reductions

    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        let s = self.value(a).data().iter().sum();
        let ng = self.ng(&[a]);
        self.push(Op::Sum(a), Tensor::scalar(s), ng)
    }

    pub fn mean(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.value(a);
        let s = v.data().iter().sum::<f64>() / v.numel() as f64;
        let ng = self.ng(&[a]);
        self.push(Op::Mean(a), Tensor::scalar(s), ng)
    }

    // ---------------------------------------------------------------- losses

    /// Mean squared error.
    pub fn mse(&mut self, pred: NodeId, target: NodeId) -> Result<NodeId> {
        self.same_shape("mse", pred, target)?;
        let (p, t) = (self.value(pred).data(), self.value(target).data());
        let l = p.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / p.len() as f64;
        let ng = self.ng(&[pred, target]);
        self.push(Op::Mse(pred, target), Tensor::scalar(l), ng)
    }

    /// Mean absolute error.
    pub fn mae(&mut self, pred: NodeId, target: NodeId) -> Result<NodeId> {
        self.same_shape("mae", pred, target)?;
        let (p, t) = (self.value(pred).data(), self.value(target).data());
        let l = p.iter().zip(t).map(|(a, b)| (a - b).abs()).sum::<f64>() / p.len() as f64;
        let ng = self.ng(&[pred, target]);
        self.push(Op::Mae(pred, target), Tensor::scalar(l), ng)
    }

    /// Binary cross entropy on logits (sigmoid folded in), averaged.
    pub fn bce_with_logits(&mut self, logits: NodeId, target: NodeId) -> Result<NodeId> {
        self.same_shape("bce", logits, target)?;
        let (z, y) = (self.value(logits).data(), self.value(target).data());
        let l = z
            .iter()
            .zip(y)
            .map(|(&z, &y)| z.max(0.0) - z * y + (-z.abs()).exp().ln_1p())
            .sum::<f64>()
            / z.len() as f64;
        let ng = self.ng(&[logits, target]);
        self.push(Op::BceWithLogits(logits, target), Tensor::scalar(l), ng)
    }

    /// Categorical cross entropy on logits `[B, C]` with class indices.
    pub fn cross_entropy(&mut self, logits: NodeId, targets: &[usize]) -> Result<NodeId> {
        let s = self.shape(logits).to_vec();
        let node = format!("cross_entropy#{}", self.nodes.len());
        if s.len() != 2 || s[0] != targets.len() {
            return Err(mismatch(node, format!("logits {s:?}, {} targets", targets.len())));
        }
        let c = s[1];
        let probs = softmax_rows(self.value(logits).data(), c);
        let mut l = 0.0;
        for (i, &t) in targets.iter().enumerate() {
            if t >= c {
                return Err(TensorError::IndexOutOfRange {
                    node,
                    index: t,
                    size: c,
                });
            }
            // log-sum-exp form for stability
            let row = &self.value(logits).data()[i * c..(i + 1) * c];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            l += lse - row[t];
        }
        l /= targets.len() as f64;
        let ng = self.ng(&[logits]);
        self.push(
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
            },
            Tensor::scalar(l),
            ng,
        )
    }

    // -------------------------------------------------------------- backward

    /// Reverse pass from a scalar `loss`. Gradients accumulate (sum) where a
    /// node feeds several consumers.
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        if loss.0 >= self.nodes.len() {
            return Err(TensorError::Invalid(format!(
                "node #{} does not belong to this graph",
                loss.0
            )));
        }
        if !self.value(loss).is_scalar() {
            return Err(TensorError::NotScalar(self.shape(loss).to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].needs_grad {
                continue;
            }
            let Some(gy) = grads[i].take() else { continue };
            self.backprop_node(i, &gy, &mut grads);
            grads[i] = Some(gy);
        }
        self.grads = grads;
        Ok(())
    }

    /// Accumulate parameter gradients from the last backward pass into `store`.
    pub fn write_param_grads(&self, store: &mut ParamStore) {
        for (&pid, &nid) in &self.param_nodes {
            if let Some(g) = self.grad(nid) {
                store.accumulate_grad(pid, g);
            }
        }
    }

    fn backprop_node(&self, i: usize, gy: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let nodes = &self.nodes;
        let val = |id: NodeId| nodes[id.0].value.data();
        let shape = |id: NodeId| nodes[id.0].value.shape();
        let mut acc = |id: NodeId, f: &mut dyn FnMut(&mut [f64])| {
            if !nodes[id.0].needs_grad {
                return;
            }
            let g = grads[id.0].get_or_insert_with(|| vec![0.0; nodes[id.0].value.numel()]);
            f(g);
        };
        let y = nodes[i].value.data();
        match &nodes[i].op {
            Op::Input | Op::Param => {}
            &Op::MatMul(a, b) => {
                let k = shape(b)[0];
                let n = shape(b)[1];
                let m = val(a).len() / k;
                acc(a, &mut |g| gemm_bt(gy, val(b), m, k, n, g));
                acc(b, &mut |g| gemm_at(val(a), gy, m, k, n, g));
            }
            &Op::AddBias(a, b) => {
                acc(a, &mut |g| g.iter_mut().zip(gy).for_each(|(x, d)| *x += d));
                let n = val(b).len();
                acc(b, &mut |g| {
                    for row in gy.chunks(n) {
                        g.iter_mut().zip(row).for_each(|(x, d)| *x += d);
                    }
                });
            }
            &Op::Add(a, b) => {
                acc(a, &mut |g| g.iter_mut().zip(gy).for_each(|(x, d)| *x += d));
                acc(b, &mut |g| g.iter_mut().zip(gy).for_each(|(x, d)| *x += d));
            }
            &Op::Sub(a, b) => {
                acc(a, &mut |g| g.iter_mut().zip(gy).for_each(|(x, d)| *x += d));
                acc(b, &mut |g| g.iter_mut().zip(gy).for_each(|(x, d)| *x -= d));
            }
            &Op::Mul(a, b) => {
                acc(a, &mut |g| {
                    for ((x, d), v) in g.iter_mut().zip(gy).zip(val(b)) {
                        *x += d * v;
                    }
                });
                acc(b, &mut |g| {
                    for ((x, d), v) in g.iter_mut().zip(gy).zip(val(a)) {
                        *x += d * v;
                    }
                });
            }
            &Op::Scale(a, c) => {
                acc(a, &mut |g| g.iter_mut().zip(gy).for_each(|(x, d)| *x += c * d));
            }
            &Op::AddScalar(a) => {
                acc(a, &mut |g| g.iter_mut().zip(gy).for_each(|(x, d)| *x += d));
            }
            &Op::Relu(a) => {
                acc(a, &mut |g| {
                    for ((x, d), v) in g.iter_mut().zip(gy).zip(val(a)) {
                        if *v > 0.0 {
                            *x += d;
                        }
                    }
                });
            }
            &Op::Sigmoid(a) => {
                acc(a, &mut |g| {
                    for ((x, d), s) in g.iter_mut().zip(gy).zip(y) {
                        *x += d * s * (1.0 - s);
                    }
                });
            }
            &Op::Tanh(a) => {
                acc(a, &mut |g| {
                    for ((x, d), t) in g.iter_mut().zip(gy).zip(y) {
                        *x += d * (1.0 - t * t);
                    }
                });
            }
            &Op::Softmax(a) => {
                let n = *shape(a).last().unwrap();
                acc(a, &mut |g| {
                    for ((gr, dr), yr) in g.chunks_mut(n).zip(gy.chunks(n)).zip(y.chunks(n)) {
                        let dot: f64 = dr.iter().zip(yr).map(|(d, s)| d * s).sum();
                        for j in 0..n {
                            gr[j] += yr[j] * (dr[j] - dot);
                        }
                    }
                });
            }
            Op::Concat(parts) => {
                let total = *nodes[i].value.shape().last().unwrap();
                let mut offset = 0;
                for &p in parts {
                    let w = *shape(p).last().unwrap();
                    acc(p, &mut |g| {
                        for (gr, dr) in g.chunks_mut(w).zip(gy.chunks(total)) {
                            gr.iter_mut()
                                .zip(&dr[offset..offset + w])
                                .for_each(|(x, d)| *x += d);
                        }
                    });
                    offset += w;
                }
            }
            &Op::SliceLast { src, start } => {
                let n = *shape(src).last().unwrap();
                let w = *nodes[i].value.shape().last().unwrap();
                acc(src, &mut |g| {
                    for (gr, dr) in g.chunks_mut(n).zip(gy.chunks(w)) {
                        gr[start..start + w]
                            .iter_mut()
                            .zip(dr)
                            .for_each(|(x, d)| *x += d);
                    }
                });
            }
            &Op::Reshape(a) => {
                acc(a, &mut |g| g.iter_mut().zip(gy).for_each(|(x, d)| *x += d));
            }
            Op::Embedding { table, indices } => {
                let d = shape(*table)[1];
                acc(*table, &mut |g| {
                    for (r, &idx) in indices.iter().enumerate() {
                        g[idx * d..(idx + 1) * d]
                            .iter_mut()
                            .zip(&gy[r * d..(r + 1) * d])
                            .for_each(|(x, v)| *x += v);
                    }
                });
            }
            Op::EmbeddingBag { table, bags } => {
                let d = shape(*table)[1];
                acc(*table, &mut |g| {
                    for (r, bag) in bags.iter().enumerate() {
                        let w = 1.0 / bag.len() as f64;
                        for &idx in bag {
                            g[idx * d..(idx + 1) * d]
                                .iter_mut()
                                .zip(&gy[r * d..(r + 1) * d])
                                .for_each(|(x, v)| *x += w * v);
                        }
                    }
                });
            }
            &Op::Conv1d { x, w, pad_left } => {
                let (b, l, cin) = (shape(x)[0], shape(x)[1], shape(x)[2]);
                let (k, cout) = (shape(w)[0], shape(w)[2]);
                let lout = nodes[i].value.shape()[1];
                let (xd, wd) = (val(x), val(w));
                acc(x, &mut |g| {
                    for bi in 0..b {
                        for t in 0..lout {
                            let dy = &gy[(bi * lout + t) * cout..(bi * lout + t + 1) * cout];
                            for kk in 0..k {
                                let src = t + kk;
                                if src < pad_left || src - pad_left >= l {
                                    continue;
                                }
                                let row = (bi * l + src - pad_left) * cin;
                                gemm_bt(
                                    dy,
                                    &wd[kk * cin * cout..(kk + 1) * cin * cout],
                                    1,
                                    cin,
                                    cout,
                                    &mut g[row..row + cin],
                                );
                            }
                        }
                    }
                });
                acc(w, &mut |g| {
                    for bi in 0..b {
                        for t in 0..lout {
                            let dy = &gy[(bi * lout + t) * cout..(bi * lout + t + 1) * cout];
                            for kk in 0..k {
                                let src = t + kk;
                                if src < pad_left || src - pad_left >= l {
                                    continue;
                                }
                                let row = (bi * l + src - pad_left) * cin;
                                gemm_at(
                                    &xd[row..row + cin],
                                    dy,
                                    1,
                                    cin,
                                    cout,
                                    &mut g[kk * cin * cout..(kk + 1) * cin * cout],
                                );
                            }
                        }
                    }
                });
            }
            &Op::SelectTime { src, t } => {
                let (b, tt, c) = (shape(src)[0], shape(src)[1], shape(src)[2]);
                acc(src, &mut |g| {
                    for bi in 0..b {
                        g[(bi * tt + t) * c..(bi * tt + t + 1) * c]
                            .iter_mut()
                            .zip(&gy[bi * c..(bi + 1) * c])
                            .for_each(|(x, d)| *x += d);
                    }
                });
            }
            Op::StackTime(steps) => {
                let (b, t, c) = {
                    let s = nodes[i].value.shape();
                    (s[0], s[1], s[2])
                };
                for (ti, &st) in steps.iter().enumerate() {
                    acc(st, &mut |g| {
                        for bi in 0..b {
                            g[bi * c..(bi + 1) * c]
                                .iter_mut()
                                .zip(&gy[(bi * t + ti) * c..(bi * t + ti + 1) * c])
                                .for_each(|(x, d)| *x += d);
                        }
                    });
                }
            }
            &Op::MeanTime(a) => {
                let (b, t, c) = (shape(a)[0], shape(a)[1], shape(a)[2]);
                let w = 1.0 / t as f64;
                acc(a, &mut |g| {
                    for bi in 0..b {
                        for ti in 0..t {
                            g[(bi * t + ti) * c..(bi * t + ti + 1) * c]
                                .iter_mut()
                                .zip(&gy[bi * c..(bi + 1) * c])
                                .for_each(|(x, d)| *x += w * d);
                        }
                    }
                });
            }
            &Op::BatchMatMul(a, b) => {
                let (bs, m, k) = (shape(a)[0], shape(a)[1], shape(a)[2]);
                let n = shape(b)[2];
                let (ad, bd) = (val(a), val(b));
                acc(a, &mut |g| {
                    for q in 0..bs {
                        gemm_bt(
                            &gy[q * m * n..(q + 1) * m * n],
                            &bd[q * k * n..(q + 1) * k * n],
                            m,
                            k,
                            n,
                            &mut g[q * m * k..(q + 1) * m * k],
                        );
                    }
                });
                acc(b, &mut |g| {
                    for q in 0..bs {
                        gemm_at(
                            &ad[q * m * k..(q + 1) * m * k],
                            &gy[q * m * n..(q + 1) * m * n],
                            m,
                            k,
                            n,
                            &mut g[q * k * n..(q + 1) * k * n],
                        );
                    }
                });
            }
            &Op::TransposeLast(a) => {
                let (b, m, n) = (shape(a)[0], shape(a)[1], shape(a)[2]);
                acc(a, &mut |g| {
                    for bi in 0..b {
                        for r in 0..m {
                            for c in 0..n {
                                g[bi * m * n + r * n + c] += gy[bi * m * n + c * m + r];
                            }
                        }
                    }
                });
            }
            &Op::AddExpand(a, b) => {
                let (bs, t, c) = (shape(a)[0], shape(a)[1], shape(a)[2]);
                acc(a, &mut |g| g.iter_mut().zip(gy).for_each(|(x, d)| *x += d));
                acc(b, &mut |g| {
                    for bi in 0..bs {
                        for ti in 0..t {
                            g[bi * c..(bi + 1) * c]
                                .iter_mut()
                                .zip(&gy[(bi * t + ti) * c..(bi * t + ti + 1) * c])
                                .for_each(|(x, d)| *x += d);
                        }
                    }
                });
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let n = val(*gamma).len();
                let gm = val(*gamma);
                acc(*x, &mut |g| {
                    for (r, ((gr, dr), xh)) in g
                        .chunks_mut(n)
                        .zip(gy.chunks(n))
                        .zip(xhat.chunks(n))
                        .enumerate()
                    {
                        let dxhat: Vec<f64> = dr.iter().zip(gm).map(|(d, g)| d * g).collect();
                        let mean_d = dxhat.iter().sum::<f64>() / n as f64;
                        let mean_dx = dxhat.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>()
                            / n as f64;
                        for j in 0..n {
                            gr[j] += inv_std[r] * (dxhat[j] - mean_d - xh[j] * mean_dx);
                        }
                    }
                });
                acc(*gamma, &mut |g| {
                    for (dr, xh) in gy.chunks(n).zip(xhat.chunks(n)) {
                        for j in 0..n {
                            g[j] += dr[j] * xh[j];
                        }
                    }
                });
                acc(*beta, &mut |g| {
                    for dr in gy.chunks(n) {
                        g.iter_mut().zip(dr).for_each(|(x, d)| *x += d);
                    }
                });
            }
            Op::L2Normalize { src, norms } => {
                let n = *shape(*src).last().unwrap();
                acc(*src, &mut |g| {
                    for (r, ((gr, dr), yr)) in g
                        .chunks_mut(n)
                        .zip(gy.chunks(n))
                        .zip(y.chunks(n))
                        .enumerate()
                    {
                        if norms[r] == 0.0 {
                            continue;
                        }
                        let dot: f64 = dr.iter().zip(yr).map(|(a, b)| a * b).sum();
                        for j in 0..n {
                            gr[j] += (dr[j] - yr[j] * dot) / norms[r];
                        }
                    }
                });
            }
            &Op::Sum(a) => {
                let d = gy[0];
                acc(a, &mut |g| g.iter_mut().for_each(|x| *x += d));
            }
            &Op::Mean(a) => {
                let d = gy[0] / val(a).len() as f64;
                acc(a, &mut |g| g.iter_mut().for_each(|x| *x += d));
            }
            &Op::Mse(p, t) => {
                let c = 2.0 * gy[0] / val(p).len() as f64;
                let (pd, td) = (val(p), val(t));
                acc(p, &mut |g| {
                    for j in 0..g.len() {
                        g[j] += c * (pd[j] - td[j]);
                    }
                });
                acc(t, &mut |g| {
                    for j in 0..g.len() {
                        g[j] -= c * (pd[j] - td[j]);
                    }
                });
            }
            &Op::Mae(p, t) => {
                let c = gy[0] / val(p).len() as f64;
                let (pd, td) = (val(p), val(t));
                let sign = |d: f64| {
                    if d > 0.0 {
                        1.0
                    } else if d < 0.0 {
                        -1.0
                    } else {
                        0.0
                    }
                };
                acc(p, &mut |g| {
                    for j in 0..g.len() {
                        g[j] += c * sign(pd[j] - td[j]);
                    }
                });
                acc(t, &mut |g| {
                    for j in 0..g.len() {
                        g[j] -= c * sign(pd[j] - td[j]);
                    }
                });
            }
            &Op::BceWithLogits(z, t) => {
                let c = gy[0] / val(z).len() as f64;
                let (zd, td) = (val(z), val(t));
                acc(z, &mut |g| {
                    for j in 0..g.len() {
                        g[j] += c * (sigmoid(zd[j]) - td[j]);
                    }
                });
                acc(t, &mut |g| {
                    for j in 0..g.len() {
                        g[j] -= c * zd[j];
                    }
                });
            }
            Op::CrossEntropy {
                logits,
                targets,
                probs,
            } => {
                let c = probs.len() / targets.len();
                let scale = gy[0] / targets.len() as f64;
                acc(*logits, &mut |g| {
                    for (r, &t) in targets.iter().enumerate() {
                        for j in 0..c {
                            let onehot = if j == t { 1.0 } else { 0.0 };
                            g[r * c + j] += scale * (probs[r * c + j] - onehot);
                        }
                    }
                });
            }
        }
    }
}
