//! Layers built from graph primitives. Each layer owns only [`ParamId`]s;
//! the values live in a [`ParamStore`] so one layer definition can be
//! evaluated on many graphs.

use rand::Rng;

use super::{init_bound, Graph, NodeId, Padding, ParamId, ParamStore, Result, Tensor};

/// Affine map over the last axis.
#[derive(Debug, Clone)]
pub struct Dense {
    pub weight: ParamId,
    pub bias: ParamId,
    pub input_dim: usize,
    pub output_dim: usize,
}

impl Dense {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        input_dim: usize,
        output_dim: usize,
        rng: &mut R,
    ) -> Self {
        let weight = store.add(
            format!("{name}.w"),
            Tensor::uniform(&[input_dim, output_dim], init_bound(input_dim), rng),
        );
        let bias = store.add(format!("{name}.b"), Tensor::zeros(&[output_dim]));
        Self {
            weight,
            bias,
            input_dim,
            output_dim,
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: NodeId) -> Result<NodeId> {
        let w = g.param(store, self.weight);
        let b = g.param(store, self.bias);
        let xw = g.matmul(x, w)?;
        g.add_bias(xw, b)
    }
}

/// Stack of dense layers; ReLU after every layer, or after all but the last.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub layers: Vec<Dense>,
    pub relu_last: bool,
}

impl Mlp {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        dims: &[usize],
        relu_last: bool,
        rng: &mut R,
    ) -> Self {
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, d)| Dense::new(store, &format!("{name}.{i}"), d[0], d[1], rng))
            .collect();
        Self { layers, relu_last }
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.output_dim)
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, mut x: NodeId) -> Result<NodeId> {
        let last = self.layers.len().saturating_sub(1);
        for (i, layer) in self.layers.iter().enumerate() {
            x = layer.forward(g, store, x)?;
            if i < last || self.relu_last {
                x = g.relu(x)?;
            }
        }
        Ok(x)
    }
}

#[derive(Debug, Clone)]
pub struct Embedding {
    pub table: ParamId,
    pub vocab: usize,
    pub dim: usize,
}

impl Embedding {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        vocab: usize,
        dim: usize,
        rng: &mut R,
    ) -> Self {
        let table = store.add(
            format!("{name}.table"),
            Tensor::uniform(&[vocab, dim], init_bound(dim), rng),
        );
        Self { table, vocab, dim }
    }

    pub fn lookup(&self, g: &mut Graph, store: &ParamStore, idx: &[usize]) -> Result<NodeId> {
        let t = g.param(store, self.table);
        g.embedding(t, idx)
    }

    pub fn mean_bag(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        bags: &[Vec<usize>],
    ) -> Result<NodeId> {
        let t = g.param(store, self.table);
        g.embedding_bag(t, bags)
    }
}

#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize) -> Self {
        Self {
            gamma: store.add(format!("{name}.gamma"), Tensor::filled(&[dim], 1.0)),
            beta: store.add(format!("{name}.b"), Tensor::zeros(&[dim])),
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: NodeId) -> Result<NodeId> {
        let gm = g.param(store, self.gamma);
        let bt = g.param(store, self.beta);
        g.layer_norm(x, gm, bt)
    }
}

/// LSTM cell with gate order (input, forget, candidate, output).
#[derive(Debug, Clone)]
pub struct LstmCell {
    pub input: Dense,
    pub recurrent: ParamId,
    pub hidden: usize,
}

impl LstmCell {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        input_dim: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Self {
        let input = Dense::new(store, &format!("{name}.x"), input_dim, 4 * hidden, rng);
        let recurrent = store.add(
            format!("{name}.h.w"),
            Tensor::uniform(&[hidden, 4 * hidden], init_bound(hidden), rng),
        );
        Self {
            input,
            recurrent,
            hidden,
        }
    }

    /// One step: returns `(h', c')`.
    pub fn step(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        x: NodeId,
        h: NodeId,
        c: NodeId,
    ) -> Result<(NodeId, NodeId)> {
        let hs = self.hidden;
        let xa = self.input.forward(g, store, x)?;
        let u = g.param(store, self.recurrent);
        let ha = g.matmul(h, u)?;
        let z = g.add(xa, ha)?;
        let (i, f, cand, o) = (
            g.slice_last(z, 0, hs)?,
            g.slice_last(z, hs, 2 * hs)?,
            g.slice_last(z, 2 * hs, 3 * hs)?,
            g.slice_last(z, 3 * hs, 4 * hs)?,
        );
        let i = g.sigmoid(i)?;
        let f = g.sigmoid(f)?;
        let cand = g.tanh(cand)?;
        let o = g.sigmoid(o)?;
        let fc = g.mul(f, c)?;
        let ic = g.mul(i, cand)?;
        let c_next = g.add(fc, ic)?;
        let tc = g.tanh(c_next)?;
        let h_next = g.mul(o, tc)?;
        Ok((h_next, c_next))
    }
}

/// GRU cell (reset, update, candidate), reset applied after the recurrent
/// matmul.
#[derive(Debug, Clone)]
pub struct GruCell {
    pub input: Dense,
    pub recurrent: Dense,
    pub hidden: usize,
}

impl GruCell {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        input_dim: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Self {
        Self {
            input: Dense::new(store, &format!("{name}.x"), input_dim, 3 * hidden, rng),
            recurrent: Dense::new(store, &format!("{name}.h"), hidden, 3 * hidden, rng),
            hidden,
        }
    }

    pub fn step(&self, g: &mut Graph, store: &ParamStore, x: NodeId, h: NodeId) -> Result<NodeId> {
        let hs = self.hidden;
        let xa = self.input.forward(g, store, x)?;
        let ha = self.recurrent.forward(g, store, h)?;
        let xr = g.slice_last(xa, 0, hs)?;
        let hr = g.slice_last(ha, 0, hs)?;
        let xz = g.slice_last(xa, hs, 2 * hs)?;
        let hz = g.slice_last(ha, hs, 2 * hs)?;
        let xn = g.slice_last(xa, 2 * hs, 3 * hs)?;
        let hn = g.slice_last(ha, 2 * hs, 3 * hs)?;
        let r = g.add(xr, hr)?;
        let r = g.sigmoid(r)?;
        let z = g.add(xz, hz)?;
        let z = g.sigmoid(z)?;
        let rh = g.mul(r, hn)?;
        let n = g.add(xn, rh)?;
        let n = g.tanh(n)?;
        let one_minus_z = g.one_minus(z)?;
        let a = g.mul(one_minus_z, n)?;
        let b = g.mul(z, h)?;
        g.add(a, b)
    }
}

/// Convolutional LSTM over a 1-D spatial axis: state is `[B, S, hidden]`,
/// gates come from same-padded convolutions of input and state.
#[derive(Debug, Clone)]
pub struct ConvLstmCell {
    pub input_kernel: ParamId,
    pub state_kernel: ParamId,
    pub bias: ParamId,
    pub hidden: usize,
}

impl ConvLstmCell {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        in_channels: usize,
        hidden: usize,
        kernel: usize,
        rng: &mut R,
    ) -> Self {
        let input_kernel = store.add(
            format!("{name}.x.w"),
            Tensor::uniform(
                &[kernel, in_channels, 4 * hidden],
                init_bound(kernel * in_channels),
                rng,
            ),
        );
        let state_kernel = store.add(
            format!("{name}.h.w"),
            Tensor::uniform(
                &[kernel, hidden, 4 * hidden],
                init_bound(kernel * hidden),
                rng,
            ),
        );
        let bias = store.add(format!("{name}.b"), Tensor::zeros(&[4 * hidden]));
        Self {
            input_kernel,
            state_kernel,
            bias,
            hidden,
        }
    }

    pub fn step(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        x: NodeId,
        h: NodeId,
        c: NodeId,
    ) -> Result<(NodeId, NodeId)> {
        let hs = self.hidden;
        let wx = g.param(store, self.input_kernel);
        let wh = g.param(store, self.state_kernel);
        let b = g.param(store, self.bias);
        let zx = g.conv1d(x, wx, Padding::Same)?;
        let zh = g.conv1d(h, wh, Padding::Same)?;
        let z = g.add(zx, zh)?;
        let z = g.add_bias(z, b)?;
        let i = g.slice_last(z, 0, hs)?;
        let f = g.slice_last(z, hs, 2 * hs)?;
        let cand = g.slice_last(z, 2 * hs, 3 * hs)?;
        let o = g.slice_last(z, 3 * hs, 4 * hs)?;
        let i = g.sigmoid(i)?;
        let f = g.sigmoid(f)?;
        let cand = g.tanh(cand)?;
        let o = g.sigmoid(o)?;
        let fc = g.mul(f, c)?;
        let ic = g.mul(i, cand)?;
        let c_next = g.add(fc, ic)?;
        let tc = g.tanh(c_next)?;
        let h_next = g.mul(o, tc)?;
        Ok((h_next, c_next))
    }
}

/// Scaled dot-product self-attention with `heads` heads over `[B, T, d]`.
#[derive(Debug, Clone)]
pub struct MultiHeadAttention {
    pub query: Dense,
    pub key: Dense,
    pub value: Dense,
    pub output: Dense,
    pub heads: usize,
    pub dim: usize,
}

impl MultiHeadAttention {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        dim: usize,
        heads: usize,
        rng: &mut R,
    ) -> Self {
        assert!(heads >= 1 && dim % heads == 0, "dim {dim} not divisible by {heads} heads");
        Self {
            query: Dense::new(store, &format!("{name}.q"), dim, dim, rng),
            key: Dense::new(store, &format!("{name}.k"), dim, dim, rng),
            value: Dense::new(store, &format!("{name}.v"), dim, dim, rng),
            output: Dense::new(store, &format!("{name}.o"), dim, dim, rng),
            heads,
            dim,
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: NodeId) -> Result<NodeId> {
        let q = self.query.forward(g, store, x)?;
        let k = self.key.forward(g, store, x)?;
        let v = self.value.forward(g, store, x)?;
        let dh = self.dim / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut outs = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let qh = g.slice_last(q, h * dh, (h + 1) * dh)?;
            let kh = g.slice_last(k, h * dh, (h + 1) * dh)?;
            let vh = g.slice_last(v, h * dh, (h + 1) * dh)?;
            let kt = g.transpose_last(kh)?;
            let scores = g.bmm(qh, kt)?;
            let scores = g.scale(scores, scale)?;
            let attn = g.softmax(scores)?;
            outs.push(g.bmm(attn, vh)?);
        }
        let cat = if outs.len() == 1 { outs[0] } else { g.concat(&outs)? };
        self.output.forward(g, store, cat)
    }
}

/// Post-norm transformer encoder layer.
#[derive(Debug, Clone)]
pub struct EncoderLayer {
    pub attention: MultiHeadAttention,
    pub norm1: LayerNorm,
    pub ff1: Dense,
    pub ff2: Dense,
    pub norm2: LayerNorm,
}

impl EncoderLayer {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        dim: usize,
        heads: usize,
        ff_dim: usize,
        rng: &mut R,
    ) -> Self {
        Self {
            attention: MultiHeadAttention::new(store, &format!("{name}.attn"), dim, heads, rng),
            norm1: LayerNorm::new(store, &format!("{name}.ln1"), dim),
            ff1: Dense::new(store, &format!("{name}.ff1"), dim, ff_dim, rng),
            ff2: Dense::new(store, &format!("{name}.ff2"), ff_dim, dim, rng),
            norm2: LayerNorm::new(store, &format!("{name}.ln2"), dim),
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: NodeId) -> Result<NodeId> {
        let a = self.attention.forward(g, store, x)?;
        let r = g.add(x, a)?;
        let x = self.norm1.forward(g, store, r)?;
        let f = self.ff1.forward(g, store, x)?;
        let f = g.relu(f)?;
        let f = self.ff2.forward(g, store, f)?;
        let r = g.add(x, f)?;
        self.norm2.forward(g, store, r)
    }
}

/// Additive (tanh) attention of a query state over a set of vectors.
#[derive(Debug, Clone)]
pub struct AdditiveAttention {
    pub keys: Dense,
    pub query: Dense,
    pub score: ParamId,
    pub attn_dim: usize,
}

impl AdditiveAttention {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        item_dim: usize,
        query_dim: usize,
        attn_dim: usize,
        rng: &mut R,
    ) -> Self {
        Self {
            keys: Dense::new(store, &format!("{name}.keys"), item_dim, attn_dim, rng),
            query: Dense::new(store, &format!("{name}.query"), query_dim, attn_dim, rng),
            score: store.add(
                format!("{name}.v.w"),
                Tensor::uniform(&[attn_dim, 1], init_bound(attn_dim), rng),
            ),
            attn_dim,
        }
    }

    /// `items[B, R, f]`, `query[B, q]` -> (`context[B, f]`, `weights[B, R]`).
    pub fn forward(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        items: NodeId,
        query: NodeId,
    ) -> Result<(NodeId, NodeId)> {
        let s = g.shape(items).to_vec();
        let (b, r, f) = (s[0], s[1], s[2]);
        let k = self.keys.forward(g, store, items)?;
        let q = self.query.forward(g, store, query)?;
        let e = g.add_expand(k, q)?;
        let e = g.tanh(e)?;
        let v = g.param(store, self.score);
        let scores = g.matmul(e, v)?;
        let scores = g.reshape(scores, &[b, r])?;
        let weights = g.softmax(scores)?;
        let w3 = g.reshape(weights, &[b, 1, r])?;
        let ctx = g.bmm(w3, items)?;
        let ctx = g.reshape(ctx, &[b, f])?;
        Ok((ctx, weights))
    }
}
