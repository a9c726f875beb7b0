//! Layer wiring for the feature branch, the six trend encoders and the head.

use rand::Rng;

use super::config::{ModelConfig, QarConfig, QarKind};
use super::descriptor::TemporalIndex;
use crate::tensor::nn::{ConvLstmCell, Dense, Embedding, EncoderLayer, LstmCell, Mlp};
use crate::tensor::{init_bound, Graph, NodeId, Padding, ParamId, ParamStore, Result, Tensor};

/// Tensorized inputs for a batch of `b` garments.
#[derive(Debug, Clone)]
pub(crate) struct Batch {
    pub b: usize,
    /// `[b, feature_dim]`, absent when the model has no visual input.
    pub features: Option<Tensor>,
    /// Joint-vocabulary indices of category + attributes, per garment.
    pub bags: Vec<Vec<usize>>,
    /// Per table: day of year, week, month, season.
    pub temporal: [Vec<usize>; 4],
    /// (gender, age group) indices.
    pub demographic: Option<(Vec<usize>, Vec<usize>)>,
    /// `[b, n, a_max]`, already multiplied by the mask.
    pub trend: Option<Tensor>,
    /// `[b, a_max]`
    pub mask: Option<Tensor>,
}

#[derive(Debug, Clone)]
pub(crate) struct FusionBranch {
    labels: Embedding,
    temporal: [Embedding; 4],
    demographic: Option<(Embedding, Embedding)>,
    mlp: Mlp,
}

impl FusionBranch {
    fn new<R: Rng>(store: &mut ParamStore, cfg: &ModelConfig, rng: &mut R) -> Self {
        let f = &cfg.fusion;
        let vocab = cfg.num_categories + cfg.num_attributes;
        let labels = Embedding::new(store, "fusion.labels", vocab, f.d_c, rng);
        let names = ["doy", "week", "month", "season"];
        let temporal = std::array::from_fn(|i| {
            Embedding::new(
                store,
                &format!("fusion.{}", names[i]),
                TemporalIndex::VOCAB[i],
                f.d_t,
                rng,
            )
        });
        let demographic = cfg.demographic.then(|| {
            (
                Embedding::new(store, "fusion.gender", 2, f.d_g, rng),
                Embedding::new(store, "fusion.age", 7, f.d_g, rng),
            )
        });
        let input = cfg.feature_dim + f.d_c + 4 * f.d_t + if cfg.demographic { 2 * f.d_g } else { 0 };
        let mut dims = vec![input];
        dims.extend(std::iter::repeat(f.u_mlp).take(f.n_mlp));
        let mlp = Mlp::new(store, "fusion.mlp", &dims, true, rng);
        Self {
            labels,
            temporal,
            demographic,
            mlp,
        }
    }

    pub fn output_dim(&self) -> usize {
        self.mlp.output_dim()
    }

    /// `F_F = MLP([F_v, F_c, F_t, F_g])`.
    pub fn forward(&self, g: &mut Graph, s: &ParamStore, batch: &Batch) -> Result<NodeId> {
        let mut parts = Vec::with_capacity(8);
        if let Some(f) = &batch.features {
            parts.push(g.input(f.clone()));
        }
        parts.push(self.labels.mean_bag(g, s, &batch.bags)?);
        for (emb, idx) in self.temporal.iter().zip(&batch.temporal) {
            parts.push(emb.lookup(g, s, idx)?);
        }
        if let (Some((ge, ae)), Some((gi, ai))) = (&self.demographic, &batch.demographic) {
            parts.push(ge.lookup(g, s, gi)?);
            parts.push(ae.lookup(g, s, ai)?);
        }
        let x = g.concat(&parts)?;
        self.mlp.forward(g, s, x)
    }
}

#[derive(Debug, Clone)]
struct ConvLayer {
    kernel: ParamId,
    bias: ParamId,
}

#[derive(Debug, Clone)]
enum QarNet {
    Lr(Dense),
    Lstm(LstmCell),
    FeedbackLstm { cell: LstmCell, predict: Dense },
    Cnn(Vec<ConvLayer>),
    ConvLstm { cell: ConvLstmCell, out: Dense },
    Transformer {
        input: Dense,
        position: Option<ParamId>,
        layers: Vec<EncoderLayer>,
    },
}

/// Trend encoder: `(A[b, n, a_max], mask[b, a_max]) -> F_Q[b, q]`.
#[derive(Debug, Clone)]
pub(crate) struct QarBranch {
    cfg: QarConfig,
    /// FeedbackLSTM roll-out length.
    k: usize,
    net: QarNet,
}

/// Sinusoidal table `[n, d]`, flattened.
fn sinusoid(n: usize, d: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * d];
    for t in 0..n {
        for i in 0..d {
            let rate = 1.0 / 10000f64.powf((2 * (i / 2)) as f64 / d as f64);
            let a = t as f64 * rate;
            out[t * d + i] = if i % 2 == 0 { a.sin() } else { a.cos() };
        }
    }
    out
}

impl QarBranch {
    fn new<R: Rng>(store: &mut ParamStore, cfg: &QarConfig, k: usize, rng: &mut R) -> Self {
        let (n, a, q, h) = (cfg.n, cfg.a_max, cfg.q, cfg.hidden);
        let net = match cfg.kind {
            QarKind::Lr => QarNet::Lr(Dense::new(store, "qar.lr", n * a, q, rng)),
            QarKind::Lstm => QarNet::Lstm(LstmCell::new(store, "qar.lstm", a, q, rng)),
            QarKind::FeedbackLstm => QarNet::FeedbackLstm {
                cell: LstmCell::new(store, "qar.lstm", a, q, rng),
                predict: Dense::new(store, "qar.feedback", q, a, rng),
            },
            QarKind::Cnn => QarNet::Cnn(
                (0..cfg.layers)
                    .map(|l| {
                        let cin = if l == 0 { a } else { h };
                        let cout = if l + 1 == cfg.layers { q } else { h };
                        ConvLayer {
                            kernel: store.add(
                                format!("qar.conv{l}.w"),
                                Tensor::uniform(
                                    &[cfg.kernel, cin, cout],
                                    init_bound(cfg.kernel * cin),
                                    rng,
                                ),
                            ),
                            bias: store.add(format!("qar.conv{l}.b"), Tensor::zeros(&[cout])),
                        }
                    })
                    .collect(),
            ),
            QarKind::ConvLstm => QarNet::ConvLstm {
                cell: ConvLstmCell::new(store, "qar.convlstm", 1, h, cfg.kernel, rng),
                out: Dense::new(store, "qar.out", a * h, q, rng),
            },
            QarKind::Transformer => {
                let input = Dense::new(store, "qar.input", a, q, rng);
                // Named as a bias: it is an additive offset, initialised to
                // the sinusoidal table and trained.
                let position = cfg.positional.then(|| {
                    store.add("qar.pos.b", Tensor::from_parts(vec![n * q], sinusoid(n, q)))
                });
                let layers = (0..cfg.layers)
                    .map(|l| {
                        EncoderLayer::new(store, &format!("qar.enc{l}"), q, cfg.heads, cfg.ff_dim, rng)
                    })
                    .collect();
                QarNet::Transformer {
                    input,
                    position,
                    layers,
                }
            }
        };
        Self {
            cfg: cfg.clone(),
            k,
            net,
        }
    }

    pub fn forward(&self, g: &mut Graph, s: &ParamStore, batch: &Batch) -> Result<NodeId> {
        let (n, a, q) = (self.cfg.n, self.cfg.a_max, self.cfg.q);
        let b = batch.b;
        let trend = batch
            .trend
            .as_ref()
            .expect("validated: trend input present for trend models");
        let x = g.input(trend.clone());
        match &self.net {
            QarNet::Lr(dense) => {
                let flat = g.reshape(x, &[b, n * a])?;
                dense.forward(g, s, flat)
            }
            QarNet::Lstm(cell) => {
                let (h, _) = run_lstm(g, s, cell, x, n, b)?;
                Ok(h)
            }
            QarNet::FeedbackLstm { cell, predict } => {
                let (mut h, mut c) = run_lstm(g, s, cell, x, n, b)?;
                let mask = g.input(batch.mask.clone().expect("mask present"));
                for _ in 0..self.k {
                    let p = predict.forward(g, s, h)?;
                    let p = g.mul(p, mask)?;
                    (h, c) = cell.step(g, s, p, h, c)?;
                }
                Ok(h)
            }
            QarNet::Cnn(layers) => {
                let mut y = x;
                for layer in layers {
                    let w = g.param(s, layer.kernel);
                    let bias = g.param(s, layer.bias);
                    y = g.conv1d(y, w, Padding::Valid)?;
                    y = g.add_bias(y, bias)?;
                    y = g.relu(y)?;
                }
                g.mean_time(y)
            }
            QarNet::ConvLstm { cell, out } => {
                let hc = cell.hidden;
                let mut h = g.input(Tensor::zeros(&[b, a, hc]));
                let mut c = g.input(Tensor::zeros(&[b, a, hc]));
                for t in 0..n {
                    let xt = g.select_time(x, t)?;
                    let xt = g.reshape(xt, &[b, a, 1])?;
                    (h, c) = cell.step(g, s, xt, h, c)?;
                }
                let flat = g.reshape(h, &[b, a * hc])?;
                out.forward(g, s, flat)
            }
            QarNet::Transformer {
                input,
                position,
                layers,
            } => {
                let mut y = input.forward(g, s, x)?;
                if let Some(pos) = position {
                    let p = g.param(s, *pos);
                    let flat = g.reshape(y, &[b, n * q])?;
                    let flat = g.add_bias(flat, p)?;
                    y = g.reshape(flat, &[b, n, q])?;
                }
                for layer in layers {
                    y = layer.forward(g, s, y)?;
                }
                g.mean_time(y)
            }
        }
    }
}

fn run_lstm(
    g: &mut Graph,
    s: &ParamStore,
    cell: &LstmCell,
    x: NodeId,
    n: usize,
    b: usize,
) -> Result<(NodeId, NodeId)> {
    let mut h = g.input(Tensor::zeros(&[b, cell.hidden]));
    let mut c = g.input(Tensor::zeros(&[b, cell.hidden]));
    for t in 0..n {
        let xt = g.select_time(x, t)?;
        (h, c) = cell.step(g, s, xt, h, c)?;
    }
    Ok((h, c))
}

/// Full network for one architecture.
#[derive(Debug, Clone)]
pub(crate) struct Net {
    pub fusion: Option<FusionBranch>,
    pub qar: Option<QarBranch>,
    pub head: Mlp,
}

impl Net {
    pub fn new<R: Rng>(store: &mut ParamStore, cfg: &ModelConfig, rng: &mut R) -> Self {
        let arch = cfg.architecture;
        let fusion = arch.uses_fusion().then(|| FusionBranch::new(store, cfg, rng));
        let qar = arch
            .uses_qar()
            .then(|| QarBranch::new(store, &cfg.qar, cfg.k, rng));
        let head_in = fusion.as_ref().map_or(0, FusionBranch::output_dim)
            + if qar.is_some() { cfg.qar.q } else { 0 };
        let head = Mlp::new(store, "head", &[head_in, cfg.head_units, cfg.k], false, rng);
        Self { fusion, qar, head }
    }

    /// Forecast node `[b, k]`.
    pub fn forward(&self, g: &mut Graph, s: &ParamStore, batch: &Batch) -> Result<NodeId> {
        let fusion = self.fusion.as_ref().map(|f| f.forward(g, s, batch)).transpose()?;
        let qar = self.qar.as_ref().map(|q| q.forward(g, s, batch)).transpose()?;
        let parts: Vec<NodeId> = fusion.iter().chain(qar.iter()).copied().collect();
        let x = if parts.len() == 1 { parts[0] } else { g.concat(&parts)? };
        self.head.forward(g, s, x)
    }
}
