//! Finite-difference checks for every primitive and layer, on random shapes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::nn::{
    AdditiveAttention, ConvLstmCell, Dense, EncoderLayer, GruCell, LayerNorm, LstmCell,
    MultiHeadAttention,
};
use super::{gradient_check, GradCheckReport, Graph, NodeId, Padding, ParamStore, Result, Tensor};

pub const PRIMITIVES: &[&str] = &[
    "dense",
    "embedding",
    "embedding_bag",
    "conv1d_valid",
    "conv1d_same",
    "lstm",
    "gru",
    "convlstm",
    "attention",
    "additive_attention",
    "encoder_layer",
    "layer_norm",
    "l2_normalize",
    "softmax",
    "sigmoid",
    "tanh",
    "relu",
    "concat_slice",
    "mean_time",
    "mse",
    "mae",
    "bce",
    "cross_entropy",
];

#[derive(Debug, Clone)]
pub struct PrimitiveCheck {
    pub primitive: &'static str,
    pub shape: String,
    pub report: GradCheckReport,
}

type Builder = Box<dyn Fn(&mut Graph, &ParamStore) -> Result<NodeId>>;

fn dim(rng: &mut ChaCha8Rng, lo: usize, hi: usize) -> usize {
    rng.gen_range(lo..=hi)
}

/// Random linear functional of `y` so every output element matters.
fn project(g: &mut Graph, y: NodeId, proj: &Tensor) -> Result<NodeId> {
    let p = g.input(proj.clone());
    let m = g.mul(y, p)?;
    g.sum(m)
}

fn case(primitive: &'static str, rng: &mut ChaCha8Rng) -> (String, ParamStore, Builder) {
    let mut store = ParamStore::new();
    let b = dim(rng, 1, 3);
    // Values away from zero keep relu/abs kinks out of the FD stencil.
    let away = |rng: &mut ChaCha8Rng, shape: &[usize]| {
        let mut t = Tensor::uniform(shape, 1.0, rng);
        t.data_mut().iter_mut().for_each(|v| {
            if v.abs() < 0.05 {
                *v += 0.1f64.copysign(*v);
            }
        });
        t
    };
    match primitive {
        "dense" => {
            let (i, o) = (dim(rng, 1, 8), dim(rng, 1, 8));
            let x = store.add("x", Tensor::uniform(&[b, i], 1.0, rng));
            let layer = Dense::new(&mut store, "dense", i, o, rng);
            store.set(layer.bias, Tensor::uniform(&[o], 0.5, rng).into_data()).unwrap();
            let proj = Tensor::uniform(&[b, o], 1.0, rng);
            (
                format!("[{b},{i}]->[{b},{o}]"),
                store,
                Box::new(move |g, s| {
                    let xn = g.param(s, x);
                    let y = layer.forward(g, s, xn)?;
                    project(g, y, &proj)
                }),
            )
        }
        "embedding" | "embedding_bag" => {
            let (v, d) = (dim(rng, 2, 10), dim(rng, 1, 8));
            let t = store.add("table", Tensor::uniform(&[v, d], 1.0, rng));
            let bags: Vec<Vec<usize>> = (0..b)
                .map(|_| (0..dim(rng, 1, 4)).map(|_| rng.gen_range(0..v)).collect())
                .collect();
            let proj = Tensor::uniform(&[b, d], 1.0, rng);
            let bag_mode = primitive == "embedding_bag";
            let flat: Vec<usize> = bags.iter().map(|bg| bg[0]).collect();
            (
                format!("vocab {v} dim {d} batch {b}"),
                store,
                Box::new(move |g, s| {
                    let tn = g.param(s, t);
                    let y = if bag_mode {
                        g.embedding_bag(tn, &bags)?
                    } else {
                        g.embedding(tn, &flat)?
                    };
                    project(g, y, &proj)
                }),
            )
        }
        "conv1d_valid" | "conv1d_same" => {
            let padding = if primitive == "conv1d_same" {
                Padding::Same
            } else {
                Padding::Valid
            };
            let k = dim(rng, 1, 4);
            let l = dim(rng, k, 10);
            let (cin, cout) = (dim(rng, 1, 4), dim(rng, 1, 4));
            let x = store.add("x", Tensor::uniform(&[b, l, cin], 1.0, rng));
            let w = store.add("w", Tensor::uniform(&[k, cin, cout], 1.0, rng));
            let lout = if padding == Padding::Same { l } else { l - k + 1 };
            let proj = Tensor::uniform(&[b, lout, cout], 1.0, rng);
            (
                format!("x[{b},{l},{cin}] k[{k},{cin},{cout}]"),
                store,
                Box::new(move |g, s| {
                    let (xn, wn) = (g.param(s, x), g.param(s, w));
                    let y = g.conv1d(xn, wn, padding)?;
                    project(g, y, &proj)
                }),
            )
        }
        "lstm" | "gru" => {
            let (i, h, steps) = (dim(rng, 1, 5), dim(rng, 1, 5), dim(rng, 1, 4));
            let x = store.add("x", Tensor::uniform(&[b, steps, i], 1.0, rng));
            let h0 = store.add("h0", Tensor::uniform(&[b, h], 0.5, rng));
            let proj = Tensor::uniform(&[b, h], 1.0, rng);
            let desc = format!("in {i} hidden {h} steps {steps} batch {b}");
            if primitive == "lstm" {
                let cell = LstmCell::new(&mut store, "lstm", i, h, rng);
                let c0 = store.add("c0", Tensor::uniform(&[b, h], 0.5, rng));
                (
                    desc,
                    store,
                    Box::new(move |g, s| {
                        let xs = g.param(s, x);
                        let (mut hn, mut cn) = (g.param(s, h0), g.param(s, c0));
                        for t in 0..steps {
                            let xt = g.select_time(xs, t)?;
                            (hn, cn) = cell.step(g, s, xt, hn, cn)?;
                        }
                        let out = g.add(hn, cn)?;
                        project(g, out, &proj)
                    }),
                )
            } else {
                let cell = GruCell::new(&mut store, "gru", i, h, rng);
                (
                    desc,
                    store,
                    Box::new(move |g, s| {
                        let xs = g.param(s, x);
                        let mut hn = g.param(s, h0);
                        for t in 0..steps {
                            let xt = g.select_time(xs, t)?;
                            hn = cell.step(g, s, xt, hn)?;
                        }
                        project(g, hn, &proj)
                    }),
                )
            }
        }
        "convlstm" => {
            let (sp, cin, h, k, steps) = (
                dim(rng, 2, 6),
                dim(rng, 1, 3),
                dim(rng, 1, 3),
                dim(rng, 1, 3),
                dim(rng, 1, 3),
            );
            let x = store.add("x", Tensor::uniform(&[steps, b, sp, cin], 1.0, rng));
            let cell = ConvLstmCell::new(&mut store, "convlstm", cin, h, k, rng);
            store.set(cell.bias, Tensor::uniform(&[4 * h], 0.5, rng).into_data()).unwrap();
            let proj = Tensor::uniform(&[b, sp, h], 1.0, rng);
            (
                format!("spatial {sp} in {cin} hidden {h} kernel {k} steps {steps}"),
                store,
                Box::new(move |g, s| {
                    let xs = g.param(s, x);
                    let flat = g.reshape(xs, &[steps, b * sp * cin])?;
                    let flat = g.reshape(flat, &[1, steps, b * sp * cin])?;
                    let mut hn = g.input(Tensor::zeros(&[b, sp, h]));
                    let mut cn = g.input(Tensor::zeros(&[b, sp, h]));
                    for t in 0..steps {
                        let xt = g.select_time(flat, t)?;
                        let xt = g.reshape(xt, &[b, sp, cin])?;
                        (hn, cn) = cell.step(g, s, xt, hn, cn)?;
                    }
                    project(g, hn, &proj)
                }),
            )
        }
        "attention" | "encoder_layer" => {
            let heads = dim(rng, 1, 2);
            let d = heads * dim(rng, 1, 3);
            let t = dim(rng, 1, 4);
            let x = store.add("x", Tensor::uniform(&[b, t, d], 1.0, rng));
            let proj = Tensor::uniform(&[b, t, d], 1.0, rng);
            let desc = format!("batch {b} steps {t} dim {d} heads {heads}");
            if primitive == "attention" {
                let mha = MultiHeadAttention::new(&mut store, "mha", d, heads, rng);
                (
                    desc,
                    store,
                    Box::new(move |g, s| {
                        let xn = g.param(s, x);
                        let y = mha.forward(g, s, xn)?;
                        project(g, y, &proj)
                    }),
                )
            } else {
                let ff = dim(rng, 1, 6);
                let enc = EncoderLayer::new(&mut store, "enc", d, heads, ff, rng);
                (
                    desc,
                    store,
                    Box::new(move |g, s| {
                        let xn = g.param(s, x);
                        let y = enc.forward(g, s, xn)?;
                        project(g, y, &proj)
                    }),
                )
            }
        }
        "additive_attention" => {
            let (r, f, q, a) = (dim(rng, 1, 5), dim(rng, 1, 5), dim(rng, 1, 5), dim(rng, 1, 5));
            let items = store.add("items", Tensor::uniform(&[b, r, f], 1.0, rng));
            let query = store.add("query", Tensor::uniform(&[b, q], 1.0, rng));
            let att = AdditiveAttention::new(&mut store, "att", f, q, a, rng);
            let proj = Tensor::uniform(&[b, f], 1.0, rng);
            let proj_w = Tensor::uniform(&[b, r], 1.0, rng);
            (
                format!("regions {r} feat {f} query {q} attn {a}"),
                store,
                Box::new(move |g, s| {
                    let (it, qn) = (g.param(s, items), g.param(s, query));
                    let (ctx, w) = att.forward(g, s, it, qn)?;
                    let l1 = project(g, ctx, &proj)?;
                    let l2 = project(g, w, &proj_w)?;
                    g.add(l1, l2)
                }),
            )
        }
        "layer_norm" => {
            let n = dim(rng, 2, 8);
            let x = store.add("x", Tensor::uniform(&[b, n], 1.0, rng));
            let ln = LayerNorm::new(&mut store, "ln", n);
            store.set(ln.gamma, Tensor::uniform(&[n], 1.0, rng).into_data()).unwrap();
            let proj = Tensor::uniform(&[b, n], 1.0, rng);
            (
                format!("[{b},{n}]"),
                store,
                Box::new(move |g, s| {
                    let xn = g.param(s, x);
                    let y = ln.forward(g, s, xn)?;
                    project(g, y, &proj)
                }),
            )
        }
        "l2_normalize" | "softmax" | "sigmoid" | "tanh" | "relu" | "mean_time" => {
            let (t, n) = (dim(rng, 1, 4), dim(rng, 1, 8));
            let x = store.add("x", away(rng, &[b, t, n]));
            let out_shape = if primitive == "mean_time" {
                vec![b, n]
            } else {
                vec![b, t, n]
            };
            let proj = Tensor::uniform(&out_shape, 1.0, rng);
            (
                format!("[{b},{t},{n}]"),
                store,
                Box::new(move |g, s| {
                    let xn = g.param(s, x);
                    let y = match primitive {
                        "l2_normalize" => g.l2_normalize(xn)?,
                        "softmax" => g.softmax(xn)?,
                        "sigmoid" => g.sigmoid(xn)?,
                        "tanh" => g.tanh(xn)?,
                        "relu" => g.relu(xn)?,
                        _ => g.mean_time(xn)?,
                    };
                    project(g, y, &proj)
                }),
            )
        }
        "concat_slice" => {
            let (n1, n2) = (dim(rng, 1, 5), dim(rng, 1, 5));
            let a = store.add("a", Tensor::uniform(&[b, n1], 1.0, rng));
            let c = store.add("c", Tensor::uniform(&[b, n2], 1.0, rng));
            let end = n1 + n2;
            let start = rng.gen_range(0..end);
            let proj = Tensor::uniform(&[b, end - start], 1.0, rng);
            let proj2 = Tensor::uniform(&[b, end], 1.0, rng);
            (
                format!("[{b},{n1}]+[{b},{n2}] slice {start}..{end}"),
                store,
                Box::new(move |g, s| {
                    let (an, cn) = (g.param(s, a), g.param(s, c));
                    let cat = g.concat(&[an, cn])?;
                    let sl = g.slice_last(cat, start, end)?;
                    let sq = g.mul(sl, sl)?;
                    let l1 = project(g, sq, &proj)?;
                    let l2 = project(g, cat, &proj2)?;
                    g.add(l1, l2)
                }),
            )
        }
        "mse" | "mae" | "bce" => {
            let n = dim(rng, 1, 8);
            let p = store.add("pred", away(rng, &[b, n]));
            let target = if primitive == "bce" {
                Tensor::uniform(&[b, n], 0.5, rng)
            } else {
                Tensor::zeros(&[b, n])
            };
            let mut target = target;
            if primitive == "bce" {
                target.data_mut().iter_mut().for_each(|v| *v += 0.5);
            }
            (
                format!("[{b},{n}]"),
                store,
                Box::new(move |g, s| {
                    let pn = g.param(s, p);
                    let tn = g.input(target.clone());
                    match primitive {
                        "mse" => g.mse(pn, tn),
                        "mae" => g.mae(pn, tn),
                        _ => g.bce_with_logits(pn, tn),
                    }
                }),
            )
        }
        "cross_entropy" => {
            let c = dim(rng, 2, 8);
            let z = store.add("logits", Tensor::uniform(&[b, c], 2.0, rng));
            let targets: Vec<usize> = (0..b).map(|_| rng.gen_range(0..c)).collect();
            (
                format!("[{b},{c}]"),
                store,
                Box::new(move |g, s| {
                    let zn = g.param(s, z);
                    g.cross_entropy(zn, &targets)
                }),
            )
        }
        other => panic!("unknown primitive {other}"),
    }
}

/// Run `shapes` random-shape finite-difference checks for every primitive.
pub fn primitive_gradient_suite(seed: u64, shapes: usize, tolerance: f64) -> Vec<PrimitiveCheck> {
    let mut out = Vec::new();
    for (pi, &primitive) in PRIMITIVES.iter().enumerate() {
        for s in 0..shapes {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((pi as u64) << 32) ^ s as u64);
            let (shape, store, build) = case(primitive, &mut rng);
            let report = gradient_check(&store, build, tolerance);
            out.push(PrimitiveCheck {
                primitive,
                shape,
                report,
            });
        }
    }
    out
}
