//! Hierarchical label sharing (HLS) classifiers over precomputed features.
//!
//! Two stages: category classification (CC) followed by attribute
//! classification (AC). With HLS enabled each stage also sees an embedding of
//! the previous stage's label: the garment type for CC and the category for
//! AC. Embeddings are concatenated at the classifier input.
//!
//! * STL: two independent networks. CC sees `[features, emb(type)]`, AC sees
//!   `[features, emb(type), emb(category)]`.
//! * MTL: one shared encoder. Additive attention pools a set of region
//!   vectors, a GRU steps twice: `H1` feeds the CC head, then attention is
//!   recomputed with `H1` as query and `H2` feeds the AC head.
//!
//! Training uses teacher forcing (ground-truth category into AC); inference
//! feeds the argmax category.

mod metrics;

pub use metrics::{rank_desc, recall_at_k, top_k, topk_accuracy};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::taxonomy::{LabelSet, Taxonomy};
use crate::tensor::nn::{AdditiveAttention, Dense, Embedding, GruCell, Mlp};
use crate::tensor::{Adam, AdamConfig, Graph, NodeId, ParamStore, Tensor, TensorError};

#[derive(Debug, Error)]
pub enum HlsError {
    #[error("{0}")]
    Invalid(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

pub type Result<T> = std::result::Result<T, HlsError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HlsMode {
    Stl,
    Mtl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HlsConfig {
    pub mode: HlsMode,
    pub feature_dim: usize,
    /// Share previous-stage labels as embeddings.
    pub use_hls: bool,
    pub label_dim: usize,
    /// Hidden units of the STL heads.
    pub hidden: usize,
    /// MTL GRU state size.
    pub gru_hidden: usize,
    /// MTL additive attention width.
    pub attn_dim: usize,
    /// MTL loss weights for (CC, AC).
    pub loss_weights: (f64, f64),
}

impl HlsConfig {
    pub fn new(mode: HlsMode, feature_dim: usize, use_hls: bool) -> Self {
        Self {
            mode,
            feature_dim,
            use_hls,
            label_dim: 8,
            hidden: 64,
            gru_hidden: 64,
            attn_dim: 32,
            loss_weights: (1.0, 1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HlsTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for HlsTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 32,
            learning_rate: 3e-3,
            seed: 0,
        }
    }
}

/// One training example. STL expects exactly one row in `input` (the
/// feature vector); MTL treats the rows as region vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HlsSample {
    pub input: Vec<Vec<f64>>,
    pub labels: LabelSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HlsPrediction {
    /// Softmax over all categories.
    pub category_probs: Vec<f64>,
    /// Independent sigmoid per attribute.
    pub attribute_probs: Vec<f64>,
    /// MTL only: attention weights of the two steps.
    pub attention: Option<(Vec<f64>, Vec<f64>)>,
}

impl HlsPrediction {
    pub fn category_argmax(&self) -> usize {
        rank_desc(&self.category_probs)[0]
    }
}

#[derive(Debug, Clone)]
struct StlNets {
    cc_type: Option<Embedding>,
    cc: Mlp,
    ac_type: Option<Embedding>,
    ac_category: Option<Embedding>,
    ac: Mlp,
}

#[derive(Debug, Clone)]
struct MtlNets {
    type_emb: Option<Embedding>,
    category_emb: Option<Embedding>,
    attention: AdditiveAttention,
    gru: GruCell,
    cc: Dense,
    ac: Dense,
}

#[derive(Debug, Clone)]
enum Nets {
    Stl(StlNets),
    Mtl(MtlNets),
}

#[derive(Debug, Clone)]
pub struct HlsClassifier {
    config: HlsConfig,
    num_types: usize,
    num_categories: usize,
    num_attributes: usize,
    store: ParamStore,
    nets: Nets,
}

/// Batch-level outputs: logits for both heads.
struct Forward {
    cc_logits: NodeId,
    ac_logits: NodeId,
    attention: Option<(NodeId, NodeId)>,
}

impl HlsClassifier {
    pub fn new(config: HlsConfig, taxonomy: &Taxonomy, seed: u64) -> Result<Self> {
        if config.feature_dim == 0 || config.label_dim == 0 {
            return Err(HlsError::Invalid("dimensions must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let (t, c, a) = (
            taxonomy.num_types(),
            taxonomy.num_categories(),
            taxonomy.num_attributes(),
        );
        let (f, d) = (config.feature_dim, config.label_dim);
        let hls = config.use_hls;
        let nets = match config.mode {
            HlsMode::Stl => {
                let cc_type = hls.then(|| Embedding::new(&mut store, "cc.type", t, d, &mut rng));
                let cc_in = f + if hls { d } else { 0 };
                let cc = Mlp::new(&mut store, "cc.mlp", &[cc_in, config.hidden, c], false, &mut rng);
                let ac_type = hls.then(|| Embedding::new(&mut store, "ac.type", t, d, &mut rng));
                let ac_category =
                    hls.then(|| Embedding::new(&mut store, "ac.category", c, d, &mut rng));
                let ac_in = f + if hls { 2 * d } else { 0 };
                let ac = Mlp::new(&mut store, "ac.mlp", &[ac_in, config.hidden, a], false, &mut rng);
                Nets::Stl(StlNets {
                    cc_type,
                    cc,
                    ac_type,
                    ac_category,
                    ac,
                })
            }
            HlsMode::Mtl => {
                let h = config.gru_hidden;
                let type_emb = hls.then(|| Embedding::new(&mut store, "type", t, d, &mut rng));
                let category_emb =
                    hls.then(|| Embedding::new(&mut store, "category", c, d, &mut rng));
                let attention =
                    AdditiveAttention::new(&mut store, "attn", f, h, config.attn_dim, &mut rng);
                let gru_in = f + if hls { d } else { 0 };
                let gru = GruCell::new(&mut store, "gru", gru_in, h, &mut rng);
                let cc = Dense::new(&mut store, "cc", h, c, &mut rng);
                let ac = Dense::new(&mut store, "ac", h, a, &mut rng);
                Nets::Mtl(MtlNets {
                    type_emb,
                    category_emb,
                    attention,
                    gru,
                    cc,
                    ac,
                })
            }
        };
        Ok(Self {
            config,
            num_types: t,
            num_categories: c,
            num_attributes: a,
            store,
            nets,
        })
    }

    pub fn config(&self) -> &HlsConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    /// Number of independent parameter groups: 2 for STL, 1 for MTL.
    pub fn num_networks(&self) -> usize {
        match self.nets {
            Nets::Stl(_) => 2,
            Nets::Mtl(_) => 1,
        }
    }

    /// Zero every classifier weight and bias (embeddings untouched).
    pub fn zero_classifier_weights(&mut self) {
        self.store.zero_where(|n| {
            n.starts_with("cc.mlp.") || n.starts_with("ac.mlp.") || ["cc.w", "cc.b", "ac.w", "ac.b"].contains(&n)
        });
    }

    fn check_input(&self, input: &[Vec<f64>], garment_type: usize) -> Result<()> {
        if garment_type >= self.num_types {
            return Err(HlsError::Invalid(format!(
                "garment type {garment_type} outside {} types",
                self.num_types
            )));
        }
        if input.is_empty() {
            return Err(HlsError::Invalid("empty region sequence".into()));
        }
        if self.config.mode == HlsMode::Stl && input.len() != 1 {
            return Err(HlsError::Invalid(format!(
                "STL expects one feature vector, got {}",
                input.len()
            )));
        }
        if let Some(row) = input.iter().find(|r| r.len() != self.config.feature_dim) {
            return Err(HlsError::Dimension {
                expected: self.config.feature_dim,
                got: row.len(),
            });
        }
        Ok(())
    }

    /// Build both heads for a batch. `categories` fixes the category shared
    /// with AC; `None` uses the argmax of the CC head.
    fn forward(
        &self,
        g: &mut Graph,
        inputs: &[&[Vec<f64>]],
        types: &[usize],
        categories: Option<&[usize]>,
    ) -> Result<Forward> {
        let b = inputs.len();
        let f = self.config.feature_dim;
        let s = &self.store;
        let argmax = |g: &Graph, logits: NodeId| -> Vec<usize> {
            g.value(logits)
                .data()
                .chunks(self.num_categories)
                .map(|row| rank_desc(row)[0])
                .collect()
        };
        match &self.nets {
            Nets::Stl(n) => {
                let x: Vec<f64> = inputs.iter().flat_map(|i| i[0].iter().copied()).collect();
                let x = g.input(Tensor::new(vec![b, f], x)?);
                let mut cc_in = vec![x];
                if let Some(e) = &n.cc_type {
                    cc_in.push(e.lookup(g, s, types)?);
                }
                let cc_x = g.concat(&cc_in)?;
                let cc_logits = n.cc.forward(g, s, cc_x)?;
                let mut ac_in = vec![x];
                if let (Some(te), Some(ce)) = (&n.ac_type, &n.ac_category) {
                    let cats = match categories {
                        Some(c) => c.to_vec(),
                        None => argmax(g, cc_logits),
                    };
                    ac_in.push(te.lookup(g, s, types)?);
                    ac_in.push(ce.lookup(g, s, &cats)?);
                }
                let ac_x = g.concat(&ac_in)?;
                let ac_logits = n.ac.forward(g, s, ac_x)?;
                Ok(Forward {
                    cc_logits,
                    ac_logits,
                    attention: None,
                })
            }
            Nets::Mtl(n) => {
                let r = inputs[0].len();
                if inputs.iter().any(|i| i.len() != r) {
                    return Err(HlsError::Invalid(
                        "batched samples must share a region count".into(),
                    ));
                }
                let x: Vec<f64> = inputs
                    .iter()
                    .flat_map(|i| i.iter().flat_map(|row| row.iter().copied()))
                    .collect();
                let regions = g.input(Tensor::new(vec![b, r, f], x)?);
                let h0 = g.input(Tensor::zeros(&[b, self.config.gru_hidden]));
                let (ctx1, w1) = n.attention.forward(g, s, regions, h0)?;
                let mut in1 = vec![ctx1];
                if let Some(e) = &n.type_emb {
                    in1.push(e.lookup(g, s, types)?);
                }
                let in1 = g.concat(&in1)?;
                let h1 = n.gru.step(g, s, in1, h0)?;
                let cc_logits = n.cc.forward(g, s, h1)?;
                let (ctx2, w2) = n.attention.forward(g, s, regions, h1)?;
                let mut in2 = vec![ctx2];
                if let Some(e) = &n.category_emb {
                    let cats = match categories {
                        Some(c) => c.to_vec(),
                        None => argmax(g, cc_logits),
                    };
                    in2.push(e.lookup(g, s, &cats)?);
                }
                let in2 = g.concat(&in2)?;
                let h2 = n.gru.step(g, s, in2, h1)?;
                let ac_logits = n.ac.forward(g, s, h2)?;
                Ok(Forward {
                    cc_logits,
                    ac_logits,
                    attention: Some((w1, w2)),
                })
            }
        }
    }

    fn predict_inner(
        &self,
        inputs: &[&[Vec<f64>]],
        types: &[usize],
        categories: Option<&[usize]>,
    ) -> Result<Vec<HlsPrediction>> {
        for (i, &t) in inputs.iter().zip(types) {
            self.check_input(i, t)?;
        }
        let mut g = Graph::new();
        let out = self.forward(&mut g, inputs, types, categories)?;
        let cp = g.softmax(out.cc_logits)?;
        let ap = g.sigmoid(out.ac_logits)?;
        let (c, a) = (self.num_categories, self.num_attributes);
        let attn = out.attention.map(|(w1, w2)| {
            let r = g.shape(w1)[1];
            (
                g.value(w1).data().chunks(r).map(<[f64]>::to_vec).collect::<Vec<_>>(),
                g.value(w2).data().chunks(r).map(<[f64]>::to_vec).collect::<Vec<_>>(),
            )
        });
        Ok((0..inputs.len())
            .map(|i| HlsPrediction {
                category_probs: g.value(cp).data()[i * c..(i + 1) * c].to_vec(),
                attribute_probs: g.value(ap).data()[i * a..(i + 1) * a].to_vec(),
                attention: attn.as_ref().map(|(w1, w2)| (w1[i].clone(), w2[i].clone())),
            })
            .collect())
    }

    /// STL prediction for one feature vector.
    pub fn stl_predict(&self, features: &[f64], garment_type: usize) -> Result<HlsPrediction> {
        if self.config.mode != HlsMode::Stl {
            return Err(HlsError::Invalid("model is not STL".into()));
        }
        let input = vec![features.to_vec()];
        Ok(self.predict_inner(&[&input], &[garment_type], None)?.remove(0))
    }

    /// MTL prediction for a set of region vectors.
    pub fn mtl_predict(&self, regions: &[Vec<f64>], garment_type: usize) -> Result<HlsPrediction> {
        if self.config.mode != HlsMode::Mtl {
            return Err(HlsError::Invalid("model is not MTL".into()));
        }
        Ok(self.predict_inner(&[regions], &[garment_type], None)?.remove(0))
    }

    /// Either mode; the category fed to AC is fixed by the caller instead of
    /// the CC argmax.
    pub fn predict_with_category(
        &self,
        input: &[Vec<f64>],
        garment_type: usize,
        category: usize,
    ) -> Result<HlsPrediction> {
        if category >= self.num_categories {
            return Err(HlsError::Invalid(format!("category {category} out of range")));
        }
        Ok(self
            .predict_inner(&[input], &[garment_type], Some(&[category]))?
            .remove(0))
    }

    pub fn predict_batch(&self, samples: &[HlsSample]) -> Result<Vec<HlsPrediction>> {
        let mut out = Vec::with_capacity(samples.len());
        for chunk in samples.chunks(256) {
            let inputs: Vec<&[Vec<f64>]> = chunk.iter().map(|s| s.input.as_slice()).collect();
            let types: Vec<usize> = chunk.iter().map(|s| s.labels.garment_type).collect();
            out.extend(self.predict_inner(&inputs, &types, None)?);
        }
        Ok(out)
    }

    /// Teacher-forced loss on a batch.
    fn loss(&self, g: &mut Graph, batch: &[&HlsSample]) -> Result<NodeId> {
        let inputs: Vec<&[Vec<f64>]> = batch.iter().map(|s| s.input.as_slice()).collect();
        let types: Vec<usize> = batch.iter().map(|s| s.labels.garment_type).collect();
        let cats: Vec<usize> = batch.iter().map(|s| s.labels.category).collect();
        let out = self.forward(g, &inputs, &types, Some(&cats))?;
        let a = self.num_attributes;
        let mut target = vec![0.0; batch.len() * a];
        for (i, s) in batch.iter().enumerate() {
            for &j in &s.labels.attributes {
                target[i * a + j] = 1.0;
            }
        }
        let target = g.input(Tensor::new(vec![batch.len(), a], target)?);
        let ce = g.cross_entropy(out.cc_logits, &cats)?;
        let bce = g.bce_with_logits(out.ac_logits, target)?;
        let (wc, wa) = match self.config.mode {
            HlsMode::Stl => (1.0, 1.0),
            HlsMode::Mtl => self.config.loss_weights,
        };
        let ce = g.scale(ce, wc)?;
        let bce = g.scale(bce, wa)?;
        Ok(g.add(ce, bce)?)
    }

    /// Adam on the summed CC + AC loss. For STL the two networks share no
    /// parameters, so this is equivalent to training them separately.
    /// Returns the mean training loss per epoch.
    pub fn train(&mut self, samples: &[HlsSample], schedule: &HlsTrainConfig) -> Result<Vec<f64>> {
        if samples.is_empty() {
            return Err(HlsError::Invalid("empty training set".into()));
        }
        for s in samples {
            self.check_input(&s.input, s.labels.garment_type)?;
            if s.labels.category >= self.num_categories
                || s.labels.attributes.iter().any(|&a| a >= self.num_attributes)
            {
                return Err(HlsError::Invalid("label index out of range".into()));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(schedule.seed);
        let mut adam = Adam::new(
            AdamConfig {
                learning_rate: schedule.learning_rate,
                ..AdamConfig::default()
            },
            &self.store,
        );
        let mut order: Vec<usize> = (0..samples.len()).collect();
        let mut curve = Vec::with_capacity(schedule.epochs);
        for _ in 0..schedule.epochs {
            order.shuffle(&mut rng);
            let mut total = 0.0;
            for chunk in order.chunks(schedule.batch_size.max(1)) {
                let batch: Vec<&HlsSample> = chunk.iter().map(|&i| &samples[i]).collect();
                let mut g = Graph::new();
                let loss = self.loss(&mut g, &batch)?;
                total += g.value(loss).data()[0] * batch.len() as f64;
                g.backward(loss)?;
                self.store.zero_grad();
                g.write_param_grads(&mut self.store);
                adam.step(&mut self.store)?;
            }
            curve.push(total / samples.len() as f64);
        }
        Ok(curve)
    }
}

/// Decode a prediction into a legal label set for `garment_type`: the
/// best-scoring category under that type, and every attribute legal for the
/// type whose probability reaches `threshold`.
pub fn decode_label_set(
    taxonomy: &Taxonomy,
    prediction: &HlsPrediction,
    garment_type: usize,
    threshold: f64,
) -> Result<LabelSet> {
    let cats = taxonomy.categories_of_type(garment_type);
    let category = rank_desc(&prediction.category_probs)
        .into_iter()
        .find(|c| cats.contains(c))
        .ok_or_else(|| HlsError::Invalid(format!("garment type {garment_type} has no category")))?;
    let attributes = prediction
        .attribute_probs
        .iter()
        .enumerate()
        .filter(|&(a, &p)| p >= threshold && taxonomy.is_legal(a, garment_type))
        .map(|(a, _)| a);
    Ok(LabelSet::new(garment_type, category, attributes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taxonomy::{AttributeSpec, CategorySpec, TaxonomySpec};

    fn taxonomy() -> Taxonomy {
        let types = ["a", "b"];
        Taxonomy::new(TaxonomySpec {
            garment_types: types.iter().map(|s| s.to_string()).collect(),
            categories: (0..4)
                .map(|i| CategorySpec {
                    name: format!("c{i}"),
                    parent: types[i % 2].into(),
                })
                .collect(),
            attributes: (0..6)
                .map(|i| AttributeSpec {
                    name: format!("x{i}"),
                    legal_types: vec![types[i % 2].into()],
                })
                .collect(),
        })
        .unwrap()
    }

    #[test]
    fn zero_weights_give_uniform_and_half() {
        let t = taxonomy();
        for mode in [HlsMode::Stl, HlsMode::Mtl] {
            let mut m = HlsClassifier::new(HlsConfig::new(mode, 5, true), &t, 1).unwrap();
            m.zero_classifier_weights();
            let input = vec![vec![0.3; 5]];
            let p = m.predict_with_category(&input, 0, 0).unwrap();
            for v in &p.category_probs {
                assert!((v - 0.25).abs() < 1e-12, "{mode:?} {p:?}");
            }
            for v in &p.attribute_probs {
                assert!((v - 0.5).abs() < 1e-12, "{mode:?} {p:?}");
            }
        }
    }

    #[test]
    fn single_region_attention_is_one() {
        let t = taxonomy();
        let m = HlsClassifier::new(HlsConfig::new(HlsMode::Mtl, 4, true), &t, 7).unwrap();
        let p = m.mtl_predict(&[vec![0.1, -0.2, 0.3, 0.9]], 1).unwrap();
        let (w1, w2) = p.attention.unwrap();
        assert_eq!((w1, w2), (vec![1.0], vec![1.0]));
        assert!(m.mtl_predict(&[], 0).is_err());
    }

    #[test]
    fn stl_has_two_networks_and_checks_dims() {
        let t = taxonomy();
        let m = HlsClassifier::new(HlsConfig::new(HlsMode::Stl, 3, true), &t, 0).unwrap();
        assert_eq!(m.num_networks(), 2);
        assert!(matches!(
            m.stl_predict(&[0.0; 4], 0),
            Err(HlsError::Dimension { expected: 3, got: 4 })
        ));
        let p = m.stl_predict(&[0.1, 0.2, 0.3], 0).unwrap();
        assert_eq!(p.category_probs.len(), 4);
        assert_eq!(p.attribute_probs.len(), 6);
        assert!((p.category_probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn decoded_label_set_is_legal() {
        let t = taxonomy();
        let p = HlsPrediction {
            category_probs: vec![0.1, 0.6, 0.2, 0.1],
            attribute_probs: vec![0.9; 6],
            attention: None,
        };
        // best overall is c1 (type b); for type a the best legal is c2
        let ls = decode_label_set(&t, &p, 0, 0.5).unwrap();
        assert_eq!(ls.category, 2);
        assert!(t.check_label_set(&ls).is_ok());
    }
}
