//! FusionMLP, the six quasi-autoregressive (QAR) trend encoders and their
//! MuQAR combination.
//!
//! The feature branch embeds what is known about a new garment: visual
//! features, category and attributes, target date and optionally a
//! demographic stratum. The trend branch encodes the recent weekly
//! popularity of the garment's labels. A small head maps the concatenated
//! representations to `k` future popularity values.

mod config;
mod dataset;
mod descriptor;
mod io;
mod net;
mod train;

pub use config::{
    Architecture, FusionConfig, Hemisphere, ModelConfig, QarConfig, QarKind, TrainConfig,
};
pub use dataset::{build_examples, category_prototypes, DatasetReport, Example};
pub use descriptor::{GarmentDescriptor, TemporalIndex};
pub use io::{read_header, ManifestEntry, ModelHeader, MAGIC};
pub use train::{train_model, EpochStats, TrainReport};

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::taxonomy::Taxonomy;
use crate::tensor::{Graph, ParamStore, Tensor, TensorError};
use crate::trend::{AttributeWindow, Normalization, TrendError};
use net::{Batch, Net};

#[derive(Debug, Error)]
pub enum ForecastError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("{what}: expected dimension {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid input: {0}")]
    Input(String),
    #[error("label index {0} outside the model vocabulary")]
    UnknownLabel(usize),
    #[error("model was trained with demographics; request has none")]
    MissingDemographic,
    #[error("model needs a trend window")]
    MissingTrend,
    #[error("empty dataset")]
    EmptyDataset,
    #[error("training diverged in epoch {epoch}; checkpoint from epoch {stable_epoch} retained")]
    Diverged {
        epoch: usize,
        stable_epoch: usize,
        checkpoint: Box<ForecastModel>,
    },
    #[error("taxonomy hash mismatch: model {model}, expected {expected}")]
    TaxonomyMismatch { model: String, expected: String },
    #[error("corrupt model file: {0}")]
    Corrupt(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Trend(#[from] TrendError),
}

pub type Result<T> = std::result::Result<T, ForecastError>;

/// Everything persisted next to the weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub version: String,
    pub seed: u64,
    pub taxonomy_hash: String,
    pub normalization: Normalization,
    /// Mean training feature vector per category index.
    pub prototypes: BTreeMap<usize, Vec<f64>>,
}

/// A parameter set plus its architecture. Immutable once trained; share
/// freely between threads for prediction.
#[derive(Debug, Clone)]
pub struct ForecastModel {
    config: ModelConfig,
    meta: ModelMeta,
    store: ParamStore,
    net: Net,
}

impl ForecastModel {
    /// Fresh model with seeded initial weights (rounded to f32).
    pub fn new(config: ModelConfig, taxonomy: &Taxonomy, seed: u64) -> Result<Self> {
        if config.num_categories != taxonomy.num_categories()
            || config.num_attributes != taxonomy.num_attributes()
        {
            return Err(ForecastError::Config(format!(
                "config expects {} categories / {} attributes, taxonomy has {} / {}",
                config.num_categories,
                config.num_attributes,
                taxonomy.num_categories(),
                taxonomy.num_attributes()
            )));
        }
        let meta = ModelMeta {
            version: "untrained".into(),
            seed,
            taxonomy_hash: taxonomy.hash(),
            normalization: Normalization::Identity,
            prototypes: BTreeMap::new(),
        };
        Self::build(config, meta)
    }

    fn build(config: ModelConfig, meta: ModelMeta) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(meta.seed);
        let mut store = ParamStore::new();
        let net = Net::new(&mut store, &config, &mut rng);
        store.snap_to_f32();
        Ok(Self {
            config,
            meta,
            store,
            net,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn meta(&self) -> &ModelMeta {
        &self.meta
    }

    pub fn meta_mut(&mut self) -> &mut ModelMeta {
        &mut self.meta
    }

    pub fn version(&self) -> &str {
        &self.meta.version
    }

    pub fn set_version(&mut self, version: impl Into<String>) {
        self.meta.version = version.into();
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    /// Direct parameter access for surgery in tests and tools.
    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    /// Size of the feature branch output `F_F` (0 without the branch).
    pub fn fusion_dim(&self) -> usize {
        self.net.fusion.as_ref().map_or(0, |f| f.output_dim())
    }

    /// Size of the trend branch output `F_Q` (0 without the branch).
    pub fn qar_dim(&self) -> usize {
        if self.net.qar.is_some() {
            self.config.qar.q
        } else {
            0
        }
    }

    pub fn prototype(&self, category: usize) -> Option<&[f64]> {
        self.meta.prototypes.get(&category).map(Vec::as_slice)
    }

    /// `with_trend` is false when only the feature branch will run.
    fn batch(
        &self,
        items: &[(&GarmentDescriptor, Option<&AttributeWindow>)],
        with_trend: bool,
    ) -> Result<Batch> {
        if items.is_empty() {
            return Err(ForecastError::EmptyDataset);
        }
        let cfg = &self.config;
        let b = items.len();
        let (c, a) = (cfg.num_categories, cfg.num_attributes);
        let (n, amax) = (cfg.qar.n, cfg.qar.a_max);
        let mut features = Vec::with_capacity(b * cfg.feature_dim);
        let mut bags = Vec::with_capacity(b);
        let mut temporal: [Vec<usize>; 4] = Default::default();
        let mut gender = Vec::new();
        let mut age = Vec::new();
        let uses_qar = with_trend && cfg.architecture.uses_qar();
        let mut trend = Vec::with_capacity(if uses_qar { b * n * amax } else { 0 });
        let mut mask = Vec::with_capacity(if uses_qar { b * amax } else { 0 });
        for (d, w) in items {
            if cfg.architecture.uses_fusion() {
                d.validate(cfg.feature_dim)?;
                features.extend_from_slice(&d.features);
                if d.labels.category >= c {
                    return Err(ForecastError::UnknownLabel(d.labels.category));
                }
                let mut bag = vec![d.labels.category];
                for &j in &d.labels.attributes {
                    if j >= a {
                        return Err(ForecastError::UnknownLabel(c + j));
                    }
                    bag.push(c + j);
                }
                bags.push(bag);
                let t = TemporalIndex::from_date(d.target_date, cfg.hemisphere).indices();
                for (dst, v) in temporal.iter_mut().zip(t) {
                    dst.push(v);
                }
                if cfg.demographic {
                    let dem = d.demographic.ok_or(ForecastError::MissingDemographic)?;
                    gender.push(dem.gender.index());
                    age.push(dem.age_group.index());
                }
            }
            if uses_qar {
                let w = w.ok_or(ForecastError::MissingTrend)?;
                if w.n != n {
                    return Err(ForecastError::Dimension {
                        what: "trend window steps",
                        expected: n,
                        got: w.n,
                    });
                }
                if w.a_max != amax || w.mask.len() != amax || w.values.len() != n * amax {
                    return Err(ForecastError::Dimension {
                        what: "trend window width",
                        expected: amax,
                        got: w.a_max,
                    });
                }
                for t in 0..n {
                    for j in 0..amax {
                        trend.push(w.values[t * amax + j] * w.mask[j]);
                    }
                }
                mask.extend_from_slice(&w.mask);
            }
        }
        let fusion = cfg.architecture.uses_fusion();
        Ok(Batch {
            b,
            features: (fusion && cfg.feature_dim > 0)
                .then(|| Tensor::new(vec![b, cfg.feature_dim], features))
                .transpose()?,
            bags,
            temporal,
            demographic: (fusion && cfg.demographic).then_some((gender, age)),
            trend: uses_qar
                .then(|| Tensor::new(vec![b, n, amax], trend))
                .transpose()?,
            mask: uses_qar.then(|| Tensor::new(vec![b, amax], mask)).transpose()?,
        })
    }

    fn rows(t: &Tensor) -> Vec<Vec<f64>> {
        t.data().chunks(t.last_dim()).map(<[f64]>::to_vec).collect()
    }

    /// Raw head outputs (not clamped), one `k`-vector per item.
    pub fn predict_batch(
        &self,
        items: &[(&GarmentDescriptor, Option<&AttributeWindow>)],
    ) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::with_capacity(items.len());
        for chunk in items.chunks(256) {
            let batch = self.batch(chunk, true)?;
            let mut g = Graph::new();
            let o = self.net.forward(&mut g, &self.store, &batch)?;
            out.extend(Self::rows(g.value(o)));
        }
        Ok(out)
    }

    /// Forecast of `k` steps for one garment. `window` is required for
    /// architectures with a trend branch.
    pub fn predict(
        &self,
        descriptor: &GarmentDescriptor,
        window: Option<&AttributeWindow>,
    ) -> Result<Vec<f64>> {
        Ok(self.predict_batch(&[(descriptor, window)])?.remove(0))
    }

    pub fn predict_examples(&self, examples: &[Example]) -> Result<Vec<Vec<f64>>> {
        let items: Vec<_> = examples
            .iter()
            .map(|e| (&e.descriptor, Some(&e.window)))
            .collect();
        self.predict_batch(&items)
    }

    /// Feature-branch representation `F_F`.
    pub fn fusion_features(&self, descriptor: &GarmentDescriptor) -> Result<Vec<f64>> {
        if !self.config.architecture.uses_fusion() {
            return Err(ForecastError::Config("model has no feature branch".into()));
        }
        self.branch_output(descriptor, None, true)
    }

    /// Trend-branch representation `F_Q`.
    pub fn qar_features(
        &self,
        descriptor: &GarmentDescriptor,
        window: &AttributeWindow,
    ) -> Result<Vec<f64>> {
        if !self.config.architecture.uses_qar() {
            return Err(ForecastError::Config("model has no trend branch".into()));
        }
        self.branch_output(descriptor, Some(window), false)
    }

    fn branch_output(
        &self,
        d: &GarmentDescriptor,
        w: Option<&AttributeWindow>,
        fusion: bool,
    ) -> Result<Vec<f64>> {
        let batch = self.batch(&[(d, w)], !fusion)?;
        let mut g = Graph::new();
        let o = if fusion {
            let f = self.net.fusion.as_ref().expect("checked by caller");
            f.forward(&mut g, &self.store, &batch)?
        } else {
            let q = self.net.qar.as_ref().expect("checked by caller");
            q.forward(&mut g, &self.store, &batch)?
        };
        Ok(g.value(o).data().to_vec())
    }
}
