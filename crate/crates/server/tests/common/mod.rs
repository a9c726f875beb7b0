//! Shared service fixture: a synthetic trend store, a registry with a few
//! small models, and request helpers.
#![allow(dead_code)]

use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tempfile::TempDir;
use tower::ServiceExt;

use muqar_core::experiment::{synthetic_dataset, ExampleShape};
use muqar_core::forecast::{
    category_prototypes, train_model, Architecture, ForecastModel, ModelConfig, QarConfig, QarKind,
    TrainConfig,
};
use muqar_core::synth::{generate_world, World, WorldSpec};
use muqar_core::taxonomy::{Taxonomy, TaxonomySpec};
use muqar_core::trend::{Normalization, TrendStore};
use muqar_server::{router, AppState, Registry};

pub const K: usize = 3;
pub const N: usize = 8;
pub const A_MAX: usize = 4;
pub const SEED: u64 = 11;

pub struct Fixture {
    pub dir: TempDir,
    pub world: World,
    pub store: TrendStore,
    pub state: Arc<AppState>,
    /// Versions in the registry, with their in-memory copies.
    pub models: Vec<(String, ForecastModel)>,
}

pub fn small_config(tax: &Taxonomy, feature_dim: usize, kind: QarKind) -> ModelConfig {
    let mut c = ModelConfig::new(
        Architecture::MuQar,
        feature_dim,
        tax.num_categories(),
        tax.num_attributes(),
    );
    c.k = K;
    c.head_units = 16;
    c.fusion.u_mlp = 16;
    c.qar = QarConfig::new(kind);
    c.qar.n = N;
    c.qar.a_max = A_MAX;
    c.qar.q = 8;
    c.qar.hidden = 8;
    c.qar.ff_dim = 16;
    c
}

/// Registry contents:
/// - `v1`, `v2`: trained MuQAR models (seeds 1, 2);
/// - `dem`: untrained model that needs a demographic;
/// - `alien`: model built against a different taxonomy.
pub fn fixture() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let registry = Registry::new(dir.path().join("models"));

    let mut train_spec = WorldSpec::new(SEED);
    train_spec.garments = 150;
    let shape = ExampleShape {
        n: N,
        k: K,
        a_max: A_MAX,
        feature_dim: train_spec.feature_dim,
    };
    let (_, _, data) = synthetic_dataset(&train_spec, 5, shape).unwrap();

    // Same taxonomy, one record per stratum so trend filters have data.
    let mut serve_spec = train_spec.clone();
    serve_spec.demographics = true;
    let world = generate_world(&serve_spec).unwrap();
    let tax = world.taxonomy().clone();
    let (_, records) = world.sample_garments(serve_spec.garments, 7);
    let store = TrendStore::new(records, &tax, Normalization::Identity, Some(world.period())).unwrap();

    let schedule = |seed| TrainConfig {
        epochs: 2,
        batch_size: 64,
        learning_rate: 3e-3,
        seed,
        patience: None,
        target_loss: None,
    };
    let mut models = Vec::new();
    for (version, seed) in [("v1", 1), ("v2", 2)] {
        let cfg = small_config(&tax, shape.feature_dim, QarKind::Lstm);
        let (mut m, _) = train_model(cfg, &tax, &data.train, &data.validation, &schedule(seed)).unwrap();
        registry.save(&mut m, version).unwrap();
        models.push((version.to_string(), m));
    }

    let mut cfg = small_config(&tax, shape.feature_dim, QarKind::Lr);
    cfg.demographic = true;
    let mut dem = ForecastModel::new(cfg, &tax, 3).unwrap();
    dem.meta_mut().prototypes = category_prototypes(&data.train);
    registry.save(&mut dem, "dem").unwrap();
    models.push(("dem".into(), dem));

    let mut alien_spec: TaxonomySpec = tax.spec().clone();
    alien_spec.attributes[0].name = "renamed".into();
    let alien_tax = Taxonomy::new(alien_spec).unwrap();
    let mut alien = ForecastModel::new(small_config(&alien_tax, shape.feature_dim, QarKind::Lr), &alien_tax, 4).unwrap();
    registry.save(&mut alien, "alien").unwrap();

    let state = Arc::new(AppState::new(store.clone(), registry).unwrap());
    Fixture {
        dir,
        world,
        store,
        state,
        models,
    }
}

impl Fixture {
    pub fn model(&self, version: &str) -> &ForecastModel {
        &self.models.iter().find(|(v, _)| v == version).unwrap().1
    }

    pub fn feature_dim(&self) -> usize {
        self.world.spec().feature_dim
    }

    pub fn taxonomy(&self) -> &Taxonomy {
        self.world.taxonomy()
    }

    /// A legal (category, attributes) pair by name.
    pub fn legal_labels(&self, category: usize, count: usize) -> (String, Vec<String>) {
        let tax = self.taxonomy();
        let t = tax.category_parent(category);
        let attrs = tax
            .legal_attributes(t)
            .into_iter()
            .take(count)
            .map(|a| tax.attribute_name(a).to_string())
            .collect();
        (tax.category_name(category).to_string(), attrs)
    }

    /// One attribute that is illegal for the category's garment type.
    pub fn illegal_attribute(&self, category: usize) -> String {
        let tax = self.taxonomy();
        let t = tax.category_parent(category);
        let a = (0..tax.num_attributes()).find(|&a| !tax.is_legal(a, t)).unwrap();
        tax.attribute_name(a).to_string()
    }
}

/// A request with explicit features (all 0.1) for category 0.
pub fn basic_request(fx: &Fixture) -> Value {
    let (cat, attrs) = fx.legal_labels(0, 2);
    json!({
        "garment": {
            "category": cat,
            "attributes": attrs,
            "visual_features": vec![0.1; fx.feature_dim()],
        },
        "target_date": "2021-03-03",
    })
}

pub async fn call(state: &Arc<AppState>, method: &str, uri: &str, body: Option<&Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(serde_json::to_vec(b).unwrap())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = router(state.clone()).oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()))
    };
    (status, value)
}

pub fn schema(name: &str) -> jsonschema::Validator {
    let path = format!("{}/schemas/{name}", env!("CARGO_MANIFEST_DIR"));
    let text = std::fs::read_to_string(path).unwrap();
    jsonschema::validator_for(&serde_json::from_str(&text).unwrap()).unwrap()
}
