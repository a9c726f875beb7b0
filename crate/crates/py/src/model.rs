use chrono::NaiveDate;
use muqar_core::experiment::{clamped_predictions, evaluate};
use muqar_core::forecast::{
    train_model, Architecture, ForecastModel, GarmentDescriptor, ModelConfig, QarConfig, QarKind,
    TrainConfig,
};
use muqar_core::trend::{attribute_window, Week};
use pyo3::prelude::*;
use pyo3::types::{PyBytes, PyDict};

use crate::data::{demographic, PyDataset, PyTrendStore};
use crate::err;

fn architecture(s: &str) -> PyResult<Architecture> {
    match s.to_ascii_lowercase().replace('-', "_").as_str() {
        "fusion_mlp" => Ok(Architecture::FusionMlp),
        "qar" => Ok(Architecture::Qar),
        "muqar" => Ok(Architecture::MuQar),
        _ => Err(err(format!("unknown architecture '{s}' (fusion_mlp, qar, muqar)"))),
    }
}

/// A trained forecaster. Immutable; predictions release the GIL.
#[pyclass(name = "Model", module = "muqar", frozen)]
pub struct PyModel {
    inner: ForecastModel,
}

/// Train a forecaster on `dataset`. Window geometry and feature size come
/// from the dataset; the remaining keywords override defaults.
#[pyfunction]
#[pyo3(signature = (
    dataset, architecture="muqar", qar="lstm", epochs=30, seed=0, batch_size=32,
    learning_rate=1e-3, patience=Some(8), hidden=None, version="python"
))]
#[allow(clippy::too_many_arguments)]
pub fn train(
    py: Python<'_>,
    dataset: &PyDataset,
    architecture: &str,
    qar: &str,
    epochs: usize,
    seed: u64,
    batch_size: usize,
    learning_rate: f64,
    patience: Option<usize>,
    hidden: Option<usize>,
    version: &str,
) -> PyResult<PyModel> {
    let arch = self::architecture(architecture)?;
    let kind = QarKind::parse(&qar.to_ascii_lowercase().replace('-', "_"))
        .ok_or_else(|| err(format!("unknown qar kind '{qar}'")))?;
    let tax = &dataset.taxonomy;
    let shape = dataset.shape;
    let mut config = ModelConfig::new(arch, shape.feature_dim, tax.num_categories(), tax.num_attributes());
    config.k = shape.k;
    config.qar = QarConfig::new(kind);
    config.qar.n = shape.n;
    config.qar.a_max = shape.a_max;
    if let Some(h) = hidden {
        config.head_units = h;
        config.fusion.u_mlp = h;
        config.qar.q = h;
        config.qar.hidden = h;
        config.qar.ff_dim = 2 * h;
    }
    let schedule = TrainConfig {
        epochs,
        batch_size,
        learning_rate,
        seed,
        patience,
        target_loss: None,
    };
    let data = &dataset.inner;
    let (mut model, _) = py
        .detach(|| train_model(config, tax, &data.train, &data.validation, &schedule))
        .map_err(err)?;
    model.meta_mut().normalization = dataset.normalization;
    model.set_version(version);
    Ok(PyModel { inner: model })
}

#[pymethods]
impl PyModel {
    #[getter]
    pub fn version(&self) -> String {
        self.inner.version().to_owned()
    }

    #[getter]
    pub fn taxonomy_hash(&self) -> String {
        self.inner.meta().taxonomy_hash.clone()
    }

    pub fn config_json(&self) -> PyResult<String> {
        serde_json::to_string(self.inner.config()).map_err(err)
    }

    pub fn to_bytes<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &self.inner.to_bytes())
    }

    /// Inverse of `to_bytes`. With `taxonomy_hash`, a model built against a
    /// different taxonomy is refused.
    #[staticmethod]
    #[pyo3(signature = (data, taxonomy_hash=None))]
    pub fn from_bytes(data: &[u8], taxonomy_hash: Option<&str>) -> PyResult<Self> {
        Ok(Self {
            inner: ForecastModel::from_bytes(data, taxonomy_hash).map_err(err)?,
        })
    }

    /// Clamped forecasts for every example of a dataset split.
    #[pyo3(signature = (dataset, split="test"))]
    pub fn predict_split(&self, py: Python<'_>, dataset: &PyDataset, split: &str) -> PyResult<Vec<Vec<f64>>> {
        let examples = dataset.part(split)?;
        py.detach(|| clamped_predictions(&self.inner, examples)).map_err(err)
    }

    /// MAE, WAPE, PCC and binary accuracy over a dataset split.
    #[pyo3(signature = (dataset, split="test"))]
    pub fn evaluate<'py>(&self, py: Python<'py>, dataset: &PyDataset, split: &str) -> PyResult<Bound<'py, PyDict>> {
        let examples = dataset.part(split)?;
        let r = py.detach(|| evaluate(&self.inner, examples, split)).map_err(err)?;
        let d = PyDict::new(py);
        d.set_item("samples", r.samples)?;
        d.set_item("mae", r.mae)?;
        d.set_item("wape", r.wape)?;
        d.set_item("pcc", r.pcc)?;
        d.set_item("binary_accuracy", r.binary_accuracy)?;
        Ok(d)
    }

    /// Forecast `k` weeks of popularity for a new garment launched on
    /// `date` (ISO "YYYY-MM-DD"), reading trend windows from `store`.
    /// Without `features`, the model's category prototype is used.
    #[pyo3(signature = (store, category, attributes, date, features=None, gender=None, age_group=None))]
    #[allow(clippy::too_many_arguments)]
    pub fn forecast(
        &self,
        py: Python<'_>,
        store: &PyTrendStore,
        category: &str,
        attributes: Vec<String>,
        date: &str,
        features: Option<Vec<f64>>,
        gender: Option<&str>,
        age_group: Option<&str>,
    ) -> PyResult<Vec<f64>> {
        let tax = store.inner.taxonomy();
        if tax.hash() != self.inner.meta().taxonomy_hash {
            return Err(err("store and model use different taxonomies"));
        }
        let labels = tax
            .label_set_from_names(category, &attributes)
            .map_err(|v| err(v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")))?;
        let target_date = NaiveDate::parse_from_str(date, "%Y-%m-%d").map_err(err)?;
        let features = match features {
            Some(f) => f,
            None if self.inner.config().feature_dim == 0 => Vec::new(),
            None => self
                .inner
                .prototype(labels.category)
                .ok_or_else(|| err(format!("no prototype for category '{category}'")))?
                .to_vec(),
        };
        let cfg = self.inner.config();
        let window = if cfg.architecture.uses_qar() {
            Some(
                attribute_window(
                    |l| store.series.get(&l),
                    &labels.labels(),
                    Week::from_date(target_date),
                    cfg.qar.n,
                    cfg.qar.a_max,
                )
                .map_err(err)?,
            )
        } else {
            None
        };
        let descriptor = GarmentDescriptor {
            features,
            labels,
            target_date,
            demographic: demographic(gender, age_group)?,
        };
        let raw = py
            .detach(|| self.inner.predict(&descriptor, window.as_ref()))
            .map_err(err)?;
        Ok(raw.into_iter().map(|v| v.clamp(0.0, 1.0)).collect())
    }

    fn __repr__(&self) -> String {
        let c = self.inner.config();
        format!(
            "Model(version={:?}, architecture={:?}, qar={}, k={})",
            self.inner.version(),
            c.architecture,
            c.qar.kind.name(),
            c.k
        )
    }
}
