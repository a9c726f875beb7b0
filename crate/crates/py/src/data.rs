use std::collections::HashMap;
use std::fs::File;
use std::io::BufReader;
use std::sync::Arc;

use muqar_core::experiment::{prepare_dataset, ExampleShape, mean_baseline_mae, Dataset};
use muqar_core::synth::{generate_world, World, WorldSpec};
use muqar_core::taxonomy::{LabelRef, Taxonomy};
use muqar_core::trend::{
    ingest_csv, ingest_jsonl, AgeGroup, Demographic, Gender, IngestOptions, TrendSeries,
    TrendStore, Week,
};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use crate::err;

#[pyclass(name = "Taxonomy", module = "muqar", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyTaxonomy {
    pub(crate) inner: Taxonomy,
}

#[pymethods]
impl PyTaxonomy {
    #[staticmethod]
    pub fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: Taxonomy::from_json(text).map_err(err)?,
        })
    }

    pub fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    pub fn hash(&self) -> String {
        self.inner.hash()
    }

    #[getter]
    pub fn types(&self) -> Vec<String> {
        (0..self.inner.num_types())
            .map(|i| self.inner.type_name(i).to_owned())
            .collect()
    }

    #[getter]
    pub fn categories(&self) -> Vec<String> {
        (0..self.inner.num_categories())
            .map(|i| self.inner.category_name(i).to_owned())
            .collect()
    }

    #[getter]
    pub fn attributes(&self) -> Vec<String> {
        (0..self.inner.num_attributes())
            .map(|i| self.inner.attribute_name(i).to_owned())
            .collect()
    }

    /// Attributes allowed on garments of `category`.
    pub fn legal_attributes(&self, category: &str) -> PyResult<Vec<String>> {
        let c = self
            .inner
            .category_index(category)
            .ok_or_else(|| err(format!("unknown category '{category}'")))?;
        Ok(self
            .inner
            .legal_attributes(self.inner.category_parent(c))
            .into_iter()
            .map(|a| self.inner.attribute_name(a).to_owned())
            .collect())
    }

    /// Violations of a label set, empty when it is legal.
    pub fn check(&self, category: &str, attributes: Vec<String>) -> Vec<String> {
        match self.inner.label_set_from_names(category, &attributes) {
            Ok(_) => Vec::new(),
            Err(v) => v.iter().map(ToString::to_string).collect(),
        }
    }

    fn __repr__(&self) -> String {
        format!(
            "Taxonomy(types={}, categories={}, attributes={})",
            self.inner.num_types(),
            self.inner.num_categories(),
            self.inner.num_attributes()
        )
    }
}

/// Synthetic world with known attribute trends and popularity function.
#[pyclass(name = "World", module = "muqar", frozen)]
pub struct PyWorld {
    inner: World,
}

#[pymethods]
impl PyWorld {
    #[new]
    #[pyo3(signature = (seed, garments=None, weeks=None, demographics=false, beta=None))]
    pub fn new(
        seed: u64,
        garments: Option<usize>,
        weeks: Option<usize>,
        demographics: bool,
        beta: Option<f64>,
    ) -> PyResult<Self> {
        let mut spec = WorldSpec::new(seed);
        if let Some(g) = garments {
            spec.garments = g;
        }
        if let Some(w) = weeks {
            spec.weeks = w;
        }
        if let Some(b) = beta {
            spec.beta = b;
        }
        spec.demographics = demographics;
        Ok(Self {
            inner: generate_world(&spec).map_err(err)?,
        })
    }

    #[getter]
    pub fn taxonomy(&self) -> PyTaxonomy {
        PyTaxonomy {
            inner: self.inner.taxonomy().clone(),
        }
    }

    #[getter]
    pub fn feature_dim(&self) -> usize {
        self.inner.spec().feature_dim
    }

    /// Mondays of the first and last week, ISO formatted.
    #[getter]
    pub fn period(&self) -> (String, String) {
        let (a, b) = self.inner.period();
        (a.monday().to_string(), b.monday().to_string())
    }

    pub fn spec_json(&self) -> PyResult<String> {
        serde_json::to_string(self.inner.spec()).map_err(err)
    }

    /// Realised weekly trend of one attribute.
    pub fn trend(&self, attribute: &str) -> PyResult<Vec<f64>> {
        let a = self
            .inner
            .taxonomy()
            .attribute_index(attribute)
            .ok_or_else(|| err(format!("unknown attribute '{attribute}'")))?;
        Ok(self.inner.trend_series(a).to_vec())
    }

    /// Sample garments and wrap their records in a trend store.
    #[pyo3(signature = (seed, garments=None))]
    pub fn sample(&self, py: Python<'_>, seed: u64, garments: Option<usize>) -> PyResult<PyTrendStore> {
        let count = garments.unwrap_or(self.inner.spec().garments);
        let world = &self.inner;
        py.detach(|| {
            let (_, records) = world.sample_garments(count, seed);
            TrendStore::new(
                records,
                world.taxonomy(),
                muqar_core::trend::Normalization::Identity,
                Some(world.period()),
            )
        })
        .map_err(err)
        .and_then(PyTrendStore::wrap)
    }
}

pub(crate) fn demographic(gender: Option<&str>, age_group: Option<&str>) -> PyResult<Option<Demographic>> {
    match (gender, age_group) {
        (None, None) => Ok(None),
        (Some(g), Some(a)) => Ok(Some(Demographic::new(
            g.parse::<Gender>().map_err(err)?,
            a.parse::<AgeGroup>().map_err(err)?,
        ))),
        _ => Err(err("gender and age_group must be given together")),
    }
}

/// Popularity records plus the unfiltered per-label series used for
/// trend windows.
#[pyclass(name = "TrendStore", module = "muqar", frozen)]
pub struct PyTrendStore {
    pub(crate) inner: Arc<TrendStore>,
    pub(crate) series: HashMap<LabelRef, TrendSeries>,
}

impl PyTrendStore {
    pub(crate) fn wrap(store: TrendStore) -> PyResult<Self> {
        let series = store.all_series(None, None).map_err(err)?;
        Ok(Self {
            inner: Arc::new(store),
            series,
        })
    }

    pub(crate) fn feature_dim(&self) -> usize {
        self.inner
            .records()
            .iter()
            .find_map(|r| r.features.as_ref().map(Vec::len))
            .unwrap_or(0)
    }
}

#[pymethods]
impl PyTrendStore {
    /// Load `.jsonl` or `.csv` records. Unparseable rows are skipped unless
    /// they exceed the ingest tolerance.
    #[staticmethod]
    pub fn load(path: &str, taxonomy: &PyTaxonomy) -> PyResult<Self> {
        let f = File::open(path).map_err(err)?;
        let opts = IngestOptions::default();
        let (store, _) = if path.ends_with(".jsonl") {
            ingest_jsonl(BufReader::new(f), &taxonomy.inner, &opts)
        } else {
            ingest_csv(f, &taxonomy.inner, &opts)
        }
        .map_err(err)?;
        Self::wrap(store)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    pub fn weeks_loaded(&self) -> usize {
        self.inner.weeks_loaded()
    }

    #[getter]
    pub fn taxonomy(&self) -> PyTaxonomy {
        PyTaxonomy {
            inner: self.inner.taxonomy().clone(),
        }
    }

    /// Weekly series of a category or attribute as a dict with `weeks`
    /// ("YYYY-Www"), `values` and `support` lists.
    #[pyo3(signature = (label, gender=None, age_group=None))]
    pub fn series<'py>(
        &self,
        py: Python<'py>,
        label: &str,
        gender: Option<&str>,
        age_group: Option<&str>,
    ) -> PyResult<Bound<'py, PyDict>> {
        let l = self
            .inner
            .taxonomy()
            .resolve_label(label)
            .ok_or_else(|| err(format!("unknown label '{label}'")))?;
        let s = self
            .inner
            .series(l, demographic(gender, age_group)?, None)
            .map_err(err)?;
        let d = PyDict::new(py);
        d.set_item("label", &s.name)?;
        d.set_item("weeks", s.weeks.iter().map(Week::to_string).collect::<Vec<_>>())?;
        d.set_item("values", &s.values)?;
        d.set_item("support", &s.support)?;
        Ok(d)
    }

    /// Chronological train / validation / test examples. Validation and test
    /// items are observed in a single week, so only `k = 1` yields them.
    #[pyo3(signature = (n=12, k=1, a_max=8))]
    pub fn dataset(&self, py: Python<'_>, n: usize, k: usize, a_max: usize) -> PyResult<PyDataset> {
        let shape = ExampleShape {
            n,
            k,
            a_max,
            feature_dim: self.feature_dim(),
        };
        let store = &self.inner;
        let inner = py.detach(|| prepare_dataset(store, shape)).map_err(err)?;
        Ok(PyDataset {
            inner: Arc::new(inner),
            shape,
            taxonomy: self.inner.taxonomy().clone(),
            normalization: self.inner.normalization(),
        })
    }
}

#[pyclass(name = "Dataset", module = "muqar", frozen)]
pub struct PyDataset {
    pub(crate) inner: Arc<Dataset>,
    pub(crate) shape: ExampleShape,
    pub(crate) taxonomy: Taxonomy,
    pub(crate) normalization: muqar_core::trend::Normalization,
}

impl PyDataset {
    pub(crate) fn part(&self, split: &str) -> PyResult<&[muqar_core::forecast::Example]> {
        match split {
            "train" => Ok(&self.inner.train),
            "validation" => Ok(&self.inner.validation),
            "test" => Ok(&self.inner.test),
            other => Err(err(format!("unknown split '{other}' (train, validation, test)"))),
        }
    }
}

#[pymethods]
impl PyDataset {
    /// Example counts per split.
    #[getter]
    pub fn sizes(&self) -> (usize, usize, usize) {
        (
            self.inner.train.len(),
            self.inner.validation.len(),
            self.inner.test.len(),
        )
    }

    /// `(n, k, a_max, feature_dim)`.
    #[getter]
    pub fn shape(&self) -> (usize, usize, usize, usize) {
        let s = self.shape;
        (s.n, s.k, s.a_max, s.feature_dim)
    }

    /// Ground-truth target vectors of one split.
    pub fn targets(&self, split: &str) -> PyResult<Vec<Vec<f64>>> {
        Ok(self.part(split)?.iter().map(|e| e.target.clone()).collect())
    }

    /// MAE of predicting the mean training target on `split`.
    #[pyo3(signature = (split="test"))]
    pub fn mean_baseline_mae(&self, split: &str) -> PyResult<Option<f64>> {
        Ok(mean_baseline_mae(&self.inner.train, self.part(split)?))
    }
}
