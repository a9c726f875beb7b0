//! End-to-end plumbing shared by the CLI, the service and the test suites:
//! records → chronological split → trend series → windowed examples, and
//! scoring of trained models.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::{chronological_split, EvalError, MetricReport, Split};
use crate::forecast::{build_examples, DatasetReport, Example, ForecastError, ForecastModel};
use crate::synth::{generate_world, SynthError, World, WorldSpec};
use crate::taxonomy::LabelRef;
use crate::trend::{Normalization, TrendError, TrendSeries, TrendStore};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Forecast(#[from] ForecastError),
    #[error(transparent)]
    Trend(#[from] TrendError),
    #[error(transparent)]
    Synth(#[from] SynthError),
}

pub type Result<T> = std::result::Result<T, ExperimentError>;

/// Window geometry and feature size used to turn a store into examples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExampleShape {
    pub n: usize,
    pub k: usize,
    pub a_max: usize,
    pub feature_dim: usize,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub split: Split,
    /// Unfiltered (all-strata) series keyed by label.
    pub series: HashMap<LabelRef, TrendSeries>,
    pub train: Vec<Example>,
    pub validation: Vec<Example>,
    pub test: Vec<Example>,
    pub reports: [DatasetReport; 3],
}

pub fn prepare_dataset(store: &TrendStore, shape: ExampleShape) -> Result<Dataset> {
    let split = chronological_split(store.records().iter().map(|r| (r.item_id.as_str(), r.date)))?;
    let series = store.all_series(None, None)?;
    let build = |items: &[String]| {
        build_examples(store, &series, items, shape.n, shape.k, shape.a_max, shape.feature_dim)
    };
    let (train, r0) = build(&split.train)?;
    let (validation, r1) = build(&split.validation)?;
    let (test, r2) = build(&split.test)?;
    Ok(Dataset {
        split,
        series,
        train,
        validation,
        test,
        reports: [r0, r1, r2],
    })
}

/// Synthetic world, its record store and the prepared dataset.
pub fn synthetic_dataset(
    spec: &WorldSpec,
    sample_seed: u64,
    shape: ExampleShape,
) -> Result<(World, TrendStore, Dataset)> {
    let world = generate_world(spec)?;
    let (_, records) = world.sample_garments(spec.garments, sample_seed);
    let store = TrendStore::new(records, world.taxonomy(), Normalization::Identity, Some(world.period()))?;
    let data = prepare_dataset(&store, shape)?;
    Ok((world, store, data))
}

/// Forecasts clamped to [0, 1], as the service returns them.
pub fn clamped_predictions(model: &ForecastModel, examples: &[Example]) -> Result<Vec<Vec<f64>>> {
    Ok(model
        .predict_examples(examples)?
        .into_iter()
        .map(|p| p.into_iter().map(|v| v.clamp(0.0, 1.0)).collect())
        .collect())
}

/// Regression metrics over every forecast step of every example.
pub fn evaluate(model: &ForecastModel, examples: &[Example], dataset: &str) -> Result<MetricReport> {
    if examples.is_empty() {
        return Err(ForecastError::EmptyDataset.into());
    }
    let pred: Vec<f64> = clamped_predictions(model, examples)?.into_iter().flatten().collect();
    let truth: Vec<f64> = examples.iter().flat_map(|e| e.target.iter().copied()).collect();
    Ok(MetricReport::regression(dataset, model.version(), &pred, &truth)?)
}

/// MAE of always predicting the mean training target.
pub fn mean_baseline_mae(train: &[Example], test: &[Example]) -> Option<f64> {
    let values: Vec<f64> = train.iter().flat_map(|e| e.target.iter().copied()).collect();
    if values.is_empty() || test.is_empty() {
        return None;
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let (sum, count) = test
        .iter()
        .flat_map(|e| e.target.iter())
        .fold((0.0, 0usize), |(s, c), v| (s + (v - mean).abs(), c + 1));
    Some(sum / count as f64)
}
