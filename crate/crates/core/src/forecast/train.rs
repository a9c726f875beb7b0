use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::category_prototypes;
use super::{Example, ForecastError, ForecastModel, ModelConfig, Result, TrainConfig};
use crate::taxonomy::Taxonomy;
use crate::tensor::{Adam, AdamConfig, Graph, Tensor, TensorError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mae: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub curve: Vec<EpochStats>,
    /// Epoch whose parameters were kept (1-based; 0 = initial weights).
    pub best_epoch: usize,
    pub stopped_early: bool,
}

impl TrainReport {
    pub fn final_train_mse(&self) -> Option<f64> {
        self.curve.last().map(|e| e.train_mse)
    }

    pub fn best_val_mae(&self) -> Option<f64> {
        self.curve
            .iter()
            .filter_map(|e| e.val_mae)
            .fold(None, |m, v| Some(m.map_or(v, |m: f64| m.min(v))))
    }
}

fn mean_abs(model: &ForecastModel, examples: &[Example]) -> Result<f64> {
    let preds = model.predict_examples(examples)?;
    let mut total = 0.0;
    let mut count = 0usize;
    for (p, e) in preds.iter().zip(examples) {
        for (a, b) in p.iter().zip(&e.target) {
            total += (a - b).abs();
            count += 1;
        }
    }
    Ok(total / count.max(1) as f64)
}

impl ForecastModel {
    /// Mean absolute error of raw outputs over every target step.
    pub fn evaluate_mae(&self, examples: &[Example]) -> Result<f64> {
        if examples.is_empty() {
            return Err(ForecastError::EmptyDataset);
        }
        mean_abs(self, examples)
    }

    /// Minimise MSE with Adam.
    ///
    /// Examples are put in canonical key order before the seeded shuffle,
    /// so the result does not depend on the order they were passed in.
    /// With a non-empty `val` set and a patience, training stops once the
    /// validation MAE has not improved for that many epochs and the best
    /// parameters are restored. Parameters are rounded to f32 at the end.
    pub fn fit(
        &mut self,
        train: &[Example],
        val: &[Example],
        schedule: &TrainConfig,
    ) -> Result<TrainReport> {
        if train.is_empty() {
            return Err(ForecastError::EmptyDataset);
        }
        let k = self.config.k;
        if let Some(e) = train.iter().chain(val).find(|e| e.target.len() != k) {
            return Err(ForecastError::Dimension {
                what: "target horizon",
                expected: k,
                got: e.target.len(),
            });
        }
        let mut order: Vec<&Example> = train.iter().collect();
        order.sort_by(|a, b| a.key().cmp(&b.key()));
        let mut rng = ChaCha8Rng::seed_from_u64(schedule.seed);
        let mut adam = Adam::new(
            AdamConfig {
                learning_rate: schedule.learning_rate,
                ..AdamConfig::default()
            },
            &self.store,
        );
        let mut curve = Vec::new();
        let mut stable = self.store.clone();
        let mut stable_epoch = 0;
        let mut best: Option<(f64, usize, crate::tensor::ParamStore)> = None;
        let mut stopped_early = false;
        let bs = schedule.batch_size.max(1);
        for epoch in 1..=schedule.epochs {
            order.shuffle(&mut rng);
            let mut sse = 0.0;
            for chunk in order.chunks(bs) {
                let step = self.train_step(chunk, &mut adam);
                let loss = match step {
                    Ok(l) if l.is_finite() => l,
                    Ok(_) | Err(ForecastError::Tensor(TensorError::NumericOverflow { .. })) => {
                        let mut checkpoint = self.clone();
                        checkpoint.store = stable;
                        return Err(ForecastError::Diverged {
                            epoch,
                            stable_epoch,
                            checkpoint: Box::new(checkpoint),
                        });
                    }
                    Err(e) => return Err(e),
                };
                sse += loss * chunk.len() as f64;
            }
            let train_mse = sse / order.len() as f64;
            let val_mae = if val.is_empty() {
                None
            } else {
                Some(mean_abs(self, val)?)
            };
            curve.push(EpochStats {
                epoch,
                train_mse,
                val_mae,
            });
            stable = self.store.clone();
            stable_epoch = epoch;
            if let Some(v) = val_mae {
                if best.as_ref().map_or(true, |(b, _, _)| v < *b) {
                    best = Some((v, epoch, self.store.clone()));
                }
                if let (Some(p), Some((_, be, _))) = (schedule.patience, &best) {
                    if epoch - be >= p {
                        stopped_early = true;
                        break;
                    }
                }
            }
            if schedule.target_loss.is_some_and(|t| train_mse < t) {
                break;
            }
        }
        let best_epoch = match best {
            Some((_, e, params)) => {
                self.store = params;
                e
            }
            None => curve.len(),
        };
        self.store.snap_to_f32();
        self.meta.seed = schedule.seed;
        Ok(TrainReport {
            curve,
            best_epoch,
            stopped_early,
        })
    }

    fn train_step(&mut self, chunk: &[&Example], adam: &mut Adam) -> Result<f64> {
        let items: Vec<_> = chunk
            .iter()
            .map(|e| (&e.descriptor, Some(&e.window)))
            .collect();
        let batch = self.batch(&items, true)?;
        let target: Vec<f64> = chunk.iter().flat_map(|e| e.target.iter().copied()).collect();
        let mut g = Graph::new();
        let out = self.net.forward(&mut g, &self.store, &batch)?;
        let t = g.input(Tensor::new(vec![chunk.len(), self.config.k], target)?);
        let loss = g.mse(out, t)?;
        let value = g.value(loss).data()[0];
        g.backward(loss)?;
        self.store.zero_grad();
        g.write_param_grads(&mut self.store);
        adam.step(&mut self.store)?;
        Ok(value)
    }
}

/// Build a model from `config`, train it, and attach category prototypes
/// from the training examples.
pub fn train_model(
    config: ModelConfig,
    taxonomy: &Taxonomy,
    train: &[Example],
    val: &[Example],
    schedule: &TrainConfig,
) -> Result<(ForecastModel, TrainReport)> {
    let mut model = ForecastModel::new(config, taxonomy, schedule.seed)?;
    let report = model.fit(train, val, schedule)?;
    model.meta.prototypes = category_prototypes(train);
    Ok((model, report))
}
