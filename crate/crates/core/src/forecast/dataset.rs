use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::{GarmentDescriptor, Result};
use crate::taxonomy::LabelRef;
use crate::trend::{attribute_window, AttributeWindow, TrendError, TrendSeries, TrendStore, Week};

/// One supervised example: a garment at a target week with its trend window
/// and the `k` popularity values from the target week onward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub item_id: String,
    /// Demographic stratum index, when the record carries one.
    pub stratum: Option<usize>,
    pub descriptor: GarmentDescriptor,
    pub window: AttributeWindow,
    pub target: Vec<f64>,
}

impl Example {
    /// Canonical sort key; unique within a dataset built by [`build_examples`].
    pub fn key(&self) -> (&str, Week, Option<usize>) {
        (&self.item_id, self.descriptor.target_week(), self.stratum)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetReport {
    pub items: usize,
    pub examples: usize,
    /// Targets too early for `n` weeks of trend history.
    pub skipped_history: usize,
    /// Targets without `k` consecutive observed weeks.
    pub skipped_horizon: usize,
    /// Records without visual features of the expected size.
    pub skipped_features: usize,
}

/// Examples for the given items. Trend windows come from `series` (keyed by
/// label), columns in the order category, then attributes.
pub fn build_examples(
    store: &TrendStore,
    series: &HashMap<LabelRef, TrendSeries>,
    items: &[String],
    n: usize,
    k: usize,
    a_max: usize,
    feature_dim: usize,
) -> Result<(Vec<Example>, DatasetReport)> {
    let wanted: HashSet<&str> = items.iter().map(String::as_str).collect();
    // item -> stratum -> week -> (sum, count, first record index)
    let mut grouped: BTreeMap<&str, BTreeMap<Option<usize>, BTreeMap<Week, (f64, usize, usize)>>> =
        BTreeMap::new();
    for (i, r) in store.records().iter().enumerate() {
        if !wanted.contains(r.item_id.as_str()) {
            continue;
        }
        let e = grouped
            .entry(&r.item_id)
            .or_default()
            .entry(r.demographic.map(|d| d.index()))
            .or_default()
            .entry(r.week())
            .or_insert((0.0, 0, i));
        e.0 += r.popularity;
        e.1 += 1;
    }
    let mut report = DatasetReport {
        items: grouped.len(),
        ..Default::default()
    };
    let mut out = Vec::new();
    for (item, strata) in grouped {
        for (stratum, weeks) in strata {
            for (&week, &(_, _, first)) in &weeks {
                let target: Option<Vec<f64>> = (0..k as i64)
                    .map(|d| weeks.get(&week.offset(d)).map(|&(s, c, _)| s / c as f64))
                    .collect();
                let Some(target) = target else {
                    report.skipped_horizon += 1;
                    continue;
                };
                let rec = &store.records()[first];
                let features = match (&rec.features, feature_dim) {
                    (_, 0) => Vec::new(),
                    (Some(f), d) if f.len() == d => f.clone(),
                    _ => {
                        report.skipped_features += 1;
                        continue;
                    }
                };
                let window =
                    match attribute_window(|l| series.get(&l), &rec.labels.labels(), week, n, a_max) {
                        Ok(w) => w,
                        Err(TrendError::InsufficientHistory { .. })
                        | Err(TrendError::BeyondSeries { .. }) => {
                            report.skipped_history += 1;
                            continue;
                        }
                        Err(e) => return Err(e.into()),
                    };
                out.push(Example {
                    item_id: item.to_string(),
                    stratum,
                    descriptor: GarmentDescriptor {
                        features,
                        labels: rec.labels.clone(),
                        target_date: rec.date,
                        demographic: rec.demographic,
                    },
                    window,
                    target,
                });
            }
        }
    }
    report.examples = out.len();
    Ok((out, report))
}

/// Mean visual feature vector per category, one vote per distinct item.
pub fn category_prototypes(examples: &[Example]) -> BTreeMap<usize, Vec<f64>> {
    let mut seen = HashSet::new();
    let mut acc: BTreeMap<usize, (Vec<f64>, usize)> = BTreeMap::new();
    for e in examples {
        if e.descriptor.features.is_empty() || !seen.insert(e.item_id.as_str()) {
            continue;
        }
        let f = &e.descriptor.features;
        let entry = acc
            .entry(e.descriptor.labels.category)
            .or_insert_with(|| (vec![0.0; f.len()], 0));
        entry.0.iter_mut().zip(f).for_each(|(a, b)| *a += b);
        entry.1 += 1;
    }
    acc.into_iter()
        .map(|(c, (sum, n))| (c, sum.into_iter().map(|v| v / n as f64).collect()))
        .collect()
}
