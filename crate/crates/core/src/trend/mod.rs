//! Popularity records, the trend store, per-label weekly series and
//! (n, k) windowing.

mod ingest;
mod series;
mod week;
mod window;

pub use ingest::{
    ingest_csv, ingest_jsonl, write_csv, write_jsonl, BadRow, IngestOptions, IngestReport,
    RawRecord,
};
pub use series::{build_attribute_series, SeriesExport, TrendSeries};
pub use week::Week;
pub use window::{attribute_window, sliding_windows, AttributeWindow, SlidingWindow, WindowSpec};

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::taxonomy::{LabelRef, LabelSet, Taxonomy};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrendError {
    #[error("{bad} of {total} rows failed to parse (first: {first})")]
    TooManyBadRows {
        bad: usize,
        total: usize,
        first: String,
    },
    #[error("io: {0}")]
    Io(String),
    #[error("no records for '{0}' in the requested period")]
    NoRecords(String),
    #[error("empty period: {from} is after {to}")]
    EmptyPeriod { from: Week, to: Week },
    #[error("insufficient history: earliest valid target week is {earliest}")]
    InsufficientHistory { earliest: Week },
    #[error("target week {target} needs trends beyond the last loaded week {last}")]
    BeyondSeries { target: Week, last: Week },
    #[error("invalid: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, TrendError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Men,
    Women,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AgeGroup {
    #[serde(rename = "<18")]
    Under18,
    #[serde(rename = "18-25")]
    From18To25,
    #[serde(rename = "25-30")]
    From25To30,
    #[serde(rename = "30-35")]
    From30To35,
    #[serde(rename = "35-45")]
    From35To45,
    #[serde(rename = "45-55")]
    From45To55,
    #[serde(rename = ">55")]
    Over55,
}

impl Gender {
    pub const ALL: [Gender; 2] = [Gender::Men, Gender::Women];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Gender::Men => "men",
            Gender::Women => "women",
        }
    }
}

impl AgeGroup {
    pub const ALL: [AgeGroup; 7] = [
        AgeGroup::Under18,
        AgeGroup::From18To25,
        AgeGroup::From25To30,
        AgeGroup::From30To35,
        AgeGroup::From35To45,
        AgeGroup::From45To55,
        AgeGroup::Over55,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AgeGroup::Under18 => "<18",
            AgeGroup::From18To25 => "18-25",
            AgeGroup::From25To30 => "25-30",
            AgeGroup::From30To35 => "30-35",
            AgeGroup::From35To45 => "35-45",
            AgeGroup::From45To55 => "45-55",
            AgeGroup::Over55 => ">55",
        }
    }
}

impl FromStr for Gender {
    type Err = TrendError;
    fn from_str(s: &str) -> Result<Self> {
        Gender::ALL
            .into_iter()
            .find(|g| g.as_str() == s)
            .ok_or_else(|| TrendError::Invalid(format!("unknown gender '{s}'")))
    }
}

impl FromStr for AgeGroup {
    type Err = TrendError;
    fn from_str(s: &str) -> Result<Self> {
        AgeGroup::ALL
            .into_iter()
            .find(|g| g.as_str() == s)
            .ok_or_else(|| TrendError::Invalid(format!("unknown age group '{s}'")))
    }
}

/// One demographic stratum (14 in total).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Demographic {
    pub gender: Gender,
    pub age_group: AgeGroup,
}

impl Demographic {
    pub const COUNT: usize = 14;

    pub fn new(gender: Gender, age_group: AgeGroup) -> Self {
        Self { gender, age_group }
    }

    pub fn index(self) -> usize {
        self.gender.index() * AgeGroup::ALL.len() + self.age_group.index()
    }

    pub fn from_index(i: usize) -> Option<Self> {
        (i < Self::COUNT).then(|| {
            Self::new(
                Gender::ALL[i / AgeGroup::ALL.len()],
                AgeGroup::ALL[i % AgeGroup::ALL.len()],
            )
        })
    }

    pub fn all() -> impl Iterator<Item = Demographic> {
        (0..Self::COUNT).filter_map(Self::from_index)
    }
}

impl fmt::Display for Demographic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.gender.as_str(), self.age_group.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopularityRecord {
    pub item_id: String,
    pub date: NaiveDate,
    /// Normalized to [0, 1].
    pub popularity: f64,
    pub labels: LabelSet,
    pub demographic: Option<Demographic>,
    pub features: Option<Vec<f64>>,
}

impl PopularityRecord {
    pub fn week(&self) -> Week {
        Week::from_date(self.date)
    }
}

/// How raw popularity values are mapped onto [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Normalization {
    /// Values are already in [0, 1].
    Identity,
    MinMax { min: f64, max: f64 },
}

impl Normalization {
    /// Identity when every value is already in [0, 1], min-max otherwise.
    pub fn fit(values: &[f64]) -> Self {
        if values.iter().all(|v| (0.0..=1.0).contains(v)) {
            return Normalization::Identity;
        }
        let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Normalization::MinMax { min, max }
    }

    pub fn apply(&self, v: f64) -> f64 {
        match *self {
            Normalization::Identity => v,
            Normalization::MinMax { min, max } if max > min => {
                ((v - min) / (max - min)).clamp(0.0, 1.0)
            }
            Normalization::MinMax { .. } => 0.0,
        }
    }

    pub fn invert(&self, v: f64) -> f64 {
        match *self {
            Normalization::Identity => v,
            Normalization::MinMax { min, max } => min + v * (max - min),
        }
    }
}

/// Immutable after construction; safe to share between threads.
#[derive(Debug, Clone)]
pub struct TrendStore {
    records: Vec<PopularityRecord>,
    by_label: HashMap<LabelRef, Vec<usize>>,
    period: Option<(Week, Week)>,
    normalization: Normalization,
    taxonomy: Taxonomy,
}

impl TrendStore {
    /// Build a store from records whose popularity is already normalized.
    /// `period` defaults to the span of the records.
    pub fn new(
        records: Vec<PopularityRecord>,
        taxonomy: &Taxonomy,
        normalization: Normalization,
        period: Option<(Week, Week)>,
    ) -> Result<Self> {
        let mut by_label: HashMap<LabelRef, Vec<usize>> = HashMap::new();
        for (i, r) in records.iter().enumerate() {
            if !(0.0..=1.0).contains(&r.popularity) {
                return Err(TrendError::Invalid(format!(
                    "record {i} popularity {} outside [0, 1]",
                    r.popularity
                )));
            }
            if let Err(v) = taxonomy.check_label_set(&r.labels) {
                return Err(TrendError::Invalid(format!("record {i}: {}", v[0])));
            }
            for l in r.labels.labels() {
                by_label.entry(l).or_default().push(i);
            }
        }
        let span = records.iter().map(|r| r.week()).fold(None, |acc, w| match acc {
            None => Some((w, w)),
            Some((a, b)) => Some((w.min(a), w.max(b))),
        });
        let period = match (period, span) {
            (Some((from, to)), Some((a, b))) => {
                if a < from || b > to {
                    return Err(TrendError::Invalid(format!(
                        "records span {a}..{b}, outside declared period {from}..{to}"
                    )));
                }
                Some((from, to))
            }
            (p, s) => p.or(s),
        };
        Ok(Self {
            records,
            by_label,
            period,
            normalization,
            taxonomy: taxonomy.clone(),
        })
    }

    pub fn records(&self) -> &[PopularityRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// First and last week, inclusive.
    pub fn period(&self) -> Option<(Week, Week)> {
        self.period
    }

    pub fn weeks_loaded(&self) -> usize {
        self.period.map_or(0, |(a, b)| (b.0 - a.0 + 1) as usize)
    }

    pub fn normalization(&self) -> Normalization {
        self.normalization
    }

    pub fn taxonomy(&self) -> &Taxonomy {
        &self.taxonomy
    }

    /// Records carrying `label`.
    pub fn records_with(&self, label: LabelRef) -> impl Iterator<Item = &PopularityRecord> {
        self.by_label
            .get(&label)
            .into_iter()
            .flatten()
            .map(|&i| &self.records[i])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strata_indices_are_a_bijection() {
        let all: Vec<_> = Demographic::all().collect();
        assert_eq!(all.len(), 14);
        for (i, d) in all.iter().enumerate() {
            assert_eq!(d.index(), i);
        }
        assert_eq!("18-25".parse::<AgeGroup>().unwrap(), AgeGroup::From18To25);
        assert!("18-24".parse::<AgeGroup>().is_err());
    }

    #[test]
    fn normalization_is_auto() {
        assert_eq!(Normalization::fit(&[0.0, 0.3, 1.0]), Normalization::Identity);
        let n = Normalization::fit(&[10.0, 20.0, 30.0]);
        assert_eq!(n, Normalization::MinMax { min: 10.0, max: 30.0 });
        assert_eq!(n.apply(20.0), 0.5);
        assert_eq!(n.invert(0.5), 20.0);
    }
}
