use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::{Demographic, Result, TrendError, TrendStore, Week};
use crate::taxonomy::LabelRef;

/// Weekly mean popularity of one label over a contiguous run of weeks.
/// Weeks without records are interpolated and carry `support == 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendSeries {
    pub label: LabelRef,
    pub name: String,
    pub weeks: Vec<Week>,
    pub values: Vec<f64>,
    pub support: Vec<usize>,
}

/// Export layout: `{attribute, weeks: [[iso_year, iso_week, value, support]]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesExport {
    pub attribute: String,
    pub weeks: Vec<(i32, u32, f64, usize)>,
}

impl TrendSeries {
    /// Fill a contiguous `[from, to]` range from sparse weekly `(sum, count)`
    /// observations: linear interpolation between observed weeks, nearest
    /// value held beyond the ends.
    pub fn from_observations(
        label: LabelRef,
        name: &str,
        observed: &BTreeMap<Week, (f64, usize)>,
        from: Week,
        to: Week,
    ) -> Result<Self> {
        if from > to {
            return Err(TrendError::EmptyPeriod { from, to });
        }
        let points: Vec<(i64, f64, usize)> = observed
            .range(from..=to)
            .filter(|(_, &(_, n))| n > 0)
            .map(|(w, &(s, n))| (w.0, s / n as f64, n))
            .collect();
        if points.is_empty() {
            return Err(TrendError::NoRecords(name.to_string()));
        }
        let len = (to.0 - from.0 + 1) as usize;
        let mut values = Vec::with_capacity(len);
        let mut support = Vec::with_capacity(len);
        let mut j = 0;
        for w in from.0..=to.0 {
            while j + 1 < points.len() && points[j + 1].0 <= w {
                j += 1;
            }
            let (w0, v0, n0) = points[j];
            if w == w0 {
                values.push(v0);
                support.push(n0);
                continue;
            }
            support.push(0);
            if w < w0 || j + 1 == points.len() {
                values.push(v0);
            } else {
                let (w1, v1, _) = points[j + 1];
                let t = (w - w0) as f64 / (w1 - w0) as f64;
                values.push(v0 + t * (v1 - v0));
            }
        }
        Ok(Self {
            label,
            name: name.to_string(),
            weeks: (from.0..=to.0).map(Week).collect(),
            values,
            support,
        })
    }

    pub fn first_week(&self) -> Week {
        self.weeks[0]
    }

    pub fn last_week(&self) -> Week {
        *self.weeks.last().expect("series is never empty")
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value_at(&self, week: Week) -> Option<f64> {
        let i = week.0 - self.first_week().0;
        (i >= 0).then(|| self.values.get(i as usize).copied()).flatten()
    }

    /// Restrict to `[from, to]` (clipped to the series range).
    pub fn slice(&self, from: Week, to: Week) -> Result<Self> {
        let a = from.max(self.first_week());
        let b = to.min(self.last_week());
        if a > b {
            return Err(TrendError::EmptyPeriod { from, to });
        }
        let i = (a.0 - self.first_week().0) as usize;
        let j = (b.0 - self.first_week().0) as usize + 1;
        Ok(Self {
            label: self.label,
            name: self.name.clone(),
            weeks: self.weeks[i..j].to_vec(),
            values: self.values[i..j].to_vec(),
            support: self.support[i..j].to_vec(),
        })
    }

    pub fn export(&self) -> SeriesExport {
        SeriesExport {
            attribute: self.name.clone(),
            weeks: self
                .weeks
                .iter()
                .zip(&self.values)
                .zip(&self.support)
                .map(|((w, &v), &s)| {
                    let (y, n) = w.iso();
                    (y, n, v, s)
                })
                .collect(),
        }
    }
}

impl TrendStore {
    fn resolve_period(&self, period: Option<(Week, Week)>) -> Result<(Week, Week)> {
        let (from, to) = match (period, self.period()) {
            (Some(p), _) => p,
            (None, Some(p)) => p,
            (None, None) => return Err(TrendError::NoRecords("store is empty".into())),
        };
        if from > to {
            return Err(TrendError::EmptyPeriod { from, to });
        }
        Ok((from, to))
    }

    /// Weekly mean series of one label, optionally restricted to a stratum.
    /// `period` defaults to the store's period.
    pub fn series(
        &self,
        label: LabelRef,
        filter: Option<Demographic>,
        period: Option<(Week, Week)>,
    ) -> Result<TrendSeries> {
        let (from, to) = self.resolve_period(period)?;
        let mut observed: BTreeMap<Week, (f64, usize)> = BTreeMap::new();
        for r in self.records_with(label) {
            if filter.is_some() && r.demographic != filter {
                continue;
            }
            let e = observed.entry(r.week()).or_default();
            e.0 += r.popularity;
            e.1 += 1;
        }
        let name = self.taxonomy().label_name(label).to_string();
        TrendSeries::from_observations(label, &name, &observed, from, to)
    }

    /// Every label with at least one record, in one pass over the store.
    pub fn all_series(
        &self,
        filter: Option<Demographic>,
        period: Option<(Week, Week)>,
    ) -> Result<HashMap<LabelRef, TrendSeries>> {
        let (from, to) = self.resolve_period(period)?;
        let mut observed: HashMap<LabelRef, BTreeMap<Week, (f64, usize)>> = HashMap::new();
        for r in self.records() {
            if filter.is_some() && r.demographic != filter {
                continue;
            }
            let w = r.week();
            for l in r.labels.labels() {
                let e = observed.entry(l).or_default().entry(w).or_default();
                e.0 += r.popularity;
                e.1 += 1;
            }
        }
        let mut out = HashMap::new();
        for (label, obs) in observed {
            let name = self.taxonomy().label_name(label).to_string();
            match TrendSeries::from_observations(label, &name, &obs, from, to) {
                Ok(s) => {
                    out.insert(label, s);
                }
                Err(TrendError::NoRecords(_)) => {}
                Err(e) => return Err(e),
            }
        }
        Ok(out)
    }
}

/// Series for a label given by name (attribute names take precedence over
/// category names).
pub fn build_attribute_series(
    store: &TrendStore,
    name: &str,
    filter: Option<Demographic>,
    period: Option<(Week, Week)>,
) -> Result<TrendSeries> {
    let label = store
        .taxonomy()
        .resolve_label(name)
        .ok_or_else(|| TrendError::Invalid(format!("unknown attribute '{name}'")))?;
    store.series(label, filter, period)
}
