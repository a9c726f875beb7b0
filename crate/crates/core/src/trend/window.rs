use serde::{Deserialize, Serialize};

use super::{Result, TrendError, TrendSeries, Week};
use crate::taxonomy::LabelRef;

/// `n` input steps, `k` output steps, windows `stride` apart.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub n: usize,
    pub k: usize,
    pub stride: usize,
}

impl WindowSpec {
    pub fn new(n: usize, k: usize, stride: usize) -> Result<Self> {
        if n == 0 || k == 0 || stride == 0 {
            return Err(TrendError::Invalid(format!(
                "window needs n, k, stride >= 1 (got {n}, {k}, {stride})"
            )));
        }
        Ok(Self { n, k, stride })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlidingWindow {
    pub inputs: Vec<f64>,
    pub targets: Vec<f64>,
    pub target_week: Week,
}

/// Every `(n input, k target)` window of one series, `stride` apart,
/// starting at the first week.
pub fn sliding_windows(series: &TrendSeries, spec: WindowSpec) -> Vec<SlidingWindow> {
    let len = series.len();
    let mut out = Vec::new();
    let mut start = 0;
    while start + spec.n + spec.k <= len {
        let t = start + spec.n;
        out.push(SlidingWindow {
            inputs: series.values[start..t].to_vec(),
            targets: series.values[t..t + spec.k].to_vec(),
            target_week: series.weeks[t],
        });
        start += spec.stride;
    }
    out
}

/// Trend input for one item: row-major `[n, a_max]` over the `n` weeks
/// strictly before `target`. Columns follow `labels`, truncated to `a_max`;
/// unused or series-less columns are zero with mask 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeWindow {
    pub values: Vec<f64>,
    pub mask: Vec<f64>,
    pub n: usize,
    pub a_max: usize,
}

impl AttributeWindow {
    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.n).map(|t| self.values[t * self.a_max + c]).collect()
    }

    /// Last week of every active column.
    pub fn last_values(&self) -> Vec<f64> {
        let row = &self.values[(self.n - 1) * self.a_max..];
        row.iter()
            .zip(&self.mask)
            .filter(|(_, &m)| m > 0.0)
            .map(|(&v, _)| v)
            .collect()
    }
}

pub fn attribute_window<'a, F>(
    lookup: F,
    labels: &[LabelRef],
    target: Week,
    n: usize,
    a_max: usize,
) -> Result<AttributeWindow>
where
    F: Fn(LabelRef) -> Option<&'a TrendSeries>,
{
    if n == 0 || a_max == 0 {
        return Err(TrendError::Invalid("n and a_max must be >= 1".into()));
    }
    let mut values = vec![0.0; n * a_max];
    let mut mask = vec![0.0; a_max];
    let mut any = false;
    for (c, &label) in labels.iter().take(a_max).enumerate() {
        let Some(s) = lookup(label) else { continue };
        let first = target.offset(-(n as i64));
        if first < s.first_week() {
            return Err(TrendError::InsufficientHistory {
                earliest: s.first_week().offset(n as i64),
            });
        }
        if target.offset(-1) > s.last_week() {
            return Err(TrendError::BeyondSeries {
                target,
                last: s.last_week(),
            });
        }
        let i0 = (first.0 - s.first_week().0) as usize;
        for t in 0..n {
            values[t * a_max + c] = s.values[i0 + t];
        }
        mask[c] = 1.0;
        any = true;
    }
    if !any {
        return Err(TrendError::NoRecords(
            "no trend series for any requested label".into(),
        ));
    }
    Ok(AttributeWindow {
        values,
        mask,
        n,
        a_max,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(values: Vec<f64>) -> TrendSeries {
        let len = values.len();
        TrendSeries {
            label: LabelRef::Attribute(0),
            name: "a".into(),
            weeks: (0..len as i64).map(Week).collect(),
            support: vec![1; len],
            values,
        }
    }

    #[test]
    fn window_before_target() {
        let s = series(vec![0.1, 0.2, 0.3, 0.4]);
        let w = sliding_windows(&s, WindowSpec::new(3, 1, 1).unwrap());
        assert_eq!(w.len(), 1);
        assert_eq!((w[0].inputs.clone(), w[0].targets.clone()), (vec![0.1, 0.2, 0.3], vec![0.4]));
        let a = attribute_window(|_| Some(&s), &[LabelRef::Attribute(0)], Week(3), 3, 1).unwrap();
        assert_eq!(a.column(0), vec![0.1, 0.2, 0.3]);
    }

    #[test]
    fn padding_and_mask() {
        let s = series(vec![0.5; 6]);
        let labels = [LabelRef::Category(0), LabelRef::Attribute(0)];
        let a = attribute_window(|_| Some(&s), &labels, Week(5), 3, 4).unwrap();
        assert_eq!(a.mask, vec![1.0, 1.0, 0.0, 0.0]);
        assert_eq!(a.column(3), vec![0.0; 3]);
    }

    #[test]
    fn stride_two_enumeration() {
        let s = series((0..10).map(|i| i as f64 / 10.0).collect());
        let w = sliding_windows(&s, WindowSpec::new(4, 1, 2).unwrap());
        let targets: Vec<i64> = w.iter().map(|w| w.target_week.0).collect();
        assert_eq!(targets, vec![4, 6, 8]);
    }

    #[test]
    fn insufficient_history_names_earliest_target() {
        let s = series(vec![0.5; 6]);
        let err = attribute_window(|_| Some(&s), &[LabelRef::Attribute(0)], Week(2), 3, 2).unwrap_err();
        assert_eq!(err, TrendError::InsufficientHistory { earliest: Week(3) });
        assert!(matches!(
            attribute_window(|_| Some(&s), &[LabelRef::Attribute(0)], Week(8), 3, 2),
            Err(TrendError::BeyondSeries { .. })
        ));
        // target one past the end is fine: inputs are strictly before it
        assert!(attribute_window(|_| Some(&s), &[LabelRef::Attribute(0)], Week(6), 3, 2).is_ok());
    }
}
