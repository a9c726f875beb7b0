use std::collections::{BTreeMap, BTreeSet};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{EvalError, Result};

/// Item ids per partition, each in chronological order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<String>,
    pub validation: Vec<String>,
    pub test: Vec<String>,
}

impl Split {
    pub fn partition_of(&self, item: &str) -> Option<&'static str> {
        let has = |v: &Vec<String>| v.iter().any(|s| s == item);
        if has(&self.train) {
            Some("train")
        } else if has(&self.validation) {
            Some("validation")
        } else if has(&self.test) {
            Some("test")
        } else {
            None
        }
    }
}

/// Items observed on two or more distinct dates go to train. Items observed
/// on a single date are ordered by that date; the earlier half becomes
/// validation and the later half test (test takes the odd one out).
///
/// Several records of one item on the same date (e.g. one per demographic
/// stratum) count as a single observation.
pub fn chronological_split<'a, I>(records: I) -> Result<Split>
where
    I: IntoIterator<Item = (&'a str, NaiveDate)>,
{
    let mut dates: BTreeMap<&str, BTreeSet<NaiveDate>> = BTreeMap::new();
    for (item, date) in records {
        dates.entry(item).or_default().insert(date);
    }
    let mut train = Vec::new();
    let mut singles = Vec::new();
    for (item, d) in &dates {
        let first = *d.iter().next().expect("non-empty");
        if d.len() >= 2 {
            train.push((first, *item));
        } else {
            singles.push((first, *item));
        }
    }
    if singles.is_empty() {
        return Err(EvalError::Invalid(
            "no single-record items: validation and test would be empty".into(),
        ));
    }
    if train.is_empty() {
        return Err(EvalError::Invalid(
            "no multi-record items: training set would be empty".into(),
        ));
    }
    train.sort();
    singles.sort();
    let half = singles.len() / 2;
    let ids = |v: &[(NaiveDate, &str)]| v.iter().map(|(_, s)| s.to_string()).collect();
    Ok(Split {
        train: ids(&train),
        validation: ids(&singles[..half]),
        test: ids(&singles[half..]),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn day(i: i64) -> NaiveDate {
        NaiveDate::from_ymd_opt(2021, 1, 1).unwrap() + chrono::Duration::days(i)
    }

    #[test]
    fn ten_multi_four_single() {
        let mut recs: Vec<(String, NaiveDate)> = Vec::new();
        for i in 0..10 {
            for r in 0..5 {
                recs.push((format!("m{i}"), day(i + r * 7)));
            }
        }
        for i in 0..4 {
            recs.push((format!("s{i}"), day(100 - i)));
        }
        let s = chronological_split(recs.iter().map(|(a, d)| (a.as_str(), *d))).unwrap();
        assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (10, 2, 2));
        // s3 and s2 are the earliest singletons
        assert_eq!(s.validation, vec!["s3".to_string(), "s2".to_string()]);
    }

    #[test]
    fn all_singletons_is_an_error() {
        let recs = [("a", day(0)), ("b", day(1))];
        assert!(chronological_split(recs).is_err());
        let recs = [("a", day(0)), ("a", day(1))];
        assert!(chronological_split(recs).is_err());
    }

    #[test]
    fn same_day_records_are_one_observation() {
        let recs = [("a", day(0)), ("a", day(0)), ("b", day(1)), ("b", day(2))];
        let s = chronological_split(recs).unwrap();
        assert_eq!(s.train, vec!["b".to_string()]);
        assert_eq!(s.test, vec!["a".to_string()]);
    }
}
