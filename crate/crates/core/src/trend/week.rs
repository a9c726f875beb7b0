use std::fmt;

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};

/// ISO-8601 week as a contiguous ordinal (weeks since the Monday 1970-01-05),
/// so consecutive weeks differ by exactly 1 across year boundaries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Week(pub i64);

fn epoch() -> NaiveDate {
    NaiveDate::from_ymd_opt(1970, 1, 5).expect("valid date")
}

impl Week {
    pub fn from_date(date: NaiveDate) -> Self {
        let monday = date - Duration::days(date.weekday().num_days_from_monday() as i64);
        Week((monday - epoch()).num_days().div_euclid(7))
    }

    pub fn from_iso(iso_year: i32, iso_week: u32) -> Option<Self> {
        NaiveDate::from_isoywd_opt(iso_year, iso_week, Weekday::Mon).map(Self::from_date)
    }

    pub fn monday(self) -> NaiveDate {
        epoch() + Duration::days(self.0 * 7)
    }

    /// `(iso_year, iso_week)`.
    pub fn iso(self) -> (i32, u32) {
        let w = self.monday().iso_week();
        (w.year(), w.week())
    }

    pub fn offset(self, by: i64) -> Self {
        Week(self.0 + by)
    }
}

impl fmt::Display for Week {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (y, w) = self.iso();
        write!(f, "{y}-W{w:02}")
    }
}
