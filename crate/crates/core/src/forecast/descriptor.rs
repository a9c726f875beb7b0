use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use super::config::Hemisphere;
use super::{ForecastError, Result};
use crate::taxonomy::LabelSet;
use crate::trend::{Demographic, Week};

/// Target date expanded to the four granularities the feature branch embeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemporalIndex {
    /// 1..=366
    pub day_of_year: u32,
    /// ISO week, 1..=53
    pub week: u32,
    /// 1..=12
    pub month: u32,
    /// Meteorological: 0 winter, 1 spring, 2 summer, 3 autumn.
    pub season: u32,
}

impl TemporalIndex {
    pub const VOCAB: [usize; 4] = [366, 53, 12, 4];

    pub fn from_date(date: NaiveDate, hemisphere: Hemisphere) -> Self {
        let month = date.month();
        let north = (month % 12) / 3;
        let season = match hemisphere {
            Hemisphere::Northern => north,
            Hemisphere::Southern => (north + 2) % 4,
        };
        Self {
            day_of_year: date.ordinal(),
            week: date.iso_week().week(),
            month,
            season,
        }
    }

    /// Zero-based indices into the four embedding tables.
    pub fn indices(&self) -> [usize; 4] {
        [
            self.day_of_year as usize - 1,
            self.week as usize - 1,
            self.month as usize - 1,
            self.season as usize,
        ]
    }
}

/// One garment to forecast.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GarmentDescriptor {
    pub features: Vec<f64>,
    pub labels: LabelSet,
    pub target_date: NaiveDate,
    pub demographic: Option<Demographic>,
}

impl GarmentDescriptor {
    pub fn target_week(&self) -> Week {
        Week::from_date(self.target_date)
    }

    pub fn validate(&self, feature_dim: usize) -> Result<()> {
        if self.features.len() != feature_dim {
            return Err(ForecastError::Dimension {
                what: "visual features",
                expected: feature_dim,
                got: self.features.len(),
            });
        }
        if self.features.iter().any(|v| !v.is_finite()) {
            return Err(ForecastError::Input("visual features must be finite".into()));
        }
        Ok(())
    }
}
