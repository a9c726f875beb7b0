use serde::{Deserialize, Serialize};

use super::{EvalError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Benefit,
    Cost,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriteriaMatrix {
    pub rows: Vec<String>,
    pub columns: Vec<(String, Direction)>,
    /// `values[row][column]`.
    pub values: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl CriteriaMatrix {
    pub fn equal_weights(
        rows: Vec<String>,
        columns: Vec<(String, Direction)>,
        values: Vec<Vec<f64>>,
    ) -> Self {
        let w = 1.0 / columns.len().max(1) as f64;
        let weights = vec![w; columns.len()];
        Self {
            rows,
            columns,
            values,
            weights,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows.len() < 2 || self.columns.is_empty() {
            return Err(EvalError::Invalid(
                "need at least 2 alternatives and 1 criterion".into(),
            ));
        }
        if self.values.len() != self.rows.len() {
            return Err(EvalError::Invalid(format!(
                "{} rows named, {} given",
                self.rows.len(),
                self.values.len()
            )));
        }
        for (name, row) in self.rows.iter().zip(&self.values) {
            if row.len() != self.columns.len() || row.iter().any(|v| !v.is_finite()) {
                return Err(EvalError::Invalid(format!("row '{name}' has missing cells")));
            }
        }
        if self.weights.len() != self.columns.len()
            || self.weights.iter().any(|w| !w.is_finite() || *w < 0.0)
            || (self.weights.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return Err(EvalError::Invalid(
                "weights must be non-negative, one per criterion, summing to 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedAlternative {
    pub rank: usize,
    pub name: String,
    pub closeness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopsisReport {
    pub criteria: Vec<String>,
    pub weights: Vec<f64>,
    pub directions: Vec<Direction>,
    /// In input row order.
    pub closeness: Vec<f64>,
    /// Best first; equal closeness ordered by name.
    pub ranking: Vec<RankedAlternative>,
}

impl TopsisReport {
    pub fn rank_of(&self, name: &str) -> Option<usize> {
        self.ranking.iter().find(|r| r.name == name).map(|r| r.rank)
    }
}

/// Vector-normalize each column, weight it, and score each row by
/// `d- / (d+ + d-)` against the ideal and anti-ideal points. A row sitting
/// on the ideal point scores 1.
pub fn topsis_rank(m: &CriteriaMatrix) -> Result<TopsisReport> {
    m.validate()?;
    let (r, c) = (m.rows.len(), m.columns.len());
    let mut v = vec![vec![0.0; c]; r];
    for j in 0..c {
        let norm = (0..r).map(|i| m.values[i][j].powi(2)).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(EvalError::ZeroNorm(m.columns[j].0.clone()));
        }
        for i in 0..r {
            v[i][j] = m.weights[j] * m.values[i][j] / norm;
        }
    }
    let mut ideal = vec![0.0; c];
    let mut anti = vec![0.0; c];
    for j in 0..c {
        let col = (0..r).map(|i| v[i][j]);
        let (lo, hi) = col.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| {
            (a.min(x), b.max(x))
        });
        (ideal[j], anti[j]) = match m.columns[j].1 {
            Direction::Benefit => (hi, lo),
            Direction::Cost => (lo, hi),
        };
    }
    let dist = |row: &[f64], p: &[f64]| {
        row.iter().zip(p).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
    };
    let closeness: Vec<f64> = v
        .iter()
        .map(|row| {
            let dp = dist(row, &ideal);
            let dm = dist(row, &anti);
            if dp == 0.0 {
                1.0
            } else {
                dm / (dp + dm)
            }
        })
        .collect();
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&a, &b| {
        closeness[b]
            .total_cmp(&closeness[a])
            .then_with(|| m.rows[a].cmp(&m.rows[b]))
    });
    Ok(TopsisReport {
        criteria: m.columns.iter().map(|(n, _)| n.clone()).collect(),
        weights: m.weights.clone(),
        directions: m.columns.iter().map(|(_, d)| *d).collect(),
        ranking: order
            .iter()
            .enumerate()
            .map(|(k, &i)| RankedAlternative {
                rank: k + 1,
                name: m.rows[i].clone(),
                closeness: closeness[i],
            })
            .collect(),
        closeness,
    })
}
