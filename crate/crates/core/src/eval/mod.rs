//! Metrics, the chronological new-item split and TOPSIS ranking.

mod split;
mod topsis;

pub use split::{chronological_split, Split};
pub use topsis::{topsis_rank, CriteriaMatrix, Direction, TopsisReport};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("length mismatch: {0} vs {1}")]
    Length(usize, usize),
    #[error("{0} needs at least {1} samples")]
    TooFew(&'static str, usize),
    #[error("wape undefined: truths sum to zero")]
    WapeUndefined,
    #[error("pcc undefined: {0} has zero variance")]
    PccUndefined(&'static str),
    #[error("auc undefined: labels contain a single class")]
    AucUndefined,
    #[error("column '{0}' has zero norm")]
    ZeroNorm(String),
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, EvalError>;

/// Threshold separating popular from unpopular on normalized popularity.
pub const BINARY_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionMetrics {
    pub mae: f64,
    pub wape: f64,
    pub pcc: f64,
    pub binary_accuracy: f64,
}

fn check_len(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(EvalError::Length(a.len(), b.len()));
    }
    Ok(())
}

pub fn mae(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_len(pred, truth)?;
    if pred.is_empty() {
        return Err(EvalError::TooFew("mae", 1));
    }
    Ok(pred.iter().zip(truth).map(|(p, t)| (p - t).abs()).sum::<f64>() / pred.len() as f64)
}

/// `Σ|e| / Σ truth`.
pub fn wape(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_len(pred, truth)?;
    let denom: f64 = truth.iter().sum();
    if denom == 0.0 {
        return Err(EvalError::WapeUndefined);
    }
    Ok(pred.iter().zip(truth).map(|(p, t)| (p - t).abs()).sum::<f64>() / denom)
}

pub fn pcc(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_len(pred, truth)?;
    let m = pred.len();
    if m < 2 {
        return Err(EvalError::TooFew("pcc", 2));
    }
    let mp = pred.iter().sum::<f64>() / m as f64;
    let mt = truth.iter().sum::<f64>() / m as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (p, t) in pred.iter().zip(truth) {
        let (dx, dy) = (p - mp, t - mt);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if syy == 0.0 {
        return Err(EvalError::PccUndefined("truth"));
    }
    if sxx == 0.0 {
        return Err(EvalError::PccUndefined("prediction"));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Agreement of `pred >= 0.5` with `truth >= 0.5`.
pub fn binary_accuracy(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_len(pred, truth)?;
    if pred.is_empty() {
        return Err(EvalError::TooFew("binary accuracy", 1));
    }
    let hits = pred
        .iter()
        .zip(truth)
        .filter(|(p, t)| (**p >= BINARY_THRESHOLD) == (**t >= BINARY_THRESHOLD))
        .count();
    Ok(hits as f64 / pred.len() as f64)
}

pub fn regression_metrics(pred: &[f64], truth: &[f64]) -> Result<RegressionMetrics> {
    Ok(RegressionMetrics {
        mae: mae(pred, truth)?,
        wape: wape(pred, truth)?,
        pcc: pcc(pred, truth)?,
        binary_accuracy: binary_accuracy(pred, truth)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub accuracy: f64,
    pub auc: f64,
}

/// Rank-statistic AUC: average ranks over ties, so a tied (pos, neg) pair
/// counts 0.5.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(EvalError::Length(scores.len(), labels.len()));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(EvalError::AucUndefined);
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        // 1-based average rank of the tie block
        let avg = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += idx[i..=j].iter().filter(|&&k| labels[k]).count() as f64 * avg;
        i = j + 1;
    }
    let (p, n) = (pos as f64, neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

pub fn classification_metrics(scores: &[f64], labels: &[bool]) -> Result<ClassificationMetrics> {
    if scores.is_empty() {
        return Err(EvalError::TooFew("accuracy", 1));
    }
    let auc = auc(scores, labels)?;
    let hits = scores
        .iter()
        .zip(labels)
        .filter(|(s, l)| (**s >= BINARY_THRESHOLD) == **l)
        .count();
    Ok(ClassificationMetrics {
        accuracy: hits as f64 / scores.len() as f64,
        auc,
    })
}

/// Exported evaluation result. Binary accuracy always uses the 0.5 threshold
/// on normalized popularity; `binary_threshold` records it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub dataset: String,
    pub model_version: String,
    pub samples: usize,
    pub mae: Option<f64>,
    pub wape: Option<f64>,
    pub pcc: Option<f64>,
    pub binary_accuracy: Option<f64>,
    pub accuracy: Option<f64>,
    pub auc: Option<f64>,
    pub binary_threshold: f64,
}

impl MetricReport {
    /// Fill every metric that is defined for the inputs; undefined ones
    /// (e.g. pcc on constant truths) are left empty.
    pub fn regression(dataset: &str, model_version: &str, pred: &[f64], truth: &[f64]) -> Result<Self> {
        Ok(Self {
            dataset: dataset.into(),
            model_version: model_version.into(),
            samples: pred.len(),
            mae: Some(mae(pred, truth)?),
            wape: wape(pred, truth).ok(),
            pcc: pcc(pred, truth).ok(),
            binary_accuracy: Some(binary_accuracy(pred, truth)?),
            accuracy: None,
            auc: None,
            binary_threshold: BINARY_THRESHOLD,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_prediction() {
        let t = [0.1, 0.6, 0.9];
        let m = regression_metrics(&t, &t).unwrap();
        assert_eq!((m.mae, m.wape, m.binary_accuracy), (0.0, 0.0, 1.0));
        assert!((m.pcc - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hand_arithmetic() {
        let m = regression_metrics(&[0.2, 0.8], &[0.4, 0.6]).unwrap();
        assert!((m.mae - 0.2).abs() < 1e-12);
        assert!((m.wape - 0.4).abs() < 1e-12);
        assert_eq!(m.binary_accuracy, 1.0);
        let t = [0.0, 0.5, 1.0];
        let p: Vec<f64> = t.iter().map(|v| 1.0 - v).collect();
        assert!((pcc(&p, &t).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn undefined_cases() {
        assert_eq!(wape(&[0.1], &[0.0]), Err(EvalError::WapeUndefined));
        assert_eq!(pcc(&[0.1, 0.2], &[0.3, 0.3]), Err(EvalError::PccUndefined("truth")));
        assert_eq!(auc(&[0.1, 0.2], &[true, true]), Err(EvalError::AucUndefined));
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&[0.1, 0.4, 0.35, 0.8], &[false, false, true, true]).unwrap(), 0.75);
        assert_eq!(auc(&[0.3; 4], &[false, true, false, true]).unwrap(), 0.5);
        assert_eq!(auc(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]).unwrap(), 1.0);
    }
}
