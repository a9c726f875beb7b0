//! Ranking metrics for label prediction.
//!
//! Ties in scores are broken toward the lower class index, so the ranking of
//! a score vector is fully determined.

use super::HlsError;

/// Class indices ordered by descending score, ties by ascending index.
pub fn rank_desc(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx
}

/// Indices of the `k` highest scores.
pub fn top_k(scores: &[f64], k: usize) -> Vec<usize> {
    let mut r = rank_desc(scores);
    r.truncate(k);
    r
}

/// Fraction of samples whose true class is among the `k` highest scores.
pub fn topk_accuracy<P: AsRef<[f64]>>(
    predictions: &[P],
    truths: &[usize],
    k: usize,
) -> Result<f64, HlsError> {
    if k == 0 {
        return Err(HlsError::Invalid("k must be at least 1".into()));
    }
    if predictions.is_empty() {
        return Err(HlsError::Invalid("empty prediction set".into()));
    }
    if predictions.len() != truths.len() {
        return Err(HlsError::Invalid(format!(
            "{} predictions but {} truths",
            predictions.len(),
            truths.len()
        )));
    }
    let mut hits = 0usize;
    for (p, &t) in predictions.iter().zip(truths) {
        let p = p.as_ref();
        if t >= p.len() {
            return Err(HlsError::Invalid(format!(
                "truth index {t} outside {} classes",
                p.len()
            )));
        }
        if top_k(p, k).contains(&t) {
            hits += 1;
        }
    }
    Ok(hits as f64 / predictions.len() as f64)
}

/// Mean over samples of `|top-k ∩ truth| / |truth|`. Samples with an empty
/// truth set are skipped; if every sample is empty the metric is undefined.
pub fn recall_at_k<P: AsRef<[f64]>, T: AsRef<[usize]>>(
    predictions: &[P],
    truths: &[T],
    k: usize,
) -> Result<f64, HlsError> {
    if k == 0 {
        return Err(HlsError::Invalid("k must be at least 1".into()));
    }
    if predictions.len() != truths.len() {
        return Err(HlsError::Invalid(format!(
            "{} predictions but {} truths",
            predictions.len(),
            truths.len()
        )));
    }
    let mut total = 0.0;
    let mut counted = 0usize;
    for (p, t) in predictions.iter().zip(truths) {
        let t = t.as_ref();
        if t.is_empty() {
            continue;
        }
        let top = top_k(p.as_ref(), k);
        let hit = t.iter().filter(|x| top.contains(x)).count();
        total += hit as f64 / t.len() as f64;
        counted += 1;
    }
    if counted == 0 {
        return Err(HlsError::Invalid("every truth set is empty".into()));
    }
    Ok(total / counted as f64)
}
