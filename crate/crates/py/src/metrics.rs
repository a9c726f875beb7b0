use muqar_core::eval::{self, CriteriaMatrix, Direction};
use pyo3::prelude::*;

use crate::err;

#[pyfunction]
pub fn mae(pred: Vec<f64>, truth: Vec<f64>) -> PyResult<f64> {
    eval::mae(&pred, &truth).map_err(err)
}

#[pyfunction]
pub fn wape(pred: Vec<f64>, truth: Vec<f64>) -> PyResult<f64> {
    eval::wape(&pred, &truth).map_err(err)
}

#[pyfunction]
pub fn pcc(pred: Vec<f64>, truth: Vec<f64>) -> PyResult<f64> {
    eval::pcc(&pred, &truth).map_err(err)
}

/// Share of values on the same side of 0.5 as the truth.
#[pyfunction]
pub fn binary_accuracy(pred: Vec<f64>, truth: Vec<f64>) -> PyResult<f64> {
    eval::binary_accuracy(&pred, &truth).map_err(err)
}

#[pyfunction]
pub fn auc(scores: Vec<f64>, labels: Vec<bool>) -> PyResult<f64> {
    eval::auc(&scores, &labels).map_err(err)
}

/// Rank alternatives. `columns` holds `(name, "cost" | "benefit")` pairs;
/// weights default to equal. Returns `(rank, name, closeness)`, best first.
#[pyfunction]
#[pyo3(signature = (rows, columns, values, weights=None))]
pub fn topsis(
    rows: Vec<String>,
    columns: Vec<(String, String)>,
    values: Vec<Vec<f64>>,
    weights: Option<Vec<f64>>,
) -> PyResult<Vec<(usize, String, f64)>> {
    let columns = columns
        .into_iter()
        .map(|(name, dir)| {
            let d = match dir.as_str() {
                "cost" => Direction::Cost,
                "benefit" => Direction::Benefit,
                other => return Err(err(format!("column '{name}': unknown direction '{other}'"))),
            };
            Ok((name, d))
        })
        .collect::<PyResult<Vec<_>>>()?;
    let mut m = CriteriaMatrix::equal_weights(rows, columns, values);
    if let Some(w) = weights {
        m.weights = w;
    }
    let report = eval::topsis_rank(&m).map_err(err)?;
    Ok(report
        .ranking
        .into_iter()
        .map(|r| (r.rank, r.name, r.closeness))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn topsis_rejects_unknown_direction() {
        let cols = vec![("m".to_string(), "lower".to_string())];
        assert!(topsis(vec!["a".into(), "b".into()], cols, vec![vec![1.0], vec![2.0]], None).is_err());
    }

    #[test]
    fn topsis_honours_explicit_weights() {
        let cols = vec![
            ("cost".to_string(), "cost".to_string()),
            ("gain".to_string(), "benefit".to_string()),
        ];
        let values = vec![vec![1.0, 1.0], vec![2.0, 3.0]];
        let by_cost = topsis(vec!["a".into(), "b".into()], cols.clone(), values.clone(), Some(vec![1.0, 0.0])).unwrap();
        let by_gain = topsis(vec!["a".into(), "b".into()], cols, values, Some(vec![0.0, 1.0])).unwrap();
        assert_eq!(by_cost[0].1, "a");
        assert_eq!(by_gain[0].1, "b");
    }
}
