//! Python bindings: taxonomy, synthetic worlds, trend stores, training,
//! forecasting, metrics and TOPSIS ranking.

use std::fmt::Display;

use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

mod data;
mod metrics;
mod model;

pub use data::{PyDataset, PyTaxonomy, PyTrendStore, PyWorld};
pub use model::PyModel;

create_exception!(muqar, MuqarError, PyValueError);

pub(crate) fn err(e: impl Display) -> PyErr {
    MuqarError::new_err(e.to_string())
}

#[pymodule]
pub fn muqar(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add("MuqarError", m.py().get_type::<MuqarError>())?;
    m.add_class::<PyTaxonomy>()?;
    m.add_class::<PyWorld>()?;
    m.add_class::<PyTrendStore>()?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(model::train, m)?)?;
    m.add_function(wrap_pyfunction!(metrics::mae, m)?)?;
    m.add_function(wrap_pyfunction!(metrics::wape, m)?)?;
    m.add_function(wrap_pyfunction!(metrics::pcc, m)?)?;
    m.add_function(wrap_pyfunction!(metrics::binary_accuracy, m)?)?;
    m.add_function(wrap_pyfunction!(metrics::auc, m)?)?;
    m.add_function(wrap_pyfunction!(metrics::topsis, m)?)?;
    Ok(())
}
