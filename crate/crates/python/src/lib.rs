//! Python bindings. Matrices cross the boundary as row-major nested lists.

use nalgebra::DMatrix;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use sparsevar::var_model::{self, ErrorModel, TimeSeriesPanel, VarCoefficients};
use sparsevar::{eval, irf, Method, MethodConfig, VarError};

fn to_py(e: VarError) -> PyErr {
    match e {
        VarError::InvalidArgument(_) | VarError::Dimension(_) | VarError::Data(_) => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn matrix(rows: &[Vec<f64>]) -> PyResult<DMatrix<f64>> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(PyValueError::new_err("rows must have equal length"));
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn coefficients(lags: &[Vec<Vec<f64>>]) -> PyResult<VarCoefficients> {
    let lags = lags
        .iter()
        .map(|l| matrix(l))
        .collect::<PyResult<Vec<_>>>()?;
    VarCoefficients::new(lags).map_err(to_py)
}

/// Simulates `length` rows of a VAR with lag matrices `lags` and error
/// covariance `sigma`.
#[pyfunction]
#[pyo3(signature = (lags, sigma, length, seed=0, burn_in=var_model::DEFAULT_BURN_IN))]
fn simulate(
    lags: Vec<Vec<Vec<f64>>>,
    sigma: Vec<Vec<f64>>,
    length: usize,
    seed: u64,
    burn_in: usize,
) -> PyResult<Vec<Vec<f64>>> {
    let coef = coefficients(&lags)?;
    let err = ErrorModel::from_sigma(matrix(&sigma)?).map_err(to_py)?;
    let panel = var_model::simulate_var(&coef, &err, length, seed, burn_in).map_err(to_py)?;
    Ok(rows(panel.data()))
}

/// Fits a VAR to `data` (rows are time points). `lags=None` selects the lag
/// order by BIC.
#[pyfunction]
#[pyo3(signature = (data, method="sparse", lags=None))]
fn fit<'py>(
    py: Python<'py>,
    data: Vec<Vec<f64>>,
    method: &str,
    lags: Option<usize>,
) -> PyResult<Bound<'py, PyDict>> {
    let method: Method = method.parse().map_err(to_py)?;
    let panel = TimeSeriesPanel::from_data(matrix(&data)?).map_err(to_py)?;
    let res = method
        .fit(&panel, lags, &MethodConfig::default())
        .map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item("method", method.name())?;
    out.set_item(
        "lags",
        res.coefficients.lags().iter().map(rows).collect::<Vec<_>>(),
    )?;
    out.set_item("sigma", rows(res.error.sigma()))?;
    out.set_item("omega", rows(res.error.omega()))?;
    out.set_item("p", res.selected.p)?;
    out.set_item("lambda1", res.selected.lambda1)?;
    out.set_item("lambda2", res.selected.lambda2)?;
    out.set_item("bic", res.bic)?;
    out.set_item("converged", res.converged)?;
    out.set_item("means", res.means.iter().copied().collect::<Vec<_>>())?;
    Ok(out)
}

/// Generalized impulse responses indexed `[impulse][response][k]` for
/// `k = 0..=horizon`.
#[pyfunction]
#[pyo3(signature = (lags, sigma, horizon=10))]
fn girf(
    lags: Vec<Vec<Vec<f64>>>,
    sigma: Vec<Vec<f64>>,
    horizon: usize,
) -> PyResult<Vec<Vec<Vec<f64>>>> {
    let coef = coefficients(&lags)?;
    let err = ErrorModel::from_sigma(matrix(&sigma)?).map_err(to_py)?;
    let r = irf::true_girf(&coef, &err, horizon).map_err(to_py)?;
    let q = coef.q();
    Ok((0..q)
        .map(|j| {
            (0..q)
                .map(|i| (0..=horizon).map(|k| r.get(j, i, k)).collect())
                .collect()
        })
        .collect())
}

/// Estimation error, true positive rate and true negative rate of `estimate`
/// against `truth`, both given as lists of lag matrices.
#[pyfunction]
fn metrics<'py>(
    py: Python<'py>,
    estimate: Vec<Vec<Vec<f64>>>,
    truth: Vec<Vec<Vec<f64>>>,
) -> PyResult<Bound<'py, PyDict>> {
    let (e, t) = (coefficients(&estimate)?, coefficients(&truth)?);
    let out = PyDict::new(py);
    out.set_item(
        "maee",
        eval::maee(std::slice::from_ref(&e), &t).map_err(to_py)?,
    )?;
    out.set_item("tpr", eval::tpr(&e, &t).map_err(to_py)?)?;
    out.set_item("tnr", eval::tnr(&e, &t).map_err(to_py)?)?;
    Ok(out)
}

/// Mean absolute forecast error over aligned forecast and actual rows.
#[pyfunction]
fn mafe(forecasts: Vec<Vec<f64>>, actuals: Vec<Vec<f64>>) -> PyResult<f64> {
    eval::mafe(&matrix(&forecasts)?, &matrix(&actuals)?).map_err(to_py)
}

#[pymodule]
fn sparsevar_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(girf, m)?)?;
    m.add_function(wrap_pyfunction!(metrics, m)?)?;
    m.add_function(wrap_pyfunction!(mafe, m)?)?;
    Ok(())
}
