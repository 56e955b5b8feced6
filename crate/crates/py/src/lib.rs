//! Python bindings: configs go in as JSON text, reports come back as JSON
//! text and fields as flat lists in grid order.

use std::path::Path;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use fracvar::cli::{self, is_config_error, parse_config_str, Command, RunConfig};
use fracvar::error::Error;
use fracvar::experiments::{minimize_from_default, Setup};
use fracvar::grid::build_grid;

fn to_py(e: Error) -> PyErr {
    if is_config_error(&e) {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

fn json_text<T: serde::Serialize>(value: &T) -> PyResult<String> {
    serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

fn setup(config: &str) -> Result<(RunConfig, Setup), Error> {
    let cfg = parse_config_str(config)?;
    let setup = Setup::new(&cfg.regime())?;
    Ok((cfg, setup))
}

/// The config with every default filled in.
#[pyfunction]
fn normalize_config(config: &str) -> PyResult<String> {
    parse_config_str(config)
        .and_then(|c| c.to_json())
        .map_err(to_py)
}

/// `(λ₁, φ₁)` for the configured domain and order.
#[pyfunction]
fn eigenpair(py: Python<'_>, config: &str) -> PyResult<(f64, Vec<f64>)> {
    py.detach(|| {
        let (_, s) = setup(config)?;
        Ok((s.lambda1(), s.phi1().values().to_vec()))
    })
    .map_err(to_py)
}

/// Cone minimization from the default start; returns the report and the solution.
#[pyfunction]
fn solve(py: Python<'_>, config: &str) -> PyResult<(String, Vec<f64>)> {
    let report = py
        .detach(|| {
            let (cfg, s) = setup(config)?;
            minimize_from_default(&s, &s.model, &cfg.solver)
        })
        .map_err(to_py)?;
    Ok((json_text(&report)?, report.solution.values().to_vec()))
}

/// Run a CLI command into `out`; returns the manifest.
#[pyfunction]
fn run(py: Python<'_>, command: &str, config: &str, out: &str) -> PyResult<String> {
    let manifest = py
        .detach(|| {
            let command: Command = command.parse()?;
            let cfg = parse_config_str(config)?;
            cli::run_command(&cfg, command, Path::new(out))
        })
        .map_err(to_py)?;
    json_text(&manifest)
}

/// Node coordinates, one `[x]` or `[x, y]` per node.
#[pyfunction]
fn nodes(config: &str) -> PyResult<Vec<Vec<f64>>> {
    let cfg = parse_config_str(config).map_err(to_py)?;
    let grid = build_grid(cfg.domain).map_err(to_py)?;
    Ok((0..grid.len())
        .map(|i| grid.coord(i)[..grid.dim()].to_vec())
        .collect())
}

/// Values of an FVFD file written on the configured grid.
#[pyfunction]
fn read_field(config: &str, path: &str) -> PyResult<Vec<f64>> {
    let cfg = parse_config_str(config).map_err(to_py)?;
    let grid = build_grid(cfg.domain).map_err(to_py)?;
    let field = cli::read_field(path, &grid).map_err(to_py)?;
    Ok(field.values().to_vec())
}

#[pymodule]
fn fracvar_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(normalize_config, m)?)?;
    m.add_function(wrap_pyfunction!(eigenpair, m)?)?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(nodes, m)?)?;
    m.add_function(wrap_pyfunction!(read_field, m)?)?;
    Ok(())
}
