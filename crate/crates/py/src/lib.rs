//! Python bindings. The `api` functions take and return JSON text so they
//! can be exercised from Rust without an interpreter; the `python` feature
//! wraps them in a `saddle_scout_py` extension module.

pub mod api {
    use std::path::Path;

    use saddle_scout::config::{self, RunConfig};
    use saddle_scout::potentials;
    use saddle_scout::runner;
    use saddle_scout::spectral::min_two_eigpairs;
    use saddle_scout::Error;

    pub fn potential_names() -> Vec<String> {
        potentials::REGISTRY
            .iter()
            .map(|r| r.0.to_string())
            .collect()
    }

    pub fn preset_json(name: &str) -> Result<String, Error> {
        Ok(config::preset(name)?.to_json())
    }

    /// Value and gradient of a registered potential.
    pub fn evaluate(name: &str, x: &[f64]) -> Result<(f64, Vec<f64>), Error> {
        let pot = potentials::by_name(name, None)?;
        pot.validate(x)?;
        Ok((pot.value(x), pot.gradient_vec(x)))
    }

    /// `(lambda1, lambda2, v1)` after zero-mode deflation.
    pub fn lowest_modes(name: &str, x: &[f64]) -> Result<(f64, f64, Vec<f64>), Error> {
        let pot = potentials::by_name(name, None)?;
        pot.validate(x)?;
        let c = min_two_eigpairs(pot.as_ref(), x)?;
        Ok((c.lambda1, c.lambda2, c.v1))
    }

    /// Runs `sspd`, `search`, `pde` or `bench` and returns the summary as JSON.
    pub fn run(command: &str, config_json: &str, out: &str) -> Result<String, Error> {
        let cfg = RunConfig::from_json(config_json)?;
        let out = Path::new(out);
        let summary = match command {
            "sspd" => serde_json::to_string(&runner::cmd_sspd(&cfg, out)?)?,
            "search" => serde_json::to_string(&runner::cmd_search(&cfg, out)?.0)?,
            "pde" => serde_json::to_string(&runner::cmd_pde(&cfg, out)?)?,
            "bench" => serde_json::to_string(&runner::cmd_bench(&cfg, out)?)?,
            other => return Err(Error::Config(format!("unknown command '{other}'"))),
        };
        Ok(summary)
    }
}

#[cfg(feature = "python")]
mod bindings {
    use pyo3::exceptions::{PyRuntimeError, PyValueError};
    use pyo3::prelude::*;

    use super::api;

    fn to_py(e: saddle_scout::Error) -> PyErr {
        if e.exit_code() == 2 {
            PyValueError::new_err(e.to_string())
        } else {
            PyRuntimeError::new_err(e.to_string())
        }
    }

    #[pyfunction]
    fn potentials() -> Vec<String> {
        api::potential_names()
    }

    #[pyfunction]
    fn preset(name: &str) -> PyResult<String> {
        api::preset_json(name).map_err(to_py)
    }

    #[pyfunction]
    fn evaluate(name: &str, x: Vec<f64>) -> PyResult<(f64, Vec<f64>)> {
        api::evaluate(name, &x).map_err(to_py)
    }

    #[pyfunction]
    fn lowest_modes(name: &str, x: Vec<f64>) -> PyResult<(f64, f64, Vec<f64>)> {
        api::lowest_modes(name, &x).map_err(to_py)
    }

    /// Releases the interpreter lock while the run is in progress.
    #[pyfunction]
    fn run(py: Python<'_>, command: &str, config_json: &str, out: &str) -> PyResult<String> {
        let (command, config_json, out) = (
            command.to_string(),
            config_json.to_string(),
            out.to_string(),
        );
        py.detach(move || api::run(&command, &config_json, &out))
            .map_err(to_py)
    }

    #[pymodule]
    fn saddle_scout_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
        m.add_function(wrap_pyfunction!(potentials, m)?)?;
        m.add_function(wrap_pyfunction!(preset, m)?)?;
        m.add_function(wrap_pyfunction!(evaluate, m)?)?;
        m.add_function(wrap_pyfunction!(lowest_modes, m)?)?;
        m.add_function(wrap_pyfunction!(run, m)?)?;
        Ok(())
    }
}
