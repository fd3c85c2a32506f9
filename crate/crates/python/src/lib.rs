//! Python bindings: Mittag-Leffler evaluation, resolvent tables, CQ weights,
//! deterministic runs and strong-error studies.

use std::collections::BTreeMap;

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;

use volterra::harness::{self, ExperimentConfig, StudyResult};
use volterra::model::{validate_noise_regularity, KernelSpec, Nonlinearity, ProblemInstance, Spectrum};
use volterra::resolvent::{build_resolvent_table, TimeGrid};
use volterra::solvers::{self, Method};
use volterra::special_functions::{ml_eval, MlParams};
use volterra::Error;

create_exception!(volterra_py, VolterraError, PyException);
create_exception!(volterra_py, NumericalError, VolterraError);

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Config(_) | Error::InvalidParameter(_) | Error::Domain { .. } | Error::InsufficientLevels(_) => {
            PyValueError::new_err(e.to_string())
        }
        e if e.is_numerical() => NumericalError::new_err(e.to_string()),
        e => VolterraError::new_err(e.to_string()),
    }
}

fn parse_method(name: &str) -> PyResult<Method> {
    match name {
        "mlei" => Ok(Method::Mlei),
        "becq" => Ok(Method::Becq),
        _ => Err(PyValueError::new_err(format!("unknown method {name:?}, expected \"mlei\" or \"becq\""))),
    }
}

fn parse_nonlinearity(name: &str) -> PyResult<Nonlinearity> {
    match name {
        "zero" => Ok(Nonlinearity::Zero),
        "sin" => Ok(Nonlinearity::Sine),
        "rational" => Ok(Nonlinearity::Rational { scale: 5.0 }),
        _ => Err(PyValueError::new_err(format!("unknown nonlinearity {name:?}"))),
    }
}

/// E_{a,b}(x) for 0 < a < 2, b >= 1 and real x <= 0 (or |x| <= 1).
#[pyfunction]
fn mittag_leffler(py: Python<'_>, a: f64, b: f64, x: f64) -> PyResult<f64> {
    py.detach(|| MlParams::new(a, b).and_then(|p| ml_eval(p, x))).map_err(to_py)
}

/// Resolvent rows (s, w) for each eigenvalue on the uniform grid of `steps` steps.
#[pyfunction]
#[pyo3(signature = (rho, lambdas, steps, t_end = 1.0))]
fn resolvent_table(
    py: Python<'_>,
    rho: f64,
    lambdas: Vec<f64>,
    steps: usize,
    t_end: f64,
) -> PyResult<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    py.detach(|| {
        let kernel = KernelSpec::new(rho)?;
        let grid = TimeGrid::new(t_end, steps)?;
        let table = build_resolvent_table(&Spectrum::new(lambdas, None)?, &kernel, &grid)?;
        let s = (0..table.modes()).map(|k| table.s(k).to_vec()).collect();
        let w = (0..table.modes()).map(|k| table.w(k).to_vec()).collect();
        Ok((s, w))
    })
    .map_err(to_py)
}

/// Convolution-quadrature weights ω_0..ω_steps for the kernel t^{α-1}/Γ(α).
#[pyfunction]
fn cq_weights(alpha: f64, dt: f64, steps: usize) -> PyResult<Vec<f64>> {
    let w = solvers::cq_weights(alpha, dt, steps).map_err(to_py)?;
    Ok((0..=steps).map(|i| w.omega(i)).collect())
}

/// Noise-free trajectory; returns U[m][k] at the grid times.
#[pyfunction]
#[pyo3(signature = (rho, lambdas, u0, steps, method = "mlei", nonlinearity = "sin", t_end = 1.0))]
#[allow(clippy::too_many_arguments)]
fn deterministic_run(
    py: Python<'_>,
    rho: f64,
    lambdas: Vec<f64>,
    u0: Vec<f64>,
    steps: usize,
    method: &str,
    nonlinearity: &str,
    t_end: f64,
) -> PyResult<Vec<Vec<f64>>> {
    let method = parse_method(method)?;
    let nl = parse_nonlinearity(nonlinearity)?;
    py.detach(|| {
        let inst = ProblemInstance::new(Spectrum::new(lambdas, None)?, KernelSpec::new(rho)?, nl, Some(u0), t_end)?;
        let grid = TimeGrid::new(t_end, steps)?;
        Ok(solvers::deterministic_run(&inst, method, &grid)?.u)
    })
    .map_err(to_py)
}

/// Regularity report for noise with covariance eigenvalues `mus` on the given spectrum.
#[pyfunction]
fn noise_regularity(rho: f64, lambdas: Vec<f64>, mus: Vec<f64>) -> PyResult<BTreeMap<String, Py<PyAny>>> {
    let report = Spectrum::new(lambdas, Some(mus))
        .and_then(|sp| validate_noise_regularity(&sp, &KernelSpec::new(rho)?))
        .map_err(to_py)?;
    Python::attach(|py| {
        let mut d = BTreeMap::new();
        d.insert("beta_estimate".into(), report.beta_estimate.into_pyobject(py)?.into_any().unbind());
        d.insert("trace".into(), report.trace.into_pyobject(py)?.into_any().unbind());
        d.insert(
            "predicted_temporal_rate".into(),
            report.predicted_temporal_rate.into_pyobject(py)?.into_any().unbind(),
        );
        d.insert("notes".into(), report.notes.into_pyobject(py)?.into_any().unbind());
        Ok(d)
    })
}

/// A parsed and validated experiment configuration.
#[pyclass(name = "Experiment", frozen)]
struct PyExperiment {
    cfg: ExperimentConfig,
}

#[pymethods]
impl PyExperiment {
    #[new]
    fn new(toml: &str) -> PyResult<Self> {
        Ok(PyExperiment {
            cfg: ExperimentConfig::from_toml_str(toml).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn from_file(path: &str) -> PyResult<Self> {
        Ok(PyExperiment {
            cfg: ExperimentConfig::from_file(path).map_err(to_py)?,
        })
    }

    #[getter]
    fn hash(&self) -> String {
        self.cfg.hash()
    }

    #[getter]
    fn rho(&self) -> f64 {
        self.cfg.instance.rho
    }

    /// Run the study and return a `StudyResult`.
    fn run(&self, py: Python<'_>) -> PyResult<PyStudyResult> {
        let result = py.detach(|| harness::run_strong_error_study(&self.cfg)).map_err(to_py)?;
        Ok(PyStudyResult { result })
    }

    /// Run the study and write errors.csv, slopes.csv and meta.json into `out_dir`.
    fn run_to(&self, py: Python<'_>, out_dir: &str) -> PyResult<Vec<String>> {
        py.detach(|| {
            let result = harness::run_strong_error_study(&self.cfg)?;
            harness::write_study_outputs(std::path::Path::new(out_dir), &self.cfg, &result)
        })
        .map(|paths| paths.iter().map(|p| p.display().to_string()).collect())
        .map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!("Experiment(rho={}, hash={})", self.cfg.instance.rho, &self.cfg.hash()[..12])
    }
}

#[pyclass(name = "StudyResult", frozen)]
struct PyStudyResult {
    result: StudyResult,
}

#[pymethods]
impl PyStudyResult {
    #[getter]
    fn metric(&self) -> &'static str {
        self.result.primary.as_str()
    }

    #[getter]
    fn sampler(&self) -> &'static str {
        self.result.sampler.as_str()
    }

    #[getter]
    fn notes(&self) -> Vec<String> {
        self.result.notes.clone()
    }

    /// Rows (method, steps, dt, strong_error, stderr) for the configured metric,
    /// or for `metric` ("final_time" or "sup_over_grid").
    #[pyo3(signature = (metric = None))]
    fn errors(&self, metric: Option<&str>) -> PyResult<Vec<(String, usize, f64, f64, f64)>> {
        let table = match metric {
            None => self.result.table(),
            Some(name) => self
                .result
                .tables
                .values()
                .find(|t| t.metric.as_str() == name)
                .ok_or_else(|| PyValueError::new_err(format!("unknown metric {name:?}")))?,
        };
        Ok(table
            .rows
            .iter()
            .map(|r| (r.method.to_string(), r.steps, r.dt, r.strong_error, r.stderr))
            .collect())
    }

    /// method -> (slope, ci_lo, ci_hi), or None when no fit was possible.
    fn slopes(&self) -> BTreeMap<String, Option<(f64, f64, f64)>> {
        self.result
            .table()
            .slopes
            .iter()
            .map(|(m, f)| (m.to_string(), f.map(|f| (f.slope, f.ci_lo, f.ci_hi))))
            .collect()
    }

    fn __repr__(&self) -> String {
        let slopes: Vec<String> = self
            .result
            .table()
            .slopes
            .iter()
            .map(|(m, f)| match f {
                Some(f) => format!("{m}={:.3}", f.slope),
                None => format!("{m}=None"),
            })
            .collect();
        format!("StudyResult({}, {})", self.metric(), slopes.join(", "))
    }
}

#[pymodule]
fn volterra_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("VolterraError", m.py().get_type::<VolterraError>())?;
    m.add("NumericalError", m.py().get_type::<NumericalError>())?;
    m.add_function(wrap_pyfunction!(mittag_leffler, m)?)?;
    m.add_function(wrap_pyfunction!(resolvent_table, m)?)?;
    m.add_function(wrap_pyfunction!(cq_weights, m)?)?;
    m.add_function(wrap_pyfunction!(deterministic_run, m)?)?;
    m.add_function(wrap_pyfunction!(noise_regularity, m)?)?;
    m.add_class::<PyExperiment>()?;
    m.add_class::<PyStudyResult>()?;
    Ok(())
}
