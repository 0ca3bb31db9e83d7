//! Python module `hybridsos`.
//!
//! Structured results (outcomes, sweeps, probe reports) cross the boundary as
//! plain dicts built from their JSON form.

use std::path::PathBuf;

use nalgebra::DMatrix;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;
use serde::Serialize;

use hybridsos::certificate;
use hybridsos::io::{self as hio, FileError};
use hybridsos::pareto::{self, SweepConfig, ZSource};
use hybridsos::{Exponent, Family, MomentVector};

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn file_err(e: FileError) -> PyErr {
    PyValueError::new_err(format!("[{}] {e}", e.code()))
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(err)?;
    py.import("json")?.call_method1("loads", (text,))
}

fn parse_family(family: &str) -> PyResult<Family> {
    family.parse().map_err(err)
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn from_rows(data: &[Vec<f64>]) -> PyResult<DMatrix<f64>> {
    let n = data.len();
    if data.iter().any(|r| r.len() != n) {
        return Err(PyValueError::new_err("matrix must be square"));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| data[i][j]))
}

#[pyclass(name = "Polynomial", module = "hybridsos", from_py_object)]
#[derive(Clone)]
struct PyPolynomial {
    inner: hybridsos::Polynomial,
}

#[pymethods]
impl PyPolynomial {
    /// `Polynomial(nvars, [(exponents, coeff), ...])`
    #[new]
    #[pyo3(signature = (nvars, terms = Vec::new()))]
    fn new(nvars: usize, terms: Vec<(Vec<u32>, f64)>) -> PyResult<Self> {
        let inner = hybridsos::Polynomial::try_from_terms(
            nvars,
            terms.into_iter().map(|(e, c)| (Exponent::new(e), c)),
        )
        .map_err(err)?;
        Ok(PyPolynomial { inner })
    }

    #[staticmethod]
    fn var(nvars: usize, i: usize) -> PyResult<Self> {
        if i >= nvars {
            return Err(PyValueError::new_err(format!("variable index {i} out of range for {nvars} variables")));
        }
        Ok(PyPolynomial {
            inner: hybridsos::Polynomial::var(nvars, i),
        })
    }

    #[staticmethod]
    fn constant(nvars: usize, c: f64) -> Self {
        PyPolynomial {
            inner: hybridsos::Polynomial::constant(nvars, c),
        }
    }

    #[getter]
    fn nvars(&self) -> usize {
        self.inner.nvars()
    }

    #[getter]
    fn degree(&self) -> u32 {
        self.inner.degree()
    }

    fn terms(&self) -> Vec<(Vec<u32>, f64)> {
        self.inner.terms().map(|(e, c)| (e.entries().to_vec(), c)).collect()
    }

    fn evaluate(&self, x: Vec<f64>) -> PyResult<f64> {
        self.inner.evaluate(&x).map_err(err)
    }

    fn gradient(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(self.inner.gradient(&x).map_err(err)?.iter().copied().collect())
    }

    fn hessian(&self, x: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
        Ok(rows(&self.inner.hessian(&x).map_err(err)?))
    }

    fn __call__(&self, x: Vec<f64>) -> PyResult<f64> {
        self.evaluate(x)
    }

    fn __add__(&self, other: &Self) -> PyResult<Self> {
        self.check(other)?;
        Ok(PyPolynomial {
            inner: &self.inner + &other.inner,
        })
    }

    fn __sub__(&self, other: &Self) -> PyResult<Self> {
        self.check(other)?;
        Ok(PyPolynomial {
            inner: &self.inner - &other.inner,
        })
    }

    fn __mul__(&self, other: &Self) -> PyResult<Self> {
        self.check(other)?;
        Ok(PyPolynomial {
            inner: &self.inner * &other.inner,
        })
    }

    fn __neg__(&self) -> Self {
        PyPolynomial { inner: -&self.inner }
    }

    fn __pow__(&self, e: u32, _modulo: Option<u32>) -> Self {
        PyPolynomial {
            inner: self.inner.pow(e),
        }
    }

    fn scale(&self, s: f64) -> Self {
        PyPolynomial {
            inner: self.inner.scale(s),
        }
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.inner == other.inner
    }

    fn __repr__(&self) -> String {
        format!("Polynomial({})", self.inner)
    }
}

impl PyPolynomial {
    fn check(&self, other: &Self) -> PyResult<()> {
        if self.inner.nvars() != other.inner.nvars() {
            return Err(PyValueError::new_err("polynomials live in different numbers of variables"));
        }
        Ok(())
    }
}

#[pyclass(name = "MooProblem", module = "hybridsos", from_py_object)]
#[derive(Clone)]
struct PyMooProblem {
    inner: hybridsos::MooProblem,
}

#[pymethods]
impl PyMooProblem {
    /// `MooProblem(nvars, objectives, constraints=[], lam=None)`; `lam` defaults to all ones.
    #[new]
    #[pyo3(signature = (nvars, objectives, constraints = Vec::new(), lam = None))]
    fn new(
        nvars: usize,
        objectives: Vec<PyPolynomial>,
        constraints: Vec<PyPolynomial>,
        lam: Option<Vec<f64>>,
    ) -> PyResult<Self> {
        let objectives: Vec<_> = objectives.into_iter().map(|p| p.inner).collect();
        let constraints: Vec<_> = constraints.into_iter().map(|p| p.inner).collect();
        let lam = lam.unwrap_or_else(|| vec![1.0; objectives.len()]);
        let inner = hybridsos::MooProblem::new(nvars, objectives, constraints, lam).map_err(err)?;
        Ok(PyMooProblem { inner })
    }

    /// Parses the JSON problem-file format.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let file = hio::ProblemFile::from_json(text).map_err(file_err)?;
        Ok(PyMooProblem {
            inner: file.to_problem().map_err(file_err)?,
        })
    }

    fn to_json(&self) -> String {
        hio::ProblemFile::from_problem(&self.inner, None, None).to_json()
    }

    #[getter]
    fn nvars(&self) -> usize {
        self.inner.nvars()
    }

    #[getter]
    fn lam(&self) -> Vec<f64> {
        self.inner.lambda().to_vec()
    }

    #[getter]
    fn objectives(&self) -> Vec<PyPolynomial> {
        self.inner
            .objectives()
            .iter()
            .map(|p| PyPolynomial { inner: p.clone() })
            .collect()
    }

    #[getter]
    fn constraints(&self) -> Vec<PyPolynomial> {
        self.inner
            .constraints()
            .iter()
            .map(|p| PyPolynomial { inner: p.clone() })
            .collect()
    }

    fn objective_values(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.objective_values(&x).map_err(err)
    }

    #[pyo3(signature = (x, tol = 1e-9))]
    fn is_feasible(&self, x: Vec<f64>, tol: f64) -> PyResult<bool> {
        self.inner.is_feasible(&x, tol).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!(
            "MooProblem(nvars={}, objectives={}, constraints={})",
            self.inner.nvars(),
            self.inner.objectives().len(),
            self.inner.constraints().len()
        )
    }
}

/// Reads a problem file and returns `(problem, file_dict)`.
#[pyfunction]
fn parse_problem(py: Python<'_>, path: PathBuf) -> PyResult<(PyMooProblem, Bound<'_, PyAny>)> {
    let file = hio::parse_problem(&path).map_err(file_err)?;
    let problem = file.to_problem().map_err(file_err)?;
    Ok((PyMooProblem { inner: problem }, to_py(py, &file)?))
}

/// Hybrid relaxation at one parameter point; returns `{"points": [...], "diagnostic": {...}}`.
#[pyfunction]
#[pyo3(signature = (problem, z, family = "P", k_max = None, certificates = false))]
fn solve_hybrid<'py>(
    py: Python<'py>,
    problem: &PyMooProblem,
    z: Vec<f64>,
    family: &str,
    k_max: Option<usize>,
    certificates: bool,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = SweepConfig {
        family: parse_family(family)?,
        k_max,
        certificates,
        ..SweepConfig::default()
    };
    let p = &problem.inner;
    let out = py
        .detach(|| pareto::solve_hybrid(p, p.lambda(), &z, &cfg))
        .map_err(err)?;
    to_py(py, &out)
}

/// Full sweep over a sampling box or an explicit list of parameter points.
#[pyfunction]
#[pyo3(signature = (problem, bounds = None, samples = 0, seed = 0, z_list = None, family = "P",
                    k_max = None, workers = 0, reverify = true, certificates = false))]
#[allow(clippy::too_many_arguments)]
fn run_sweep<'py>(
    py: Python<'py>,
    problem: &PyMooProblem,
    bounds: Option<Vec<(f64, f64)>>,
    samples: usize,
    seed: u64,
    z_list: Option<Vec<Vec<f64>>>,
    family: &str,
    k_max: Option<usize>,
    workers: usize,
    reverify: bool,
    certificates: bool,
) -> PyResult<Bound<'py, PyAny>> {
    let z_source = match (bounds, z_list) {
        (Some(bounds), None) => ZSource::UniformBox { bounds, samples, seed },
        (None, Some(list)) => ZSource::Explicit(list),
        _ => return Err(PyValueError::new_err("pass exactly one of `bounds` or `z_list`")),
    };
    let cfg = SweepConfig {
        z_source,
        family: parse_family(family)?,
        k_max,
        workers,
        reverify,
        certificates,
        ..SweepConfig::default()
    };
    let p = &problem.inner;
    let res = py.detach(|| pareto::run_sweep(p, &cfg)).map_err(err)?;
    let dict = to_py(py, &res)?;
    dict.cast::<PyDict>()?.set_item("verified_fraction", res.verified_fraction())?;
    Ok(dict)
}

#[pyfunction]
fn existence_probe<'py>(py: Python<'py>, problem: &PyMooProblem, samples: Vec<Vec<f64>>) -> PyResult<Bound<'py, PyAny>> {
    let p = &problem.inner;
    to_py(py, &pareto::existence_probe(p, p.lambda(), &samples).map_err(err)?)
}

/// Moments `x^α` of the Dirac measure at `x` for all `|α| ≤ order`, in graded order.
#[pyfunction]
fn dirac_moments(x: Vec<f64>, order: usize) -> Vec<f64> {
    hybridsos::dirac_moments(&x, order).values().to_vec()
}

#[pyfunction]
fn moment_matrix(y: Vec<f64>, nvars: usize, order: usize, d: usize) -> PyResult<Vec<Vec<f64>>> {
    let y = MomentVector::new(nvars, order, y).map_err(err)?;
    Ok(rows(&hybridsos::moment_matrix(&y, d).map_err(err)?))
}

#[pyfunction]
#[pyo3(signature = (y, nvars, order, t, k0 = 1))]
fn extract_atoms(y: Vec<f64>, nvars: usize, order: usize, t: usize, k0: usize) -> PyResult<Vec<Vec<f64>>> {
    let y = MomentVector::new(nvars, order, y).map_err(err)?;
    certificate::extract_atoms(&y, t, k0).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (y, nvars, order, k, k0 = 1, tol = certificate::DEFAULT_RANK_TOL))]
fn check_flat_truncation(y: Vec<f64>, nvars: usize, order: usize, k: usize, k0: usize, tol: f64) -> PyResult<Option<usize>> {
    let y = MomentVector::new(nvars, order, y).map_err(err)?;
    Ok(certificate::check_flat_truncation(&y, k, k0, tol))
}

#[pyfunction]
#[pyo3(signature = (matrix, tol = certificate::DEFAULT_RANK_TOL))]
fn numeric_rank(matrix: Vec<Vec<f64>>, tol: f64) -> PyResult<usize> {
    Ok(certificate::numeric_rank(&from_rows(&matrix)?, tol))
}

#[pymodule]
#[pyo3(name = "hybridsos")]
fn hybridsos_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPolynomial>()?;
    m.add_class::<PyMooProblem>()?;
    m.add_function(wrap_pyfunction!(parse_problem, m)?)?;
    m.add_function(wrap_pyfunction!(solve_hybrid, m)?)?;
    m.add_function(wrap_pyfunction!(run_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(existence_probe, m)?)?;
    m.add_function(wrap_pyfunction!(dirac_moments, m)?)?;
    m.add_function(wrap_pyfunction!(moment_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(extract_atoms, m)?)?;
    m.add_function(wrap_pyfunction!(check_flat_truncation, m)?)?;
    m.add_function(wrap_pyfunction!(numeric_rank, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
