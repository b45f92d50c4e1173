//! Python bindings: `State`, `Divergence` and `QuantityResult`, plus `compute` and `audit`. Matrices cross the boundary as nested lists of Python complex numbers.

use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use qinv_core::audit::{resolve_checks, AuditConfig};
use qinv_core::cli::{build_report, StateFile};
use qinv_core::divergences::{self, DivergenceSpec, LogBase};
use qinv_core::linalg::{self, ComplexMatrix, Subsystem};
use qinv_core::quantities::{self, Family, OptimizerConfig, QuantityKind};
use qinv_core::sampling::{random_bipartite, TrialRng};
use qinv_core::states::{BipartiteState, DensityOperator, PositiveOperator};
use qinv_core::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Contract(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn to_matrix(rows: &[Vec<Complex64>]) -> PyResult<ComplexMatrix> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(PyValueError::new_err("matrix must be a non-empty square list of rows"));
    }
    let flat: Vec<Complex64> = rows.iter().flatten().copied().collect();
    Ok(linalg::from_rows(n, n, &flat))
}

fn to_rows(m: &ComplexMatrix) -> Vec<Vec<Complex64>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

/// A density operator on `A ⊗ B`.
#[pyclass(name = "State", frozen)]
struct PyState {
    inner: BipartiteState,
}

#[pymethods]
impl PyState {
    #[new]
    fn new(matrix: Vec<Vec<Complex64>>, dim_a: usize, dim_b: usize) -> PyResult<Self> {
        let rho = DensityOperator::new(to_matrix(&matrix)?).map_err(py_err)?;
        Ok(Self {
            inner: BipartiteState::new(rho, dim_a, dim_b).map_err(py_err)?,
        })
    }

    /// `|Φ_d⟩⟨Φ_d|` on `d ⊗ d`.
    #[staticmethod]
    fn maximally_entangled(d: usize) -> Self {
        Self {
            inner: BipartiteState::maximally_entangled(d),
        }
    }

    #[staticmethod]
    fn maximally_mixed(dim_a: usize, dim_b: usize) -> Self {
        Self {
            inner: BipartiteState::maximally_mixed(dim_a, dim_b),
        }
    }

    /// Hilbert–Schmidt random state, deterministic per seed.
    #[staticmethod]
    #[pyo3(signature = (dim_a, dim_b, seed, rank=None))]
    fn random(dim_a: usize, dim_b: usize, seed: u64, rank: Option<usize>) -> PyResult<Self> {
        let d = dim_a * dim_b;
        if d == 0 || rank.is_some_and(|r| r == 0 || r > d) {
            return Err(PyValueError::new_err(format!("need positive dims and rank in 1..={d}")));
        }
        Ok(Self {
            inner: random_bipartite(&mut TrialRng::new(seed), (dim_a, dim_b), rank),
        })
    }

    /// Parses the CLI state-file format.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let file: StateFile = serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(Self {
            inner: file.to_state().map_err(py_err)?,
        })
    }

    fn to_json(&self) -> String {
        StateFile::from_state(&self.inner).to_json()
    }

    #[getter]
    fn dims(&self) -> (usize, usize) {
        self.inner.dims()
    }

    fn matrix(&self) -> Vec<Vec<Complex64>> {
        to_rows(self.inner.state().matrix())
    }

    /// Reduced state on `"A"` or `"B"`.
    fn marginal(&self, keep: &str) -> PyResult<Vec<Vec<Complex64>>> {
        let keep = match keep {
            "A" | "a" => Subsystem::A,
            "B" | "b" => Subsystem::B,
            other => return Err(PyValueError::new_err(format!("subsystem must be 'A' or 'B', got '{other}'"))),
        };
        Ok(to_rows(self.inner.marginal(keep).matrix()))
    }

    fn __repr__(&self) -> String {
        let (a, b) = self.inner.dims();
        format!("State(dims=({a}, {b}), purity={:.6})", self.inner.state().purity())
    }
}

/// A divergence with its parameter and logarithm base.
#[pyclass(name = "Divergence", frozen)]
struct PyDivergence {
    inner: DivergenceSpec,
}

#[pymethods]
impl PyDivergence {
    /// `kind` is one of umegaki, petz, sandwiched, geometric, dmax, dh; `log_base` is "2" or "e".
    #[new]
    #[pyo3(signature = (kind, alpha=None, epsilon=None, log_base="2"))]
    fn new(kind: &str, alpha: Option<f64>, epsilon: Option<f64>, log_base: &str) -> PyResult<Self> {
        let need = |x: Option<f64>, name: &str| x.ok_or_else(|| PyValueError::new_err(format!("{kind} needs {name}")));
        let spec = match kind {
            "umegaki" => DivergenceSpec::umegaki(),
            "dmax" => DivergenceSpec::max_relative(),
            "petz" => DivergenceSpec::petz(need(alpha, "alpha")?).map_err(py_err)?,
            "sandwiched" => DivergenceSpec::sandwiched(need(alpha, "alpha")?).map_err(py_err)?,
            "geometric" => DivergenceSpec::geometric(need(alpha, "alpha")?).map_err(py_err)?,
            "dh" => DivergenceSpec::hypothesis_testing(need(epsilon, "epsilon")?).map_err(py_err)?,
            other => return Err(PyValueError::new_err(format!("unknown divergence '{other}'"))),
        };
        let base = match log_base {
            "2" => LogBase::Two,
            "e" => LogBase::E,
            other => return Err(PyValueError::new_err(format!("log_base must be '2' or 'e', got '{other}'"))),
        };
        Ok(Self {
            inner: spec.with_log_base(base),
        })
    }

    /// `D(ρ‖ζ)` for a state and a positive operator given as matrices.
    fn evaluate(&self, rho: Vec<Vec<Complex64>>, zeta: Vec<Vec<Complex64>>) -> PyResult<f64> {
        let rho = DensityOperator::new(to_matrix(&rho)?).map_err(py_err)?;
        let zeta = PositiveOperator::new(to_matrix(&zeta)?).map_err(py_err)?;
        Ok(divergences::evaluate(&self.inner, &rho, &zeta).map_err(py_err)?.value)
    }

    fn __repr__(&self) -> String {
        format!("Divergence({})", self.inner)
    }
}

#[pyclass(name = "QuantityResult", frozen, get_all)]
struct PyQuantityResult {
    value: f64,
    exactness: String,
    converged: bool,
    sigma_witness: Option<Vec<Vec<Complex64>>>,
    smoothing_witness: Option<Vec<Vec<Complex64>>>,
}

#[pymethods]
impl PyQuantityResult {
    fn __repr__(&self) -> String {
        format!(
            "QuantityResult(value={}, exactness={}, converged={})",
            self.value, self.exactness, self.converged
        )
    }
}

/// Evaluates `quantity` ("I1" … "H3"); smoothed types need `epsilon`.
#[pyfunction]
#[pyo3(signature = (quantity, state, divergence, epsilon=None, seed=0))]
fn compute(
    py: Python<'_>,
    quantity: &str,
    state: &PyState,
    divergence: &PyDivergence,
    epsilon: Option<f64>,
    seed: u64,
) -> PyResult<PyQuantityResult> {
    let family: Family = quantity.parse().map_err(py_err)?;
    let kind = QuantityKind::new(family, epsilon).map_err(py_err)?;
    let cfg = OptimizerConfig {
        seed,
        ..OptimizerConfig::default()
    };
    let (rho, spec) = (state.inner.clone(), divergence.inner);
    let r = py
        .detach(move || quantities::compute(&kind, &spec, &rho, &cfg))
        .map_err(py_err)?;
    Ok(PyQuantityResult {
        value: r.value,
        exactness: r.exactness.name().to_string(),
        converged: r.converged,
        sigma_witness: r.sigma_witness.map(|s| to_rows(s.matrix())),
        smoothing_witness: r.smoothing_witness.map(|s| to_rows(s.matrix())),
    })
}

/// Runs audit checks and returns the JSON report the CLI would write.
#[pyfunction]
#[pyo3(signature = (checks=vec!["all".to_string()], samples=None, dims=None, seed=0))]
fn audit(
    py: Python<'_>,
    checks: Vec<String>,
    samples: Option<usize>,
    dims: Option<(usize, usize)>,
    seed: u64,
) -> PyResult<String> {
    let checks = resolve_checks(&checks).map_err(py_err)?;
    let mut cfg = AuditConfig {
        master_seed: seed,
        ..AuditConfig::default()
    };
    if let Some(n) = samples {
        cfg.samples = n;
        cfg.check_samples.clear();
    }
    if let Some((a, b)) = dims {
        cfg.dims_a = vec![a];
        cfg.dims_b = vec![b];
    }
    let report = py.detach(move || build_report(&checks, &cfg, false)).map_err(py_err)?;
    Ok(report.to_json())
}

#[pymodule]
#[pyo3(name = "qinv")]
fn qinv_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyState>()?;
    m.add_class::<PyDivergence>()?;
    m.add_class::<PyQuantityResult>()?;
    m.add_function(wrap_pyfunction!(compute, m)?)?;
    m.add_function(wrap_pyfunction!(audit, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
