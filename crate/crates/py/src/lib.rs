//! Python bindings. Matrices cross the boundary as lists of rows.

use hypoco_core::chains::{self, ChainConfig, ChainMode, Observable, PotentialSpec};
use hypoco_core::gaussian;
use hypoco_core::graphs::{self, InteractionGraph};
use hypoco_core::{hypoco as hc, linalg, spectra, DMatrix, Error};
use nalgebra::DVector;
use pyo3::exceptions::{PyArithmeticError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

type Rows = Vec<Vec<f64>>;

fn err(e: Error) -> PyErr {
    if e.is_numerical() {
        PyArithmeticError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

fn matrix(rows: &Rows) -> PyResult<DMatrix<f64>> {
    linalg::from_rows(rows).map_err(err)
}

/// Drift/diffusion pair of `dX = -BX dt + sqrt(2D) dW`.
#[pyclass(frozen, skip_from_py_object, module = "hypoco")]
#[derive(Clone)]
struct DriftSpec(spectra::DriftSpec);

#[pymethods]
impl DriftSpec {
    #[new]
    fn new(drift: Rows, diffusion: Rows) -> PyResult<Self> {
        spectra::DriftSpec::from_rows(&drift, &diffusion)
            .map(DriftSpec)
            .map_err(err)
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    #[getter]
    fn drift(&self) -> Rows {
        linalg::to_rows(self.0.drift())
    }

    #[getter]
    fn diffusion(&self) -> Rows {
        linalg::to_rows(self.0.diffusion())
    }

    fn spectral_abscissa(&self) -> PyResult<f64> {
        spectra::spectral_abscissa(&self.0).map_err(err)
    }

    #[pyo3(signature = (tol = spectra::DEFAULT_TOL))]
    fn critical_jordan_index(&self, tol: f64) -> PyResult<usize> {
        spectra::critical_jordan_index(&self.0, tol).map_err(err)
    }

    /// Dict with `rho`, `big_n`, `hypoelliptic`, `bracket_count`, `reach`.
    #[pyo3(signature = (tol = spectra::DEFAULT_TOL))]
    fn certificate<'py>(&self, py: Python<'py>, tol: f64) -> PyResult<Bound<'py, PyDict>> {
        let c = spectra::spectral_certificate(&self.0, tol).map_err(err)?;
        let d = PyDict::new(py);
        d.set_item("rho", c.rho)?;
        d.set_item("big_n", c.big_n)?;
        d.set_item("hypoelliptic", c.hypoelliptic)?;
        d.set_item("bracket_count", c.bracket_count)?;
        d.set_item("reach", c.reach)?;
        Ok(d)
    }

    /// Invariant law `N(0, Σ)` with `BΣ + ΣBᵀ = 2D`.
    fn invariant(&self) -> PyResult<GaussianState> {
        gaussian::solve_lyapunov(&self.0)
            .map(GaussianState)
            .map_err(err)
    }

    fn operator_norm_sq(&self, t: f64) -> PyResult<f64> {
        gaussian::operator_norm_sq(&self.0, t).map_err(err)
    }

    fn operator_norm_gap(&self, t: f64) -> PyResult<f64> {
        gaussian::operator_norm_gap(&self.0, t).map_err(err)
    }

    fn decay_study<'py>(&self, py: Python<'py>, times: Vec<f64>) -> PyResult<Bound<'py, PyDict>> {
        let s = gaussian::decay_study(&self.0, &times).map_err(err)?;
        let d = PyDict::new(py);
        d.set_item("times", s.curve.times)?;
        d.set_item("operator_norm_sq", s.curve.values)?;
        d.set_item("gaps", s.gaps)?;
        d.set_item("rho", s.rho)?;
        d.set_item("big_n", s.big_n)?;
        d.set_item("bracket_count", s.bracket_count)?;
        d.set_item("long_time_slope", s.long_time_slope)?;
        d.set_item("short_time_slope", s.short_time_slope)?;
        Ok(d)
    }

    fn __repr__(&self) -> String {
        format!("DriftSpec(dim={})", self.0.dim())
    }
}

/// Gaussian law `N(mean, cov)`.
#[pyclass(frozen, skip_from_py_object, module = "hypoco")]
#[derive(Clone)]
struct GaussianState(gaussian::GaussianState);

#[pymethods]
impl GaussianState {
    #[new]
    #[pyo3(signature = (mean, cov = None))]
    fn new(mean: Vec<f64>, cov: Option<Rows>) -> PyResult<Self> {
        let mean = DVector::from_vec(mean);
        let state = match cov {
            None => gaussian::GaussianState::dirac(mean),
            Some(c) => gaussian::GaussianState::new(mean, matrix(&c)?),
        };
        state.map(GaussianState).map_err(err)
    }

    #[getter]
    fn mean(&self) -> Vec<f64> {
        self.0.mean().iter().copied().collect()
    }

    #[getter]
    fn cov(&self) -> Rows {
        linalg::to_rows(self.0.cov())
    }

    /// Law at time `t` of the process started from this law.
    fn propagate(&self, spec: &DriftSpec, t: f64) -> PyResult<GaussianState> {
        gaussian::propagate(&spec.0, &self.0, t)
            .map(GaussianState)
            .map_err(err)
    }

    fn w2(&self, other: &GaussianState) -> PyResult<f64> {
        gaussian::w2_gaussian(&self.0, &other.0).map_err(err)
    }

    /// Relative entropy `KL(self | other)`.
    fn kl(&self, other: &GaussianState) -> PyResult<f64> {
        gaussian::kl_gaussian(&self.0, &other.0).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!("GaussianState(dim={})", self.0.dim())
    }
}

#[pyfunction]
fn matrix_exponential(a: Rows) -> PyResult<Rows> {
    gaussian::matrix_exponential(&matrix(&a)?)
        .map(|m| linalg::to_rows(&m))
        .map_err(err)
}

#[pyfunction]
fn decay_envelope(rho: f64, big_n: usize, t: f64) -> PyResult<f64> {
    spectra::decay_envelope(rho, big_n, t).map_err(err)
}

#[pyfunction]
fn coercivity_profile(kappa: f64, m: usize, t: f64) -> PyResult<f64> {
    spectra::coercivity_profile(kappa, m, t).map_err(err)
}

/// Distorted-norm certificate: dict with `p`, `kappa`, `cond_p`, `epsilon`.
#[pyfunction]
#[pyo3(signature = (drift, epsilon = 0.1))]
fn build_distortion<'py>(
    py: Python<'py>,
    drift: Rows,
    epsilon: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let c = hc::build_distortion(&matrix(&drift)?, epsilon).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("p", linalg::to_rows(&c.p))?;
    d.set_item("kappa", c.kappa)?;
    d.set_item("cond_p", c.cond_p)?;
    d.set_item("epsilon", c.epsilon)?;
    Ok(d)
}

/// Largest `κ` with `PB + BᵀP ⪰ 2κP`.
#[pyfunction]
fn verify_lmi(p: Rows, drift: Rows) -> PyResult<f64> {
    hc::verify_lmi(&matrix(&p)?, &matrix(&drift)?).map_err(err)
}

/// `(rate, prefactor)` of `(1+βc)e^{-2ρt/(1+βc)}`.
#[pyfunction]
fn hypocoercive_rate(rho: f64, beta: f64, c: f64) -> PyResult<(f64, f64)> {
    hc::hypocoercive_rate(rho, beta, c)
        .map(|r| (r.rate, r.prefactor))
        .map_err(err)
}

fn graph(vertices: usize, edges: Vec<(usize, usize, f64)>) -> PyResult<InteractionGraph> {
    InteractionGraph::new(vertices, &edges).map_err(err)
}

/// Spectral data of a weighted graph given as `(i, j, weight)` edges.
#[pyfunction]
#[pyo3(signature = (vertices, edges, pinned = 0))]
fn gap_report<'py>(
    py: Python<'py>,
    vertices: usize,
    edges: Vec<(usize, usize, f64)>,
    pinned: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let r = graphs::gap_report(&graph(vertices, edges)?, pinned).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("rho", r.rho)?;
    d.set_item("rho_d", r.rho_d)?;
    d.set_item("cheeger", r.cheeger)?;
    d.set_item("chain_lower_rho", r.chain_lower_rho)?;
    d.set_item("chain_lower_rho_d", r.chain_lower_rho_d)?;
    Ok(d)
}

#[pyfunction]
fn laplacian(vertices: usize, edges: Vec<(usize, usize, f64)>) -> PyResult<Rows> {
    Ok(linalg::to_rows(&graphs::laplacian(&graph(
        vertices, edges,
    )?)))
}

/// Overdamped chain `X_0, …, X_N` in `R^dim`.
#[pyclass(frozen, skip_from_py_object, module = "hypoco")]
#[derive(Clone)]
struct Chain(ChainConfig);

#[pymethods]
impl Chain {
    #[new]
    #[pyo3(signature = (n, sigma_n, mode = "fixed", potential = "quadratic", lam = 1.0, alpha = 0.0, sigma0 = 0.0, dim = 1, dt = None, seed = 0))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        n: usize,
        sigma_n: f64,
        mode: &str,
        potential: &str,
        lam: f64,
        alpha: f64,
        sigma0: f64,
        dim: usize,
        dt: Option<f64>,
        seed: u64,
    ) -> PyResult<Self> {
        let mode = match mode {
            "fixed" => ChainMode::Fixed,
            "centered" => ChainMode::Centered,
            other => {
                return Err(PyValueError::new_err(format!(
                    "mode must be 'fixed' or 'centered', got {other:?}"
                )))
            }
        };
        let potential = match potential {
            "quadratic" => PotentialSpec::quadratic(lam),
            "quartic" => PotentialSpec::quartic(lam, alpha),
            other => {
                return Err(PyValueError::new_err(format!(
                    "potential must be 'quadratic' or 'quartic', got {other:?}"
                )))
            }
        };
        let mut c =
            ChainConfig::new(n, dim, potential, sigma0, sigma_n, mode, seed).map_err(err)?;
        if let Some(dt) = dt {
            c = c.with_dt(dt).map_err(err)?;
        }
        Ok(Chain(c))
    }

    #[getter]
    fn dt(&self) -> f64 {
        self.0.dt
    }

    #[getter]
    fn state_len(&self) -> usize {
        self.0.state_len()
    }

    fn drift(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        chains::drift(&self.0, &x).map_err(err)
    }

    /// Exact OU reduction of a quadratic chain.
    fn quadratic_reduction(&self) -> PyResult<DriftSpec> {
        chains::quadratic_reduction(&self.0)
            .map(DriftSpec)
            .map_err(err)
    }

    /// `(exact, bound, gap)` log-Sobolev constants of a quadratic chain.
    fn lsi_constants(&self) -> PyResult<(f64, f64, f64)> {
        let l = chains::lsi_constant_quadratic(&self.0).map_err(err)?;
        Ok((l.exact, l.bound, l.gap))
    }

    /// Ensemble statistics; observables are `"squared_norm"`, `"end_to_end"`
    /// or `"x_P_C"` (component C of particle P).
    #[pyo3(signature = (x0, t_end, n_traj, checkpoints, observables = vec!["squared_norm".to_string()]))]
    fn simulate<'py>(
        &self,
        py: Python<'py>,
        x0: Vec<f64>,
        t_end: f64,
        n_traj: usize,
        checkpoints: usize,
        observables: Vec<String>,
    ) -> PyResult<Bound<'py, PyDict>> {
        let obs = observables
            .iter()
            .map(|s| parse_observable(s))
            .collect::<PyResult<Vec<_>>>()?;
        let config = self.0.clone();
        let s = py
            .detach(move || chains::simulate(&config, &x0, t_end, n_traj, checkpoints, &obs))
            .map_err(err)?;
        let d = PyDict::new(py);
        d.set_item("times", s.times)?;
        d.set_item("observables", observables)?;
        d.set_item("mean", s.mean)?;
        d.set_item("variance", s.variance)?;
        d.set_item("ci_halfwidth", s.ci_halfwidth)?;
        d.set_item("n_traj", s.n_traj)?;
        Ok(d)
    }

    /// Synchronous-coupling estimate of the contraction rate.
    fn couple<'py>(
        &self,
        py: Python<'py>,
        x0: Vec<f64>,
        y0: Vec<f64>,
        t_end: f64,
        n_pairs: usize,
        checkpoints: usize,
    ) -> PyResult<Bound<'py, PyDict>> {
        let config = self.0.clone();
        let e = py
            .detach(move || chains::couple(&config, &x0, &y0, t_end, n_pairs, checkpoints))
            .map_err(err)?;
        let d = PyDict::new(py);
        d.set_item("rate", e.rate)?;
        d.set_item("std", e.std)?;
        d.set_item("ci_halfwidth", e.ci_halfwidth)?;
        d.set_item("monotone", e.monotone)?;
        d.set_item("times", e.times)?;
        d.set_item("mean_log_distance", e.mean_log_distance)?;
        Ok(d)
    }

    fn __repr__(&self) -> String {
        format!(
            "Chain(n={}, dim={}, dt={})",
            self.0.n, self.0.dim, self.0.dt
        )
    }
}

fn parse_observable(s: &str) -> PyResult<Observable> {
    match s {
        "squared_norm" => return Ok(Observable::SquaredNorm),
        "end_to_end" => return Ok(Observable::EndToEnd),
        _ => {}
    }
    let parts: Vec<&str> = s.split('_').collect();
    if let ["x", p, c] = parts.as_slice() {
        if let (Ok(particle), Ok(component)) = (p.parse(), c.parse()) {
            return Ok(Observable::Coordinate {
                particle,
                component,
            });
        }
    }
    Err(PyValueError::new_err(format!("unknown observable {s:?}")))
}

#[pymodule]
fn hypoco(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<DriftSpec>()?;
    m.add_class::<GaussianState>()?;
    m.add_class::<Chain>()?;
    m.add_function(wrap_pyfunction!(matrix_exponential, m)?)?;
    m.add_function(wrap_pyfunction!(decay_envelope, m)?)?;
    m.add_function(wrap_pyfunction!(coercivity_profile, m)?)?;
    m.add_function(wrap_pyfunction!(build_distortion, m)?)?;
    m.add_function(wrap_pyfunction!(verify_lmi, m)?)?;
    m.add_function(wrap_pyfunction!(hypocoercive_rate, m)?)?;
    m.add_function(wrap_pyfunction!(gap_report, m)?)?;
    m.add_function(wrap_pyfunction!(laplacian, m)?)?;
    Ok(())
}
