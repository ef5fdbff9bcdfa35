//! Python bindings for the dscat toolkit.

use nalgebra::DVector;
use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use dscat::error::Error;
use dscat::evolution::{self, PropagationPlan, Propagator};
use dscat::linalg::CMat;
use dscat::models::{self, BoundaryCondition, DissipativeSystem};
use dscat::projections;
use dscat::resolvent::{self, SandwichTarget};
use dscat::scattering::{self, WaveDirection};
use dscat::scenario;
use dscat::spectra;

fn to_py_err(e: Error) -> PyErr {
    match e {
        Error::Config(_) | Error::DimensionMismatch(_) | Error::InvalidModel(_) => {
            PyValueError::new_err(e.to_string())
        }
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn mat_from_rows(rows: Vec<Vec<Complex64>>) -> PyResult<CMat> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != rows[0].len()) {
        return Err(PyValueError::new_err("matrix rows must be non-empty and equal length"));
    }
    let m = rows[0].len();
    let mut out = CMat::zeros(n, m);
    for (i, row) in rows.iter().enumerate() {
        for (j, z) in row.iter().enumerate() {
            out[(i, j)] = *z;
        }
    }
    Ok(out)
}

fn mat_to_rows(m: &CMat) -> Vec<Vec<Complex64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

fn vec_from_py(u: Vec<Complex64>) -> DVector<Complex64> {
    DVector::from_vec(u)
}

/// A pseudo-Hamiltonian H = H0 + V - i C*C on a finite-dimensional space.
#[pyclass]
struct System {
    inner: DissipativeSystem,
}

#[pymethods]
impl System {
    /// Build from dense H0, V, C given as nested lists of complex numbers.
    #[staticmethod]
    fn matrix(h0: Vec<Vec<Complex64>>, v: Vec<Vec<Complex64>>, c: Vec<Vec<Complex64>>) -> PyResult<Self> {
        let sys = models::build_matrix_system(&mat_from_rows(h0)?, &mat_from_rows(v)?, &mat_from_rows(c)?)
            .map_err(to_py_err)?;
        Ok(System { inner: sys })
    }

    /// 1-D Dirichlet lattice with site potential v and absorber profile w.
    #[staticmethod]
    fn lattice(n: usize, dx: f64, v: Vec<f64>, w: Vec<f64>) -> PyResult<Self> {
        let sys = models::build_lattice_system(n, dx, &v, &w, BoundaryCondition::Dirichlet)
            .map_err(to_py_err)?;
        Ok(System { inner: sys })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim
    }

    fn h(&self) -> Vec<Vec<Complex64>> {
        mat_to_rows(&self.inner.h)
    }

    fn eigenvalues(&self) -> PyResult<Vec<Complex64>> {
        let sd = spectra::eigendecompose(&self.inner).map_err(to_py_err)?;
        Ok(sd.eigenvalues)
    }

    /// Worst sampled violation of Im<u, Hu> = -|Cu|^2 over random unit vectors.
    fn dissipativity_defect(&self, samples: usize, seed: u64) -> f64 {
        self.inner.dissipativity_defect(samples, seed)
    }

    /// e^{-itH} u.
    fn propagate(&self, u: Vec<Complex64>, t: f64) -> PyResult<Vec<Complex64>> {
        if u.len() != self.inner.dim {
            return Err(PyValueError::new_err("state length does not match system dimension"));
        }
        let prop = Propagator::new(&self.inner);
        Ok(prop.apply(&vec_from_py(u), t).iter().copied().collect())
    }

    /// Absorption probability of a unit state over [0, horizon].
    fn absorption_probability(&self, u: Vec<Complex64>, horizon: f64) -> PyResult<(f64, bool)> {
        let plan = PropagationPlan::new(horizon, horizon / 400.0).map_err(to_py_err)?;
        let est = evolution::absorption_probability(&self.inner, &vec_from_py(u), &plan)
            .map_err(to_py_err)?;
        Ok((est.p_abs, est.converged))
    }

    /// Integral of |C e^{-itH} u|^2; bounded by 1/2 for unit states.
    fn smoothing_integral(&self, u: Vec<Complex64>, horizon: f64) -> PyResult<f64> {
        evolution::smoothing_integral(&self.inner, &vec_from_py(u), horizon).map_err(to_py_err)
    }

    /// Regularized spectral projection E(a, b) via the Stone formula.
    fn spectral_projection(&self, a: f64, b: f64) -> PyResult<(Vec<Vec<Complex64>>, f64, f64)> {
        let e = projections::spectral_projection(
            &self.inner,
            (a, b),
            &projections::default_eps_schedule(),
        )
        .map_err(to_py_err)?;
        Ok((mat_to_rows(&e.matrix), e.idempotency_defect, e.adjoint_defect))
    }

    /// Sup of |C (H - (lambda - i eps))^{-1} C*| on a grid; singularities as
    /// (lambda, order, fit R^2).
    fn singularity_scan(
        &self,
        interval: (f64, f64),
        eps_schedule: Vec<f64>,
        grid_n: usize,
    ) -> PyResult<Vec<(f64, f64, f64)>> {
        let scan = resolvent::singularity_scan(
            SandwichTarget::Matrix(&self.inner),
            interval,
            &eps_schedule,
            grid_n,
        )
        .map_err(to_py_err)?;
        Ok(scan
            .singularities
            .iter()
            .map(|s| (s.lambda, s.nu, s.fit_r2))
            .collect())
    }

    /// Finite-time W-(H, H0) on gaussian probes; returns (matrix, cauchy
    /// defects, converged).
    fn wave_minus(
        &self,
        n_momenta: usize,
        t_final: f64,
    ) -> PyResult<(Vec<Vec<Complex64>>, Vec<f64>, bool)> {
        let dx = self.inner.model_tag.dx().unwrap_or(1.0);
        let width = (self.inner.dim as f64 * dx / 24.0).max(2.0 * dx);
        let probes = scattering::gaussian_probes(&self.inner, n_momenta, width).map_err(to_py_err)?;
        let w = scattering::finite_time_wave(&self.inner, &probes, t_final, WaveDirection::Minus)
            .map_err(to_py_err)?;
        Ok((mat_to_rows(&w.matrix), w.cauchy_defects, w.converged))
    }
}

/// Run a scenario config (JSON string); returns the report as a JSON string.
#[pyfunction]
#[pyo3(signature = (config_json, seed=None, threads=1))]
fn run_scenario(config_json: &str, seed: Option<u64>, threads: usize) -> PyResult<String> {
    let config: scenario::ScenarioConfig =
        serde_json::from_str(config_json).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let (report, _, _) = scenario::run_scenario(&config, seed, threads).map_err(to_py_err)?;
    serde_json::to_string_pretty(&report).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

/// Write one CSV curve family from a report JSON string; returns the path.
#[pyfunction]
fn emit_curves(report_json: &str, selection: &str, out_dir: &str) -> PyResult<String> {
    let report: scenario::Report =
        serde_json::from_str(report_json).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let path = scenario::emit_curves(&report, selection, std::path::Path::new(out_dir))
        .map_err(to_py_err)?;
    Ok(path.to_string_lossy().into_owned())
}

#[pymodule]
fn dscat_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<System>()?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    m.add_function(wrap_pyfunction!(emit_curves, m)?)?;
    Ok(())
}
