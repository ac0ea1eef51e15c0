//! Python bindings. Matrices cross the boundary as nested lists of `complex`.

use std::collections::HashMap;

use cthermo_core::dynamics::{
    decoherence_time_general, evolve_lindblad_with, work_extraction_time, LindbladModel, StepPlan,
};
use cthermo_core::linalg::{ComplexMatrix, C64};
use cthermo_core::network::{
    backward_ensemble, build_exchange_model, detailed_ft_residuals, forward_ensemble, integral_ft,
    jensen_bound_report, CompositeModel,
};
use cthermo_core::qubit::{self, AveragingWindow, DrivenQubitParams};
use cthermo_core::response::fdr_work_prediction;
use cthermo_core::scenario::{report_criteria, run_scenario, Dataset, OutputFormat, ScenarioConfig};
use cthermo_core::state::{self, DensityOperator};
use cthermo_core::Error;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(e: Error) -> PyErr {
    if e.is_config() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

fn rows_of(m: &ComplexMatrix) -> Vec<Vec<C64>> {
    (0..m.dim()).map(|i| (0..m.dim()).map(|j| m.get(i, j)).collect()).collect()
}

fn matrix_from(rows: Vec<Vec<C64>>) -> PyResult<ComplexMatrix> {
    let dim = rows.len();
    if rows.iter().any(|r| r.len() != dim) {
        return Err(PyValueError::new_err("matrix must be square"));
    }
    ComplexMatrix::from_row_major(dim, rows.into_iter().flatten().collect()).map_err(to_py)
}

fn json_to_py<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (text,))
}

/// Density operator.
#[pyclass(name = "DensityMatrix", module = "cthermo", frozen)]
struct PyDensity(DensityOperator);

#[pymethods]
impl PyDensity {
    #[new]
    fn new(rows: Vec<Vec<C64>>) -> PyResult<Self> {
        Ok(Self(DensityOperator::new(matrix_from(rows)?).map_err(to_py)?))
    }

    #[staticmethod]
    fn from_bloch(x: f64, y: f64, z: f64) -> PyResult<Self> {
        Ok(Self(DensityOperator::from_bloch(x, y, z).map_err(to_py)?))
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn matrix(&self) -> Vec<Vec<C64>> {
        rows_of(self.0.matrix())
    }

    fn purity(&self) -> f64 {
        self.0.purity()
    }

    fn entropy(&self) -> f64 {
        state::von_neumann_entropy(&self.0)
    }

    fn bloch_vector(&self) -> [f64; 3] {
        self.0.bloch_vector()
    }

    /// Relative entropy of coherence in the eigenbasis of `h`.
    fn coherence(&self, h: Vec<Vec<C64>>) -> PyResult<f64> {
        state::coherence(&self.0, &matrix_from(h)?).map_err(to_py)
    }

    fn athermality(&self, h: Vec<Vec<C64>>, beta: f64) -> PyResult<f64> {
        state::athermality(&self.0, &matrix_from(h)?, beta).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!("DensityMatrix(dim={}, purity={:.6})", self.0.dim(), self.0.purity())
    }
}

/// Periodically driven qubit with initial coherence weight `a`.
#[pyclass(name = "DrivenQubit", module = "cthermo", frozen)]
struct PyQubit(DrivenQubitParams);

#[pymethods]
impl PyQubit {
    #[new]
    #[pyo3(signature = (omega0=0.995, omega=1.0, g=0.005, beta=0.5, a=0.3))]
    fn new(omega0: f64, omega: f64, g: f64, beta: f64, a: f64) -> PyResult<Self> {
        Ok(Self(DrivenQubitParams::new(omega0, omega, g, beta, a).map_err(to_py)?))
    }

    #[getter]
    fn omega0(&self) -> f64 {
        self.0.omega0
    }
    #[getter]
    fn omega(&self) -> f64 {
        self.0.omega
    }
    #[getter]
    fn g(&self) -> f64 {
        self.0.g
    }
    #[getter]
    fn beta(&self) -> f64 {
        self.0.beta
    }
    #[getter]
    fn a(&self) -> f64 {
        self.0.a
    }
    #[getter]
    fn energy_gap(&self) -> f64 {
        self.0.energy_gap()
    }
    #[getter]
    fn rabi_frequency(&self) -> f64 {
        self.0.rabi_frequency()
    }
    #[getter]
    fn rabi_period(&self) -> f64 {
        self.0.rabi_period()
    }
    #[getter]
    fn extraction_time(&self) -> f64 {
        self.0.extraction_time()
    }
    #[getter]
    fn protocol_period(&self) -> f64 {
        self.0.protocol_period()
    }

    fn with_a(&self, a: f64) -> PyResult<Self> {
        let p = self.0.with_a(a);
        p.validate().map_err(to_py)?;
        Ok(Self(p))
    }

    fn hamiltonian(&self, t: f64) -> Vec<Vec<C64>> {
        rows_of(&qubit::hamiltonian_at(&self.0, t))
    }

    fn propagator(&self, t: f64) -> Vec<Vec<C64>> {
        rows_of(&qubit::propagator_at(&self.0, t))
    }

    fn initial_state(&self) -> PyResult<PyDensity> {
        Ok(PyDensity(qubit::initial_state(&self.0).map_err(to_py)?))
    }

    fn evolved_state(&self, t: f64) -> PyResult<PyDensity> {
        Ok(PyDensity(qubit::evolved_state(&self.0, t).map_err(to_py)?))
    }

    fn analytic_work(&self, t: f64) -> f64 {
        qubit::analytic_work(&self.0, t)
    }

    fn work_amplitude(&self) -> f64 {
        qubit::work_amplitude(&self.0)
    }

    fn extraction_condition(&self) -> bool {
        qubit::extraction_condition(&self.0)
    }

    fn optimal_frequency(&self) -> PyResult<f64> {
        qubit::optimal_frequency(&self.0).map_err(to_py)
    }

    /// Time-averaged work over one Rabi period (`"rabi"`) or protocol period (`"protocol"`).
    #[pyo3(signature = (window="rabi"))]
    fn averaged_work(&self, window: &str) -> PyResult<f64> {
        let w = match window {
            "rabi" => AveragingWindow::Rabi,
            "protocol" => AveragingWindow::Protocol,
            other => return Err(PyValueError::new_err(format!("unknown window `{other}`"))),
        };
        Ok(qubit::averaged_work(&self.0, w))
    }

    fn coherence_change(&self, t: f64) -> PyResult<f64> {
        qubit::coherence_change(&self.0, t).map_err(to_py)
    }

    #[pyo3(signature = (samples=256))]
    fn adiabatic_time(&self, samples: usize) -> PyResult<f64> {
        qubit::adiabatic_time(&self.0, samples).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        let p = &self.0;
        format!(
            "DrivenQubit(omega0={}, omega={}, g={}, beta={}, a={})",
            p.omega0, p.omega, p.g, p.beta, p.a
        )
    }
}

/// Lindblad run from the qubit's initial state. Returns a dict of columns.
#[pyfunction]
#[pyo3(signature = (qubit, gamma, t_end, dt, nbar=None, record_every=1))]
fn evolve_lindblad(
    qubit: &PyQubit,
    gamma: f64,
    t_end: f64,
    dt: f64,
    nbar: Option<f64>,
    record_every: usize,
) -> PyResult<HashMap<String, Vec<f64>>> {
    let p = &qubit.0;
    let model = LindbladModel::driven_qubit(p, gamma, nbar).map_err(to_py)?;
    let rho0 = qubit::initial_state(p).map_err(to_py)?;
    let plan = StepPlan {
        dt,
        record_every: record_every.max(1),
    };
    let series = evolve_lindblad_with(&model, &rho0, t_end, plan).map_err(to_py)?;
    let col = |f: fn(&cthermo_core::dynamics::ThermoSample) -> f64| series.samples().iter().map(f).collect();
    Ok(HashMap::from([
        ("t".into(), col(|s| s.t)),
        ("energy".into(), col(|s| s.energy)),
        ("heat".into(), col(|s| s.heat)),
        ("work".into(), col(|s| s.work)),
        ("coherence".into(), col(|s| s.coherence)),
        ("athermality".into(), col(|s| s.athermality)),
        ("entropy".into(), col(|s| s.entropy)),
        ("trace".into(), col(|s| s.trace)),
    ]))
}

/// Time of maximal work extraction in a Lindblad run, or `None`.
#[pyfunction]
#[pyo3(signature = (qubit, gamma, t_end, dt, nbar=None))]
fn extraction_time(qubit: &PyQubit, gamma: f64, t_end: f64, dt: f64, nbar: Option<f64>) -> PyResult<Option<f64>> {
    let p = &qubit.0;
    let model = LindbladModel::driven_qubit(p, gamma, nbar).map_err(to_py)?;
    let rho0 = qubit::initial_state(p).map_err(to_py)?;
    let series = evolve_lindblad_with(&model, &rho0, t_end, StepPlan::every_step(dt)).map_err(to_py)?;
    Ok(work_extraction_time(&series).map_err(to_py)?.time())
}

#[pyfunction]
#[pyo3(signature = (qubit, gamma, nbar=None))]
fn decoherence_time(qubit: &PyQubit, gamma: f64, nbar: Option<f64>) -> PyResult<f64> {
    let p = &qubit.0;
    let model = LindbladModel::driven_qubit(p, gamma, nbar).map_err(to_py)?;
    decoherence_time_general(&model, &qubit::initial_state(p).map_err(to_py)?).map_err(to_py)
}

fn ft_summary<'py>(py: Python<'py>, model: &CompositeModel, rho0: &DensityOperator, t: f64) -> PyResult<Bound<'py, PyDict>> {
    let fw = forward_ensemble(model, rho0, t).map_err(to_py)?;
    let rho_t = model.evolved_local_state(rho0, t).map_err(to_py)?;
    let bw = backward_ensemble(model, rho0, &rho_t, t).map_err(to_py)?;
    let residual = detailed_ft_residuals(&fw, &bw).map_err(to_py)?.into_iter().fold(0.0, f64::max);
    let jensen = jensen_bound_report(&fw);
    let d = PyDict::new(py);
    d.set_item("paths", fw.len())?;
    d.set_item("integral_ft", integral_ft(&fw))?;
    d.set_item("max_detailed_residual", residual)?;
    d.set_item("mean_work", fw.mean_work())?;
    d.set_item("jensen_lhs", jensen.lhs)?;
    d.set_item("jensen_rhs", jensen.rhs)?;
    d.set_item("jensen_slack", jensen.slack)?;
    Ok(d)
}

/// Fluctuation-theorem checks for the closed driven qubit at time `t`.
#[pyfunction]
fn fluctuation_check<'py>(py: Python<'py>, qubit: &PyQubit, t: f64) -> PyResult<Bound<'py, PyDict>> {
    let model = CompositeModel::closed_qubit(&qubit.0).map_err(to_py)?;
    ft_summary(py, &model, &qubit::initial_state(&qubit.0).map_err(to_py)?, t)
}

/// Same checks for a qubit exchanging excitations with a resonant bath qubit.
#[pyfunction]
#[pyo3(signature = (coupling, omega0, beta, t, a=0.3))]
fn exchange_check<'py>(py: Python<'py>, coupling: f64, omega0: f64, beta: f64, t: f64, a: f64) -> PyResult<Bound<'py, PyDict>> {
    let model = build_exchange_model(coupling, omega0, beta).map_err(to_py)?;
    let p = DrivenQubitParams::new(omega0, 1.0, 0.0, beta, a).map_err(to_py)?;
    ft_summary(py, &model, &qubit::initial_state(&p).map_err(to_py)?, t)
}

/// Linear-response work prediction at `t` against the exact value.
#[pyfunction]
#[pyo3(signature = (qubit, t, nodes=32))]
fn fdr_point(qubit: &PyQubit, t: f64, nodes: usize) -> PyResult<HashMap<String, f64>> {
    let p = &qubit.0;
    let reference = p.with_a(0.0);
    let model = CompositeModel::closed_qubit(&reference).map_err(to_py)?;
    let ens = forward_ensemble(&model, &qubit::initial_state(&reference).map_err(to_py)?, t).map_err(to_py)?;
    let f = fdr_work_prediction(p, t, &ens, nodes).map_err(to_py)?;
    Ok(HashMap::from([
        ("t".into(), f.t),
        ("exact_work".into(), f.exact_work),
        ("predicted_work".into(), f.predicted_work),
        ("work_variance".into(), f.work_variance),
        ("q0".into(), f.q0),
        ("e_q".into(), f.e_q),
        ("relative_deviation".into(), f.relative_deviation),
    ]))
}

/// Runs a named scenario from TOML text. Tables come back as
/// `{"columns": [...], "rows": [[...]]}`, reports as parsed JSON.
#[pyfunction]
#[pyo3(signature = (scenario, config=""))]
fn run<'py>(py: Python<'py>, scenario: &str, config: &str) -> PyResult<Bound<'py, PyAny>> {
    let cfg = ScenarioConfig::from_toml_str(config, Some(scenario.parse().map_err(to_py)?)).map_err(to_py)?;
    let data = py.detach(|| run_scenario(&cfg)).map_err(to_py)?;
    match &data {
        Dataset::Table { columns, rows } => {
            let d = PyDict::new(py);
            d.set_item("columns", columns.clone())?;
            d.set_item("rows", rows.clone())?;
            Ok(d.into_any())
        }
        Dataset::Report(_) => json_to_py(py, &data.render(OutputFormat::Json)),
    }
}

/// Timescales and regime criteria for a scenario config.
#[pyfunction]
#[pyo3(signature = (scenario, config=""))]
fn criteria<'py>(py: Python<'py>, scenario: &str, config: &str) -> PyResult<Bound<'py, PyAny>> {
    let cfg = ScenarioConfig::from_toml_str(config, Some(scenario.parse().map_err(to_py)?)).map_err(to_py)?;
    let v = report_criteria(&cfg).map_err(to_py)?;
    json_to_py(py, &v.to_string())
}

#[pymodule]
fn cthermo(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDensity>()?;
    m.add_class::<PyQubit>()?;
    m.add_function(wrap_pyfunction!(evolve_lindblad, m)?)?;
    m.add_function(wrap_pyfunction!(extraction_time, m)?)?;
    m.add_function(wrap_pyfunction!(decoherence_time, m)?)?;
    m.add_function(wrap_pyfunction!(fluctuation_check, m)?)?;
    m.add_function(wrap_pyfunction!(exchange_check, m)?)?;
    m.add_function(wrap_pyfunction!(fdr_point, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(criteria, m)?)?;
    Ok(())
}
