//! Python module `mpdo`.

use std::collections::BTreeMap;
use std::path::PathBuf;

use mpdo_core::analysis::{self, ProbDist};
use mpdo_core::circuit::{self, Circuit as CoreCircuit};
use mpdo_core::exact::{self, DensityMatrix as CoreDensityMatrix, StateVector as CoreStateVector};
use mpdo_core::harness::{self, Backend, CircuitSource, ExperimentConfig, Report};
use mpdo_core::mpdo::{mpdo_run, MpdoState as CoreMpdo};
use mpdo_core::mps::{self, MpsState as CoreMps};
use mpdo_core::noise::{NoiseModel, NoiseSpec};
use mpdo_core::qec::{EncodingCircuit, QecBackend, DEFAULT_EPSILON_GRID, DEFAULT_MEMORY_RATE};
use mpdo_core::{Error, C64};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn py_err(e: Error) -> PyErr {
    if e.is_config_error() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

trait OrPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> OrPy<T> for mpdo_core::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

fn parse_noise(noise: &str) -> PyResult<NoiseSpec> {
    noise.parse().py()
}

/// Seeded random brickwork circuit.
#[pyclass(module = "mpdo", frozen, skip_from_py_object)]
#[derive(Clone)]
struct Circuit {
    inner: CoreCircuit,
}

#[pymethods]
impl Circuit {
    #[staticmethod]
    #[pyo3(signature = (n_qubits, depth, seed=0))]
    fn random(n_qubits: usize, depth: usize, seed: u64) -> PyResult<Self> {
        Ok(Self {
            inner: circuit::random_circuit(n_qubits, depth, seed).py()?,
        })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: CoreCircuit::from_json(text).py()?,
        })
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn n_qubits(&self) -> usize {
        self.inner.n_qubits
    }

    #[getter]
    fn depth(&self) -> usize {
        self.inner.depth()
    }

    fn __repr__(&self) -> String {
        format!("Circuit(n_qubits={}, depth={})", self.inner.n_qubits, self.inner.depth())
    }
}

#[pyclass(module = "mpdo", frozen)]
struct StateVector {
    inner: CoreStateVector,
}

#[pymethods]
impl StateVector {
    #[getter]
    fn n_qubits(&self) -> usize {
        self.inner.n_qubits()
    }

    fn amplitudes(&self) -> Vec<C64> {
        self.inner.amplitudes().to_vec()
    }

    fn probabilities(&self) -> Vec<f64> {
        self.inner.probabilities()
    }
}

#[pyclass(module = "mpdo", frozen)]
struct DensityMatrix {
    inner: CoreDensityMatrix,
}

#[pymethods]
impl DensityMatrix {
    #[getter]
    fn n_qubits(&self) -> usize {
        self.inner.n_qubits()
    }

    /// Row-major entries.
    fn entries(&self) -> Vec<C64> {
        self.inner.entries().to_vec()
    }

    fn trace(&self) -> f64 {
        self.inner.trace().re
    }

    fn purity(&self) -> f64 {
        self.inner.purity()
    }

    fn probabilities(&self) -> Vec<f64> {
        self.inner.diagonal()
    }

    fn min_eigenvalue(&self) -> PyResult<f64> {
        self.inner.min_eigenvalue().py()
    }

    /// Root fidelity to another density matrix or to a pure state.
    fn fidelity(&self, other: &Bound<'_, PyAny>) -> PyResult<f64> {
        if let Ok(rho) = other.cast::<DensityMatrix>() {
            return analysis::fidelity(&self.inner, &rho.get().inner).py();
        }
        if let Ok(psi) = other.cast::<StateVector>() {
            return analysis::fidelity_pure(&psi.get().inner, &self.inner).py();
        }
        Err(PyValueError::new_err("expected a DensityMatrix or StateVector"))
    }
}

/// Truncated matrix product state of a noiseless circuit.
#[pyclass(module = "mpdo", frozen)]
struct MpsState {
    inner: CoreMps,
}

#[pymethods]
impl MpsState {
    #[staticmethod]
    fn run(circuit: &Circuit, chi: usize) -> PyResult<Self> {
        Ok(Self {
            inner: mps::mps_run(&circuit.inner, chi).py()?,
        })
    }

    fn bond_dims(&self) -> Vec<usize> {
        self.inner.bond_dims()
    }

    #[getter]
    fn discarded_weight(&self) -> f64 {
        self.inner.total_discarded_weight()
    }

    fn to_state_vector(&self) -> PyResult<StateVector> {
        Ok(StateVector {
            inner: self.inner.to_state_vector().py()?,
        })
    }

    /// `|⟨ψ|ψ_mps⟩|`
    fn fidelity_to(&self, psi: &StateVector) -> PyResult<f64> {
        self.inner.fidelity_to(&psi.inner).py()
    }
}

/// Matrix product density operator.
#[pyclass(module = "mpdo", frozen)]
struct MpdoState {
    inner: CoreMpdo,
}

#[pymethods]
impl MpdoState {
    /// Runs `circuit` with noise given as `"MODEL:RATE"` or `"none"`.
    #[staticmethod]
    #[pyo3(signature = (circuit, noise="none", chi=None, kappa=None))]
    fn run(circuit: &Circuit, noise: &str, chi: Option<usize>, kappa: Option<usize>) -> PyResult<Self> {
        Ok(Self {
            inner: mpdo_run(&circuit.inner, &parse_noise(noise)?, chi, kappa).py()?,
        })
    }

    #[staticmethod]
    fn from_snapshot_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: CoreMpdo::from_snapshot_json(text).py()?,
        })
    }

    fn to_snapshot_json(&self) -> String {
        self.inner.to_snapshot_json()
    }

    #[getter]
    fn n_qubits(&self) -> usize {
        self.inner.n_qubits()
    }

    fn bond_dims(&self) -> Vec<usize> {
        self.inner.bond_dims()
    }

    fn inner_dims(&self) -> Vec<usize> {
        self.inner.inner_dims()
    }

    #[getter]
    fn bond_discarded_weight(&self) -> f64 {
        self.inner.bond_discarded_weight()
    }

    #[getter]
    fn inner_discarded_weight(&self) -> f64 {
        self.inner.inner_discarded_weight()
    }

    #[getter]
    fn trace_factor(&self) -> f64 {
        self.inner.trace_factor()
    }

    fn trace(&self) -> f64 {
        self.inner.trace()
    }

    fn to_density_matrix(&self) -> PyResult<DensityMatrix> {
        Ok(DensityMatrix {
            inner: self.inner.to_density_matrix().py()?,
        })
    }

    fn probabilities(&self) -> PyResult<Vec<f64>> {
        Ok(self.inner.full_distribution().py()?.probs().to_vec())
    }

    fn bitstring_prob(&self, bitstring: &str) -> PyResult<f64> {
        self.inner.bitstring_prob(bitstring).py()
    }

    #[pyo3(signature = (shots, seed=0))]
    fn sample_counts(&self, shots: usize, seed: u64) -> PyResult<BTreeMap<String, u64>> {
        self.inner.sample_counts(shots, seed).py()
    }
}

#[pyfunction]
fn run_pure(circuit: &Circuit) -> PyResult<StateVector> {
    Ok(StateVector {
        inner: exact::run_pure(&circuit.inner).py()?,
    })
}

#[pyfunction]
#[pyo3(signature = (circuit, noise="none"))]
fn run_noisy(circuit: &Circuit, noise: &str) -> PyResult<DensityMatrix> {
    Ok(DensityMatrix {
        inner: exact::run_noisy(&circuit.inner, &parse_noise(noise)?).py()?,
    })
}

#[pyfunction]
fn fidelity(rho: &DensityMatrix, sigma: &DensityMatrix) -> PyResult<f64> {
    analysis::fidelity(&rho.inner, &sigma.inner).py()
}

fn dist(p: Vec<f64>) -> PyResult<ProbDist> {
    let n = p.len().trailing_zeros() as usize;
    if p.len() != 1 << n {
        return Err(PyValueError::new_err(format!("length {} is not a power of two", p.len())));
    }
    ProbDist::new(n, p).py()
}

/// `H(P, Ps) = −Σ P ln max(Ps, floor)` over full probability vectors.
#[pyfunction]
#[pyo3(signature = (p, ps, floor=analysis::DEFAULT_FLOOR))]
fn cross_entropy(p: Vec<f64>, ps: Vec<f64>, floor: f64) -> PyResult<f64> {
    analysis::cross_entropy(&dist(p)?, &dist(ps)?, floor).py()
}

#[pyfunction]
fn porter_thomas_cdf(p: f64, m: f64) -> PyResult<f64> {
    analysis::porter_thomas_cdf(p, m).py()
}

#[pyfunction]
fn noisy_depolarizing_cdf(p: f64, alpha: f64, m: f64) -> PyResult<f64> {
    analysis::noisy_depolarizing_cdf(p, alpha, m).py()
}

/// Same as `mpdo run`; returns the result document as JSON text.
#[pyfunction]
#[pyo3(signature = (backend, circuit_path=None, n_qubits=None, depth=None, circuit_seed=0, noise="none", chi=None, kappa=None, seed=0, shots=harness::DEFAULT_SHOTS))]
#[allow(clippy::too_many_arguments)]
fn run_experiment(
    backend: &str,
    circuit_path: Option<PathBuf>,
    n_qubits: Option<usize>,
    depth: Option<usize>,
    circuit_seed: u64,
    noise: &str,
    chi: Option<usize>,
    kappa: Option<usize>,
    seed: u64,
    shots: usize,
) -> PyResult<String> {
    let source = match (circuit_path, n_qubits, depth) {
        (Some(path), None, None) => CircuitSource::File { path },
        (None, Some(n_qubits), Some(depth)) => CircuitSource::Generated {
            n_qubits,
            depth,
            seed: circuit_seed,
        },
        _ => {
            return Err(PyValueError::new_err(
                "give either circuit_path or both n_qubits and depth",
            ))
        }
    };
    let mut cfg = ExperimentConfig::new(source, backend.parse::<Backend>().py()?);
    cfg.noise = parse_noise(noise)?;
    cfg.chi = chi;
    cfg.kappa = kappa;
    cfg.seed = seed;
    cfg.shots = shots;
    Ok(harness::run(&cfg).py()?.to_json())
}

/// Noise rate at which the exact noisy output has root fidelity `target`
/// to the noiseless state.
#[pyfunction]
#[pyo3(signature = (circuit, model, target, tol=1e-3))]
fn calibrate(circuit: &Circuit, model: &str, target: f64, tol: f64) -> PyResult<f64> {
    let model: NoiseModel = model.parse().py()?;
    Ok(harness::calibrate_noise(&circuit.inner, model, target, tol).py()?.epsilon)
}

/// Five-qubit code experiment; returns the report as JSON text.
#[pyfunction]
#[pyo3(signature = (models=None, epsilons=None, memory_rate=DEFAULT_MEMORY_RATE, chi=16, kappa=32))]
fn qec(
    models: Option<Vec<String>>,
    epsilons: Option<Vec<f64>>,
    memory_rate: f64,
    chi: usize,
    kappa: usize,
) -> PyResult<String> {
    let models = match models {
        Some(m) => m.iter().map(|s| s.parse()).collect::<mpdo_core::Result<Vec<NoiseModel>>>().py()?,
        None => NoiseModel::ALL.to_vec(),
    };
    let eps = epsilons.unwrap_or_else(|| DEFAULT_EPSILON_GRID.to_vec());
    let backends = [QecBackend::ExactDm, QecBackend::Mpdo { chi, kappa }];
    let report =
        harness::qec_report(&EncodingCircuit::five_qubit(), &models, &eps, memory_rate, &backends).py()?;
    Ok(report.to_json())
}

#[pymodule]
pub fn mpdo(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Circuit>()?;
    m.add_class::<StateVector>()?;
    m.add_class::<DensityMatrix>()?;
    m.add_class::<MpsState>()?;
    m.add_class::<MpdoState>()?;
    m.add_function(wrap_pyfunction!(run_pure, m)?)?;
    m.add_function(wrap_pyfunction!(run_noisy, m)?)?;
    m.add_function(wrap_pyfunction!(fidelity, m)?)?;
    m.add_function(wrap_pyfunction!(cross_entropy, m)?)?;
    m.add_function(wrap_pyfunction!(porter_thomas_cdf, m)?)?;
    m.add_function(wrap_pyfunction!(noisy_depolarizing_cdf, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(calibrate, m)?)?;
    m.add_function(wrap_pyfunction!(qec, m)?)?;
    Ok(())
}
