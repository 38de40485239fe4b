//! Experiment driver behind the `mpdo` command line tool.
//!
//! Every report type serializes to JSON and to a headered CSV table with a
//! fixed column set. Run results keep wall-clock data in a separate
//! `metadata` block so that the `result` block is byte-identical across
//! repeated runs with the same configuration.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{
    cross_entropy, fidelity_pure, ks_distance_to, noisy_depolarizing_cdf, porter_thomas_cdf, EmpiricalCdf,
    FidelityReference, ProbDist, DEFAULT_FLOOR,
};
use crate::circuit::{random_circuit, Circuit};
use crate::error::{Error, Result};
use crate::exact::{bitstring_distribution, run_noisy, run_pure, DensityMatrix, DEFAULT_DENSITY_CAP, DEFAULT_PURE_CAP};
use crate::mpdo::{mpdo_run, LayerRecord, MpdoState};
use crate::mps::{mps_fidelity_to, mps_run, MpsState};
use crate::noise::{NoiseModel, NoiseSpec};
use crate::qec::{qec_experiment, unencoded_baseline, EncodingCircuit, QecBackend, QecTable};

pub const RESULT_SCHEMA: &str = "mpdo-run-result/1";
pub const DEFAULT_SHOTS: usize = 8192;
/// Largest register whose full distribution is written into run results.
pub const FULL_DISTRIBUTION_CAP: usize = 12;
/// Largest register for which `run` computes an oracle fidelity unasked.
pub const ORACLE_DENSITY_CAP: usize = 10;
pub const ORACLE_PURE_CAP: usize = 20;
pub const VERIFY_CAP: usize = 6;
pub const VERIFY_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    ExactSv,
    ExactDm,
    Mps,
    Mpdo,
}

impl Backend {
    pub const ALL: [Backend; 4] = [Backend::ExactSv, Backend::ExactDm, Backend::Mps, Backend::Mpdo];

    pub fn name(self) -> &'static str {
        match self {
            Backend::ExactSv => "exact-sv",
            Backend::ExactDm => "exact-dm",
            Backend::Mps => "mps",
            Backend::Mpdo => "mpdo",
        }
    }

    /// Pure-state backends only simulate noiseless circuits.
    pub fn accepts_noise(self) -> bool {
        matches!(self, Backend::ExactDm | Backend::Mpdo)
    }
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Backend::ALL
            .into_iter()
            .find(|b| b.name() == s)
            .ok_or_else(|| Error::config(format!("unknown backend '{s}' (exact-sv, exact-dm, mps, mpdo)")))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum OutputFormat {
    #[default]
    Json,
    Csv,
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(OutputFormat::Json),
            "csv" => Ok(OutputFormat::Csv),
            other => Err(Error::config(format!("unknown format '{other}' (json, csv)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CircuitSource {
    File { path: PathBuf },
    Generated { n_qubits: usize, depth: usize, seed: u64 },
}

impl CircuitSource {
    pub fn load(&self) -> Result<Circuit> {
        match self {
            CircuitSource::File { path } => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
                Circuit::from_json(&text)
            }
            CircuitSource::Generated { n_qubits, depth, seed } => random_circuit(*n_qubits, *depth, *seed),
        }
    }
}

/// Backend plus its truncation caps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct BackendSpec {
    pub backend: Backend,
    pub chi: Option<usize>,
    pub kappa: Option<usize>,
}

impl BackendSpec {
    pub fn new(backend: Backend, chi: Option<usize>, kappa: Option<usize>) -> Self {
        Self { backend, chi, kappa }
    }

    pub fn validate(&self, noise: &NoiseSpec) -> Result<()> {
        if !self.backend.accepts_noise() && !noise.is_noiseless() {
            return Err(Error::config(format!(
                "backend {} accepts only noise \"none\", got {noise}",
                self.backend
            )));
        }
        match self.backend {
            Backend::ExactSv | Backend::ExactDm if self.chi.is_some() || self.kappa.is_some() => Err(
                Error::config(format!("--chi/--kappa do not apply to backend {}", self.backend)),
            ),
            Backend::Mps if self.kappa.is_some() => Err(Error::config("--kappa does not apply to backend mps")),
            _ if self.chi == Some(0) || self.kappa == Some(0) => Err(Error::config("caps must be at least 1")),
            _ => Ok(()),
        }
    }

    /// No truncation beyond numerical zeros.
    pub fn is_unlimited(&self, n_qubits: usize) -> bool {
        match self.backend {
            Backend::ExactSv | Backend::ExactDm => true,
            Backend::Mps => self.chi.is_none_or(|c| c >= full_mps_chi(n_qubits)),
            Backend::Mpdo => self.chi.is_none() && self.kappa.is_none(),
        }
    }
}

/// `NAME[:CHI[:KAPPA]]`, e.g. `mpdo:32:64` or `mps:8`.
impl FromStr for BackendSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.split(':');
        let backend: Backend = parts.next().unwrap_or_default().trim().parse()?;
        let mut cap = |what: &str| -> Result<Option<usize>> {
            parts
                .next()
                .map(|v| {
                    v.trim()
                        .parse::<usize>()
                        .map_err(|_| Error::config(format!("bad {what} '{v}' in backend spec '{s}'")))
                })
                .transpose()
        };
        let chi = cap("chi")?;
        let kappa = cap("kappa")?;
        if parts.next().is_some() {
            return Err(Error::config(format!("too many fields in backend spec '{s}'")));
        }
        Ok(BackendSpec::new(backend, chi, kappa))
    }
}

/// Bond dimension at which an MPS on `n` qubits is exact.
pub fn full_mps_chi(n_qubits: usize) -> usize {
    1usize << (n_qubits / 2).min(usize::BITS as usize - 2)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub circuit: CircuitSource,
    pub backend: Backend,
    pub noise: NoiseSpec,
    pub chi: Option<usize>,
    pub kappa: Option<usize>,
    pub seed: u64,
    pub shots: usize,
    pub output: Option<PathBuf>,
    pub format: OutputFormat,
    pub verify: bool,
}

impl ExperimentConfig {
    pub fn new(circuit: CircuitSource, backend: Backend) -> Self {
        Self {
            circuit,
            backend,
            noise: NoiseSpec::NONE,
            chi: None,
            kappa: None,
            seed: 0,
            shots: DEFAULT_SHOTS,
            output: None,
            format: OutputFormat::Json,
            verify: false,
        }
    }

    pub fn backend_spec(&self) -> BackendSpec {
        BackendSpec::new(self.backend, self.chi, self.kappa)
    }

    pub fn validate(&self) -> Result<()> {
        self.backend_spec().validate(&self.noise)?;
        if self.shots == 0 {
            return Err(Error::config("shots must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConfigEcho {
    pub circuit: CircuitSource,
    pub backend: Backend,
    pub noise: String,
    pub chi: Option<usize>,
    pub kappa: Option<usize>,
    pub seed: u64,
    pub shots: usize,
    pub verify: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DistributionOut {
    Full { probabilities: Vec<f64> },
    Sampled { shots: usize, seed: u64, counts: BTreeMap<String, u64> },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OracleCheck {
    pub oracle: Backend,
    pub fidelity: f64,
    /// Present when `--verify` was requested.
    pub passed: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TruncationLedger {
    pub bond_discarded_weight: f64,
    pub inner_discarded_weight: f64,
    pub peak_bond_dim: usize,
    pub peak_inner_dim: Option<usize>,
    pub trace_factor: Option<f64>,
    pub layers: Vec<LayerRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunReport {
    pub schema: String,
    pub config: ConfigEcho,
    pub n_qubits: usize,
    pub depth: usize,
    pub circuit_seed: u64,
    pub distribution: DistributionOut,
    pub oracle: Option<OracleCheck>,
    pub truncation: Option<TruncationLedger>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunMetadata {
    pub wall_time_s: f64,
    pub started_unix_s: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunResult {
    pub result: RunReport,
    pub metadata: RunMetadata,
}

enum Simulated {
    Pure(crate::exact::StateVector),
    Dense(DensityMatrix),
    Mps(MpsState),
    Mpdo(MpdoState),
}

fn simulate(circuit: &Circuit, spec: &BackendSpec, noise: &NoiseSpec) -> Result<Simulated> {
    spec.validate(noise)?;
    Ok(match spec.backend {
        Backend::ExactSv => Simulated::Pure(run_pure(circuit)?),
        Backend::ExactDm => Simulated::Dense(run_noisy(circuit, noise)?),
        Backend::Mps => Simulated::Mps(mps_run(circuit, spec.chi.unwrap_or(full_mps_chi(circuit.n_qubits)))?),
        Backend::Mpdo => Simulated::Mpdo(mpdo_run(circuit, noise, spec.chi, spec.kappa)?),
    })
}

impl Simulated {
    fn distribution(&self) -> Result<ProbDist> {
        match self {
            Simulated::Pure(psi) => bitstring_distribution(psi),
            Simulated::Dense(rho) => bitstring_distribution(rho),
            Simulated::Mps(m) => bitstring_distribution(&m.to_state_vector()?),
            Simulated::Mpdo(m) => m.full_distribution(),
        }
    }

    fn distribution_out(&self, n: usize, shots: usize, seed: u64) -> Result<DistributionOut> {
        if n <= FULL_DISTRIBUTION_CAP {
            return Ok(DistributionOut::Full {
                probabilities: self.distribution()?.probs().to_vec(),
            });
        }
        let counts = match self {
            Simulated::Mpdo(m) => m.sample_counts(shots, seed)?,
            other => other.distribution()?.sample_counts(shots, seed),
        };
        Ok(DistributionOut::Sampled { shots, seed, counts })
    }

    fn ledger(&self) -> Option<TruncationLedger> {
        match self {
            Simulated::Mps(m) => Some(TruncationLedger {
                bond_discarded_weight: m.total_discarded_weight(),
                inner_discarded_weight: 0.0,
                peak_bond_dim: m.bond_dims().into_iter().max().unwrap_or(1),
                peak_inner_dim: None,
                trace_factor: None,
                layers: Vec::new(),
            }),
            Simulated::Mpdo(m) => Some(TruncationLedger {
                bond_discarded_weight: m.bond_discarded_weight(),
                inner_discarded_weight: m.inner_discarded_weight(),
                peak_bond_dim: m.peak_bond_dim(),
                peak_inner_dim: Some(m.peak_inner_dim()),
                trace_factor: Some(m.trace_factor()),
                layers: m.layer_records().to_vec(),
            }),
            _ => None,
        }
    }
}

/// Fidelity of a simulated state against the matching oracle backend.
fn oracle_fidelity(circuit: &Circuit, sim: &Simulated, noise: &NoiseSpec) -> Result<(Backend, f64)> {
    match sim {
        Simulated::Pure(psi) => {
            let rho = run_noisy(circuit, &NoiseSpec::NONE)?;
            Ok((Backend::ExactDm, fidelity_pure(psi, &rho)?))
        }
        Simulated::Dense(rho) => {
            let d = mpdo_run(circuit, noise, None, None)?.to_density_matrix()?;
            Ok((Backend::Mpdo, FidelityReference::new(rho)?.fidelity(&d)?))
        }
        Simulated::Mps(m) => Ok((Backend::ExactSv, mps_fidelity_to(m, &run_pure(circuit)?)?)),
        Simulated::Mpdo(m) => {
            let rho = run_noisy(circuit, noise)?;
            Ok((Backend::ExactDm, FidelityReference::new(&rho)?.fidelity(&m.to_density_matrix()?)?))
        }
    }
}

fn oracle_feasible(backend: Backend, n: usize) -> bool {
    match backend {
        Backend::ExactSv | Backend::Mps => n <= ORACLE_PURE_CAP,
        Backend::ExactDm | Backend::Mpdo => n <= ORACLE_DENSITY_CAP,
    }
}

pub fn run(config: &ExperimentConfig) -> Result<RunResult> {
    config.validate()?;
    let started_unix_s = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let t0 = Instant::now();
    let circuit = config.circuit.load()?;
    let n = circuit.n_qubits;
    let spec = config.backend_spec();
    if config.verify && n > VERIFY_CAP {
        return Err(Error::config(format!("--verify needs at most {VERIFY_CAP} qubits, circuit has {n}")));
    }
    let sim = simulate(&circuit, &spec, &config.noise)?;
    let distribution = sim.distribution_out(n, config.shots, config.seed)?;
    let oracle = if config.verify || oracle_feasible(config.backend, n) {
        let (oracle, fidelity) = oracle_fidelity(&circuit, &sim, &config.noise)?;
        let passed = config.verify.then_some(fidelity >= 1.0 - VERIFY_TOL);
        if passed == Some(false) && spec.is_unlimited(n) {
            return Err(Error::numerical(format!(
                "verification failed: fidelity {fidelity} against {oracle} below {}",
                1.0 - VERIFY_TOL
            )));
        }
        Some(OracleCheck { oracle, fidelity, passed })
    } else {
        None
    };
    let result = RunReport {
        schema: RESULT_SCHEMA.to_string(),
        config: ConfigEcho {
            circuit: config.circuit.clone(),
            backend: config.backend,
            noise: config.noise.to_string(),
            chi: config.chi,
            kappa: config.kappa,
            seed: config.seed,
            shots: config.shots,
            verify: config.verify,
        },
        n_qubits: n,
        depth: circuit.depth(),
        circuit_seed: circuit.seed,
        distribution,
        oracle,
        truncation: sim.ledger(),
    };
    Ok(RunResult {
        result,
        metadata: RunMetadata {
            wall_time_s: t0.elapsed().as_secs_f64(),
            started_unix_s,
        },
    })
}

/// JSON and fixed-column CSV renderings.
pub trait Report: Serialize {
    fn csv_header(&self) -> Vec<&'static str>;
    fn csv_rows(&self) -> Vec<Vec<String>>;

    fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports serialize");
        s.push('\n');
        s
    }

    fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(self.csv_header()).expect("in-memory write");
        for row in self.csv_rows() {
            w.write_record(&row).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
    }

    fn render(&self, format: OutputFormat) -> String {
        match format {
            OutputFormat::Json => self.to_json(),
            OutputFormat::Csv => self.to_csv(),
        }
    }
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl Report for RunResult {
    fn csv_header(&self) -> Vec<&'static str> {
        vec!["bitstring", "probability", "count"]
    }

    fn csv_rows(&self) -> Vec<Vec<String>> {
        let n = self.result.n_qubits;
        match &self.result.distribution {
            DistributionOut::Full { probabilities } => probabilities
                .iter()
                .enumerate()
                .map(|(i, p)| vec![crate::analysis::index_to_bitstring(i, n), p.to_string(), String::new()])
                .collect(),
            DistributionOut::Sampled { shots, counts, .. } => counts
                .iter()
                .map(|(b, c)| vec![b.clone(), (*c as f64 / *shots as f64).to_string(), c.to_string()])
                .collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CalibrationStep {
    pub epsilon: f64,
    pub fidelity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Calibration {
    pub model: String,
    pub target: f64,
    pub tol: f64,
    pub epsilon: f64,
    pub achieved: f64,
    pub steps: Vec<CalibrationStep>,
}

/// Finds `ε` with `|F(ρ₀, ρ_e(ε)) − target| ≤ tol` by bisection on `[0, 1]`,
/// where `ρ₀` is the noiseless output state.
pub fn calibrate_noise(circuit: &Circuit, model: NoiseModel, target: f64, tol: f64) -> Result<Calibration> {
    if !(target > 0.0 && target <= 1.0) {
        return Err(Error::config(format!("target fidelity {target} outside (0, 1]")));
    }
    if !(tol > 0.0) {
        return Err(Error::config(format!("tolerance {tol} must be positive")));
    }
    if model == NoiseModel::None {
        return Err(Error::config("calibration needs a noise model"));
    }
    let psi0 = run_pure(circuit)?;
    let mut steps = Vec::new();
    let mut eval = |eps: f64| -> Result<f64> {
        let f = fidelity_pure(&psi0, &run_noisy(circuit, &NoiseSpec::new(model, eps)?)?)?;
        steps.push(CalibrationStep { epsilon: eps, fidelity: f });
        Ok(f)
    };
    let done = |eps: f64, achieved: f64, steps: Vec<CalibrationStep>| Calibration {
        model: model.name().to_string(),
        target,
        tol,
        epsilon: eps,
        achieved,
        steps,
    };
    // Past ε = 1/2 the Z-type channels start restoring coherence.
    let eps_max = match model {
        NoiseModel::Dephasing | NoiseModel::CollectiveDephasing => 0.5,
        _ => 1.0,
    };
    let mut lo = 0.0;
    let mut f_lo = eval(lo)?;
    if (f_lo - target).abs() <= tol {
        return Ok(done(lo, f_lo, steps));
    }
    let mut hi = eps_max / 128.0;
    let mut f_hi;
    loop {
        f_hi = eval(hi)?;
        if (f_hi - target).abs() <= tol {
            return Ok(done(hi, f_hi, steps));
        }
        if f_hi < target || hi >= eps_max {
            break;
        }
        (lo, f_lo) = (hi, f_hi);
        hi = (2.0 * hi).min(eps_max);
    }
    if !(f_lo > target && target > f_hi) {
        return Err(Error::config(format!(
            "target {target} unreachable: fidelity spans [{f_hi}, {}] over ε ∈ [0, {eps_max}]",
            steps[0].fidelity
        )));
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let f = eval(mid)?;
        if f > f_lo + 1e-12 || f < f_hi - 1e-12 {
            return Err(Error::numerical(format!(
                "fidelity not monotone in ε: F({lo})={f_lo}, F({mid})={f}, F({hi})={f_hi}"
            )));
        }
        if (f - target).abs() <= tol {
            return Ok(done(mid, f, steps));
        }
        if f > target {
            (lo, f_lo) = (mid, f);
        } else {
            (hi, f_hi) = (mid, f);
        }
    }
    Err(Error::numerical(format!("bisection did not reach tolerance {tol}")))
}

impl Report for Calibration {
    fn csv_header(&self) -> Vec<&'static str> {
        vec!["model", "target", "tol", "epsilon", "achieved", "evaluations"]
    }

    fn csv_rows(&self) -> Vec<Vec<String>> {
        vec![vec![
            self.model.clone(),
            self.target.to_string(),
            self.tol.to_string(),
            self.epsilon.to_string(),
            self.achieved.to_string(),
            self.steps.len().to_string(),
        ]]
    }
}

/// `r = F(ρ₀, ρ_s)` for each MPS bond cap.
pub fn mps_reference_fidelities(circuit: &Circuit, chis: &[usize]) -> Result<Vec<(usize, f64)>> {
    let psi0 = run_pure(circuit)?;
    chis.iter()
        .map(|&chi| Ok((chi, mps_fidelity_to(&mps_run(circuit, chi)?, &psi0)?)))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KappaRule {
    /// `κ = factor · χ`
    Ratio(usize),
    Fixed(usize),
}

/// `(χ, κ)` pairs for a bond-dimension sweep.
pub fn chi_sweep(chis: &[usize], rule: KappaRule) -> Vec<(usize, usize)> {
    chis.iter()
        .map(|&c| match rule {
            KappaRule::Ratio(f) => (c, f * c),
            KappaRule::Fixed(k) => (c, k),
        })
        .collect()
}

/// `(χ, κ)` pairs for an inner-dimension sweep at fixed `χ`.
pub fn kappa_sweep(chi: usize, kappas: &[usize]) -> Vec<(usize, usize)> {
    kappas.iter().map(|&k| (chi, k)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepPoint {
    pub rate: f64,
    pub chi: usize,
    pub kappa: usize,
    pub fidelity: f64,
    pub bond_discarded_weight: f64,
    pub inner_discarded_weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepReport {
    pub model: String,
    pub n_qubits: usize,
    pub depth: usize,
    pub points: Vec<SweepPoint>,
}

/// `F(ρ_e, ρ_d)` on the grid `rates × caps`.
pub fn truncation_sweep(
    circuit: &Circuit,
    model: NoiseModel,
    rates: &[f64],
    caps: &[(usize, usize)],
) -> Result<SweepReport> {
    if circuit.n_qubits > DEFAULT_DENSITY_CAP {
        return Err(Error::CapExceeded {
            what: "truncation sweep oracle",
            n_qubits: circuit.n_qubits,
            cap: DEFAULT_DENSITY_CAP,
        });
    }
    let specs: Vec<NoiseSpec> = rates.iter().map(|&r| NoiseSpec::new(model, r)).collect::<Result<_>>()?;
    let references: Vec<FidelityReference> = specs
        .par_iter()
        .map(|s| FidelityReference::new(&run_noisy(circuit, s)?))
        .collect::<Result<_>>()?;
    let jobs: Vec<(usize, usize, usize)> = (0..rates.len())
        .flat_map(|r| caps.iter().map(move |&(c, k)| (r, c, k)))
        .collect();
    let mut points: Vec<SweepPoint> = jobs
        .par_iter()
        .map(|&(r, chi, kappa)| {
            let d = mpdo_run(circuit, &specs[r], Some(chi), Some(kappa))?;
            Ok(SweepPoint {
                rate: rates[r],
                chi,
                kappa,
                fidelity: references[r].fidelity(&d.to_density_matrix()?)?,
                bond_discarded_weight: d.bond_discarded_weight(),
                inner_discarded_weight: d.inner_discarded_weight(),
            })
        })
        .collect::<Result<_>>()?;
    points.sort_by(|a, b| (a.rate, a.chi, a.kappa).partial_cmp(&(b.rate, b.chi, b.kappa)).expect("finite"));
    Ok(SweepReport {
        model: model.name().to_string(),
        n_qubits: circuit.n_qubits,
        depth: circuit.depth(),
        points,
    })
}

impl Report for SweepReport {
    fn csv_header(&self) -> Vec<&'static str> {
        vec!["model", "rate", "chi", "kappa", "fidelity", "bond_discarded_weight", "inner_discarded_weight"]
    }

    fn csv_rows(&self) -> Vec<Vec<String>> {
        self.points
            .iter()
            .map(|p| {
                vec![
                    self.model.clone(),
                    p.rate.to_string(),
                    p.chi.to_string(),
                    p.kappa.to_string(),
                    p.fidelity.to_string(),
                    p.bond_discarded_weight.to_string(),
                    p.inner_discarded_weight.to_string(),
                ]
            })
            .collect()
    }
}

/// Moment estimate of the white-noise weight `α` in `p = (1−α) q + α/M`
/// with `q` Porter–Thomas: `M Σ p² = 1 + (1−α)²`.
pub fn estimate_alpha(dist: &ProbDist) -> f64 {
    let m = dist.len() as f64;
    let s: f64 = dist.probs().iter().map(|p| p * p).sum();
    (1.0 - (m * s - 1.0).max(0.0).sqrt()).clamp(0.0, 1.0)
}

/// Grid of `M·p` values at which curves are tabulated.
pub const PT_GRID_STEP: f64 = 0.05;
pub const PT_GRID_MAX: f64 = 8.0;

pub fn pt_grid() -> Vec<f64> {
    let steps = (PT_GRID_MAX / PT_GRID_STEP).round() as usize;
    (0..=steps).map(|i| i as f64 * PT_GRID_STEP).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PtCurve {
    pub backend: BackendSpec,
    pub rate: f64,
    pub alpha_estimate: f64,
    pub ks_porter_thomas: f64,
    pub ks_noisy_depolarizing: f64,
    pub sorted_p: Vec<f64>,
    /// Empirical CDF on [`pt_grid`].
    pub cdf: Vec<f64>,
    /// Mixed-noise CDF at `alpha_estimate` on [`pt_grid`].
    pub noisy_depolarizing_cdf: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PtReport {
    pub model: String,
    pub n_qubits: usize,
    pub dimension: usize,
    pub grid_mp: Vec<f64>,
    pub porter_thomas_cdf: Vec<f64>,
    pub curves: Vec<PtCurve>,
}

/// Cumulative distributions of the output probabilities for each backend and
/// rate, with the Porter–Thomas and mixed-noise reference curves.
pub fn pt_analysis(circuit: &Circuit, backends: &[BackendSpec], model: NoiseModel, rates: &[f64]) -> Result<PtReport> {
    let n = circuit.n_qubits;
    if n > DEFAULT_PURE_CAP {
        return Err(Error::CapExceeded {
            what: "distribution analysis",
            n_qubits: n,
            cap: DEFAULT_PURE_CAP,
        });
    }
    let m = (1usize << n) as f64;
    let grid = pt_grid();
    let mut jobs = Vec::new();
    for spec in backends {
        if spec.backend.accepts_noise() && model != NoiseModel::None {
            for &r in rates {
                jobs.push((*spec, NoiseSpec::new(model, r)?));
            }
        } else {
            jobs.push((*spec, NoiseSpec::NONE));
        }
    }
    let mut curves: Vec<PtCurve> = jobs
        .par_iter()
        .map(|(spec, noise)| {
            let dist = simulate(circuit, spec, noise)?.distribution()?;
            let ecdf = EmpiricalCdf::new(dist.probs())?;
            let alpha = estimate_alpha(&dist);
            let pt = |p: f64| porter_thomas_cdf(p, m).expect("valid dimension");
            let mixed = |p: f64| noisy_depolarizing_cdf(p, alpha, m).expect("valid alpha");
            Ok(PtCurve {
                backend: *spec,
                rate: noise.rate,
                alpha_estimate: alpha,
                ks_porter_thomas: ks_distance_to(&ecdf, pt),
                ks_noisy_depolarizing: ks_distance_to(&ecdf, mixed),
                sorted_p: ecdf.sorted_values().to_vec(),
                cdf: grid.iter().map(|x| ecdf.eval(x / m)).collect(),
                noisy_depolarizing_cdf: grid.iter().map(|x| mixed(x / m)).collect(),
            })
        })
        .collect::<Result<_>>()?;
    curves.sort_by(|a, b| (a.backend, a.rate).partial_cmp(&(b.backend, b.rate)).expect("finite"));
    Ok(PtReport {
        model: model.name().to_string(),
        n_qubits: n,
        dimension: 1 << n,
        porter_thomas_cdf: grid.iter().map(|x| porter_thomas_cdf(x / m, m)).collect::<Result<_>>()?,
        grid_mp: grid,
        curves,
    })
}

impl Report for PtReport {
    fn csv_header(&self) -> Vec<&'static str> {
        vec![
            "backend",
            "chi",
            "kappa",
            "rate",
            "mp",
            "empirical_cdf",
            "porter_thomas_cdf",
            "noisy_depolarizing_cdf",
        ]
    }

    fn csv_rows(&self) -> Vec<Vec<String>> {
        let mut rows = Vec::new();
        for c in &self.curves {
            for (i, x) in self.grid_mp.iter().enumerate() {
                rows.push(vec![
                    c.backend.backend.to_string(),
                    opt(c.backend.chi),
                    opt(c.backend.kappa),
                    c.rate.to_string(),
                    x.to_string(),
                    c.cdf[i].to_string(),
                    self.porter_thomas_cdf[i].to_string(),
                    c.noisy_depolarizing_cdf[i].to_string(),
                ]);
            }
        }
        rows
    }
}

/// Observed measurement counts. On disk: a JSON object mapping bitstrings
/// (qubit 0 first) to counts, plus a `"shots"` entry holding the total.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CountsHistogram {
    n_qubits: usize,
    counts: BTreeMap<String, u64>,
    shots: u64,
}

impl CountsHistogram {
    pub fn new(counts: BTreeMap<String, u64>) -> Result<Self> {
        let n_qubits = counts
            .keys()
            .next()
            .map(|k| k.len())
            .ok_or_else(|| Error::Parse("counts file has no bitstrings".into()))?;
        for k in counts.keys() {
            if k.len() != n_qubits || !k.chars().all(|c| c == '0' || c == '1') || n_qubits == 0 {
                return Err(Error::Parse(format!("bad bitstring '{k}'")));
            }
        }
        let shots = counts.values().sum();
        if shots == 0 {
            return Err(Error::Parse("counts file has zero shots".into()));
        }
        Ok(Self { n_qubits, counts, shots })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let map: serde_json::Map<String, serde_json::Value> =
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let mut counts = BTreeMap::new();
        let mut shots = None;
        for (k, v) in map {
            let c = v
                .as_u64()
                .ok_or_else(|| Error::Parse(format!("count for '{k}' is not a non-negative integer")))?;
            if k == "shots" {
                shots = Some(c);
            } else {
                counts.insert(k, c);
            }
        }
        let h = Self::new(counts)?;
        match shots {
            Some(s) if s == h.shots => Ok(h),
            Some(s) => Err(Error::Parse(format!("shots field {s} does not equal the count total {}", h.shots))),
            None => Err(Error::Parse("counts file lacks a \"shots\" field".into())),
        }
    }

    pub fn to_json(&self) -> String {
        let mut map = serde_json::Map::new();
        map.insert("shots".into(), self.shots.into());
        for (k, v) in &self.counts {
            map.insert(k.clone(), (*v).into());
        }
        let mut s = serde_json::to_string_pretty(&map).expect("serializable");
        s.push('\n');
        s
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn shots(&self) -> u64 {
        self.shots
    }

    pub fn counts(&self) -> &BTreeMap<String, u64> {
        &self.counts
    }

    /// Empirical distribution `P(x) = count(x) / shots`.
    pub fn to_distribution(&self) -> Result<ProbDist> {
        let mut probs = vec![0.0; 1 << self.n_qubits];
        for (k, &c) in &self.counts {
            probs[crate::analysis::bitstring_to_index(k, self.n_qubits)?] = c as f64 / self.shots as f64;
        }
        ProbDist::new(self.n_qubits, probs)
    }
}

/// `H(P, P_s)` between observed counts and a simulated distribution.
pub fn counts_cross_entropy(counts: &CountsHistogram, simulated: &ProbDist) -> Result<f64> {
    if counts.n_qubits() != simulated.n_qubits() {
        return Err(Error::config(format!(
            "counts over {} qubits against a {}-qubit distribution",
            counts.n_qubits(),
            simulated.n_qubits()
        )));
    }
    cross_entropy(&counts.to_distribution()?, simulated, DEFAULT_FLOOR)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CrossEntropyReport {
    pub backend: BackendSpec,
    pub noise: String,
    pub shots: u64,
    pub cross_entropy: f64,
    pub self_cross_entropy: f64,
}

/// Simulates `circuit` and scores observed counts against it.
pub fn counts_xent_report(
    circuit: &Circuit,
    counts: &CountsHistogram,
    spec: &BackendSpec,
    noise: &NoiseSpec,
) -> Result<CrossEntropyReport> {
    let sim = simulate(circuit, spec, noise)?.distribution()?;
    Ok(CrossEntropyReport {
        backend: *spec,
        noise: noise.to_string(),
        shots: counts.shots(),
        cross_entropy: counts_cross_entropy(counts, &sim)?,
        self_cross_entropy: sim.entropy(),
    })
}

impl Report for CrossEntropyReport {
    fn csv_header(&self) -> Vec<&'static str> {
        vec!["backend", "chi", "kappa", "noise", "shots", "cross_entropy", "self_cross_entropy"]
    }

    fn csv_rows(&self) -> Vec<Vec<String>> {
        vec![vec![
            self.backend.backend.to_string(),
            opt(self.backend.chi),
            opt(self.backend.kappa),
            self.noise.clone(),
            self.shots.to_string(),
            self.cross_entropy.to_string(),
            self.self_cross_entropy.to_string(),
        ]]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QecReport {
    pub code: String,
    pub memory_rate: f64,
    pub baseline: f64,
    pub tables: Vec<QecTable>,
}

/// Recovered-fidelity tables for every model and backend.
pub fn qec_report(
    code: &EncodingCircuit,
    models: &[NoiseModel],
    epsilons: &[f64],
    memory_rate: f64,
    backends: &[QecBackend],
) -> Result<QecReport> {
    let jobs: Vec<(NoiseModel, QecBackend)> = models
        .iter()
        .flat_map(|&m| backends.iter().map(move |&b| (m, b)))
        .collect();
    let tables = jobs
        .par_iter()
        .map(|&(m, b)| qec_experiment(code, m, epsilons, memory_rate, b))
        .collect::<Result<Vec<_>>>()?;
    Ok(QecReport {
        code: code.name.clone(),
        memory_rate,
        baseline: unencoded_baseline(memory_rate)?,
        tables,
    })
}

impl Report for QecReport {
    fn csv_header(&self) -> Vec<&'static str> {
        vec!["model", "backend", "chi", "kappa", "epsilon", "fidelity", "baseline"]
    }

    fn csv_rows(&self) -> Vec<Vec<String>> {
        let mut rows = Vec::new();
        for t in &self.tables {
            let (chi, kappa) = match t.backend {
                QecBackend::ExactDm => (None, None),
                QecBackend::Mpdo { chi, kappa } => (Some(chi), Some(kappa)),
            };
            for p in &t.points {
                rows.push(vec![
                    t.model.clone(),
                    t.backend.name().to_string(),
                    opt(chi),
                    opt(kappa),
                    p.epsilon.to_string(),
                    p.fidelity.to_string(),
                    self.baseline.to_string(),
                ]);
            }
        }
        rows
    }
}
