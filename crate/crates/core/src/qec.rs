//! Encode / memory noise / decode / recover experiment for a five-qubit code.
//!
//! The encoder is a list of `h` and `cz` gates read from JSON. The decoder is
//! its inverse. Gate noise is attached to every `cz` (before the gate, on both
//! legs for one-qubit channels); memory noise hits every qubit between encoder
//! and decoder. Recovery reads the ancilla pattern after decoding and applies
//! the data-qubit Pauli from a syndrome table derived from the encoder itself.

use serde::{Deserialize, Serialize};

use crate::analysis::fidelity_pure;
use crate::error::{Error, Result};
use crate::exact::{DensityMatrix, StateVector};
use crate::gates::{self, Mat2};
use crate::mpdo::{mpdo_product_state, MpdoState};
use crate::noise::{depolarizing, KrausChannel, NoiseModel};
use crate::C64;

pub const FIVE_QUBIT_ENCODER_JSON: &str = include_str!("../data/five_qubit_encoder.json");
pub const DEFAULT_MEMORY_RATE: f64 = 0.05;
pub const DEFAULT_EPSILON_GRID: [f64; 6] = [0.0, 0.02, 0.04, 0.06, 0.08, 0.1];
pub const DEFAULT_CHI: usize = 16;
pub const DEFAULT_KAPPA: usize = 32;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodeGate {
    pub gate: String,
    pub qubits: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Op {
    H(usize),
    Cz(usize, usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncodingCircuit {
    pub name: String,
    pub n_qubits: usize,
    pub input_qubit: usize,
    pub gates: Vec<CodeGate>,
}

impl EncodingCircuit {
    pub fn five_qubit() -> Self {
        Self::from_json(FIVE_QUBIT_ENCODER_JSON).expect("bundled encoder is valid")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        c.ops()?;
        if c.input_qubit >= c.n_qubits {
            return Err(Error::Validation(format!(
                "input qubit {} out of range for {} qubits",
                c.input_qubit, c.n_qubits
            )));
        }
        Ok(c)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }

    pub fn cz_count(&self) -> usize {
        self.gates.iter().filter(|g| g.gate == "cz").count()
    }

    fn ops(&self) -> Result<Vec<Op>> {
        let n = self.n_qubits;
        self.gates
            .iter()
            .map(|g| match (g.gate.as_str(), g.qubits.as_slice()) {
                ("h", &[q]) if q < n => Ok(Op::H(q)),
                ("cz", &[a, b]) if a < n && b < n && a != b => Ok(Op::Cz(a, b)),
                _ => Err(Error::Validation(format!("bad encoder gate {g:?}"))),
            })
            .collect()
    }

    fn inverse_ops(&self) -> Result<Vec<Op>> {
        // every gate is self-inverse
        let mut ops = self.ops()?;
        ops.reverse();
        Ok(ops)
    }

    fn apply_to_vector(&self, psi: &mut StateVector, ops: &[Op]) -> Result<()> {
        let h = gates::flatten2(&gates::hadamard());
        let cz = gates::flatten4(&gates::cz());
        for op in ops {
            match *op {
                Op::H(q) => psi.apply(&[q], &h)?,
                Op::Cz(a, b) => psi.apply(&[a, b], &cz)?,
            }
        }
        Ok(())
    }

    /// Splits a basis index into (data bit, ancilla pattern).
    fn split_index(&self, idx: usize) -> (usize, usize) {
        let n = self.n_qubits;
        let mut anc = 0;
        for q in (0..n).filter(|&q| q != self.input_qubit) {
            anc = (anc << 1) | ((idx >> (n - 1 - q)) & 1);
        }
        ((idx >> (n - 1 - self.input_qubit)) & 1, anc)
    }

    fn join_index(&self, data: usize, anc: usize) -> usize {
        let n = self.n_qubits;
        let others: Vec<usize> = (0..n).filter(|&q| q != self.input_qubit).collect();
        let mut idx = data << (n - 1 - self.input_qubit);
        for (k, &q) in others.iter().enumerate() {
            let bit = (anc >> (others.len() - 1 - k)) & 1;
            idx |= bit << (n - 1 - q);
        }
        idx
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SyndromeEntry {
    /// Pauli error, e.g. `"X2"` or `"I"`.
    pub error: String,
    pub syndrome: usize,
    #[serde(skip)]
    correction: Mat2,
}

/// Maps every ancilla pattern reached by a weight ≤ 1 Pauli error to the
/// data-qubit correction. Built by conjugating each error through the decoder.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SyndromeTable {
    pub entries: Vec<SyndromeEntry>,
}

impl SyndromeTable {
    pub fn build(code: &EncodingCircuit) -> Result<Self> {
        let n = code.n_qubits;
        let enc = code.ops()?;
        let dec = code.inverse_ops()?;
        let paulis = [("X", gates::PAULI_X), ("Y", gates::PAULI_Y), ("Z", gates::PAULI_Z)];
        let mut errors: Vec<(String, Option<(usize, Mat2)>)> = vec![("I".into(), None)];
        for q in 0..n {
            for (name, p) in &paulis {
                errors.push((format!("{name}{q}"), Some((q, *p))));
            }
        }
        let mut entries: Vec<SyndromeEntry> = Vec::new();
        for (label, err) in errors {
            let mut images = Vec::with_capacity(2);
            for data in 0..2 {
                let mut psi = StateVector::basis(n, code.join_index(data, 0));
                code.apply_to_vector(&mut psi, &enc)?;
                if let Some((q, p)) = err {
                    psi.apply(&[q], &gates::flatten2(&p))?;
                }
                code.apply_to_vector(&mut psi, &dec)?;
                images.push(psi);
            }
            // both images must sit on a single ancilla pattern
            let mut syndrome = None;
            for (i, a) in images[0].amplitudes().iter().enumerate() {
                if a.norm_sqr() > 1e-9 {
                    syndrome = Some(code.split_index(i).1);
                    break;
                }
            }
            let s = syndrome.ok_or_else(|| Error::numerical("empty decoded state"))?;
            let mut m = [[C64::new(0.0, 0.0); 2]; 2];
            for (b, img) in images.iter().enumerate() {
                let mut weight = 0.0;
                for a in 0..2 {
                    m[a][b] = img.amplitudes()[code.join_index(a, s)];
                    weight += m[a][b].norm_sqr();
                }
                if (weight - 1.0).abs() > 1e-9 {
                    return Err(Error::Validation(format!(
                        "error {label} does not map to a single syndrome"
                    )));
                }
            }
            if let Some(prev) = entries.iter().find(|e| e.syndrome == s) {
                return Err(Error::Validation(format!(
                    "errors {} and {label} share syndrome {s}",
                    prev.error
                )));
            }
            entries.push(SyndromeEntry {
                error: label,
                syndrome: s,
                correction: gates::adjoint2(&m),
            });
        }
        Ok(Self { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Ideal syndrome measurement plus correction on a decoded state. Patterns
    /// outside the table are left uncorrected.
    pub fn recover(&self, code: &EncodingCircuit, rho: &DensityMatrix) -> Result<DensityMatrix> {
        if rho.n_qubits() != code.n_qubits {
            return Err(Error::DimensionMismatch(format!(
                "{}-qubit state for a {}-qubit code",
                rho.n_qubits(),
                code.n_qubits
            )));
        }
        let patterns = 1usize << (code.n_qubits - 1);
        let mut out = [[C64::new(0.0, 0.0); 2]; 2];
        for s in 0..patterns {
            let mut block = [[C64::new(0.0, 0.0); 2]; 2];
            for (a, row) in block.iter_mut().enumerate() {
                for (b, v) in row.iter_mut().enumerate() {
                    *v = rho.get(code.join_index(a, s), code.join_index(b, s));
                }
            }
            let fixed = match self.entries.iter().find(|e| e.syndrome == s) {
                Some(e) => gates::mul2(&gates::mul2(&e.correction, &block), &gates::adjoint2(&e.correction)),
                None => block,
            };
            for a in 0..2 {
                for b in 0..2 {
                    out[a][b] += fixed[a][b];
                }
            }
        }
        let tr = (out[0][0] + out[1][1]).re;
        let entries = gates::flatten2(&out).into_iter().map(|z| z / tr).collect();
        Ok(DensityMatrix::from_entries_unchecked(1, entries))
    }
}

/// The six single-qubit input states: `|0⟩, |1⟩, |±⟩, |±i⟩`.
pub fn ensemble_states() -> Vec<(&'static str, Mat2)> {
    let h = gates::hadamard();
    let s = [[C64::new(1.0, 0.0), C64::new(0.0, 0.0)], [C64::new(0.0, 0.0), C64::new(0.0, 1.0)]];
    vec![
        ("0", gates::IDENTITY),
        ("1", gates::PAULI_X),
        ("+", h),
        ("-", gates::mul2(&h, &gates::PAULI_X)),
        ("+i", gates::mul2(&s, &h)),
        ("-i", gates::mul2(&gates::adjoint2(&s), &h)),
    ]
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "backend", rename_all = "kebab-case")]
pub enum QecBackend {
    ExactDm,
    Mpdo { chi: usize, kappa: usize },
}

impl QecBackend {
    pub fn name(&self) -> &'static str {
        match self {
            QecBackend::ExactDm => "exact-dm",
            QecBackend::Mpdo { .. } => "mpdo",
        }
    }
}

trait Register {
    fn h(&mut self, q: usize) -> Result<()>;
    fn cz(&mut self, a: usize, b: usize, noise: Option<&KrausChannel>) -> Result<()>;
    fn memory(&mut self, channel: &KrausChannel) -> Result<()>;
    fn end_moment(&mut self) -> Result<()> {
        Ok(())
    }
}

impl Register for DensityMatrix {
    fn h(&mut self, q: usize) -> Result<()> {
        self.apply_unitary(&[q], &gates::flatten2(&gates::hadamard()))
    }

    fn cz(&mut self, a: usize, b: usize, noise: Option<&KrausChannel>) -> Result<()> {
        if let Some(ch) = noise {
            if ch.arity() == 1 {
                self.apply_channel(ch, &[a])?;
                self.apply_channel(ch, &[b])?;
            } else {
                self.apply_channel(ch, &[a, b])?;
            }
        }
        self.apply_unitary(&[a, b], &gates::flatten4(&gates::cz()))
    }

    fn memory(&mut self, channel: &KrausChannel) -> Result<()> {
        for q in 0..self.n_qubits() {
            self.apply_channel(channel, &[q])?;
        }
        Ok(())
    }
}

struct CappedMpdo {
    state: MpdoState,
    chi: usize,
    kappa: usize,
}

impl CappedMpdo {
    fn compress(&mut self) -> Result<()> {
        self.state.canonicalize_truncate_layer(Some(self.chi), Some(self.kappa))?;
        Ok(())
    }
}

impl Register for CappedMpdo {
    fn h(&mut self, q: usize) -> Result<()> {
        self.state.apply_1q_gate(q, &gates::hadamard())
    }

    fn cz(&mut self, a: usize, b: usize, noise: Option<&KrausChannel>) -> Result<()> {
        if let Some(ch) = noise {
            if ch.arity() == 1 {
                self.state.apply_1q_channel(a, ch)?;
                self.state.apply_1q_channel(b, ch)?;
            } else {
                self.state.apply_2q_channel_between(a, b, ch)?;
            }
        }
        self.state.apply_gate_between(a, b, &gates::cz())
    }

    fn memory(&mut self, channel: &KrausChannel) -> Result<()> {
        for q in 0..self.state.n_qubits() {
            self.state.apply_1q_channel(q, channel)?;
        }
        self.compress()
    }

    fn end_moment(&mut self) -> Result<()> {
        self.compress()
    }
}

/// Applies `ops` in order, closing a moment whenever the next gate touches
/// a qubit already used in the current one.
fn run_ops<R: Register>(reg: &mut R, ops: &[Op], noise: Option<&KrausChannel>) -> Result<()> {
    let mut busy: Vec<usize> = Vec::new();
    for op in ops {
        let qubits = match *op {
            Op::H(q) => vec![q],
            Op::Cz(a, b) => vec![a, b],
        };
        if qubits.iter().any(|q| busy.contains(q)) {
            reg.end_moment()?;
            busy.clear();
        }
        busy.extend(&qubits);
        match *op {
            Op::H(q) => reg.h(q)?,
            Op::Cz(a, b) => reg.cz(a, b, noise)?,
        }
    }
    reg.end_moment()
}

/// Runs encode, memory noise, decode on one prepared input and returns the
/// decoded `n`-qubit density matrix.
fn decoded_state(
    code: &EncodingCircuit,
    prep: &Mat2,
    gate_noise: Option<&KrausChannel>,
    memory: Option<&KrausChannel>,
    backend: QecBackend,
) -> Result<DensityMatrix> {
    let enc = code.ops()?;
    let dec = code.inverse_ops()?;
    match backend {
        QecBackend::ExactDm => {
            let mut rho = DensityMatrix::basis(code.n_qubits, 0);
            rho.apply_unitary(&[code.input_qubit], &gates::flatten2(prep))?;
            run_ops(&mut rho, &enc, gate_noise)?;
            if let Some(m) = memory {
                rho.memory(m)?;
            }
            run_ops(&mut rho, &dec, gate_noise)?;
            Ok(rho)
        }
        QecBackend::Mpdo { chi, kappa } => {
            let zeros = "0".repeat(code.n_qubits);
            let state = mpdo_product_state(&zeros)?.with_caps(Some(chi), Some(kappa))?;
            let mut reg = CappedMpdo { state, chi, kappa };
            reg.state.apply_1q_gate(code.input_qubit, prep)?;
            run_ops(&mut reg, &enc, gate_noise)?;
            if let Some(m) = memory {
                reg.memory(m)?;
            }
            run_ops(&mut reg, &dec, gate_noise)?;
            reg.state.to_density_matrix()
        }
    }
}

fn input_vector(prep: &Mat2) -> StateVector {
    StateVector::from_amplitudes(1, vec![prep[0][0], prep[1][0]]).expect("normalized column")
}

/// Recovered fidelity of each ensemble state, in [`ensemble_states`] order.
pub fn recovered_fidelities(
    code: &EncodingCircuit,
    table: &SyndromeTable,
    gate_noise: Option<&KrausChannel>,
    memory: Option<&KrausChannel>,
    backend: QecBackend,
) -> Result<Vec<f64>> {
    ensemble_states()
        .iter()
        .map(|(_, prep)| {
            let rho = decoded_state(code, prep, gate_noise, memory, backend)?;
            let rec = table.recover(code, &rho)?;
            fidelity_pure(&input_vector(prep), &rec)
        })
        .collect()
}

/// Ensemble-averaged fidelity of a bare qubit through the memory channel.
pub fn unencoded_baseline(memory_rate: f64) -> Result<f64> {
    let ch = depolarizing(memory_rate)?;
    let mut total = 0.0;
    let states = ensemble_states();
    for (_, prep) in &states {
        let psi = input_vector(prep);
        let mut rho = DensityMatrix::from_pure(&psi);
        rho.apply_channel(&ch, &[0])?;
        total += fidelity_pure(&psi, &rho)?;
    }
    Ok(total / states.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QecPoint {
    pub epsilon: f64,
    pub fidelity: f64,
    pub per_state: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QecTable {
    pub model: String,
    pub backend: QecBackend,
    pub memory_rate: f64,
    pub baseline: f64,
    pub points: Vec<QecPoint>,
}

/// Average recovered fidelity over the ensemble for every gate noise rate.
pub fn qec_experiment(
    code: &EncodingCircuit,
    model: NoiseModel,
    epsilons: &[f64],
    memory_rate: f64,
    backend: QecBackend,
) -> Result<QecTable> {
    let table = SyndromeTable::build(code)?;
    let memory = depolarizing(memory_rate)?;
    let mut points = Vec::with_capacity(epsilons.len());
    for &eps in epsilons {
        let noise = model.channel(eps)?;
        let per_state = recovered_fidelities(code, &table, noise.as_ref(), Some(&memory), backend)?;
        let fidelity = per_state.iter().sum::<f64>() / per_state.len() as f64;
        points.push(QecPoint { epsilon: eps, fidelity, per_state });
    }
    Ok(QecTable {
        model: model.name().to_string(),
        backend,
        memory_rate,
        baseline: unencoded_baseline(memory_rate)?,
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    // ring order of the bundled graph: 0 - 1 - 3 - 4 - 2 - 0
    const RING: [usize; 5] = [0, 1, 3, 4, 2];

    fn apply_graph_generator(psi: &mut StateVector, i: usize) {
        let x = gates::flatten2(&gates::PAULI_X);
        let z = gates::flatten2(&gates::PAULI_Z);
        psi.apply(&[RING[i]], &x).unwrap();
        psi.apply(&[RING[(i + 4) % 5]], &z).unwrap();
        psi.apply(&[RING[(i + 1) % 5]], &z).unwrap();
    }

    #[test]
    fn encoder_output_is_stabilized() {
        // code stabilizers are products of neighbouring graph generators
        let code = EncodingCircuit::five_qubit();
        let enc = code.ops().unwrap();
        for (_, prep) in ensemble_states() {
            let mut psi = StateVector::zero_state(5);
            psi.apply(&[code.input_qubit], &gates::flatten2(&prep)).unwrap();
            code.apply_to_vector(&mut psi, &enc).unwrap();
            for i in 0..5 {
                let mut phi = psi.clone();
                apply_graph_generator(&mut phi, i);
                apply_graph_generator(&mut phi, (i + 1) % 5);
                assert!((phi.inner(&psi).re - 1.0).abs() < 1e-12, "generator pair {i}");
            }
        }
    }

    #[test]
    fn syndrome_table_is_complete() {
        let code = EncodingCircuit::five_qubit();
        let t = SyndromeTable::build(&code).unwrap();
        assert_eq!(t.len(), 16);
        let mut s: Vec<usize> = t.entries.iter().map(|e| e.syndrome).collect();
        s.sort();
        assert_eq!(s, (0..16).collect::<Vec<_>>());
    }

    #[test]
    fn noiseless_round_trip_is_perfect() {
        let code = EncodingCircuit::five_qubit();
        let t = SyndromeTable::build(&code).unwrap();
        for backend in [QecBackend::ExactDm, QecBackend::Mpdo { chi: 16, kappa: 32 }] {
            let f = recovered_fidelities(&code, &t, None, None, backend).unwrap();
            assert!(f.iter().all(|x| (x - 1.0).abs() < 1e-8), "{f:?}");
        }
    }

    #[test]
    fn single_errors_are_corrected() {
        // deterministic Pauli on one qubit as the memory "channel"
        let code = EncodingCircuit::five_qubit();
        let t = SyndromeTable::build(&code).unwrap();
        for q in 0..5 {
            for p in [gates::PAULI_X, gates::PAULI_Y, gates::PAULI_Z] {
                let k = crate::tensor::ComplexTensor::new(vec![2, 2], gates::flatten2(&p)).unwrap();
                let ch = KrausChannel::new(1, vec![k], "pauli", 1.0).unwrap();
                for (_, prep) in ensemble_states() {
                    let mut rho = DensityMatrix::basis(5, 0);
                    rho.apply_unitary(&[code.input_qubit], &gates::flatten2(&prep)).unwrap();
                    run_ops(&mut rho, &code.ops().unwrap(), None).unwrap();
                    rho.apply_channel(&ch, &[q]).unwrap();
                    run_ops(&mut rho, &code.inverse_ops().unwrap(), None).unwrap();
                    let rec = t.recover(&code, &rho).unwrap();
                    let f = fidelity_pure(&input_vector(&prep), &rec).unwrap();
                    assert!((f - 1.0).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn baseline_matches_closed_form() {
        // ⟨ψ|(1−p)ρ + p I/2|ψ⟩ = 1 − p/2 for any pure input
        let b = unencoded_baseline(0.05).unwrap();
        assert!((b - 0.975f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn memory_noise_only_beats_baseline() {
        let code = EncodingCircuit::five_qubit();
        let t = qec_experiment(&code, NoiseModel::Depolarizing, &[0.0], 0.05, QecBackend::ExactDm).unwrap();
        assert!(t.points[0].fidelity > t.baseline);
    }

    #[test]
    fn bad_encoder_json_rejected() {
        assert!(EncodingCircuit::from_json(r#"{"name":"x","n_qubits":2,"input_qubit":0,"gates":[{"gate":"cz","qubits":[0,0]}]}"#).is_err());
        assert!(EncodingCircuit::from_json(r#"{"name":"x","n_qubits":2,"input_qubit":3,"gates":[]}"#).is_err());
        let c = EncodingCircuit::five_qubit();
        assert_eq!(EncodingCircuit::from_json(&c.to_json()).unwrap(), c);
        assert_eq!(c.cz_count(), 9);
    }
}
