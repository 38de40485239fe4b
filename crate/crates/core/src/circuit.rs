//! Layered 1D circuits and the seeded random brickwork generator.
//!
//! # Random circuits
//!
//! Layer `ℓ` (0-based) places a random single-qubit gate on every qubit and
//! then pair gates on `(i, i+1)` for every `i ≡ ℓ (mod 2)`, so even layers pair
//! even-indexed sites. Each pair gate is CNOT or CZ with probability 1/2; the
//! CNOT control is the lower site.
//!
//! Randomness comes from ChaCha20 (`rand_chacha::ChaCha20Rng`) seeded with
//! `seed_from_u64(seed)`, with one stream per layer selected by
//! `set_stream(ℓ)`. Within a layer the words are consumed in this order: for
//! each qubit `alpha`, `theta`, `phi`; then one word per pair gate. A word `w`
//! maps to an angle `2π · (w >> 11) · 2⁻⁵³` and to a gate kind via its top bit
//! (0 → CNOT, 1 → CZ).

use std::f64::consts::TAU;

use num_complex::Complex64 as C64;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gates::{self, Mat2, Mat4};
use crate::tensor::ComplexTensor;

/// Brickwork convention tag written into generated circuit documents.
pub const BRICKWORK_CONVENTION: &str = "even-layers-pair-even-sites;chacha20-stream-per-layer";

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SingleQubitGate {
    pub qubit: usize,
    pub alpha: f64,
    pub theta: f64,
    pub phi: f64,
}

impl SingleQubitGate {
    /// `exp(iα n·σ)` with `n = (sinθ cosφ, sinθ sinφ, cosθ)`, evaluated in
    /// closed form as `cos α · I + i sin α · n·σ`.
    pub fn matrix(&self) -> Mat2 {
        let (sa, ca) = self.alpha.sin_cos();
        let (st, ct) = self.theta.sin_cos();
        let (sp, cp) = self.phi.sin_cos();
        let (nx, ny, nz) = (st * cp, st * sp, ct);
        let i = C64::new(0.0, 1.0);
        [
            [C64::new(ca, 0.0) + i * sa * nz, i * sa * C64::new(nx, -ny)],
            [i * sa * C64::new(nx, ny), C64::new(ca, 0.0) - i * sa * nz],
        ]
    }
}

/// 2×2 matrix of a parametrized single-qubit gate.
pub fn gate_matrix(g: &SingleQubitGate) -> ComplexTensor {
    ComplexTensor::from_raw(vec![2, 2], gates::flatten2(&g.matrix()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TwoQubitKind {
    #[serde(rename = "CNOT")]
    Cnot,
    #[serde(rename = "CZ")]
    Cz,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TwoQubitGate {
    pub kind: TwoQubitKind,
    pub control: usize,
    pub target: usize,
}

impl TwoQubitGate {
    pub fn left(&self) -> usize {
        self.control.min(self.target)
    }

    pub fn right(&self) -> usize {
        self.control.max(self.target)
    }

    /// 4×4 matrix on the ordered pair `(left, right)`.
    pub fn matrix(&self) -> Mat4 {
        match self.kind {
            TwoQubitKind::Cz => gates::cz(),
            TwoQubitKind::Cnot if self.control < self.target => gates::cnot(),
            TwoQubitKind::Cnot => gates::cnot_reversed(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Layer {
    pub singles: Vec<SingleQubitGate>,
    pub pairs: Vec<TwoQubitGate>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Circuit {
    pub n_qubits: usize,
    pub seed: u64,
    pub layers: Vec<Layer>,
}

impl Circuit {
    pub fn empty(n_qubits: usize) -> Self {
        Self {
            n_qubits,
            seed: 0,
            layers: Vec::new(),
        }
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn pair_count(&self) -> usize {
        self.layers.iter().map(|l| l.pairs.len()).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_qubits == 0 {
            return Err(Error::Validation("n_qubits must be positive".into()));
        }
        let n = self.n_qubits;
        for (li, layer) in self.layers.iter().enumerate() {
            for g in &layer.singles {
                if g.qubit >= n {
                    return Err(Error::Validation(format!(
                        "layer {li}: single-qubit gate on qubit {} >= n_qubits {n}",
                        g.qubit
                    )));
                }
                if ![g.alpha, g.theta, g.phi].iter().all(|x| x.is_finite()) {
                    return Err(Error::Validation(format!(
                        "layer {li}: non-finite gate angle on qubit {}",
                        g.qubit
                    )));
                }
            }
            let mut used = vec![false; n];
            for p in &layer.pairs {
                if p.control >= n || p.target >= n {
                    return Err(Error::Validation(format!(
                        "layer {li}: pair gate ({}, {}) outside {n} qubits",
                        p.control, p.target
                    )));
                }
                if p.right() - p.left() != 1 {
                    return Err(Error::Validation(format!(
                        "layer {li}: pair gate ({}, {}) is not nearest-neighbour",
                        p.control, p.target
                    )));
                }
                for q in [p.left(), p.right()] {
                    if std::mem::replace(&mut used[q], true) {
                        return Err(Error::Validation(format!(
                            "layer {li}: pair gates overlap on qubit {q}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let doc = CircuitDoc {
            n_qubits: self.n_qubits,
            seed: self.seed,
            convention: Some(BRICKWORK_CONVENTION.to_string()),
            layers: self
                .layers
                .iter()
                .map(|l| LayerDoc {
                    singles: l
                        .singles
                        .iter()
                        .map(|g| SingleDoc {
                            q: g.qubit,
                            alpha: Float17(g.alpha),
                            theta: Float17(g.theta),
                            phi: Float17(g.phi),
                        })
                        .collect(),
                    pairs: l
                        .pairs
                        .iter()
                        .map(|p| PairDoc {
                            kind: p.kind,
                            control: p.control,
                            target: p.target,
                        })
                        .collect(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("circuit serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: CircuitDoc = serde_json::from_str(text).map_err(|e| {
            Error::Parse(format!("line {} column {}: {e}", e.line(), e.column()))
        })?;
        let c = Circuit {
            n_qubits: doc.n_qubits,
            seed: doc.seed,
            layers: doc
                .layers
                .into_iter()
                .map(|l| Layer {
                    singles: l
                        .singles
                        .into_iter()
                        .map(|g| SingleQubitGate {
                            qubit: g.q,
                            alpha: g.alpha.0,
                            theta: g.theta.0,
                            phi: g.phi.0,
                        })
                        .collect(),
                    pairs: l
                        .pairs
                        .into_iter()
                        .map(|p| TwoQubitGate {
                            kind: p.kind,
                            control: p.control,
                            target: p.target,
                        })
                        .collect(),
                })
                .collect(),
        };
        c.validate()?;
        Ok(c)
    }
}

fn unit_from_word(w: u64) -> f64 {
    (w >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Seeded 1D random brickwork circuit; see the module docs for the exact
/// sampling procedure.
pub fn random_circuit(n_qubits: usize, depth: usize, seed: u64) -> Result<Circuit> {
    if n_qubits < 2 {
        return Err(Error::invalid(format!(
            "random circuits need at least 2 qubits, got {n_qubits}"
        )));
    }
    if depth == 0 {
        return Err(Error::invalid("depth must be at least 1"));
    }
    let mut layers = Vec::with_capacity(depth);
    for l in 0..depth {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(l as u64);
        let singles = (0..n_qubits)
            .map(|q| SingleQubitGate {
                qubit: q,
                alpha: TAU * unit_from_word(rng.next_u64()),
                theta: TAU * unit_from_word(rng.next_u64()),
                phi: TAU * unit_from_word(rng.next_u64()),
            })
            .collect();
        let pairs = (l % 2..n_qubits - 1)
            .step_by(2)
            .map(|i| TwoQubitGate {
                kind: if rng.next_u64() >> 63 == 0 {
                    TwoQubitKind::Cnot
                } else {
                    TwoQubitKind::Cz
                },
                control: i,
                target: i + 1,
            })
            .collect();
        layers.push(Layer { singles, pairs });
    }
    Ok(Circuit {
        n_qubits,
        seed,
        layers,
    })
}

/// f64 written with 17 significant digits.
#[derive(Clone, Copy, Debug)]
struct Float17(f64);

impl Serialize for Float17 {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let raw = serde_json::value::RawValue::from_string(format!("{:.16e}", self.0))
            .map_err(serde::ser::Error::custom)?;
        raw.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Float17 {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        f64::deserialize(d).map(Float17)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CircuitDoc {
    n_qubits: usize,
    seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    convention: Option<String>,
    layers: Vec<LayerDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerDoc {
    #[serde(default)]
    singles: Vec<SingleDoc>,
    #[serde(default)]
    pairs: Vec<PairDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SingleDoc {
    q: usize,
    alpha: Float17,
    theta: Float17,
    phi: Float17,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PairDoc {
    kind: TwoQubitKind,
    control: usize,
    target: usize,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gates::unitarity_deviation;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    /// exp(iA) via truncated Taylor series with scaling and squaring.
    fn expm_i(a: &Mat2) -> Mat2 {
        let scale = 1u32 << 6;
        let i = C64::new(0.0, 1.0);
        let x: Mat2 = [
            [a[0][0] * i / scale as f64, a[0][1] * i / scale as f64],
            [a[1][0] * i / scale as f64, a[1][1] * i / scale as f64],
        ];
        let mut term = gates::IDENTITY;
        let mut sum = gates::IDENTITY;
        for k in 1..30 {
            term = gates::mul2(&term, &x);
            for r in 0..2 {
                for c in 0..2 {
                    term[r][c] /= k as f64;
                    sum[r][c] += term[r][c];
                }
            }
        }
        for _ in 0..6 {
            sum = gates::mul2(&sum, &sum);
        }
        sum
    }

    #[test]
    fn seven_qubit_depth_five_layout() {
        let c = random_circuit(7, 5, 42).unwrap();
        assert_eq!(c.depth(), 5);
        let counts: Vec<usize> = c.layers.iter().map(|l| l.pairs.len()).collect();
        assert_eq!(counts, vec![3, 3, 3, 3, 3]);
        let offsets: Vec<usize> = c.layers.iter().map(|l| l.pairs[0].left()).collect();
        assert_eq!(offsets, vec![0, 1, 0, 1, 0]);
        for l in &c.layers {
            assert_eq!(l.singles.len(), 7);
            for p in &l.pairs {
                assert_eq!(p.target, p.control + 1);
            }
        }
    }

    #[test]
    fn two_qubits_one_layer() {
        let c = random_circuit(2, 1, 7).unwrap();
        assert_eq!(c.layers[0].pairs.len(), 1);
        assert_eq!((c.layers[0].pairs[0].control, c.layers[0].pairs[0].target), (0, 1));
    }

    #[test]
    fn generation_is_deterministic() {
        let a = random_circuit(5, 4, 99).unwrap().to_json();
        let b = random_circuit(5, 4, 99).unwrap().to_json();
        assert_eq!(a, b);
        assert_ne!(a, random_circuit(5, 4, 100).unwrap().to_json());
    }

    #[test]
    fn rejects_too_few_qubits() {
        assert!(random_circuit(1, 3, 0).is_err());
        assert!(random_circuit(3, 0, 0).is_err());
    }

    #[test]
    fn gate_matrix_special_cases() {
        let id = SingleQubitGate { qubit: 0, alpha: 0.0, theta: 1.0, phi: 2.0 };
        assert_eq!(id.matrix(), gates::IDENTITY);
        let x = SingleQubitGate { qubit: 0, alpha: FRAC_PI_2, theta: FRAC_PI_2, phi: 0.0 };
        let m = x.matrix();
        let i = C64::new(0.0, 1.0);
        for r in 0..2 {
            for c in 0..2 {
                assert!((m[r][c] - i * gates::PAULI_X[r][c]).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn gate_matrix_matches_series_exponential() {
        let c = random_circuit(4, 3, 5).unwrap();
        for g in c.layers.iter().flat_map(|l| &l.singles) {
            let (st, ct) = g.theta.sin_cos();
            let (sp, cp) = g.phi.sin_cos();
            let mut h = [[C64::new(0.0, 0.0); 2]; 2];
            for r in 0..2 {
                for col in 0..2 {
                    h[r][col] = g.alpha
                        * (gates::PAULI_X[r][col] * st * cp
                            + gates::PAULI_Y[r][col] * st * sp
                            + gates::PAULI_Z[r][col] * ct);
                }
            }
            let expected = expm_i(&h);
            let got = g.matrix();
            for r in 0..2 {
                for col in 0..2 {
                    assert!((expected[r][col] - got[r][col]).norm() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn generated_gates_are_unitary() {
        let c = random_circuit(10, 1000, 3).unwrap();
        let mut count = 0;
        for g in c.layers.iter().flat_map(|l| &l.singles) {
            assert!(unitarity_deviation(&gates::flatten2(&g.matrix()), 2) < 1e-12);
            for a in [g.alpha, g.theta, g.phi] {
                assert!((0.0..TAU).contains(&a));
            }
            count += 1;
        }
        assert_eq!(count, 10_000);
    }

    #[test]
    fn kind_frequencies_are_balanced() {
        let c = random_circuit(21, 1000, 11).unwrap();
        let pairs: Vec<_> = c.layers.iter().flat_map(|l| &l.pairs).collect();
        assert_eq!(pairs.len(), 10_000);
        let cnot = pairs.iter().filter(|p| p.kind == TwoQubitKind::Cnot).count() as f64;
        let frac = cnot / pairs.len() as f64;
        assert!((0.47..=0.53).contains(&frac), "CNOT fraction {frac}");
    }

    #[test]
    fn json_roundtrip() {
        let c = random_circuit(3, 2, 1234).unwrap();
        let text = c.to_json();
        assert_eq!(Circuit::from_json(&text).unwrap(), c);
    }

    #[test]
    fn floats_have_seventeen_digits() {
        let c = Circuit {
            n_qubits: 1,
            seed: 0,
            layers: vec![Layer {
                singles: vec![SingleQubitGate { qubit: 0, alpha: PI, theta: 0.1, phi: 0.0 }],
                pairs: vec![],
            }],
        };
        let text = c.to_json();
        assert!(text.contains("3.1415926535897931e0"), "{text}");
        assert!(text.contains("1.0000000000000001e-1"), "{text}");
    }

    #[test]
    fn missing_n_qubits_is_parse_error() {
        let err = Circuit::from_json(r#"{"seed": 1, "layers": []}"#).unwrap_err();
        assert!(matches!(err, Error::Parse(_)), "{err}");
        assert!(err.to_string().contains("line"));
    }

    #[test]
    fn overlapping_pairs_fail_validation() {
        let text = r#"{"n_qubits": 3, "seed": 0, "layers": [{"singles": [], "pairs": [
            {"kind": "CNOT", "control": 0, "target": 1},
            {"kind": "CZ", "control": 1, "target": 2}]}]}"#;
        assert!(matches!(Circuit::from_json(text), Err(Error::Validation(_))));
        let far = r#"{"n_qubits": 3, "seed": 0, "layers": [{"pairs": [
            {"kind": "CZ", "control": 0, "target": 2}]}]}"#;
        assert!(matches!(Circuit::from_json(far), Err(Error::Validation(_))));
    }

    proptest! {
        #[test]
        fn generated_layers_are_disjoint(n in 2usize..12, depth in 1usize..8, seed in any::<u64>()) {
            let c = random_circuit(n, depth, seed).unwrap();
            prop_assert!(c.validate().is_ok());
            let back = Circuit::from_json(&c.to_json()).unwrap();
            prop_assert_eq!(back, c);
        }
    }
}
