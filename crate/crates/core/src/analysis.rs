//! Comparison metrics and distribution analytics.

use std::collections::BTreeMap;

use faer::Mat;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::exact::{DensityMatrix, StateVector};
use crate::tensor::eigh_mat;

/// Default probability floor applied before taking logarithms.
pub const DEFAULT_FLOOR: f64 = 1e-12;

const EIG_CLIP: f64 = -1e-8;
// eigenvalues below this fraction of the largest are treated as rounding noise
const EIG_REL_ZERO: f64 = 1e-13;

/// Probability distribution over the `2^n` computational basis bitstrings,
/// indexed with qubit 0 as the most significant bit.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbDist {
    n_qubits: usize,
    probs: Vec<f64>,
}

impl ProbDist {
    pub fn new(n_qubits: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != 1usize << n_qubits {
            return Err(Error::DimensionMismatch(format!(
                "{} probabilities for {n_qubits} qubits",
                probs.len()
            )));
        }
        if let Some(p) = probs.iter().find(|p| !(**p >= 0.0) || !p.is_finite()) {
            return Err(Error::invalid(format!("invalid probability {p}")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-8 {
            return Err(Error::invalid(format!("probabilities sum to {total}")));
        }
        Ok(Self { n_qubits, probs })
    }

    pub fn uniform(n_qubits: usize) -> Self {
        let m = 1usize << n_qubits;
        Self {
            n_qubits,
            probs: vec![1.0 / m as f64; m],
        }
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn label(&self, index: usize) -> String {
        index_to_bitstring(index, self.n_qubits)
    }

    pub fn prob_of(&self, bitstring: &str) -> Result<f64> {
        Ok(self.probs[bitstring_to_index(bitstring, self.n_qubits)?])
    }

    /// `shots` independent draws (inverse CDF on ChaCha8 uniforms).
    pub fn sample(&self, shots: usize, seed: u64) -> Vec<usize> {
        let mut cdf = Vec::with_capacity(self.probs.len());
        let mut acc = 0.0;
        for p in &self.probs {
            acc += p;
            cdf.push(acc);
        }
        let last = self.probs.iter().rposition(|&p| p > 0.0).unwrap_or(0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..shots)
            .map(|_| {
                let u = rng.random::<f64>() * acc;
                cdf.partition_point(|&c| c <= u).min(last)
            })
            .collect()
    }

    pub fn sample_counts(&self, shots: usize, seed: u64) -> BTreeMap<String, u64> {
        let mut counts = BTreeMap::new();
        for i in self.sample(shots, seed) {
            *counts.entry(self.label(i)).or_insert(0) += 1;
        }
        counts
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self) -> f64 {
        -self
            .probs
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|p| p * p.ln())
            .sum::<f64>()
    }
}

pub fn index_to_bitstring(index: usize, n_qubits: usize) -> String {
    (0..n_qubits)
        .map(|q| if (index >> (n_qubits - 1 - q)) & 1 == 1 { '1' } else { '0' })
        .collect()
}

pub fn bitstring_to_index(bits: &str, n_qubits: usize) -> Result<usize> {
    if bits.len() != n_qubits {
        return Err(Error::invalid(format!(
            "bitstring '{bits}' does not have {n_qubits} bits"
        )));
    }
    bits.chars().try_fold(0usize, |acc, ch| match ch {
        '0' => Ok(acc << 1),
        '1' => Ok((acc << 1) | 1),
        _ => Err(Error::invalid(format!("bitstring '{bits}' contains '{ch}'"))),
    })
}

fn clipped_roots(vals: &[f64], what: &str) -> Result<Vec<f64>> {
    let top = vals.iter().copied().fold(0.0, f64::max);
    vals.iter()
        .map(|&l| {
            if l < EIG_CLIP {
                Err(Error::numerical(format!(
                    "{what} has eigenvalue {l:.3e} below the clipping threshold"
                )))
            } else if l <= EIG_REL_ZERO * top {
                Ok(0.0)
            } else {
                Ok(l.sqrt())
            }
        })
        .collect()
}

pub(crate) fn sqrtm_psd(m: &Mat<C64>, what: &str) -> Result<Mat<C64>> {
    let (vals, vecs) = eigh_mat(m.as_ref())?;
    let d = vals.len();
    let roots = clipped_roots(&vals, what)?;
    let scaled = Mat::from_fn(d, d, |i, j| vecs[(i, j)] * roots[j]);
    Ok(&scaled * vecs.adjoint())
}

/// Uhlmann fidelity `Tr √(√ρ σ √ρ) = ‖√ρ √σ‖₁` (root convention, equals `|⟨ψ|φ⟩|` on
/// pure states).
pub fn fidelity(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    FidelityReference::new(rho)?.fidelity(sigma)
}

fn check_hermitian(m: &DensityMatrix, name: &str) -> Result<()> {
    let h = m.hermiticity_error();
    if h > 1e-6 {
        return Err(Error::invalid(format!(
            "{name} argument is not Hermitian (error {h:.3e})"
        )));
    }
    Ok(())
}

/// `√ρ` of a fixed reference state, for repeated fidelity evaluations.
#[derive(Clone, Debug)]
pub struct FidelityReference {
    n_qubits: usize,
    sqrt_rho: Mat<C64>,
}

impl FidelityReference {
    pub fn new(rho: &DensityMatrix) -> Result<Self> {
        check_hermitian(rho, "first")?;
        Ok(Self {
            n_qubits: rho.n_qubits(),
            sqrt_rho: sqrtm_psd(&rho.to_mat(), "first argument")?,
        })
    }

    pub fn fidelity(&self, sigma: &DensityMatrix) -> Result<f64> {
        if self.n_qubits != sigma.n_qubits() {
            return Err(Error::DimensionMismatch(format!(
                "fidelity between {}- and {}-qubit states",
                self.n_qubits,
                sigma.n_qubits()
            )));
        }
        check_hermitian(sigma, "second")?;
        // ‖√ρ √σ‖₁ rather than the eigenvalues of √ρ σ √ρ: those are squares
        // of the answer's terms and drown in rounding on rank-deficient states
        let prod = &self.sqrt_rho * sqrtm_psd(&sigma.to_mat(), "second argument")?;
        let sv = prod
            .singular_values()
            .map_err(|e| Error::numerical(format!("fidelity SVD failed: {e:?}")))?;
        Ok(sv.iter().sum())
    }
}

/// `F(|ψ⟩⟨ψ|, σ) = √⟨ψ|σ|ψ⟩`
pub fn fidelity_pure(psi: &StateVector, sigma: &DensityMatrix) -> Result<f64> {
    Ok(sigma.expectation(psi)?.max(0.0).sqrt())
}

/// `H(P, Ps) = −Σ P(x) ln max(Ps(x), floor)`.
pub fn cross_entropy(p: &ProbDist, ps: &ProbDist, floor: f64) -> Result<f64> {
    if p.n_qubits != ps.n_qubits {
        return Err(Error::DimensionMismatch(format!(
            "distributions over {} and {} qubits",
            p.n_qubits, ps.n_qubits
        )));
    }
    if !(floor > 0.0) {
        return Err(Error::invalid(format!("floor {floor} must be positive")));
    }
    Ok(-p
        .probs
        .iter()
        .zip(&ps.probs)
        .filter(|(&a, _)| a > 0.0)
        .map(|(a, b)| a * b.max(floor).ln())
        .sum::<f64>())
}

fn check_m(m: f64) -> Result<()> {
    if m >= 2.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("M = {m} must be at least 2")))
    }
}

fn check_p(p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::invalid(format!("probability {p} outside [0, 1]")))
    }
}

/// Porter–Thomas density `(M−1)(1−p)^{M−2}`.
pub fn porter_thomas_density(p: f64, m: f64) -> Result<f64> {
    check_p(p)?;
    check_m(m)?;
    Ok((m - 1.0) * ((m - 2.0) * (-p).ln_1p()).exp())
}

/// Porter–Thomas cumulative distribution `1 − (1−p)^{M−1}`.
pub fn porter_thomas_cdf(p: f64, m: f64) -> Result<f64> {
    check_p(p)?;
    check_m(m)?;
    Ok(pt_cdf_unchecked(p, m))
}

fn pt_cdf_unchecked(p: f64, m: f64) -> f64 {
    if p >= 1.0 {
        return 1.0;
    }
    -((m - 1.0) * (-p).ln_1p()).exp_m1()
}

/// Cumulative distribution of `(1−α) p₁ + α/M` with `p₁` Porter–Thomas
/// distributed, i.e. the output probabilities of a globally depolarized
/// random state. `α = 1` gives the unit step at `1/M`.
pub fn noisy_depolarizing_cdf(p: f64, alpha: f64, m: f64) -> Result<f64> {
    check_p(p)?;
    check_m(m)?;
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::invalid(format!("alpha {alpha} outside [0, 1]")));
    }
    if alpha == 1.0 {
        return Ok(if p <= 1.0 / m { 0.0 } else { 1.0 });
    }
    let floor = alpha / m;
    if p <= floor {
        return Ok(0.0);
    }
    if p >= (1.0 - alpha) + floor {
        return Ok(1.0);
    }
    Ok(pt_cdf_unchecked((p - floor) / (1.0 - alpha), m))
}

/// Right-continuous empirical CDF of a sample.
#[derive(Clone, Debug)]
pub struct EmpiricalCdf {
    sorted: Vec<f64>,
}

impl EmpiricalCdf {
    pub fn new(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("empirical CDF of an empty sample"));
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(Error::invalid("empirical CDF sample contains NaN"));
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(|a, b| a.total_cmp(b));
        Ok(Self { sorted })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn sorted_values(&self) -> &[f64] {
        &self.sorted
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.sorted.partition_point(|&v| v <= x) as f64 / self.sorted.len() as f64
    }
}

/// Kolmogorov–Smirnov distance between two empirical CDFs.
pub fn ks_distance(a: &EmpiricalCdf, b: &EmpiricalCdf) -> f64 {
    a.sorted
        .iter()
        .chain(&b.sorted)
        .map(|&x| (a.eval(x) - b.eval(x)).abs())
        .fold(0.0, f64::max)
}

/// Kolmogorov–Smirnov distance between an empirical CDF and a continuous CDF.
pub fn ks_distance_to(a: &EmpiricalCdf, cdf: impl Fn(f64) -> f64) -> f64 {
    let n = a.sorted.len() as f64;
    a.sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}
