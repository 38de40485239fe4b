//! Brute-force reference simulators: pure state vectors and full density
//! matrices. Basis index `i` encodes qubit 0 as its most significant bit.

use faer::Mat;
use num_complex::Complex64 as C64;

use crate::analysis::ProbDist;
use crate::circuit::Circuit;
use crate::error::{Error, Result};
use crate::noise::{KrausChannel, NoiseSpec};
use crate::tensor::{eigvalsh_mat, mat_from_rowmajor};

pub const DEFAULT_PURE_CAP: usize = 24;
pub const DEFAULT_DENSITY_CAP: usize = 12;

fn check_sites(n: usize, sites: &[usize]) -> Result<()> {
    for (k, &s) in sites.iter().enumerate() {
        if s >= n {
            return Err(Error::SiteOutOfRange { site: s, n_qubits: n });
        }
        if sites[..k].contains(&s) {
            return Err(Error::invalid(format!("site {s} repeated in {sites:?}")));
        }
    }
    Ok(())
}

/// Offsets of the `2^k` sub-block entries for the given sites, and the mask
/// of the bits they occupy.
fn block_offsets(n: usize, sites: &[usize]) -> (Vec<usize>, usize) {
    let k = sites.len();
    let mut offs = vec![0usize; 1 << k];
    let mut mask = 0usize;
    for (b, off) in offs.iter_mut().enumerate() {
        for (pos, &s) in sites.iter().enumerate() {
            if (b >> (k - 1 - pos)) & 1 == 1 {
                *off |= 1 << (n - 1 - s);
            }
        }
    }
    for &s in sites {
        mask |= 1 << (n - 1 - s);
    }
    (offs, mask)
}

const ROW_CHUNK: usize = 64;

/// `ρ ← M ρ` where `M` acts on the row bits at `offs`.
fn mix_rows(entries: &mut [C64], dim: usize, offs: &[usize], bases: &[usize], m: &[C64]) {
    let zero = C64::new(0.0, 0.0);
    let d = offs.len();
    if d == 2 {
        let st = offs[1];
        let (u00, u01, u10, u11) = (m[0], m[1], m[2], m[3]);
        for &r0 in bases {
            let (top, bottom) = entries.split_at_mut((r0 + st) * dim);
            let row0 = &mut top[r0 * dim..(r0 + 1) * dim];
            let row1 = &mut bottom[..dim];
            for (a, b) in row0.iter_mut().zip(row1.iter_mut()) {
                let (x0, x1) = (*a, *b);
                *a = u00 * x0 + u01 * x1;
                *b = u10 * x0 + u11 * x1;
            }
        }
        return;
    }
    let mut buf = vec![zero; d * ROW_CHUNK];
    for &r0 in bases {
        for c0 in (0..dim).step_by(ROW_CHUNK) {
            let w = ROW_CHUNK.min(dim - c0);
            for j in 0..d {
                let src = (r0 + offs[j]) * dim + c0;
                buf[j * ROW_CHUNK..j * ROW_CHUNK + w].copy_from_slice(&entries[src..src + w]);
            }
            for i in 0..d {
                let dst = (r0 + offs[i]) * dim + c0;
                let out = &mut entries[dst..dst + w];
                out.fill(zero);
                for j in 0..d {
                    let u = m[i * d + j];
                    if u == zero {
                        continue;
                    }
                    for (o, x) in out.iter_mut().zip(&buf[j * ROW_CHUNK..j * ROW_CHUNK + w]) {
                        *o += u * x;
                    }
                }
            }
        }
    }
}

/// `ρ ← ρ Mᵀ` where `M` acts on the column bits at `offs`.
fn mix_cols(entries: &mut [C64], dim: usize, offs: &[usize], bases: &[usize], m: &[C64]) {
    let zero = C64::new(0.0, 0.0);
    let d = offs.len();
    if d == 2 {
        let st = offs[1];
        let (u00, u01, u10, u11) = (m[0], m[1], m[2], m[3]);
        for row in entries.chunks_exact_mut(dim) {
            for blk in row.chunks_exact_mut(2 * st) {
                let (lo, hi) = blk.split_at_mut(st);
                for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                    let (x0, x1) = (*a, *b);
                    *a = u00 * x0 + u01 * x1;
                    *b = u10 * x0 + u11 * x1;
                }
            }
        }
        return;
    }
    let mut buf = vec![zero; d];
    for row in entries.chunks_exact_mut(dim) {
        for &c0 in bases {
            for (b, &o) in buf.iter_mut().zip(offs) {
                *b = row[c0 + o];
            }
            for i in 0..d {
                let mut acc = zero;
                for j in 0..d {
                    acc += m[i * d + j] * buf[j];
                }
                row[c0 + offs[i]] = acc;
            }
        }
    }
}

/// One-qubit superoperator on the 2×2 blocks `(r, r+st) × (c, c+st)`.
fn superop_1q(entries: &mut [C64], n: usize, site: usize, s: &[C64]) {
    let dim = 1usize << n;
    let st = 1usize << (n - 1 - site);
    let mut sm = [[C64::new(0.0, 0.0); 4]; 4];
    for (i, row) in sm.iter_mut().enumerate() {
        row.copy_from_slice(&s[4 * i..4 * i + 4]);
    }
    for r0 in (0..dim).filter(|r| r & st == 0) {
        let (top, bottom) = entries.split_at_mut((r0 + st) * dim);
        let row0 = &mut top[r0 * dim..(r0 + 1) * dim];
        let row1 = &mut bottom[..dim];
        for (b0, b1) in row0.chunks_exact_mut(2 * st).zip(row1.chunks_exact_mut(2 * st)) {
            let (a0, a1) = b0.split_at_mut(st);
            let (c0, c1) = b1.split_at_mut(st);
            for (((x00, x01), x10), x11) in a0.iter_mut().zip(a1.iter_mut()).zip(c0.iter_mut()).zip(c1.iter_mut()) {
                let v = [*x00, *x01, *x10, *x11];
                let f = |k: usize| sm[k][0] * v[0] + sm[k][1] * v[1] + sm[k][2] * v[2] + sm[k][3] * v[3];
                *x00 = f(0);
                *x01 = f(1);
                *x10 = f(2);
                *x11 = f(3);
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amps: Vec<C64>,
}

impl StateVector {
    pub fn zero_state(n_qubits: usize) -> Self {
        Self::basis(n_qubits, 0)
    }

    pub fn basis(n_qubits: usize, index: usize) -> Self {
        let mut amps = vec![C64::new(0.0, 0.0); 1 << n_qubits];
        amps[index] = C64::new(1.0, 0.0);
        Self { n_qubits, amps }
    }

    pub fn from_amplitudes(n_qubits: usize, amps: Vec<C64>) -> Result<Self> {
        if amps.len() != 1 << n_qubits {
            return Err(Error::DimensionMismatch(format!(
                "{} amplitudes for {n_qubits} qubits",
                amps.len()
            )));
        }
        let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(Error::invalid(format!("state norm² {norm} is not 1")));
        }
        Ok(Self { n_qubits, amps })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Applies a `2^k × 2^k` row-major matrix to the listed sites; the first
    /// site is the most significant bit of the matrix index.
    pub fn apply(&mut self, sites: &[usize], matrix: &[C64]) -> Result<()> {
        check_sites(self.n_qubits, sites)?;
        let d = 1 << sites.len();
        if matrix.len() != d * d {
            return Err(Error::DimensionMismatch(format!(
                "{} matrix entries for {} sites",
                matrix.len(),
                sites.len()
            )));
        }
        let (offs, mask) = block_offsets(self.n_qubits, sites);
        let mut buf = vec![C64::new(0.0, 0.0); d];
        for base in 0..self.amps.len() {
            if base & mask != 0 {
                continue;
            }
            for (b, &o) in buf.iter_mut().zip(&offs) {
                *b = self.amps[base + o];
            }
            for i in 0..d {
                self.amps[base + offs[i]] = (0..d).map(|j| matrix[i * d + j] * buf[j]).sum();
            }
        }
        Ok(())
    }

    pub fn inner(&self, other: &Self) -> C64 {
        self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amps.iter().map(|a| a.norm_sqr()).collect()
    }
}

/// Dense `2^n × 2^n` density matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    n_qubits: usize,
    entries: Vec<C64>,
}

impl DensityMatrix {
    /// Validates Hermiticity and unit trace (both within 1e-10).
    pub fn from_entries(n_qubits: usize, entries: Vec<C64>) -> Result<Self> {
        let dim = 1usize << n_qubits;
        if entries.len() != dim * dim {
            return Err(Error::DimensionMismatch(format!(
                "{} entries for a {n_qubits}-qubit density matrix",
                entries.len()
            )));
        }
        let rho = Self { n_qubits, entries };
        let herm = rho.hermiticity_error();
        if herm > 1e-10 {
            return Err(Error::invalid(format!("matrix is not Hermitian (error {herm:.3e})")));
        }
        let tr = rho.trace();
        if (tr.re - 1.0).abs() > 1e-10 || tr.im.abs() > 1e-10 {
            return Err(Error::invalid(format!("trace {tr} is not 1")));
        }
        Ok(rho)
    }

    pub(crate) fn from_entries_unchecked(n_qubits: usize, entries: Vec<C64>) -> Self {
        Self { n_qubits, entries }
    }

    pub fn from_pure(psi: &StateVector) -> Self {
        let a = psi.amplitudes();
        let d = a.len();
        let mut entries = Vec::with_capacity(d * d);
        for i in 0..d {
            for j in 0..d {
                entries.push(a[i] * a[j].conj());
            }
        }
        Self {
            n_qubits: psi.n_qubits,
            entries,
        }
    }

    pub fn basis(n_qubits: usize, index: usize) -> Self {
        Self::from_pure(&StateVector::basis(n_qubits, index))
    }

    pub fn maximally_mixed(n_qubits: usize) -> Self {
        let d = 1usize << n_qubits;
        let mut entries = vec![C64::new(0.0, 0.0); d * d];
        for i in 0..d {
            entries[i * d + i] = C64::new(1.0 / d as f64, 0.0);
        }
        Self { n_qubits, entries }
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        1 << self.n_qubits
    }

    pub fn entries(&self) -> &[C64] {
        &self.entries
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.entries[row * self.dim() + col]
    }

    pub fn trace(&self) -> C64 {
        let d = self.dim();
        (0..d).map(|i| self.entries[i * d + i]).sum()
    }

    /// `tr(ρ²)`
    pub fn purity(&self) -> f64 {
        let d = self.dim();
        let mut acc = 0.0;
        for i in 0..d {
            for j in 0..d {
                // tr(ρρ) = Σ ρ_ij ρ_ji = Σ |ρ_ij|² for Hermitian ρ
                acc += (self.entries[i * d + j] * self.entries[j * d + i]).re;
            }
        }
        acc
    }

    pub fn hermiticity_error(&self) -> f64 {
        let d = self.dim();
        let mut worst = 0.0f64;
        for i in 0..d {
            for j in i..d {
                worst = worst.max((self.entries[i * d + j] - self.entries[j * d + i].conj()).norm());
            }
        }
        worst
    }

    /// `ρ ← (ρ + ρ†)/2`
    pub fn symmetrize(&mut self) {
        let d = self.dim();
        for i in 0..d {
            self.entries[i * d + i].im = 0.0;
            for j in i + 1..d {
                let avg = (self.entries[i * d + j] + self.entries[j * d + i].conj()) * 0.5;
                self.entries[i * d + j] = avg;
                self.entries[j * d + i] = avg.conj();
            }
        }
    }

    /// Applies a superoperator (see [`KrausChannel`]) to the given sites.
    fn apply_superop(&mut self, sites: &[usize], superop: &[C64]) -> Result<()> {
        check_sites(self.n_qubits, sites)?;
        if sites.len() == 1 {
            superop_1q(&mut self.entries, self.n_qubits, sites[0], superop);
            return Ok(());
        }
        let d = 1usize << sites.len();
        let dd = d * d;
        debug_assert_eq!(superop.len(), dd * dd);
        let terms: Vec<(usize, usize, C64)> = (0..dd * dd)
            .filter(|&k| superop[k] != C64::new(0.0, 0.0))
            .map(|k| (k / dd, k % dd, superop[k]))
            .collect();
        let (offs, mask) = block_offsets(self.n_qubits, sites);
        let dim = self.dim();
        let bases: Vec<usize> = (0..dim).filter(|b| b & mask == 0).collect();
        let mut block = vec![C64::new(0.0, 0.0); dd];
        let mut out = vec![C64::new(0.0, 0.0); dd];
        for &r0 in &bases {
            for &c0 in &bases {
                for i in 0..d {
                    let row = (r0 + offs[i]) * dim + c0;
                    for j in 0..d {
                        block[i * d + j] = self.entries[row + offs[j]];
                    }
                }
                out.fill(C64::new(0.0, 0.0));
                for &(o, k, v) in &terms {
                    out[o] += v * block[k];
                }
                for i in 0..d {
                    let row = (r0 + offs[i]) * dim + c0;
                    for j in 0..d {
                        self.entries[row + offs[j]] = out[i * d + j];
                    }
                }
            }
        }
        Ok(())
    }

    /// `ρ ← U ρ U†` on the given sites (first site most significant).
    pub fn apply_unitary(&mut self, sites: &[usize], matrix: &[C64]) -> Result<()> {
        check_sites(self.n_qubits, sites)?;
        let d = 1usize << sites.len();
        if matrix.len() != d * d {
            return Err(Error::DimensionMismatch(format!(
                "{} matrix entries for {} sites",
                matrix.len(),
                sites.len()
            )));
        }
        let (offs, mask) = block_offsets(self.n_qubits, sites);
        let dim = self.dim();
        let bases: Vec<usize> = (0..dim).filter(|b| b & mask == 0).collect();
        mix_rows(&mut self.entries, dim, &offs, &bases, matrix);
        let conj: Vec<C64> = matrix.iter().map(|z| z.conj()).collect();
        mix_cols(&mut self.entries, dim, &offs, &bases, &conj);
        Ok(())
    }

    pub fn apply_channel(&mut self, channel: &KrausChannel, sites: &[usize]) -> Result<()> {
        if sites.len() != channel.arity() {
            return Err(Error::invalid(format!(
                "{}-qubit channel applied to {} sites",
                channel.arity(),
                sites.len()
            )));
        }
        self.apply_superop(sites, &channel.superoperator())
    }

    /// `⟨ψ|ρ|ψ⟩`
    pub fn expectation(&self, psi: &StateVector) -> Result<f64> {
        if psi.n_qubits != self.n_qubits {
            return Err(Error::DimensionMismatch(format!(
                "{}-qubit state against {}-qubit density matrix",
                psi.n_qubits, self.n_qubits
            )));
        }
        let d = self.dim();
        let a = psi.amplitudes();
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..d {
            let row = &self.entries[i * d..(i + 1) * d];
            let rv: C64 = row.iter().zip(a).map(|(r, x)| r * x).sum();
            acc += a[i].conj() * rv;
        }
        Ok(acc.re)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let d = self.dim();
        (0..d).map(|i| self.entries[i * d + i].re).collect()
    }

    pub(crate) fn to_mat(&self) -> Mat<C64> {
        mat_from_rowmajor(&self.entries, self.dim(), self.dim())
    }

    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        eigvalsh_mat(self.to_mat().as_ref())
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        Ok(self.eigenvalues()?.first().copied().unwrap_or(0.0))
    }

    pub fn max_entry_distance(&self, other: &Self) -> f64 {
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Partial trace keeping the listed qubits, in the listed order.
    pub fn reduced(&self, keep: &[usize]) -> Result<DensityMatrix> {
        check_sites(self.n_qubits, keep)?;
        let n = self.n_qubits;
        let k = keep.len();
        let traced: Vec<usize> = (0..n).filter(|q| !keep.contains(q)).collect();
        let (koffs, _) = block_offsets(n, keep);
        let (toffs, _) = block_offsets(n, &traced);
        let dk = 1usize << k;
        let dim = self.dim();
        let mut out = vec![C64::new(0.0, 0.0); dk * dk];
        for i in 0..dk {
            for j in 0..dk {
                out[i * dk + j] = toffs
                    .iter()
                    .map(|&t| self.entries[(koffs[i] + t) * dim + koffs[j] + t])
                    .sum();
            }
        }
        Ok(DensityMatrix::from_entries_unchecked(k, out))
    }
}

/// Output-distribution access shared by every backend.
pub trait BitstringDistribution {
    fn bitstring_distribution(&self) -> Result<ProbDist>;
}

impl BitstringDistribution for StateVector {
    fn bitstring_distribution(&self) -> Result<ProbDist> {
        ProbDist::new(self.n_qubits, self.probabilities())
    }
}

impl BitstringDistribution for DensityMatrix {
    fn bitstring_distribution(&self) -> Result<ProbDist> {
        let mut diag = self.diagonal();
        for p in &mut diag {
            if *p < 0.0 && *p >= -1e-12 {
                *p = 0.0;
            }
        }
        ProbDist::new(self.n_qubits, diag)
    }
}

pub fn bitstring_distribution<S: BitstringDistribution>(state: &S) -> Result<ProbDist> {
    state.bitstring_distribution()
}

fn check_cap(what: &'static str, n_qubits: usize, cap: usize) -> Result<()> {
    if n_qubits > cap {
        Err(Error::CapExceeded { what, n_qubits, cap })
    } else {
        Ok(())
    }
}

pub fn run_pure(circuit: &Circuit) -> Result<StateVector> {
    run_pure_with_cap(circuit, DEFAULT_PURE_CAP)
}

/// Noiseless evolution of `|0…0⟩` through every layer.
pub fn run_pure_with_cap(circuit: &Circuit, cap: usize) -> Result<StateVector> {
    check_cap("state-vector simulation", circuit.n_qubits, cap)?;
    circuit.validate()?;
    let mut psi = StateVector::zero_state(circuit.n_qubits);
    for layer in &circuit.layers {
        for g in &layer.singles {
            psi.apply(&[g.qubit], &crate::gates::flatten2(&g.matrix()))?;
        }
        for p in &layer.pairs {
            psi.apply(&[p.left(), p.right()], &crate::gates::flatten4(&p.matrix()))?;
        }
    }
    Ok(psi)
}

pub fn run_noisy(circuit: &Circuit, noise: &NoiseSpec) -> Result<DensityMatrix> {
    run_noisy_with_cap(circuit, noise, DEFAULT_DENSITY_CAP)
}

/// Superoperator of `u` followed by the one-qubit superoperator `ch`.
fn compose_1q(ch: &[C64], u: &[C64; 4]) -> Vec<C64> {
    let mut su = [C64::new(0.0, 0.0); 16];
    for i in 0..2 {
        for j in 0..2 {
            for ip in 0..2 {
                for jp in 0..2 {
                    su[(i * 2 + j) * 4 + ip * 2 + jp] = u[i * 2 + ip] * u[j * 2 + jp].conj();
                }
            }
        }
    }
    (0..16)
        .map(|k| {
            let (r, c) = (k / 4, k % 4);
            (0..4).map(|m| ch[r * 4 + m] * su[m * 4 + c]).sum()
        })
        .collect()
}

/// Density-matrix evolution with the gate noise applied to both legs of
/// every pair gate, before the gate.
pub fn run_noisy_with_cap(circuit: &Circuit, noise: &NoiseSpec, cap: usize) -> Result<DensityMatrix> {
    check_cap("density-matrix simulation", circuit.n_qubits, cap)?;
    circuit.validate()?;
    let channel = noise.channel()?;
    let leg_superop = channel.as_ref().filter(|ch| ch.arity() == 1).map(|ch| ch.superoperator());
    let mut rho = DensityMatrix::basis(circuit.n_qubits, 0);
    for layer in &circuit.layers {
        let mut pending: Vec<Option<[C64; 4]>> = vec![None; circuit.n_qubits];
        for g in &layer.singles {
            let u = crate::gates::flatten2(&g.matrix());
            if leg_superop.is_some() && layer.pairs.iter().any(|p| p.left() == g.qubit || p.right() == g.qubit) {
                // folded into the leg noise below
                pending[g.qubit] = Some([u[0], u[1], u[2], u[3]]);
            } else {
                rho.apply_unitary(&[g.qubit], &u)?;
            }
        }
        for p in &layer.pairs {
            match (&channel, &leg_superop) {
                (_, Some(ch)) => {
                    for q in [p.left(), p.right()] {
                        match pending[q].take() {
                            Some(u) => rho.apply_superop(&[q], &compose_1q(ch, &u))?,
                            None => rho.apply_superop(&[q], ch)?,
                        }
                    }
                }
                (Some(ch), None) => rho.apply_channel(ch, &[p.left(), p.right()])?,
                (None, None) => {}
            }
            rho.apply_unitary(&[p.left(), p.right()], &crate::gates::flatten4(&p.matrix()))?;
        }
        rho.symmetrize();
    }
    Ok(rho)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::fidelity;
    use crate::circuit::{random_circuit, Layer, SingleQubitGate, TwoQubitGate, TwoQubitKind};
    use crate::gates;
    use crate::noise::NoiseModel;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn empty_circuit_gives_zero_state() {
        let psi = run_pure(&Circuit::empty(3)).unwrap();
        assert_eq!(psi, StateVector::zero_state(3));
    }

    #[test]
    fn x_equivalent_gate_flips_qubit() {
        let c = Circuit {
            n_qubits: 1,
            seed: 0,
            layers: vec![Layer {
                singles: vec![SingleQubitGate { qubit: 0, alpha: FRAC_PI_2, theta: FRAC_PI_2, phi: 0.0 }],
                pairs: vec![],
            }],
        };
        let psi = run_pure(&c).unwrap();
        assert!((psi.amplitudes()[1].norm_sqr() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn bell_state_from_rotation_and_cnot() {
        // exp(iπ/4 σy) maps |0⟩ to (|0⟩ − |1⟩)/√2 up to sign, then CNOT
        let c = Circuit {
            n_qubits: 2,
            seed: 0,
            layers: vec![Layer {
                singles: vec![SingleQubitGate { qubit: 0, alpha: std::f64::consts::FRAC_PI_4, theta: FRAC_PI_2, phi: FRAC_PI_2 }],
                pairs: vec![TwoQubitGate { kind: TwoQubitKind::Cnot, control: 0, target: 1 }],
            }],
        };
        let p = run_pure(&c).unwrap().probabilities();
        // oracle: explicit 4x4 products
        let g = c.layers[0].singles[0].matrix();
        let u = gates::mul4(&gates::cnot(), &gates::kron(&g, &gates::IDENTITY));
        let expected: Vec<f64> = (0..4).map(|i| u[i][0].norm_sqr()).collect();
        for i in 0..4 {
            assert!((p[i] - expected[i]).abs() < 1e-15);
        }
        assert!((p[0] - 0.5).abs() < 1e-12 && (p[3] - 0.5).abs() < 1e-12);
        assert!(p[1].abs() < 1e-12 && p[2].abs() < 1e-12);
    }

    #[test]
    fn pure_cap_enforced() {
        let c = Circuit::empty(5);
        assert!(matches!(run_pure_with_cap(&c, 4), Err(Error::CapExceeded { .. })));
        assert!(matches!(
            run_noisy_with_cap(&c, &NoiseSpec::NONE, 4),
            Err(Error::CapExceeded { .. })
        ));
    }

    #[test]
    fn noiseless_density_matches_pure() {
        for (n, d, seed) in [(2, 3, 1u64), (4, 6, 2), (6, 8, 3)] {
            let c = random_circuit(n, d, seed).unwrap();
            let psi = run_pure(&c).unwrap();
            for model in NoiseModel::ALL {
                let rho = run_noisy(&c, &NoiseSpec::new(model, 0.0).unwrap()).unwrap();
                let expected = DensityMatrix::from_pure(&psi);
                assert!(rho.max_entry_distance(&expected) < 1e-10);
            }
        }
    }

    #[test]
    fn depolarizing_fidelity_decreases_with_rate() {
        let c = random_circuit(4, 6, 9).unwrap();
        let psi = run_pure(&c).unwrap();
        let rho0 = DensityMatrix::from_pure(&psi);
        let mut last = 1.0 + 1e-12;
        for eps in [0.0, 0.01, 0.02, 0.05, 0.1, 0.2] {
            let rho = run_noisy(&c, &NoiseSpec::new(NoiseModel::Depolarizing, eps).unwrap()).unwrap();
            let f = fidelity(&rho0, &rho).unwrap();
            assert!(f <= last, "fidelity {f} rose above {last} at eps {eps}");
            last = f;
        }
    }

    // full 2^n operator of `op` acting on `sites`, first site most significant
    fn embed(n: usize, sites: &[usize], op: &[C64]) -> Vec<C64> {
        let dim = 1 << n;
        let d = 1 << sites.len();
        let sub = |x: usize| sites.iter().fold(0, |acc, &q| (acc << 1) | ((x >> (n - 1 - q)) & 1));
        let mask: usize = sites.iter().map(|&q| 1 << (n - 1 - q)).sum();
        let mut out = vec![C64::new(0.0, 0.0); dim * dim];
        for i in 0..dim {
            for j in 0..dim {
                if i & !mask == j & !mask {
                    out[i * dim + j] = op[sub(i) * d + sub(j)];
                }
            }
        }
        out
    }

    fn mat_mul(a: &[C64], b: &[C64], dim: usize) -> Vec<C64> {
        let mut c = vec![C64::new(0.0, 0.0); dim * dim];
        for i in 0..dim {
            for k in 0..dim {
                for j in 0..dim {
                    c[i * dim + j] += a[i * dim + k] * b[k * dim + j];
                }
            }
        }
        c
    }

    fn dagger(a: &[C64], dim: usize) -> Vec<C64> {
        (0..dim * dim).map(|k| a[(k % dim) * dim + k / dim].conj()).collect()
    }

    fn conjugate_by(rho: &[C64], ops: &[Vec<C64>], dim: usize) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); dim * dim];
        for k in ops {
            let t = mat_mul(&mat_mul(k, rho, dim), &dagger(k, dim), dim);
            out.iter_mut().zip(t).for_each(|(o, x)| *o += x);
        }
        out
    }

    #[test]
    fn noisy_run_matches_full_kraus_oracle() {
        let n = 4;
        let dim = 1 << n;
        for model in NoiseModel::ALL {
            for seed in 0..3 {
                let c = random_circuit(n, 5, 40 + seed).unwrap();
                let spec = NoiseSpec::new(model, 0.13).unwrap();
                let ch = spec.channel().unwrap().unwrap();
                let mut rho = vec![C64::new(0.0, 0.0); dim * dim];
                rho[0] = C64::new(1.0, 0.0);
                let kraus_on = |sites: &[usize]| -> Vec<Vec<C64>> {
                    ch.kraus().iter().map(|k| embed(n, sites, k.data())).collect()
                };
                for layer in &c.layers {
                    for g in &layer.singles {
                        rho = conjugate_by(&rho, &[embed(n, &[g.qubit], &gates::flatten2(&g.matrix()))], dim);
                    }
                    for p in &layer.pairs {
                        if ch.arity() == 1 {
                            rho = conjugate_by(&rho, &kraus_on(&[p.left()]), dim);
                            rho = conjugate_by(&rho, &kraus_on(&[p.right()]), dim);
                        } else {
                            rho = conjugate_by(&rho, &kraus_on(&[p.left(), p.right()]), dim);
                        }
                        let u = embed(n, &[p.left(), p.right()], &gates::flatten4(&p.matrix()));
                        rho = conjugate_by(&rho, &[u], dim);
                    }
                }
                let got = run_noisy(&c, &spec).unwrap();
                let err = got.entries().iter().zip(&rho).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
                assert!(err < 1e-12, "{model:?} seed {seed}: {err}");
            }
        }
    }

    #[test]
    fn trace_and_hermiticity_kept() {
        let c = random_circuit(5, 6, 4).unwrap();
        for model in NoiseModel::ALL {
            let rho = run_noisy(&c, &NoiseSpec::new(model, 0.07).unwrap()).unwrap();
            assert!((rho.trace().re - 1.0).abs() < 1e-10);
            assert!(rho.hermiticity_error() < 1e-12);
            assert!(rho.min_eigenvalue().unwrap() > -1e-8);
        }
    }

    #[test]
    fn weak_depolarizing_stays_close_to_global_form() {
        let c = random_circuit(6, 8, 5).unwrap();
        let psi = run_pure(&c).unwrap();
        let rho = run_noisy(&c, &NoiseSpec::new(NoiseModel::Depolarizing, 1e-3).unwrap()).unwrap();
        let (vals, vecs) = crate::tensor::eigh_mat(rho.to_mat().as_ref()).unwrap();
        let top = vals.len() - 1;
        let overlap: C64 = (0..rho.dim()).map(|i| vecs[(i, top)].conj() * psi.amplitudes()[i]).sum();
        assert!(overlap.norm() > 0.99, "overlap {}", overlap.norm());
    }

    #[test]
    fn purity_non_increasing_for_unital_noise() {
        let c = random_circuit(5, 8, 6).unwrap();
        for model in [NoiseModel::Dephasing, NoiseModel::Depolarizing] {
            let mut prev = 1.0 + 1e-12;
            for depth in 1..=c.depth() {
                let prefix = Circuit { layers: c.layers[..depth].to_vec(), ..c.clone() };
                let rho = run_noisy(&prefix, &NoiseSpec::new(model, 0.05).unwrap()).unwrap();
                let p = rho.purity();
                assert!(p <= prev + 1e-12);
                prev = p;
            }
        }
    }

    #[test]
    fn distributions_of_simple_states() {
        let d = StateVector::zero_state(3).bitstring_distribution().unwrap();
        assert_eq!(d.probs()[0], 1.0);
        assert!(d.probs()[1..].iter().all(|&p| p == 0.0));
        let mixed = DensityMatrix::maximally_mixed(3).bitstring_distribution().unwrap();
        assert!(mixed.probs().iter().all(|&p| (p - 0.125).abs() < 1e-15));
        let c = random_circuit(4, 3, 8).unwrap();
        let psi = run_pure(&c).unwrap();
        let from_rho = DensityMatrix::from_pure(&psi).bitstring_distribution().unwrap();
        for (a, b) in from_rho.probs().iter().zip(psi.probabilities()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn reduced_density_of_product() {
        let mut psi = StateVector::zero_state(3);
        psi.apply(&[1], &gates::flatten2(&gates::PAULI_X)).unwrap();
        let rho = DensityMatrix::from_pure(&psi);
        let r = rho.reduced(&[1]).unwrap();
        assert!((r.get(1, 1).re - 1.0).abs() < 1e-15);
        let r = rho.reduced(&[2, 1]).unwrap();
        // kept order (2, 1): qubit 2 is |0⟩, qubit 1 is |1⟩ → index 0b01
        assert!((r.get(1, 1).re - 1.0).abs() < 1e-15);
    }
}
