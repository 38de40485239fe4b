//! Bond-truncated matrix product state for noiseless circuits.
//!
//! Site tensors have axes `(left, physical, right)`. An orthogonality center
//! is moved to the active pair by QR sweeps before every two-qubit gate, so
//! each truncation discards the least weight possible for that bond.

use faer::Mat;
use num_complex::Complex64 as C64;

use crate::circuit::Circuit;
use crate::error::{Error, Result};
use crate::exact::{StateVector, DEFAULT_PURE_CAP};
use crate::gates::{Mat2, Mat4};
use crate::tensor::{mat_from_rowmajor, qr_mat, rowmajor_from_mat, svd_mat_nonempty, ComplexTensor};

/// Singular values below this fraction of the total weight are dropped even
/// when the bond dimension is not capped.
pub const NUMERICAL_CUTOFF: f64 = 1e-14;

#[derive(Clone, Debug)]
struct Site {
    l: usize,
    r: usize,
    // row-major (l, 2, r)
    data: Vec<C64>,
}

/// One bond truncation event.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Truncation {
    pub bond: usize,
    pub discarded_weight: f64,
}

#[derive(Clone, Debug)]
pub struct MpsState {
    n_qubits: usize,
    chi_max: usize,
    sites: Vec<Site>,
    center: usize,
    truncations: Vec<Truncation>,
    retained_norm_sqr: f64,
}

impl MpsState {
    /// `|0…0⟩` with bond cap `chi_max`.
    pub fn zero_state(n_qubits: usize, chi_max: usize) -> Result<Self> {
        Self::product_state(&"0".repeat(n_qubits), chi_max)
    }

    pub fn product_state(bitstring: &str, chi_max: usize) -> Result<Self> {
        if chi_max == 0 {
            return Err(Error::invalid("bond dimension cap must be at least 1"));
        }
        if bitstring.is_empty() {
            return Err(Error::invalid("empty bitstring"));
        }
        let sites = bitstring
            .chars()
            .map(|ch| {
                let mut data = vec![C64::new(0.0, 0.0); 2];
                match ch {
                    '0' => data[0] = C64::new(1.0, 0.0),
                    '1' => data[1] = C64::new(1.0, 0.0),
                    _ => return Err(Error::invalid(format!("bitstring contains '{ch}'"))),
                }
                Ok(Site { l: 1, r: 1, data })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            n_qubits: sites.len(),
            chi_max,
            sites,
            center: 0,
            truncations: Vec::new(),
            retained_norm_sqr: 1.0,
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn chi_max(&self) -> usize {
        self.chi_max
    }

    /// Bond dimensions including the two boundary bonds of dimension 1.
    pub fn bond_dims(&self) -> Vec<usize> {
        let mut dims: Vec<usize> = self.sites.iter().map(|s| s.l).collect();
        dims.push(self.sites.last().map_or(1, |s| s.r));
        dims
    }

    pub fn site_tensor(&self, k: usize) -> ComplexTensor {
        let s = &self.sites[k];
        ComplexTensor::from_raw(vec![s.l, 2, s.r], s.data.clone())
    }

    pub fn truncations(&self) -> &[Truncation] {
        &self.truncations
    }

    pub fn total_discarded_weight(&self) -> f64 {
        self.truncations.iter().map(|t| t.discarded_weight).sum()
    }

    /// Product of `1 − w` over all truncations: the squared norm the state
    /// would have without renormalization.
    pub fn retained_norm_sqr(&self) -> f64 {
        self.retained_norm_sqr
    }

    fn check_site(&self, k: usize) -> Result<()> {
        if k >= self.n_qubits {
            return Err(Error::SiteOutOfRange {
                site: k,
                n_qubits: self.n_qubits,
            });
        }
        Ok(())
    }

    pub fn apply_1q_gate(&mut self, site: usize, gate: &Mat2) -> Result<()> {
        self.check_site(site)?;
        let s = &mut self.sites[site];
        let r = s.r;
        for li in 0..s.l {
            for ri in 0..r {
                let a0 = s.data[(li * 2) * r + ri];
                let a1 = s.data[(li * 2 + 1) * r + ri];
                s.data[(li * 2) * r + ri] = gate[0][0] * a0 + gate[0][1] * a1;
                s.data[(li * 2 + 1) * r + ri] = gate[1][0] * a0 + gate[1][1] * a1;
            }
        }
        Ok(())
    }

    fn shift_center_right(&mut self) {
        let k = self.center;
        let (l, r) = (self.sites[k].l, self.sites[k].r);
        let m = mat_from_rowmajor(&self.sites[k].data, l * 2, r);
        let (q, rr) = qr_mat(m.as_ref());
        let kk = q.ncols();
        self.sites[k] = Site {
            l,
            r: kk,
            data: rowmajor_from_mat(q.as_ref()),
        };
        let next = &self.sites[k + 1];
        let nm = mat_from_rowmajor(&next.data, next.l, 2 * next.r);
        let prod = &rr * &nm;
        let nr = next.r;
        self.sites[k + 1] = Site {
            l: kk,
            r: nr,
            data: rowmajor_from_mat(prod.as_ref()),
        };
        self.center = k + 1;
    }

    fn shift_center_left(&mut self) {
        let k = self.center;
        let (l, r) = (self.sites[k].l, self.sites[k].r);
        let m = mat_from_rowmajor(&self.sites[k].data, l, 2 * r);
        let (q, rr) = qr_mat(m.adjoint().to_owned().as_ref());
        // m = rr† q†
        let kk = q.ncols();
        self.sites[k] = Site {
            l: kk,
            r,
            data: rowmajor_from_mat(q.adjoint().to_owned().as_ref()),
        };
        let prev = &self.sites[k - 1];
        let pm = mat_from_rowmajor(&prev.data, prev.l * 2, prev.r);
        let prod = &pm * rr.adjoint();
        let pl = prev.l;
        self.sites[k - 1] = Site {
            l: pl,
            r: kk,
            data: rowmajor_from_mat(prod.as_ref()),
        };
        self.center = k - 1;
    }

    fn move_center(&mut self, target: usize) {
        while self.center < target {
            self.shift_center_right();
        }
        while self.center > target {
            self.shift_center_left();
        }
    }

    /// Applies a gate on `(left, left + 1)`, truncates the shared bond to
    /// `chi_max`, renormalizes, and returns the discarded weight.
    pub fn apply_2q_gate(&mut self, left: usize, gate: &Mat4) -> Result<f64> {
        self.check_site(left + 1)?;
        self.move_center(left);
        let (a, b) = (&self.sites[left], &self.sites[left + 1]);
        let (l, m, r) = (a.l, a.r, b.r);
        let am = mat_from_rowmajor(&a.data, l * 2, m);
        let bm = mat_from_rowmajor(&b.data, m, 2 * r);
        let theta = &am * &bm;
        // theta rows (l, s1), cols (s2, r); apply the gate on (s1, s2)
        let mut w = Mat::<C64>::zeros(l * 2, 2 * r);
        for li in 0..l {
            for ri in 0..r {
                let mut v = [C64::new(0.0, 0.0); 4];
                for s1 in 0..2 {
                    for s2 in 0..2 {
                        v[2 * s1 + s2] = theta[(li * 2 + s1, s2 * r + ri)];
                    }
                }
                for o1 in 0..2 {
                    for o2 in 0..2 {
                        let row = &gate[2 * o1 + o2];
                        w[(li * 2 + o1, o2 * r + ri)] = (0..4).map(|j| row[j] * v[j]).sum();
                    }
                }
            }
        }
        let svd = svd_mat_nonempty(w.as_ref(), Some(self.chi_max), NUMERICAL_CUTOFF)?;
        let kept: f64 = svd.s.iter().map(|x| x * x).sum();
        if !(kept > 0.0) {
            return Err(Error::numerical("state norm vanished during truncation"));
        }
        let inv = 1.0 / kept.sqrt();
        let k = svd.s.len();
        let sv = Mat::from_fn(k, 2 * r, |i, j| svd.v[(i, j)] * (svd.s[i] * inv));
        self.sites[left] = Site {
            l,
            r: k,
            data: rowmajor_from_mat(svd.u.as_ref()),
        };
        self.sites[left + 1] = Site {
            l: k,
            r,
            data: rowmajor_from_mat(sv.as_ref()),
        };
        self.center = left + 1;
        let dw = svd.discarded_weight;
        self.truncations.push(Truncation {
            bond: left + 1,
            discarded_weight: dw,
        });
        self.retained_norm_sqr *= 1.0 - dw;
        Ok(dw)
    }

    /// Dense state vector, qubit 0 most significant.
    pub fn to_state_vector(&self) -> Result<StateVector> {
        if self.n_qubits > DEFAULT_PURE_CAP {
            return Err(Error::CapExceeded {
                what: "dense state vector",
                n_qubits: self.n_qubits,
                cap: DEFAULT_PURE_CAP,
            });
        }
        // running (prefix, bond) matrix
        let mut acc = vec![C64::new(1.0, 0.0)];
        let mut rows = 1usize;
        for s in &self.sites {
            acc = crate::tensor::matmul_rowmajor(&acc, rows, s.l, &s.data, 2 * s.r);
            rows *= 2;
        }
        StateVector::from_amplitudes(self.n_qubits, acc)
    }

    /// `|⟨ψ|ψ_s⟩|`.
    pub fn fidelity_to(&self, psi: &StateVector) -> Result<f64> {
        mps_fidelity_to(self, psi)
    }
}

/// Runs a noiseless circuit with every pair bond capped at `chi_max`.
pub fn mps_run(circuit: &Circuit, chi_max: usize) -> Result<MpsState> {
    circuit.validate()?;
    let mut state = MpsState::zero_state(circuit.n_qubits, chi_max)?;
    for layer in &circuit.layers {
        for g in &layer.singles {
            state.apply_1q_gate(g.qubit, &g.matrix())?;
        }
        for p in &layer.pairs {
            state.apply_2q_gate(p.left(), &p.matrix())?;
        }
    }
    Ok(state)
}

pub fn mps_fidelity_to(state: &MpsState, psi: &StateVector) -> Result<f64> {
    if state.n_qubits != psi.n_qubits() {
        return Err(Error::DimensionMismatch(format!(
            "{}-qubit MPS against {}-qubit state",
            state.n_qubits,
            psi.n_qubits()
        )));
    }
    let v = state.to_state_vector()?;
    Ok(psi.inner(&v).norm().min(1.0))
}
