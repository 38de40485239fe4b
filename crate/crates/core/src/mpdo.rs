//! Matrix product density operators.
//!
//! Each site tensor `T_k` carries a physical index `s`, an inner index `a`
//! and two bond indices, stored row-major as `(left, physical, inner, right)`.
//! The represented operator is `ρ = Σ_a Ψ_a Ψ_a†` where `Ψ_a` is the chain
//! contracted over bonds at fixed inner indices, so every state built here is
//! Hermitian and positive semidefinite no matter how it is truncated.
//!
//! Noise channels grow the inner index by direct sums of Kraus blocks; gates
//! grow the bonds. [`MpdoState::canonicalize_truncate_layer`] compresses both
//! once per circuit layer: inner truncation per site, a left-to-right QR sweep,
//! then a right-to-left SVD sweep on a canonical chain.

use std::collections::BTreeMap;

use faer::linalg::matmul::triangular::{self, BlockStructure};
use faer::{Accum, Mat, MatRef, Par};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::{index_to_bitstring, ProbDist};
use crate::circuit::Circuit;
use crate::error::{Error, Result};
use crate::exact::{DensityMatrix, DEFAULT_DENSITY_CAP};
use crate::gates::{self, Mat2, Mat4};
use crate::noise::{KrausChannel, NoiseSpec};
use crate::tensor::{
    eigh_mat, mat_from_rowmajor, qr_mat, rowmajor_from_mat, svd_mat_nonempty, truncation_rank, ComplexTensor,
};

/// Relative weight below which singular components count as numerical zeros.
pub const NUMERICAL_CUTOFF: f64 = 1e-14;
/// Largest qubit count for [`MpdoState::full_distribution`].
pub const DISTRIBUTION_CAP: usize = 26;
pub const SNAPSHOT_FORMAT: &str = "mpdo-snapshot";
pub const SITE_LAYOUT: &str = "left,physical,inner,right";

const UNITARITY_TOL: f64 = 1e-8;
const NEGATIVE_PROB_TOL: f64 = -1e-12;

fn zero() -> C64 {
    C64::new(0.0, 0.0)
}

fn permuted(shape: &[usize], data: Vec<C64>, perm: &[usize]) -> Vec<C64> {
    ComplexTensor::from_raw(shape.to_vec(), data)
        .permute_unchecked(perm)
        .into_data()
}

fn mat(data: &[C64], rows: usize, cols: usize) -> Mat<C64> {
    mat_from_rowmajor(data, rows, cols)
}

fn flat(m: MatRef<'_, C64>) -> Vec<C64> {
    rowmajor_from_mat(m)
}

fn conj_all(data: &[C64]) -> Vec<C64> {
    data.iter().map(|z| z.conj()).collect()
}

#[derive(Clone, Debug, PartialEq)]
struct Site {
    l: usize,
    d: usize,
    r: usize,
    data: Vec<C64>,
}

impl Site {
    fn shape(&self) -> [usize; 4] {
        [self.l, 2, self.d, self.r]
    }

    fn norm_sqr(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }
}

/// Per-layer compression summary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerRecord {
    /// Largest bond dimension before compression.
    pub pre_max_bond: usize,
    /// Largest inner dimension before compression.
    pub pre_max_inner: usize,
    pub max_bond: usize,
    pub max_inner: usize,
    /// Sum over sites of the locally discarded inner weight.
    pub inner_discarded_weight: f64,
    /// Sum over bonds of the discarded weight in the canonical sweep.
    pub bond_discarded_weight: f64,
    /// Largest `‖Σ T*T − I‖_F` over left-canonical sites after the QR sweep.
    pub canonical_residual: f64,
    /// Trace of the state before renormalization.
    pub trace_before: f64,
}

/// Matrix product density operator with bond and inner caps.
#[derive(Clone, Debug)]
pub struct MpdoState {
    n_qubits: usize,
    chi_max: Option<usize>,
    kappa_max: Option<usize>,
    sites: Vec<Site>,
    trace_factor: f64,
    bond_discarded: f64,
    inner_discarded: f64,
    peak_bond: usize,
    peak_inner: usize,
    layers: Vec<LayerRecord>,
}

fn check_cap(name: &str, cap: Option<usize>) -> Result<()> {
    if cap == Some(0) {
        return Err(Error::invalid(format!("{name} must be at least 1")));
    }
    Ok(())
}

fn check_unitary(m: &[C64], dim: usize) -> Result<()> {
    let dev = gates::unitarity_deviation(m, dim);
    if dev > UNITARITY_TOL || dev.is_nan() {
        return Err(Error::NonUnitary(dev));
    }
    Ok(())
}

fn kraus_mat2(ch: &KrausChannel) -> Vec<Mat2> {
    ch.kraus()
        .iter()
        .map(|k| {
            let d = k.data();
            [[d[0], d[1]], [d[2], d[3]]]
        })
        .collect()
}

fn kraus_mat4(ch: &KrausChannel) -> Vec<Mat4> {
    ch.kraus()
        .iter()
        .map(|k| {
            let d = k.data();
            let mut m = [[zero(); 4]; 4];
            for (i, row) in m.iter_mut().enumerate() {
                row.copy_from_slice(&d[4 * i..4 * i + 4]);
            }
            m
        })
        .collect()
}

/// `|s⟩⟨s|` for a bitstring `s` (qubit 0 first); all dimensions 1.
pub fn mpdo_product_state(bitstring: &str) -> Result<MpdoState> {
    if bitstring.is_empty() {
        return Err(Error::invalid("empty bitstring"));
    }
    let sites = bitstring
        .chars()
        .map(|ch| {
            let mut data = vec![zero(); 2];
            match ch {
                '0' => data[0] = C64::new(1.0, 0.0),
                '1' => data[1] = C64::new(1.0, 0.0),
                _ => return Err(Error::invalid(format!("bitstring contains '{ch}'"))),
            }
            Ok(Site { l: 1, d: 1, r: 1, data })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MpdoState::from_sites(sites))
}

/// `I / 2^n`, with inner dimension 2 on every site.
pub fn mpdo_maximally_mixed(n_qubits: usize) -> Result<MpdoState> {
    if n_qubits == 0 {
        return Err(Error::invalid("need at least one qubit"));
    }
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let site = Site {
        l: 1,
        d: 2,
        r: 1,
        // (s, a): (0,0) and (1,1)
        data: vec![C64::new(h, 0.0), zero(), zero(), C64::new(h, 0.0)],
    };
    Ok(MpdoState::from_sites(vec![site; n_qubits]))
}

impl MpdoState {
    fn from_sites(sites: Vec<Site>) -> Self {
        let mut s = Self {
            n_qubits: sites.len(),
            chi_max: None,
            kappa_max: None,
            sites,
            trace_factor: 1.0,
            bond_discarded: 0.0,
            inner_discarded: 0.0,
            peak_bond: 1,
            peak_inner: 1,
            layers: Vec::new(),
        };
        s.update_peaks();
        s
    }

    /// Sets the bond and inner caps used by the truncating operations.
    /// `None` means unlimited (numerical zeros are still dropped).
    pub fn with_caps(mut self, chi_max: Option<usize>, kappa_max: Option<usize>) -> Result<Self> {
        check_cap("chi_max", chi_max)?;
        check_cap("kappa_max", kappa_max)?;
        self.chi_max = chi_max;
        self.kappa_max = kappa_max;
        Ok(self)
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn chi_max(&self) -> Option<usize> {
        self.chi_max
    }

    pub fn kappa_max(&self) -> Option<usize> {
        self.kappa_max
    }

    /// Bond dimensions `D_0 … D_n`, boundaries included.
    pub fn bond_dims(&self) -> Vec<usize> {
        let mut dims: Vec<usize> = self.sites.iter().map(|s| s.l).collect();
        dims.push(self.sites[self.n_qubits - 1].r);
        dims
    }

    pub fn inner_dims(&self) -> Vec<usize> {
        self.sites.iter().map(|s| s.d).collect()
    }

    /// Site tensor with axes `(left, physical, inner, right)`.
    pub fn site_tensor(&self, k: usize) -> ComplexTensor {
        let s = &self.sites[k];
        ComplexTensor::from_raw(s.shape().to_vec(), s.data.clone())
    }

    /// Number of stored complex entries, `Σ_k 2 d_k D_k D_{k+1}`.
    pub fn memory_entries(&self) -> usize {
        self.sites.iter().map(|s| s.data.len()).sum()
    }

    /// Product of all trace values removed by renormalization.
    pub fn trace_factor(&self) -> f64 {
        self.trace_factor
    }

    pub fn bond_discarded_weight(&self) -> f64 {
        self.bond_discarded
    }

    pub fn inner_discarded_weight(&self) -> f64 {
        self.inner_discarded
    }

    pub fn peak_bond_dim(&self) -> usize {
        self.peak_bond
    }

    pub fn peak_inner_dim(&self) -> usize {
        self.peak_inner
    }

    pub fn layer_records(&self) -> &[LayerRecord] {
        &self.layers
    }

    fn update_peaks(&mut self) {
        for s in &self.sites {
            self.peak_bond = self.peak_bond.max(s.l).max(s.r);
            self.peak_inner = self.peak_inner.max(s.d);
        }
    }

    fn max_dims(&self) -> (usize, usize) {
        let b = self.sites.iter().map(|s| s.l.max(s.r)).max().unwrap_or(1);
        let d = self.sites.iter().map(|s| s.d).max().unwrap_or(1);
        (b, d)
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

    fn apply_1q_ops(&mut self, k: usize, ops: &[Mat2]) {
        let s = &self.sites[k];
        let (l, d, r, m) = (s.l, s.d, s.r, ops.len());
        let nd = m * d;
        let mut out = vec![zero(); l * 2 * nd * r];
        for li in 0..l {
            for a in 0..d {
                for ri in 0..r {
                    let t0 = s.data[((li * 2) * d + a) * r + ri];
                    let t1 = s.data[((li * 2 + 1) * d + a) * r + ri];
                    for (i, op) in ops.iter().enumerate() {
                        for o in 0..2 {
                            out[((li * 2 + o) * nd + i * d + a) * r + ri] = op[o][0] * t0 + op[o][1] * t1;
                        }
                    }
                }
            }
        }
        self.sites[k] = Site { l, d: nd, r, data: out };
        self.update_peaks();
    }

    /// Applies a unitary to one site's physical index.
    pub fn apply_1q_gate(&mut self, site: usize, gate: &Mat2) -> Result<()> {
        self.check_site(site)?;
        check_unitary(&gates::flatten2(gate), 2)?;
        self.apply_1q_ops(site, std::slice::from_ref(gate));
        Ok(())
    }

    /// Direct-sums the Kraus blocks of a one-qubit channel on the inner
    /// index: block `i` holds `A_i T` at inner positions `i·d .. (i+1)·d`.
    pub fn apply_1q_channel(&mut self, site: usize, channel: &KrausChannel) -> Result<()> {
        self.check_site(site)?;
        if channel.arity() != 1 {
            return Err(Error::invalid(format!(
                "{}-qubit channel applied to one site",
                channel.arity()
            )));
        }
        self.apply_1q_ops(site, &kraus_mat2(channel));
        Ok(())
    }

    /// Contracts sites `left` and `left + 1`, applies `ops` (one operator
    /// for a gate, the Kraus list for a channel) and splits back by SVD.
    /// The Kraus label becomes the slow part of the left inner index.
    /// Returns the discarded weight relative to the local tensor.
    fn two_site_update(&mut self, left: usize, ops: &[Mat4], max_rank: Option<usize>) -> Result<f64> {
        let (a, b) = (&self.sites[left], &self.sites[left + 1]);
        let (l, d1, mb) = (a.l, a.d, a.r);
        let (d2, r) = (b.d, b.r);
        let m = ops.len();

        // left tensor as (l a1) × (s1 mb) = Q_L R_L
        let at = permuted(&a.shape(), a.data.clone(), &[0, 2, 1, 3]);
        let (ql, rl) = qr_mat(mat(&at, l * d1, 2 * mb).as_ref());
        let p = ql.ncols();
        // right tensor as (mb s2) × (a2 r) = L_R Q_R, from the QR of its adjoint
        let bm = mat(&b.data, mb * 2, d2 * r);
        let (qb, rb) = qr_mat(bm.adjoint().to_owned().as_ref());
        let q = qb.ncols();
        let lr = flat(rb.adjoint().to_owned().as_ref());
        let qr_right = qb.adjoint().to_owned();

        // theta[(p s1), (s2 q)]
        let theta = mat(&flat(rl.as_ref()), p * 2, mb) * mat(&lr, mb, 2 * q);
        let mut w = Mat::<C64>::zeros(p * 2 * m, 2 * q);
        for pi in 0..p {
            for qi in 0..q {
                let v = [
                    theta[(pi * 2, qi)],
                    theta[(pi * 2, q + qi)],
                    theta[(pi * 2 + 1, qi)],
                    theta[(pi * 2 + 1, q + qi)],
                ];
                for (i, op) in ops.iter().enumerate() {
                    for o1 in 0..2 {
                        for o2 in 0..2 {
                            let row = &op[2 * o1 + o2];
                            w[((pi * 2 + o1) * m + i, o2 * q + qi)] =
                                row[0] * v[0] + row[1] * v[1] + row[2] * v[2] + row[3] * v[3];
                        }
                    }
                }
            }
        }

        let svd = svd_mat_nonempty(w.as_ref(), max_rank, NUMERICAL_CUTOFF)?;
        let k = svd.s.len();
        // singular values go left so a right-canonical block stays right-canonical
        let us = Mat::from_fn(p * 2 * m, k, |i, j| svd.u[(i, j)] * svd.s[j]);
        let left_new = &ql * mat(&flat(us.as_ref()), p, 2 * m * k);
        let left_data = permuted(&[l, d1, 2, m, k], flat(left_new.as_ref()), &[0, 2, 3, 1, 4]);
        let right_new = mat(&flat(svd.v.as_ref()), k * 2, q) * &qr_right;
        self.sites[left] = Site {
            l,
            d: m * d1,
            r: k,
            data: left_data,
        };
        self.sites[left + 1] = Site {
            l: k,
            d: d2,
            r,
            data: flat(right_new.as_ref()),
        };
        self.update_peaks();
        Ok(svd.discarded_weight)
    }

    fn renormalize(&mut self) -> Result<()> {
        let tr = self.trace();
        if !(tr > 0.0) || !tr.is_finite() {
            return Err(Error::numerical(format!("state trace {tr} cannot be normalized")));
        }
        let inv = 1.0 / tr.sqrt();
        let last = self.n_qubits - 1;
        self.sites[last].data.iter_mut().for_each(|z| *z *= inv);
        self.trace_factor *= tr;
        Ok(())
    }

    fn check_pair(&self, left: usize) -> Result<()> {
        self.check_site(left)?;
        self.check_site(left + 1)
    }

    /// Applies a two-qubit unitary on `(left, left + 1)`, truncating the new
    /// bond to `chi_max` and renormalizing the trace. Returns the discarded
    /// weight of the split.
    pub fn apply_2q_gate(&mut self, left: usize, gate: &Mat4) -> Result<f64> {
        self.check_pair(left)?;
        check_unitary(&gates::flatten4(gate), 4)?;
        let dw = self.two_site_update(left, std::slice::from_ref(gate), self.chi_max)?;
        self.finish_truncating_update(dw)
    }

    /// Applies a two-qubit channel on `(left, left + 1)`: the merged inner
    /// dimension grows by the Kraus count before the split.
    pub fn apply_2q_channel(&mut self, left: usize, channel: &KrausChannel) -> Result<f64> {
        self.check_pair(left)?;
        if channel.arity() != 2 {
            return Err(Error::invalid(format!(
                "{}-qubit channel applied to a pair",
                channel.arity()
            )));
        }
        let dw = self.two_site_update(left, &kraus_mat4(channel), self.chi_max)?;
        self.finish_truncating_update(dw)
    }

    fn finish_truncating_update(&mut self, dw: f64) -> Result<f64> {
        if dw > 0.0 {
            self.bond_discarded += dw;
            self.renormalize()?;
        }
        Ok(dw)
    }

    /// Runs `ops` on the ordered qubit pair `(a, b)` at any distance, moving
    /// `min(a, b)` next to the other with SWAPs and back again. No bond cap
    /// is applied.
    fn routed_update(&mut self, a: usize, b: usize, ops: &[Mat4]) -> Result<()> {
        self.check_site(a)?;
        self.check_site(b)?;
        if a == b {
            return Err(Error::invalid(format!("two-qubit operation on repeated site {a}")));
        }
        let sw = gates::swap();
        let (lo, hi) = (a.min(b), a.max(b));
        for k in lo..hi - 1 {
            self.two_site_update(k, &[sw], None)?;
        }
        let oriented: Vec<Mat4> = if a < b {
            ops.to_vec()
        } else {
            ops.iter().map(|o| gates::mul4(&gates::mul4(&sw, o), &sw)).collect()
        };
        self.two_site_update(hi - 1, &oriented, None)?;
        for k in (lo..hi - 1).rev() {
            self.two_site_update(k, &[sw], None)?;
        }
        Ok(())
    }

    /// Two-qubit gate on qubits `(a, b)` in that order, any distance apart.
    pub fn apply_gate_between(&mut self, a: usize, b: usize, gate: &Mat4) -> Result<()> {
        check_unitary(&gates::flatten4(gate), 4)?;
        self.routed_update(a, b, std::slice::from_ref(gate))
    }

    /// Two-qubit channel on qubits `(a, b)` in that order, any distance apart.
    pub fn apply_2q_channel_between(&mut self, a: usize, b: usize, channel: &KrausChannel) -> Result<()> {
        if channel.arity() != 2 {
            return Err(Error::invalid(format!(
                "{}-qubit channel applied to a pair",
                channel.arity()
            )));
        }
        self.routed_update(a, b, &kraus_mat4(channel))
    }

    /// Keeps at most `kappa_max` inner components of one site: the leading
    /// singular vectors of `T` matricized as `(l, s, r) × a`. Returns the
    /// discarded weight relative to the site tensor.
    pub fn truncate_inner(&mut self, site: usize, kappa_max: usize) -> Result<f64> {
        self.check_site(site)?;
        check_cap("kappa_max", Some(kappa_max))?;
        let dw = self.truncate_inner_impl(site, Some(kappa_max))?;
        self.inner_discarded += dw;
        Ok(dw)
    }

    fn truncate_inner_impl(&mut self, k: usize, kappa: Option<usize>) -> Result<f64> {
        let s = &self.sites[k];
        let (l, d, r) = (s.l, s.d, s.r);
        if d == 1 {
            return Ok(0.0);
        }
        let rows = l * 2 * r;
        let t = permuted(&s.shape(), s.data.clone(), &[0, 1, 3, 2]);
        let m = mat(&t, rows, d);
        // right singular vectors of m from its d × d Gram matrix
        // only the lower triangle is formed; the eigensolver reads no more
        let mut gram = Mat::<C64>::zeros(d, d);
        triangular::matmul(
            gram.as_mut(),
            BlockStructure::TriangularLower,
            Accum::Replace,
            m.adjoint(),
            BlockStructure::Rectangular,
            m.as_ref(),
            BlockStructure::Rectangular,
            C64::new(1.0, 0.0),
            Par::Seq,
        );
        let (vals, vecs) = eigh_mat(gram.as_ref())?;
        let svals: Vec<f64> = vals.iter().rev().map(|&x| x.max(0.0).sqrt()).collect();
        let (keep, dw) = truncation_rank(&svals, kappa, NUMERICAL_CUTOFF);
        let keep = keep.max(1);
        if keep == d {
            return Ok(0.0);
        }
        let vk = Mat::from_fn(d, keep, |i, j| vecs[(i, d - 1 - j)]);
        let tk = &m * &vk;
        let data = permuted(&[l, 2, r, keep], flat(tk.as_ref()), &[0, 1, 3, 2]);
        self.sites[k] = Site { l, d: keep, r, data };
        Ok(dw)
    }

    /// One compression pass: a left-to-right QR sweep that truncates each
    /// inner index to `kappa_max` just before the site is orthogonalized,
    /// trace renormalization, then a right-to-left SVD sweep truncating each
    /// bond to `chi_max`. Gates and channels keep the right-canonical form
    /// this leaves behind, so every inner truncation sees an isometric
    /// environment.
    pub fn canonicalize_truncate_layer(
        &mut self,
        chi_max: Option<usize>,
        kappa_max: Option<usize>,
    ) -> Result<LayerRecord> {
        check_cap("chi_max", chi_max)?;
        check_cap("kappa_max", kappa_max)?;
        let n = self.n_qubits;
        let (pre_max_bond, pre_max_inner) = self.max_dims();

        // Each inner index is truncated when its site is the orthogonality
        // centre of the sweep; the rest of the chain is then isometric.
        let mut inner_dw = 0.0;
        let mut residual = 0.0f64;
        for k in 0..n {
            inner_dw += self.truncate_inner_impl(k, kappa_max)?;
            if k == n - 1 {
                break;
            }
            let s = &self.sites[k];
            let (l, d, r) = (s.l, s.d, s.r);
            let (q, rr) = qr_mat(mat(&s.data, l * 2 * d, r).as_ref());
            let kk = q.ncols();
            let gram = q.adjoint() * &q;
            let mut dev = 0.0;
            for i in 0..kk {
                for j in 0..kk {
                    let target = if i == j { 1.0 } else { 0.0 };
                    dev += (gram[(i, j)] - target).norm_sqr();
                }
            }
            residual = residual.max(dev.sqrt());
            self.sites[k] = Site {
                l,
                d,
                r: kk,
                data: flat(q.as_ref()),
            };
            let nx = &self.sites[k + 1];
            let (nd, nr) = (nx.d, nx.r);
            let prod = &rr * mat(&nx.data, r, 2 * nd * nr);
            self.sites[k + 1] = Site {
                l: kk,
                d: nd,
                r: nr,
                data: flat(prod.as_ref()),
            };
        }
        let trace_before = self.sites[n - 1].norm_sqr();
        if !(trace_before > 0.0) || !trace_before.is_finite() {
            return Err(Error::numerical(format!(
                "state trace {trace_before} cannot be normalized"
            )));
        }
        let inv = 1.0 / trace_before.sqrt();
        self.sites[n - 1].data.iter_mut().for_each(|z| *z *= inv);
        self.trace_factor *= trace_before;

        let mut bond_dw = 0.0;
        for k in (1..n).rev() {
            let s = &self.sites[k];
            let (l, d, r) = (s.l, s.d, s.r);
            let svd = svd_mat_nonempty(mat(&s.data, l, 2 * d * r).as_ref(), chi_max, NUMERICAL_CUTOFF)?;
            let kk = svd.s.len();
            let kept: f64 = svd.s.iter().map(|x| x * x).sum();
            if !(kept > 0.0) {
                return Err(Error::numerical("state vanished during bond truncation"));
            }
            let norm = kept.sqrt();
            bond_dw += svd.discarded_weight;
            self.trace_factor *= kept;
            self.sites[k] = Site {
                l: kk,
                d,
                r,
                data: flat(svd.v.as_ref()),
            };
            let us = Mat::from_fn(l, kk, |i, j| svd.u[(i, j)] * (svd.s[j] / norm));
            let pv = &self.sites[k - 1];
            let (pl, pd) = (pv.l, pv.d);
            let prod = mat(&pv.data, pl * 2 * pd, l) * &us;
            self.sites[k - 1] = Site {
                l: pl,
                d: pd,
                r: kk,
                data: flat(prod.as_ref()),
            };
        }

        self.inner_discarded += inner_dw;
        self.bond_discarded += bond_dw;
        self.update_peaks();
        let (max_bond, max_inner) = self.max_dims();
        let rec = LayerRecord {
            pre_max_bond,
            pre_max_inner,
            max_bond,
            max_inner,
            inner_discarded_weight: inner_dw,
            bond_discarded_weight: bond_dw,
            canonical_residual: residual,
            trace_before,
        };
        self.layers.push(rec.clone());
        Ok(rec)
    }

    /// `‖Σ_{l,s,a} T* T − I‖_F` for every site viewed as `(l s a) × r`.
    pub fn left_canonical_residuals(&self) -> Vec<f64> {
        self.sites
            .iter()
            .map(|s| {
                let m = mat(&s.data, s.l * 2 * s.d, s.r);
                let g = m.adjoint() * &m;
                let mut dev = 0.0;
                for i in 0..s.r {
                    for j in 0..s.r {
                        let t = if i == j { 1.0 } else { 0.0 };
                        dev += (g[(i, j)] - t).norm_sqr();
                    }
                }
                dev.sqrt()
            })
            .collect()
    }

    /// `Tr ρ` by transfer-matrix contraction.
    pub fn trace(&self) -> f64 {
        let mut env = vec![C64::new(1.0, 0.0)];
        for s in self.sites.iter().rev() {
            env = grow_right_trace(s, &env);
        }
        env[0].re
    }

    /// Dense density matrix; limited to the exact density-matrix cap.
    pub fn to_density_matrix(&self) -> Result<DensityMatrix> {
        let n = self.n_qubits;
        if n > DEFAULT_DENSITY_CAP {
            return Err(Error::CapExceeded {
                what: "dense density matrix",
                n_qubits: n,
                cap: DEFAULT_DENSITY_CAP,
            });
        }
        let h = n / 2;
        let mut left = vec![C64::new(1.0, 0.0)];
        let mut big = 1usize;
        for s in &self.sites[..h] {
            left = grow_left_full(&left, big, s);
            big *= 2;
        }
        let mut right = vec![C64::new(1.0, 0.0)];
        let mut small = 1usize;
        for s in self.sites[h..].iter().rev() {
            right = grow_right_full(s, &right, small);
            small *= 2;
        }
        let b = self.sites[h].l;
        let joined = mat(&left, big * big, b * b) * mat(&right, b * b, small * small);
        let rho = permuted(&[big, big, small, small], flat(joined.as_ref()), &[0, 2, 1, 3]);
        let mut dm = DensityMatrix::from_entries_unchecked(n, rho);
        dm.symmetrize();
        Ok(dm)
    }

    /// `⟨x|ρ|x⟩` for a bitstring `x`, qubit 0 first.
    pub fn bitstring_prob(&self, bitstring: &str) -> Result<f64> {
        let index = crate::analysis::bitstring_to_index(bitstring, self.n_qubits)?;
        let n = self.n_qubits;
        let mut env = vec![C64::new(1.0, 0.0)];
        for (k, s) in self.sites.iter().enumerate() {
            env = grow_left_select(&env, s, (index >> (n - 1 - k)) & 1);
        }
        clamp_prob(env[0].re)
    }

    /// All `2^n` diagonal entries of `ρ`.
    pub fn full_distribution(&self) -> Result<ProbDist> {
        let n = self.n_qubits;
        if n > DISTRIBUTION_CAP {
            return Err(Error::CapExceeded {
                what: "full distribution",
                n_qubits: n,
                cap: DISTRIBUTION_CAP,
            });
        }
        let h = n / 2;
        let mut left = vec![C64::new(1.0, 0.0)];
        let mut big = 1usize;
        for s in &self.sites[..h] {
            left = grow_left_diag(&left, big, s);
            big *= 2;
        }
        let mut right = vec![C64::new(1.0, 0.0)];
        let mut small = 1usize;
        for s in self.sites[h..].iter().rev() {
            right = grow_right_diag(s, &right, small);
            small *= 2;
        }
        let b = self.sites[h].l;
        let joined = mat(&left, big, b * b) * mat(&right, b * b, small);
        let mut probs = Vec::with_capacity(big * small);
        for i in 0..big {
            for j in 0..small {
                probs.push(clamp_prob(joined[(i, j)].re)?);
            }
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-8 {
            return Err(Error::numerical(format!("distribution sums to {total}")));
        }
        ProbDist::new(n, probs)
    }

    /// Draws `count` basis-state indices from the diagonal of `ρ` by
    /// sequential conditional sampling, qubit 0 first. Samples sharing a
    /// prefix share the left environment.
    pub fn sample(&self, count: usize, seed: u64) -> Result<Vec<usize>> {
        let n = self.n_qubits;
        let mut envs = vec![vec![C64::new(1.0, 0.0)]; n + 1];
        for k in (0..n).rev() {
            envs[k] = grow_right_trace(&self.sites[k], &envs[k + 1]);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let uniforms: Vec<f64> = (0..count * n).map(|_| rng.random::<f64>()).collect();
        let mut out = vec![0usize; count];
        let members: Vec<usize> = (0..count).collect();
        let start = vec![C64::new(1.0, 0.0)];
        self.descend(0, &start, members, 0, &uniforms, &envs, &mut out)?;
        Ok(out)
    }

    #[allow(clippy::too_many_arguments)]
    fn descend(
        &self,
        k: usize,
        env: &[C64],
        members: Vec<usize>,
        prefix: usize,
        uniforms: &[f64],
        envs: &[Vec<C64>],
        out: &mut [usize],
    ) -> Result<()> {
        let n = self.n_qubits;
        if members.is_empty() {
            return Ok(());
        }
        if k == n {
            for m in members {
                out[m] = prefix;
            }
            return Ok(());
        }
        let s = &self.sites[k];
        let branches = [grow_left_select(env, s, 0), grow_left_select(env, s, 1)];
        let weight = |e: &[C64]| -> f64 {
            e.iter()
                .zip(&envs[k + 1])
                .map(|(a, b)| (a * b).re)
                .sum::<f64>()
                .max(0.0)
        };
        let (p0, p1) = (weight(&branches[0]), weight(&branches[1]));
        let total = p0 + p1;
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::numerical("conditional probabilities vanished while sampling"));
        }
        let threshold = p0 / total;
        let (zeros, ones): (Vec<usize>, Vec<usize>) = members
            .into_iter()
            .partition(|&m| uniforms[m * n + k] < threshold);
        for (bit, group) in [(0usize, zeros), (1, ones)] {
            if group.is_empty() {
                continue;
            }
            let scaled: Vec<C64> = branches[bit].iter().map(|z| z / total).collect();
            self.descend(k + 1, &scaled, group, (prefix << 1) | bit, uniforms, envs, out)?;
        }
        Ok(())
    }

    /// Sampled bitstring counts, keyed by bitstring.
    pub fn sample_counts(&self, count: usize, seed: u64) -> Result<BTreeMap<String, u64>> {
        let mut counts = BTreeMap::new();
        for idx in self.sample(count, seed)? {
            *counts.entry(index_to_bitstring(idx, self.n_qubits)).or_insert(0) += 1;
        }
        Ok(counts)
    }

    /// JSON snapshot with per-site shapes and data plus the truncation ledger.
    pub fn to_snapshot_json(&self) -> String {
        let doc = SnapshotDoc {
            format: SNAPSHOT_FORMAT.to_string(),
            version: 1,
            layout: SITE_LAYOUT.to_string(),
            n_qubits: self.n_qubits,
            chi_max: self.chi_max,
            kappa_max: self.kappa_max,
            trace_factor: self.trace_factor,
            bond_discarded_weight: self.bond_discarded,
            inner_discarded_weight: self.inner_discarded,
            peak_bond_dim: self.peak_bond,
            peak_inner_dim: self.peak_inner,
            layers: self.layers.clone(),
            sites: self
                .sites
                .iter()
                .map(|s| SiteDoc {
                    shape: s.shape(),
                    re: s.data.iter().map(|z| z.re).collect(),
                    im: s.data.iter().map(|z| z.im).collect(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("snapshot serializes")
    }

    pub fn from_snapshot_json(text: &str) -> Result<Self> {
        let doc: SnapshotDoc = serde_json::from_str(text)
            .map_err(|e| Error::Parse(format!("snapshot line {} column {}: {e}", e.line(), e.column())))?;
        if doc.format != SNAPSHOT_FORMAT || doc.layout != SITE_LAYOUT {
            return Err(Error::Parse(format!(
                "unsupported snapshot format '{}' with layout '{}'",
                doc.format, doc.layout
            )));
        }
        if doc.sites.len() != doc.n_qubits || doc.n_qubits == 0 {
            return Err(Error::Validation(format!(
                "{} site tensors for {} qubits",
                doc.sites.len(),
                doc.n_qubits
            )));
        }
        let mut sites = Vec::with_capacity(doc.n_qubits);
        for (k, s) in doc.sites.into_iter().enumerate() {
            let [l, p, d, r] = s.shape;
            let len = l * p * d * r;
            if p != 2 || len == 0 || s.re.len() != len || s.im.len() != len {
                return Err(Error::Validation(format!("site {k} has inconsistent shape {:?}", s.shape)));
            }
            if let Some(prev) = sites.last().map(|x: &Site| x.r) {
                if prev != l {
                    return Err(Error::Validation(format!("bond mismatch entering site {k}")));
                }
            }
            let data = s.re.iter().zip(&s.im).map(|(&a, &b)| C64::new(a, b)).collect();
            sites.push(Site { l, d, r, data });
        }
        if sites[0].l != 1 || sites[doc.n_qubits - 1].r != 1 {
            return Err(Error::Validation("boundary bonds must have dimension 1".into()));
        }
        let mut state = Self::from_sites(sites).with_caps(doc.chi_max, doc.kappa_max)?;
        state.trace_factor = doc.trace_factor;
        state.bond_discarded = doc.bond_discarded_weight;
        state.inner_discarded = doc.inner_discarded_weight;
        state.peak_bond = state.peak_bond.max(doc.peak_bond_dim);
        state.peak_inner = state.peak_inner.max(doc.peak_inner_dim);
        state.layers = doc.layers;
        Ok(state)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SnapshotDoc {
    format: String,
    version: u32,
    layout: String,
    n_qubits: usize,
    chi_max: Option<usize>,
    kappa_max: Option<usize>,
    trace_factor: f64,
    bond_discarded_weight: f64,
    inner_discarded_weight: f64,
    peak_bond_dim: usize,
    peak_inner_dim: usize,
    layers: Vec<LayerRecord>,
    sites: Vec<SiteDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SiteDoc {
    shape: [usize; 4],
    re: Vec<f64>,
    im: Vec<f64>,
}

fn clamp_prob(p: f64) -> Result<f64> {
    if p < NEGATIVE_PROB_TOL || p.is_nan() {
        return Err(Error::numerical(format!("negative probability {p:.3e}")));
    }
    Ok(p.max(0.0))
}

/// `E'[l, l'] = Σ T[l,s,a,r] E[r,r'] conj(T[l',s,a,r'])`
fn grow_right_trace(s: &Site, env: &[C64]) -> Vec<C64> {
    let (l, d, r) = (s.l, s.d, s.r);
    let x = mat(&s.data, l * 2 * d, r) * mat(env, r, r);
    let xm = mat(&flat(x.as_ref()), l, 2 * d * r);
    let tc = mat(&s.data, l, 2 * d * r);
    let y = xm * tc.adjoint();
    flat(y.as_ref())
}

/// Left environment `[b, b']` advanced through one site at physical value `sigma`.
fn grow_left_select(env: &[C64], s: &Site, sigma: usize) -> Vec<C64> {
    let (l, d, r) = (s.l, s.d, s.r);
    let block = d * r;
    let ts = &s.data;
    let sel: Vec<C64> = (0..l)
        .flat_map(|li| ts[(li * 2 + sigma) * block..(li * 2 + sigma + 1) * block].iter().copied())
        .collect();
    // x[b', (a r)] = Σ_b env[b, b'] T[b, σ, a, r]
    let x = mat(env, l, l).transpose() * mat(&sel, l, block);
    // y[r, r'] = Σ_{b', a} x[b', a, r] conj(T[b', σ, a, r'])
    let xm = mat(&flat(x.as_ref()), l * d, r);
    let tm = mat(&sel, l * d, r);
    let y = xm.transpose() * tm.conjugate();
    flat(y.as_ref())
}

/// `[S, S', b, b']` → `[(S σ), (S' σ'), r, r']`
fn grow_left_full(env: &[C64], big: usize, s: &Site) -> Vec<C64> {
    let (b, d, r) = (s.l, s.d, s.r);
    let lp = permuted(&[big, big, b, b], env.to_vec(), &[0, 1, 3, 2]);
    let x = mat(&lp, big * big * b, b) * mat(&s.data, b, 2 * d * r);
    // x: [S, S', b', σ, a, r] → [S, σ, S', r, b', a]
    let xp = permuted(&[big, big, b, 2, d, r], flat(x.as_ref()), &[0, 3, 1, 5, 2, 4]);
    let tc = permuted(&[b, 2, d, r], conj_all(&s.data), &[0, 2, 1, 3]);
    let y = mat(&xp, big * 2 * big * r, b * d) * mat(&tc, b * d, 2 * r);
    // y: [S, σ, S', r, σ', r'] → [S, σ, S', σ', r, r']
    permuted(&[big, 2, big, r, 2, r], flat(y.as_ref()), &[0, 1, 2, 4, 3, 5])
}

/// `[r, r', S, S']` → `[l, l', (σ S), (σ' S')]`
fn grow_right_full(s: &Site, env: &[C64], small: usize) -> Vec<C64> {
    let (l, d, r) = (s.l, s.d, s.r);
    let x = mat(&s.data, l * 2 * d, r) * mat(env, r, r * small * small);
    // x: [l, σ, a, r', S, S'] → [l, σ, S, S', a, r']
    let xp = permuted(&[l, 2, d, r, small, small], flat(x.as_ref()), &[0, 1, 4, 5, 2, 3]);
    let tc = permuted(&[l, 2, d, r], conj_all(&s.data), &[2, 3, 0, 1]);
    let y = mat(&xp, l * 2 * small * small, d * r) * mat(&tc, d * r, l * 2);
    // y: [l, σ, S, S', l', σ'] → [l, l', σ, S, σ', S']
    permuted(&[l, 2, small, small, l, 2], flat(y.as_ref()), &[0, 4, 1, 2, 5, 3])
}

/// `[S, b, b']` → `[(S σ), r, r']`
fn grow_left_diag(env: &[C64], big: usize, s: &Site) -> Vec<C64> {
    let (b, d, r) = (s.l, s.d, s.r);
    let lp = permuted(&[big, b, b], env.to_vec(), &[0, 2, 1]);
    let x = mat(&lp, big * b, b) * mat(&s.data, b, 2 * d * r);
    // x: [S, b', σ, a, r] → [σ, S, r, b', a]
    let xp = permuted(&[big, b, 2, d, r], flat(x.as_ref()), &[2, 0, 4, 1, 3]);
    let tc = permuted(&[b, 2, d, r], conj_all(&s.data), &[1, 0, 2, 3]);
    let (xs, ts) = (big * r * b * d, b * d * r);
    let mut out = vec![zero(); big * 2 * r * r];
    for sigma in 0..2 {
        let y = mat(&xp[sigma * xs..(sigma + 1) * xs], big * r, b * d) * mat(&tc[sigma * ts..(sigma + 1) * ts], b * d, r);
        for si in 0..big {
            for r1 in 0..r {
                for r2 in 0..r {
                    out[((si * 2 + sigma) * r + r1) * r + r2] = y[(si * r + r1, r2)];
                }
            }
        }
    }
    out
}

/// `[r, r', S]` → `[l, l', (σ S)]`
fn grow_right_diag(s: &Site, env: &[C64], small: usize) -> Vec<C64> {
    let (l, d, r) = (s.l, s.d, s.r);
    let x = mat(&s.data, l * 2 * d, r) * mat(env, r, r * small);
    // x: [l, σ, a, r', S] → [σ, l, S, a, r']
    let xp = permuted(&[l, 2, d, r, small], flat(x.as_ref()), &[1, 0, 4, 2, 3]);
    let tc = permuted(&[l, 2, d, r], conj_all(&s.data), &[1, 2, 3, 0]);
    let (xs, ts) = (l * small * d * r, d * r * l);
    let mut out = vec![zero(); l * l * 2 * small];
    for sigma in 0..2 {
        let y = mat(&xp[sigma * xs..(sigma + 1) * xs], l * small, d * r) * mat(&tc[sigma * ts..(sigma + 1) * ts], d * r, l);
        for l1 in 0..l {
            for si in 0..small {
                for l2 in 0..l {
                    out[((l1 * l + l2) * 2 + sigma) * small + si] = y[(l1 * small + si, l2)];
                }
            }
        }
    }
    out
}

/// Simulates a noisy circuit. Within each layer: single-qubit gates, then for
/// every pair the noise channel on the pair followed by the gate; the layer
/// ends with [`MpdoState::canonicalize_truncate_layer`].
pub fn mpdo_run(
    circuit: &Circuit,
    noise: &NoiseSpec,
    chi_max: Option<usize>,
    kappa_max: Option<usize>,
) -> Result<MpdoState> {
    circuit.validate()?;
    let channel = noise.channel()?;
    let mut state = mpdo_product_state(&"0".repeat(circuit.n_qubits))?.with_caps(chi_max, kappa_max)?;
    for layer in &circuit.layers {
        for g in &layer.singles {
            state.apply_1q_ops(g.qubit, &[g.matrix()]);
        }
        for p in &layer.pairs {
            let (a, b) = (p.left(), p.right());
            match &channel {
                Some(ch) if ch.arity() == 1 => {
                    state.apply_1q_channel(a, ch)?;
                    state.apply_1q_channel(b, ch)?;
                }
                Some(ch) => {
                    state.two_site_update(a, &kraus_mat4(ch), None)?;
                }
                None => {}
            }
            state.two_site_update(a, &[p.matrix()], None)?;
        }
        state.canonicalize_truncate_layer(chi_max, kappa_max)?;
    }
    Ok(state)
}
