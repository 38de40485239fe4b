//! Dense complex tensors and the factorizations every backend is built on.
//!
//! Storage is row-major over the declared shape: the last axis varies
//! fastest. Matrix views are taken by splitting the axis list at a position
//! `split`; the leading axes become rows and the trailing axes become columns.

use faer::{Mat, MatRef, Side};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Dense multi-index array of complex amplitudes.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexTensor {
    shape: Vec<usize>,
    data: Vec<C64>,
}

impl ComplexTensor {
    pub fn new(shape: Vec<usize>, data: Vec<C64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::DimensionMismatch(format!(
                "shape {shape:?} holds {expected} values, got {}",
                data.len()
            )));
        }
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::invalid(format!("shape {shape:?} has a zero extent")));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("ComplexTensor::new"));
        }
        Ok(Self { shape, data })
    }

    /// Builds a tensor without validating; callers guarantee the invariants.
    pub(crate) fn from_raw(shape: Vec<usize>, data: Vec<C64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Self {
            shape,
            data: vec![C64::new(0.0, 0.0); len],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(vec![n, n]);
        for i in 0..n {
            t.data[i * n + i] = C64::new(1.0, 0.0);
        }
        t
    }

    /// Matrix from rows given in row-major order.
    pub fn matrix(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    pub fn from_fn(shape: Vec<usize>, mut f: impl FnMut(&[usize]) -> C64) -> Self {
        let len: usize = shape.iter().product();
        let mut data = Vec::with_capacity(len);
        let mut idx = vec![0usize; shape.len()];
        for _ in 0..len {
            data.push(f(&idx));
            increment(&mut idx, &shape);
        }
        Self { shape, data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<C64> {
        self.data
    }

    pub fn get(&self, index: &[usize]) -> C64 {
        self.data[self.offset(index)]
    }

    pub fn set(&mut self, index: &[usize], value: C64) {
        let off = self.offset(index);
        self.data[off] = value;
    }

    fn offset(&self, index: &[usize]) -> usize {
        assert_eq!(index.len(), self.shape.len(), "index rank mismatch");
        index
            .iter()
            .zip(&self.shape)
            .fold(0, |acc, (&i, &d)| {
                assert!(i < d, "index {i} out of bounds for extent {d}");
                acc * d + i
            })
    }

    pub fn reshape(self, shape: Vec<usize>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != self.data.len() || shape.iter().any(|&d| d == 0) {
            return Err(Error::DimensionMismatch(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape
            )));
        }
        Ok(Self {
            shape,
            data: self.data,
        })
    }

    /// Reorders axes: axis `i` of the result is axis `perm[i]` of `self`.
    pub fn permute(&self, perm: &[usize]) -> Result<Self> {
        let n = self.shape.len();
        let mut seen = vec![false; n];
        if perm.len() != n || perm.iter().any(|&p| p >= n || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::invalid(format!(
                "{perm:?} is not a permutation of {n} axes"
            )));
        }
        Ok(self.permute_unchecked(perm))
    }

    pub(crate) fn permute_unchecked(&self, perm: &[usize]) -> Self {
        if perm.iter().enumerate().all(|(i, &p)| i == p) {
            return self.clone();
        }
        let n = self.shape.len();
        let mut src_strides = vec![1usize; n];
        for k in (0..n.saturating_sub(1)).rev() {
            src_strides[k] = src_strides[k + 1] * self.shape[k + 1];
        }
        let new_shape: Vec<usize> = perm.iter().map(|&p| self.shape[p]).collect();
        let strides: Vec<usize> = perm.iter().map(|&p| src_strides[p]).collect();
        let mut data = Vec::with_capacity(self.data.len());
        let mut idx = vec![0usize; n];
        let mut off = 0usize;
        for _ in 0..self.data.len() {
            data.push(self.data[off]);
            // odometer increment, tracking the source offset incrementally
            for k in (0..n).rev() {
                idx[k] += 1;
                off += strides[k];
                if idx[k] < new_shape[k] {
                    break;
                }
                off -= strides[k] * new_shape[k];
                idx[k] = 0;
            }
        }
        Self {
            shape: new_shape,
            data,
        }
    }

    pub fn conj(&self) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|z| z.conj()).collect(),
        }
    }

    pub fn scale(&mut self, factor: C64) {
        for z in &mut self.data {
            *z *= factor;
        }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn frobenius_distance(&self, other: &Self) -> f64 {
        assert_eq!(self.shape, other.shape);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// Contracts `self` with `other` over the given `(axis of self, axis of
    /// other)` pairs. Result axes are the free axes of `self` followed by the
    /// free axes of `other`, each in their original order.
    pub fn contract(&self, other: &Self, axis_pairs: &[(usize, usize)]) -> Result<Self> {
        let (na, nb) = (self.ndim(), other.ndim());
        let mut used_a = vec![false; na];
        let mut used_b = vec![false; nb];
        for &(i, j) in axis_pairs {
            if i >= na || j >= nb {
                return Err(Error::DimensionMismatch(format!(
                    "axis pair ({i}, {j}) out of range for ranks {na} and {nb}"
                )));
            }
            if std::mem::replace(&mut used_a[i], true) || std::mem::replace(&mut used_b[j], true) {
                return Err(Error::DimensionMismatch(format!(
                    "axis pair ({i}, {j}) repeats an axis"
                )));
            }
            if self.shape[i] != other.shape[j] {
                return Err(Error::DimensionMismatch(format!(
                    "axis {i} of left operand has extent {} but axis {j} of right operand has extent {}",
                    self.shape[i], other.shape[j]
                )));
            }
        }
        let free_a: Vec<usize> = (0..na).filter(|&i| !used_a[i]).collect();
        let free_b: Vec<usize> = (0..nb).filter(|&j| !used_b[j]).collect();
        let perm_a: Vec<usize> = free_a
            .iter()
            .copied()
            .chain(axis_pairs.iter().map(|p| p.0))
            .collect();
        let perm_b: Vec<usize> = axis_pairs
            .iter()
            .map(|p| p.1)
            .chain(free_b.iter().copied())
            .collect();
        let a = self.permute_unchecked(&perm_a);
        let b = other.permute_unchecked(&perm_b);
        let inner: usize = axis_pairs.iter().map(|p| self.shape[p.0]).product();
        let rows = a.len() / inner;
        let cols = b.len() / inner;
        let prod = matmul_rowmajor(&a.data, rows, inner, &b.data, cols);
        let mut shape: Vec<usize> = free_a.iter().map(|&i| self.shape[i]).collect();
        shape.extend(free_b.iter().map(|&j| other.shape[j]));
        if shape.is_empty() {
            shape.push(1);
        }
        Ok(Self { shape, data: prod })
    }

    /// Matrix view: rows span `shape[..split]`, columns span `shape[split..]`.
    pub fn to_matrix(&self, split: usize) -> Result<Mat<C64>> {
        let (rows, cols) = self.split_dims(split)?;
        Ok(mat_from_rowmajor(&self.data, rows, cols))
    }

    pub fn split_dims(&self, split: usize) -> Result<(usize, usize)> {
        if split > self.ndim() {
            return Err(Error::invalid(format!(
                "axis split {split} exceeds rank {}",
                self.ndim()
            )));
        }
        let rows = self.shape[..split].iter().product();
        let cols = self.shape[split..].iter().product();
        Ok((rows, cols))
    }

    pub fn from_matrix(m: MatRef<'_, C64>, shape: Vec<usize>) -> Result<Self> {
        if shape.iter().product::<usize>() != m.nrows() * m.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} matrix cannot take shape {shape:?}",
                m.nrows(),
                m.ncols()
            )));
        }
        Ok(Self {
            shape,
            data: rowmajor_from_mat(m),
        })
    }

    fn check_finite(&self, what: &'static str) -> Result<()> {
        if self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite(what))
        }
    }
}

fn increment(idx: &mut [usize], shape: &[usize]) {
    for k in (0..idx.len()).rev() {
        idx[k] += 1;
        if idx[k] < shape[k] {
            return;
        }
        idx[k] = 0;
    }
}

pub(crate) fn mat_from_rowmajor(data: &[C64], rows: usize, cols: usize) -> Mat<C64> {
    Mat::from_fn(rows, cols, |i, j| data[i * cols + j])
}

pub(crate) fn rowmajor_from_mat(m: MatRef<'_, C64>) -> Vec<C64> {
    let (rows, cols) = (m.nrows(), m.ncols());
    let mut out = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for j in 0..cols {
            out.push(m[(i, j)]);
        }
    }
    out
}

pub(crate) fn matmul_rowmajor(a: &[C64], rows: usize, inner: usize, b: &[C64], cols: usize) -> Vec<C64> {
    let am = mat_from_rowmajor(a, rows, inner);
    let bm = mat_from_rowmajor(b, inner, cols);
    let prod = &am * &bm;
    rowmajor_from_mat(prod.as_ref())
}

/// Outcome of a (possibly truncated) singular value decomposition.
///
/// `u` carries the row axes plus a trailing rank axis; `v` carries a leading
/// rank axis plus the column axes, so `m ≈ u · diag(s) · v`.
#[derive(Clone, Debug)]
pub struct SvdResult {
    pub u: ComplexTensor,
    pub s: Vec<f64>,
    pub v: ComplexTensor,
    pub discarded_weight: f64,
}

impl SvdResult {
    pub fn rank(&self) -> usize {
        self.s.len()
    }
}

/// Matrix-level SVD output; `v` is `k × cols` (already adjointed).
pub(crate) struct MatSvd {
    pub u: Mat<C64>,
    pub s: Vec<f64>,
    pub v: Mat<C64>,
    pub discarded_weight: f64,
}

/// Number of singular values to keep under a rank cap and a relative
/// discarded-weight tolerance.
pub(crate) fn truncation_rank(s: &[f64], max_rank: Option<usize>, rel_tol: f64) -> (usize, f64) {
    let total: f64 = s.iter().map(|x| x * x).sum();
    if total == 0.0 {
        return (0, 0.0);
    }
    // tail[k] = weight discarded when keeping the first k values
    let mut tail = vec![0.0; s.len() + 1];
    for k in (0..s.len()).rev() {
        tail[k] = tail[k + 1] + s[k] * s[k];
    }
    let by_tol = (0..=s.len())
        .find(|&k| tail[k] <= rel_tol * total)
        .unwrap_or(s.len());
    let keep = max_rank.map_or(by_tol, |r| by_tol.min(r));
    (keep, tail[keep] / total)
}

pub(crate) fn svd_mat(m: MatRef<'_, C64>, max_rank: Option<usize>, rel_tol: f64) -> Result<MatSvd> {
    let (rows, cols) = (m.nrows(), m.ncols());
    for j in 0..cols {
        for i in 0..rows {
            let z = m[(i, j)];
            if !z.re.is_finite() || !z.im.is_finite() {
                return Err(Error::NonFinite("svd input"));
            }
        }
    }
    let svd = m
        .thin_svd()
        .map_err(|e| Error::numerical(format!("SVD did not converge: {e:?}")))?;
    let sv = svd.S().column_vector();
    let mut order: Vec<usize> = (0..sv.nrows()).collect();
    let raw: Vec<f64> = (0..sv.nrows()).map(|i| sv[i].re.max(0.0)).collect();
    // stable sort keeps the earlier index on ties
    order.sort_by(|&a, &b| raw[b].partial_cmp(&raw[a]).unwrap_or(std::cmp::Ordering::Equal));
    let sorted: Vec<f64> = order.iter().map(|&i| raw[i]).collect();
    let (keep, discarded_weight) = truncation_rank(&sorted, max_rank, rel_tol);

    let uf = svd.U();
    let vf = svd.V();
    let mut u = Mat::<C64>::zeros(rows, keep);
    let mut v = Mat::<C64>::zeros(keep, cols);
    for (c, &src) in order.iter().take(keep).enumerate() {
        // phase convention: largest-magnitude entry of each left vector is real positive
        let mut best = 0;
        let mut best_abs = -1.0;
        for i in 0..rows {
            let a = uf[(i, src)].norm();
            if a > best_abs {
                best_abs = a;
                best = i;
            }
        }
        let pivot = uf[(best, src)];
        let phase = if pivot.norm() > 0.0 {
            pivot / pivot.norm()
        } else {
            C64::new(1.0, 0.0)
        };
        let inv = phase.conj();
        for i in 0..rows {
            u[(i, c)] = uf[(i, src)] * inv;
        }
        for j in 0..cols {
            // faer returns V with m = U S V^H
            v[(c, j)] = vf[(j, src)].conj() * phase;
        }
    }
    Ok(MatSvd {
        u,
        s: sorted[..keep].to_vec(),
        v,
        discarded_weight,
    })
}

/// Like [`svd_mat`] but a zero matrix yields a single zero component, so a
/// bond never collapses to dimension 0.
pub(crate) fn svd_mat_nonempty(m: MatRef<'_, C64>, max_rank: Option<usize>, rel_tol: f64) -> Result<MatSvd> {
    let mut res = svd_mat(m, max_rank, rel_tol)?;
    if res.s.is_empty() {
        res.u = Mat::zeros(m.nrows(), 1);
        res.u[(0, 0)] = C64::new(1.0, 0.0);
        res.v = Mat::zeros(1, m.ncols());
        res.s = vec![0.0];
    }
    Ok(res)
}

/// Truncated SVD of `m` viewed as a matrix with rows `shape[..split]`.
///
/// Keeps `min(max_rank, k_tol)` singular values where `k_tol` is the smallest
/// rank whose discarded weight `Σ_{j≥k} s_j² / Σ s_j²` is at most `rel_tol`.
/// `max_rank = None` means unlimited. A zero matrix yields rank 0.
pub fn svd_truncated(
    m: &ComplexTensor,
    split: usize,
    max_rank: Option<usize>,
    rel_tol: f64,
) -> Result<SvdResult> {
    if max_rank == Some(0) {
        return Err(Error::invalid("max_rank must be positive"));
    }
    if !(rel_tol >= 0.0) {
        return Err(Error::invalid(format!("rel_tol {rel_tol} must be non-negative")));
    }
    m.check_finite("svd_truncated")?;
    let mat = m.to_matrix(split)?;
    let res = svd_mat(mat.as_ref(), max_rank, rel_tol)?;
    let k = res.s.len();
    let mut ushape = m.shape[..split].to_vec();
    ushape.push(k);
    let mut vshape = vec![k];
    vshape.extend_from_slice(&m.shape[split..]);
    Ok(SvdResult {
        u: ComplexTensor::from_raw(ushape, rowmajor_from_mat(res.u.as_ref())),
        s: res.s,
        v: ComplexTensor::from_raw(vshape, rowmajor_from_mat(res.v.as_ref())),
        discarded_weight: res.discarded_weight,
    })
}

/// Thin QR factorization of a matrix; `q` is `rows × k`, `r` is `k × cols`
/// with `k = min(rows, cols)`.
pub(crate) fn qr_mat(m: MatRef<'_, C64>) -> (Mat<C64>, Mat<C64>) {
    let qr = m.qr();
    let q = qr.compute_thin_Q();
    let r = qr.thin_R().to_owned();
    (q, r)
}

/// Thin QR of `m` viewed as a matrix with rows `shape[..split]`.
pub fn qr(m: &ComplexTensor, split: usize) -> Result<(ComplexTensor, ComplexTensor)> {
    m.check_finite("qr")?;
    let mat = m.to_matrix(split)?;
    let (q, r) = qr_mat(mat.as_ref());
    let k = q.ncols();
    let mut qshape = m.shape[..split].to_vec();
    qshape.push(k);
    let mut rshape = vec![k];
    rshape.extend_from_slice(&m.shape[split..]);
    Ok((
        ComplexTensor::from_raw(qshape, rowmajor_from_mat(q.as_ref())),
        ComplexTensor::from_raw(rshape, rowmajor_from_mat(r.as_ref())),
    ))
}

/// Hermitian eigendecomposition; eigenvalues ascending, eigenvectors as columns.
pub(crate) fn eigh_mat(m: MatRef<'_, C64>) -> Result<(Vec<f64>, Mat<C64>)> {
    let evd = m
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::numerical(format!("eigendecomposition failed: {e:?}")))?;
    let s = evd.S().column_vector();
    let vals = (0..s.nrows()).map(|i| s[i].re).collect();
    Ok((vals, evd.U().to_owned()))
}

pub(crate) fn eigvalsh_mat(m: MatRef<'_, C64>) -> Result<Vec<f64>> {
    let vals = m
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::numerical(format!("eigendecomposition failed: {e:?}")))?;
    Ok(vals)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn random(shape: Vec<usize>, seed: u64) -> ComplexTensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ComplexTensor::from_fn(shape, |_| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
    }

    fn matmul2(a: &ComplexTensor, b: &ComplexTensor) -> ComplexTensor {
        a.contract(b, &[(1, 0)]).unwrap()
    }

    fn adjoint(a: &ComplexTensor) -> ComplexTensor {
        a.permute(&[1, 0]).unwrap().conj()
    }

    #[test]
    fn identity_contracted_with_basis_vector() {
        let id = ComplexTensor::identity(2);
        let e0 = ComplexTensor::new(vec![2], vec![c(1.0, 0.0), c(0.0, 0.0)]).unwrap();
        let out = id.contract(&e0, &[(1, 0)]).unwrap();
        assert_eq!(out.shape(), &[2]);
        assert_eq!(out.data(), e0.data());
    }

    #[test]
    fn full_contraction_with_conjugate_is_norm() {
        let a = random(vec![3, 2, 4], 1);
        let n = a.contract(&a.conj(), &[(0, 0), (1, 1), (2, 2)]).unwrap();
        assert_eq!(n.len(), 1);
        assert!((n.data()[0].re - a.norm_sqr()).abs() < 1e-12);
        assert!(n.data()[0].im.abs() < 1e-12);
    }

    #[test]
    fn contraction_matches_nested_loops() {
        let a = random(vec![2, 3, 4], 2);
        let b = random(vec![4, 5], 3);
        let out = a.contract(&b, &[(2, 0)]).unwrap();
        assert_eq!(out.shape(), &[2, 3, 5]);
        for i in 0..2 {
            for j in 0..3 {
                for l in 0..5 {
                    let mut acc = c(0.0, 0.0);
                    for k in 0..4 {
                        acc += a.get(&[i, j, k]) * b.get(&[k, l]);
                    }
                    assert!((out.get(&[i, j, l]) - acc).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn contraction_mismatch_names_axes() {
        let a = random(vec![2, 3], 4);
        let b = random(vec![4, 5], 5);
        let err = a.contract(&b, &[(1, 0)]).unwrap_err().to_string();
        assert!(err.contains("axis 1") && err.contains("axis 0"), "{err}");
    }

    #[test]
    fn permute_roundtrip_and_values() {
        let a = random(vec![2, 3, 4], 6);
        let p = a.permute(&[2, 0, 1]).unwrap();
        assert_eq!(p.shape(), &[4, 2, 3]);
        assert_eq!(p.get(&[3, 1, 2]), a.get(&[1, 2, 3]));
        let back = p.permute(&[1, 2, 0]).unwrap();
        assert_eq!(back, a);
        assert!(a.permute(&[0, 0, 1]).is_err());
    }

    #[test]
    fn svd_identity() {
        let r = svd_truncated(&ComplexTensor::identity(4), 1, None, 0.0).unwrap();
        assert_eq!(r.s.len(), 4);
        for s in &r.s {
            assert!((s - 1.0).abs() < 1e-12);
        }
        assert_eq!(r.discarded_weight, 0.0);
    }

    #[test]
    fn svd_rank_one_outer_product() {
        let u = random(vec![5], 7);
        let v = random(vec![3], 8).conj();
        let m = u.contract(&v, &[]).unwrap();
        let r = svd_truncated(&m, 1, Some(1), 0.0).unwrap();
        assert_eq!(r.rank(), 1);
        let mut us = r.u.clone();
        us.scale(c(r.s[0], 0.0));
        let rec = matmul2(&us, &r.v);
        assert!(rec.frobenius_distance(&m) < 1e-12);
        assert!(r.discarded_weight < 1e-24);
    }

    #[test]
    fn svd_zero_matrix_is_rank_zero() {
        let r = svd_truncated(&ComplexTensor::zeros(vec![3, 3]), 1, None, 0.0).unwrap();
        assert_eq!(r.rank(), 0);
        assert_eq!(r.discarded_weight, 0.0);
    }

    #[test]
    fn svd_rejects_non_finite() {
        let mut m = ComplexTensor::identity(2);
        m.data_mut()[1] = c(f64::NAN, 0.0);
        assert!(matches!(svd_truncated(&m, 1, None, 0.0), Err(Error::NonFinite(_))));
        assert!(matches!(qr(&m, 1), Err(Error::NonFinite(_))));
    }

    #[test]
    fn svd_rel_tol_selects_rank() {
        // diag(2, 1, 0.1): weights 4, 1, 0.01 out of 5.01
        let mut m = ComplexTensor::zeros(vec![3, 3]);
        m.set(&[0, 0], c(2.0, 0.0));
        m.set(&[1, 1], c(1.0, 0.0));
        m.set(&[2, 2], c(0.1, 0.0));
        let r = svd_truncated(&m, 1, None, 0.01 / 5.01 + 1e-12).unwrap();
        assert_eq!(r.rank(), 2);
        let r = svd_truncated(&m, 1, None, 0.5).unwrap();
        assert_eq!(r.rank(), 1);
        assert!((r.discarded_weight - 1.01 / 5.01).abs() < 1e-12);
    }

    #[test]
    fn svd_phase_convention() {
        let m = random(vec![6, 4], 9);
        let r = svd_truncated(&m, 1, None, 0.0).unwrap();
        for col in 0..r.rank() {
            let mut best = c(0.0, 0.0);
            for row in 0..6 {
                let z = r.u.get(&[row, col]);
                if z.norm() > best.norm() {
                    best = z;
                }
            }
            assert!(best.im.abs() < 1e-12 && best.re > 0.0);
        }
    }

    #[test]
    fn svd_on_higher_rank_tensor_split() {
        let m = random(vec![2, 3, 2, 2], 10);
        let r = svd_truncated(&m, 2, None, 0.0).unwrap();
        assert_eq!(r.u.shape(), &[2, 3, 4]);
        assert_eq!(r.v.shape(), &[4, 2, 2]);
        let mut us = r.u.clone();
        for i in 0..6 {
            for k in 0..4 {
                let idx = [i / 3, i % 3, k];
                let val = us.get(&idx) * r.s[k];
                us.set(&idx, val);
            }
        }
        let rec = us.contract(&r.v, &[(2, 0)]).unwrap();
        assert!(rec.frobenius_distance(&m) < 1e-12);
    }

    #[test]
    fn qr_identity() {
        let (q, r) = qr(&ComplexTensor::identity(3), 1).unwrap();
        let id = ComplexTensor::identity(3);
        // Householder QR of I may flip signs; q r must still be I and q unitary
        assert!(matmul2(&q, &r).frobenius_distance(&id) < 1e-12);
        assert!(matmul2(&adjoint(&q), &q).frobenius_distance(&id) < 1e-12);
        for i in 0..3 {
            assert!((q.get(&[i, i]).norm() - 1.0).abs() < 1e-12);
            assert!((r.get(&[i, i]).norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn qr_tall_isometry() {
        let m = random(vec![6, 3], 11);
        let (q, r) = qr(&m, 1).unwrap();
        assert_eq!(q.shape(), &[6, 3]);
        assert!(matmul2(&adjoint(&q), &q).frobenius_distance(&ComplexTensor::identity(3)) < 1e-10);
        assert!(matmul2(&q, &r).frobenius_distance(&m) < 1e-10);
    }

    #[test]
    fn qr_square_reconstructs() {
        let m = random(vec![4, 4], 12);
        let (q, r) = qr(&m, 1).unwrap();
        assert!(matmul2(&q, &r).frobenius_distance(&m) < 1e-10);
    }

    #[test]
    fn eigh_of_hermitian() {
        let a = random(vec![5, 5], 13);
        let h = matmul2(&a, &adjoint(&a));
        let (vals, vecs) = eigh_mat(h.to_matrix(1).unwrap().as_ref()).unwrap();
        assert!(vals.windows(2).all(|w| w[0] <= w[1] + 1e-12));
        let hv = &h.to_matrix(1).unwrap() * &vecs;
        for j in 0..5 {
            for i in 0..5 {
                assert!((hv[(i, j)] - vecs[(i, j)] * vals[j]).norm() < 1e-10);
            }
        }
    }
}
