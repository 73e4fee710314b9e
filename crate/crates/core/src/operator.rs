//! Dense complex linear algebra on `C^d`.
//!
//! Hermitian matrices are diagonalised with the cyclic Jacobi method using
//! complex plane rotations. At the dimensions this crate targets (d up to a
//! few dozen) Jacobi is accurate to a small multiple of machine precision
//! relative to the matrix norm, which is what the certificates downstream
//! rely on.

use std::cmp::Ordering;
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{FrameError, Result};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };

/// Relative tolerance for the conjugate-symmetry check.
pub const HERMITIAN_TOL: f64 = 1e-12;

/// A finite vector in `C^d`, `d >= 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexVector(Vec<Complex64>);

impl ComplexVector {
    pub fn new(entries: Vec<Complex64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(FrameError::InvalidInput("vector of dimension zero".into()));
        }
        if entries.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(FrameError::InvalidInput("vector has non-finite entries".into()));
        }
        Ok(ComplexVector(entries))
    }

    pub fn from_real(entries: &[f64]) -> Result<Self> {
        Self::new(entries.iter().map(|&x| Complex64::new(x, 0.0)).collect())
    }

    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1, "dimension must be positive");
        ComplexVector(vec![ZERO; dim])
    }

    /// The `k`-th standard basis vector.
    pub fn basis(dim: usize, k: usize) -> Self {
        let mut v = Self::zeros(dim);
        v.0[k] = ONE;
        v
    }

    pub(crate) fn from_vec_unchecked(entries: Vec<Complex64>) -> Self {
        debug_assert!(!entries.is_empty());
        ComplexVector(entries)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.0
    }

    pub fn norm_sqr(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|z| z.re == 0.0 && z.im == 0.0)
    }

    pub fn scaled(&self, c: f64) -> Self {
        ComplexVector(self.0.iter().map(|z| z * c).collect())
    }

    /// `<self, other>`, linear in the first argument.
    pub fn inner(&self, other: &ComplexVector) -> Complex64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b.conj()).sum()
    }

    pub fn distance(&self, other: &ComplexVector) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt()
    }
}

impl Serialize for ComplexVector {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let pairs: Vec<[f64; 2]> = self.0.iter().map(|z| [z.re, z.im]).collect();
        pairs.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ComplexVector {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        // Entries are `[re, im]` pairs; a bare number is read as a real entry.
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Entry {
            Pair([f64; 2]),
            Real(f64),
        }
        let entries = Vec::<Entry>::deserialize(deserializer)?;
        let entries = entries
            .into_iter()
            .map(|e| match e {
                Entry::Pair([re, im]) => Complex64::new(re, im),
                Entry::Real(re) => Complex64::new(re, 0.0),
            })
            .collect();
        ComplexVector::new(entries).map_err(serde::de::Error::custom)
    }
}

/// A `d x d` Hermitian matrix stored densely in row-major order.
#[derive(Clone, PartialEq)]
pub struct HermitianOperator {
    dim: usize,
    data: Vec<Complex64>,
}

impl fmt::Debug for HermitianOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut list = f.debug_list();
        for i in 0..self.dim {
            list.entry(&&self.data[i * self.dim..(i + 1) * self.dim]);
        }
        list.finish()
    }
}

/// Eigenvalues in ascending order with an orthonormal set of eigenvectors.
#[derive(Clone, Debug)]
pub struct SpectralDecomposition {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Vec<ComplexVector>,
}

impl SpectralDecomposition {
    /// `V diag(f(lambda)) V*`.
    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> HermitianOperator {
        let dim = self.eigenvalues.len();
        let mut out = HermitianOperator::zeros(dim);
        for (lambda, v) in self.eigenvalues.iter().zip(&self.eigenvectors) {
            let w = f(*lambda);
            if w != 0.0 {
                out.add_outer(v, w);
            }
        }
        out
    }

    pub fn reconstruct(&self) -> HermitianOperator {
        self.map(|x| x)
    }
}

impl HermitianOperator {
    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1, "dimension must be positive");
        HermitianOperator { dim, data: vec![ZERO; dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = ONE;
        }
        m
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let dim = values.len();
        let mut m = Self::zeros(dim);
        for (i, &x) in values.iter().enumerate() {
            m.data[i * dim + i] = Complex64::new(x, 0.0);
        }
        m
    }

    /// Builds an operator from rows, checking conjugate symmetry to within
    /// `HERMITIAN_TOL` times the largest entry magnitude and symmetrising.
    pub fn from_rows(rows: Vec<Vec<Complex64>>) -> Result<Self> {
        let dim = rows.len();
        if dim == 0 {
            return Err(FrameError::InvalidInput("matrix of dimension zero".into()));
        }
        if rows.iter().any(|r| r.len() != dim) {
            return Err(FrameError::Shape("matrix is not square".into()));
        }
        let data: Vec<Complex64> = rows.into_iter().flatten().collect();
        Self::from_dense(dim, data)
    }

    /// Same as [`from_rows`](Self::from_rows) but from a flat row-major buffer.
    pub fn from_dense(dim: usize, data: Vec<Complex64>) -> Result<Self> {
        if dim == 0 || data.len() != dim * dim {
            return Err(FrameError::Shape(format!("buffer of length {} is not {dim} x {dim}", data.len())));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(FrameError::InvalidInput("matrix has non-finite entries".into()));
        }
        let scale = data.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let tol = HERMITIAN_TOL * scale;
        for i in 0..dim {
            for j in i..dim {
                let gap = (data[i * dim + j] - data[j * dim + i].conj()).norm();
                if gap > tol {
                    return Err(FrameError::Shape(format!(
                        "matrix is not Hermitian: entry ({i},{j}) differs from its mirror by {gap:e}"
                    )));
                }
            }
        }
        let mut m = HermitianOperator { dim, data };
        m.symmetrize();
        Ok(m)
    }

    /// Buffer that is Hermitian by construction (sums of outer products,
    /// `A A`); only rounding is removed.
    pub(crate) fn from_dense_trusted(dim: usize, data: Vec<Complex64>) -> Self {
        debug_assert_eq!(data.len(), dim * dim);
        let mut m = HermitianOperator { dim, data };
        m.symmetrize();
        m
    }

    /// `phi phi*`.
    pub fn outer_product(phi: &ComplexVector) -> Self {
        let mut m = Self::zeros(phi.dim());
        m.add_outer(phi, 1.0);
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.data[i * self.dim + j]
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    /// Accumulates `weight * v v*` in place.
    pub fn add_outer(&mut self, v: &ComplexVector, weight: f64) {
        debug_assert_eq!(v.dim(), self.dim);
        add_outer_raw(&mut self.data, self.dim, v.entries(), weight);
    }

    pub fn plus(&self, other: &HermitianOperator) -> HermitianOperator {
        assert_eq!(self.dim, other.dim);
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        HermitianOperator { dim: self.dim, data }
    }

    pub fn minus(&self, other: &HermitianOperator) -> HermitianOperator {
        assert_eq!(self.dim, other.dim);
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        HermitianOperator { dim: self.dim, data }
    }

    pub fn scaled(&self, c: f64) -> HermitianOperator {
        HermitianOperator { dim: self.dim, data: self.data.iter().map(|z| z * c).collect() }
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.data[i * self.dim + i].re).sum()
    }

    pub fn max_abs_entry(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn apply(&self, v: &ComplexVector) -> ComplexVector {
        let d = self.dim;
        let out = (0..d).map(|i| (0..d).map(|j| self.data[i * d + j] * v.entries()[j]).sum()).collect();
        ComplexVector::from_vec_unchecked(out)
    }

    /// `<S v, v>`.
    pub fn quadratic_form(&self, v: &ComplexVector) -> f64 {
        self.apply(v).inner(v).re
    }

    /// Plain matrix product `self * other` in row-major order. The result is
    /// generally not Hermitian.
    pub fn product(&self, other: &HermitianOperator) -> Vec<Complex64> {
        matmul(&self.data, &other.data, self.dim)
    }

    /// `B S B` for Hermitian `B`.
    pub fn congruence(&self, b: &HermitianOperator) -> HermitianOperator {
        let bs = matmul(&b.data, &self.data, self.dim);
        let data = matmul(&bs, &b.data, self.dim);
        let mut m = HermitianOperator { dim: self.dim, data };
        m.symmetrize();
        m
    }

    fn symmetrize(&mut self) {
        let d = self.dim;
        for i in 0..d {
            self.data[i * d + i].im = 0.0;
            for j in (i + 1)..d {
                let avg = (self.data[i * d + j] + self.data[j * d + i].conj()) * 0.5;
                self.data[i * d + j] = avg;
                self.data[j * d + i] = avg.conj();
            }
        }
    }

    /// Full eigendecomposition with ascending eigenvalues.
    ///
    /// Eigenvectors are phase-normalised so that their first non-negligible
    /// entry is real and positive. Eigenvalues equal to within `1e-12` of
    /// the matrix scale are ordered by lexicographic comparison of their
    /// eigenvectors, which makes the output reproducible.
    pub fn spectral_decompose(&self) -> SpectralDecomposition {
        let d = self.dim;
        let mut a = self.data.clone();
        let mut v = identity_raw(d);
        jacobi(&mut a, d, Some(&mut v));

        let mut pairs: Vec<(f64, Vec<Complex64>)> = (0..d)
            .map(|k| {
                let mut col: Vec<Complex64> = (0..d).map(|i| v[i * d + k]).collect();
                normalize_phase(&mut col);
                (a[k * d + k].re, col)
            })
            .collect();
        pairs.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap_or(Ordering::Equal));

        let scale = self.max_abs_entry().max(1.0);
        let tie = 1e-12 * scale;
        let mut start = 0;
        while start < d {
            let mut end = start + 1;
            while end < d && pairs[end].0 - pairs[end - 1].0 <= tie {
                end += 1;
            }
            if end - start > 1 {
                pairs[start..end].sort_by(|x, y| lexicographic(&x.1, &y.1));
            }
            start = end;
        }

        SpectralDecomposition {
            eigenvalues: pairs.iter().map(|p| p.0).collect(),
            eigenvectors: pairs.into_iter().map(|p| ComplexVector::from_vec_unchecked(p.1)).collect(),
        }
    }

    /// Eigenvalues only, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let d = self.dim;
        let mut a = self.data.clone();
        jacobi(&mut a, d, None);
        let mut ev: Vec<f64> = (0..d).map(|k| a[k * d + k].re).collect();
        ev.sort_by(|x, y| x.partial_cmp(y).unwrap_or(Ordering::Equal));
        ev
    }

    /// Smallest and largest eigenvalue.
    pub fn extreme_eigenvalues(&self) -> (f64, f64) {
        let ev = self.eigenvalues();
        (ev[0], ev[ev.len() - 1])
    }

    /// Spectral norm, `max |lambda|`.
    pub fn operator_norm(&self) -> f64 {
        let (lo, hi) = self.extreme_eigenvalues();
        lo.abs().max(hi.abs())
    }

    /// The cutoff used by [`power`](Self::power) when the caller has no
    /// better choice: `1e-10 * ||S||`.
    pub fn default_floor(&self) -> f64 {
        (1e-10 * self.operator_norm()).max(f64::MIN_POSITIVE)
    }

    /// Applies `lambda -> lambda^p` to eigenvalues `>= floor` and sends the
    /// rest to zero.
    pub fn power(&self, p: f64, floor: f64) -> Result<HermitianOperator> {
        let eig = self.spectral_decompose();
        let norm = eig.eigenvalues.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        let lowest = eig.eigenvalues[0];
        let integral = p.fract() == 0.0;
        if !integral && lowest < -1e-10 * norm {
            return Err(FrameError::Domain(format!("fractional power {p} of an operator with eigenvalue {lowest:e}")));
        }
        Ok(eig.map(|lambda| {
            if lambda >= floor {
                if integral {
                    lambda.powi(p as i32)
                } else {
                    lambda.powf(p)
                }
            } else {
                0.0
            }
        }))
    }

    /// Orthogonal projection onto the eigenvectors with eigenvalue in the
    /// closed interval `[lo, hi]`.
    pub fn spectral_projection(&self, lo: f64, hi: f64) -> Result<HermitianOperator> {
        if lo > hi || lo.is_nan() || hi.is_nan() {
            return Err(FrameError::InvalidRange { lo, hi });
        }
        let eig = self.spectral_decompose();
        Ok(eig.map(|lambda| if lambda >= lo && lambda <= hi { 1.0 } else { 0.0 }))
    }
}

pub(crate) fn add_outer_raw(data: &mut [Complex64], d: usize, v: &[Complex64], weight: f64) {
    for i in 0..d {
        let vi = v[i] * weight;
        if vi.re == 0.0 && vi.im == 0.0 {
            continue;
        }
        let row = &mut data[i * d..(i + 1) * d];
        for (j, out) in row.iter_mut().enumerate() {
            *out += vi * v[j].conj();
        }
    }
}

fn identity_raw(d: usize) -> Vec<Complex64> {
    let mut v = vec![ZERO; d * d];
    for i in 0..d {
        v[i * d + i] = ONE;
    }
    v
}

fn matmul(a: &[Complex64], b: &[Complex64], d: usize) -> Vec<Complex64> {
    let mut out = vec![ZERO; d * d];
    for i in 0..d {
        for k in 0..d {
            let aik = a[i * d + k];
            if aik.re == 0.0 && aik.im == 0.0 {
                continue;
            }
            for j in 0..d {
                out[i * d + j] += aik * b[k * d + j];
            }
        }
    }
    out
}

fn normalize_phase(col: &mut [Complex64]) {
    let peak = col.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if peak == 0.0 {
        return;
    }
    if let Some(pivot) = col.iter().find(|z| z.norm() > 1e-8 * peak) {
        let phase = pivot.conj() / pivot.norm();
        for z in col.iter_mut() {
            *z *= phase;
        }
    }
}

fn lexicographic(x: &[Complex64], y: &[Complex64]) -> Ordering {
    for (a, b) in x.iter().zip(y) {
        match a.re.partial_cmp(&b.re).unwrap_or(Ordering::Equal) {
            Ordering::Equal => {}
            o => return o,
        }
        match a.im.partial_cmp(&b.im).unwrap_or(Ordering::Equal) {
            Ordering::Equal => {}
            o => return o,
        }
    }
    Ordering::Equal
}

/// Cyclic Jacobi sweeps on a Hermitian matrix held in `a`. On return `a`
/// is diagonal (to rounding) and `v`, when given, holds the accumulated
/// unitary whose columns are eigenvectors.
fn jacobi(a: &mut [Complex64], d: usize, mut v: Option<&mut Vec<Complex64>>) {
    if d == 1 {
        a[0].im = 0.0;
        return;
    }
    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..d {
            for q in (p + 1)..d {
                off += a[p * d + q].norm_sqr();
            }
        }
        if off == 0.0 {
            break;
        }
        for p in 0..d {
            for q in (p + 1)..d {
                let z = a[p * d + q];
                let g = z.norm();
                if g == 0.0 {
                    continue;
                }
                let alpha = a[p * d + p].re;
                let beta = a[q * d + q].re;
                let g100 = 100.0 * g;
                if alpha.abs() + g100 == alpha.abs() && beta.abs() + g100 == beta.abs() {
                    a[p * d + q] = ZERO;
                    a[q * d + p] = ZERO;
                    continue;
                }
                let e = z / g;
                let eb = e.conj();
                let theta = (beta - alpha) / (2.0 * g);
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                for k in 0..d {
                    if k == p || k == q {
                        continue;
                    }
                    let akp = a[k * d + p];
                    let akq = a[k * d + q];
                    let nkp = akp * c - eb * akq * s;
                    let nkq = akp * s + eb * akq * c;
                    a[k * d + p] = nkp;
                    a[k * d + q] = nkq;
                    a[p * d + k] = nkp.conj();
                    a[q * d + k] = nkq.conj();
                }
                a[p * d + p] = Complex64::new(alpha - t * g, 0.0);
                a[q * d + q] = Complex64::new(beta + t * g, 0.0);
                a[p * d + q] = ZERO;
                a[q * d + p] = ZERO;

                if let Some(v) = v.as_deref_mut() {
                    for k in 0..d {
                        let vkp = v[k * d + p];
                        let vkq = v[k * d + q];
                        v[k * d + p] = vkp * c - eb * vkq * s;
                        v[k * d + q] = vkp * s + eb * vkq * c;
                    }
                }
            }
        }
    }
}
