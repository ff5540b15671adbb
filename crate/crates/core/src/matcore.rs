//! Dense complex linear algebra.
//!
//! Everything in the crate is carried by [`ComplexMatrix`], a square row-major
//! matrix of `Complex64`. Composite spaces are described by [`RegisterDims`];
//! with registers `d_1..d_r` the composite index of `(i_1, .., i_r)` is
//! `((i_1·d_2 + i_2)·d_3 + ..)`, i.e. the first register is the most
//! significant digit, matching [`kron`].

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::ops::{Add, Index, IndexMut, Mul, Sub};

use crate::{Error, Result};

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

/// Base tolerance; status checks use `TOL_BASE · dim`.
pub const TOL_BASE: f64 = 1e-10;

/// Dense square complex matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexMatrix {
    dim: usize,
    data: Vec<C64>,
}

impl ComplexMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, data: vec![ZERO; dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = ONE;
        }
        m
    }

    /// `E_ij` in dimension `dim`.
    pub fn unit(dim: usize, i: usize, j: usize) -> Self {
        let mut m = Self::zeros(dim);
        m.data[i * dim + j] = ONE;
        m
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                data.push(f(i, j));
            }
        }
        Self { dim, data }
    }

    pub fn from_vec(dim: usize, data: Vec<C64>) -> Result<Self> {
        if data.len() != dim * dim {
            return Err(Error::DimensionMismatch(format!(
                "{} entries for a {dim}x{dim} matrix",
                data.len()
            )));
        }
        Ok(Self { dim, data })
    }

    pub fn from_real_rows(rows: &[&[f64]]) -> Self {
        let dim = rows.len();
        Self::from_fn(dim, |i, j| C64::new(rows[i][j], 0.0))
    }

    pub fn diag(values: &[C64]) -> Self {
        let mut m = Self::zeros(values.len());
        for (i, v) in values.iter().enumerate() {
            m.data[i * values.len() + i] = *v;
        }
        m
    }

    /// Rank-one projector `|v⟩⟨v|` (no normalization).
    pub fn outer(v: &[C64]) -> Self {
        Self::from_fn(v.len(), |i, j| v[i] * v[j].conj())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<C64> {
        self.data
    }

    pub fn column(&self, j: usize) -> Vec<C64> {
        (0..self.dim).map(|i| self[(i, j)]).collect()
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.dim, |i, j| self[(j, i)].conj())
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim).map(|i| self[(i, i)]).sum()
    }

    pub fn scale(&self, s: C64) -> Self {
        Self { dim: self.dim, data: self.data.iter().map(|z| z * s).collect() }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Largest entrywise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.dim, other.dim, "max_abs_diff: dimension mismatch");
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    /// `τ = 1e-10 · dim`.
    pub fn tolerance(&self) -> f64 {
        TOL_BASE * self.dim.max(1) as f64
    }

    pub fn hermiticity_defect(&self) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                acc += (self[(i, j)] - self[(j, i)].conj()).norm_sqr();
            }
        }
        acc.sqrt()
    }

    /// `‖M M† − I‖_F`.
    pub fn unitarity_defect(&self) -> f64 {
        let prod = self * &self.adjoint();
        (&prod - &Self::identity(self.dim)).frobenius_norm()
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermiticity_defect() <= self.tolerance() * self.frobenius_norm().max(1.0)
    }

    pub fn is_unitary(&self) -> bool {
        self.unitarity_defect() <= self.tolerance()
    }

    /// `‖P² − P‖_F + ‖P − P†‖_F`.
    pub fn projector_defect(&self) -> f64 {
        (&(self * self) - self).frobenius_norm() + self.hermiticity_defect()
    }

    /// Hermitian and smallest eigenvalue ≥ −τ.
    pub fn is_psd(&self) -> bool {
        if !self.is_hermitian() {
            return false;
        }
        match herm_eig(self) {
            Ok((vals, _)) => vals.first().is_none_or(|&v| v >= -self.tolerance()),
            Err(_) => false,
        }
    }

    /// `(M + M†)/2`.
    pub fn hermitian_part(&self) -> Self {
        Self::from_fn(self.dim, |i, j| (self[(i, j)] + self[(j, i)].conj()) * 0.5)
    }

    pub fn mul_vec(&self, v: &[C64]) -> Vec<C64> {
        assert_eq!(v.len(), self.dim, "mul_vec: dimension mismatch");
        (0..self.dim)
            .map(|i| {
                let row = &self.data[i * self.dim..(i + 1) * self.dim];
                row.iter().zip(v).map(|(a, b)| a * b).sum()
            })
            .collect()
    }

    /// `⟨v|M|v⟩`.
    pub fn expectation(&self, v: &[C64]) -> C64 {
        let mv = self.mul_vec(v);
        v.iter().zip(&mv).map(|(a, b)| a.conj() * b).sum()
    }

    /// `Tr(self · other)` without forming the product.
    pub fn trace_product(&self, other: &Self) -> C64 {
        assert_eq!(self.dim, other.dim, "trace_product: dimension mismatch");
        let d = self.dim;
        let mut acc = ZERO;
        for i in 0..d {
            for k in 0..d {
                acc += self.data[i * d + k] * other.data[k * d + i];
            }
        }
        acc
    }

    /// Square block `(bi, bj)` of size `bs`.
    pub fn block(&self, bs: usize, bi: usize, bj: usize) -> Self {
        Self::from_fn(bs, |i, j| self[(bi * bs + i, bj * bs + j)])
    }

    /// Assemble from an `nb × nb` grid of `bs × bs` blocks.
    pub fn from_blocks(nb: usize, bs: usize, mut f: impl FnMut(usize, usize) -> Self) -> Self {
        let mut out = Self::zeros(nb * bs);
        for bi in 0..nb {
            for bj in 0..nb {
                let b = f(bi, bj);
                assert_eq!(b.dim, bs, "from_blocks: block dimension mismatch");
                for i in 0..bs {
                    for j in 0..bs {
                        out[(bi * bs + i, bj * bs + j)] = b[(i, j)];
                    }
                }
            }
        }
        out
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.dim + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.dim + j]
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.dim, rhs.dim, "matmul: dimension mismatch");
        let d = self.dim;
        let mut out = vec![ZERO; d * d];
        for i in 0..d {
            let orow = &mut out[i * d..(i + 1) * d];
            for k in 0..d {
                let a = self.data[i * d + k];
                if a == ZERO {
                    continue;
                }
                let rrow = &rhs.data[k * d..(k + 1) * d];
                for (o, b) in orow.iter_mut().zip(rrow) {
                    *o += a * b;
                }
            }
        }
        ComplexMatrix { dim: d, data: out }
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.dim, rhs.dim, "add: dimension mismatch");
        ComplexMatrix {
            dim: self.dim,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.dim, rhs.dim, "sub: dimension mismatch");
        ComplexMatrix {
            dim: self.dim,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct MatrixJson {
    dim: usize,
    re: Vec<f64>,
    im: Vec<f64>,
}

impl Serialize for ComplexMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        MatrixJson {
            dim: self.dim,
            re: self.data.iter().map(|z| z.re).collect(),
            im: self.data.iter().map(|z| z.im).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for ComplexMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = MatrixJson::deserialize(d)?;
        if raw.re.len() != raw.dim * raw.dim || raw.im.len() != raw.dim * raw.dim {
            return Err(serde::de::Error::custom(format!(
                "matrix of dim {} needs {} re/im entries, got {}/{}",
                raw.dim,
                raw.dim * raw.dim,
                raw.re.len(),
                raw.im.len()
            )));
        }
        let data = raw.re.into_iter().zip(raw.im).map(|(r, i)| C64::new(r, i)).collect();
        Ok(ComplexMatrix { dim: raw.dim, data })
    }
}

/// Subsystem dimensions of a composite space, most significant first.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RegisterDims(Vec<usize>);

impl RegisterDims {
    pub fn new(dims: impl Into<Vec<usize>>) -> Result<Self> {
        let dims = dims.into();
        if dims.is_empty() || dims.contains(&0) {
            return Err(Error::DimensionMismatch(format!("register dims must be positive, got {dims:?}")));
        }
        Ok(Self(dims))
    }

    pub fn total(&self) -> usize {
        self.0.iter().product()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    fn strides(&self) -> Vec<usize> {
        let mut s = vec![1; self.0.len()];
        for k in (0..self.0.len().saturating_sub(1)).rev() {
            s[k] = s[k + 1] * self.0[k + 1];
        }
        s
    }

    fn check(&self, m: &ComplexMatrix) -> Result<()> {
        if self.total() != m.dim() {
            return Err(Error::DimensionMismatch(format!(
                "registers {:?} span {} but matrix has dim {}",
                self.0,
                self.total(),
                m.dim()
            )));
        }
        Ok(())
    }
}

/// `A ⊗ B`: entry `[(i·dB + k), (j·dB + l)] = A[i,j]·B[k,l]`.
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    let (da, db) = (a.dim, b.dim);
    let d = da * db;
    let mut out = ComplexMatrix::zeros(d);
    for i in 0..da {
        for j in 0..da {
            let aij = a.data[i * da + j];
            if aij == ZERO {
                continue;
            }
            for k in 0..db {
                for l in 0..db {
                    out.data[(i * db + k) * d + j * db + l] = aij * b.data[k * db + l];
                }
            }
        }
    }
    out
}

pub fn kron_vec(a: &[C64], b: &[C64]) -> Vec<C64> {
    a.iter().flat_map(|x| b.iter().map(move |y| x * y)).collect()
}

/// Reduced matrix on the registers listed in `keep` (kept in ascending order).
pub fn partial_trace(m: &ComplexMatrix, dims: &RegisterDims, keep: &[usize]) -> Result<ComplexMatrix> {
    dims.check(m)?;
    let r = dims.len();
    let mut kept: Vec<usize> = keep.to_vec();
    kept.sort_unstable();
    kept.dedup();
    if kept.iter().any(|&k| k >= r) {
        return Err(Error::IndexOutOfRange(format!("keep {keep:?} for {r} registers")));
    }
    let traced: Vec<usize> = (0..r).filter(|k| !kept.contains(k)).collect();
    let strides = dims.strides();
    let d = dims.as_slice();

    // Ambient offsets of every kept / traced multi-index.
    let offsets = |regs: &[usize]| -> Vec<usize> {
        let mut offs = vec![0usize];
        for &reg in regs {
            let mut next = Vec::with_capacity(offs.len() * d[reg]);
            for &o in &offs {
                for v in 0..d[reg] {
                    next.push(o + v * strides[reg]);
                }
            }
            offs = next;
        }
        offs
    };
    let kept_offs = offsets(&kept);
    let traced_offs = offsets(&traced);

    let out_dim = kept_offs.len();
    let mut out = ComplexMatrix::zeros(out_dim);
    for (a, &ra) in kept_offs.iter().enumerate() {
        for (b, &rb) in kept_offs.iter().enumerate() {
            let mut acc = ZERO;
            for &t in &traced_offs {
                acc += m[(ra + t, rb + t)];
            }
            out[(a, b)] = acc;
        }
    }
    Ok(out)
}

fn check_perm(perm: &[usize], r: usize) -> Result<()> {
    let mut seen = vec![false; r];
    if perm.len() != r {
        return Err(Error::InvalidPermutation(perm.to_vec()));
    }
    for &p in perm {
        if p >= r || seen[p] {
            return Err(Error::InvalidPermutation(perm.to_vec()));
        }
        seen[p] = true;
    }
    Ok(())
}

/// Maps each ambient index of the permuted layout to the ambient index of the
/// original layout. Output register `k` is input register `perm[k]`.
fn permutation_index_map(dims: &RegisterDims, perm: &[usize]) -> Vec<usize> {
    let d = dims.as_slice();
    let in_strides = dims.strides();
    let out_dims: Vec<usize> = perm.iter().map(|&p| d[p]).collect();
    let total = dims.total();
    let mut map = Vec::with_capacity(total);
    let mut digits = vec![0usize; perm.len()];
    for _ in 0..total {
        map.push(digits.iter().zip(perm).map(|(&v, &p)| v * in_strides[p]).sum());
        for k in (0..digits.len()).rev() {
            digits[k] += 1;
            if digits[k] < out_dims[k] {
                break;
            }
            digits[k] = 0;
        }
    }
    map
}

/// Reorder tensor factors: output register `k` is input register `perm[k]`.
/// Equivalent to conjugation `P M P†` by the permutation isometry.
pub fn permute_registers(m: &ComplexMatrix, dims: &RegisterDims, perm: &[usize]) -> Result<ComplexMatrix> {
    dims.check(m)?;
    check_perm(perm, dims.len())?;
    let map = permutation_index_map(dims, perm);
    Ok(ComplexMatrix::from_fn(m.dim, |i, j| m[(map[i], map[j])]))
}

/// Vector counterpart of [`permute_registers`].
pub fn permute_vector(v: &[C64], dims: &RegisterDims, perm: &[usize]) -> Result<Vec<C64>> {
    if v.len() != dims.total() {
        return Err(Error::DimensionMismatch(format!(
            "vector of length {} for registers {:?}",
            v.len(),
            dims.as_slice()
        )));
    }
    check_perm(perm, dims.len())?;
    Ok(permutation_index_map(dims, perm).into_iter().map(|k| v[k]).collect())
}

/// Eigen-decomposition of a Hermitian matrix by cyclic Jacobi rotations.
///
/// The input is symmetrized as `(H + H†)/2` first; inputs whose hermiticity
/// defect exceeds `τ·max(1, ‖H‖_F)` are rejected. Returns ascending
/// eigenvalues and a unitary whose columns are the matching eigenvectors.
pub fn herm_eig(h: &ComplexMatrix) -> Result<(Vec<f64>, ComplexMatrix)> {
    let defect = h.hermiticity_defect();
    let tol = h.tolerance() * h.frobenius_norm().max(1.0);
    if defect > tol {
        return Err(Error::NotHermitian { defect, tol });
    }
    let n = h.dim;
    let mut a = h.hermitian_part();
    let mut q = ComplexMatrix::identity(n);
    let scale = a.frobenius_norm();
    if n <= 1 || scale == 0.0 {
        let vals = (0..n).map(|i| a[(i, i)].re).collect();
        return Ok((vals, q));
    }

    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += a[(i, j)].norm_sqr();
            }
        }
        if off.sqrt() <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for r in (p + 1)..n {
                let beta = a[(p, r)];
                let mag = beta.norm();
                if mag <= 1e-300 || mag <= 1e-18 * scale {
                    continue;
                }
                let alpha = a[(p, p)].re;
                let gamma = a[(r, r)].re;
                let phase = beta / mag;
                let theta = 0.5 * (2.0 * mag).atan2(gamma - alpha);
                let (s, c) = theta.sin_cos();
                let ph_conj = phase.conj();

                // Columns p, r: G = diag(1, e^{-iφ}) · [[c, s], [-s, c]].
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akr = a[(k, r)];
                    a[(k, p)] = akp * c - akr * ph_conj * s;
                    a[(k, r)] = akp * s + akr * ph_conj * c;
                    let qkp = q[(k, p)];
                    let qkr = q[(k, r)];
                    q[(k, p)] = qkp * c - qkr * ph_conj * s;
                    q[(k, r)] = qkp * s + qkr * ph_conj * c;
                }
                // Rows p, r: G† on the left.
                for k in 0..n {
                    let apk = a[(p, k)];
                    let ark = a[(r, k)];
                    a[(p, k)] = apk * c - ark * phase * s;
                    a[(r, k)] = apk * s + ark * phase * c;
                }
                a[(p, r)] = ZERO;
                a[(r, p)] = ZERO;
                a[(p, p)] = C64::new(a[(p, p)].re, 0.0);
                a[(r, r)] = C64::new(a[(r, r)].re, 0.0);
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| a[(x, x)].re.total_cmp(&a[(y, y)].re));
    let vals = order.iter().map(|&k| a[(k, k)].re).collect();
    let vecs = ComplexMatrix::from_fn(n, |i, j| q[(i, order[j])]);
    Ok((vals, vecs))
}

/// Deterministic generator used for every random construction.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn standard_complex<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Ginibre matrix: i.i.d. standard complex Gaussian entries.
pub fn ginibre<R: Rng + ?Sized>(d: usize, rng: &mut R) -> ComplexMatrix {
    ComplexMatrix::from_fn(d, |_, _| standard_complex(rng))
}

/// Haar-random unitary: Gram-Schmidt QR of a Ginibre sample. Gram-Schmidt
/// produces a positive real `R` diagonal, which is the phase fixing that makes
/// `Q` Haar distributed.
pub fn haar_unitary_with<R: Rng + ?Sized>(d: usize, rng: &mut R) -> ComplexMatrix {
    assert!(d >= 1, "haar_unitary: dimension must be positive");
    let g = ginibre(d, rng);
    let mut cols: Vec<Vec<C64>> = Vec::with_capacity(d);
    for j in 0..d {
        let mut v = g.column(j);
        // two passes for numerical orthogonality
        for _ in 0..2 {
            for q in &cols {
                let proj: C64 = q.iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
                for (vi, qi) in v.iter_mut().zip(q) {
                    *vi -= proj * qi;
                }
            }
        }
        let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        for vi in &mut v {
            *vi /= norm;
        }
        cols.push(v);
    }
    ComplexMatrix::from_fn(d, |i, j| cols[j][i])
}

pub fn haar_unitary(d: usize, seed: u64) -> ComplexMatrix {
    haar_unitary_with(d, &mut seeded_rng(seed))
}

/// Uniformly random unit vector.
pub fn haar_vector<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<C64> {
    let mut v: Vec<C64> = (0..d).map(|_| standard_complex(rng)).collect();
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    for z in &mut v {
        *z /= norm;
    }
    v
}

/// Normalized Wishart density matrix `G G† / Tr(G G†)`.
pub fn wishart_density<R: Rng + ?Sized>(d: usize, rng: &mut R) -> ComplexMatrix {
    let g = ginibre(d, rng);
    let w = &g * &g.adjoint();
    let tr = w.trace().re;
    w.scale(C64::new(1.0 / tr, 0.0)).hermitian_part()
}

pub fn vec_norm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn random_matrix(d: usize, seed: u64) -> ComplexMatrix {
        ginibre(d, &mut seeded_rng(seed))
    }

    fn random_hermitian(d: usize, seed: u64) -> ComplexMatrix {
        random_matrix(d, seed).hermitian_part()
    }

    #[test]
    fn kron_identities() {
        let i4 = kron(&ComplexMatrix::identity(2), &ComplexMatrix::identity(2));
        assert_eq!(i4, ComplexMatrix::identity(4));
    }

    #[test]
    fn kron_places_matrix_units() {
        let m = kron(&ComplexMatrix::unit(2, 0, 0), &ComplexMatrix::unit(2, 1, 1));
        assert_eq!(m, ComplexMatrix::unit(4, 1, 1));
    }

    #[test]
    fn kron_matches_entry_loop() {
        let a = random_matrix(3, 1);
        let b = random_matrix(2, 2);
        let k = kron(&a, &b);
        for i in 0..3 {
            for j in 0..3 {
                for p in 0..2 {
                    for q in 0..2 {
                        assert_eq!(k[(i * 2 + p, j * 2 + q)], a[(i, j)] * b[(p, q)]);
                    }
                }
            }
        }
    }

    #[test]
    fn partial_trace_of_product_state() {
        let mut rng = seeded_rng(3);
        let rho = wishart_density(3, &mut rng);
        let sigma = wishart_density(2, &mut rng);
        let dims = RegisterDims::new([3, 2]).unwrap();
        let red = partial_trace(&kron(&rho, &sigma), &dims, &[0]).unwrap();
        assert!(red.max_abs_diff(&rho) < 1e-14);
        let all = partial_trace(&kron(&rho, &sigma), &dims, &[0, 1]).unwrap();
        assert_eq!(all, kron(&rho, &sigma));
    }

    #[test]
    fn partial_trace_of_bell_state() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let phi = [c(s, 0.0), ZERO, ZERO, c(s, 0.0)];
        let dims = RegisterDims::new([2, 2]).unwrap();
        let red = partial_trace(&ComplexMatrix::outer(&phi), &dims, &[0]).unwrap();
        assert!(red.max_abs_diff(&ComplexMatrix::identity(2).scale(c(0.5, 0.0))) < 1e-15);
    }

    #[test]
    fn partial_trace_rejects_bad_dims() {
        let dims = RegisterDims::new([2, 3]).unwrap();
        let err = partial_trace(&ComplexMatrix::identity(5), &dims, &[0]).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch(_)));
    }

    #[test]
    fn permute_identity_and_swap() {
        let mut rng = seeded_rng(4);
        let rho = wishart_density(2, &mut rng);
        let sigma = wishart_density(3, &mut rng);
        let dims = RegisterDims::new([2, 3]).unwrap();
        let m = kron(&rho, &sigma);
        assert_eq!(permute_registers(&m, &dims, &[0, 1]).unwrap(), m);
        let swapped = permute_registers(&m, &dims, &[1, 0]).unwrap();
        assert!(swapped.max_abs_diff(&kron(&sigma, &rho)) < 1e-15);
    }

    #[test]
    fn permute_matches_relabel_oracle() {
        let dims = RegisterDims::new([2, 3, 2]).unwrap();
        let m = random_matrix(12, 5);
        let perm = [2, 0, 1];
        let out = permute_registers(&m, &dims, &perm).unwrap();
        // out dims: (d2, d0, d1) = (2, 2, 3)
        for a0 in 0..2 {
            for a1 in 0..3 {
                for a2 in 0..2 {
                    for b0 in 0..2 {
                        for b1 in 0..3 {
                            for b2 in 0..2 {
                                let in_r = a0 * 6 + a1 * 2 + a2;
                                let in_c = b0 * 6 + b1 * 2 + b2;
                                let out_r = a2 * 6 + a0 * 3 + a1;
                                let out_c = b2 * 6 + b0 * 3 + b1;
                                assert_eq!(out[(out_r, out_c)], m[(in_r, in_c)]);
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn permute_rejects_non_bijection() {
        let dims = RegisterDims::new([2, 2]).unwrap();
        let err = permute_registers(&ComplexMatrix::identity(4), &dims, &[0, 0]).unwrap_err();
        assert!(matches!(err, Error::InvalidPermutation(_)));
    }

    #[test]
    fn eig_of_diagonal() {
        let h = ComplexMatrix::from_real_rows(&[&[3.0, 0.0, 0.0], &[0.0, 1.0, 0.0], &[0.0, 0.0, 2.0]]);
        let (vals, _) = herm_eig(&h).unwrap();
        assert_eq!(vals, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn eig_of_pauli_x() {
        let h = ComplexMatrix::from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]]);
        let (vals, q) = herm_eig(&h).unwrap();
        assert!((vals[0] + 1.0).abs() < 1e-15 && (vals[1] - 1.0).abs() < 1e-15);
        assert!(q.unitarity_defect() < 1e-14);
    }

    #[test]
    fn eig_reconstructs_random_hermitian() {
        let h = random_hermitian(6, 9);
        let (vals, q) = herm_eig(&h).unwrap();
        assert!(vals.windows(2).all(|w| w[0] <= w[1]));
        let lam = ComplexMatrix::diag(&vals.iter().map(|&v| c(v, 0.0)).collect::<Vec<_>>());
        let resid = &(&h * &q) - &(&q * &lam);
        assert!(resid.frobenius_norm() <= 1e-9 * 6.0 * h.frobenius_norm());
        assert!(q.unitarity_defect() < 1e-9);
    }

    #[test]
    fn eig_rejects_non_hermitian() {
        let m = ComplexMatrix::from_real_rows(&[&[0.0, 1.0], &[0.0, 0.0]]);
        assert!(matches!(herm_eig(&m), Err(Error::NotHermitian { .. })));
    }

    #[test]
    fn haar_scalar_has_unit_modulus() {
        let u = haar_unitary(1, 42);
        assert!((u[(0, 0)].norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn haar_is_deterministic_and_unitary() {
        let a = haar_unitary(5, 11);
        assert_eq!(a, haar_unitary(5, 11));
        assert!(a.is_unitary());
        assert_ne!(a, haar_unitary(5, 12));
    }

    #[test]
    fn haar_second_moment() {
        // E|u_00|^2 = 1/d for Haar measure
        let mut rng = seeded_rng(2024);
        let samples = 10_000;
        let mean: f64 =
            (0..samples).map(|_| haar_unitary_with(2, &mut rng)[(0, 0)].norm_sqr()).sum::<f64>() / samples as f64;
        assert!((mean - 0.5).abs() < 0.02, "mean {mean}");
    }

    #[test]
    fn json_round_trip_is_exact() {
        let m = random_matrix(3, 77);
        let s = serde_json::to_string(&m).unwrap();
        let back: ComplexMatrix = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
        assert!(serde_json::from_str::<ComplexMatrix>(r#"{"dim":2,"re":[1],"im":[0]}"#).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn kron_mixed_product(da in 2usize..4, db in 2usize..4, seed in any::<u64>()) {
            let a = random_matrix(da, seed);
            let b = random_matrix(db, seed ^ 1);
            let c2 = random_matrix(da, seed ^ 2);
            let d = random_matrix(db, seed ^ 3);
            let lhs = &kron(&a, &b) * &kron(&c2, &d);
            let rhs = kron(&(&a * &c2), &(&b * &d));
            prop_assert!(lhs.max_abs_diff(&rhs) <= 1e-12);
        }

        #[test]
        fn kron_associative(seed in any::<u64>()) {
            let a = random_matrix(2, seed);
            let b = random_matrix(3, seed ^ 5);
            let c2 = random_matrix(2, seed ^ 7);
            // grouping changes only floating-point rounding of the triple products
            let lhs = kron(&kron(&a, &b), &c2);
            let rhs = kron(&a, &kron(&b, &c2));
            prop_assert!(lhs.max_abs_diff(&rhs) <= 1e-15 * lhs.max_abs().max(1.0));
        }

        #[test]
        fn partial_trace_preserves_trace(seed in any::<u64>(), keep in 0usize..3) {
            let dims = RegisterDims::new([2, 3, 2]).unwrap();
            let m = random_matrix(12, seed);
            let red = partial_trace(&m, &dims, &[keep]).unwrap();
            prop_assert!((red.trace() - m.trace()).norm() <= 1e-12);
        }

        #[test]
        fn permutation_preserves_spectrum(seed in any::<u64>()) {
            let dims = RegisterDims::new([2, 3, 2]).unwrap();
            let h = random_hermitian(12, seed);
            let p = permute_registers(&h, &dims, &[1, 2, 0]).unwrap();
            let (a, _) = herm_eig(&h).unwrap();
            let (b, _) = herm_eig(&p).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() <= 1e-9);
            }
        }

        #[test]
        fn permutation_composition(seed in any::<u64>()) {
            let dims = RegisterDims::new([2, 3, 2]).unwrap();
            let m = random_matrix(12, seed);
            let p1 = [1, 2, 0];
            let once = permute_registers(&m, &dims, &p1).unwrap();
            let mid = RegisterDims::new([3, 2, 2]).unwrap();
            let p2 = [2, 0, 1];
            let twice = permute_registers(&once, &mid, &p2).unwrap();
            // composite: output k is input p1[p2[k]]
            let composed: Vec<usize> = p2.iter().map(|&k| p1[k]).collect();
            prop_assert_eq!(twice, permute_registers(&m, &dims, &composed).unwrap());
        }

        #[test]
        fn eigenvectors_unitary(d in 2usize..8, seed in any::<u64>()) {
            let (_, q) = herm_eig(&random_hermitian(d, seed)).unwrap();
            prop_assert!(q.unitarity_defect() <= 1e-9);
        }
    }
}
