//! Small dense complex linear algebra and entropy functions.
//!
//! Everything here is sized for the analysis at hand: vectors of Eve's
//! ancilla states (a handful of dimensions) and density operators of at most
//! 16 x 16. Entropies are in bits, with `0 log 0 = 0`.

use std::ops::{Add, Index, IndexMut, Sub};

pub use num_complex::Complex;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::{Error, Real, Result};

/// Maximum number of cyclic Jacobi sweeps before giving up.
pub const MAX_JACOBI_SWEEPS: usize = 100;

#[inline]
fn c<T: Real>(re: T, im: T) -> Complex<T> {
    Complex::new(re, im)
}

/// A complex column vector of fixed dimension `d >= 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexVec<T>(Vec<Complex<T>>);

impl<T: Real> ComplexVec<T> {
    pub fn new(entries: Vec<Complex<T>>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::validation("vector dimension must be at least 1"));
        }
        Ok(Self(entries))
    }

    pub fn from_real(entries: &[T]) -> Result<Self> {
        Self::new(entries.iter().map(|&x| c(x, T::zero())).collect())
    }

    /// The zero vector. Panics if `d == 0`.
    pub fn zeros(d: usize) -> Self {
        assert!(d >= 1, "vector dimension must be at least 1");
        Self(vec![Complex::default(); d])
    }

    /// Standard basis vector `|k>` in dimension `d`.
    pub fn basis(d: usize, k: usize) -> Self {
        assert!(k < d, "basis index {k} out of range for dimension {d}");
        let mut v = Self::zeros(d);
        v.0[k] = c(T::one(), T::zero());
        v
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn entries(&self) -> &[Complex<T>] {
        &self.0
    }

    pub fn into_entries(self) -> Vec<Complex<T>> {
        self.0
    }

    /// `<self|other>`, conjugate-linear in `self`.
    pub fn inner(&self, other: &Self) -> Result<Complex<T>> {
        inner(self, other)
    }

    pub fn norm_sqr(&self) -> T {
        self.0.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn scale(&self, s: T) -> Self {
        Self(self.0.iter().map(|z| z * s).collect())
    }

    pub fn scale_complex(&self, s: Complex<T>) -> Self {
        Self(self.0.iter().map(|z| z * s).collect())
    }

    /// `sum_k w_k |v_k>` with real weights.
    pub fn linear_combination(terms: &[(T, &Self)]) -> Result<Self> {
        let first = terms
            .first()
            .ok_or_else(|| Error::validation("empty linear combination"))?;
        let d = first.1.dim();
        let mut out = Self::zeros(d);
        for (w, v) in terms {
            check_dims(d, v.dim())?;
            for (o, z) in out.0.iter_mut().zip(&v.0) {
                *o = *o + z * *w;
            }
        }
        Ok(out)
    }

    /// Largest entrywise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &Self) -> Result<T> {
        check_dims(self.dim(), other.dim())?;
        Ok(self
            .0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).norm())
            .fold(T::zero(), T::max))
    }
}

impl<T> Index<usize> for ComplexVec<T> {
    type Output = Complex<T>;
    fn index(&self, i: usize) -> &Complex<T> {
        &self.0[i]
    }
}

// Operator forms panic on mismatched dimensions; use `linear_combination`
// for the fallible version.
impl<T: Real> Add for &ComplexVec<T> {
    type Output = ComplexVec<T>;
    fn add(self, rhs: Self) -> ComplexVec<T> {
        assert_eq!(self.dim(), rhs.dim(), "dimension mismatch");
        ComplexVec(self.0.iter().zip(&rhs.0).map(|(a, b)| a + b).collect())
    }
}

impl<T: Real> Sub for &ComplexVec<T> {
    type Output = ComplexVec<T>;
    fn sub(self, rhs: Self) -> ComplexVec<T> {
        assert_eq!(self.dim(), rhs.dim(), "dimension mismatch");
        ComplexVec(self.0.iter().zip(&rhs.0).map(|(a, b)| a - b).collect())
    }
}

fn check_dims(left: usize, right: usize) -> Result<()> {
    if left != right {
        return Err(Error::DimensionMismatch { left, right });
    }
    Ok(())
}

/// `<u|v> = sum_i conj(u_i) v_i`.
pub fn inner<T: Real>(u: &ComplexVec<T>, v: &ComplexVec<T>) -> Result<Complex<T>> {
    check_dims(u.dim(), v.dim())?;
    Ok(u.0
        .iter()
        .zip(&v.0)
        .fold(Complex::default(), |acc, (a, b)| acc + a.conj() * b))
}

/// A dense square complex matrix, row-major. Used for eigenvectors,
/// unitaries and Kraus operators.
#[derive(Clone, Debug, PartialEq)]
pub struct SquareMatrix<T> {
    n: usize,
    data: Vec<Complex<T>>,
}

impl<T: Real> SquareMatrix<T> {
    pub fn zeros(n: usize) -> Self {
        assert!(n >= 1, "matrix dimension must be at least 1");
        Self {
            n,
            data: vec![Complex::default(); n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = c(T::one(), T::zero());
        }
        m
    }

    pub fn from_rows(rows: Vec<Vec<Complex<T>>>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::validation("matrix dimension must be at least 1"));
        }
        let mut data = Vec::with_capacity(n * n);
        for row in rows {
            check_dims(n, row.len())?;
            data.extend(row);
        }
        Ok(Self { n, data })
    }

    pub fn from_columns(cols: &[ComplexVec<T>]) -> Result<Self> {
        let n = cols.len();
        if n == 0 {
            return Err(Error::validation("matrix dimension must be at least 1"));
        }
        let mut m = Self::zeros(n);
        for (j, col) in cols.iter().enumerate() {
            check_dims(n, col.dim())?;
            for i in 0..n {
                m[(i, j)] = col[i];
            }
        }
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn column(&self, j: usize) -> ComplexVec<T> {
        ComplexVec((0..self.n).map(|i| self[(i, j)]).collect())
    }

    pub fn adjoint(&self) -> Self {
        let mut out = Self::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                out[(j, i)] = self[(i, j)].conj();
            }
        }
        out
    }

    pub fn matmul(&self, rhs: &Self) -> Result<Self> {
        check_dims(self.n, rhs.n)?;
        let n = self.n;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self[(i, k)];
                for j in 0..n {
                    out[(i, j)] = out[(i, j)] + a * rhs[(k, j)];
                }
            }
        }
        Ok(out)
    }

    pub fn apply(&self, v: &ComplexVec<T>) -> Result<ComplexVec<T>> {
        check_dims(self.n, v.dim())?;
        Ok(ComplexVec(
            (0..self.n)
                .map(|i| (0..self.n).fold(Complex::default(), |acc, j| acc + self[(i, j)] * v[j]))
                .collect(),
        ))
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<T> {
        check_dims(self.n, other.n)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(T::zero(), T::max))
    }

    /// `max |U^dagger U - I|`.
    pub fn unitarity_residual(&self) -> T {
        let prod = self.adjoint().matmul(self).expect("same dimension");
        prod.max_abs_diff(&Self::identity(self.n))
            .expect("same dimension")
    }
}

impl<T> Index<(usize, usize)> for SquareMatrix<T> {
    type Output = Complex<T>;
    fn index(&self, (i, j): (usize, usize)) -> &Complex<T> {
        &self.data[i * self.n + j]
    }
}

impl<T> IndexMut<(usize, usize)> for SquareMatrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex<T> {
        &mut self.data[i * self.n + j]
    }
}

/// A dense Hermitian matrix, row-major.
///
/// Built from outer products the stored matrix is exactly Hermitian: the
/// `(i, j)` and `(j, i)` products are computed with commuting operations.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianMatrix<T> {
    n: usize,
    data: Vec<Complex<T>>,
}

impl<T: Real> HermitianMatrix<T> {
    pub fn zeros(n: usize) -> Self {
        assert!(n >= 1, "matrix dimension must be at least 1");
        Self {
            n,
            data: vec![Complex::default(); n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = c(T::one(), T::zero());
        }
        m
    }

    /// Validates `max |M - M^dagger| <= 1e-12` (relative to the largest entry).
    pub fn from_rows(rows: Vec<Vec<Complex<T>>>) -> Result<Self> {
        let sq = SquareMatrix::from_rows(rows)?;
        let m = Self {
            n: sq.n,
            data: sq.data,
        };
        m.check_hermitian()?;
        Ok(m)
    }

    /// `sum_k w_k |v_k><v_k|`.
    pub fn from_outer_products(terms: &[(T, &ComplexVec<T>)]) -> Result<Self> {
        let first = terms
            .first()
            .ok_or_else(|| Error::validation("empty outer-product sum"))?;
        let mut m = Self::zeros(first.1.dim());
        for (w, v) in terms {
            m.add_outer(*w, v)?;
        }
        Ok(m)
    }

    pub fn add_outer(&mut self, weight: T, v: &ComplexVec<T>) -> Result<()> {
        check_dims(self.n, v.dim())?;
        for i in 0..self.n {
            for j in 0..self.n {
                let idx = i * self.n + j;
                self.data[idx] = self.data[idx] + v[i] * v[j].conj() * weight;
            }
        }
        Ok(())
    }

    /// `diag(blocks[0], blocks[1], ...)`.
    pub fn block_diagonal(blocks: &[&Self]) -> Result<Self> {
        let n: usize = blocks.iter().map(|b| b.n).sum();
        if n == 0 {
            return Err(Error::validation("no blocks"));
        }
        let mut m = Self::zeros(n);
        let mut off = 0;
        for b in blocks {
            for i in 0..b.n {
                for j in 0..b.n {
                    m.data[(off + i) * n + off + j] = b.get(i, j);
                }
            }
            off += b.n;
        }
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> Complex<T> {
        self.data[i * self.n + j]
    }

    pub fn trace(&self) -> T {
        (0..self.n).map(|i| self.data[i * self.n + i].re).sum()
    }

    pub fn scaled(&self, s: T) -> Self {
        Self {
            n: self.n,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    pub fn sum(&self, other: &Self) -> Result<Self> {
        check_dims(self.n, other.n)?;
        Ok(Self {
            n: self.n,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    /// `max |M - M^dagger|`.
    pub fn hermitian_residual(&self) -> T {
        let n = self.n;
        let mut worst = T::zero();
        for i in 0..n {
            for j in i..n {
                worst = worst.max((self.data[i * n + j] - self.data[j * n + i].conj()).norm());
            }
        }
        worst
    }

    fn max_entry(&self) -> T {
        self.data.iter().map(|z| z.norm()).fold(T::zero(), T::max)
    }

    fn check_hermitian(&self) -> Result<()> {
        let res = self.hermitian_residual();
        if res > T::tol(1e-12) * T::one().max(self.max_entry()) {
            return Err(Error::validation(format!(
                "matrix is not Hermitian: residual {res:e}"
            )));
        }
        Ok(())
    }

    /// `U M U^dagger`.
    pub fn conjugate_by(&self, u: &SquareMatrix<T>) -> Result<Self> {
        let m = SquareMatrix {
            n: self.n,
            data: self.data.clone(),
        };
        let out = u.matmul(&m)?.matmul(&u.adjoint())?;
        let mut h = Self {
            n: out.n,
            data: out.data,
        };
        h.symmetrize();
        Ok(h)
    }

    fn symmetrize(&mut self) {
        let n = self.n;
        let half = T::lit(0.5);
        for i in 0..n {
            self.data[i * n + i].im = T::zero();
            for j in (i + 1)..n {
                let avg = (self.data[i * n + j] + self.data[j * n + i].conj()) * half;
                self.data[i * n + j] = avg;
                self.data[j * n + i] = avg.conj();
            }
        }
    }

    pub fn as_square(&self) -> SquareMatrix<T> {
        SquareMatrix {
            n: self.n,
            data: self.data.clone(),
        }
    }
}

/// Eigenvalues (descending) with the matching eigenvectors as columns.
#[derive(Clone, Debug)]
pub struct EigenDecomposition<T> {
    pub values: Vec<T>,
    pub vectors: SquareMatrix<T>,
    pub sweeps: usize,
}

impl<T: Real> EigenDecomposition<T> {
    /// `V diag(values) V^dagger`.
    pub fn reconstruct(&self) -> SquareMatrix<T> {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for i in 0..n {
            for j in 0..n {
                scaled[(i, j)] = scaled[(i, j)] * self.values[j];
            }
        }
        scaled
            .matmul(&self.vectors.adjoint())
            .expect("same dimension")
    }
}

/// Full eigendecomposition of a Hermitian matrix by cyclic complex Jacobi
/// rotations.
///
/// Each rotation first removes the phase of `a_pq` with a diagonal unitary and
/// then applies the real symmetric Jacobi rotation, so every step is a
/// unitary similarity. Converges when the off-diagonal Frobenius mass drops
/// below `1e-14` (times the matrix norm when that exceeds one).
pub fn eigh<T: Real>(m: &HermitianMatrix<T>) -> Result<EigenDecomposition<T>> {
    m.check_hermitian()?;
    let n = m.n;
    let mut a = m.as_square();
    a.data.iter().try_for_each(|z| {
        if z.re.is_finite() && z.im.is_finite() {
            Ok(())
        } else {
            Err(Error::Numeric("non-finite matrix entry".into()))
        }
    })?;
    let mut v = SquareMatrix::identity(n);

    let fro: T = a.data.iter().map(|z| z.norm_sqr()).sum::<T>().sqrt();
    let tol = T::tol(1e-14) * T::one().max(fro);

    let mut sweeps = 0;
    loop {
        let off: T = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)].norm_sqr())
            .sum::<T>()
            .sqrt();
        if off < tol {
            break;
        }
        if sweeps == MAX_JACOBI_SWEEPS {
            return Err(Error::Numeric(format!(
                "Jacobi eigensolver did not converge in {MAX_JACOBI_SWEEPS} sweeps (off-diagonal mass {off:e})"
            )));
        }
        sweeps += 1;
        for p in 0..n.saturating_sub(1) {
            for q in (p + 1)..n {
                rotate(&mut a, &mut v, p, q);
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    let diag: Vec<T> = (0..n).map(|i| a[(i, i)].re).collect();
    order.sort_by(|&i, &j| diag[j].partial_cmp(&diag[i]).expect("finite eigenvalues"));
    let values = order.iter().map(|&i| diag[i]).collect();
    let mut vectors = SquareMatrix::zeros(n);
    for (new, &old) in order.iter().enumerate() {
        for i in 0..n {
            vectors[(i, new)] = v[(i, old)];
        }
    }
    Ok(EigenDecomposition {
        values,
        vectors,
        sweeps,
    })
}

fn rotate<T: Real>(a: &mut SquareMatrix<T>, v: &mut SquareMatrix<T>, p: usize, q: usize) {
    let apq = a[(p, q)];
    let mag = apq.norm();
    if mag == T::zero() {
        return;
    }
    let phase_conj = (apq / mag).conj();
    let app = a[(p, p)].re;
    let aqq = a[(q, q)].re;

    let theta = (aqq - app) / (mag + mag);
    let t = if theta.abs() > T::lit(1e150) {
        T::one() / (theta + theta)
    } else {
        let t = T::one() / (theta.abs() + (theta * theta + T::one()).sqrt());
        if theta < T::zero() {
            -t
        } else {
            t
        }
    };
    let cs = T::one() / (t * t + T::one()).sqrt();
    let sn = t * cs;

    // Block of V in the (p, q) plane.
    let vpp = c(cs, T::zero());
    let vpq = c(sn, T::zero());
    let vqp = phase_conj * (-sn);
    let vqq = phase_conj * cs;

    let n = a.n;
    for k in 0..n {
        let akp = a[(k, p)];
        let akq = a[(k, q)];
        a[(k, p)] = akp * vpp + akq * vqp;
        a[(k, q)] = akp * vpq + akq * vqq;
    }
    for k in 0..n {
        let bpk = a[(p, k)];
        let bqk = a[(q, k)];
        a[(p, k)] = vpp.conj() * bpk + vqp.conj() * bqk;
        a[(q, k)] = vpq.conj() * bpk + vqq.conj() * bqk;
    }
    a[(p, q)] = Complex::default();
    a[(q, p)] = Complex::default();
    a[(p, p)].im = T::zero();
    a[(q, q)].im = T::zero();

    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = vkp * vpp + vkq * vqp;
        v[(k, q)] = vkp * vpq + vkq * vqq;
    }
}

/// Eigenvalues of a Hermitian matrix, sorted descending.
pub fn eigenvalues_hermitian<T: Real>(m: &HermitianMatrix<T>) -> Result<Vec<T>> {
    Ok(eigh(m)?.values)
}

/// Shannon entropy in bits.
///
/// Entries down to `-1e-12` are clamped to zero; the list must sum to one
/// within `1e-9`.
pub fn shannon_entropy<T: Real>(p: &[T]) -> Result<T> {
    if p.is_empty() {
        return Err(Error::validation("empty probability list"));
    }
    let floor = -T::tol(1e-12);
    let mut sum = T::zero();
    let mut h = T::zero();
    for (i, &x) in p.iter().enumerate() {
        if !x.is_finite() || x < floor {
            return Err(Error::validation(format!(
                "probability entry {i} is {x}, expected >= 0"
            )));
        }
        let x = x.max(T::zero());
        sum = sum + x;
        if x > T::zero() {
            h = h - x * x.log2();
        }
    }
    if (sum - T::one()).abs() > T::tol(1e-9) {
        return Err(Error::validation(format!(
            "probabilities sum to {sum}, expected 1"
        )));
    }
    Ok(h)
}

/// `h(x) = H(x, 1 - x)` in bits.
pub fn binary_entropy<T: Real>(x: T) -> Result<T> {
    let slack = T::tol(1e-12);
    if !x.is_finite() || x < -slack || x > T::one() + slack {
        return Err(Error::validation(format!(
            "binary entropy argument {x} outside [0, 1]"
        )));
    }
    let x = x.max(T::zero()).min(T::one());
    shannon_entropy(&[x, T::one() - x])
}

/// Von Neumann entropy (bits) of `M / tr M`.
///
/// Eigenvalues below `-1e-10` (relative to the trace) are rejected; smaller
/// negative round-off is clamped to zero.
pub fn von_neumann_entropy<T: Real>(m: &HermitianMatrix<T>) -> Result<T> {
    let tr = m.trace();
    if tr.is_nan() || tr <= T::zero() {
        return Err(Error::validation(format!(
            "density operator has non-positive trace {tr}"
        )));
    }
    let values = eigenvalues_hermitian(m)?;
    let floor = -T::tol(1e-10) * tr.max(T::one());
    let mut probs = Vec::with_capacity(values.len());
    for lam in values {
        if lam < floor {
            return Err(Error::validation(format!(
                "operator is not positive semi-definite: eigenvalue {lam:e}"
            )));
        }
        probs.push(lam.max(T::zero()));
    }
    let total: T = probs.iter().copied().sum();
    for p in &mut probs {
        *p = *p / total;
    }
    shannon_entropy(&probs)
}

/// Vector with i.i.d. standard normal real and imaginary parts.
pub fn random_complex_vec<T: Real, R: Rng + ?Sized>(d: usize, rng: &mut R) -> ComplexVec<T> {
    let mut draw = || T::lit(rng.sample::<f64, _>(StandardNormal));
    ComplexVec((0..d).map(|_| c(draw(), draw())).collect())
}

/// Modified Gram-Schmidt. Fails if the input is (numerically) linearly
/// dependent.
pub fn gram_schmidt<T: Real>(vs: &[ComplexVec<T>]) -> Result<Vec<ComplexVec<T>>> {
    let mut out: Vec<ComplexVec<T>> = Vec::with_capacity(vs.len());
    for v in vs {
        let mut w = v.clone();
        for u in &out {
            let proj = inner(u, &w)?;
            w = &w - &u.scale_complex(proj);
        }
        let norm = w.norm_sqr().sqrt();
        if norm <= T::tol(1e-10) {
            return Err(Error::Numeric(
                "Gram-Schmidt input is linearly dependent".into(),
            ));
        }
        out.push(w.scale(T::one() / norm));
    }
    Ok(out)
}

/// Haar-like random unitary: Gram-Schmidt of Gaussian columns.
pub fn random_unitary<T: Real, R: Rng + ?Sized>(n: usize, rng: &mut R) -> SquareMatrix<T> {
    loop {
        let cols: Vec<_> = (0..n).map(|_| random_complex_vec(n, rng)).collect();
        if let Ok(q) = gram_schmidt(&cols) {
            return SquareMatrix::from_columns(&q).expect("square");
        }
    }
}
