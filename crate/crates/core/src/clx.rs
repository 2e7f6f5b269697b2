//! Dense complex linear algebra for small covariance problems.
//!
//! Matrices are row-major over `Complex<f64>`. Hermitian matrices carry a
//! validated newtype so that factorizations can assume the structure.
//! Solves and log-determinants go through a Cholesky factor; explicit
//! inverses are never formed.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub type C64 = Complex64;

/// A complex column vector.
pub type ComplexVector = Vec<C64>;

const HERMITIAN_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![C64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = C64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_diag(diag: &[C64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, d) in diag.iter().enumerate() {
            m[(i, i)] = *d;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(invalid("matrix dimensions must be positive"));
        }
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch {
                expected: format!("{} entries", rows * cols),
                got: format!("{} entries", data.len()),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_real(rows: usize, cols: usize, data: &[f64]) -> Result<Self> {
        Self::from_vec(rows, cols, data.iter().map(|&x| C64::new(x, 0.0)).collect())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[C64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn conj_transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(j, i)] = self[(i, j)].conj();
            }
        }
        out
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(j, i)] = self[(i, j)];
            }
        }
        out
    }

    pub fn conj(&self) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z.conj()).collect(),
        }
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::ShapeMismatch {
                expected: format!("{} rows", self.cols),
                got: format!("{} rows", other.rows),
            });
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == C64::new(0.0, 0.0) {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, x: &[C64]) -> Result<ComplexVector> {
        if self.cols != x.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("vector of length {}", self.cols),
                got: format!("length {}", x.len()),
            });
        }
        Ok((0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect())
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|a| a * s).collect(),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn trace(&self) -> C64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn is_diagonal(&self) -> bool {
        (0..self.rows).all(|i| (0..self.cols).all(|j| i == j || self[(i, j)] == C64::new(0.0, 0.0)))
    }
}

impl std::ops::Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.cols + j]
    }
}

/// A square matrix equal to its conjugate transpose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ComplexMatrix", into = "ComplexMatrix")]
pub struct HermitianMatrix(ComplexMatrix);

impl HermitianMatrix {
    /// Validates Hermitian symmetry to 1e-12 relative (to the largest entry).
    pub fn new(m: ComplexMatrix) -> Result<Self> {
        if !m.is_square() {
            return Err(invalid(format!(
                "Hermitian matrix must be square, got {}x{}",
                m.rows, m.cols
            )));
        }
        if m.data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(invalid("matrix has non-finite entries"));
        }
        let scale = m.data.iter().map(|z| z.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        for i in 0..m.rows {
            for j in i..m.cols {
                if (m[(i, j)] - m[(j, i)].conj()).norm() > HERMITIAN_TOL * scale {
                    return Err(invalid(format!("matrix is not Hermitian at ({i},{j})")));
                }
            }
        }
        Ok(Self(m))
    }

    /// Builds `(A + Aᴴ)/2`, removing round-off asymmetry.
    pub fn symmetrize(m: ComplexMatrix) -> Result<Self> {
        if !m.is_square() {
            return Err(invalid("Hermitian matrix must be square"));
        }
        let mut out = m.clone();
        for i in 0..m.rows {
            out[(i, i)] = C64::new(m[(i, i)].re, 0.0);
            for j in (i + 1)..m.cols {
                let v = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
                out[(i, j)] = v;
                out[(j, i)] = v.conj();
            }
        }
        Self::new(out)
    }

    pub fn identity(n: usize) -> Self {
        Self(ComplexMatrix::identity(n))
    }

    pub fn from_real_diag(diag: &[f64]) -> Self {
        Self(ComplexMatrix::from_diag(
            &diag.iter().map(|&d| C64::new(d, 0.0)).collect::<Vec<_>>(),
        ))
    }

    pub fn dim(&self) -> usize {
        self.0.rows
    }

    pub fn as_matrix(&self) -> &ComplexMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.0
    }

    pub fn trace_re(&self) -> f64 {
        self.0.trace().re
    }

    pub fn scale(&self, s: f64) -> Self {
        Self(self.0.scale(s))
    }
}

impl TryFrom<ComplexMatrix> for HermitianMatrix {
    type Error = Error;
    fn try_from(m: ComplexMatrix) -> Result<Self> {
        Self::new(m)
    }
}

impl From<HermitianMatrix> for ComplexMatrix {
    fn from(h: HermitianMatrix) -> Self {
        h.0
    }
}

impl std::ops::Index<(usize, usize)> for HermitianMatrix {
    type Output = C64;
    fn index(&self, idx: (usize, usize)) -> &C64 {
        &self.0[idx]
    }
}

/// Toeplitz correlation matrix with entries `rho^|i-j|`.
pub fn toeplitz(rho: f64, m: usize) -> Result<HermitianMatrix> {
    if !(rho.abs() < 1.0) {
        return Err(invalid(format!("toeplitz correlation must satisfy |rho| < 1, got {rho}")));
    }
    if m == 0 {
        return Err(invalid("toeplitz size must be positive"));
    }
    let mut out = ComplexMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            let k = i.abs_diff(j) as i32;
            out[(i, j)] = C64::new(rho.powi(k), 0.0);
        }
    }
    Ok(HermitianMatrix(out))
}

/// Lower-triangular Cholesky factor `L` with `L·Lᴴ = A`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cholesky {
    l: ComplexMatrix,
}

impl Cholesky {
    pub fn factor(&self) -> &ComplexMatrix {
        &self.l
    }

    pub fn dim(&self) -> usize {
        self.l.rows
    }

    /// Solves `L·y = b`.
    pub fn forward_solve(&self, b: &[C64]) -> ComplexVector {
        let n = self.dim();
        let mut y = b.to_vec();
        for i in 0..n {
            let row = self.l.row(i);
            let mut s = y[i];
            for k in 0..i {
                s -= row[k] * y[k];
            }
            y[i] = s / row[i].re;
        }
        y
    }

    /// Solves `Lᴴ·x = y`.
    pub fn backward_solve(&self, y: &[C64]) -> ComplexVector {
        let n = self.dim();
        let mut x = y.to_vec();
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in (i + 1)..n {
                s -= self.l[(k, i)].conj() * x[k];
            }
            x[i] = s / self.l[(i, i)].re;
        }
        x
    }

    pub fn solve(&self, b: &[C64]) -> Result<ComplexVector> {
        if b.len() != self.dim() {
            return Err(Error::ShapeMismatch {
                expected: format!("vector of length {}", self.dim()),
                got: format!("length {}", b.len()),
            });
        }
        Ok(self.backward_solve(&self.forward_solve(b)))
    }

    /// `xᴴ A⁻¹ x`, evaluated as `‖L⁻¹x‖²`.
    pub fn quad_form(&self, x: &[C64]) -> f64 {
        self.forward_solve(x).iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn logdet(&self) -> f64 {
        2.0 * (0..self.dim()).map(|i| self.l[(i, i)].re.ln()).sum::<f64>()
    }

    /// Reassembles `L·Lᴴ`.
    pub fn reconstruct(&self) -> ComplexMatrix {
        self.l
            .matmul(&self.l.conj_transpose())
            .expect("square factor")
    }
}

/// Cholesky factorization; fails when a pivot drops below `1e-13·trace/m`.
pub fn cholesky(a: &HermitianMatrix) -> Result<Cholesky> {
    let n = a.dim();
    let floor = 1e-13 * a.trace_re().abs() / n as f64;
    let mut l = ComplexMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)].re;
        for k in 0..j {
            d -= l[(j, k)].norm_sqr();
        }
        if !(d > floor) || !d.is_finite() {
            return Err(Error::NotPositiveDefinite { index: j, pivot: d });
        }
        let djj = d.sqrt();
        l[(j, j)] = C64::new(djj, 0.0);
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = s / djj;
        }
    }
    Ok(Cholesky { l })
}

pub fn hermitian_solve(a: &HermitianMatrix, b: &[C64]) -> Result<ComplexVector> {
    cholesky(a)?.solve(b)
}

pub fn logdet(a: &HermitianMatrix) -> Result<f64> {
    Ok(cholesky(a)?.logdet())
}

/// Widely linear covariance `[[Σ, Δ], [Δ*, Σ*]]` of size `2q`.
///
/// `delta` must be complex symmetric. When both blocks are diagonal the
/// per-component validity `|δ_ℓ| < σ_ℓℓ` is enforced.
pub fn augmented_cov(sigma: &HermitianMatrix, delta: &ComplexMatrix) -> Result<HermitianMatrix> {
    let q = sigma.dim();
    if delta.rows() != q || delta.cols() != q {
        return Err(Error::ShapeMismatch {
            expected: format!("{q}x{q} pseudo-covariance"),
            got: format!("{}x{}", delta.rows(), delta.cols()),
        });
    }
    let scale = delta.data().iter().map(|z| z.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    for i in 0..q {
        for j in (i + 1)..q {
            if (delta[(i, j)] - delta[(j, i)]).norm() > HERMITIAN_TOL * scale {
                return Err(invalid(format!("pseudo-covariance is not symmetric at ({i},{j})")));
            }
        }
    }
    if sigma.as_matrix().is_diagonal() && delta.is_diagonal() {
        for l in 0..q {
            if delta[(l, l)].norm() >= sigma[(l, l)].re {
                return Err(invalid(format!(
                    "component {l}: |delta| = {} >= sigma = {} is not a valid complex Gaussian",
                    delta[(l, l)].norm(),
                    sigma[(l, l)].re
                )));
            }
        }
    }
    let mut k = ComplexMatrix::zeros(2 * q, 2 * q);
    for i in 0..q {
        for j in 0..q {
            k[(i, j)] = sigma[(i, j)];
            k[(i, j + q)] = delta[(i, j)];
            k[(i + q, j)] = delta[(i, j)].conj();
            k[(i + q, j + q)] = sigma[(i, j)].conj();
        }
    }
    HermitianMatrix::new(k)
}

pub fn dot_conj(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn norm_sqr(a: &[C64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum()
}
