//! Dense complex matrices and the small amount of linear algebra the
//! simulator needs: products, Hadamard products, Frobenius norms, a one-sided
//! Jacobi SVD, numeric rank and random unitary matrices.
//!
//! Everything here works on matrices of a few rows and columns; no attempt is
//! made at cache blocking or BLAS-style performance.

use std::fmt;
use std::ops::{Index, IndexMut};

use num_complex::Complex;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;

/// Relative tolerance used for every rank decision in the crate.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

const JACOBI_MAX_SWEEPS: usize = 60;
const SVD_RESIDUAL_TOL: f64 = 1e-10;
const UNITARY_RETRIES: usize = 3;

/// Row-major dense complex matrix with at least one row and one column.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl ComplexMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::EmptyMatrix { rows, cols });
        }
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                op: "ComplexMatrix::new",
                lhs: (rows, cols),
                rhs: (data.len(), 1),
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// # Panics
    /// If either dimension is zero.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::from_fn(rows, cols, |_, _| C64::new(0.0, 0.0))
    }

    pub fn filled(rows: usize, cols: usize, value: C64) -> Self {
        Self::from_fn(rows, cols, |_, _| value)
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |r, c| if r == c { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) })
    }

    pub fn diag(values: &[C64]) -> Self {
        Self::from_fn(values.len(), values.len(), |r, c| {
            if r == c {
                values[r]
            } else {
                C64::new(0.0, 0.0)
            }
        })
    }

    /// Build from rows of complex entries. All rows must have the same length.
    pub fn from_rows(rows: &[Vec<C64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidParameter {
                name: "rows",
                reason: "ragged rows".into(),
            });
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    /// Build from rows of real entries.
    pub fn from_real_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let rows: Vec<Vec<C64>> = rows
            .iter()
            .map(|r| r.as_ref().iter().map(|&x| C64::new(x, 0.0)).collect())
            .collect();
        Self::from_rows(&rows)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    /// Entries in row-major order.
    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn row(&self, r: usize) -> &[C64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<C64> {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)])
    }

    pub fn conj_transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)].conj())
    }

    pub fn scale(&self, a: C64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| x * a).collect(),
        }
    }

    pub fn scale_real(&self, a: f64) -> Self {
        self.scale(C64::new(a, 0.0))
    }

    fn zip_with(&self, other: &Self, op: &'static str, f: impl Fn(C64, C64) -> C64) -> Result<Self> {
        if self.shape() != other.shape() {
            return Err(Error::DimensionMismatch {
                op,
                lhs: self.shape(),
                rhs: other.shape(),
            });
        }
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    /// Entrywise (Hadamard) product.
    pub fn hadamard(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "hadamard", |a, b| a * b)
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch {
                op: "matmul",
                lhs: self.shape(),
                rhs: other.shape(),
            });
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(r, k)];
                if a == C64::new(0.0, 0.0) {
                    continue;
                }
                let brow = other.row(k);
                let orow = &mut out.data[r * other.cols..(r + 1) * other.cols];
                for (o, &b) in orow.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// Horizontal concatenation `(A | B | ...)`.
    pub fn hconcat(blocks: &[Self]) -> Result<Self> {
        let first = blocks.first().ok_or(Error::InvalidParameter {
            name: "blocks",
            reason: "nothing to concatenate".into(),
        })?;
        if let Some(bad) = blocks.iter().find(|b| b.rows != first.rows) {
            return Err(Error::DimensionMismatch {
                op: "hconcat",
                lhs: first.shape(),
                rhs: bad.shape(),
            });
        }
        let cols: usize = blocks.iter().map(|b| b.cols).sum();
        let mut data = Vec::with_capacity(first.rows * cols);
        for r in 0..first.rows {
            for b in blocks {
                data.extend_from_slice(b.row(r));
            }
        }
        Self::new(first.rows, cols, data)
    }

    pub fn frobenius_norm_sq(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn max_abs_sq(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).fold(0.0, f64::max)
    }

    pub fn trace(&self) -> Result<C64> {
        if !self.is_square() {
            return Err(Error::NonSquare {
                op: "trace",
                rows: self.rows,
                cols: self.cols,
            });
        }
        Ok((0..self.rows).map(|i| self[(i, i)]).sum())
    }

    /// `‖A - B‖²_F` without allocating the difference.
    pub fn distance_sq(&self, other: &Self) -> Result<f64> {
        if self.shape() != other.shape() {
            return Err(Error::DimensionMismatch {
                op: "distance_sq",
                lhs: self.shape(),
                rhs: other.shape(),
            });
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum())
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;

    fn index(&self, (r, c): (usize, usize)) -> &C64 {
        debug_assert!(r < self.rows && c < self.cols);
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut C64 {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[r * self.cols + c]
    }
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            write!(f, "  ")?;
            for z in self.row(r) {
                write!(f, "{:+.4}{:+.4}i  ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

/// Free-function form of [`ComplexMatrix::matmul`].
pub fn matmul(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    a.matmul(b)
}

/// Free-function form of [`ComplexMatrix::hadamard`].
pub fn hadamard(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    a.hadamard(b)
}

pub fn frobenius_norm_sq(a: &ComplexMatrix) -> f64 {
    a.frobenius_norm_sq()
}

/// One circularly-symmetric complex Gaussian draw, `E|z|² = 1`.
pub fn sample_cn<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Matrix of i.i.d. `CN(0, 1)` entries, drawn in row-major order.
pub fn sample_cn_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> ComplexMatrix {
    ComplexMatrix::from_fn(rows, cols, |_, _| sample_cn(rng))
}

/// Thin singular value decomposition `A = U Σ Vᴴ`.
///
/// `u` is `rows x k` and `v` is `cols x k` with `k = min(rows, cols)`;
/// `sigma` is sorted in descending order. Columns of `u` belonging to zero
/// singular values are left zero.
#[derive(Clone, Debug)]
pub struct Svd {
    pub u: ComplexMatrix,
    pub sigma: Vec<f64>,
    pub v: ComplexMatrix,
}

impl Svd {
    pub fn reconstruct(&self) -> ComplexMatrix {
        let k = self.sigma.len();
        let us = ComplexMatrix::from_fn(self.u.rows(), k, |r, c| self.u[(r, c)] * self.sigma[c]);
        us.matmul(&self.v.conj_transpose())
            .expect("SVD factors are conformable by construction")
    }
}

/// One-sided (Hestenes) Jacobi on the columns of a tall matrix `w` (`m >= n`).
/// Returns `(w, v)` with `A V = W`, columns of `W` mutually orthogonal.
fn jacobi_columns(mut w: ComplexMatrix) -> Result<(ComplexMatrix, ComplexMatrix)> {
    let (m, n) = w.shape();
    let mut v = ComplexMatrix::identity(n);
    let tol = f64::EPSILON * m as f64;
    // Columns whose energy is at rounding level of the whole matrix are
    // numerically zero; rotating them against others never settles.
    let negligible = (f64::EPSILON * w.frobenius_norm_sq().sqrt()).powi(2);
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let mut alpha = 0.0;
                let mut beta = 0.0;
                let mut gamma = C64::new(0.0, 0.0);
                for i in 0..m {
                    let wp = w[(i, p)];
                    let wq = w[(i, q)];
                    alpha += wp.norm_sqr();
                    beta += wq.norm_sqr();
                    gamma += wp.conj() * wq;
                }
                let g = gamma.norm();
                if g == 0.0 || alpha <= negligible || beta <= negligible || g <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                // Rotate column q by the phase of gamma so the 2x2 Gram block is real.
                let phase = gamma / g;
                let zeta = (beta - alpha) / (2.0 * g);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..m {
                    let wp = w[(i, p)];
                    let wq = w[(i, q)] * phase.conj();
                    w[(i, p)] = wp * c - wq * s;
                    w[(i, q)] = wp * s + wq * c;
                }
                for i in 0..n {
                    let vp = v[(i, p)];
                    let vq = v[(i, q)] * phase.conj();
                    v[(i, p)] = vp * c - vq * s;
                    v[(i, q)] = vp * s + vq * c;
                }
            }
        }
        if !rotated {
            return Ok((w, v));
        }
    }
    Err(Error::NumericalFailure(format!(
        "Jacobi SVD did not converge in {JACOBI_MAX_SWEEPS} sweeps"
    )))
}

pub fn svd(a: &ComplexMatrix) -> Result<Svd> {
    if a.data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NumericalFailure("non-finite matrix entry".into()));
    }
    let wide = a.rows < a.cols;
    let tall = if wide { a.conj_transpose() } else { a.clone() };
    let (w, v) = jacobi_columns(tall.clone())?;
    let (m, n) = w.shape();

    let mut order: Vec<(usize, f64)> = (0..n)
        .map(|j| (j, (0..m).map(|i| w[(i, j)].norm_sqr()).sum::<f64>().sqrt()))
        .collect();
    order.sort_by(|x, y| y.1.total_cmp(&x.1));

    let sigma: Vec<f64> = order.iter().map(|&(_, s)| s).collect();
    let u = ComplexMatrix::from_fn(m, n, |i, k| {
        let (j, s) = order[k];
        if s > 0.0 {
            w[(i, j)] / s
        } else {
            C64::new(0.0, 0.0)
        }
    });
    let vv = ComplexMatrix::from_fn(n, n, |i, k| v[(i, order[k].0)]);

    let decomposition = if wide {
        Svd { u: vv, sigma, v: u }
    } else {
        Svd { u, sigma, v: vv }
    };

    let scale = a.frobenius_norm_sq().sqrt();
    if scale > 0.0 {
        let residual = decomposition.reconstruct().distance_sq(a)?.sqrt() / scale;
        if !(residual < SVD_RESIDUAL_TOL) {
            return Err(Error::NumericalFailure(format!(
                "SVD reconstruction residual {residual:e} exceeds {SVD_RESIDUAL_TOL:e}"
            )));
        }
    }
    Ok(decomposition)
}

/// Singular values in descending order, `min(rows, cols)` of them.
pub fn singular_values(a: &ComplexMatrix) -> Result<Vec<f64>> {
    svd(a).map(|d| d.sigma)
}

/// Number of singular values above `rel_tol · σ_max · max(rows, cols)`.
pub fn numeric_rank(a: &ComplexMatrix, rel_tol: f64) -> Result<usize> {
    if !(rel_tol > 0.0 && rel_tol < 1.0) {
        return Err(Error::InvalidParameter {
            name: "rel_tol",
            reason: format!("must lie in (0, 1), got {rel_tol}"),
        });
    }
    let sigma = singular_values(a)?;
    Ok(rank_from_singular_values(&sigma, a.shape(), rel_tol))
}

pub(crate) fn rank_from_singular_values(sigma: &[f64], shape: (usize, usize), rel_tol: f64) -> usize {
    let smax = sigma.first().copied().unwrap_or(0.0);
    let threshold = rel_tol * smax * shape.0.max(shape.1) as f64;
    sigma.iter().filter(|&&s| s > threshold).count()
}

/// `‖U Uᴴ - I‖_F` for a square `U`.
pub fn unitarity_defect(u: &ComplexMatrix) -> Result<f64> {
    if !u.is_square() {
        return Err(Error::NonSquare {
            op: "unitarity_defect",
            rows: u.rows,
            cols: u.cols,
        });
    }
    let gram = u.matmul(&u.conj_transpose())?;
    Ok(gram.distance_sq(&ComplexMatrix::identity(u.rows))?.sqrt())
}

/// Random `n x n` unitary from Gram-Schmidt on a complex Gaussian matrix.
/// The first non-negligible entry of each column is rotated to the positive
/// real axis.
pub fn random_unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<ComplexMatrix> {
    if n == 0 {
        return Err(Error::EmptyMatrix { rows: 0, cols: 0 });
    }
    for _ in 0..=UNITARY_RETRIES {
        let a = sample_cn_matrix(n, n, rng);
        if let Some(q) = orthonormalize_columns(&a) {
            if unitarity_defect(&q)? < 1e-10 {
                return Ok(q);
            }
        }
    }
    Err(Error::NumericalFailure(format!(
        "could not orthonormalize a {n}x{n} Gaussian draw after {UNITARY_RETRIES} retries"
    )))
}

/// Modified Gram-Schmidt with one reorthogonalization pass. `None` when a
/// column collapses.
fn orthonormalize_columns(a: &ComplexMatrix) -> Option<ComplexMatrix> {
    let (m, n) = a.shape();
    let mut cols: Vec<Vec<C64>> = (0..n).map(|j| a.column(j)).collect();
    for j in 0..n {
        let original: f64 = cols[j].iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        for _pass in 0..2 {
            for k in 0..j {
                let proj: C64 = (0..m).map(|i| cols[k][i].conj() * cols[j][i]).sum();
                let (head, tail) = cols.split_at_mut(j);
                for (x, &qk) in tail[0].iter_mut().zip(&head[k]) {
                    *x -= qk * proj;
                }
            }
        }
        let norm: f64 = cols[j].iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if !(norm > 1e-10 * original.max(f64::MIN_POSITIVE)) {
            return None;
        }
        let lead = cols[j].iter().copied().find(|z| z.norm() > 1e-12)?;
        let fix = lead.conj() / lead.norm() / norm;
        for z in cols[j].iter_mut() {
            *z *= fix;
        }
    }
    Some(ComplexMatrix::from_fn(m, n, |i, j| cols[j][i]))
}
