//! Dense symmetric matrices and the eigendecomposition everything else leans on.

use std::ops::{Add, Mul, Sub};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative asymmetry accepted (and averaged away) by [`SymMatrix::new`].
const SYMMETRY_TOL: f64 = 1e-10;

/// A dense p×p symmetric matrix with finite entries.
///
/// Symmetry is exact: every constructor mirrors or averages the two
/// triangles, so `get(k, l) == get(l, k)` bit for bit.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    /// Validates and wraps a square matrix. Asymmetry up to a small relative
    /// tolerance is averaged away; anything larger is rejected.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch {
                expected: m.nrows(),
                actual: m.ncols(),
            });
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        let scale = m.amax().max(1.0);
        let mut worst = 0.0f64;
        for j in 0..m.ncols() {
            for i in 0..j {
                worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
            }
        }
        if worst > SYMMETRY_TOL * scale {
            return Err(Error::NotSymmetric(worst));
        }
        Ok(Self::symmetrize(m))
    }

    /// Builds a matrix from the upper triangle (`i <= j`) of `f`.
    pub fn from_fn(p: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = DMatrix::zeros(p, p);
        for j in 0..p {
            for i in 0..=j {
                let v = f(i, j);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        Self(m)
    }

    /// Row-major nested rows, validated like [`SymMatrix::new`].
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let p = rows.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != p) {
            return Err(Error::DimensionMismatch {
                expected: p,
                actual: bad.len(),
            });
        }
        Self::new(DMatrix::from_fn(p, p, |i, j| rows[i][j]))
    }

    pub fn zeros(p: usize) -> Self {
        Self(DMatrix::zeros(p, p))
    }

    pub fn identity(p: usize) -> Self {
        Self(DMatrix::identity(p, p))
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        Self(DMatrix::from_diagonal(&DVector::from_column_slice(d)))
    }

    /// Averages the two triangles. Crate-internal results of symmetric
    /// algebra go through here to kill rounding asymmetry.
    pub(crate) fn symmetrize(mut m: DMatrix<f64>) -> Self {
        let p = m.nrows();
        for j in 0..p {
            for i in 0..j {
                let v = 0.5 * (m[(i, j)] + m[(j, i)]);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        Self(m)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    /// Sets entries `(i, j)` and `(j, i)`.
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.0[(i, j)] = v;
        self.0[(j, i)] = v;
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.0[(i, i)]).collect()
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim())
            .map(|i| (0..self.dim()).map(|j| self.0[(i, j)]).collect())
            .collect()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.norm()
    }

    /// Largest absolute off-diagonal entry (0 for p = 1).
    pub fn max_abs_offdiag(&self) -> f64 {
        let p = self.dim();
        let mut best = 0.0f64;
        for j in 0..p {
            for i in 0..j {
                best = best.max(self.0[(i, j)].abs());
            }
        }
        best
    }

    pub fn max_diagonal(&self) -> f64 {
        self.diagonal()
            .into_iter()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Sum of absolute off-diagonal entries (both triangles).
    pub fn offdiag_l1(&self) -> f64 {
        let p = self.dim();
        let mut s = 0.0;
        for j in 0..p {
            for i in 0..p {
                if i != j {
                    s += self.0[(i, j)].abs();
                }
            }
        }
        s
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self(&self.0 * c)
    }

    /// Simultaneous row/column permutation: `out[(a, b)] = self[(perm[a], perm[b])]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let p = self.dim();
        assert_eq!(perm.len(), p, "permutation length");
        Self(DMatrix::from_fn(p, p, |i, j| self.0[(perm[i], perm[j])]))
    }

    pub fn eigen(&self) -> Result<Eigen> {
        Eigen::new(self)
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        Ok(self.eigen()?.values[0])
    }

    /// Cheap positive-definiteness test of `self - shift * I` via Cholesky.
    pub fn is_pd_shifted(&self, shift: f64) -> bool {
        let mut m = self.0.clone();
        for i in 0..self.dim() {
            m[(i, i)] -= shift;
        }
        nalgebra::Cholesky::new(m).is_some()
    }
}

impl Add for &SymMatrix {
    type Output = SymMatrix;
    fn add(self, rhs: &SymMatrix) -> SymMatrix {
        SymMatrix(&self.0 + &rhs.0)
    }
}

impl Sub for &SymMatrix {
    type Output = SymMatrix;
    fn sub(self, rhs: &SymMatrix) -> SymMatrix {
        SymMatrix(&self.0 - &rhs.0)
    }
}

impl Mul<f64> for &SymMatrix {
    type Output = SymMatrix;
    fn mul(self, rhs: f64) -> SymMatrix {
        self.scaled(rhs)
    }
}

/// Symmetric eigendecomposition with eigenvalues in ascending order.
///
/// Eigenvectors follow a fixed sign convention: the first component whose
/// magnitude exceeds 1e-12 is positive. This makes factors built from the
/// basis reproducible across runs and platforms.
#[derive(Debug, Clone)]
pub struct Eigen {
    pub values: Vec<f64>,
    /// Columns are unit eigenvectors matching `values`.
    pub vectors: DMatrix<f64>,
}

impl Eigen {
    pub fn new(a: &SymMatrix) -> Result<Self> {
        let p = a.dim();
        if p == 0 {
            return Ok(Self {
                values: Vec::new(),
                vectors: DMatrix::zeros(0, 0),
            });
        }
        // faer's divide-and-conquer solver: nalgebra's symmetric QR
        // iteration can return a visibly wrong basis on clustered spectra.
        let m = faer::Mat::from_fn(p, p, |i, j| a.0[(i, j)]);
        let eig = m.self_adjoint_eigen(faer::Side::Lower).map_err(|_| Error::EigenFailure)?;
        let (s, u) = (eig.S(), eig.U());
        let mut order: Vec<usize> = (0..p).collect();
        order.sort_by(|&x, &y| s[x].total_cmp(&s[y]));
        let values: Vec<f64> = order.iter().map(|&k| s[k]).collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::EigenFailure);
        }
        let mut vectors = DMatrix::zeros(p, p);
        for (dst, &src) in order.iter().enumerate() {
            let col = u.col(src);
            let sign = (0..p)
                .map(|i| col[i])
                .find(|v| v.abs() > 1e-12)
                .map_or(1.0, f64::signum);
            for i in 0..p {
                vectors[(i, dst)] = sign * col[i];
            }
        }
        Ok(Self { values, vectors })
    }

    /// `V diag(f(λ)) Vᵀ`.
    pub fn reconstruct(&self, f: impl Fn(f64) -> f64) -> SymMatrix {
        let mut scaled = self.vectors.clone();
        for (k, &lam) in self.values.iter().enumerate() {
            let w = f(lam);
            scaled.column_mut(k).scale_mut(w);
        }
        SymMatrix::symmetrize(&scaled * self.vectors.transpose())
    }

    pub fn min(&self) -> f64 {
        self.values.first().copied().unwrap_or(f64::INFINITY)
    }

    pub fn max(&self) -> f64 {
        self.values.last().copied().unwrap_or(f64::NEG_INFINITY)
    }
}
