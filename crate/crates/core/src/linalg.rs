//! Dense complex linear algebra used throughout the crate.
//!
//! Bipartite indexing puts subsystem `A` on the slow (leftmost) tensor factor:
//! basis vector `|a⟩⊗|b⟩` has flat index `a * d_b + b`.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type ComplexMatrix = DMatrix<Complex64>;

/// Relative Hermiticity tolerance accepted by [`eigh`].
pub const HERMITIAN_TOL: f64 = 1e-10;

/// Eigenvalues at or below this fraction of the spectral radius count as zero.
pub const SUPPORT_TOL: f64 = 1e-12;

/// Which tensor factor of a bipartite space an operation keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Subsystem {
    A,
    B,
}

impl Subsystem {
    pub fn other(self) -> Self {
        match self {
            Subsystem::A => Subsystem::B,
            Subsystem::B => Subsystem::A,
        }
    }
}

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn identity(d: usize) -> ComplexMatrix {
    ComplexMatrix::identity(d, d)
}

pub fn zeros(rows: usize, cols: usize) -> ComplexMatrix {
    ComplexMatrix::zeros(rows, cols)
}

/// Builds a matrix from row-major entries.
pub fn from_rows(rows: usize, cols: usize, entries: &[Complex64]) -> ComplexMatrix {
    ComplexMatrix::from_row_slice(rows, cols, entries)
}

pub fn diag(values: &[f64]) -> ComplexMatrix {
    let n = values.len();
    ComplexMatrix::from_fn(n, n, |i, j| if i == j { c(values[i], 0.0) } else { c(0.0, 0.0) })
}

pub fn dagger(m: &ComplexMatrix) -> ComplexMatrix {
    m.adjoint()
}

pub fn trace(m: &ComplexMatrix) -> Complex64 {
    m.diagonal().iter().sum()
}

/// `Tr[A B]` without forming the product.
pub fn trace_product(a: &ComplexMatrix, b: &ComplexMatrix) -> Complex64 {
    debug_assert_eq!(a.ncols(), b.nrows());
    debug_assert_eq!(a.nrows(), b.ncols());
    let mut acc = c(0.0, 0.0);
    for i in 0..a.nrows() {
        for k in 0..a.ncols() {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

pub fn frobenius(m: &ComplexMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn frobenius_distance(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    frobenius(&(a - b))
}

pub fn hermitian_part(m: &ComplexMatrix) -> ComplexMatrix {
    (m + m.adjoint()).scale(0.5)
}

/// `‖M − M†‖_F`, relative to `max(1, ‖M‖_F)`.
pub fn hermiticity_defect(m: &ComplexMatrix) -> f64 {
    frobenius(&(m - m.adjoint())) / frobenius(m).max(1.0)
}

/// `X M X†`.
pub fn conjugate(x: &ComplexMatrix, m: &ComplexMatrix) -> ComplexMatrix {
    x * m * x.adjoint()
}

/// Spectral decomposition of a Hermitian matrix, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub eigenvalues: Vec<f64>,
    /// Columns are orthonormal eigenvectors, in the order of `eigenvalues`.
    pub eigenvectors: ComplexMatrix,
}

impl HermitianEigen {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn max_abs_eigenvalue(&self) -> f64 {
        self.eigenvalues.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn max_eigenvalue(&self) -> f64 {
        *self.eigenvalues.last().expect("non-empty spectrum")
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues[0]
    }

    /// Eigenvalues above this are considered part of the support.
    pub fn support_threshold(&self) -> f64 {
        SUPPORT_TOL * self.max_abs_eigenvalue()
    }

    pub fn reconstruct(&self) -> ComplexMatrix {
        self.weighted_sum(|_, v| Some(v))
    }

    /// `Σ_k w_k |u_k⟩⟨u_k|` over the eigenpairs with `Some(w_k)`.
    fn weighted_sum(&self, weight: impl Fn(usize, f64) -> Option<f64>) -> ComplexMatrix {
        let n = self.dim();
        let mut scaled = self.eigenvectors.clone();
        let mut keep = vec![false; n];
        for (k, &lambda) in self.eigenvalues.iter().enumerate() {
            match weight(k, lambda) {
                Some(w) => {
                    keep[k] = true;
                    scaled.column_mut(k).scale_mut(w);
                }
                None => scaled.column_mut(k).fill(c(0.0, 0.0)),
            }
        }
        if !keep.iter().any(|&k| k) {
            return zeros(n, n);
        }
        let out = scaled * self.eigenvectors.adjoint();
        hermitian_part(&out)
    }

    /// Applies `f` eigenvalue-wise.
    ///
    /// With `support_only`, `f` only sees eigenvalues above the support
    /// threshold and the rest of the spectrum maps to zero.
    pub fn apply(&self, f: impl Fn(f64) -> f64, support_only: bool) -> Result<ComplexMatrix> {
        let thr = self.support_threshold();
        let mut values = Vec::with_capacity(self.dim());
        for &lambda in &self.eigenvalues {
            if support_only && lambda <= thr {
                values.push(None);
                continue;
            }
            let y = f(lambda);
            if !y.is_finite() {
                return Err(Error::Domain(format!(
                    "function is not finite at retained eigenvalue {lambda:e}"
                )));
            }
            values.push(Some(y));
        }
        Ok(self.weighted_sum(|k, _| values[k]))
    }

    /// Projector onto eigenvectors whose eigenvalue satisfies `pred`.
    pub fn spectral_projector(&self, pred: impl Fn(f64) -> bool) -> ComplexMatrix {
        self.weighted_sum(|_, v| pred(v).then_some(1.0))
    }

    /// Projector onto the support (eigenvalues above the support threshold).
    pub fn support_projector(&self) -> ComplexMatrix {
        let thr = self.support_threshold();
        self.spectral_projector(|v| v > thr)
    }

    pub fn rank(&self) -> usize {
        let thr = self.support_threshold();
        self.eigenvalues.iter().filter(|&&v| v > thr).count()
    }
}

/// Hermitian eigendecomposition with ascending eigenvalues.
pub fn eigh(h: &ComplexMatrix) -> Result<HermitianEigen> {
    if !h.is_square() {
        return Err(Error::dims("square matrix", format!("{}x{}", h.nrows(), h.ncols())));
    }
    let defect = hermiticity_defect(h);
    if defect > HERMITIAN_TOL {
        return Err(Error::Validation(format!(
            "matrix is not Hermitian: relative ‖H − H†‖_F = {defect:e} exceeds {HERMITIAN_TOL:e}"
        )));
    }
    Ok(eigh_unchecked(&hermitian_part(h)))
}

pub(crate) fn eigh_unchecked(h: &ComplexMatrix) -> HermitianEigen {
    let n = h.nrows();
    let decomposition = SymmetricEigen::new(h.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| decomposition.eigenvalues[i].total_cmp(&decomposition.eigenvalues[j]));
    let eigenvalues = order.iter().map(|&i| decomposition.eigenvalues[i]).collect();
    let eigenvectors = ComplexMatrix::from_fn(n, n, |r, k| decomposition.eigenvectors[(r, order[k])]);
    HermitianEigen {
        eigenvalues,
        eigenvectors,
    }
}

/// Spectrum of `A ⊗ B` from the spectra of its factors.
pub fn kron_eigen(a: &HermitianEigen, b: &HermitianEigen) -> HermitianEigen {
    let (na, nb) = (a.dim(), b.dim());
    let mut order: Vec<(usize, usize)> = (0..na).flat_map(|i| (0..nb).map(move |j| (i, j))).collect();
    order.sort_by(|&(i, j), &(k, l)| (a.eigenvalues[i] * b.eigenvalues[j]).total_cmp(&(a.eigenvalues[k] * b.eigenvalues[l])));
    let eigenvalues = order.iter().map(|&(i, j)| a.eigenvalues[i] * b.eigenvalues[j]).collect();
    let eigenvectors = ComplexMatrix::from_fn(na * nb, na * nb, |r, k| {
        let (i, j) = order[k];
        a.eigenvectors[(r / nb, i)] * b.eigenvectors[(r % nb, j)]
    });
    HermitianEigen {
        eigenvalues,
        eigenvectors,
    }
}

/// `U f(Λ) U†` for Hermitian `h`; see [`HermitianEigen::apply`].
pub fn matrix_function(
    h: &ComplexMatrix,
    f: impl Fn(f64) -> f64,
    support_only: bool,
) -> Result<ComplexMatrix> {
    eigh(h)?.apply(f, support_only)
}

pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a.kronecker(b)
}

/// Traces out the subsystem not named by `keep` from an operator on `A ⊗ B`.
pub fn partial_trace(m: &ComplexMatrix, dims: (usize, usize), keep: Subsystem) -> Result<ComplexMatrix> {
    let (da, db) = dims;
    let n = da * db;
    if m.nrows() != n || m.ncols() != n {
        return Err(Error::dims(
            format!("{n}x{n} for dims ({da}, {db})"),
            format!("{}x{}", m.nrows(), m.ncols()),
        ));
    }
    Ok(match keep {
        Subsystem::A => ComplexMatrix::from_fn(da, da, |a, a2| {
            (0..db).map(|b| m[(a * db + b, a2 * db + b)]).sum()
        }),
        Subsystem::B => ComplexMatrix::from_fn(db, db, |b, b2| {
            (0..da).map(|a| m[(a * db + b, a * db + b2)]).sum()
        }),
    })
}
