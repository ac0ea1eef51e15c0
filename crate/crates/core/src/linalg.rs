//! Dense complex matrices for small Hilbert spaces (dimension 2 to 16).
//!
//! Storage is row-major. Eigendecompositions go through nalgebra's Hermitian
//! solver; ordering, degenerate subspaces and eigenvector phases are then
//! normalised here so that everything downstream is reproducible.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Inputs further than this from Hermitian are rejected.
pub const HERMITIAN_TOL: f64 = 1e-10;
/// Eigenvalues closer than this are treated as one degenerate cluster.
pub const DEGENERACY_GAP: f64 = 1e-10;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);
const I: C64 = C64::new(0.0, 1.0);

#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    dim: usize,
    data: Vec<C64>,
}

impl ComplexMatrix {
    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1, "matrix dimension must be positive");
        Self {
            dim,
            data: vec![ZERO; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for k in 0..dim {
            m.data[k * dim + k] = ONE;
        }
        m
    }

    /// Builds a matrix from `dim * dim` entries in row-major order.
    pub fn from_row_major(dim: usize, data: Vec<C64>) -> Result<Self> {
        if dim == 0 || data.len() != dim * dim {
            return Err(Error::invalid(format!(
                "expected {} entries for dimension {dim}, got {}",
                dim * dim,
                data.len()
            )));
        }
        Ok(Self { dim, data })
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            for j in 0..dim {
                m.data[i * dim + j] = f(i, j);
            }
        }
        m
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (k, &d) in diag.iter().enumerate() {
            m.data[k * diag.len() + k] = C64::new(d, 0.0);
        }
        m
    }

    /// `|v><v|`
    pub fn outer(v: &[C64]) -> Self {
        Self::from_fn(v.len(), |i, j| v[i] * v[j].conj())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[C64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.data[i * self.dim + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: C64) {
        self.data[i * self.dim + j] = value;
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.dim, |i, j| self.get(j, i).conj())
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim).map(|k| self.get(k, k)).sum()
    }

    pub fn scale(&self, c: C64) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|z| z * c).collect(),
        }
    }

    pub fn scale_real(&self, c: f64) -> Self {
        self.scale(C64::new(c, 0.0))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Largest entrywise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.dim, other.dim);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn hermiticity_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.dim {
            for j in i..self.dim {
                worst = worst.max((self.get(i, j) - self.get(j, i).conj()).norm());
            }
        }
        worst
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_error() <= tol
    }

    /// `(m + m†) / 2`
    pub fn hermitian_part(&self) -> Self {
        Self::from_fn(self.dim, |i, j| (self.get(i, j) + self.get(j, i).conj()) * 0.5)
    }

    /// `Re tr(self · rho)`
    pub fn expectation(&self, rho: &ComplexMatrix) -> f64 {
        assert_eq!(self.dim, rho.dim);
        let n = self.dim;
        let mut acc = ZERO;
        for i in 0..n {
            for k in 0..n {
                acc += self.get(i, k) * rho.get(k, i);
            }
        }
        acc.re
    }

    pub fn apply(&self, v: &[C64]) -> Vec<C64> {
        assert_eq!(v.len(), self.dim);
        (0..self.dim)
            .map(|i| (0..self.dim).map(|j| self.get(i, j) * v[j]).sum())
            .collect()
    }

    /// `<u| self |v>`
    pub fn matrix_element(&self, u: &[C64], v: &[C64]) -> C64 {
        inner(u, &self.apply(v))
    }

    /// `u · self · u†`
    pub fn conjugate_by(&self, u: &ComplexMatrix) -> Self {
        &(u * self) * &u.adjoint()
    }

    fn to_nalgebra(&self) -> DMatrix<C64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.data)
    }
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix({}x{})", self.dim, self.dim)?;
        for i in 0..self.dim {
            let row: Vec<String> = (0..self.dim)
                .map(|j| {
                    let z = self.get(i, j);
                    format!("{:+.6e}{:+.6e}i", z.re, z.im)
                })
                .collect();
            writeln!(f, "  [{}]", row.join(", "))?;
        }
        Ok(())
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch in product");
        let n = self.dim;
        let mut out = ComplexMatrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == ZERO {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * rhs.data[k * n + j];
                }
            }
        }
        out
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch in sum");
        ComplexMatrix {
            dim: self.dim,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch in difference");
        ComplexMatrix {
            dim: self.dim,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl Neg for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn neg(self) -> ComplexMatrix {
        self.scale_real(-1.0)
    }
}

macro_rules! forward_owned_binop {
    ($tr:ident, $method:ident) => {
        impl $tr for ComplexMatrix {
            type Output = ComplexMatrix;
            fn $method(self, rhs: ComplexMatrix) -> ComplexMatrix {
                (&self).$method(&rhs)
            }
        }
    };
}
forward_owned_binop!(Mul, mul);
forward_owned_binop!(Add, add);
forward_owned_binop!(Sub, sub);

/// `Σ_k conj(u_k) v_k`
pub fn inner(u: &[C64], v: &[C64]) -> C64 {
    u.iter().zip(v).map(|(a, b)| a.conj() * b).sum()
}

pub fn vector_norm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Pauli and ladder operators. `σz = diag(1, -1)`; index 0 is the "up" state,
/// so `σ₊ = |0><1|` raises into it and `σ₋ = |1><0|` lowers out of it.
pub mod pauli {
    use super::{ComplexMatrix, C64, I, ONE, ZERO};

    pub fn sigma_x() -> ComplexMatrix {
        ComplexMatrix::from_row_major(2, vec![ZERO, ONE, ONE, ZERO]).unwrap()
    }

    pub fn sigma_y() -> ComplexMatrix {
        ComplexMatrix::from_row_major(2, vec![ZERO, -I, I, ZERO]).unwrap()
    }

    pub fn sigma_z() -> ComplexMatrix {
        ComplexMatrix::from_real_diagonal(&[1.0, -1.0])
    }

    pub fn sigma_plus() -> ComplexMatrix {
        ComplexMatrix::from_row_major(2, vec![ZERO, ONE, ZERO, ZERO]).unwrap()
    }

    pub fn sigma_minus() -> ComplexMatrix {
        ComplexMatrix::from_row_major(2, vec![ZERO, ZERO, ONE, ZERO]).unwrap()
    }

    /// `x σx + y σy + z σz`
    pub fn bloch_operator(x: f64, y: f64, z: f64) -> ComplexMatrix {
        ComplexMatrix::from_row_major(
            2,
            vec![
                C64::new(z, 0.0),
                C64::new(x, -y),
                C64::new(x, y),
                C64::new(-z, 0.0),
            ],
        )
        .unwrap()
    }
}

pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    let (da, db) = (a.dim, b.dim);
    ComplexMatrix::from_fn(da * db, |r, c| {
        a.get(r / db, c / db) * b.get(r % db, c % db)
    })
}

/// Which factor of a bipartite `A ⊗ B` space survives a partial trace.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Subsystem {
    A,
    B,
}

pub fn partial_trace(m: &ComplexMatrix, dims: (usize, usize), keep: Subsystem) -> Result<ComplexMatrix> {
    let (da, db) = dims;
    if da == 0 || db == 0 || da * db != m.dim {
        return Err(Error::invalid(format!(
            "partial trace: dims {da}x{db} incompatible with matrix dimension {}",
            m.dim
        )));
    }
    Ok(match keep {
        Subsystem::A => ComplexMatrix::from_fn(da, |a, ap| {
            (0..db).map(|b| m.get(a * db + b, ap * db + b)).sum()
        }),
        Subsystem::B => ComplexMatrix::from_fn(db, |b, bp| {
            (0..da).map(|a| m.get(a * db + b, a * db + bp)).sum()
        }),
    })
}

pub fn commutator(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    &(a * b) - &(b * a)
}

pub fn anticommutator(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    &(a * b) + &(b * a)
}

/// Frobenius norm of `ab - ba`.
pub fn commutator_norm(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<f64> {
    if a.dim != b.dim {
        return Err(Error::invalid(format!(
            "commutator of {}x{} and {}x{} matrices",
            a.dim, a.dim, b.dim, b.dim
        )));
    }
    Ok(commutator(a, b).frobenius_norm())
}

/// Eigenvalues in ascending order with orthonormal eigenvectors.
#[derive(Clone, Debug)]
pub struct SpectralDecomposition {
    eigenvalues: Vec<f64>,
    eigenvectors: Vec<Vec<C64>>,
}

impl SpectralDecomposition {
    /// Wraps externally supplied eigenpairs. Vectors must be orthonormal
    /// within `1e-10`; eigenvalues are not re-sorted.
    pub fn from_parts(eigenvalues: Vec<f64>, eigenvectors: Vec<Vec<C64>>) -> Result<Self> {
        let n = eigenvalues.len();
        if eigenvectors.len() != n || eigenvectors.iter().any(|v| v.len() != n) {
            return Err(Error::invalid("spectral decomposition: shape mismatch"));
        }
        for i in 0..n {
            for j in 0..n {
                let expected = if i == j { 1.0 } else { 0.0 };
                if (inner(&eigenvectors[i], &eigenvectors[j]) - expected).norm() > 1e-10 {
                    return Err(Error::invalid(
                        "spectral decomposition: eigenvectors are not orthonormal",
                    ));
                }
            }
        }
        Ok(Self {
            eigenvalues,
            eigenvectors,
        })
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvalue(&self, k: usize) -> f64 {
        self.eigenvalues[k]
    }

    pub fn eigenvector(&self, k: usize) -> &[C64] {
        &self.eigenvectors[k]
    }

    pub fn eigenvectors(&self) -> &[Vec<C64>] {
        &self.eigenvectors
    }

    pub fn projector(&self, k: usize) -> ComplexMatrix {
        ComplexMatrix::outer(&self.eigenvectors[k])
    }

    /// Unitary whose columns are the eigenvectors.
    pub fn basis_matrix(&self) -> ComplexMatrix {
        ComplexMatrix::from_fn(self.dim(), |i, k| self.eigenvectors[k][i])
    }

    /// `Σ_k g(λ_k) |v_k><v_k|`
    pub fn reassemble(&self, mut g: impl FnMut(f64) -> C64) -> ComplexMatrix {
        let n = self.dim();
        let mut out = ComplexMatrix::zeros(n);
        for (lambda, v) in self.eigenvalues.iter().zip(&self.eigenvectors) {
            let w = g(*lambda);
            for i in 0..n {
                let vi = v[i] * w;
                for (j, vj) in v.iter().enumerate() {
                    out.data[i * n + j] += vi * vj.conj();
                }
            }
        }
        out
    }

    pub fn reconstruct(&self) -> ComplexMatrix {
        self.reassemble(|l| C64::new(l, 0.0))
    }

    /// Smallest gap between neighbouring eigenvalues (infinite for dim 1).
    pub fn min_gap(&self) -> f64 {
        self.eigenvalues
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min)
    }

    pub fn is_degenerate(&self) -> bool {
        self.min_gap() < DEGENERACY_GAP
    }
}

/// Hermitian eigendecomposition with deterministic conventions.
///
/// The input is symmetrised before solving. Inside a degenerate cluster the
/// basis is rebuilt by projecting canonical basis vectors onto the cluster
/// subspace and orthonormalising them in index order. Non-degenerate
/// eigenvectors get their phase fixed so that the first component with at
/// least half the maximal modulus is real and positive.
pub fn eig_hermitian(h: &ComplexMatrix) -> Result<SpectralDecomposition> {
    let err = h.hermiticity_error();
    if !(err <= HERMITIAN_TOL) {
        return Err(Error::invalid(format!(
            "eig_hermitian: input deviates from Hermitian by {err:e}"
        )));
    }
    let n = h.dim;
    let sym = h.hermitian_part();
    let eig = sym.to_nalgebra().symmetric_eigen();

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vectors: Vec<Vec<C64>> = order
        .iter()
        .map(|&k| eig.eigenvectors.column(k).iter().copied().collect())
        .collect();

    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && values[end] - values[end - 1] < DEGENERACY_GAP {
            end += 1;
        }
        if end - start == 1 {
            fix_phase(&mut vectors[start]);
        } else {
            let rebuilt = canonical_cluster_basis(&vectors[start..end]);
            vectors.splice(start..end, rebuilt);
        }
        start = end;
    }

    Ok(SpectralDecomposition {
        eigenvalues: values,
        eigenvectors: vectors,
    })
}

fn fix_phase(v: &mut [C64]) {
    let norm = vector_norm(v);
    let max = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if let Some(pivot) = v.iter().find(|z| z.norm() >= 0.5 * max) {
        let phase = pivot.conj() / pivot.norm();
        for z in v.iter_mut() {
            *z *= phase / norm;
        }
    }
}

fn canonical_cluster_basis(cluster: &[Vec<C64>]) -> Vec<Vec<C64>> {
    let n = cluster[0].len();
    let want = cluster.len();
    let mut basis: Vec<Vec<C64>> = Vec::with_capacity(want);
    for k in 0..n {
        if basis.len() == want {
            break;
        }
        // P e_k = Σ_v v conj(v_k)
        let mut w: Vec<C64> = vec![ZERO; n];
        for v in cluster {
            let c = v[k].conj();
            for i in 0..n {
                w[i] += v[i] * c;
            }
        }
        for u in &basis {
            let c = inner(u, &w);
            for i in 0..n {
                w[i] -= u[i] * c;
            }
        }
        let norm = vector_norm(&w);
        if norm > 1e-6 {
            basis.push(w.into_iter().map(|z| z / norm).collect());
        }
    }
    debug_assert_eq!(basis.len(), want);
    basis
}

/// Applies `f` to the eigenvalues of `h`, clamping them below at `floor`.
///
/// Returns the reassembled matrix and the number of clamped eigenvalues.
pub fn matrix_function(
    h: &ComplexMatrix,
    f: impl Fn(f64) -> f64,
    floor: f64,
) -> Result<(ComplexMatrix, usize)> {
    let eig = eig_hermitian(h)?;
    let mut clamped = 0;
    let m = eig.reassemble(|lambda| {
        let x = if lambda < floor {
            clamped += 1;
            floor
        } else {
            lambda
        };
        C64::new(f(x), 0.0)
    });
    if clamped > 0 {
        log::debug!("matrix_function clamped {clamped} eigenvalue(s) at {floor:e}");
    }
    Ok((m, clamped))
}

/// `exp(-i h dt)` for Hermitian `h`.
pub fn unitary_step(h: &ComplexMatrix, dt: f64) -> Result<ComplexMatrix> {
    let eig = eig_hermitian(h)?;
    Ok(eig.reassemble(|lambda| (-I * lambda * dt).exp()))
}
