//! Density operators and the information measures built on them: von Neumann
//! and relative entropy, coherence `C = S(ρ‖ρ^d)`, athermality
//! `D = S(ρ^d‖ρ^eq)` and the generalized free energy `F + (C + D)/β`.
//!
//! All entropies are in nats.

use crate::error::{Error, Result};
use crate::linalg::{eig_hermitian, inner, ComplexMatrix, SpectralDecomposition, C64};

/// Eigenvalues below this are treated as exact zeros in entropy sums.
pub const ENTROPY_ZERO_CUTOFF: f64 = 1e-14;
/// Probability mass outside the reference support above which a relative
/// entropy is reported as infinite.
pub const SUPPORT_TOL: f64 = 1e-12;
const STATE_TOL: f64 = 1e-10;

/// A validated state: Hermitian, unit trace, positive semidefinite (all within
/// `1e-10`). The eigendecomposition `{p_i, |s_i>}` is computed once and cached.
#[derive(Clone, Debug)]
pub struct DensityOperator {
    matrix: ComplexMatrix,
    spectrum: SpectralDecomposition,
}

impl DensityOperator {
    pub fn new(matrix: ComplexMatrix) -> Result<Self> {
        Self::with_tolerance(matrix, STATE_TOL)
    }

    /// Same checks as [`DensityOperator::new`] with a caller-chosen tolerance,
    /// for states produced by an integrator that is not exactly positive.
    pub(crate) fn with_tolerance(matrix: ComplexMatrix, tol: f64) -> Result<Self> {
        let herm = matrix.hermiticity_error();
        if !(herm <= tol) {
            return Err(Error::invalid(format!("density operator not Hermitian (error {herm:e})")));
        }
        let matrix = matrix.hermitian_part();
        let trace = matrix.trace().re;
        if (trace - 1.0).abs() > tol {
            return Err(Error::invalid(format!("density operator trace is {trace}")));
        }
        let spectrum = eig_hermitian(&matrix)?;
        let min = spectrum.eigenvalue(0);
        if min < -tol {
            return Err(Error::invalid(format!("density operator has eigenvalue {min:e}")));
        }
        Ok(Self { matrix, spectrum })
    }

    /// Builds `|ψ><ψ|` after normalising `ψ`.
    pub fn pure(psi: &[C64]) -> Result<Self> {
        let norm = crate::linalg::vector_norm(psi);
        if norm == 0.0 {
            return Err(Error::invalid("pure state from zero vector"));
        }
        let v: Vec<C64> = psi.iter().map(|z| z / norm).collect();
        Self::new(ComplexMatrix::outer(&v))
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self::new(ComplexMatrix::identity(dim).scale_real(1.0 / dim as f64)).unwrap()
    }

    /// Qubit state `(1 + r·σ)/2`.
    pub fn from_bloch(x: f64, y: f64, z: f64) -> Result<Self> {
        let op = crate::linalg::pauli::bloch_operator(x, y, z);
        Self::new((&ComplexMatrix::identity(2) + &op).scale_real(0.5))
    }

    /// Replaces the cached eigenbasis with a caller-chosen one. Only useful for
    /// degenerate states, where the eigenbasis is a convention; the supplied
    /// decomposition must reproduce the matrix within `1e-10`.
    pub fn with_spectrum(mut self, spectrum: SpectralDecomposition) -> Result<Self> {
        if spectrum.dim() != self.dim() || spectrum.reconstruct().max_abs_diff(&self.matrix) > STATE_TOL {
            return Err(Error::invalid("supplied spectrum does not reproduce the state"));
        }
        self.spectrum = spectrum;
        Ok(self)
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn spectrum(&self) -> &SpectralDecomposition {
        &self.spectrum
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    /// Eigenvalues with the tiny negative round-off clipped to zero.
    pub fn probabilities(&self) -> Vec<f64> {
        self.spectrum.eigenvalues().iter().map(|&p| p.max(0.0)).collect()
    }

    pub fn purity(&self) -> f64 {
        (&self.matrix * &self.matrix).trace().re
    }

    /// `u ρ u†`
    pub fn evolve(&self, u: &ComplexMatrix) -> Result<Self> {
        Self::new(self.matrix.conjugate_by(u))
    }

    /// `(⟨σx⟩, ⟨σy⟩, ⟨σz⟩)` for a qubit.
    pub fn bloch_vector(&self) -> [f64; 3] {
        assert_eq!(self.dim(), 2, "Bloch vector only defined for qubits");
        let m = &self.matrix;
        [2.0 * m.get(0, 1).re, -2.0 * m.get(0, 1).im, (m.get(0, 0) - m.get(1, 1)).re]
    }
}

/// `⟨e_n|ρ|e_n⟩` for each vector of `basis`.
pub fn populations_in(rho: &ComplexMatrix, basis: &SpectralDecomposition) -> Vec<f64> {
    basis
        .eigenvectors()
        .iter()
        .map(|v| rho.matrix_element(v, v).re)
        .collect()
}

/// Boltzmann weights of the spectrum at inverse temperature `beta`.
pub fn boltzmann_populations(energies: &[f64], beta: f64) -> Vec<f64> {
    let min = energies.iter().copied().fold(f64::INFINITY, f64::min);
    let weights: Vec<f64> = energies.iter().map(|e| (-beta * (e - min)).exp()).collect();
    let z: f64 = weights.iter().sum();
    weights.into_iter().map(|w| w / z).collect()
}

/// `ln` of [`boltzmann_populations`], exact even where the weights underflow.
pub fn boltzmann_log_populations(energies: &[f64], beta: f64) -> Vec<f64> {
    let min = energies.iter().copied().fold(f64::INFINITY, f64::min);
    let ln_z = energies.iter().map(|e| (-beta * (e - min)).exp()).sum::<f64>().ln();
    energies.iter().map(|e| -beta * (e - min) - ln_z).collect()
}

pub fn thermal_state(h: &ComplexMatrix, beta: f64) -> Result<DensityOperator> {
    if !(beta >= 0.0) {
        return Err(Error::invalid(format!("inverse temperature must be non-negative, got {beta}")));
    }
    let eig = eig_hermitian(h)?;
    let pops = boltzmann_populations(eig.eigenvalues(), beta);
    let mut k = 0;
    let m = eig.reassemble(|_| {
        let p = pops[k];
        k += 1;
        C64::new(p, 0.0)
    });
    DensityOperator::new(m)
}

/// `F = -(1/β) ln Z`.
pub fn free_energy(h: &ComplexMatrix, beta: f64) -> Result<f64> {
    if !(beta > 0.0) {
        return Err(Error::invalid(format!("free energy needs beta > 0, got {beta}")));
    }
    let eig = eig_hermitian(h)?;
    Ok(free_energy_of_spectrum(eig.eigenvalues(), beta))
}

pub(crate) fn free_energy_of_spectrum(energies: &[f64], beta: f64) -> f64 {
    let min = energies.iter().copied().fold(f64::INFINITY, f64::min);
    let z: f64 = energies.iter().map(|e| (-beta * (e - min)).exp()).sum();
    min - z.ln() / beta
}

/// `Σ_n |e_n><e_n| ρ |e_n><e_n|`
pub fn dephase(rho: &DensityOperator, basis: &SpectralDecomposition) -> Result<DensityOperator> {
    if basis.dim() != rho.dim() {
        return Err(Error::invalid(format!(
            "dephase: basis dimension {} vs state dimension {}",
            basis.dim(),
            rho.dim()
        )));
    }
    let pops = populations_in(rho.matrix(), basis);
    let mut k = 0;
    let m = basis.reassemble(|_| {
        let p = pops[k];
        k += 1;
        C64::new(p, 0.0)
    });
    DensityOperator::new(m)
}

pub(crate) fn shannon(p: &[f64]) -> f64 {
    p.iter()
        .filter(|&&x| x > ENTROPY_ZERO_CUTOFF)
        .map(|&x| -x * x.ln())
        .sum()
}

pub fn von_neumann_entropy(rho: &DensityOperator) -> f64 {
    shannon(rho.spectrum().eigenvalues())
}

/// Classical relative entropy `Σ p ln(p/q)`; infinite when `p` puts more than
/// `SUPPORT_TOL` mass where `q` vanishes.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    let mut outside = 0.0;
    let mut acc = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        if pi <= ENTROPY_ZERO_CUTOFF {
            continue;
        }
        if qi <= ENTROPY_ZERO_CUTOFF {
            outside += pi;
            continue;
        }
        acc += pi * (pi.ln() - qi.ln());
    }
    if outside > SUPPORT_TOL {
        f64::INFINITY
    } else {
        acc
    }
}

/// `S(ρ‖σ) = tr ρ(ln ρ − ln σ)`, or `f64::INFINITY` when the support of `ρ`
/// is not contained in that of `σ`.
pub fn relative_entropy(rho: &DensityOperator, sigma: &DensityOperator) -> f64 {
    assert_eq!(rho.dim(), sigma.dim(), "relative entropy of mismatched dimensions");
    let (rs, ss) = (rho.spectrum(), sigma.spectrum());
    let mut cross = 0.0;
    let mut outside = 0.0;
    for (i, &p) in rs.eigenvalues().iter().enumerate() {
        if p <= ENTROPY_ZERO_CUTOFF {
            continue;
        }
        for (k, &q) in ss.eigenvalues().iter().enumerate() {
            let overlap = inner(rs.eigenvector(i), ss.eigenvector(k)).norm_sqr();
            if q <= ENTROPY_ZERO_CUTOFF {
                outside += p * overlap;
            } else {
                cross += p * overlap * q.ln();
            }
        }
    }
    if outside > SUPPORT_TOL {
        return f64::INFINITY;
    }
    -von_neumann_entropy(rho) - cross
}

/// Relative entropy of coherence in the eigenbasis of `h`.
pub fn coherence(rho: &DensityOperator, h: &ComplexMatrix) -> Result<f64> {
    let basis = eig_hermitian(h)?;
    Ok(relative_entropy(rho, &dephase(rho, &basis)?))
}

/// `S(ρ^d‖ρ^eq)` with both states diagonal in the eigenbasis of `h`.
/// The Gibbs state has full support, so this is always finite; its log
/// weights are taken exactly rather than through the zero cutoff.
pub fn athermality(rho: &DensityOperator, h: &ComplexMatrix, beta: f64) -> Result<f64> {
    let basis = eig_hermitian(h)?;
    let p = populations_in(rho.matrix(), &basis);
    let ln_q = boltzmann_log_populations(basis.eigenvalues(), beta);
    Ok(p.iter()
        .zip(&ln_q)
        .filter(|(&pi, _)| pi > ENTROPY_ZERO_CUTOFF)
        .map(|(&pi, &lq)| pi * (pi.ln() - lq))
        .sum())
}

/// `ℱ = F + (C + D)/β`.
pub fn generalized_free_energy(rho: &DensityOperator, h: &ComplexMatrix, beta: f64) -> Result<f64> {
    let f = free_energy(h, beta)?;
    Ok(f + (coherence(rho, h)? + athermality(rho, h, beta)?) / beta)
}

/// Thermodynamic state functions of `ρ` relative to `h` at inverse temperature `β`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StateMeasures {
    pub energy: f64,
    pub entropy: f64,
    pub coherence: f64,
    pub athermality: f64,
    pub free_energy: f64,
}

/// One eigendecomposition of `h` shared by all measures. `C` is evaluated as
/// `S(ρ^d) − S(ρ)` here; [`coherence`] takes the relative-entropy route.
pub fn measures(rho: &DensityOperator, h: &ComplexMatrix, beta: f64) -> Result<StateMeasures> {
    let basis = eig_hermitian(h)?;
    let pops = populations_in(rho.matrix(), &basis);
    let entropy = von_neumann_entropy(rho);
    Ok(StateMeasures {
        energy: h.expectation(rho.matrix()),
        entropy,
        coherence: shannon(&pops) - entropy,
        athermality: kl_divergence(&pops, &boltzmann_populations(basis.eigenvalues(), beta)),
        free_energy: free_energy_of_spectrum(basis.eigenvalues(), beta),
    })
}
