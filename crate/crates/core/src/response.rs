//! Linear-response work: the quantum-corrected fluctuation-dissipation
//! prediction `W_LR = ΔF + βσ²_W/2 − Q₀ + E_Q`, compared with the exact work
//! of the closed driven qubit.
//!
//! `σ²_W` is the work variance of the thermal reference (same protocol,
//! `a = 0`), `Q₀ ≥ 0` the Wigner-Yanase correction and `E_Q` the linear
//! contribution of the initial coherence `χ = ρ₀ − ρ_th`.

use gauss_quad::GaussLegendre;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{matrix_function, ComplexMatrix};
use crate::network::{forward_ensemble, CompositeModel, PathEnsemble};
use crate::qubit::{self, DrivenQubitParams};
use crate::state::{free_energy, thermal_state, DensityOperator};

/// Smallest number of Gauss-Legendre nodes accepted for `Q₀`.
pub const MIN_QUADRATURE_NODES: usize = 16;

/// `I^y(ρ, L) = tr{[ρ^y, L][ρ^{1−y}, L]}`, the raw (non-positive) trace.
/// Zero eigenvalues of `ρ` are clamped at zero before taking powers.
pub fn skew_information(rho: &DensityOperator, l: &ComplexMatrix, y: f64) -> Result<f64> {
    if !(y > 0.0 && y < 1.0) {
        return Err(Error::invalid(format!("skew information needs 0 < y < 1, got {y}")));
    }
    if l.dim() != rho.dim() || !l.is_hermitian(1e-10) {
        return Err(Error::invalid("observable must be Hermitian with the state's dimension"));
    }
    let (a, _) = matrix_function(rho.matrix(), |x| x.powf(y), 0.0)?;
    let (b, _) = matrix_function(rho.matrix(), |x| x.powf(1.0 - y), 0.0)?;
    let ca = &(&a * l) - &(l * &a);
    let cb = &(&b * l) - &(l * &b);
    Ok((&ca * &cb).trace().re)
}

/// `(β/2) ∫₀¹ dy (−I^y(ρ, L))` by Gauss-Legendre quadrature.
pub fn quantum_correction(rho: &DensityOperator, l: &ComplexMatrix, beta: f64, nodes: usize) -> Result<f64> {
    if nodes < MIN_QUADRATURE_NODES {
        return Err(Error::invalid(format!(
            "quadrature needs at least {MIN_QUADRATURE_NODES} nodes, got {nodes}"
        )));
    }
    let rule = GaussLegendre::new(nodes.try_into().expect("nodes > 0"));
    let mut err = None;
    let integral = rule.integrate(0.0, 1.0, |y| match skew_information(rho, l, y) {
        Ok(v) => -v,
        Err(e) => {
            err.get_or_insert(e);
            0.0
        }
    });
    match err {
        Some(e) => Err(e),
        None => Ok(0.5 * beta * integral),
    }
}

/// `Q₀` for the driven qubit at time `t`: the correction evaluated on the
/// instantaneous Gibbs state with `ΔH_t = H_t − H₀`.
pub fn quantum_correction_q0(p: &DrivenQubitParams, t: f64, nodes: usize) -> Result<f64> {
    let ht = qubit::hamiltonian_at(p, t);
    let delta_h = &ht - &qubit::hamiltonian_at(p, 0.0);
    quantum_correction(&thermal_state(&ht, p.beta)?, &delta_h, p.beta, nodes)
}

/// `E_Q = tr[(U_t† H_t U_t − H₀) χ]` for a traceless Hermitian `χ`.
pub fn coherence_correction_eq(p: &DrivenQubitParams, t: f64, chi: &ComplexMatrix) -> Result<f64> {
    if chi.dim() != 2 || !chi.is_hermitian(1e-10) || chi.trace().norm() > 1e-10 {
        return Err(Error::invalid("chi must be a traceless Hermitian qubit operator"));
    }
    let u = qubit::propagator_at(p, t);
    let heisenberg = &(&u.adjoint() * &qubit::hamiltonian_at(p, t)) * &u;
    let delta = &heisenberg - &qubit::hamiltonian_at(p, 0.0);
    Ok((&delta * chi).trace().re)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FdrPoint {
    pub t: f64,
    pub exact_work: f64,
    pub predicted_work: f64,
    pub work_variance: f64,
    pub delta_free_energy: f64,
    pub q0: f64,
    pub e_q: f64,
    /// `|W − W_LR| / |W|`, zero where `W = 0` and the prediction is round-off.
    pub relative_deviation: f64,
}

/// Linear-response prediction at one time. `reference` must be the forward
/// ensemble of the same protocol started from the thermal reference state.
pub fn fdr_work_prediction(
    p: &DrivenQubitParams,
    t: f64,
    reference: &PathEnsemble,
    nodes: usize,
) -> Result<FdrPoint> {
    if (reference.time() - t).abs() > 1e-12 * t.abs().max(1.0) {
        return Err(Error::invalid("reference ensemble was built for a different time"));
    }
    let h0 = qubit::hamiltonian_at(p, 0.0);
    let ht = qubit::hamiltonian_at(p, t);
    let delta_f = free_energy(&ht, p.beta)? - free_energy(&h0, p.beta)?;
    let variance = reference.work_variance();
    let q0 = quantum_correction_q0(p, t, nodes)?;
    let e_q = coherence_correction_eq(p, t, &qubit::coherence_part(p)?)?;
    let predicted = delta_f + 0.5 * p.beta * variance - q0 + e_q;
    let exact = qubit::analytic_work(p, t);
    let gap = (exact - predicted).abs();
    let relative_deviation = match (exact == 0.0, gap <= 1e-24) {
        (true, true) => 0.0,
        (true, false) => f64::INFINITY,
        _ => gap / exact.abs(),
    };
    Ok(FdrPoint {
        t,
        exact_work: exact,
        predicted_work: predicted,
        work_variance: variance,
        delta_free_energy: delta_f,
        q0,
        e_q,
        relative_deviation,
    })
}

/// Prediction vs exact work on a time grid, in grid order.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FdrReport {
    pub points: Vec<FdrPoint>,
}

pub fn fdr_report(p: &DrivenQubitParams, times: &[f64], nodes: usize) -> Result<FdrReport> {
    let reference = p.with_a(0.0);
    let model = CompositeModel::closed_qubit(&reference)?;
    let rho_th = qubit::initial_state(&reference)?;
    let points = times
        .par_iter()
        .map(|&t| fdr_work_prediction(p, t, &forward_ensemble(&model, &rho_th, t)?, nodes))
        .collect::<Result<Vec<_>>>()?;
    Ok(FdrReport { points })
}
