//! Exact enumeration of two-point trajectories of a system coupled to a
//! thermal reservoir, with path probabilities built from local eigenbases
//! rather than projective measurements.
//!
//! A path is `(i, m, μ, j, ν, n)`: eigenstate `|s_i⟩` of `ρ₀`, energy level
//! `m` of `H_S(0)`, bath level `μ`, and their counterparts at time `t`.
//! Forward weight:
//! `P = p_i p_μ |⟨e_m|s_i⟩|² |⟨s_j, e_ν|U|s_i, e_μ⟩|² |⟨e_n|s_j⟩|²`.
//! Backward weight swaps the roles and propagates with `U†`.
//!
//! `q` in [`StochasticRecord`] is heat delivered to the reservoir
//! (`βq = Δs_R`), the opposite sign to the dynamics module's `Q`.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{
    commutator_norm, eig_hermitian, inner, kron, partial_trace, pauli, unitary_step, ComplexMatrix,
    SpectralDecomposition, Subsystem, C64,
};
use crate::qubit::{self, DrivenQubitParams};
use crate::state::{boltzmann_populations, free_energy, populations_in, thermal_state, DensityOperator};

/// Probabilities below this are treated as zero: records that need their
/// logarithm are marked excluded.
pub const PROBABILITY_FLOOR: f64 = 1e-14;

type OperatorFn = Arc<dyn Fn(f64) -> ComplexMatrix + Send + Sync>;

/// System protocol `H_S(t)`, reservoir `H_R`, coupling `H_SR` and the total
/// propagator on `system ⊗ reservoir`.
#[derive(Clone)]
pub struct CompositeModel {
    system: OperatorFn,
    bath: ComplexMatrix,
    coupling: ComplexMatrix,
    beta: f64,
    propagator: OperatorFn,
}

impl fmt::Debug for CompositeModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CompositeModel")
            .field("system_dim", &self.system_dim())
            .field("bath_dim", &self.bath_dim())
            .field("beta", &self.beta)
            .finish()
    }
}

impl CompositeModel {
    pub fn new(
        system: impl Fn(f64) -> ComplexMatrix + Send + Sync + 'static,
        bath: ComplexMatrix,
        coupling: ComplexMatrix,
        beta: f64,
        propagator: impl Fn(f64) -> ComplexMatrix + Send + Sync + 'static,
    ) -> Result<Self> {
        let ds = system(0.0).dim();
        let total = ds * bath.dim();
        if coupling.dim() != total || propagator(0.0).dim() != total {
            return Err(Error::InvalidModel(format!(
                "coupling and propagator must act on the {total}-dimensional composite space"
            )));
        }
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(Error::invalid(format!("beta must be positive and finite, got {beta}")));
        }
        if !bath.is_hermitian(1e-10) || !coupling.is_hermitian(1e-10) {
            return Err(Error::InvalidModel("bath and coupling Hamiltonians must be Hermitian".into()));
        }
        Ok(Self {
            system: Arc::new(system),
            bath,
            coupling,
            beta,
            propagator: Arc::new(propagator),
        })
    }

    /// The driven qubit with no reservoir (one-dimensional bath).
    pub fn closed_qubit(p: &DrivenQubitParams) -> Result<Self> {
        p.validate()?;
        let (hp, up) = (*p, *p);
        Self::new(
            move |t| qubit::hamiltonian_at(&hp, t),
            ComplexMatrix::zeros(1),
            ComplexMatrix::zeros(2),
            p.beta,
            move |t| qubit::propagator_at(&up, t),
        )
    }

    pub fn system_dim(&self) -> usize {
        (self.system)(0.0).dim()
    }

    pub fn bath_dim(&self) -> usize {
        self.bath.dim()
    }

    pub fn is_closed(&self) -> bool {
        self.bath.dim() == 1
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn system_hamiltonian(&self, t: f64) -> ComplexMatrix {
        (self.system)(t)
    }

    pub fn bath_hamiltonian(&self) -> &ComplexMatrix {
        &self.bath
    }

    pub fn coupling(&self) -> &ComplexMatrix {
        &self.coupling
    }

    pub fn propagator(&self, t: f64) -> ComplexMatrix {
        (self.propagator)(t)
    }

    pub fn bath_state(&self) -> Result<DensityOperator> {
        thermal_state(&self.bath, self.beta)
    }

    /// `‖[H_S(t) ⊗ 1 + 1 ⊗ H_R, H_SR]‖`, zero under strict energy conservation.
    pub fn energy_conservation_defect(&self, t: f64) -> Result<f64> {
        let free = &kron(&self.system_hamiltonian(t), &ComplexMatrix::identity(self.bath_dim()))
            + &kron(&ComplexMatrix::identity(self.system_dim()), &self.bath);
        commutator_norm(&free, &self.coupling)
    }

    /// `U_t (ρ₀ ⊗ ρ_R) U_t†`
    pub fn evolved_composite_state(&self, rho0: &DensityOperator, t: f64) -> Result<DensityOperator> {
        let joint = DensityOperator::new(kron(rho0.matrix(), self.bath_state()?.matrix()))?;
        joint.evolve(&self.propagator(t))
    }

    /// Reduced system state `tr_R[U_t (ρ₀ ⊗ ρ_R) U_t†]`.
    pub fn evolved_local_state(&self, rho0: &DensityOperator, t: f64) -> Result<DensityOperator> {
        let joint = self.evolved_composite_state(rho0, t)?;
        DensityOperator::new(partial_trace(
            joint.matrix(),
            (self.system_dim(), self.bath_dim()),
            Subsystem::A,
        )?)
    }
}

/// Undriven system qubit exchanging excitations with one resonant bath qubit,
/// `H_SR = J(σ₊⊗σ₋ + σ₋⊗σ₊)`, which commutes with `H_S + H_R`.
pub fn build_exchange_model(j: f64, omega0: f64, beta: f64) -> Result<CompositeModel> {
    if !(j >= 0.0) {
        return Err(Error::invalid(format!("exchange coupling must be non-negative, got {j}")));
    }
    let h = pauli::sigma_z().scale_real(0.5 * omega0);
    let coupling = (&kron(&pauli::sigma_plus(), &pauli::sigma_minus())
        + &kron(&pauli::sigma_minus(), &pauli::sigma_plus()))
        .scale_real(j);
    let total = &(&kron(&h, &ComplexMatrix::identity(2)) + &kron(&ComplexMatrix::identity(2), &h)) + &coupling;
    let hs = h.clone();
    CompositeModel::new(move |_| hs.clone(), h, coupling, beta, move |t| {
        unitary_step(&total, t).expect("Hermitian by construction")
    })
}

/// `|⟨e_m|s_i⟩|²`
pub fn conditional_probability(
    state_basis: &SpectralDecomposition,
    energy_basis: &SpectralDecomposition,
    i: usize,
    m: usize,
) -> f64 {
    inner(energy_basis.eigenvector(m), state_basis.eigenvector(i)).norm_sqr()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct PathIndex {
    pub i: usize,
    pub m: usize,
    pub mu: usize,
    pub j: usize,
    pub nu: usize,
    pub n: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Trajectory {
    pub index: PathIndex,
    /// System energy `ω_m` at time 0.
    pub omega_m0: f64,
    /// System energy `ω_n` at time t.
    pub omega_nt: f64,
    pub e_mu: f64,
    pub e_nu: f64,
    pub p_i: f64,
    pub p_j: f64,
    pub p_mu: f64,
    pub p_nu: f64,
}

/// Stochastic quantities along one path. All entropies are in nats.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StochasticRecord {
    /// `−ln(p_j/p_i)`
    pub ds: f64,
    /// `−ln(p_ν/p_μ)`
    pub ds_r: f64,
    /// Heat to the reservoir, `Δs_R/β`.
    pub q: f64,
    /// `(ω_n − ω_m) + (e_ν − e_μ)`
    pub w: f64,
    /// `ln p_i − ln⟨e_m|ρ₀^d|e_m⟩`
    pub c0: f64,
    /// `ln p_j − ln⟨e_n|ρ_t^d|e_n⟩`
    pub ct: f64,
    /// `ln⟨e_m|ρ₀^d|e_m⟩ − ln⟨e_m|ρ₀^eq|e_m⟩`
    pub d0: f64,
    /// `ln⟨e_n|ρ_t^d|e_n⟩ − ln⟨e_n|ρ_t^eq|e_n⟩`
    pub dt: f64,
    pub forward: f64,
    pub backward: f64,
    /// Some label has probability below [`PROBABILITY_FLOOR`]; the log
    /// fields are not meaningful and the path carries no weight in averages.
    pub excluded: bool,
}

impl StochasticRecord {
    /// `β(w − ΔF) − Δc − Δd`
    pub fn entropy_production(&self, beta: f64, delta_f: f64) -> f64 {
        beta * (self.w - delta_f) - (self.ct - self.c0) - (self.dt - self.d0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Backward,
}

#[derive(Clone, Debug)]
pub struct PathEnsemble {
    entries: Vec<(Trajectory, StochasticRecord)>,
    direction: Direction,
    beta: f64,
    delta_f: f64,
    t: f64,
    degenerate: bool,
}

impl PathEnsemble {
    pub fn entries(&self) -> &[(Trajectory, StochasticRecord)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn delta_free_energy(&self) -> f64 {
        self.delta_f
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    /// True when `ρ₀` or `ρ_t` has a degenerate spectrum, so the `i`/`j`
    /// labels depend on the eigenbasis convention.
    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    pub fn sum_forward(&self) -> f64 {
        self.entries.iter().map(|(_, r)| r.forward).sum()
    }

    pub fn sum_backward(&self) -> f64 {
        self.entries.iter().map(|(_, r)| r.backward).sum()
    }

    /// Average of `f` under this ensemble's own weights, skipping excluded paths.
    pub fn mean(&self, f: impl Fn(&Trajectory, &StochasticRecord) -> f64) -> f64 {
        self.entries
            .iter()
            .filter(|(_, r)| !r.excluded)
            .map(|(tr, r)| {
                let p = match self.direction {
                    Direction::Forward => r.forward,
                    Direction::Backward => r.backward,
                };
                if p == 0.0 {
                    0.0
                } else {
                    p * f(tr, r)
                }
            })
            .sum()
    }

    pub fn mean_work(&self) -> f64 {
        self.mean(|_, r| r.w)
    }

    pub fn work_variance(&self) -> f64 {
        let m = self.mean_work();
        self.mean(|_, r| (r.w - m) * (r.w - m))
    }
}

struct Labels {
    rho0: SpectralDecomposition,
    rho_t: SpectralDecomposition,
    e0: SpectralDecomposition,
    et: SpectralDecomposition,
    bath: SpectralDecomposition,
    p0: Vec<f64>,
    pt: Vec<f64>,
    p_bath: Vec<f64>,
    pd0: Vec<f64>,
    pdt: Vec<f64>,
    peq0: Vec<f64>,
    peqt: Vec<f64>,
}

fn ln_or_nan(x: f64) -> f64 {
    if x < PROBABILITY_FLOOR {
        f64::NAN
    } else {
        x.ln()
    }
}

fn enumerate(
    model: &CompositeModel,
    rho0: &DensityOperator,
    rho_t: &DensityOperator,
    t: f64,
    direction: Direction,
) -> Result<PathEnsemble> {
    let ds = model.system_dim();
    let dr = model.bath_dim();
    if rho0.dim() != ds || rho_t.dim() != ds {
        return Err(Error::invalid(format!("states must have the system dimension {ds}")));
    }
    let beta = model.beta;
    let h0 = model.system_hamiltonian(0.0);
    let ht = model.system_hamiltonian(t);
    let e0 = eig_hermitian(&h0)?;
    let et = eig_hermitian(&ht)?;
    let bath = eig_hermitian(&model.bath)?;
    let labels = Labels {
        p0: rho0.probabilities(),
        pt: rho_t.probabilities(),
        p_bath: boltzmann_populations(bath.eigenvalues(), beta),
        pd0: populations_in(rho0.matrix(), &e0),
        pdt: populations_in(rho_t.matrix(), &et),
        peq0: boltzmann_populations(e0.eigenvalues(), beta),
        peqt: boltzmann_populations(et.eigenvalues(), beta),
        rho0: rho0.spectrum().clone(),
        rho_t: rho_t.spectrum().clone(),
        e0,
        et,
        bath,
    };
    let delta_f = free_energy(&ht, beta)? - free_energy(&h0, beta)?;
    let degenerate = labels.rho0.is_degenerate() || labels.rho_t.is_degenerate();
    if degenerate {
        log::warn!("degenerate state spectrum: trajectory labels depend on the eigenbasis convention");
    }

    let product = |s: &[C64], e: &[C64]| -> Vec<C64> {
        s.iter().flat_map(|a| e.iter().map(move |b| a * b)).collect()
    };
    // joint[(i, μ)][(j, ν)] = |⟨s_j e_ν|U|s_i e_μ⟩|², evaluated with U or U†
    let u = model.propagator(t);
    let mut joint = vec![vec![0.0; ds * dr]; ds * dr];
    match direction {
        Direction::Forward => {
            for i in 0..ds {
                for mu in 0..dr {
                    let out = u.apply(&product(labels.rho0.eigenvector(i), labels.bath.eigenvector(mu)));
                    for j in 0..ds {
                        for nu in 0..dr {
                            let bra = product(labels.rho_t.eigenvector(j), labels.bath.eigenvector(nu));
                            joint[i * dr + mu][j * dr + nu] = inner(&bra, &out).norm_sqr();
                        }
                    }
                }
            }
        }
        Direction::Backward => {
            let ud = u.adjoint();
            for j in 0..ds {
                for nu in 0..dr {
                    let out = ud.apply(&product(labels.rho_t.eigenvector(j), labels.bath.eigenvector(nu)));
                    for i in 0..ds {
                        for mu in 0..dr {
                            let bra = product(labels.rho0.eigenvector(i), labels.bath.eigenvector(mu));
                            joint[i * dr + mu][j * dr + nu] = inner(&bra, &out).norm_sqr();
                        }
                    }
                }
            }
        }
    }

    let total = ds * ds * dr * dr * ds * ds;
    let entries: Vec<(Trajectory, StochasticRecord)> = (0..total)
        .into_par_iter()
        .map(|k| {
            // lexicographic (i, m, μ, j, ν, n)
            let n = k % ds;
            let nu = (k / ds) % dr;
            let j = (k / (ds * dr)) % ds;
            let mu = (k / (ds * dr * ds)) % dr;
            let m = (k / (ds * dr * ds * dr)) % ds;
            let i = k / (ds * dr * ds * dr * ds);
            let l = &labels;
            let index = PathIndex { i, m, mu, j, nu, n };
            let tr = Trajectory {
                index,
                omega_m0: l.e0.eigenvalue(m),
                omega_nt: l.et.eigenvalue(n),
                e_mu: l.bath.eigenvalue(mu),
                e_nu: l.bath.eigenvalue(nu),
                p_i: l.p0[i],
                p_j: l.pt[j],
                p_mu: l.p_bath[mu],
                p_nu: l.p_bath[nu],
            };
            let p_mi = conditional_probability(&l.rho0, &l.e0, i, m);
            let p_nj = conditional_probability(&l.rho_t, &l.et, j, n);
            let jt = joint[i * dr + mu][j * dr + nu];
            let forward = tr.p_i * tr.p_mu * p_mi * jt * p_nj;
            let backward = tr.p_j * tr.p_nu * p_nj * jt * p_mi;

            let (ln_pi, ln_pj) = (ln_or_nan(tr.p_i), ln_or_nan(tr.p_j));
            let (ln_pmu, ln_pnu) = (ln_or_nan(tr.p_mu), ln_or_nan(tr.p_nu));
            let (ln_pd0, ln_pdt) = (ln_or_nan(l.pd0[m]), ln_or_nan(l.pdt[n]));
            let ds_r = ln_pmu - ln_pnu;
            let rec = StochasticRecord {
                ds: ln_pi - ln_pj,
                ds_r,
                q: ds_r / beta,
                w: (tr.omega_nt - tr.omega_m0) + (tr.e_nu - tr.e_mu),
                c0: ln_pi - ln_pd0,
                ct: ln_pj - ln_pdt,
                d0: ln_pd0 - l.peq0[m].ln(),
                dt: ln_pdt - l.peqt[n].ln(),
                forward,
                backward,
                excluded: [ln_pi, ln_pj, ln_pmu, ln_pnu, ln_pd0, ln_pdt].iter().any(|x| x.is_nan()),
            };
            (tr, rec)
        })
        .collect();

    Ok(PathEnsemble {
        entries,
        direction,
        beta,
        delta_f,
        t,
        degenerate,
    })
}

/// All paths with their forward weights, `ρ_t` taken from the evolved composite.
pub fn forward_ensemble(model: &CompositeModel, rho0: &DensityOperator, t: f64) -> Result<PathEnsemble> {
    let rho_t = model.evolved_local_state(rho0, t)?;
    forward_ensemble_with(model, rho0, &rho_t, t)
}

/// As [`forward_ensemble`] with a caller-supplied `ρ_t`, whose cached
/// eigenbasis fixes the `j` labels (relevant only when it is degenerate).
pub fn forward_ensemble_with(
    model: &CompositeModel,
    rho0: &DensityOperator,
    rho_t: &DensityOperator,
    t: f64,
) -> Result<PathEnsemble> {
    enumerate(model, rho0, rho_t, t, Direction::Forward)
}

/// Backward weights `P* = p_j p_ν p(n|j) |⟨s_i, e_μ|U_t†|s_j, e_ν⟩|² p(m|i)`.
/// `ρ₀` is needed for the final-time labels `|s_i⟩` of the reversed path.
pub fn backward_ensemble(
    model: &CompositeModel,
    rho0: &DensityOperator,
    rho_t: &DensityOperator,
    t: f64,
) -> Result<PathEnsemble> {
    enumerate(model, rho0, rho_t, t, Direction::Backward)
}

/// Per path with `P, P*` above [`PROBABILITY_FLOOR`]:
/// `|ln(P/P*) − [β(w − ΔF) − Δc − Δd]|`. Below the floor the two weights come
/// from separate round-off-level joint terms and their ratio means nothing.
pub fn detailed_ft_residuals(fw: &PathEnsemble, bw: &PathEnsemble) -> Result<Vec<f64>> {
    if fw.len() != bw.len() || fw.entries.iter().zip(&bw.entries).any(|(a, b)| a.0.index != b.0.index) {
        return Err(Error::invalid("forward and backward ensembles enumerate different paths"));
    }
    Ok(fw
        .entries
        .iter()
        .zip(&bw.entries)
        .filter(|((_, f), (_, b))| {
            !f.excluded && f.forward >= PROBABILITY_FLOOR && b.backward >= PROBABILITY_FLOOR
        })
        .map(|((_, f), (_, b))| {
            ((f.forward / b.backward).ln() - f.entropy_production(fw.beta, fw.delta_f)).abs()
        })
        .collect())
}

/// `⟨exp(−[β(w − ΔF) − Δc − Δd])⟩` over the forward weights.
pub fn integral_ft(fw: &PathEnsemble) -> f64 {
    fw.mean(|_, r| (-r.entropy_production(fw.beta, fw.delta_f)).exp())
}

/// Jensen's bound `β(W − ΔF) ≥ ΔC + ΔD` evaluated on an ensemble.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct JensenReport {
    /// `β(⟨w⟩ − ΔF)`
    pub lhs: f64,
    /// `⟨Δc⟩ + ⟨Δd⟩ = ΔC + ΔD`
    pub rhs: f64,
    /// Entropy production `lhs − rhs`.
    pub slack: f64,
    pub mean_work: f64,
    /// Maximum extractable work `−ΔF − (ΔC + ΔD)/β`.
    pub w_max: f64,
    /// `ΔC + ΔD < 0`, necessary for `W < ΔF`.
    pub extraction_possible: bool,
}

pub fn jensen_bound_report(fw: &PathEnsemble) -> JensenReport {
    let mean_work = fw.mean_work();
    let lhs = fw.beta * (mean_work - fw.delta_f);
    let rhs = fw.mean(|_, r| (r.ct - r.c0) + (r.dt - r.d0));
    JensenReport {
        lhs,
        rhs,
        slack: lhs - rhs,
        mean_work,
        w_max: -fw.delta_f - rhs / fw.beta,
        extraction_possible: rhs < 0.0,
    }
}
