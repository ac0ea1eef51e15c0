//! Spin-1/2 in a circularly rotating field,
//! `H_t = (ω₀/2)σz + (g/2)[cos(ωt)σx + sin(ωt)σy]`,
//! with its exact propagator, the coherent-thermal initial state and the
//! closed-form work it exchanges.
//!
//! Frame conventions: `σz = +1` is the upper level. The doubly rotated frame
//! used by [`rotating_frame_state`] is `Õ = T_t O T_t†` with
//! `T_t = R^z(ωt)† R^H_t`, in which the Hamiltonian is `(E/2)σz` at all times.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{eig_hermitian, pauli, ComplexMatrix, C64};
use crate::state::DensityOperator;

/// Model parameters. Everything else (`δ`, `E`, `Ω`, `θ`, periods) is derived
/// on demand so it can never go stale.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DrivenQubitParams {
    /// Level splitting ω₀.
    pub omega0: f64,
    /// Drive angular frequency ω.
    pub omega: f64,
    /// Drive amplitude g.
    pub g: f64,
    /// Inverse temperature β of the initial populations (and of the bath).
    pub beta: f64,
    /// Initial coherence, 0 (thermal) to 1 (pure).
    pub a: f64,
}

impl DrivenQubitParams {
    pub fn new(omega0: f64, omega: f64, g: f64, beta: f64, a: f64) -> Result<Self> {
        let p = Self { omega0, omega, g, beta, a };
        p.validate()?;
        Ok(p)
    }

    /// ω = 1, g = 0.005, β = 0.5, δ = −0.005.
    pub fn figure2(a: f64) -> Self {
        Self {
            omega0: 0.995,
            omega: 1.0,
            g: 0.005,
            beta: 0.5,
            a,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.omega0, self.omega, self.g, self.beta, self.a];
        if all.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("driven qubit parameters must be finite"));
        }
        if !(self.omega > 0.0) {
            return Err(Error::invalid(format!("omega must be positive, got {}", self.omega)));
        }
        if self.g < 0.0 {
            return Err(Error::invalid(format!("g must be non-negative, got {}", self.g)));
        }
        if self.beta < 0.0 {
            return Err(Error::invalid(format!("beta must be non-negative, got {}", self.beta)));
        }
        if !(0.0..=1.0).contains(&self.a) {
            return Err(Error::invalid(format!("a must lie in [0, 1], got {}", self.a)));
        }
        Ok(())
    }

    pub fn with_omega(self, omega: f64) -> Self {
        Self { omega, ..self }
    }

    pub fn with_g(self, g: f64) -> Self {
        Self { g, ..self }
    }

    pub fn with_a(self, a: f64) -> Self {
        Self { a, ..self }
    }

    pub fn detuning(&self) -> f64 {
        self.omega0 - self.omega
    }

    /// `E = √(g² + ω₀²)`
    pub fn energy_gap(&self) -> f64 {
        self.g.hypot(self.omega0)
    }

    /// `Ω = √(g² + δ²)`
    pub fn rabi_frequency(&self) -> f64 {
        self.g.hypot(self.detuning())
    }

    /// `θ = arctan(g/ω₀)`
    pub fn tilt_angle(&self) -> f64 {
        self.g.atan2(self.omega0)
    }

    pub fn protocol_period(&self) -> f64 {
        2.0 * PI / self.omega
    }

    pub fn rabi_period(&self) -> f64 {
        2.0 * PI / self.rabi_frequency()
    }

    /// Half the Rabi period, where closed-dynamics work extraction peaks.
    pub fn extraction_time(&self) -> f64 {
        PI / self.rabi_frequency()
    }

    fn tanh_half(&self) -> f64 {
        (0.5 * self.beta * self.energy_gap()).tanh()
    }

    fn sech_half(&self) -> f64 {
        1.0 / (0.5 * self.beta * self.energy_gap()).cosh()
    }

    /// `sin(Ωt/2)/Ω`, continuous at Ω = 0.
    fn reduced_sine(&self, t: f64) -> f64 {
        let om = self.rabi_frequency();
        if om * t.abs() < 1e-8 {
            0.5 * t
        } else {
            (0.5 * om * t).sin() / om
        }
    }
}

fn c(x: f64) -> C64 {
    C64::new(x, 0.0)
}

pub fn hamiltonian_at(p: &DrivenQubitParams, t: f64) -> ComplexMatrix {
    let phase = p.omega * t;
    pauli::bloch_operator(0.5 * p.g * phase.cos(), 0.5 * p.g * phase.sin(), 0.5 * p.omega0)
}

/// `∂_t H_t`
pub fn hamiltonian_derivative(p: &DrivenQubitParams, t: f64) -> ComplexMatrix {
    let phase = p.omega * t;
    let k = 0.5 * p.g * p.omega;
    pauli::bloch_operator(-k * phase.sin(), k * phase.cos(), 0.0)
}

/// `U_t = exp(−iωtσz/2) exp(−i(δσz + gσx)t/2)`
pub fn propagator_at(p: &DrivenQubitParams, t: f64) -> ComplexMatrix {
    let half = 0.5 * p.rabi_frequency() * t;
    let s = p.reduced_sine(t);
    let (d, g) = (p.detuning(), p.g);
    // cos(Ωt/2) − i (sin(Ωt/2)/Ω)(δσz + gσx)
    let inner = ComplexMatrix::from_row_major(
        2,
        vec![
            C64::new(half.cos(), -s * d),
            C64::new(0.0, -s * g),
            C64::new(0.0, -s * g),
            C64::new(half.cos(), s * d),
        ],
    )
    .unwrap();
    let phase = 0.5 * p.omega * t;
    let outer = ComplexMatrix::from_row_major(
        2,
        vec![C64::from_polar(1.0, -phase), c(0.0), c(0.0), C64::from_polar(1.0, phase)],
    )
    .unwrap();
    &outer * &inner
}

/// `R^H_t`, mapping `H_t` to `(E/2)σz`: row 0 is the upper level.
///
/// This keeps the textbook form (identity at g = 0). Code that needs
/// ground-first ordering uses `eig_hermitian(hamiltonian_at(..))` instead.
pub fn energy_basis_rotation(p: &DrivenQubitParams, t: f64) -> ComplexMatrix {
    let half = 0.5 * p.tilt_angle();
    let (cs, sn) = (half.cos(), half.sin());
    let phase = p.omega * t;
    ComplexMatrix::from_row_major(
        2,
        vec![
            c(cs),
            C64::from_polar(sn, -phase),
            C64::from_polar(-sn, phase),
            c(cs),
        ],
    )
    .unwrap()
}

/// `T_t = R^z(ωt)† R^H_t` with `R^z(φ) = exp(−iφσz/2)`.
pub fn frame_transform(p: &DrivenQubitParams, t: f64) -> ComplexMatrix {
    let phase = 0.5 * p.omega * t;
    let rz_dag = ComplexMatrix::from_row_major(
        2,
        vec![C64::from_polar(1.0, phase), c(0.0), c(0.0), C64::from_polar(1.0, -phase)],
    )
    .unwrap();
    &rz_dag * &energy_basis_rotation(p, t)
}

/// Operator that is `tanh`/`sech`-weighted into the state, expressed in the
/// doubly rotated frame and pulled back to the lab frame.
fn lab_from_frame(p: &DrivenQubitParams, t: f64, frame_op: &ComplexMatrix) -> ComplexMatrix {
    let tr = frame_transform(p, t);
    &(&tr.adjoint() * frame_op) * &tr
}

/// `ρ₀ = ½(1 − tanh(βE/2)σ'_z + a sech(βE/2)σ'_x)` with `σ' = R^H_0† σ R^H_0`.
///
/// Populations in the `H₀` eigenbasis are thermal; the coherence between them
/// is `a√(p_g(1−p_g))` and real.
pub fn initial_state(p: &DrivenQubitParams) -> Result<DensityOperator> {
    p.validate()?;
    let frame = pauli::bloch_operator(p.a * p.sech_half(), 0.0, -p.tanh_half());
    let m = (&ComplexMatrix::identity(2) + &frame).scale_real(0.5);
    DensityOperator::new(lab_from_frame(p, 0.0, &m))
}

/// The incoherent part `ρ_th` of the initial state (same populations, a = 0).
pub fn thermal_reference_state(p: &DrivenQubitParams) -> Result<DensityOperator> {
    initial_state(&p.with_a(0.0))
}

/// `χ = ρ₀ − ρ_th`, traceless and off-diagonal in the `H₀` eigenbasis.
pub fn coherence_part(p: &DrivenQubitParams) -> Result<ComplexMatrix> {
    Ok(initial_state(p)?.matrix() - thermal_reference_state(p)?.matrix())
}

/// `ρ_t = U_t ρ₀ U_t†` from the exact propagator.
pub fn evolved_state(p: &DrivenQubitParams, t: f64) -> Result<DensityOperator> {
    initial_state(p)?.evolve(&propagator_at(p, t))
}

/// `μ_t = (gω/(EΩ)) sin(Ωt/2)`
pub fn mu(p: &DrivenQubitParams, t: f64) -> f64 {
    p.g * p.omega / p.energy_gap() * p.reduced_sine(t)
}

/// `ν_t = −((E² + Ω² − ω²)/(2EΩ)) sin(Ωt/2)`
pub fn nu(p: &DrivenQubitParams, t: f64) -> f64 {
    let e = p.energy_gap();
    -(e * e - p.omega * p.omega0) / e * p.reduced_sine(t)
}

/// `N_t = μ_t σz + ν_t σx + cos(Ωt/2) σy`, a unit Bloch operator.
///
/// In the frame, evolution is a rotation by `Ωt` about
/// `n = (gω, 0, E² − ωω₀)/(EΩ)`; `N_t` collects the parts of that rotation
/// that act on `σz` and `σx`.
pub fn n_operator(p: &DrivenQubitParams, t: f64) -> ComplexMatrix {
    let half = 0.5 * p.rabi_frequency() * t;
    pauli::bloch_operator(nu(p, t), half.cos(), mu(p, t))
}

/// `ρ̃_t = ½[1 − tanh(βE/2) m^z_t + a sech(βE/2) m^x_t]` with
/// `m^z = σz − 2μN` and `m^x = σx − 2νN`.
pub fn rotating_frame_state(p: &DrivenQubitParams, t: f64) -> Result<DensityOperator> {
    p.validate()?;
    let n = n_operator(p, t);
    let (m, v) = (mu(p, t), nu(p, t));
    let mz = &pauli::sigma_z() - &n.scale_real(2.0 * m);
    let mx = &pauli::sigma_x() - &n.scale_real(2.0 * v);
    let op = &mz.scale_real(-p.tanh_half()) + &mx.scale_real(p.a * p.sech_half());
    DensityOperator::new((&ComplexMatrix::identity(2) + &op).scale_real(0.5))
}

/// Mean work done on the qubit up to time `t`,
/// `W_t = E (tanh(βE/2) μ_t² − a sech(βE/2) μ_t ν_t)`.
///
/// Expanded, this is `E·(tanh(βE/2) + a (E²+Ω²−ω²)/(2gω) sech(βE/2))
/// (g²ω²/(E²Ω²)) sin²(Ωt/2)`; the leading `E` makes it an energy. Vanishes
/// identically at g = 0.
pub fn analytic_work(p: &DrivenQubitParams, t: f64) -> f64 {
    if p.g == 0.0 {
        return 0.0;
    }
    let (m, v) = (mu(p, t), nu(p, t));
    p.energy_gap() * (p.tanh_half() * m * m - p.a * p.sech_half() * m * v)
}

/// `W` at `sin²(Ωt/2) = 1`, i.e. at `t = π/Ω`.
pub fn work_amplitude(p: &DrivenQubitParams) -> f64 {
    if p.g == 0.0 {
        return 0.0;
    }
    let e = p.energy_gap();
    let om = p.rabi_frequency();
    let m = p.g * p.omega / (e * om);
    let v = -(e * e - p.omega * p.omega0) / (e * om);
    e * (p.tanh_half() * m * m - p.a * p.sech_half() * m * v)
}

/// `sinh(βE/2) < a (ω² − (E² + Ω²))/(2gω)`: whether the closed protocol ever
/// extracts work (`min_t W_t < 0`).
pub fn extraction_condition(p: &DrivenQubitParams) -> bool {
    if p.g == 0.0 {
        return false;
    }
    let e = p.energy_gap();
    let om = p.rabi_frequency();
    let w = p.omega;
    let rhs = (w * w - (e * e + om * om)) / (2.0 * p.g * w) * p.a;
    (0.5 * p.beta * e).sinh() < rhs
}

/// Drive frequency that maximises extracted work at fixed `g`,
/// `ω_opt = E²(ω₀ + g e^{−βE/2}) / (E² − 2g(ω₀ sinh(βE/2) + g))`.
///
/// The formula does not involve `a`: it is the optimum of the maximally
/// coherent (a = 1) initial state, for which the state after half a Rabi
/// period is the ground state of `H_t`.
pub fn optimal_frequency(p: &DrivenQubitParams) -> Result<f64> {
    let e = p.energy_gap();
    let x = 0.5 * p.beta * e;
    let denom = e * e - 2.0 * p.g * (p.omega0 * x.sinh() + p.g);
    if !(denom > 0.0) {
        return Err(Error::OutOfRegime(format!(
            "optimal frequency denominator is {denom:e} (drive too strong for this temperature)"
        )));
    }
    Ok(e * e * (p.omega0 + p.g * (-x).exp()) / denom)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AveragingWindow {
    /// One Rabi period `2π/Ω`.
    Rabi,
    /// One drive period `2π/ω`.
    Protocol,
}

/// Time-averaged work. Over a Rabi period this is half the peak work; over a
/// drive period it is `(1 − sinc(2πΩ/ω))` times that.
pub fn averaged_work(p: &DrivenQubitParams, window: AveragingWindow) -> f64 {
    let rabi = 0.5 * work_amplitude(p);
    match window {
        AveragingWindow::Rabi => rabi,
        AveragingWindow::Protocol => {
            let x = 2.0 * PI * p.rabi_frequency() / p.omega;
            let sinc = if x == 0.0 { 1.0 } else { x.sin() / x };
            (1.0 - sinc) * rabi
        }
    }
}

/// `max_r |<e_m|∂_r H_r|e_n>| / (e_m − e_n)²` over `samples` equally spaced
/// points `r ∈ [0, 1]`, for an arbitrary Hermitian family `H_r` and its
/// derivative.
pub fn adiabatic_time_of(
    h: impl Fn(f64) -> ComplexMatrix,
    dh: impl Fn(f64) -> ComplexMatrix,
    samples: usize,
) -> Result<f64> {
    if samples < 2 {
        return Err(Error::invalid("adiabatic time needs at least two samples"));
    }
    let mut worst: f64 = 0.0;
    for k in 0..samples {
        let r = k as f64 / (samples - 1) as f64;
        let eig = eig_hermitian(&h(r))?;
        let d = dh(r);
        for m in 0..eig.dim() {
            for n in 0..eig.dim() {
                if m == n {
                    continue;
                }
                let gap = eig.eigenvalue(m) - eig.eigenvalue(n);
                if gap.abs() < 1e-12 {
                    return Err(Error::InvalidModel(format!("degenerate spectrum at r = {r}")));
                }
                let elem = d.matrix_element(eig.eigenvector(m), eig.eigenvector(n)).norm();
                worst = worst.max(elem / (gap * gap));
            }
        }
    }
    Ok(worst)
}

/// Adiabatic time of the driven qubit with `r = t/τ_P`, so
/// `∂_r H = τ_P ∂_t H`. For this model it equals `πg/E²` at every `r`.
pub fn adiabatic_time(p: &DrivenQubitParams, samples: usize) -> Result<f64> {
    let tau_p = p.protocol_period();
    adiabatic_time_of(
        |r| hamiltonian_at(p, r * tau_p),
        |r| hamiltonian_derivative(p, r * tau_p).scale_real(tau_p),
        samples,
    )
}

/// `C(ρ_t) − C(ρ₀)` in the instantaneous energy basis, from the closed-form
/// frame state (the frame Hamiltonian is diagonal, so only populations of
/// `ρ̃` matter).
pub fn coherence_change(p: &DrivenQubitParams, t: f64) -> Result<f64> {
    let coh = |rho: &DensityOperator| {
        let m = rho.matrix();
        crate::state::shannon(&[m.get(0, 0).re, m.get(1, 1).re]) - crate::state::von_neumann_entropy(rho)
    };
    Ok(coh(&rotating_frame_state(p, t)?) - coh(&rotating_frame_state(p, 0.0)?))
}
