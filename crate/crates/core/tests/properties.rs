//! Property tests for the invariants of each layer, on randomly drawn
//! operators, states and model parameters.

use cthermo_core::dynamics::{
    evolve_lindblad_rotating, evolve_lindblad_with, thermal_occupation, LindbladModel, StepPlan, ThermoTimeSeries,
};
use cthermo_core::linalg::{
    eig_hermitian, inner, kron, partial_trace, unitary_step, ComplexMatrix, Subsystem, C64,
};
use cthermo_core::network::{
    backward_ensemble, detailed_ft_residuals, forward_ensemble, integral_ft, jensen_bound_report, CompositeModel,
};
use cthermo_core::qubit::{self, DrivenQubitParams};
use cthermo_core::response::{coherence_correction_eq, quantum_correction, quantum_correction_q0};
use cthermo_core::scenario::{run_scenario, OutputFormat, Scenario, ScenarioConfig};
use cthermo_core::state::{self, dephase, DensityOperator};
use proptest::prelude::*;

fn hermitian(dim: usize, scale: f64) -> impl Strategy<Value = ComplexMatrix> {
    prop::collection::vec(-scale..scale, 2 * dim * dim).prop_map(move |v| {
        let mut m = ComplexMatrix::zeros(dim);
        for i in 0..dim {
            m.set(i, i, C64::new(v[2 * (i * dim + i)], 0.0));
            for j in i + 1..dim {
                let z = C64::new(v[2 * (i * dim + j)], v[2 * (i * dim + j) + 1]);
                m.set(i, j, z);
                m.set(j, i, z.conj());
            }
        }
        m
    })
}

fn psd(dim: usize) -> impl Strategy<Value = ComplexMatrix> {
    prop::collection::vec(-1.0..1.0f64, 2 * dim * dim).prop_map(move |v| {
        let g = ComplexMatrix::from_fn(dim, |i, j| C64::new(v[2 * (i * dim + j)], v[2 * (i * dim + j) + 1]));
        &g * &g.adjoint()
    })
}

fn state(dim: usize) -> impl Strategy<Value = DensityOperator> {
    psd(dim)
        .prop_filter("non-zero trace", |p| p.trace().re > 1e-3)
        .prop_map(|p| {
            let tr = p.trace().re;
            DensityOperator::new(p.scale_real(1.0 / tr)).unwrap()
        })
}

fn params() -> impl Strategy<Value = DrivenQubitParams> {
    (0.5..1.5f64, 0.2..2.0f64, 0.001..0.3f64, 0.1..3.0f64, 0.0..=1.0f64)
        .prop_map(|(w0, w, g, b, a)| DrivenQubitParams::new(w0, w, g, b, a).unwrap())
}

// operator algebra

proptest! {
    #[test]
    fn eig_reconstructs_and_is_orthonormal(h in prop_oneof![hermitian(2, 10.0), hermitian(4, 10.0)]) {
        let s = eig_hermitian(&h).unwrap();
        prop_assert!(s.reconstruct().max_abs_diff(&h) < 1e-12);
        prop_assert!(s.eigenvalues().windows(2).all(|w| w[0] <= w[1]));
        for i in 0..s.dim() {
            for j in 0..s.dim() {
                let ip = inner(s.eigenvector(i), s.eigenvector(j));
                let want = if i == j { 1.0 } else { 0.0 };
                prop_assert!((ip - C64::new(want, 0.0)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn unitary_steps_compose(h in hermitian(3, 2.0), t1 in -2.0..2.0f64, t2 in -2.0..2.0f64) {
        let u1 = unitary_step(&h, t1).unwrap();
        let u12 = unitary_step(&h, t1 + t2).unwrap();
        prop_assert!((&u1 * &unitary_step(&h, t2).unwrap()).max_abs_diff(&u12) < 1e-12);
        prop_assert!((&u1.adjoint() * &u1).max_abs_diff(&ComplexMatrix::identity(3)) < 1e-12);
    }

    #[test]
    fn partial_trace_preserves_trace_and_positivity(m in prop_oneof![psd(4), psd(6)]) {
        let (da, db) = if m.dim() == 4 { (2, 2) } else { (2, 3) };
        for keep in [Subsystem::A, Subsystem::B] {
            let r = partial_trace(&m, (da, db), keep).unwrap();
            prop_assert!((r.trace() - m.trace()).norm() < 1e-12);
            prop_assert!(eig_hermitian(&r).unwrap().eigenvalues()[0] > -1e-12);
        }
    }

    #[test]
    fn partial_trace_inverts_kron(a in state(2), b in state(3)) {
        let ab = kron(a.matrix(), b.matrix());
        prop_assert!(partial_trace(&ab, (2, 3), Subsystem::A).unwrap().max_abs_diff(a.matrix()) < 1e-12);
        prop_assert!(partial_trace(&ab, (2, 3), Subsystem::B).unwrap().max_abs_diff(b.matrix()) < 1e-12);
    }
}

// state measures

proptest! {
    #[test]
    fn coherence_athermality_identity(
        (rho, h) in prop_oneof![(state(2), hermitian(2, 3.0)), (state(4), hermitian(4, 3.0))],
        beta in 0.05..4.0f64,
    ) {
        let c = state::coherence(&rho, &h).unwrap();
        let d = state::athermality(&rho, &h, beta).unwrap();
        prop_assert!(c >= -1e-12 && d >= -1e-12);
        let rhs = beta * (h.expectation(rho.matrix()) - state::free_energy(&h, beta).unwrap())
            - state::von_neumann_entropy(&rho);
        prop_assert!((c + d - rhs).abs() < 1e-10);
    }

    #[test]
    fn coherence_ignores_energy_basis_phases(
        rho in state(3),
        h in hermitian(3, 3.0),
        phases in prop::collection::vec(-3.2..3.2f64, 3),
    ) {
        let basis = eig_hermitian(&h).unwrap();
        let u = (0..3).fold(ComplexMatrix::zeros(3), |u, k| {
            &u + &basis.projector(k).scale(C64::from_polar(1.0, phases[k]))
        });
        let rotated = rho.evolve(&u).unwrap();
        let (c0, c1) = (state::coherence(&rho, &h).unwrap(), state::coherence(&rotated, &h).unwrap());
        prop_assert!((c0 - c1).abs() < 1e-10);
    }

    #[test]
    fn dephasing_is_idempotent(rho in state(3), h in hermitian(3, 3.0)) {
        let basis = eig_hermitian(&h).unwrap();
        let once = dephase(&rho, &basis).unwrap();
        let twice = dephase(&once, &basis).unwrap();
        prop_assert!(once.matrix().max_abs_diff(twice.matrix()) < 1e-14);
        prop_assert!(state::coherence(&once, &h).unwrap().abs() < 1e-12);
    }
}

// driven qubit, closed dynamics

proptest! {
    #[test]
    fn propagator_is_unitary(p in params(), t in 0.0..500.0f64) {
        let u = qubit::propagator_at(&p, t);
        prop_assert!((&u.adjoint() * &u).max_abs_diff(&ComplexMatrix::identity(2)) < 1e-12);
    }

    #[test]
    fn closed_dynamics_saturates_the_bound(p in params(), frac in 0.0..3.0f64) {
        let t = frac * p.rabi_period();
        let h0 = qubit::hamiltonian_at(&p, 0.0);
        let ht = qubit::hamiltonian_at(&p, t);
        let rho0 = qubit::initial_state(&p).unwrap();
        let rho = qubit::evolved_state(&p, t).unwrap();
        let w = ht.expectation(rho.matrix()) - h0.expectation(rho0.matrix());
        prop_assert!((w - qubit::analytic_work(&p, t)).abs() < 1e-12 * (1.0 + p.energy_gap()));
        let df = state::free_energy(&ht, p.beta).unwrap() - state::free_energy(&h0, p.beta).unwrap();
        let m0 = state::measures(&rho0, &h0, p.beta).unwrap();
        let mt = state::measures(&rho, &ht, p.beta).unwrap();
        let dcd = (mt.coherence + mt.athermality) - (m0.coherence + m0.athermality);
        prop_assert!((p.beta * (w - df) - dcd).abs() < 1e-8);
    }
}

#[test]
fn work_vanishes_in_the_adiabatic_limit() {
    for a in [0.0, 0.3, 1.0] {
        let p = DrivenQubitParams::new(0.995, 1e-5 * 0.995, 0.005, 0.5, a).unwrap();
        let n = 20_000;
        let wmax = (0..=n)
            .map(|k| qubit::analytic_work(&p, p.protocol_period() * k as f64 / n as f64).abs())
            .fold(0.0, f64::max);
        assert!(wmax < 1e-6, "a = {a}: {wmax:e}");
    }
}

// Lindblad dynamics

fn lab_run(p: &DrivenQubitParams, gamma: f64, t_end: f64, dt: f64) -> ThermoTimeSeries {
    let m = LindbladModel::driven_qubit(p, gamma, None).unwrap();
    let rho0 = qubit::initial_state(p).unwrap();
    evolve_lindblad_with(&m, &rho0, t_end, StepPlan { dt, record_every: 10 }).unwrap()
}

/// A hundredth of the fastest timescale: drive, Rabi or total decay rate.
fn step_for(p: &DrivenQubitParams, gamma: f64) -> f64 {
    let nbar = thermal_occupation(p.omega0, p.beta).unwrap();
    let fastest = p.omega.max(p.omega0).max(p.rabi_frequency()).max(gamma * (2.0 * nbar + 1.0));
    0.01 / fastest
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn lindblad_keeps_a_valid_state_and_closes_the_first_law(p in params(), gamma in 0.0..0.2f64) {
        let dt = step_for(&p, gamma);
        let s = lab_run(&p, gamma, 20.0, dt);
        prop_assert!(s.max_trace_drift() < 1e-9);
        prop_assert!(s.min_eigenvalue() > -1e-9);
        let emax = s.samples().iter().fold(0.0f64, |m, x| m.max(x.energy.abs()));
        for x in s.samples() {
            let e0 = s.samples()[0].energy;
            prop_assert!((x.work + x.heat - (x.energy - e0)).abs() <= 1e-8 * emax);
        }
    }

    /// The power integral `∫ tr(Ḣρ) dt` is an independent trapezoid estimate
    /// of the work, so its gap to `E − E₀ − Q` shrinks as `dt²`.
    #[test]
    fn power_integral_converges_at_second_order(p in params(), gamma in 0.0..0.2f64) {
        let dt = 2.0 * step_for(&p, gamma);
        let coarse = lab_run(&p, gamma, 10.0, dt).first_law_defect();
        let fine = lab_run(&p, gamma, 10.0, 0.5 * dt).first_law_defect();
        prop_assert!(coarse < 1e-4);
        prop_assert!(fine <= coarse / 3.0 || coarse < 1e-11, "{} -> {}", coarse, fine);
    }

    #[test]
    fn lab_and_rotating_frames_agree(p in params(), gamma in 0.0..0.2f64) {
        let dt = step_for(&p, gamma);
        let lab = lab_run(&p, gamma, 20.0, dt);
        let m = LindbladModel::driven_qubit(&p, gamma, None).unwrap();
        let rho0 = qubit::initial_state(&p).unwrap();
        let rot = evolve_lindblad_rotating(&p, &m, &rho0, 20.0, StepPlan { dt, record_every: 10 }).unwrap();
        prop_assert_eq!(lab.len(), rot.len());
        for (a, b) in lab.samples().iter().zip(rot.samples()) {
            for (x, y) in [
                (a.energy, b.energy),
                (a.heat, b.heat),
                (a.work, b.work),
                (a.coherence, b.coherence),
                (a.athermality, b.athermality),
                (a.entropy, b.entropy),
            ] {
                prop_assert!((x - y).abs() < 1e-8, "t = {}: {} vs {}", a.t, x, y);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn stronger_damping_extracts_less_work(g1 in 1e-4..2e-2f64, factor in 1.05..4.0f64) {
        let p = DrivenQubitParams::new(0.995, 1.0, 0.005, 0.5, 0.3).unwrap();
        let dt = 0.5 * p.rabi_period() * 1e-4;
        let extracted = |gamma: f64| {
            let s = lab_run(&p, gamma, 2.0 * p.extraction_time(), dt);
            -s.work().into_iter().fold(0.0, f64::min)
        };
        let (w0, w1, w2) = (extracted(0.0), extracted(g1), extracted(g1 * factor));
        prop_assert!(w0 >= w1 && w1 >= w2, "{} {} {}", w0, w1, w2);
    }
}

// trajectory network

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn path_ensembles_are_normalised_and_satisfy_the_fts(p in params(), frac in 0.0..2.0f64) {
        let t = frac * p.rabi_period();
        let model = CompositeModel::closed_qubit(&p).unwrap();
        let rho0 = qubit::initial_state(&p).unwrap();
        let fw = forward_ensemble(&model, &rho0, t).unwrap();
        let rho_t = model.evolved_local_state(&rho0, t).unwrap();
        let bw = backward_ensemble(&model, &rho0, &rho_t, t).unwrap();
        prop_assert!((fw.sum_forward() - 1.0).abs() < 1e-12);
        prop_assert!((bw.sum_backward() - 1.0).abs() < 1e-12);
        prop_assert!(detailed_ft_residuals(&fw, &bw).unwrap().iter().all(|r| r.abs() < 1e-10));
        prop_assert!((integral_ft(&fw) - 1.0).abs() < 1e-10);

        // operator-level averages
        let e0 = qubit::hamiltonian_at(&p, 0.0).expectation(rho0.matrix());
        let et = qubit::hamiltonian_at(&p, t).expectation(rho_t.matrix());
        prop_assert!((fw.mean_work() - (et - e0)).abs() < 1e-12);
        let j = jensen_bound_report(&fw);
        prop_assert!(j.slack.abs() < 1e-10);
    }
}

// quantum corrections

proptest! {
    #[test]
    fn skew_correction_is_non_negative(p in params(), frac in 0.0..1.0f64) {
        let q0 = quantum_correction_q0(&p, frac * p.rabi_period(), 32).unwrap();
        prop_assert!(q0 >= -1e-15);
    }

    #[test]
    fn commuting_protocols_have_no_skew_correction(
        levels in prop::collection::vec(-2.0..2.0f64, 3),
        shift in prop::collection::vec(-1.0..1.0f64, 3),
        beta in 0.1..3.0f64,
    ) {
        let h0 = ComplexMatrix::from_real_diagonal(&levels);
        let ht = &h0 + &ComplexMatrix::from_real_diagonal(&shift);
        let rho = state::thermal_state(&ht, beta).unwrap();
        prop_assert!(quantum_correction(&rho, &(&ht - &h0), beta, 32).unwrap().abs() < 1e-12);
    }

    #[test]
    fn incoherent_states_have_no_coherence_correction(p in params(), t in 0.0..100.0f64) {
        prop_assert_eq!(coherence_correction_eq(&p, t, &ComplexMatrix::zeros(2)).unwrap(), 0.0);
    }
}

// scenario output

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn csv_output_round_trips_and_repeats(a in 0.0..=1.0f64, samples in 2usize..30) {
        let text = format!("[model]\na = {a:?}\n[grid]\nsamples = {samples}\n");
        let cfg = ScenarioConfig::from_toml_str(&text, Some(Scenario::Fig2b)).unwrap();
        let data = run_scenario(&cfg).unwrap();
        let csv = data.render(OutputFormat::Csv);
        prop_assert_eq!(&csv, &run_scenario(&cfg).unwrap().render(OutputFormat::Csv));
        let parsed: Vec<f64> = csv.lines().skip(1).flat_map(|l| l.split(',').map(|x| x.parse::<f64>().unwrap())).collect();
        let original: Vec<f64> = data.column("t").unwrap().iter().enumerate()
            .flat_map(|(k, _)| {
                ["t", "betaW", "deltaC", "deltaC_plus_D", "W_LR", "sigma2W"].map(|c| data.column(c).unwrap()[k])
            })
            .collect();
        prop_assert_eq!(parsed, original);
    }
}
