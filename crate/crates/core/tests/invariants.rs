use std::f64::consts::PI;

use num_complex::Complex64;
use proptest::prelude::*;

use dhflow::checkpoint::{decode, encode};
use dhflow::clifford::{twisted_dirac, VectorSpinorField};
use dhflow::diagnostics::{singularity_budget, spinor_envelope};
use dhflow::flow::{cfl_dt, step_with, FlowState, StepControl};
use dhflow::grid::{make_grid, SpinStructure};
use dhflow::init::{random_spinor, smooth_map};
use dhflow::target::MapField;

fn spin(k: u8) -> SpinStructure {
    SpinStructure::new(k & 1, k >> 1).unwrap()
}

fn state(n: usize, k: u8, amp: f64, seed: u64, eps: f64) -> FlowState {
    let g = make_grid(2.0 * PI, 2.0 * PI, n, n, spin(k)).unwrap();
    let u = smooth_map(g, amp);
    let psi = random_spinor(&u, 2, amp, seed);
    FlowState::new(0.0, eps, u, psi).unwrap()
}

fn shift(s: &FlowState, di: usize, dj: usize) -> FlowState {
    let u = MapField { field: s.u.field.shifted(di, dj), target: s.u.target };
    FlowState::new(s.t, s.eps, u, s.psi.shifted(di, dj)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn checkpoint_round_trip(k in 0u8..4, amp in 0.0f64..1.0, seed in 0u64..1000, eps in 0.01f64..10.0, t in 0.0f64..5.0) {
        let mut s = state(8, k, amp, seed, eps);
        s.t = t;
        let back = decode(&encode(&s)).unwrap();
        prop_assert_eq!(back, s);
    }

    #[test]
    fn twisted_dirac_is_symmetric(k in 0u8..4, amp in 0.0f64..1.2, seed in 0u64..1000) {
        let s = state(16, k, amp, seed, 1.0);
        let phi = random_spinor(&s.u, 3, 1.0, seed + 1);
        let dpsi = twisted_dirac(&s.psi, &s.u).unwrap();
        let dphi = twisted_dirac(&phi, &s.u).unwrap();
        let l = dpsi.field.inner(&phi.field);
        let r = s.psi.field.inner(&dphi.field);
        prop_assert!((l - r).abs() <= 1e-12 * dpsi.field.norm_l2() * phi.field.norm_l2() + 1e-300);
    }

    #[test]
    fn step_decreases_energy_and_respects_envelope(k in 0u8..4, amp in 0.05f64..0.8, seed in 0u64..1000, eps in 0.2f64..6.0) {
        let mut s = state(16, k, amp, seed, eps);
        let sup0 = s.psi.sup_sq();
        let ctl = StepControl::default();
        let mut e = s.energy().e_eps;
        for _ in 0..5 {
            let dt = cfl_dt(&s, &ctl).unwrap();
            let (next, info) = step_with(&s, &ctl, dt).unwrap();
            prop_assert!(info.dissipation >= 0.0);
            prop_assert!(info.energy_after <= e + 1e-12 * e.abs().max(1.0));
            e = info.energy_after;
            s = next;
            prop_assert!(s.u.constraint_residual() < 1e-12);
            prop_assert!(s.psi.tangency_residual(&s.u) < 1e-12);
        }
        prop_assert!(s.psi.sup_sq() <= spinor_envelope(sup0, s.t, eps) * 1.05);
    }

    #[test]
    fn step_commutes_with_lattice_translation(k in 0u8..4, di in 0usize..16, dj in 0usize..16, seed in 0u64..1000) {
        let s = state(16, k, 0.5, seed, 2.0);
        let ctl = StepControl { monotone: false, ..StepControl::default() };
        let dt = cfl_dt(&s, &ctl).unwrap();
        let a = shift(&step_with(&s, &ctl, dt).unwrap().0, di, dj);
        let b = step_with(&shift(&s, di, dj), &ctl, dt).unwrap().0;
        prop_assert!(a.u.field.sub(&b.u.field).max_abs() < 1e-12);
        prop_assert!(a.psi.field.sub(&b.psi.field).max_abs() < 1e-12);
    }

    #[test]
    fn budget_is_floor_of_four_e_over_delta(e0 in 0.0f64..1e4, delta in 1e-3f64..100.0) {
        let b = singularity_budget(e0, delta).unwrap() as f64;
        prop_assert!(b * delta <= 4.0 * e0 * (1.0 + 1e-12));
        prop_assert!((b + 1.0) * delta > 4.0 * e0 * (1.0 - 1e-12));
    }

    #[test]
    fn zero_spinor_stays_zero(k in 0u8..4, amp in 0.0f64..1.0, eps in 0.1f64..5.0) {
        let g = make_grid(2.0 * PI, 2.0 * PI, 16, 16, spin(k)).unwrap();
        let u = smooth_map(g, amp);
        let mut s = FlowState::new(0.0, eps, u, VectorSpinorField::zeros(g, 3)).unwrap();
        let ctl = StepControl::default();
        for _ in 0..3 {
            let dt = cfl_dt(&s, &ctl).unwrap();
            s = step_with(&s, &ctl, dt).unwrap().0;
        }
        prop_assert!(s.psi.field.data.iter().all(|z| *z == Complex64::new(0.0, 0.0)));
    }
}
