//! Symmetries of the segment solver and of the single-segment fidelity.

use std::f64::consts::{FRAC_PI_4, PI};

use mmgate_core::design::{design, optimise_amplitude, scale_integrals, DesignOptions, ScanOptions};
use mmgate_core::fidelity::fidelity_analytic;
use mmgate_core::gate::PulseSchedule;
use mmgate_core::model::{Dynamics, GateModel, Numerics};
use mmgate_core::trap::beryllium_example;

fn model() -> GateModel {
    GateModel::new(beryllium_example(), Numerics::default()).unwrap()
}

#[test]
fn amplitudes_scale_with_the_square_root_of_the_target_phase() {
    let model = model();
    let tz = model.secular_period();
    for (dynamics, phases) in [(Dynamics::Static, [0.0, 0.0]), (Dynamics::Micromotion, [0.0, PI])] {
        let gate = model.prepare_gate(1.31 * tz, 9, dynamics).unwrap();
        let mu = 1.4 * model.omega_cm;
        let full = design(&gate, mu, phases, &DesignOptions::default()).unwrap();
        let quarter = DesignOptions {
            target_phase: FRAC_PI_4 / 4.0,
            ..DesignOptions::default()
        };
        let small = design(&gate, mu, phases, &quarter).unwrap();
        assert!(full.feasible && small.feasible);
        for (a, b) in full.schedule.amplitudes.iter().zip(&small.schedule.amplitudes) {
            assert!((a - 2.0 * b).abs() <= 1e-10 * full.max_rabi, "{dynamics:?}: {a} vs 2 × {b}");
        }
    }
}

#[test]
fn negated_pulse_is_an_equivalent_solution() {
    let model = model();
    let tz = model.secular_period();
    let gate = model.prepare_gate(1.31 * tz, 9, Dynamics::Micromotion).unwrap();
    let result = design(&gate, 1.4 * model.omega_cm, [0.0, PI], &DesignOptions::default()).unwrap();
    assert!(result.feasible);
    let plus = gate.integrals(&result.schedule).unwrap();
    let minus = gate.integrals(&result.schedule.scaled(-1.0).unwrap()).unwrap();
    assert!((plus.theta() - minus.theta()).abs() < 1e-12);
    for m in 0..2 {
        for j in 0..2 {
            assert!((plus.alpha[m][j] + minus.alpha[m][j]).norm() < 1e-15);
        }
    }
    let f_plus = fidelity_analytic(&plus, &model.thermal).unwrap().fidelity;
    let f_minus = fidelity_analytic(&minus, &model.thermal).unwrap().fidelity;
    assert!((f_plus - f_minus).abs() < 1e-12);
    assert!(f_plus > 0.9999);
}

/// `F` after shifting both laser phases by `shift`, at the amplitude
/// optimal for unshifted phases.
fn shifted_fidelity(model: &GateModel, dynamics: Dynamics, periods: f64, shifts: &[f64]) -> Vec<f64> {
    let gate = model
        .prepare_gate(periods * model.secular_period(), 1, dynamics)
        .unwrap();
    let mu = 0.95 * model.omega_cm;
    let unit = |d: f64| {
        let schedule = PulseSchedule::constant(gate.duration(), mu, [d, d], 1.0).unwrap();
        gate.integrals(&schedule).unwrap()
    };
    let best = optimise_amplitude(unit(0.0), gate.duration(), &model.thermal, &ScanOptions::default()).unwrap();
    shifts
        .iter()
        .map(|&d| {
            fidelity_analytic(&scale_integrals(&unit(d), best.omega_star), &model.thermal)
                .unwrap()
                .fidelity
        })
        .collect()
}

#[test]
fn global_phase_of_pi_is_an_exact_symmetry() {
    let model = model();
    for dynamics in [Dynamics::Static, Dynamics::Micromotion] {
        let f = shifted_fidelity(&model, dynamics, 2.0, &[0.0, PI]);
        assert!((f[0] - f[1]).abs() < 1e-12, "{dynamics:?}: {f:?}");
    }
}

#[test]
fn global_phase_symmetry_of_the_static_trap_is_restored_for_long_gates() {
    // A general shift only mixes in counter-rotating terms, whose weight
    // falls as the gate covers more secular periods.
    let model = model();
    let shifts = [0.0, 0.3, 1.0, PI / 2.0];
    let spread = |f: Vec<f64>| f.iter().map(|x| (x - f[0]).abs()).fold(0.0, f64::max);
    let short = spread(shifted_fidelity(&model, Dynamics::Static, 2.0, &shifts));
    let long = spread(shifted_fidelity(&model, Dynamics::Static, 20.0, &shifts));
    assert!(long < 1e-4, "spread at 20 T_z: {long:e}");
    assert!(long < 1e-2 * short, "spread {short:e} at 2 T_z, {long:e} at 20 T_z");
}
