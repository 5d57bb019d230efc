//! Truncated Fock-space propagation of the first-order gate Hamiltonian.
//!
//! Every spin branch and mode evolves under
//! `H = −F_μ(s, t) η_μ (v_μ* a + v_μ a†)` independently of the Magnus
//! formulas, and the resulting propagators are thermally averaged into the
//! same fidelity as the analytic formula.

use std::f64::consts::{FRAC_PI_4, PI};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{FidelityMethod, FidelityReport, SpinBranch, ThermalState};
use crate::gate::{lamb_dicke_of, ForceProfile, Ion, PulseSchedule};
use crate::mathieu::ModeLabel;
use crate::model::PreparedGate;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleOptions {
    /// Largest thermal weight left out of the initial Fock states.
    pub thermal_tail: f64,
    /// Largest population tolerated in the highest retained level.
    pub leakage: f64,
    /// Accepted deviation of `‖ψ‖` from one.
    pub unitarity: f64,
    /// Fixed Fock-space dimension; chosen from the displacement when absent.
    pub dimension: Option<usize>,
    pub target_phase: f64,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self {
            thermal_tail: 1e-6,
            leakage: 1e-6,
            unitarity: 1e-8,
            dimension: None,
            target_phase: FRAC_PI_4,
        }
    }
}

/// Grid intervals per RK4 step; the middle node is the stage midpoint.
const NODES_PER_STEP: usize = 2;
/// RK4 steps per r.f. period must be at least this many.
const MIN_STEPS_PER_RF_PERIOD: f64 = 64.0;

/// Thermal weights `n̄ⁿ/(n̄+1)ⁿ⁺¹` up to the first level leaving a tail
/// below `tail`.
fn thermal_weights(nbar: f64, tail: f64) -> Vec<f64> {
    let ratio = nbar / (nbar + 1.0);
    let mut weights = vec![1.0 / (nbar + 1.0)];
    // The tail beyond level n is ratioⁿ⁺¹.
    while ratio.powi(weights.len() as i32) >= tail {
        let last = weights[weights.len() - 1];
        weights.push(last * ratio);
    }
    weights
}

type Coupling = (Complex64, Complex64);

/// `(F η v*, F η v)` at the start, middle and end node of every RK4 step
/// for one branch. Steps never straddle a segment boundary.
fn couplings(
    gate: &PreparedGate,
    schedule: &PulseSchedule,
    profile: &ForceProfile,
    label: ModeLabel,
    branch: SpinBranch,
) -> Vec<[Coupling; 3]> {
    let mode = gate.modes.get(label);
    let eta = lamb_dicke_of(&gate.lamb_dicke, label);
    let (s1, s2) = branch.signs();
    let s2 = s2 * label.branch_sign();
    let grid = &gate.grid;
    // The Hamiltonian fixes the mode function; the conjugation switch of
    // the analytic route deliberately has no say here.
    let at = |i: usize, rabi: f64| {
        let force = rabi
            * (s1 * profile.carrier[Ion::One.index()][i] + s2 * profile.carrier[Ion::Two.index()][i]);
        let w = mode.v[i];
        (w.conj() * (force * eta), w * (force * eta))
    };
    (0..grid.intervals() / NODES_PER_STEP)
        .map(|step| {
            let start = step * NODES_PER_STEP;
            let rabi = schedule.amplitudes[grid.segment_of_node(start)];
            [at(start, rabi), at(start + 1, rabi), at(start + 2, rabi)]
        })
        .collect()
}

/// `dψ/dt = i (c₋ a + c₊ a†) ψ`.
fn derivative(c: Coupling, psi: &[Complex64], roots: &[f64], out: &mut [Complex64]) {
    let n = psi.len();
    let i = Complex64::i();
    for k in 0..n {
        let mut acc = Complex64::default();
        if k + 1 < n {
            acc += c.0 * (roots[k + 1] * psi[k + 1]);
        }
        if k > 0 {
            acc += c.1 * (roots[k] * psi[k - 1]);
        }
        out[k] = i * acc;
    }
}

struct Propagated {
    state: Vec<Complex64>,
    top_population: f64,
}

fn propagate(coupling: &[[Coupling; 3]], dt: f64, initial: usize, dim: usize) -> Propagated {
    let roots: Vec<f64> = (0..dim).map(|k| (k as f64).sqrt()).collect();
    let mut psi = vec![Complex64::default(); dim];
    psi[initial] = Complex64::new(1.0, 0.0);
    let mut tmp = vec![Complex64::default(); dim];
    let mut k1 = vec![Complex64::default(); dim];
    let mut k2 = vec![Complex64::default(); dim];
    let mut k3 = vec![Complex64::default(); dim];
    let mut k4 = vec![Complex64::default(); dim];
    let mut top: f64 = 0.0;
    for &[c0, c1, c2] in coupling {
        derivative(c0, &psi, &roots, &mut k1);
        for k in 0..dim {
            tmp[k] = psi[k] + k1[k] * (dt / 2.0);
        }
        derivative(c1, &tmp, &roots, &mut k2);
        for k in 0..dim {
            tmp[k] = psi[k] + k2[k] * (dt / 2.0);
        }
        derivative(c1, &tmp, &roots, &mut k3);
        for k in 0..dim {
            tmp[k] = psi[k] + k3[k] * dt;
        }
        derivative(c2, &tmp, &roots, &mut k4);
        for k in 0..dim {
            psi[k] += (k1[k] + (k2[k] + k3[k]) * 2.0 + k4[k]) * (dt / 6.0);
        }
        top = top.max(psi[dim - 1].norm_sqr());
    }
    Propagated {
        state: psi,
        top_population: top,
    }
}

/// Largest `|α(t)|` at step boundaries along one branch.
fn max_excursion(coupling: &[[Coupling; 3]], dt: f64) -> f64 {
    let mut alpha = Complex64::default();
    let mut max: f64 = 0.0;
    for [c0, c1, c2] in coupling {
        alpha += (c0.1 + c1.1 * 4.0 + c2.1) * (Complex64::i() * dt / 6.0);
        max = max.max(alpha.norm());
    }
    max
}

/// `Σ_n p_n ⟨ψ_{s,n}|ψ_{s',n}⟩` for every branch pair of one mode.
fn mode_overlaps(
    gate: &PreparedGate,
    schedule: &PulseSchedule,
    profile: &ForceProfile,
    label: ModeLabel,
    nbar: f64,
    options: &OracleOptions,
) -> Result<[[Complex64; 4]; 4]> {
    let dt = gate.grid.step() * NODES_PER_STEP as f64;
    let weights = thermal_weights(nbar, options.thermal_tail);
    let couplings: Vec<_> = SpinBranch::ALL
        .iter()
        .map(|&b| couplings(gate, schedule, profile, label, b))
        .collect();
    let excursion = couplings
        .iter()
        .map(|c| max_excursion(c, dt))
        .fold(0.0, f64::max);
    let highest = weights.len() - 1;
    let mut dim = options.dimension.unwrap_or_else(|| {
        // A displaced |n⟩ spreads over about 2|α|√n + |α|² levels.
        let spread = 2.0 * excursion * ((highest + 1) as f64).sqrt() + excursion * excursion;
        highest + 1 + (10.0 + 4.0 * spread).ceil() as usize
    });
    let adaptive = options.dimension.is_none();
    loop {
        if dim <= highest + 1 {
            return Err(Error::InvalidConfiguration(format!(
                "Fock dimension {dim} does not hold the thermal support up to n = {highest}"
            )));
        }
        let jobs: Vec<(usize, usize)> = (0..4)
            .flat_map(|b| (0..weights.len()).map(move |n| (b, n)))
            .collect();
        let results: Vec<Propagated> = jobs
            .par_iter()
            .map(|&(b, n)| propagate(&couplings[b], dt, n, dim))
            .collect();
        let leakage = results.iter().map(|r| r.top_population).fold(0.0, f64::max);
        if leakage > options.leakage {
            if adaptive && dim < 4096 {
                dim *= 2;
                continue;
            }
            return Err(Error::TruncationLeakage {
                population: leakage,
                level: dim - 1,
            });
        }
        for r in &results {
            let norm = r.state.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > options.unitarity {
                return Err(Error::Numerical(format!(
                    "Fock propagation lost unitarity: |psi| = {norm}"
                )));
            }
        }
        let state = |b: usize, n: usize| &results[b * weights.len() + n].state;
        let mut overlaps = [[Complex64::default(); 4]; 4];
        for (b, row) in overlaps.iter_mut().enumerate() {
            for (bp, entry) in row.iter_mut().enumerate() {
                for (n, p) in weights.iter().enumerate() {
                    let inner: Complex64 = state(b, n)
                        .iter()
                        .zip(state(bp, n))
                        .map(|(x, y)| x.conj() * y)
                        .sum();
                    *entry += inner * *p;
                }
            }
        }
        return Ok(overlaps);
    }
}

/// Fidelity from direct propagation in a truncated two-mode Fock space.
pub fn fidelity_fock_oracle(
    schedule: &PulseSchedule,
    gate: &PreparedGate,
    thermal: &ThermalState,
    options: &OracleOptions,
) -> Result<FidelityReport> {
    let grid = &gate.grid;
    if schedule.segments() != grid.segments()
        || (schedule.duration - grid.duration()).abs() > 1e-12 * grid.duration()
    {
        return Err(Error::InvalidConfiguration(
            "schedule does not match the prepared grid".into(),
        ));
    }
    let dt = grid.step() * NODES_PER_STEP as f64;
    for label in ModeLabel::ALL {
        if let Some(p) = gate.modes.get(label).params {
            let rf_period = 2.0 * PI / p.rf_frequency;
            if dt > rf_period / MIN_STEPS_PER_RF_PERIOD * (1.0 + 1e-9) {
                return Err(Error::GridResolution(format!(
                    "oracle step {dt:e} s exceeds 1/64 of the r.f. period"
                )));
            }
        }
    }
    let profile = ForceProfile::new(schedule.detuning, schedule.phases, &gate.micromotion, grid)?;
    let cm = mode_overlaps(gate, schedule, &profile, ModeLabel::Cm, thermal.nbar[0], options)?;
    let rel = mode_overlaps(gate, schedule, &profile, ModeLabel::Rel, thermal.nbar[1], options)?;

    let mut sum = Complex64::default();
    let mut overlaps = [[0.0; 4]; 4];
    for (i, b) in SpinBranch::ALL.iter().enumerate() {
        for (k, bp) in SpinBranch::ALL.iter().enumerate() {
            let t = cm[i][k] * rel[i][k];
            overlaps[i][k] = t.norm();
            sum += b.target_amplitude(options.target_phase).conj()
                * bp.target_amplitude(options.target_phase)
                * t;
        }
    }
    Ok(FidelityReport {
        fidelity: sum.re / 16.0,
        method: FidelityMethod::FockOracle,
        overlaps,
    })
}
