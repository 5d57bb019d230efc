//! Thermally averaged CPF gate fidelity.
//!
//! For an initial product state `(|0⟩+|1⟩)⊗(|0⟩+|1⟩)/2` and phonons in
//! thermal states, `F = tr[ρ O†O]` with `O = ⟨Ψ₀|U_CPF† U(τ)|Ψ₀⟩`, where
//! `U_CPF = exp(iπσ₁σ₂/4)`.

pub mod fock;

use std::f64::consts::FRAC_PI_4;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::design::{prefix_end, scale_integrals, single_segment_scan, ScanOptions, ScanPoint};
use crate::gate::GateIntegrals;
use crate::mathieu::ModeLabel;
use crate::model::{Dynamics, GateModel};
use crate::{Error, Result};

pub use fock::{fidelity_fock_oracle, OracleOptions};

/// Slack allowed on `0 ≤ F ≤ 1`.
pub const FIDELITY_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermalState {
    /// Mean occupations `n̄_cm, n̄_r`.
    pub nbar: [f64; 2],
    /// `k_B T / ħω_cm` when derived from a temperature.
    pub temperature_ratio: Option<f64>,
}

impl ThermalState {
    pub fn new(nbar_cm: f64, nbar_rel: f64) -> Result<Self> {
        for n in [nbar_cm, nbar_rel] {
            if !(n.is_finite() && n >= 0.0) {
                return Err(Error::InvalidConfiguration(format!(
                    "mean occupation must be non-negative, got {n}"
                )));
            }
        }
        Ok(Self {
            nbar: [nbar_cm, nbar_rel],
            temperature_ratio: None,
        })
    }

    pub fn ground() -> Self {
        Self {
            nbar: [0.0, 0.0],
            temperature_ratio: None,
        }
    }

    /// Bose occupations at `k_B T = ratio · ħω_cm`.
    pub fn from_temperature(ratio: f64, omega_cm: f64, omega_rel: f64) -> Result<Self> {
        if !(ratio.is_finite() && ratio >= 0.0) {
            return Err(Error::InvalidConfiguration(format!(
                "temperature ratio must be non-negative, got {ratio}"
            )));
        }
        let bose = |omega: f64| {
            if ratio == 0.0 {
                0.0
            } else {
                1.0 / (omega / (ratio * omega_cm)).exp_m1()
            }
        };
        Ok(Self {
            nbar: [bose(omega_cm), bose(omega_rel)],
            temperature_ratio: Some(ratio),
        })
    }

    pub fn occupation(&self, label: ModeLabel) -> f64 {
        self.nbar[label.index()]
    }
}

/// Eigenvalues `(s₁, s₂)` of `σ₁^z, σ₂^z`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpinBranch {
    pub s1: i8,
    pub s2: i8,
}

impl SpinBranch {
    pub const ALL: [SpinBranch; 4] = [
        SpinBranch { s1: 1, s2: 1 },
        SpinBranch { s1: 1, s2: -1 },
        SpinBranch { s1: -1, s2: 1 },
        SpinBranch { s1: -1, s2: -1 },
    ];

    pub fn signs(self) -> (f64, f64) {
        (self.s1 as f64, self.s2 as f64)
    }

    pub fn parity(self) -> f64 {
        (self.s1 * self.s2) as f64
    }

    /// Amplitude `e^{−iθ₀ s₁s₂}` of this branch in `U_CPF†`.
    pub fn target_amplitude(self, target_phase: f64) -> Complex64 {
        Complex64::from_polar(1.0, -target_phase * self.parity())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FidelityMethod {
    Analytic,
    FockOracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FidelityReport {
    pub fidelity: f64,
    pub method: FidelityMethod,
    /// `|⟨U_s† U_s'⟩|` over the branches in [`SpinBranch::ALL`] order.
    pub overlaps: [[f64; 4]; 4],
}

impl FidelityReport {
    pub fn infidelity(&self) -> f64 {
        1.0 - self.fidelity
    }
}

/// Fidelity with respect to `exp(iπσ₁σ₂/4)`.
pub fn fidelity_analytic(integrals: &GateIntegrals, thermal: &ThermalState) -> Result<FidelityReport> {
    fidelity_analytic_with_target(integrals, thermal, FRAC_PI_4)
}

/// Fidelity with respect to `exp(iθ₀σ₁σ₂)`.
pub fn fidelity_analytic_with_target(
    integrals: &GateIntegrals,
    thermal: &ThermalState,
    target_phase: f64,
) -> Result<FidelityReport> {
    let theta = integrals.theta();
    if !theta.is_finite() || integrals.alpha.iter().flatten().any(|z| !z.is_finite()) {
        return Err(Error::Domain("non-finite gate integrals".into()));
    }
    let displacement = |b: SpinBranch| {
        let (s1, s2) = b.signs();
        ModeLabel::ALL.map(|m| integrals.branch_displacement(m, s1, s2))
    };
    let mut sum = Complex64::default();
    let mut overlaps = [[0.0; 4]; 4];
    for (i, &b) in SpinBranch::ALL.iter().enumerate() {
        let a = displacement(b);
        for (k, &bp) in SpinBranch::ALL.iter().enumerate() {
            let ap = displacement(bp);
            let mut term = Complex64::from_polar(1.0, theta * (bp.parity() - b.parity()));
            for m in ModeLabel::ALL {
                let (x, y) = (a[m.index()], ap[m.index()]);
                let gaussian = -(y - x).norm_sqr() * (thermal.occupation(m) + 0.5);
                term *= Complex64::from_polar(gaussian.exp(), -(x * y.conj()).im);
            }
            overlaps[i][k] = term.norm();
            sum += b.target_amplitude(target_phase).conj() * bp.target_amplitude(target_phase) * term;
        }
    }
    let value = sum / 16.0;
    if value.im.abs() > 1e-10 {
        return Err(Error::Numerical(format!(
            "fidelity has an imaginary part {:e}",
            value.im
        )));
    }
    Ok(FidelityReport {
        fidelity: value.re,
        method: FidelityMethod::Analytic,
        overlaps,
    })
}

/// Pipeline variant of a single-segment fidelity curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScanVariant {
    /// Amplitude optimised per duration with micromotion.
    Micromotion,
    /// Amplitude optimised per duration in the static trap.
    Static,
    /// Static trap at the single amplitude optimal over the whole curve.
    StaticFixed,
    /// The per-duration static optimum evaluated with micromotion.
    StaticDesignUnderMicromotion,
}

impl ScanVariant {
    pub const ALL: [ScanVariant; 4] = [
        ScanVariant::Micromotion,
        ScanVariant::Static,
        ScanVariant::StaticFixed,
        ScanVariant::StaticDesignUnderMicromotion,
    ];

    pub fn label(self) -> &'static str {
        match self {
            ScanVariant::Micromotion => "micromotion",
            ScanVariant::Static => "static",
            ScanVariant::StaticFixed => "static-fixed",
            ScanVariant::StaticDesignUnderMicromotion => "static-design-under-micromotion",
        }
    }
}

/// One row of a fidelity curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    /// Duration after snapping to the quadrature grid (s).
    pub duration: f64,
    pub fidelity: f64,
    /// Rabi frequency applied (rad/s).
    pub omega_star: f64,
    pub method: FidelityMethod,
}

impl CurvePoint {
    pub fn infidelity(&self) -> f64 {
        1.0 - self.fidelity
    }
}

/// Everything computed at one duration of a single-segment scan. Entries
/// are present for the variants that need them.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanRow {
    pub micromotion: Option<Result<CurvePoint>>,
    /// Static optimum with its unit-amplitude integrals.
    pub static_point: Option<Result<ScanPoint>>,
    /// The static optimum evaluated with micromotion.
    pub cross: Option<Result<CurvePoint>>,
}

fn curve_point(p: &ScanPoint, fidelity: f64, omega: f64) -> CurvePoint {
    CurvePoint {
        duration: p.duration,
        fidelity,
        omega_star: omega,
        method: FidelityMethod::Analytic,
    }
}

/// Per-duration results of a single-segment scan, in input order. Each
/// dynamics is integrated once over a grid covering the longest duration.
pub fn scan_rows(
    model: &GateModel,
    detuning: f64,
    phases: [f64; 2],
    durations: &[f64],
    variants: &[ScanVariant],
    thermal: &ThermalState,
    options: &ScanOptions,
) -> Result<Vec<ScanRow>> {
    let longest = durations.iter().copied().fold(0.0, f64::max);
    if durations.is_empty() || !(longest > 0.0 && longest.is_finite()) {
        return Err(Error::InvalidConfiguration("the duration grid is empty".into()));
    }
    let span = longest + 4.0 * model.max_step();
    let needs = |v: &[ScanVariant]| variants.iter().any(|x| v.contains(x));
    let with_micromotion = needs(&[ScanVariant::Micromotion]);
    let with_cross = needs(&[ScanVariant::StaticDesignUnderMicromotion]);
    let with_static = with_cross || needs(&[ScanVariant::Static, ScanVariant::StaticFixed]);

    let micromotion_gate = if with_micromotion || with_cross {
        Some(model.prepare_gate(span, 1, Dynamics::Micromotion)?)
    } else {
        None
    };
    let micromotion: Vec<Option<Result<CurvePoint>>> = match (&micromotion_gate, with_micromotion) {
        (Some(gate), true) => single_segment_scan(gate, detuning, phases, durations, thermal, options)?
            .into_iter()
            .map(|p| Some(p.map(|p| curve_point(&p, p.fidelity, p.omega_star))))
            .collect(),
        _ => vec![None; durations.len()],
    };
    let statics: Vec<Option<Result<ScanPoint>>> = if with_static {
        let gate = model.prepare_gate(span, 1, Dynamics::Static)?;
        single_segment_scan(&gate, detuning, phases, durations, thermal, options)?
            .into_iter()
            .map(Some)
            .collect()
    } else {
        vec![None; durations.len()]
    };
    let cross: Vec<Option<Result<CurvePoint>>> = match (&micromotion_gate, with_cross) {
        (Some(gate), true) => {
            let mut ends: Vec<usize> = statics
                .iter()
                .filter_map(|p| p.as_ref()?.as_ref().ok())
                .map(|p| prefix_end(gate, p.duration))
                .collect::<Result<_>>()?;
            ends.sort_unstable();
            ends.dedup();
            let unit = gate.prefix_integrals(detuning, phases, &ends)?;
            statics
                .iter()
                .map(|p| {
                    let p = p.clone().expect("static points were computed")?;
                    let end = prefix_end(gate, p.duration)?;
                    let k = ends.binary_search(&end).expect("every end was integrated");
                    let mm = unit[k].clone()?;
                    let f = fidelity_analytic_with_target(
                        &scale_integrals(&mm, p.omega_star),
                        thermal,
                        options.target_phase,
                    )?;
                    Ok(curve_point(&p, f.fidelity, p.omega_star))
                })
                .map(Some)
                .collect()
        }
        _ => vec![None; durations.len()],
    };
    Ok(micromotion
        .into_iter()
        .zip(statics)
        .zip(cross)
        .map(|((micromotion, static_point), cross)| ScanRow {
            micromotion,
            static_point,
            cross,
        })
        .collect())
}

/// Fidelity curves for each requested variant from the rows of
/// [`scan_rows`]. The fixed-amplitude static curve uses the best static
/// point among `rows`.
pub fn assemble_curves(
    rows: &[ScanRow],
    variants: &[ScanVariant],
    thermal: &ThermalState,
    options: &ScanOptions,
) -> Result<Vec<(ScanVariant, Vec<Result<CurvePoint>>)>> {
    let missing = || Error::InvalidConfiguration("the scan rows lack a requested variant".into());
    let statics = || -> Result<Vec<Result<ScanPoint>>> {
        rows.iter().map(|r| r.static_point.clone().ok_or_else(missing)).collect()
    };
    let mut out = Vec::with_capacity(variants.len());
    for &variant in variants {
        let curve: Vec<Result<CurvePoint>> = match variant {
            ScanVariant::Micromotion => rows
                .iter()
                .map(|r| r.micromotion.clone().ok_or_else(missing))
                .collect::<Result<_>>()?,
            ScanVariant::StaticDesignUnderMicromotion => rows
                .iter()
                .map(|r| r.cross.clone().ok_or_else(missing))
                .collect::<Result<_>>()?,
            ScanVariant::Static => statics()?
                .into_iter()
                .map(|p| p.map(|p| curve_point(&p, p.fidelity, p.omega_star)))
                .collect(),
            ScanVariant::StaticFixed => {
                let scan = statics()?;
                let best = scan
                    .iter()
                    .filter_map(|p| p.as_ref().ok())
                    .max_by(|a, b| a.fidelity.total_cmp(&b.fidelity))
                    .ok_or_else(|| Error::Numerical("the static scan has no valid point".into()))?;
                let omega = best.omega_star;
                scan.into_iter()
                    .map(|p| {
                        let p = p?;
                        let f = fidelity_analytic_with_target(
                            &scale_integrals(&p.unit, omega),
                            thermal,
                            options.target_phase,
                        )?;
                        Ok(curve_point(&p, f.fidelity, omega))
                    })
                    .collect()
            }
        };
        out.push((variant, curve));
    }
    Ok(out)
}

/// Single-segment fidelity curves over `durations` for each requested
/// variant, in input order.
pub fn infidelity_scan(
    model: &GateModel,
    detuning: f64,
    phases: [f64; 2],
    durations: &[f64],
    variants: &[ScanVariant],
    thermal: &ThermalState,
    options: &ScanOptions,
) -> Result<Vec<(ScanVariant, Vec<Result<CurvePoint>>)>> {
    let rows = scan_rows(model, detuning, phases, durations, variants, thermal, options)?;
    assemble_curves(&rows, variants, thermal, options)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn integrals(alpha: [[Complex64; 2]; 2], theta: f64) -> GateIntegrals {
        GateIntegrals {
            alpha,
            gamma: [0.0, theta],
            quadrature_change: 0.0,
        }
    }

    const ZERO: [[Complex64; 2]; 2] = [[Complex64 { re: 0.0, im: 0.0 }; 2]; 2];

    #[test]
    fn perfect_gate() {
        let f = fidelity_analytic(&integrals(ZERO, FRAC_PI_4), &ThermalState::new(3.0, 1.0).unwrap()).unwrap();
        assert!((f.fidelity - 1.0).abs() < 1e-15);
    }

    #[test]
    fn no_phase_gives_one_half() {
        let f = fidelity_analytic(&integrals(ZERO, 0.0), &ThermalState::ground()).unwrap();
        assert!((f.fidelity - 0.5).abs() < 1e-15);
    }

    #[test]
    fn phase_error_closed_form() {
        // With α = 0 only the parity-changing pairs pick up e^{±2iδ}.
        let delta: f64 = 0.1;
        let f = fidelity_analytic(&integrals(ZERO, FRAC_PI_4 + delta), &ThermalState::ground()).unwrap();
        let expected = (1.0 + (2.0 * delta).cos()) / 2.0;
        assert!((f.fidelity - expected).abs() < 1e-14);
    }

    #[test]
    fn hotter_is_worse() {
        let alpha = [
            [Complex64::new(0.05, 0.02), Complex64::new(-0.01, 0.03)],
            [Complex64::new(0.0, 0.04), Complex64::new(0.02, 0.0)],
        ];
        let g = integrals(alpha, 0.7);
        let mut last = 2.0;
        for n in [0.0, 0.5, 1.0, 4.0, 10.0] {
            let f = fidelity_analytic(&g, &ThermalState::new(n, n).unwrap()).unwrap().fidelity;
            assert!(f < last);
            last = f;
        }
    }

    #[test]
    fn thermal_occupation_example() {
        let t = ThermalState::from_temperature(10.0, 1.0, 3.62 / 0.965).unwrap();
        assert!((t.nbar[0] - 9.508).abs() < 1e-3);
        assert!((t.nbar[1] - 2.20).abs() < 0.01);
        assert_eq!(ThermalState::from_temperature(0.0, 1.0, 2.0).unwrap().nbar, [0.0, 0.0]);
    }

    #[test]
    fn non_finite_input_is_rejected() {
        let g = integrals(ZERO, f64::NAN);
        assert!(matches!(
            fidelity_analytic(&g, &ThermalState::ground()),
            Err(Error::Domain(_))
        ));
    }
}
