//! Physical trap parameters, their Mathieu reduction and the
//! micromotion-corrected equilibrium separation of the two ions.

use serde::{Deserialize, Serialize};

use crate::constants::CODATA_2018;
use crate::mathieu::{characteristic_exponent, driven_solution, DriveSolution};
use crate::{Error, Result};

/// Trap, ion and laser inputs in SI units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrapConfiguration {
    /// d.c. voltage `U0` (V).
    pub dc_voltage: f64,
    /// a.c. voltage amplitude `V0` (V).
    pub ac_voltage: f64,
    /// Characteristic electrode size `d0` (m).
    pub electrode_size: f64,
    /// r.f. drive frequency `Ω_T` (rad/s).
    pub rf_frequency: f64,
    /// Ion mass (kg).
    pub ion_mass: f64,
    /// Raman wave-vector difference along the trap axis (1/m).
    pub wave_vector: f64,
    /// `k_B T_D / (ħ ω_cm)`.
    pub temperature_ratio: f64,
}

impl TrapConfiguration {
    pub fn validate(&self) -> Result<()> {
        let checks = [
            ("ac_voltage", self.ac_voltage),
            ("electrode_size", self.electrode_size),
            ("rf_frequency", self.rf_frequency),
            ("ion_mass", self.ion_mass),
        ];
        for (name, value) in checks {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidConfiguration(format!(
                    "{name} must be positive and finite, got {value}"
                )));
            }
        }
        if !self.dc_voltage.is_finite() {
            return Err(Error::InvalidConfiguration("dc_voltage must be finite".into()));
        }
        if !(self.wave_vector.is_finite() && self.wave_vector >= 0.0) {
            return Err(Error::InvalidConfiguration(
                "wave_vector must be non-negative and finite".into(),
            ));
        }
        if !(self.temperature_ratio.is_finite() && self.temperature_ratio >= 0.0) {
            return Err(Error::InvalidConfiguration(
                "temperature_ratio must be non-negative and finite".into(),
            ));
        }
        Ok(())
    }

    /// `m d0² Ω_T²`, the denominator shared by every `a` and `q`.
    fn scale(&self) -> f64 {
        self.ion_mass * self.electrode_size.powi(2) * self.rf_frequency.powi(2)
    }

    /// Coulomb term `4e²/(π ε0 m u0³ Ω_T²)` that separates `a_r` from `a_cm`.
    pub fn coulomb_stiffness(&self, separation: f64) -> f64 {
        4.0 * CODATA_2018.coulomb_factor()
            / (self.ion_mass * separation.powi(3) * self.rf_frequency.powi(2))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Axis {
    AxialCm,
    AxialRel,
    Transverse,
}

/// Dimensionless Mathieu parameters for one degree of freedom.
///
/// The drive `f0` is stored relative to `length_scale`, so that the
/// physical special solution is `length_scale · f0 · Σ c_n cos(2nξ)`.
/// Homogeneous axes have `f0 = 0` and `length_scale = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MathieuParameters {
    pub a: f64,
    pub q: f64,
    pub f0: f64,
    pub length_scale: f64,
    pub rf_frequency: f64,
    pub axis: Axis,
}

pub fn mathieu_params(
    trap: &TrapConfiguration,
    axis: Axis,
    separation: Option<f64>,
) -> Result<MathieuParameters> {
    trap.validate()?;
    let e = CODATA_2018.elementary_charge;
    let scale = trap.scale();
    let a_cm = -16.0 * e * trap.dc_voltage / scale;
    let q_axial = 8.0 * e * trap.ac_voltage / scale;
    let params = match axis {
        Axis::AxialCm => MathieuParameters {
            a: a_cm,
            q: q_axial,
            f0: 0.0,
            length_scale: 0.0,
            rf_frequency: trap.rf_frequency,
            axis,
        },
        Axis::AxialRel => {
            let u0 = separation.ok_or_else(|| {
                Error::InvalidConfiguration("the relative axis needs an ion separation".into())
            })?;
            if !(u0.is_finite() && u0 > 0.0) {
                return Err(Error::InvalidConfiguration(format!(
                    "ion separation must be positive, got {u0}"
                )));
            }
            let coulomb = trap.coulomb_stiffness(u0);
            MathieuParameters {
                a: a_cm + coulomb,
                q: q_axial,
                // 6e²/(π ε0 m u0² Ω_T²) divided by u0.
                f0: 1.5 * coulomb,
                length_scale: u0,
                rf_frequency: trap.rf_frequency,
                axis,
            }
        }
        Axis::Transverse => MathieuParameters {
            a: 8.0 * e * trap.dc_voltage / scale,
            q: -4.0 * e * trap.ac_voltage / scale,
            f0: 0.0,
            length_scale: 0.0,
            rf_frequency: trap.rf_frequency,
            axis,
        },
    };
    Ok(params)
}

/// Secular frequency `ν Ω_T / 2` from the exact Floquet exponent.
pub fn secular_frequency(params: &MathieuParameters) -> Result<f64> {
    let mono = characteristic_exponent(params.a, params.q)?;
    if !mono.stable {
        return Err(Error::Unstable {
            context: format!("{:?} axis (a = {}, q = {})", params.axis, params.a, params.q),
            trace: mono.trace.abs(),
        });
    }
    if !(mono.exponent > 0.0 && mono.exponent < 1.0) {
        return Err(Error::Unstable {
            context: format!(
                "{:?} axis sits on a stability boundary (nu = {})",
                params.axis, mono.exponent
            ),
            trace: mono.trace.abs(),
        });
    }
    Ok(mono.exponent * params.rf_frequency / 2.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumResult {
    /// Time-averaged ion separation `u0` (m).
    pub separation: f64,
    pub iterations: usize,
    /// `|u0 − f0 c0 u0| / u0` evaluated at the returned separation.
    pub residual: f64,
    pub rel: MathieuParameters,
    pub drive: DriveSolution,
}

pub const MAX_EQUILIBRIUM_ITERATIONS: usize = 100;
const EQUILIBRIUM_TOLERANCE: f64 = 1e-12;

/// Solves `u0 = f0(u0) c0(a_r(u0))` by plain fixed-point iteration, starting
/// from the static two-ion separation in the centre-of-mass secular trap.
pub fn equilibrium_separation(
    trap: &TrapConfiguration,
    drive_truncation: usize,
) -> Result<EquilibriumResult> {
    let cm = mathieu_params(trap, Axis::AxialCm, None)?;
    let omega_z = secular_frequency(&cm)?;
    let mut u0 = static_separation(trap.ion_mass, omega_z);

    for iteration in 1..=MAX_EQUILIBRIUM_ITERATIONS {
        let (_, drive) = relative_drive(trap, u0, drive_truncation)?;
        let next = u0 * drive.mean();
        if !(next.is_finite() && next > 0.0) {
            return Err(Error::NoEquilibrium {
                iterations: iteration,
                residual: f64::NAN,
            });
        }
        let change = (next - u0).abs() / next;
        u0 = next;
        if change <= EQUILIBRIUM_TOLERANCE {
            let (rel, drive) = relative_drive(trap, u0, drive_truncation)?;
            let residual = (1.0 - drive.mean()).abs();
            return Ok(EquilibriumResult {
                separation: u0,
                iterations: iteration,
                residual,
                rel,
                drive,
            });
        }
    }
    let (_, drive) = relative_drive(trap, u0, drive_truncation)?;
    Err(Error::NoEquilibrium {
        iterations: MAX_EQUILIBRIUM_ITERATIONS,
        residual: (1.0 - drive.mean()).abs(),
    })
}

/// Separation of two ions in a static harmonic well of frequency `omega`.
pub fn static_separation(mass: f64, omega: f64) -> f64 {
    // e²/(2π ε0 m ω²)
    (0.5 * CODATA_2018.coulomb_factor() / (mass * omega * omega)).cbrt()
}

fn relative_drive(
    trap: &TrapConfiguration,
    u0: f64,
    drive_truncation: usize,
) -> Result<(MathieuParameters, DriveSolution)> {
    let rel = mathieu_params(trap, Axis::AxialRel, Some(u0))?;
    let mono = characteristic_exponent(rel.a, rel.q)?;
    if !mono.stable {
        return Err(Error::Unstable {
            context: format!("relative axis at u0 = {u0:e} m (a = {}, q = {})", rel.a, rel.q),
            trace: mono.trace.abs(),
        });
    }
    let drive = driven_solution(rel.a, rel.q, rel.f0, drive_truncation)?;
    Ok((rel, drive))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambDicke {
    pub cm: f64,
    pub rel: f64,
}

/// `η_cm = k √(ħ/4mω_cm)` and `η_r = k √(ħ/mω_r) / 2`.
pub fn lamb_dicke_parameters(
    trap: &TrapConfiguration,
    omega_cm: f64,
    omega_rel: f64,
) -> Result<LambDicke> {
    trap.validate()?;
    if !(omega_cm > 0.0 && omega_rel > 0.0) {
        return Err(Error::InvalidConfiguration(
            "secular frequencies must be positive".into(),
        ));
    }
    let hbar = CODATA_2018.hbar;
    let m = trap.ion_mass;
    Ok(LambDicke {
        cm: trap.wave_vector * (hbar / (4.0 * m * omega_cm)).sqrt(),
        rel: trap.wave_vector * (hbar / (m * omega_rel)).sqrt() / 2.0,
    })
}

/// The trap of the worked example: ⁹Be⁺ at 240 MHz drive, 200 μm electrodes,
/// 300 V r.f. and 21 V d.c., with an 8 μm⁻¹ Raman wave vector and
/// `k_B T_D = 10 ħ ω_cm`.
pub fn beryllium_example() -> TrapConfiguration {
    TrapConfiguration {
        dc_voltage: 21.0,
        ac_voltage: 300.0,
        electrode_size: 200e-6,
        rf_frequency: 2.0 * std::f64::consts::PI * 240e6,
        ion_mass: 9.0 * CODATA_2018.atomic_mass_unit,
        wave_vector: 8e6,
        temperature_ratio: 10.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn rel_err(x: f64, y: f64) -> f64 {
        (x - y).abs() / y.abs()
    }

    #[test]
    fn worked_example_q_and_a_cm() {
        let trap = beryllium_example();
        let cm = mathieu_params(&trap, Axis::AxialCm, None).unwrap();
        assert!((cm.q - 0.283).abs() < 0.002, "q = {}", cm.q);
        // −16 e U0 / (m d0² Ω_T²) evaluated by hand with CODATA 2018.
        assert!((cm.a - -0.039_601_884).abs() < 1e-8, "a = {}", cm.a);
    }

    #[test]
    fn zero_dc_voltage_gives_zero_a() {
        let trap = TrapConfiguration {
            dc_voltage: 0.0,
            ..beryllium_example()
        };
        let cm = mathieu_params(&trap, Axis::AxialCm, None).unwrap();
        assert_eq!(cm.a, 0.0);
    }

    #[test]
    fn relative_axis_shares_q_and_is_stiffer() {
        let trap = beryllium_example();
        let cm = mathieu_params(&trap, Axis::AxialCm, None).unwrap();
        let rel = mathieu_params(&trap, Axis::AxialRel, Some(9e-6)).unwrap();
        assert_eq!(cm.q, rel.q);
        assert!(rel.a > cm.a);
        let coulomb = 4.0 * CODATA_2018.coulomb_factor()
            / (trap.ion_mass * 9e-6_f64.powi(3) * trap.rf_frequency.powi(2));
        assert!(((rel.a - cm.a) - coulomb).abs() <= 1e-15 * coulomb.max(rel.a.abs()) * 4.0);
        assert!((rel.f0 - 1.5 * coulomb).abs() < 1e-18);
    }

    #[test]
    fn relative_axis_needs_separation() {
        let trap = beryllium_example();
        assert!(matches!(
            mathieu_params(&trap, Axis::AxialRel, None),
            Err(Error::InvalidConfiguration(_))
        ));
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        for broken in [
            TrapConfiguration { ac_voltage: 0.0, ..beryllium_example() },
            TrapConfiguration { electrode_size: -1.0, ..beryllium_example() },
            TrapConfiguration { rf_frequency: f64::NAN, ..beryllium_example() },
            TrapConfiguration { ion_mass: 0.0, ..beryllium_example() },
        ] {
            assert!(matches!(
                mathieu_params(&broken, Axis::AxialCm, None),
                Err(Error::InvalidConfiguration(_))
            ));
        }
    }

    #[test]
    fn harmonic_limit_secular_frequency() {
        let params = MathieuParameters {
            a: 0.09,
            q: 0.0,
            f0: 0.0,
            length_scale: 0.0,
            rf_frequency: 2.0 * PI * 1e6,
            axis: Axis::AxialCm,
        };
        let omega = secular_frequency(&params).unwrap();
        assert!(rel_err(omega, 0.3 * params.rf_frequency / 2.0) < 1e-12);
    }

    #[test]
    fn unstable_parameters_report_trace() {
        let params = MathieuParameters {
            a: 0.0,
            q: 1.2,
            f0: 0.0,
            length_scale: 0.0,
            rf_frequency: 1.0,
            axis: Axis::AxialCm,
        };
        match secular_frequency(&params) {
            Err(Error::Unstable { trace, .. }) => assert!(trace > 2.0),
            other => panic!("expected instability, got {other:?}"),
        }
    }

    #[test]
    fn equilibrium_converges_quickly() {
        let eq = equilibrium_separation(&beryllium_example(), 8).unwrap();
        assert!(eq.iterations <= 10, "{} iterations", eq.iterations);
        assert!(eq.residual < 1e-10);
        assert!(eq.separation > 0.0);
        assert!((eq.rel.a - -0.0388).abs() < 0.001, "a_r = {}", eq.rel.a);
    }

    #[test]
    fn static_limit_equilibrium_matches_coulomb_balance() {
        // A negligible r.f. voltage with negative d.c. voltage is a static
        // harmonic trap along z.
        let trap = TrapConfiguration {
            dc_voltage: -5.0,
            ac_voltage: 1e-9,
            ..beryllium_example()
        };
        let cm = mathieu_params(&trap, Axis::AxialCm, None).unwrap();
        let omega_z = secular_frequency(&cm).unwrap();
        let expected = static_separation(trap.ion_mass, omega_z);
        let eq = equilibrium_separation(&trap, 8).unwrap();
        assert!(rel_err(eq.separation, expected) < 1e-9);
    }

    #[test]
    fn lamb_dicke_limits() {
        let trap = TrapConfiguration {
            wave_vector: 0.0,
            ..beryllium_example()
        };
        let ld = lamb_dicke_parameters(&trap, 1e6, 2e6).unwrap();
        assert_eq!((ld.cm, ld.rel), (0.0, 0.0));

        let trap = beryllium_example();
        let heavy = TrapConfiguration {
            ion_mass: 2.0 * trap.ion_mass,
            ..trap
        };
        let a = lamb_dicke_parameters(&trap, 6e6, 2e7).unwrap();
        let b = lamb_dicke_parameters(&heavy, 6e6, 2e7).unwrap();
        assert!(rel_err(b.cm, a.cm / 2f64.sqrt()) < 1e-14);
        assert!(rel_err(b.rel, a.rel / 2f64.sqrt()) < 1e-14);
    }
}
