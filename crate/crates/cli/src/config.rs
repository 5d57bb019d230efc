//! Run configuration in engineering units: MHz for frequencies (as `f/2π`
//! of the angular frequency), V, μm, μm⁻¹ and atomic mass units.

use std::f64::consts::{FRAC_PI_4, PI};

use mmgate_core::constants::CODATA_2018;
use mmgate_core::design::{DesignOptions, ScanOptions};
use mmgate_core::fidelity::ScanVariant;
use mmgate_core::model::Numerics;
use mmgate_core::trap::TrapConfiguration;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// A complete run description, parsed from one JSON document. Sections
/// other than `trap` and `laser` may be omitted; every field has the
/// default given on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub trap: TrapSection,
    pub laser: LaserSection,
    #[serde(default)]
    pub design: DesignSection,
    #[serde(default)]
    pub thermal: ThermalSection,
    #[serde(default)]
    pub numerics: Numerics,
    #[serde(default)]
    pub modes: ModesSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrapSection {
    /// d.c. voltage `U0` (V).
    pub dc_voltage_v: f64,
    /// a.c. voltage amplitude `V0` (V).
    pub ac_voltage_v: f64,
    /// Characteristic electrode size `d0` (μm).
    pub electrode_size_um: f64,
    /// r.f. drive frequency `Ω_T/2π` (MHz).
    pub rf_frequency_mhz: f64,
    /// Ion mass (u).
    pub ion_mass_u: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaserSection {
    /// Raman wave-vector difference `Δk` (μm⁻¹).
    pub wave_vector_per_um: f64,
    /// Detuning `μ_δ / ω_cm`.
    pub detuning_over_omega_cm: f64,
    /// Laser phases `φ1, φ2` (rad). Default `[0, 0]`.
    #[serde(default)]
    pub phases_rad: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DesignSection {
    /// Number of equal pulse segments `m`. Default 9; 1 selects the
    /// constant-amplitude gate with optimised Rabi frequency.
    pub segments: usize,
    /// Gate duration of `design` in units of `T_z = 2π/ω_cm`. Default 1.31.
    pub tau_over_tz: f64,
    /// Target conditional phase `θ₀` (rad). Default π/4.
    pub target_phase_rad: f64,
    /// Accept `θ = −θ₀`, equivalent up to local rotations. Default false.
    pub accept_opposite_phase: bool,
    /// Relative singular-value threshold of the nullspace. Default 1e-10.
    pub null_threshold: f64,
    /// Largest residual displacement and phase error of a feasible design.
    /// Default 1e-6.
    pub tolerance: f64,
    pub scan: ScanSection,
}

impl Default for DesignSection {
    fn default() -> Self {
        Self {
            segments: 9,
            tau_over_tz: 1.31,
            target_phase_rad: FRAC_PI_4,
            accept_opposite_phase: false,
            null_threshold: 1e-10,
            tolerance: 1e-6,
            scan: ScanSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanSection {
    /// First duration in units of `T_z`. Default 19.9.
    pub tau_start_over_tz: f64,
    /// Last duration in units of `T_z`. Default 20.1.
    pub tau_stop_over_tz: f64,
    /// Number of equally spaced durations, ends included. Default 401.
    pub points: usize,
    /// Curves of a single-segment scan. Default: all four variants.
    /// Segmented scans always produce the `micromotion` and `static`
    /// curves of the maximal Rabi frequency.
    pub variants: Vec<ScanVariant>,
    /// Rabi-frequency bracket relative to the amplitude giving `|θ| = θ₀`.
    /// Default `[0.5, 1.5]`.
    pub bracket: [f64; 2],
    /// Golden-section tolerance relative to the bracket. Default 1e-4.
    pub golden_tolerance: f64,
    /// Durations per unit of work, which is also the journal granularity.
    /// Default 64.
    pub chunk_points: usize,
}

impl Default for ScanSection {
    fn default() -> Self {
        Self {
            tau_start_over_tz: 19.9,
            tau_stop_over_tz: 20.1,
            points: 401,
            variants: ScanVariant::ALL.to_vec(),
            bracket: [0.5, 1.5],
            golden_tolerance: 1e-4,
            chunk_points: 64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ThermalSection {
    /// Doppler temperature as `k_B T_D / ħω_cm`. Default 10.
    pub temperature_ratio: f64,
}

impl Default for ThermalSection {
    fn default() -> Self {
        Self { temperature_ratio: 10.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModesSection {
    /// Length of the `modes` table in units of `T_z`. Default 2.
    pub window_over_tz: f64,
    /// Row spacing in units of `T_z`. Default 0.001.
    pub step_over_tz: f64,
}

impl Default for ModesSection {
    fn default() -> Self {
        Self {
            window_over_tz: 2.0,
            step_over_tz: 0.001,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    /// Output directory, overridden by `--out`. Default `out`.
    pub directory: String,
    /// Write `waveform.csv` next to the design report. Default true.
    pub waveform: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            directory: "out".into(),
            waveform: true,
        }
    }
}

impl TrapSection {
    pub fn from_si(trap: &TrapConfiguration) -> Self {
        Self {
            dc_voltage_v: trap.dc_voltage,
            ac_voltage_v: trap.ac_voltage,
            electrode_size_um: trap.electrode_size * 1e6,
            rf_frequency_mhz: trap.rf_frequency / (2.0 * PI * 1e6),
            ion_mass_u: trap.ion_mass / CODATA_2018.atomic_mass_unit,
        }
    }
}

impl RunConfig {
    /// Parses and validates a configuration; errors name the offending key.
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            if path == "." {
                CliError::Config(e.inner().to_string())
            } else {
                CliError::Config(format!("at `{path}`: {}", e.inner()))
            }
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |key: &str, why: &str| Err(CliError::Config(format!("`{key}` {why}")));
        let positive = [
            ("trap.ac_voltage_v", self.trap.ac_voltage_v),
            ("trap.electrode_size_um", self.trap.electrode_size_um),
            ("trap.rf_frequency_mhz", self.trap.rf_frequency_mhz),
            ("trap.ion_mass_u", self.trap.ion_mass_u),
            ("laser.detuning_over_omega_cm", self.laser.detuning_over_omega_cm),
            ("design.tau_over_tz", self.design.tau_over_tz),
            ("design.target_phase_rad", self.design.target_phase_rad),
            ("design.null_threshold", self.design.null_threshold),
            ("design.tolerance", self.design.tolerance),
            ("design.scan.tau_start_over_tz", self.design.scan.tau_start_over_tz),
            ("design.scan.golden_tolerance", self.design.scan.golden_tolerance),
            ("modes.window_over_tz", self.modes.window_over_tz),
            ("modes.step_over_tz", self.modes.step_over_tz),
        ];
        for (key, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return bad(key, "must be positive and finite");
            }
        }
        if !self.trap.dc_voltage_v.is_finite() {
            return bad("trap.dc_voltage_v", "must be finite");
        }
        if !(self.laser.wave_vector_per_um.is_finite() && self.laser.wave_vector_per_um >= 0.0) {
            return bad("laser.wave_vector_per_um", "must be non-negative and finite");
        }
        if self.laser.phases_rad.iter().any(|p| !p.is_finite()) {
            return bad("laser.phases_rad", "must be finite");
        }
        if !(self.thermal.temperature_ratio.is_finite() && self.thermal.temperature_ratio >= 0.0) {
            return bad("thermal.temperature_ratio", "must be non-negative and finite");
        }
        if self.design.segments == 0 {
            return bad("design.segments", "must be at least 1");
        }
        let scan = &self.design.scan;
        if scan.points == 0 {
            return bad("design.scan.points", "must be at least 1");
        }
        if scan.chunk_points == 0 {
            return bad("design.scan.chunk_points", "must be at least 1");
        }
        if !(scan.tau_stop_over_tz.is_finite() && scan.tau_stop_over_tz >= scan.tau_start_over_tz) {
            return bad("design.scan.tau_stop_over_tz", "must be finite and not below the start");
        }
        if scan.points == 1 && scan.tau_stop_over_tz != scan.tau_start_over_tz {
            return bad("design.scan.points", "must exceed 1 for a non-empty duration range");
        }
        if scan.variants.is_empty() {
            return bad("design.scan.variants", "must not be empty");
        }
        let [lo, hi] = scan.bracket;
        if !(lo > 0.0 && hi > lo && hi.is_finite()) {
            return bad("design.scan.bracket", "must satisfy 0 < lo < hi");
        }
        if self.modes.step_over_tz > self.modes.window_over_tz {
            return bad("modes.step_over_tz", "must not exceed the window");
        }
        Ok(())
    }

    /// Trap, ion and laser inputs in SI units.
    pub fn trap_configuration(&self) -> TrapConfiguration {
        TrapConfiguration {
            dc_voltage: self.trap.dc_voltage_v,
            ac_voltage: self.trap.ac_voltage_v,
            electrode_size: self.trap.electrode_size_um * 1e-6,
            rf_frequency: 2.0 * PI * self.trap.rf_frequency_mhz * 1e6,
            ion_mass: self.trap.ion_mass_u * CODATA_2018.atomic_mass_unit,
            wave_vector: self.laser.wave_vector_per_um * 1e6,
            temperature_ratio: self.thermal.temperature_ratio,
        }
    }

    pub fn design_options(&self) -> DesignOptions {
        DesignOptions {
            target_phase: self.design.target_phase_rad,
            accept_opposite_phase: self.design.accept_opposite_phase,
            null_threshold: self.design.null_threshold,
            tolerance: self.design.tolerance,
        }
    }

    pub fn scan_options(&self) -> ScanOptions {
        ScanOptions {
            bracket: self.design.scan.bracket,
            tolerance: self.design.scan.golden_tolerance,
            target_phase: self.design.target_phase_rad,
        }
    }

    /// Scan durations in units of `T_z`, ends included.
    pub fn scan_durations_over_tz(&self) -> Vec<f64> {
        let s = &self.design.scan;
        if s.points == 1 {
            return vec![s.tau_start_over_tz];
        }
        (0..s.points)
            .map(|i| {
                let f = i as f64 / (s.points - 1) as f64;
                s.tau_start_over_tz * (1.0 - f) + s.tau_stop_over_tz * f
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use mmgate_core::trap::beryllium_example;

    const MINIMAL: &str = r#"{
        "trap": {"dc_voltage_v": 21, "ac_voltage_v": 300, "electrode_size_um": 200,
                 "rf_frequency_mhz": 240, "ion_mass_u": 9},
        "laser": {"wave_vector_per_um": 8, "detuning_over_omega_cm": 0.95}
    }"#;

    fn rel(x: f64, y: f64) -> f64 {
        (x - y).abs() / y.abs()
    }

    #[test]
    fn engineering_units_round_trip() {
        let si = beryllium_example();
        let section = TrapSection::from_si(&si);
        assert!(rel(section.rf_frequency_mhz, 240.0) < 1e-15);
        assert!(rel(section.electrode_size_um, 200.0) < 1e-15);
        assert!(rel(section.ion_mass_u, 9.0) < 1e-15);
        let config = RunConfig {
            trap: section,
            laser: LaserSection {
                wave_vector_per_um: 8.0,
                detuning_over_omega_cm: 1.0,
                phases_rad: [0.0, 0.0],
            },
            design: DesignSection::default(),
            thermal: ThermalSection::default(),
            numerics: Numerics::default(),
            modes: ModesSection::default(),
            output: OutputSection::default(),
        };
        let back = config.trap_configuration();
        for (x, y) in [
            (back.dc_voltage, si.dc_voltage),
            (back.ac_voltage, si.ac_voltage),
            (back.electrode_size, si.electrode_size),
            (back.rf_frequency, si.rf_frequency),
            (back.ion_mass, si.ion_mass),
            (back.wave_vector, si.wave_vector),
            (back.temperature_ratio, si.temperature_ratio),
        ] {
            assert!(rel(x, y) < 1e-15, "{x} vs {y}");
        }
    }

    #[test]
    fn defaults_fill_omitted_sections_and_survive_serialisation() {
        let config = RunConfig::from_json(MINIMAL).unwrap();
        assert_eq!(config.design, DesignSection::default());
        assert_eq!(config.numerics, Numerics::default());
        assert_eq!(config.laser.phases_rad, [0.0, 0.0]);
        let text = serde_json::to_string(&config).unwrap();
        assert_eq!(RunConfig::from_json(&text).unwrap(), config);
    }

    #[test]
    fn unknown_keys_are_named() {
        let text = MINIMAL.replace("\"ion_mass_u\": 9", "\"ion_mass_u\": 9, \"ion_charge\": 1");
        let err = RunConfig::from_json(&text).unwrap_err().to_string();
        assert!(err.contains("ion_charge") && err.contains("trap"), "{err}");
        let text = MINIMAL.replace("0.95}", "0.95}, \"extra\": {}");
        let err = RunConfig::from_json(&text).unwrap_err().to_string();
        assert!(err.contains("extra"), "{err}");
    }

    #[test]
    fn type_errors_carry_the_key_path() {
        let text = MINIMAL.replace("\"dc_voltage_v\": 21", "\"dc_voltage_v\": \"21\"");
        let err = RunConfig::from_json(&text).unwrap_err().to_string();
        assert!(err.contains("trap.dc_voltage_v"), "{err}");
    }

    #[test]
    fn invalid_values_are_rejected() {
        let text = MINIMAL.replace("\"ac_voltage_v\": 300", "\"ac_voltage_v\": -1");
        assert!(matches!(RunConfig::from_json(&text), Err(CliError::Config(_))));
        assert!(RunConfig::from_json("{").is_err());
    }

    #[test]
    fn scan_grid_includes_both_ends() {
        let config = RunConfig::from_json(MINIMAL).unwrap();
        let grid = config.scan_durations_over_tz();
        assert_eq!(grid.len(), 401);
        assert_eq!(grid[0], 19.9);
        assert_eq!(grid[400], 20.1);
    }
}
