//! A trap with all derived quantities, and gate contexts prepared on a
//! concrete time grid for either the micromotion or the static-trap model.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::fidelity::ThermalState;
use crate::gate::{
    gate_integrals, prefix_integrals, Conjugation, GateIntegrals, MicromotionPhase, ModePair, PulseSchedule,
    QuadratureOptions, DEFAULT_QUADRATURE_TOLERANCE,
};
use crate::mathieu::{mode_function, ModeFunction, ModeLabel, DEFAULT_DRIVE_TRUNCATION};
use crate::quad::TimeGrid;
use crate::trap::{
    equilibrium_separation, lamb_dicke_parameters, mathieu_params, secular_frequency, Axis,
    EquilibriumResult, LambDicke, MathieuParameters, TrapConfiguration,
};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Numerics {
    /// Grid samples per r.f. period.
    pub samples_per_rf_period: usize,
    /// Grid samples per period of the faster secular mode.
    pub samples_per_secular_period: usize,
    pub drive_truncation: usize,
    /// Accepted relative change of the gate integrals under grid halving;
    /// `None` disables the check.
    pub quadrature_tolerance: Option<f64>,
    pub conjugation: Conjugation,
}

impl Default for Numerics {
    fn default() -> Self {
        Self {
            samples_per_rf_period: 512,
            samples_per_secular_period: 256,
            drive_truncation: DEFAULT_DRIVE_TRUNCATION,
            quadrature_tolerance: Some(DEFAULT_QUADRATURE_TOLERANCE),
            conjugation: Conjugation::Mode,
        }
    }
}

impl Numerics {
    pub fn quadrature(&self) -> QuadratureOptions {
        QuadratureOptions {
            conjugation: self.conjugation,
            tolerance: self.quadrature_tolerance,
        }
    }
}

/// Which motional model a gate is evaluated in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Dynamics {
    /// Mathieu mode functions and the exact micromotion phase.
    Micromotion,
    /// `v = e^{iωt}` at the same secular frequencies and `η_mm ≡ 0`.
    Static,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GateModel {
    pub trap: TrapConfiguration,
    pub numerics: Numerics,
    pub cm: MathieuParameters,
    pub transverse: MathieuParameters,
    pub equilibrium: EquilibriumResult,
    pub omega_cm: f64,
    pub omega_rel: f64,
    pub omega_transverse: f64,
    pub lamb_dicke: LambDicke,
    pub thermal: ThermalState,
}

impl GateModel {
    pub fn new(trap: TrapConfiguration, numerics: Numerics) -> Result<Self> {
        trap.validate()?;
        if numerics.samples_per_rf_period < MIN_RF_SAMPLES
            || numerics.samples_per_secular_period < MIN_SECULAR_SAMPLES
        {
            return Err(Error::GridResolution(format!(
                "at least {MIN_RF_SAMPLES} samples per r.f. period and {MIN_SECULAR_SAMPLES} per secular period are required"
            )));
        }
        let cm = mathieu_params(&trap, Axis::AxialCm, None)?;
        let omega_cm = secular_frequency(&cm)?;
        let transverse = mathieu_params(&trap, Axis::Transverse, None)?;
        let omega_transverse = secular_frequency(&transverse)?;
        let equilibrium = equilibrium_separation(&trap, numerics.drive_truncation)?;
        let omega_rel = secular_frequency(&equilibrium.rel)?;
        let lamb_dicke = lamb_dicke_parameters(&trap, omega_cm, omega_rel)?;
        let thermal = ThermalState::from_temperature(trap.temperature_ratio, omega_cm, omega_rel)?;
        Ok(Self {
            trap,
            numerics,
            cm,
            transverse,
            equilibrium,
            omega_cm,
            omega_rel,
            omega_transverse,
            lamb_dicke,
            thermal,
        })
    }

    /// `T_z = 2π/ω_cm`.
    pub fn secular_period(&self) -> f64 {
        2.0 * PI / self.omega_cm
    }

    pub fn rf_period(&self) -> f64 {
        2.0 * PI / self.trap.rf_frequency
    }

    pub fn separation(&self) -> f64 {
        self.equilibrium.separation
    }

    pub fn omega(&self, label: ModeLabel) -> f64 {
        match label {
            ModeLabel::Cm => self.omega_cm,
            ModeLabel::Rel => self.omega_rel,
        }
    }

    /// Largest grid step meeting both sampling densities. It is the same
    /// for both dynamics so that designs transfer between them node by node.
    pub fn max_step(&self) -> f64 {
        let fastest = self.omega_cm.max(self.omega_rel);
        let secular = 2.0 * PI / fastest / self.numerics.samples_per_secular_period as f64;
        let rf = self.rf_period() / self.numerics.samples_per_rf_period as f64;
        secular.min(rf)
    }

    pub fn grid(&self, duration: f64, segments: usize) -> Result<TimeGrid> {
        TimeGrid::with_max_step(duration, segments, self.max_step())
    }

    pub fn micromotion_phase(&self, times: &[f64]) -> MicromotionPhase {
        MicromotionPhase::new(
            &self.equilibrium.drive,
            self.equilibrium.separation,
            self.trap.wave_vector,
            self.trap.rf_frequency,
            times,
        )
    }

    /// Mathieu parameters of an axial mode.
    pub fn mathieu(&self, label: ModeLabel) -> MathieuParameters {
        match label {
            ModeLabel::Cm => self.cm,
            ModeLabel::Rel => self.equilibrium.rel,
        }
    }

    pub fn mode(&self, label: ModeLabel, dynamics: Dynamics, times: &[f64]) -> Result<ModeFunction> {
        match dynamics {
            Dynamics::Micromotion => {
                mode_function(&self.mathieu(label), label, self.trap.ion_mass, times)
            }
            Dynamics::Static => {
                ModeFunction::harmonic(label, self.omega(label), self.trap.ion_mass, times)
            }
        }
    }

    /// Samples modes and the micromotion phase on `grid`.
    pub fn prepare(&self, grid: TimeGrid, dynamics: Dynamics) -> Result<PreparedGate> {
        let times = grid.times();
        let modes = ModePair {
            cm: self.mode(ModeLabel::Cm, dynamics, &times)?,
            rel: self.mode(ModeLabel::Rel, dynamics, &times)?,
        };
        let micromotion = match dynamics {
            Dynamics::Micromotion => self.micromotion_phase(&times),
            Dynamics::Static => MicromotionPhase::none(times.len()),
        };
        Ok(PreparedGate {
            dynamics,
            grid,
            modes,
            micromotion,
            lamb_dicke: self.lamb_dicke,
            options: self.numerics.quadrature(),
        })
    }

    /// Prepares a gate of `segments` equal segments over `duration`.
    pub fn prepare_gate(&self, duration: f64, segments: usize, dynamics: Dynamics) -> Result<PreparedGate> {
        self.prepare(self.grid(duration, segments)?, dynamics)
    }
}

const MIN_RF_SAMPLES: usize = 128;
const MIN_SECULAR_SAMPLES: usize = 256;

/// Everything needed to evaluate pulses of one duration and segment count.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PreparedGate {
    pub dynamics: Dynamics,
    pub grid: TimeGrid,
    pub modes: ModePair,
    pub micromotion: MicromotionPhase,
    pub lamb_dicke: LambDicke,
    pub options: QuadratureOptions,
}

impl PreparedGate {
    pub fn duration(&self) -> f64 {
        self.grid.duration()
    }

    pub fn segments(&self) -> usize {
        self.grid.segments()
    }

    pub fn integrals(&self, schedule: &PulseSchedule) -> Result<GateIntegrals> {
        self.integrals_on(&self.grid, schedule)
    }

    /// Unit-amplitude constant-pulse integrals over `[0, t_e]` for each end
    /// node `e` of the prepared grid.
    pub fn prefix_integrals(
        &self,
        detuning: f64,
        phases: [f64; 2],
        ends: &[usize],
    ) -> Result<Vec<Result<GateIntegrals>>> {
        prefix_integrals(
            detuning,
            phases,
            &self.modes,
            &self.lamb_dicke,
            &self.micromotion,
            &self.grid,
            ends,
            self.options,
        )
    }

    /// Evaluates on a grid whose nodes are a prefix of the prepared samples.
    pub fn integrals_on(&self, grid: &TimeGrid, schedule: &PulseSchedule) -> Result<GateIntegrals> {
        gate_integrals(
            schedule,
            &self.modes,
            &self.lamb_dicke,
            &self.micromotion,
            grid,
            self.options,
        )
    }
}
