//! Run manifest: the resolved configuration, derived trap quantities, the
//! tool version and a timestamp.

use std::f64::consts::PI;
use std::time::{SystemTime, UNIX_EPOCH};

use mmgate_core::model::GateModel;
use serde::Serialize;

use crate::config::RunConfig;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Derived {
    pub a_cm: f64,
    pub q: f64,
    pub a_rel: f64,
    /// Relative-axis drive strength `f0`, relative to the separation scale.
    pub f0: f64,
    /// Drive coefficients `c_n` of the relative-axis special solution.
    pub c: Vec<f64>,
    /// Mean separation `u0` (μm).
    pub u0_um: f64,
    pub omega_cm_mhz: f64,
    pub omega_rel_mhz: f64,
    pub omega_x_mhz: f64,
    pub eta_cm: f64,
    pub eta_rel: f64,
    pub nbar_cm: f64,
    pub nbar_rel: f64,
    /// `T_z = 2π/ω_cm` (s).
    pub secular_period_s: f64,
    /// Peak-to-peak `η_mm` over one r.f. period.
    pub eta_mm_peak_to_peak: f64,
}

impl Derived {
    pub fn of(model: &GateModel) -> Self {
        let mhz = |w: f64| w / (2.0 * PI * 1e6);
        let rf = model.rf_period();
        let times: Vec<f64> = (0..=256).map(|i| rf * i as f64 / 256.0).collect();
        Self {
            a_cm: model.cm.a,
            q: model.cm.q,
            a_rel: model.equilibrium.rel.a,
            f0: model.equilibrium.rel.f0,
            c: model.equilibrium.drive.coefficients.clone(),
            u0_um: model.separation() * 1e6,
            omega_cm_mhz: mhz(model.omega_cm),
            omega_rel_mhz: mhz(model.omega_rel),
            omega_x_mhz: mhz(model.omega_transverse),
            eta_cm: model.lamb_dicke.cm,
            eta_rel: model.lamb_dicke.rel,
            nbar_cm: model.thermal.nbar[0],
            nbar_rel: model.thermal.nbar[1],
            secular_period_s: model.secular_period(),
            eta_mm_peak_to_peak: model.micromotion_phase(&times).peak_to_peak(),
        }
    }

    /// `name value` lines for the terminal.
    pub fn table(&self) -> String {
        let rows: [(&str, String); 14] = [
            ("a_cm", format!("{:.6}", self.a_cm)),
            ("q", format!("{:.6}", self.q)),
            ("a_r", format!("{:.6}", self.a_rel)),
            ("f0", format!("{:.6e}", self.f0)),
            ("c1/c0", format!("{:.6}", self.c[1] / self.c[0])),
            ("c2/c0", format!("{:.6}", self.c[2] / self.c[0])),
            ("u0 (um)", format!("{:.4}", self.u0_um)),
            ("omega_cm/2pi (MHz)", format!("{:.4}", self.omega_cm_mhz)),
            ("omega_r/2pi (MHz)", format!("{:.4}", self.omega_rel_mhz)),
            ("omega_x/2pi (MHz)", format!("{:.4}", self.omega_x_mhz)),
            ("eta_cm", format!("{:.5}", self.eta_cm)),
            ("eta_r", format!("{:.5}", self.eta_rel)),
            ("nbar_cm", format!("{:.4}", self.nbar_cm)),
            ("nbar_r", format!("{:.4}", self.nbar_rel)),
        ];
        let mut out = String::new();
        for (name, value) in rows {
            out.push_str(&format!("{name:<20} {value}\n"));
        }
        out.push_str(&format!("{:<20} {:.4}\n", "eta_mm p-p", self.eta_mm_peak_to_peak));
        out
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    /// `micromotion` or `static`.
    pub dynamics: &'static str,
    pub config: RunConfig,
    pub derived: Derived,
    /// Seconds since the Unix epoch; the only field that differs between
    /// reruns.
    pub timestamp_unix: u64,
}

impl RunManifest {
    pub fn new(command: &str, static_trap: bool, config: &RunConfig, model: &GateModel) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: command.into(),
            dynamics: if static_trap { "static" } else { "micromotion" },
            config: config.clone(),
            derived: Derived::of(model),
            timestamp_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        }
    }
}
