//! Spin-dependent forces `χ_j(t)`, the micromotion phase `η_mm(t)` and the
//! displacement and conditional-phase integrals of a segmented pulse.
//!
//! With `F_cm = χ₁σ₁ + χ₂σ₂` and `F_r = χ₁σ₁ − χ₂σ₂`, the first-order
//! Hamiltonian is `H = −Σ_μ F_μ η_μ (v_μ* a_μ + v_μ a_μ†)` (ħ = 1). Its
//! Magnus expansion terminates at second order and gives the per-ion
//! displacements `α_{μ,j} = iη_μ ∫ χ_j v_μ dt` and the phases
//! `γ_μ = −η_μ² ∫∫_{t₂<t₁} S[χ₁χ₂] Im[v_μ(t₁) v_μ*(t₂)]`, so that the gate
//! applies `exp[i(γ_r − γ_cm) σ₁σ₂]`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::mathieu::{DriveSolution, ModeFunction, ModeLabel};
use crate::quad::{cumulative_simpson, simpson_strided, TimeGrid};
use crate::trap::LambDicke;
use crate::{Error, Result};

/// Minimal samples per r.f. period on a gate grid.
pub const MIN_SAMPLES_PER_RF_PERIOD: f64 = 128.0;
/// Minimal samples per secular period on a gate grid.
pub const MIN_SAMPLES_PER_SECULAR_PERIOD: f64 = 256.0;
/// Default acceptance threshold of the grid-halving check.
pub const DEFAULT_QUADRATURE_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Ion {
    One,
    Two,
}

impl Ion {
    pub const BOTH: [Ion; 2] = [Ion::One, Ion::Two];

    pub fn index(self) -> usize {
        match self {
            Ion::One => 0,
            Ion::Two => 1,
        }
    }

    /// `−(−1)^j`, the sign of `η_mm` in the force on ion `j`.
    pub fn micromotion_sign(self) -> f64 {
        match self {
            Ion::One => 1.0,
            Ion::Two => -1.0,
        }
    }
}

/// Piecewise-constant Rabi frequency over equal-time segments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseSchedule {
    /// Gate time `τ` (s).
    pub duration: f64,
    /// Two-photon detuning `μ_δ` (rad/s).
    pub detuning: f64,
    /// Laser phases `φ₁, φ₂` (rad).
    pub phases: [f64; 2],
    /// Segment Rabi frequencies `Ω_β` (rad/s), shared by both ions.
    pub amplitudes: Vec<f64>,
}

impl PulseSchedule {
    pub fn new(duration: f64, detuning: f64, phases: [f64; 2], amplitudes: Vec<f64>) -> Result<Self> {
        if !(duration.is_finite() && duration > 0.0) {
            return Err(Error::InvalidConfiguration(format!(
                "gate duration must be positive, got {duration}"
            )));
        }
        if amplitudes.is_empty() {
            return Err(Error::InvalidConfiguration("a pulse needs at least one segment".into()));
        }
        if !detuning.is_finite()
            || phases.iter().any(|p| !p.is_finite())
            || amplitudes.iter().any(|a| !a.is_finite())
        {
            return Err(Error::Domain("pulse parameters must be finite".into()));
        }
        Ok(Self {
            duration,
            detuning,
            phases,
            amplitudes,
        })
    }

    pub fn constant(duration: f64, detuning: f64, phases: [f64; 2], rabi: f64) -> Result<Self> {
        Self::new(duration, detuning, phases, vec![rabi])
    }

    pub fn segments(&self) -> usize {
        self.amplitudes.len()
    }

    /// Segment active at `t`; segment boundaries belong to the later segment.
    pub fn segment_at(&self, t: f64) -> Result<usize> {
        if !(0.0..=self.duration).contains(&t) {
            return Err(Error::Domain(format!(
                "time {t} outside the gate [0, {}]",
                self.duration
            )));
        }
        let m = self.segments();
        Ok(((t / self.duration * m as f64).floor() as usize).min(m - 1))
    }

    pub fn amplitude_at(&self, t: f64) -> Result<f64> {
        Ok(self.amplitudes[self.segment_at(t)?])
    }

    /// `Ω̃ = max_t |Ω(t)|`.
    pub fn max_rabi(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.abs()).fold(0.0, f64::max)
    }

    pub fn with_amplitudes(&self, amplitudes: Vec<f64>) -> Result<Self> {
        Self::new(self.duration, self.detuning, self.phases, amplitudes)
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        self.with_amplitudes(self.amplitudes.iter().map(|a| a * factor).collect())
    }
}

/// Sampled `η_mm(t) = k_δ ū_r(t)/2`, with `ū_r` in metres.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MicromotionPhase {
    pub wave_vector: f64,
    pub length_scale: f64,
    pub rf_frequency: f64,
    pub drive: Option<DriveSolution>,
    pub samples: Vec<f64>,
}

impl MicromotionPhase {
    /// `η_mm ≡ 0` on `len` samples.
    pub fn none(len: usize) -> Self {
        Self {
            wave_vector: 0.0,
            length_scale: 0.0,
            rf_frequency: 0.0,
            drive: None,
            samples: vec![0.0; len],
        }
    }

    pub fn new(
        drive: &DriveSolution,
        length_scale: f64,
        wave_vector: f64,
        rf_frequency: f64,
        times: &[f64],
    ) -> Self {
        let mut phase = Self {
            wave_vector,
            length_scale,
            rf_frequency,
            drive: Some(drive.clone()),
            samples: Vec::new(),
        };
        phase.samples = times.iter().map(|&t| phase.value_at(t)).collect();
        phase
    }

    pub fn value_at(&self, t: f64) -> f64 {
        match &self.drive {
            Some(d) => 0.5 * self.wave_vector * self.length_scale * d.value(0.5 * self.rf_frequency * t),
            None => 0.0,
        }
    }

    /// Period average `k_δ f0 c0 L / 2`.
    pub fn mean(&self) -> f64 {
        match &self.drive {
            Some(d) => 0.5 * self.wave_vector * self.length_scale * d.mean(),
            None => 0.0,
        }
    }

    pub fn peak_to_peak(&self) -> f64 {
        let max = self.samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = self.samples.iter().copied().fold(f64::INFINITY, f64::min);
        if self.samples.is_empty() {
            0.0
        } else {
            max - min
        }
    }

    pub fn is_active(&self) -> bool {
        self.drive.is_some()
    }
}

/// `χ_j(t) = Ω(t) sin(μ_δ t + φ_j − (−1)^j η_mm)` in rad/s.
pub fn chi(t: f64, ion: Ion, schedule: &PulseSchedule, eta_mm: f64) -> Result<f64> {
    let rabi = schedule.amplitude_at(t)?;
    Ok(rabi * carrier(t, ion, schedule.detuning, schedule.phases, eta_mm))
}

fn carrier(t: f64, ion: Ion, detuning: f64, phases: [f64; 2], eta_mm: f64) -> f64 {
    (detuning * t + phases[ion.index()] + ion.micromotion_sign() * eta_mm).sin()
}

/// Whether displacement integrals use the mode function or its conjugate.
///
/// The Hamiltonian fixes `Mode`; `Conjugate` exists to test that choice
/// against the Fock-space propagation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Conjugation {
    #[default]
    Mode,
    Conjugate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureOptions {
    pub conjugation: Conjugation,
    /// Largest accepted relative change under grid halving; `None` skips
    /// the check.
    pub tolerance: Option<f64>,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        Self {
            conjugation: Conjugation::Mode,
            tolerance: Some(DEFAULT_QUADRATURE_TOLERANCE),
        }
    }
}

/// Centre-of-mass and relative mode functions sampled on one grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModePair {
    pub cm: ModeFunction,
    pub rel: ModeFunction,
}

impl ModePair {
    pub fn get(&self, label: ModeLabel) -> &ModeFunction {
        match label {
            ModeLabel::Cm => &self.cm,
            ModeLabel::Rel => &self.rel,
        }
    }
}

pub fn lamb_dicke_of(eta: &LambDicke, label: ModeLabel) -> f64 {
    match label {
        ModeLabel::Cm => eta.cm,
        ModeLabel::Rel => eta.rel,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateIntegrals {
    /// `α_{μ,j}` indexed by mode (cm, rel) then ion.
    pub alpha: [[Complex64; 2]; 2],
    /// `γ_cm, γ_r` (rad).
    pub gamma: [f64; 2],
    /// Relative change of the integrals under grid halving.
    pub quadrature_change: f64,
}

impl GateIntegrals {
    /// Conditional phase `θ = γ_r − γ_cm`.
    pub fn theta(&self) -> f64 {
        self.gamma[1] - self.gamma[0]
    }

    /// `α_μ(s) = s₁ α_{μ,1} + j_μ s₂ α_{μ,2}`.
    pub fn branch_displacement(&self, label: ModeLabel, s1: f64, s2: f64) -> Complex64 {
        let a = self.alpha[label.index()];
        a[0] * s1 + a[1] * (label.branch_sign() * s2)
    }

    pub fn max_displacement(&self) -> f64 {
        self.alpha
            .iter()
            .flatten()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }
}

/// `sin(μ_δ t + φ_j ± η_mm)` on every grid node, for both ions.
#[derive(Debug, Clone, PartialEq)]
pub struct ForceProfile {
    pub carrier: [Vec<f64>; 2],
}

impl ForceProfile {
    pub fn new(
        detuning: f64,
        phases: [f64; 2],
        micromotion: &MicromotionPhase,
        grid: &TimeGrid,
    ) -> Result<Self> {
        if micromotion.samples.len() < grid.len() {
            return Err(Error::GridResolution(format!(
                "micromotion phase has {} samples, the grid needs {}",
                micromotion.samples.len(),
                grid.len()
            )));
        }
        let carrier = Ion::BOTH.map(|ion| {
            (0..grid.len())
                .map(|i| carrier(grid.time(i), ion, detuning, phases, micromotion.samples[i]))
                .collect()
        });
        Ok(Self { carrier })
    }
}

/// Checks that `mode` covers `grid` sample by sample and resolves both the
/// r.f. and the secular motion.
pub fn check_sampling(grid: &TimeGrid, mode: &ModeFunction) -> Result<()> {
    let n = grid.len();
    if mode.len() < n {
        return Err(Error::GridResolution(format!(
            "{:?} mode has {} samples, the grid needs {n}",
            mode.label,
            mode.len()
        )));
    }
    let end = mode.times[n - 1];
    let probe = mode.times[1];
    let tol = 1e-9 * grid.duration();
    if (end - grid.duration()).abs() > tol || (probe - grid.time(1)).abs() > tol {
        return Err(Error::GridResolution(format!(
            "{:?} mode is not sampled on the quadrature grid",
            mode.label
        )));
    }
    let step = grid.step();
    let secular_period = 2.0 * std::f64::consts::PI / mode.omega;
    if step > secular_period / MIN_SAMPLES_PER_SECULAR_PERIOD * (1.0 + 1e-9) {
        return Err(Error::GridResolution(format!(
            "step {step:e} s under-resolves the {:?} secular period",
            mode.label
        )));
    }
    if let Some(p) = mode.params {
        let rf_period = 2.0 * std::f64::consts::PI / p.rf_frequency;
        if step > rf_period / MIN_SAMPLES_PER_RF_PERIOD * (1.0 + 1e-9) {
            return Err(Error::GridResolution(format!(
                "step {step:e} s under-resolves the r.f. period"
            )));
        }
    }
    Ok(())
}

pub(crate) fn weight(mode: &ModeFunction, i: usize, conjugation: Conjugation) -> Complex64 {
    match conjugation {
        Conjugation::Mode => mode.v[i],
        Conjugation::Conjugate => mode.v[i].conj(),
    }
}

/// Raw single-mode integrals `∫χ_j w` and `∫∫ S[χ₁χ₂] Im[w(t₁)w*(t₂)]`
/// together with the magnitude scales used for relative comparisons.
#[derive(Debug, Clone, Copy)]
struct RawIntegrals {
    force: [Complex64; 2],
    phase: f64,
    force_scale: [f64; 2],
}

fn raw_integrals(
    profile: &ForceProfile,
    amplitudes: &[f64],
    grid: &TimeGrid,
    mode: &ModeFunction,
    conjugation: Conjugation,
    stride: usize,
) -> RawIntegrals {
    let h = grid.step() * stride as f64;
    let mut force = [Complex64::default(); 2];
    let mut scale = [0.0; 2];
    let mut running = [Complex64::default(); 2];
    let mut phase = 0.0;
    let mut terms: [Vec<Complex64>; 2] = Default::default();
    let mut magnitude: [Vec<f64>; 2] = Default::default();
    let mut phase_terms = Vec::new();
    for (segment, &rabi) in amplitudes.iter().enumerate() {
        let nodes: Vec<usize> = grid.segment_nodes(segment).step_by(stride).collect();
        let w: Vec<Complex64> = nodes.iter().map(|&i| weight(mode, i, conjugation)).collect();
        for j in 0..2 {
            terms[j].clear();
            magnitude[j].clear();
            for (k, &i) in nodes.iter().enumerate() {
                let chi = rabi * profile.carrier[j][i];
                terms[j].push(w[k] * chi);
                magnitude[j].push((w[k] * chi).norm());
            }
        }
        let conj_terms = [0, 1].map(|j| terms[j].iter().map(|z| z.conj()).collect::<Vec<_>>());
        let cumulative = [0, 1].map(|j| cumulative_simpson(&conj_terms[j], h));
        phase_terms.clear();
        for k in 0..nodes.len() {
            let p = [running[0] + cumulative[0][k], running[1] + cumulative[1][k]];
            phase_terms.push((terms[0][k] * p[1]).im + (terms[1][k] * p[0]).im);
        }
        phase += simpson_strided(&phase_terms, 1, h);
        for j in 0..2 {
            force[j] += simpson_strided(&terms[j], 1, h);
            scale[j] += simpson_strided(&magnitude[j], 1, h);
            running[j] += cumulative[j][nodes.len() - 1];
        }
    }
    RawIntegrals {
        force,
        phase,
        force_scale: scale,
    }
}

fn relative_change(fine: &RawIntegrals, coarse: &RawIntegrals) -> f64 {
    let mut change: f64 = 0.0;
    for j in 0..2 {
        let scale = fine.force_scale[j];
        if scale > 0.0 {
            change = change.max((fine.force[j] - coarse.force[j]).norm() / scale);
        }
    }
    let phase_scale = 2.0 * fine.force_scale[0] * fine.force_scale[1];
    if phase_scale > 0.0 {
        change = change.max((fine.phase - coarse.phase).abs() / phase_scale);
    }
    change
}

/// Evaluates one mode on the grid and its every-other-node coarsening.
fn mode_integrals(
    profile: &ForceProfile,
    schedule: &PulseSchedule,
    grid: &TimeGrid,
    mode: &ModeFunction,
    options: QuadratureOptions,
) -> Result<(RawIntegrals, f64)> {
    if schedule.segments() != grid.segments() {
        return Err(Error::InvalidConfiguration(format!(
            "schedule has {} segments, the grid {}",
            schedule.segments(),
            grid.segments()
        )));
    }
    if (schedule.duration - grid.duration()).abs() > 1e-12 * grid.duration() {
        return Err(Error::InvalidConfiguration(
            "schedule and grid durations differ".into(),
        ));
    }
    check_sampling(grid, mode)?;
    let fine = raw_integrals(profile, &schedule.amplitudes, grid, mode, options.conjugation, 1);
    let coarse = raw_integrals(profile, &schedule.amplitudes, grid, mode, options.conjugation, 2);
    let change = relative_change(&fine, &coarse);
    if let Some(tol) = options.tolerance {
        if !(change <= tol) {
            return Err(Error::GridResolution(format!(
                "{:?} integrals change by {change:e} under grid halving (tolerance {tol:e})",
                mode.label
            )));
        }
    }
    Ok((fine, change))
}

/// `(α_{μ,1}, α_{μ,2})` for one mode.
pub fn displacement(
    schedule: &PulseSchedule,
    mode: &ModeFunction,
    eta: f64,
    micromotion: &MicromotionPhase,
    grid: &TimeGrid,
    options: QuadratureOptions,
) -> Result<[Complex64; 2]> {
    let profile = ForceProfile::new(schedule.detuning, schedule.phases, micromotion, grid)?;
    let (raw, _) = mode_integrals(&profile, schedule, grid, mode, options)?;
    Ok(raw.force.map(|f| Complex64::i() * eta * f))
}

/// `γ_μ` for one mode.
pub fn accumulated_phase(
    schedule: &PulseSchedule,
    mode: &ModeFunction,
    eta: f64,
    micromotion: &MicromotionPhase,
    grid: &TimeGrid,
    options: QuadratureOptions,
) -> Result<f64> {
    let profile = ForceProfile::new(schedule.detuning, schedule.phases, micromotion, grid)?;
    let (raw, _) = mode_integrals(&profile, schedule, grid, mode, options)?;
    Ok(-eta * eta * raw.phase)
}

/// All four displacements and both phases of a pulse.
pub fn gate_integrals(
    schedule: &PulseSchedule,
    modes: &ModePair,
    eta: &LambDicke,
    micromotion: &MicromotionPhase,
    grid: &TimeGrid,
    options: QuadratureOptions,
) -> Result<GateIntegrals> {
    let profile = ForceProfile::new(schedule.detuning, schedule.phases, micromotion, grid)?;
    let mut alpha = [[Complex64::default(); 2]; 2];
    let mut gamma = [0.0; 2];
    let mut change: f64 = 0.0;
    for label in ModeLabel::ALL {
        let (raw, c) = mode_integrals(&profile, schedule, grid, modes.get(label), options)?;
        let e = lamb_dicke_of(eta, label);
        alpha[label.index()] = raw.force.map(|f| Complex64::i() * e * f);
        gamma[label.index()] = -e * e * raw.phase;
        change = change.max(c);
    }
    let result = GateIntegrals {
        alpha,
        gamma,
        quadrature_change: change,
    };
    if result.alpha.iter().flatten().any(|z| !z.is_finite())
        || result.gamma.iter().any(|g| !g.is_finite())
    {
        return Err(Error::Numerical("non-finite gate integrals".into()));
    }
    Ok(result)
}

/// Unit-amplitude raw integrals over `[0, t_e]` for every end node `e`,
/// accumulated panel by panel in one pass over the samples.
fn raw_prefix(
    profile: &ForceProfile,
    grid: &TimeGrid,
    mode: &ModeFunction,
    conjugation: Conjugation,
    stride: usize,
    ends: &[usize],
) -> Vec<RawIntegrals> {
    let h = grid.step() * stride as f64;
    let term = |i: usize| {
        let w = weight(mode, i, conjugation);
        [w * profile.carrier[0][i], w * profile.carrier[1][i]]
    };
    let phase_term = |f: [Complex64; 2], p: [Complex64; 2]| (f[0] * p[1]).im + (f[1] * p[0]).im;
    let mut out = Vec::with_capacity(ends.len());
    let mut next = ends.iter().peekable();
    let mut force = [Complex64::default(); 2];
    let mut scale = [0.0; 2];
    let mut running = [Complex64::default(); 2];
    let mut phase = 0.0;
    let mut f0 = term(0);
    let mut g0 = 0.0;
    let last = ends.last().copied().unwrap_or(0);
    let mut node = 0;
    while node < last {
        let f1 = term(node + stride);
        let f2 = term(node + 2 * stride);
        let mut p1 = running;
        let mut p2 = running;
        for j in 0..2 {
            let (c0, c1, c2) = (f0[j].conj(), f1[j].conj(), f2[j].conj());
            p1[j] += (c0 * 5.0 + c1 * 8.0 - c2) * (h / 12.0);
            p2[j] += (c0 + c1 * 4.0 + c2) * (h / 3.0);
            force[j] += (f0[j] + f1[j] * 4.0 + f2[j]) * (h / 3.0);
            scale[j] += (f0[j].norm() + 4.0 * f1[j].norm() + f2[j].norm()) * (h / 3.0);
        }
        let g1 = phase_term(f1, p1);
        let g2 = phase_term(f2, p2);
        phase += (g0 + 4.0 * g1 + g2) * (h / 3.0);
        running = p2;
        f0 = f2;
        g0 = g2;
        node += 2 * stride;
        while next.peek().is_some_and(|&&e| e == node) {
            next.next();
            out.push(RawIntegrals {
                force,
                phase,
                force_scale: scale,
            });
        }
    }
    out
}

/// Integrals of a constant unit-amplitude pulse over every prefix
/// `[0, t_e]` of `grid`, one entry per end node `e`. End nodes must be
/// positive multiples of 4 in ascending order.
#[allow(clippy::too_many_arguments)]
pub fn prefix_integrals(
    detuning: f64,
    phases: [f64; 2],
    modes: &ModePair,
    eta: &LambDicke,
    micromotion: &MicromotionPhase,
    grid: &TimeGrid,
    ends: &[usize],
    options: QuadratureOptions,
) -> Result<Vec<Result<GateIntegrals>>> {
    if ends.windows(2).any(|w| w[0] > w[1])
        || ends.iter().any(|&e| e == 0 || e % 4 != 0 || e > grid.intervals())
    {
        return Err(Error::InvalidConfiguration(
            "prefix end nodes must be ascending positive multiples of 4 within the grid".into(),
        ));
    }
    let profile = ForceProfile::new(detuning, phases, micromotion, grid)?;
    let mut per_mode = Vec::with_capacity(2);
    for label in ModeLabel::ALL {
        let mode = modes.get(label);
        check_sampling(grid, mode)?;
        let fine = raw_prefix(&profile, grid, mode, options.conjugation, 1, ends);
        let coarse = raw_prefix(&profile, grid, mode, options.conjugation, 2, ends);
        per_mode.push((label, fine, coarse));
    }
    let results = (0..ends.len())
        .map(|k| {
            let mut alpha = [[Complex64::default(); 2]; 2];
            let mut gamma = [0.0; 2];
            let mut change: f64 = 0.0;
            for (label, fine, coarse) in &per_mode {
                let c = relative_change(&fine[k], &coarse[k]);
                if let Some(tol) = options.tolerance {
                    if !(c <= tol) {
                        return Err(Error::GridResolution(format!(
                            "{label:?} integrals change by {c:e} under grid halving (tolerance {tol:e})"
                        )));
                    }
                }
                let e = lamb_dicke_of(eta, *label);
                alpha[label.index()] = fine[k].force.map(|f| Complex64::i() * e * f);
                gamma[label.index()] = -e * e * fine[k].phase;
                change = change.max(c);
            }
            Ok(GateIntegrals {
                alpha,
                gamma,
                quadrature_change: change,
            })
        })
        .collect();
    Ok(results)
}
