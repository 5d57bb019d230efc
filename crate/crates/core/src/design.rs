//! Segment amplitudes that close all phase-space loops and accumulate the
//! target conditional phase.
//!
//! Displacements are linear and phases quadratic in the segment amplitudes,
//! so an exact design is a nullspace vector of the 8 × m displacement
//! matrix, scaled to the target phase.

use std::f64::consts::FRAC_PI_4;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::fidelity::{fidelity_analytic_with_target, ThermalState};
use crate::gate::{lamb_dicke_of, weight, ForceProfile, GateIntegrals, PulseSchedule};
use crate::mathieu::ModeLabel;
use crate::model::{Dynamics, GateModel, PreparedGate};
use crate::quad::{cumulative_simpson, simpson, TimeGrid};
use crate::{Error, Result};

/// Displacement constraints: {cm, rel} × {ion 1, ion 2} × {Re, Im}.
pub const CONSTRAINT_ROWS: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSystem {
    pub duration: f64,
    pub detuning: f64,
    pub phases: [f64; 2],
    /// Row `4μ + 2j + {0: Re, 1: Im}` and column `β` hold `α_{μ,j}` for a
    /// unit amplitude in segment `β`.
    pub matrix: DMatrix<f64>,
    /// Quadratic forms of `γ_cm` and `γ_r`.
    pub mode_phase_forms: [DMatrix<f64>; 2],
    /// Quadratic form of `θ = γ_r − γ_cm`.
    pub phase_form: DMatrix<f64>,
}

impl ConstraintSystem {
    pub fn segments(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn displacements(&self, amplitudes: &[f64]) -> [[Complex64; 2]; 2] {
        let x = DVector::from_column_slice(amplitudes);
        let y = &self.matrix * x;
        let mut alpha = [[Complex64::default(); 2]; 2];
        for (m, row) in alpha.iter_mut().enumerate() {
            for (j, a) in row.iter_mut().enumerate() {
                let r = 4 * m + 2 * j;
                *a = Complex64::new(y[r], y[r + 1]);
            }
        }
        alpha
    }

    pub fn theta(&self, amplitudes: &[f64]) -> f64 {
        quadratic(&self.phase_form, amplitudes)
    }

    /// Gate integrals implied by the linear and quadratic forms.
    pub fn integrals(&self, amplitudes: &[f64]) -> GateIntegrals {
        GateIntegrals {
            alpha: self.displacements(amplitudes),
            gamma: [0, 1].map(|m| quadratic(&self.mode_phase_forms[m], amplitudes)),
            quadrature_change: 0.0,
        }
    }
}

fn quadratic(form: &DMatrix<f64>, x: &[f64]) -> f64 {
    let v = DVector::from_column_slice(x);
    v.dot(&(form * &v))
}

/// Unit-amplitude integrals of every segment: `B_{jβ} = ∫_β s_j w dt` and
/// the within-segment part `D_β` of the ordered phase integral.
fn segment_integrals(
    gate: &PreparedGate,
    profile: &ForceProfile,
    label: ModeLabel,
) -> (Vec<[Complex64; 2]>, Vec<f64>) {
    let grid = &gate.grid;
    let mode = gate.modes.get(label);
    let h = grid.step();
    let mut totals = Vec::with_capacity(grid.segments());
    let mut within = Vec::with_capacity(grid.segments());
    for segment in 0..grid.segments() {
        let nodes = grid.segment_nodes(segment);
        let terms = [0, 1].map(|j| {
            nodes
                .clone()
                .map(|i| weight(mode, i, gate.options.conjugation) * profile.carrier[j][i])
                .collect::<Vec<_>>()
        });
        let cumulative = [0, 1].map(|j| {
            let conj: Vec<Complex64> = terms[j].iter().map(|z| z.conj()).collect();
            cumulative_simpson(&conj, h)
        });
        let phase: Vec<f64> = (0..terms[0].len())
            .map(|k| (terms[0][k] * cumulative[1][k]).im + (terms[1][k] * cumulative[0][k]).im)
            .collect();
        within.push(simpson(&phase, h));
        totals.push([0, 1].map(|j| cumulative[j][terms[j].len() - 1].conj()));
    }
    (totals, within)
}

pub fn constraint_system(gate: &PreparedGate, detuning: f64, phases: [f64; 2]) -> Result<ConstraintSystem> {
    let grid = &gate.grid;
    let m = grid.segments();
    let profile = ForceProfile::new(detuning, phases, &gate.micromotion, grid)?;
    for label in ModeLabel::ALL {
        crate::gate::check_sampling(grid, gate.modes.get(label))?;
    }
    let mut matrix = DMatrix::zeros(CONSTRAINT_ROWS, m);
    let mut forms = [DMatrix::zeros(m, m), DMatrix::zeros(m, m)];
    for label in ModeLabel::ALL {
        let eta = lamb_dicke_of(&gate.lamb_dicke, label);
        let (b, d) = segment_integrals(gate, &profile, label);
        let mu = label.index();
        for (beta, bj) in b.iter().enumerate() {
            for (j, z) in bj.iter().enumerate() {
                let alpha = Complex64::i() * eta * z;
                matrix[(4 * mu + 2 * j, beta)] = alpha.re;
                matrix[(4 * mu + 2 * j + 1, beta)] = alpha.im;
            }
        }
        // γ_μ = −η² Σ Ω_β Ω_β' G'_{ββ'}.
        let form = &mut forms[mu];
        for beta in 0..m {
            form[(beta, beta)] = -eta * eta * d[beta];
            for earlier in 0..beta {
                let cross = (b[beta][0] * b[earlier][1].conj()).im
                    + (b[beta][1] * b[earlier][0].conj()).im;
                let value = -eta * eta * cross / 2.0;
                form[(beta, earlier)] = value;
                form[(earlier, beta)] = value;
            }
        }
    }
    let phase_form = &forms[1] - &forms[0];
    if matrix.iter().chain(phase_form.iter()).any(|x| !x.is_finite()) {
        return Err(Error::Numerical("non-finite constraint system".into()));
    }
    Ok(ConstraintSystem {
        duration: grid.duration(),
        detuning,
        phases,
        matrix,
        mode_phase_forms: forms,
        phase_form,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DesignOptions {
    /// Target conditional phase `θ₀`.
    pub target_phase: f64,
    /// Accept `θ = −θ₀` when only that sign is reachable.
    pub accept_opposite_phase: bool,
    /// Singular values below this fraction of the largest span the nullspace.
    pub null_threshold: f64,
    /// Largest displacement and phase error of a feasible design.
    pub tolerance: f64,
}

impl Default for DesignOptions {
    fn default() -> Self {
        Self {
            target_phase: FRAC_PI_4,
            accept_opposite_phase: false,
            null_threshold: 1e-10,
            tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DesignResult {
    pub schedule: PulseSchedule,
    /// `max |α_{μ,j}|`.
    pub residual_norm: f64,
    pub theta: f64,
    /// `Ω̃ = max |Ω_β|` (rad/s).
    pub max_rabi: f64,
    pub feasible: bool,
    pub nullity: usize,
    pub singular_values: Vec<f64>,
    pub diagnostic: Option<String>,
    /// Independent re-evaluation of the designed pulse.
    pub verification: Option<GateIntegrals>,
}

/// Orthonormal basis of the numerical nullspace, one column per direction.
fn nullspace(matrix: &DMatrix<f64>, threshold: f64) -> (DMatrix<f64>, Vec<f64>) {
    let (rows, cols) = matrix.shape();
    let mut padded = DMatrix::zeros(rows.max(cols), cols);
    padded.view_mut((0, 0), (rows, cols)).copy_from(matrix);
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors were requested");
    let sigma: Vec<f64> = svd.singular_values.iter().copied().collect();
    let largest = sigma.iter().copied().fold(0.0, f64::max);
    let mut reported: Vec<f64> = sigma.iter().copied().take(rows.min(cols)).collect();
    reported.sort_by(|a, b| b.total_cmp(a));
    let mut basis = Vec::new();
    for (k, s) in sigma.iter().enumerate() {
        if *s <= threshold * largest || largest == 0.0 {
            basis.push(v_t.row(k).transpose());
        }
    }
    let mut columns = DMatrix::zeros(cols, basis.len());
    for (k, b) in basis.iter().enumerate() {
        columns.set_column(k, b);
    }
    (columns, reported)
}

fn peak(v: &DVector<f64>) -> f64 {
    v.iter().map(|x| x.abs()).fold(0.0, f64::max)
}

/// Maximises `cᵀHc / ‖Nc‖∞²` over nullspace coordinates `c`, starting from
/// the leading eigenvector of `H`; the result minimises the peak Rabi
/// frequency at fixed phase.
fn best_direction(basis: &DMatrix<f64>, h: &DMatrix<f64>) -> Option<DVector<f64>> {
    let k = basis.ncols();
    let eig = SymmetricEigen::new(h.clone());
    let (top, _) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &l)| if l > best.1 { (i, l) } else { best });
    if eig.eigenvalues[top] <= 0.0 {
        return None;
    }
    let score = |c: &DVector<f64>| {
        let p = peak(&(basis * c));
        if p == 0.0 {
            f64::NEG_INFINITY
        } else {
            c.dot(&(h * c)) / (p * p)
        }
    };
    let mut c = eig.eigenvectors.column(top).into_owned();
    let mut best = score(&c);
    let mut step = 0.5;
    while step > 1e-12 && k > 1 {
        let mut improved = false;
        for axis in 0..k {
            for sign in [1.0, -1.0] {
                let mut trial = c.clone();
                trial[axis] += sign * step;
                let norm = trial.norm();
                if norm == 0.0 {
                    continue;
                }
                trial /= norm;
                let s = score(&trial);
                if s > best {
                    best = s;
                    c = trial;
                    improved = true;
                }
            }
        }
        if !improved {
            step /= 2.0;
        }
    }
    Some(basis * c)
}

/// Flips the sign so that the first non-negligible segment is positive.
fn canonical_sign(mut omega: Vec<f64>) -> Vec<f64> {
    let scale = omega.iter().map(|x| x.abs()).fold(0.0, f64::max);
    if let Some(first) = omega.iter().find(|x| x.abs() > 1e-12 * scale) {
        if *first < 0.0 {
            omega.iter_mut().for_each(|x| *x = -*x);
        }
    }
    omega
}

/// Purely algebraic design from a constraint system.
pub fn solve_segments(system: &ConstraintSystem, options: &DesignOptions) -> Result<DesignResult> {
    let m = system.segments();
    let (basis, singular_values) = nullspace(&system.matrix, options.null_threshold);
    let nullity = basis.ncols();
    let zero = PulseSchedule::new(system.duration, system.detuning, system.phases, vec![0.0; m])?;
    let infeasible = |diagnostic: String| DesignResult {
        schedule: zero.clone(),
        residual_norm: 0.0,
        theta: 0.0,
        max_rabi: 0.0,
        feasible: false,
        nullity,
        singular_values: singular_values.clone(),
        diagnostic: Some(diagnostic),
        verification: None,
    };
    if nullity == 0 {
        return Ok(infeasible(format!(
            "no pulse of {m} segments closes all {CONSTRAINT_ROWS} displacement constraints"
        )));
    }
    let reduced = basis.transpose() * &system.phase_form * &basis;
    let reduced = (&reduced + reduced.transpose()) * 0.5;
    let target = options.target_phase;
    let direction = match best_direction(&basis, &reduced) {
        Some(d) => Some((d, 1.0)),
        None if options.accept_opposite_phase => {
            best_direction(&basis, &(-&reduced)).map(|d| (d, -1.0))
        }
        None => None,
    };
    let Some((direction, sign)) = direction else {
        let eig = SymmetricEigen::new(reduced.clone());
        let reachable = if eig.eigenvalues.iter().any(|&l| l < 0.0) {
            "negative"
        } else {
            "no"
        };
        return Ok(infeasible(format!(
            "closed loops accumulate only {reachable} conditional phase (target {target})"
        )));
    };
    let g = quadratic(&system.phase_form, direction.as_slice());
    let omega: Vec<f64> = (direction * (target / g.abs()).sqrt()).iter().copied().collect();
    let omega = canonical_sign(omega);
    let schedule = PulseSchedule::new(system.duration, system.detuning, system.phases, omega)?;
    let integrals = system.integrals(&schedule.amplitudes);
    let theta = integrals.theta();
    let residual_norm = integrals.max_displacement();
    let goal = sign * target;
    let feasible =
        residual_norm < options.tolerance && (theta - goal).abs() < options.tolerance;
    Ok(DesignResult {
        max_rabi: schedule.max_rabi(),
        schedule,
        residual_norm,
        theta,
        feasible,
        nullity,
        singular_values,
        diagnostic: (!feasible).then(|| {
            format!("algebraic residual {residual_norm:e}, phase {theta} vs {goal}")
        }),
        verification: None,
    })
}

/// Designs a pulse on a prepared gate and re-verifies it with an
/// independent evaluation of the gate integrals.
pub fn design(
    gate: &PreparedGate,
    detuning: f64,
    phases: [f64; 2],
    options: &DesignOptions,
) -> Result<DesignResult> {
    let system = constraint_system(gate, detuning, phases)?;
    let mut result = solve_segments(&system, options)?;
    if !result.feasible {
        return Ok(result);
    }
    let check = gate.integrals(&result.schedule)?;
    let goal = result.theta.signum() * options.target_phase;
    result.residual_norm = check.max_displacement();
    result.theta = check.theta();
    result.feasible = result.residual_norm < options.tolerance
        && (result.theta - goal).abs() < options.tolerance;
    if !result.feasible {
        result.diagnostic = Some(format!(
            "verification residual {:e}, phase {} vs {goal}",
            result.residual_norm, result.theta
        ));
    }
    result.verification = Some(check);
    Ok(result)
}

/// The same design in a static harmonic trap at the same secular
/// frequencies.
pub fn static_baseline(
    model: &GateModel,
    duration: f64,
    detuning: f64,
    segments: usize,
    phases: [f64; 2],
    options: &DesignOptions,
) -> Result<DesignResult> {
    let gate = model.prepare_gate(duration, segments, Dynamics::Static)?;
    design(&gate, detuning, phases, options)
}

/// Best constant-amplitude gate at one duration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub duration: f64,
    pub fidelity: f64,
    /// Optimal Rabi frequency `Ω*` (rad/s).
    pub omega_star: f64,
    pub theta: f64,
    pub residual_norm: f64,
    /// Gate integrals at unit Rabi frequency.
    pub unit: GateIntegrals,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanOptions {
    /// Bracket `[lo, hi]` in units of the amplitude giving `|θ| = θ₀`.
    pub bracket: [f64; 2],
    /// Golden-section tolerance relative to the bracket width.
    pub tolerance: f64,
    pub target_phase: f64,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self {
            bracket: [0.5, 1.5],
            tolerance: 1e-4,
            target_phase: FRAC_PI_4,
        }
    }
}

/// `integrals` at Rabi frequency `omega`, from unit-amplitude integrals.
pub fn scale_integrals(unit: &GateIntegrals, omega: f64) -> GateIntegrals {
    GateIntegrals {
        alpha: unit.alpha.map(|row| row.map(|z| z * omega)),
        gamma: unit.gamma.map(|g| g * omega * omega),
        quadrature_change: unit.quadrature_change,
    }
}

/// Maximises a function on `[lo, hi]` by golden-section search; returns
/// the best point seen, including both ends.
pub fn golden_section_max<F>(f: F, lo: f64, hi: f64, tolerance: f64) -> Result<(f64, f64)>
where
    F: Fn(f64) -> Result<f64>,
{
    if !(lo < hi) {
        return Err(Error::InvalidConfiguration(format!("empty bracket [{lo}, {hi}]")));
    }
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    let mut best = if fc >= fd { (c, fc) } else { (d, fd) };
    while b - a > tolerance {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = f(d)?;
        }
        for (x, y) in [(c, fc), (d, fd)] {
            if y > best.1 {
                best = (x, y);
            }
        }
    }
    for x in [lo, hi] {
        let y = f(x)?;
        if y > best.1 {
            best = (x, y);
        }
    }
    Ok(best)
}

/// End node of the single-segment prefix of `gate.grid` closest to
/// `duration`, rounded to a multiple of 4 intervals.
pub fn prefix_end(gate: &PreparedGate, duration: f64) -> Result<usize> {
    let quads = (duration / gate.grid.step() / 4.0).round();
    let end = quads as usize * 4;
    if !(quads >= 1.0) || end > gate.grid.intervals() {
        return Err(Error::Domain(format!(
            "duration {duration:e} s is outside the prepared grid"
        )));
    }
    Ok(end)
}

/// Single-segment grid over `[0, duration]` whose nodes are the first
/// nodes of `gate.grid`; the duration snaps to [`prefix_end`].
pub fn prefix_grid(gate: &PreparedGate, duration: f64) -> Result<TimeGrid> {
    let end = prefix_end(gate, duration)?;
    TimeGrid::new(gate.grid.time(end), 1, end)
}

/// Optimal constant Rabi frequency given the unit-amplitude integrals of a
/// pulse of length `duration`.
pub fn optimise_amplitude(
    unit: GateIntegrals,
    duration: f64,
    thermal: &ThermalState,
    options: &ScanOptions,
) -> Result<ScanPoint> {
    let theta = unit.theta();
    if theta == 0.0 {
        return Err(Error::Numerical("the pulse accumulates no conditional phase".into()));
    }
    let reference = (options.target_phase / theta.abs()).sqrt();
    let [lo, hi] = options.bracket.map(|x| x * reference);
    let fidelity = |omega: f64| {
        fidelity_analytic_with_target(&scale_integrals(&unit, omega), thermal, options.target_phase)
            .map(|r| r.fidelity)
    };
    let (omega_star, f) = golden_section_max(fidelity, lo, hi, options.tolerance * (hi - lo))?;
    let at = scale_integrals(&unit, omega_star);
    Ok(ScanPoint {
        duration,
        fidelity: f,
        omega_star,
        theta: at.theta(),
        residual_norm: at.max_displacement(),
        unit,
    })
}

/// Optimal constant Rabi frequency at one duration.
pub fn single_segment_point(
    gate: &PreparedGate,
    grid: &TimeGrid,
    detuning: f64,
    phases: [f64; 2],
    thermal: &ThermalState,
    options: &ScanOptions,
) -> Result<ScanPoint> {
    let unit_schedule = PulseSchedule::constant(grid.duration(), detuning, phases, 1.0)?;
    let unit = gate.integrals_on(grid, &unit_schedule)?;
    optimise_amplitude(unit, grid.duration(), thermal, options)
}

/// One optimisation per duration, in input order. Durations snap to
/// [`prefix_end`]; all prefixes are integrated in a single pass.
pub fn single_segment_scan(
    gate: &PreparedGate,
    detuning: f64,
    phases: [f64; 2],
    durations: &[f64],
    thermal: &ThermalState,
    options: &ScanOptions,
) -> Result<Vec<Result<ScanPoint>>> {
    let ends: Vec<Result<usize>> = durations.iter().map(|&tau| prefix_end(gate, tau)).collect();
    let mut sorted: Vec<usize> = ends.iter().filter_map(|e| e.as_ref().ok().copied()).collect();
    sorted.sort_unstable();
    sorted.dedup();
    let unit = gate.prefix_integrals(detuning, phases, &sorted)?;
    Ok(ends
        .into_par_iter()
        .map(|end| {
            let end = end?;
            let k = sorted.binary_search(&end).expect("every end was integrated");
            let integrals = unit[k].clone()?;
            optimise_amplitude(integrals, gate.grid.time(end), thermal, options)
        })
        .collect())
}
