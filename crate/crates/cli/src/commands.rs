//! The four subcommands. Each writes `<command>.manifest.json` and its data
//! files into the output directory and returns text for the terminal.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use mmgate_core::design::{design, optimise_amplitude, DesignResult, ScanPoint};
use mmgate_core::fidelity::{
    assemble_curves, fidelity_analytic_with_target, scan_rows, CurvePoint, FidelityMethod, ScanRow,
    ScanVariant, ThermalState,
};
use mmgate_core::gate::{GateIntegrals, Ion, PulseSchedule};
use mmgate_core::mathieu::ModeLabel;
use mmgate_core::model::{Dynamics, GateModel, PreparedGate};
use mmgate_core::twostage::{decompose, floquet_harmonics};
use mmgate_core::Error;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::journal::{Journal, Outcome};
use crate::manifest::{Derived, RunManifest};
use crate::output::{number, write_csv, write_json};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Trap,
    Modes,
    Design,
    Scan,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Trap => "trap",
            Command::Modes => "modes",
            Command::Design => "design",
            Command::Scan => "scan",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Options {
    pub config: RunConfig,
    /// Overrides `output.directory` when present.
    pub out: Option<PathBuf>,
    /// Use the static harmonic trap instead of the micromotion model.
    pub static_trap: bool,
    /// Worker threads for the scan pool.
    pub workers: usize,
}

/// What a command leaves for the terminal.
#[derive(Debug, Clone, Default)]
pub struct Summary {
    pub stdout: String,
    pub warnings: Vec<String>,
    pub files: Vec<PathBuf>,
}

struct Context {
    config: RunConfig,
    out: PathBuf,
    dynamics: Dynamics,
    model: GateModel,
    manifest: String,
}

impl Context {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn detuning(&self) -> f64 {
        self.config.laser.detuning_over_omega_cm * self.model.omega_cm
    }
}

/// Runs `command` inside a pool of `options.workers` threads.
pub fn run(command: Command, options: &Options) -> Result<Summary, CliError> {
    if options.workers == 0 {
        return Err(CliError::Config("--workers must be at least 1".into()));
    }
    let mut config = options.config.clone();
    config.validate()?;
    if let Some(out) = &options.out {
        config.output.directory = out.display().to_string();
    }
    let out = PathBuf::from(&config.output.directory);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.workers)
        .build()
        .map_err(|e| CliError::Config(format!("cannot start {} workers: {e}", options.workers)))?;
    pool.install(|| {
        let model = GateModel::new(config.trap_configuration(), config.numerics)?;
        fs::create_dir_all(&out).map_err(|e| CliError::io(&out, e))?;
        let manifest = format!("{}.manifest.json", command.name());
        let record = RunManifest::new(command.name(), options.static_trap, &config, &model);
        let mut summary = Summary::default();
        let manifest_path = out.join(&manifest);
        write_json(&manifest_path, &record)?;
        summary.files.push(manifest_path);
        let ctx = Context {
            config,
            out,
            dynamics: if options.static_trap { Dynamics::Static } else { Dynamics::Micromotion },
            model,
            manifest,
        };
        match command {
            Command::Trap => trap(&ctx, &mut summary),
            Command::Modes => modes(&ctx, &mut summary),
            Command::Design => design_command(&ctx, &mut summary),
            Command::Scan => scan(&ctx, &mut summary),
        }?;
        Ok(summary)
    })
}

fn trap(ctx: &Context, summary: &mut Summary) -> Result<(), CliError> {
    summary.stdout = Derived::of(&ctx.model).table();
    Ok(())
}

fn modes(ctx: &Context, summary: &mut Summary) -> Result<(), CliError> {
    let m = &ctx.config.modes;
    let tz = ctx.model.secular_period();
    let steps = (m.window_over_tz / m.step_over_tz).round() as usize;
    let times: Vec<f64> = (0..=steps).map(|i| i as f64 * m.step_over_tz * tz).collect();
    let cm = ctx.model.mode(ModeLabel::Cm, ctx.dynamics, &times)?;
    let rel = ctx.model.mode(ModeLabel::Rel, ctx.dynamics, &times)?;
    let eta_mm = match ctx.dynamics {
        Dynamics::Micromotion => ctx.model.micromotion_phase(&times).samples,
        Dynamics::Static => vec![0.0; times.len()],
    };
    let rows: Vec<Vec<String>> = (0..times.len())
        .map(|i| {
            vec![
                number(i as f64 * m.step_over_tz),
                number(cm.v[i].re),
                number(cm.v[i].im),
                number(rel.v[i].re),
                number(rel.v[i].im),
                number(eta_mm[i]),
            ]
        })
        .collect();
    let path = ctx.path("modes.csv");
    write_csv(
        &path,
        &ctx.manifest,
        &["t_over_Tz", "re_v_cm", "im_v_cm", "re_v_r", "im_v_r", "eta_mm"],
        &rows,
    )?;
    let (lo, hi) = eta_mm
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    summary.stdout = format!("{} rows, eta_mm peak-to-peak {:.4}\n", rows.len(), hi - lo);
    summary.files.push(path);
    Ok(())
}

/// Micromotion depth seen by each ion and the size of the neglected
/// harmonics of the averaged approximation.
#[derive(Debug, Clone, Serialize)]
pub struct TwoStageDiagnostics {
    /// `a1` per ion (rad).
    pub micromotion_depth: [f64; 2],
    /// Effective Rabi-frequency reduction factor `J0(a1)` per ion.
    pub reduction: [f64; 2],
    /// `|c2/c1|`.
    pub harmonic_ratio: f64,
}

/// The `design` report.
#[derive(Debug, Clone, Serialize)]
pub struct GateReport {
    pub dynamics: Dynamics,
    pub segments: usize,
    pub duration_s: f64,
    pub duration_over_tz: f64,
    pub detuning_rad_s: f64,
    pub phases_rad: [f64; 2],
    pub feasible: bool,
    pub diagnostic: Option<String>,
    /// Achieved conditional phase `θ`.
    pub theta: f64,
    /// Target the fidelity refers to, `±θ₀` following the sign of `θ`.
    pub target_phase: f64,
    /// `Ω̃ = max |Ω_β|` (rad/s).
    pub max_rabi_rad_s: f64,
    pub max_rabi_mhz: f64,
    pub amplitudes_rad_s: Vec<f64>,
    pub residual_displacement: f64,
    pub nullity: Option<usize>,
    pub singular_values: Vec<f64>,
    /// Thermal fidelity at the configured temperature.
    pub fidelity: Option<f64>,
    pub fidelity_ground_state: Option<f64>,
    pub nbar: [f64; 2],
    pub integrals: Option<GateIntegrals>,
    pub two_stage: Option<TwoStageDiagnostics>,
}

fn two_stage_diagnostics(model: &GateModel, schedule: &PulseSchedule) -> Result<TwoStageDiagnostics, CliError> {
    let harmonics = floquet_harmonics(&model.mathieu(ModeLabel::Cm), ModeLabel::Cm)?;
    let micromotion = model.micromotion_phase(&[]);
    let per_ion = Ion::BOTH.map(|ion| decompose(schedule, ion, &harmonics, &micromotion));
    let [one, two] = per_ion;
    let (one, two) = (one?, two?);
    Ok(TwoStageDiagnostics {
        micromotion_depth: [one.a1, two.a1],
        reduction: [
            mmgate_core::twostage::bessel_j0(one.a1),
            mmgate_core::twostage::bessel_j0(two.a1),
        ],
        harmonic_ratio: one.drive_ratio,
    })
}

/// Designs the configured gate on a prepared grid: the segment solver for
/// `m > 1`, the optimal constant amplitude for `m = 1`.
fn solve(config: &RunConfig, model: &GateModel, gate: &PreparedGate, detuning: f64) -> Result<DesignResult, CliError> {
    let phases = config.laser.phases_rad;
    if gate.segments() > 1 {
        return Ok(design(gate, detuning, phases, &config.design_options())?);
    }
    let unit = gate.integrals(&PulseSchedule::constant(gate.duration(), detuning, phases, 1.0)?)?;
    let point = optimise_amplitude(unit, gate.duration(), &model.thermal, &config.scan_options())?;
    let schedule = PulseSchedule::constant(gate.duration(), detuning, phases, point.omega_star)?;
    Ok(DesignResult {
        max_rabi: point.omega_star.abs(),
        residual_norm: point.residual_norm,
        theta: point.theta,
        feasible: true,
        nullity: 0,
        singular_values: Vec::new(),
        diagnostic: None,
        verification: Some(gate.integrals(&schedule)?),
        schedule,
    })
}

fn report(ctx: &Context, gate: &PreparedGate, result: &DesignResult) -> Result<GateReport, CliError> {
    let model = &ctx.model;
    let target = if result.theta < 0.0 {
        -ctx.config.design.target_phase_rad
    } else {
        ctx.config.design.target_phase_rad
    };
    let fidelity = |thermal: &ThermalState| -> Result<Option<f64>, CliError> {
        Ok(match &result.verification {
            Some(ints) if result.feasible || gate.segments() == 1 => {
                Some(fidelity_analytic_with_target(ints, thermal, target)?.fidelity)
            }
            _ => None,
        })
    };
    let two_stage = match ctx.dynamics {
        Dynamics::Micromotion => Some(two_stage_diagnostics(model, &result.schedule)?),
        Dynamics::Static => None,
    };
    Ok(GateReport {
        dynamics: ctx.dynamics,
        segments: gate.segments(),
        duration_s: gate.duration(),
        duration_over_tz: gate.duration() / model.secular_period(),
        detuning_rad_s: ctx.detuning(),
        phases_rad: ctx.config.laser.phases_rad,
        feasible: result.feasible,
        diagnostic: result.diagnostic.clone(),
        theta: result.theta,
        target_phase: target,
        max_rabi_rad_s: result.max_rabi,
        max_rabi_mhz: result.max_rabi / (2.0 * std::f64::consts::PI * 1e6),
        amplitudes_rad_s: result.schedule.amplitudes.clone(),
        residual_displacement: result.residual_norm,
        nullity: (gate.segments() > 1).then_some(result.nullity),
        singular_values: result.singular_values.clone(),
        fidelity: fidelity(&model.thermal)?,
        fidelity_ground_state: fidelity(&ThermalState::ground())?,
        nbar: model.thermal.nbar,
        integrals: result.verification,
        two_stage,
    })
}

fn design_command(ctx: &Context, summary: &mut Summary) -> Result<(), CliError> {
    let model = &ctx.model;
    let d = &ctx.config.design;
    let gate = model.prepare_gate(d.tau_over_tz * model.secular_period(), d.segments, ctx.dynamics)?;
    let result = solve(&ctx.config, model, &gate, ctx.detuning())?;
    let report = report(ctx, &gate, &result)?;
    let path = ctx.path("design.json");
    write_json(&path, &report)?;
    summary.files.push(path);
    if ctx.config.output.waveform {
        let tz = model.secular_period();
        let segment = gate.duration() / gate.segments() as f64;
        let rows: Vec<Vec<String>> = result
            .schedule
            .amplitudes
            .iter()
            .enumerate()
            .map(|(k, &omega)| {
                vec![
                    (k + 1).to_string(),
                    number(k as f64 * segment / tz),
                    number((k + 1) as f64 * segment / tz),
                    number(omega),
                ]
            })
            .collect();
        let path = ctx.path("waveform.csv");
        write_csv(
            &path,
            &ctx.manifest,
            &["segment", "t_start_over_Tz", "t_end_over_Tz", "omega_rad_s"],
            &rows,
        )?;
        summary.files.push(path);
    }
    summary.stdout = format!(
        "{} design, {} segments, tau = {:.4} T_z: feasible = {}, theta = {:.6}, max |Omega|/2pi = {:.4} MHz, F = {}\n",
        match ctx.dynamics {
            Dynamics::Micromotion => "micromotion",
            Dynamics::Static => "static",
        },
        report.segments,
        report.duration_over_tz,
        report.feasible,
        report.theta,
        report.max_rabi_mhz,
        report.fidelity.map_or("n/a".into(), |f| format!("{f:.8}")),
    );
    if !result.feasible {
        return Err(Error::Infeasible(result.diagnostic.unwrap_or_else(|| "no admissible pulse".into())).into());
    }
    Ok(())
}

/// Journaled results of one single-segment scan duration.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct FidelityRow {
    micromotion: Option<Outcome<CurvePoint>>,
    static_point: Option<Outcome<ScanPoint>>,
    cross: Option<Outcome<CurvePoint>>,
}

impl FidelityRow {
    fn failed(variants: &[ScanVariant], message: &str) -> Self {
        let has = |v: &[ScanVariant]| variants.iter().any(|x| v.contains(x));
        Self {
            micromotion: has(&[ScanVariant::Micromotion]).then(|| Outcome::Err(message.to_string())),
            static_point: has(&[
                ScanVariant::Static,
                ScanVariant::StaticFixed,
                ScanVariant::StaticDesignUnderMicromotion,
            ])
            .then(|| Outcome::Err(message.to_string())),
            cross: has(&[ScanVariant::StaticDesignUnderMicromotion]).then(|| Outcome::Err(message.to_string())),
        }
    }

    fn into_scan_row(self) -> ScanRow {
        ScanRow {
            micromotion: self.micromotion.map(Outcome::into_result),
            static_point: self.static_point.map(Outcome::into_result),
            cross: self.cross.map(Outcome::into_result),
        }
    }
}

/// Journaled results of one segmented-design scan duration.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct DesignRow {
    micromotion: Option<Outcome<CurvePoint>>,
    static_trap: Option<Outcome<CurvePoint>>,
}

/// Journal key: everything that determines the data rows.
fn journal_key(ctx: &Context, variants: &[ScanVariant]) -> serde_json::Value {
    let mut config = ctx.config.clone();
    config.output = Default::default();
    serde_json::json!({
        "version": env!("CARGO_PKG_VERSION"),
        "config": config,
        "variants": variants,
    })
}

/// Runs `compute` on every chunk of indices not yet in the journal, in
/// parallel, recording each chunk as it completes.
fn run_chunks<T, F>(journal: Journal<T>, total: usize, chunk: usize, compute: F) -> Result<Vec<T>, CliError>
where
    T: Serialize + for<'de> Deserialize<'de> + Clone + Send,
    F: Fn(std::ops::Range<usize>) -> Vec<T> + Sync,
{
    let pending: Vec<std::ops::Range<usize>> = (0..total)
        .step_by(chunk)
        .map(|start| start..(start + chunk).min(total))
        .filter(|r| r.clone().any(|i| journal.get(i).is_none()))
        .collect();
    let journal = Mutex::new(journal);
    pending.par_iter().try_for_each(|range| {
        let rows = compute(range.clone());
        let entries = range.clone().zip(rows).collect();
        journal.lock().expect("journal lock").record(entries)
    })?;
    let journal = journal.into_inner().expect("journal lock");
    Ok((0..total)
        .map(|i| journal.get(i).cloned().expect("every chunk was recorded"))
        .collect())
}

fn curve_rows(
    durations_over_tz: &[f64],
    tz: f64,
    curve: &[mmgate_core::Result<CurvePoint>],
    label: &str,
    warnings: &mut Vec<String>,
) -> (Vec<Vec<String>>, usize) {
    let mut failures = 0;
    let rows = curve
        .iter()
        .zip(durations_over_tz)
        .map(|(point, &requested)| match point {
            Ok(p) => vec![
                number(p.duration / tz),
                number(p.fidelity),
                number(p.infidelity()),
                number(p.omega_star),
                match p.method {
                    FidelityMethod::Analytic => "analytic".into(),
                    FidelityMethod::FockOracle => "fock-oracle".into(),
                },
            ],
            Err(e) => {
                failures += 1;
                warnings.push(format!("{label} at tau = {requested} T_z: {e}"));
                let nan = number(f64::NAN);
                vec![number(requested), nan.clone(), nan.clone(), nan, "failed".into()]
            }
        })
        .collect();
    (rows, failures)
}

const SCAN_HEADER: [&str; 5] = ["tau_over_Tz", "fidelity", "infidelity", "omega_star_rad_s", "method"];

fn scan(ctx: &Context, summary: &mut Summary) -> Result<(), CliError> {
    let model = &ctx.model;
    let tz = model.secular_period();
    let taus = ctx.config.scan_durations_over_tz();
    let chunk = ctx.config.design.scan.chunk_points;
    let journal_path = ctx.path("scan.journal.jsonl");
    let curves: Vec<(String, Vec<mmgate_core::Result<CurvePoint>>)> = if ctx.config.design.segments == 1 {
        let mut variants = ctx.config.design.scan.variants.clone();
        if ctx.dynamics == Dynamics::Static {
            variants.retain(|v| matches!(v, ScanVariant::Static | ScanVariant::StaticFixed));
            if variants.is_empty() {
                return Err(CliError::Config(
                    "--static leaves no variant; request `static` or `static-fixed`".into(),
                ));
            }
        }
        let journal = Journal::open(&journal_path, journal_key(ctx, &variants))?;
        let rows = run_chunks(journal, taus.len(), chunk, |range| {
            let durations: Vec<f64> = taus[range.clone()].iter().map(|t| t * tz).collect();
            let options = ctx.config.scan_options();
            match scan_rows(
                model,
                ctx.detuning(),
                ctx.config.laser.phases_rad,
                &durations,
                &variants,
                &model.thermal,
                &options,
            ) {
                Ok(rows) => rows
                    .into_iter()
                    .map(|r| FidelityRow {
                        micromotion: r.micromotion.map(Outcome::from),
                        static_point: r.static_point.map(Outcome::from),
                        cross: r.cross.map(Outcome::from),
                    })
                    .collect(),
                Err(e) => vec![FidelityRow::failed(&variants, &e.to_string()); range.len()],
            }
        })?;
        let rows: Vec<ScanRow> = rows.into_iter().map(FidelityRow::into_scan_row).collect();
        assemble_curves(&rows, &variants, &model.thermal, &ctx.config.scan_options())?
            .into_iter()
            .map(|(v, c)| (v.label().to_string(), c))
            .collect()
    } else {
        let dynamics: Vec<Dynamics> = match ctx.dynamics {
            Dynamics::Static => vec![Dynamics::Static],
            Dynamics::Micromotion => vec![Dynamics::Micromotion, Dynamics::Static],
        };
        let journal = Journal::open(&journal_path, journal_key(ctx, &[]))?;
        let point = |tau_over_tz: f64, dynamics: Dynamics| -> Outcome<CurvePoint> {
            let attempt = || -> Result<CurvePoint, CliError> {
                let gate = model.prepare_gate(tau_over_tz * tz, ctx.config.design.segments, dynamics)?;
                let result = solve(&ctx.config, model, &gate, ctx.detuning())?;
                if !result.feasible {
                    return Err(Error::Infeasible(result.diagnostic.unwrap_or_default()).into());
                }
                let ints = result.verification.expect("feasible designs are verified");
                let target = ctx.config.design.target_phase_rad * result.theta.signum();
                Ok(CurvePoint {
                    duration: gate.duration(),
                    fidelity: fidelity_analytic_with_target(&ints, &model.thermal, target)?.fidelity,
                    omega_star: result.max_rabi,
                    method: FidelityMethod::Analytic,
                })
            };
            match attempt() {
                Ok(p) => Outcome::Ok(p),
                Err(e) => Outcome::Err(e.to_string()),
            }
        };
        let rows = run_chunks(journal, taus.len(), chunk, |range| {
            taus[range]
                .par_iter()
                .map(|&t| DesignRow {
                    micromotion: dynamics.contains(&Dynamics::Micromotion).then(|| point(t, Dynamics::Micromotion)),
                    static_trap: dynamics.contains(&Dynamics::Static).then(|| point(t, Dynamics::Static)),
                })
                .collect()
        })?;
        let mut curves = Vec::new();
        if dynamics.contains(&Dynamics::Micromotion) {
            let c = rows.iter().map(|r| r.micromotion.clone().expect("computed").into_result()).collect();
            curves.push(("micromotion".to_string(), c));
        }
        let c = rows.iter().map(|r| r.static_trap.clone().expect("computed").into_result()).collect();
        curves.push(("static".to_string(), c));
        curves
    };

    let mut failures = 0;
    let mut points = 0;
    let mut lines = String::new();
    for (label, curve) in &curves {
        let (rows, failed) = curve_rows(&taus, tz, curve, label, &mut summary.warnings);
        failures += failed;
        points += rows.len();
        let path = ctx.path(&format!("scan_{label}.csv"));
        write_csv(&path, &ctx.manifest, &SCAN_HEADER, &rows)?;
        summary.files.push(path);
        let ok: Vec<&CurvePoint> = curve.iter().filter_map(|p| p.as_ref().ok()).collect();
        if ctx.config.design.segments == 1 {
            if let Some(best) = ok.iter().max_by(|a, b| a.fidelity.total_cmp(&b.fidelity)) {
                lines.push_str(&format!(
                    "{label:<32} best F = {:.8} (1 - F = {:.3e}) at tau = {:.6} T_z, Omega = {:.6e} rad/s\n",
                    best.fidelity,
                    best.infidelity(),
                    best.duration / tz,
                    best.omega_star
                ));
            }
        } else if let Some(best) = ok.iter().min_by(|a, b| a.omega_star.total_cmp(&b.omega_star)) {
            let worst = ok.iter().map(|p| p.fidelity).fold(f64::INFINITY, f64::min);
            lines.push_str(&format!(
                "{label:<12} smallest max|Omega| = {:.6e} rad/s at tau = {:.6} T_z, lowest F = {:.8}\n",
                best.omega_star,
                best.duration / tz,
                worst
            ));
        }
    }
    summary.stdout = lines;
    summary.files.push(journal_path);
    if failures == points {
        return Err(CliError::ScanFailed(summary.warnings.first().cloned().unwrap_or_default()));
    }
    Ok(())
}

/// Reads and parses a configuration file.
pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    RunConfig::from_json(&text)
}
