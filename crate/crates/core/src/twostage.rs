//! Micromotion-averaged approximation of the displacement integrals.
//!
//! The integrand `Ω(t) sin(μ_δ t + φ_j ± η_mm(t)) v(t)` is split into slow
//! functions times the first r.f. harmonic. Averaging over one r.f. period
//! turns the fast phase modulation into Bessel factors:
//!
//! * `I1 = ∫ sin(a0) J0(a1) b0 dt`
//! * `I2 = ∫ cos(a0) J1(a1) (e^{−iφ} A + e^{iφ} B) dt`
//!
//! where `b0`, `A` and `B` are the secular, upper and lower sideband parts
//! of `Ω v`. Harmonics `n ≥ 2` of both the drive and the mode are dropped.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::Serialize;

use crate::gate::{Ion, MicromotionPhase, PulseSchedule};
use crate::mathieu::{mode_function, ModeLabel};
use crate::model::GateModel;
use crate::quad::{simpson, TimeGrid};
use crate::trap::MathieuParameters;
use crate::{Error, Result};

/// Below this argument the power series is summed; above it the Hankel
/// expansion is.
const SERIES_LIMIT: f64 = 8.0;

/// Samples per period used for the Floquet harmonics.
const HARMONIC_SAMPLES: usize = 256;

/// Minimum slow-grid density, per period of the fastest slow oscillation.
pub const MIN_SLOW_SAMPLES: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BesselValues {
    pub j0: f64,
    pub j1: f64,
}

pub fn bessel(x: f64) -> BesselValues {
    BesselValues {
        j0: bessel_j0(x),
        j1: bessel_j1(x),
    }
}

pub fn bessel_j0(x: f64) -> f64 {
    let x = x.abs();
    if x < SERIES_LIMIT {
        series(0, x)
    } else {
        hankel(0, x)
    }
}

pub fn bessel_j1(x: f64) -> f64 {
    let s = x.signum();
    let x = x.abs();
    if x < SERIES_LIMIT {
        s * series(1, x)
    } else {
        s * hankel(1, x)
    }
}

/// `Σ_k (−1)^k (x/2)^{2k+n} / (k! (k+n)!)`.
fn series(order: u32, x: f64) -> f64 {
    let y = -0.25 * x * x;
    let mut term = if order == 0 { 1.0 } else { 0.5 * x };
    let mut sum = term;
    for k in 1..200 {
        term *= y / (k as f64 * (k + order as usize) as f64);
        sum += term;
        if term.abs() < 1e-17 * sum.abs().max(1e-300) {
            break;
        }
    }
    sum
}

/// Terms kept in the large-argument expansion of `J0` and `J1`. The
/// smallest term sits near these indices at the switch-over point, and
/// ending on a term of `P` halves the worst error on `[8, 20]` to 1e-9.
/// A fixed count keeps the result smooth in `x`.
const HANKEL_TERMS: [usize; 2] = [17, 18];

/// Large-argument expansion with [`HANKEL_TERMS`] terms.
fn hankel(order: u32, x: f64) -> f64 {
    let mu = 4.0 * (order * order) as f64;
    let mut p = 0.0;
    let mut q = 0.0;
    let mut term = 1.0;
    for k in 0..HANKEL_TERMS[order as usize] {
        if k > 0 {
            let odd = (2 * k - 1) as f64;
            term *= (mu - odd * odd) / (k as f64 * 8.0 * x);
        }
        match k % 4 {
            0 => p += term,
            1 => q += term,
            2 => p -= term,
            _ => q -= term,
        }
    }
    let chi = x - (0.5 * order as f64 + 0.25) * PI;
    (2.0 / (PI * x)).sqrt() * (p * chi.cos() - q * chi.sin())
}

/// Leading Floquet harmonics of a mode function. With the harmonics
/// indexed `[−2, 0, 2]`,
/// `v(t) ≈ Σ_n (C_n e^{iωt} + D_n e^{−iωt}) e^{inΩ_T t/2}`.
///
/// The counter-rotating part `D` is small but nonzero because `v` starts
/// from `v̇(0) = iω` rather than from a pure Floquet solution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FloquetHarmonics {
    pub label: ModeLabel,
    pub omega: f64,
    pub rf_frequency: f64,
    pub forward: [Complex64; 3],
    pub backward: [Complex64; 3],
    /// Largest dropped harmonic, `|C_{±4}|` or `|D_{±4}|`.
    pub neglected: f64,
}

impl FloquetHarmonics {
    /// Harmonics of the static mode `e^{iωt}`.
    pub fn harmonic(label: ModeLabel, omega: f64, rf_frequency: f64) -> Self {
        let zero = Complex64::default();
        Self {
            label,
            omega,
            rf_frequency,
            forward: [zero, Complex64::new(1.0, 0.0), zero],
            backward: [zero; 3],
            neglected: 0.0,
        }
    }

    /// Slow envelopes `[lower, secular, upper]` at time `t`.
    pub fn envelopes(&self, t: f64) -> [Complex64; 3] {
        let f = Complex64::from_polar(1.0, self.omega * t);
        let b = f.conj();
        [0, 1, 2].map(|k| self.forward[k] * f + self.backward[k] * b)
    }

    /// The truncated series at time `t`.
    pub fn evaluate(&self, t: f64) -> Complex64 {
        let fast = Complex64::from_polar(1.0, self.rf_frequency * t);
        let [lower, secular, upper] = self.envelopes(t);
        secular + upper * fast + lower * fast.conj()
    }
}

/// Harmonics from two periods of `v`. The Floquet components follow from
/// `v(ξ + π) = e^{iπν} v₊(ξ) + e^{−iπν} v₋(ξ)`; each is then Fourier
/// analysed by the trapezoid rule, `C_{2n} = (1/π) ∫_0^π e^{−i(ν+2n)ξ} v₊ dξ`.
pub fn floquet_harmonics(params: &MathieuParameters, label: ModeLabel) -> Result<FloquetHarmonics> {
    let half = params.rf_frequency / 2.0;
    let n = HARMONIC_SAMPLES;
    let xi: Vec<f64> = (0..2 * n).map(|k| PI * k as f64 / n as f64).collect();
    let times: Vec<f64> = xi.iter().map(|x| x / half).collect();
    let mode = mode_function(params, label, 1.0, &times)?;
    let nu = mode.omega / half;
    let shift = Complex64::from_polar(1.0, PI * nu);
    let denominator = shift - shift.conj();
    let coefficients = |sign: f64, harmonic: i32| {
        let sum: Complex64 = (0..n)
            .map(|k| {
                let (v, w) = (mode.v[k], mode.v[k + n]);
                let part = if sign > 0.0 { w - shift.conj() * v } else { shift * v - w };
                part * Complex64::from_polar(1.0, -(sign * nu + 2.0 * harmonic as f64) * xi[k])
            })
            .sum();
        sum / (denominator * n as f64)
    };
    let forward = [-1, 0, 1].map(|m| coefficients(1.0, m));
    let backward = [-1, 0, 1].map(|m| coefficients(-1.0, m));
    let neglected = [(1.0, -2), (1.0, 2), (-1.0, -2), (-1.0, 2)]
        .iter()
        .map(|&(s, m)| coefficients(s, m).norm())
        .fold(0.0, f64::max);
    Ok(FloquetHarmonics {
        label,
        omega: mode.omega,
        rf_frequency: params.rf_frequency,
        forward,
        backward,
        neglected,
    })
}

/// Slow and fast parts of the displacement integrand of one ion and mode.
///
/// The fast phase is `a1 cos(Ω_T t + φ)`; the mode envelope is
/// `Ω(t) e^{iωt}` times the harmonics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlowFastDecomposition {
    pub ion: Ion,
    pub schedule: PulseSchedule,
    pub harmonics: FloquetHarmonics,
    /// Constant part of the micromotion phase, `±k_δ f0 c0 L / 2`.
    pub offset: f64,
    /// `a1 = |k_δ f0 c1 L| / 2`.
    pub a1: f64,
    /// `φ`, either 0 or π.
    pub fast_phase: f64,
    /// `|c2/c1|`, the size of the dropped drive harmonic.
    pub drive_ratio: f64,
}

impl SlowFastDecomposition {
    pub fn a0(&self, t: f64) -> f64 {
        self.schedule.detuning * t + self.schedule.phases[self.ion.index()] + self.offset
    }

    /// `(b0, A, B)` at time `t`: secular, upper and lower sideband
    /// envelopes of `Ω v`.
    pub fn envelopes(&self, t: f64) -> Result<[Complex64; 3]> {
        let rabi = self.schedule.amplitude_at(t)?;
        Ok(self.envelopes_with(rabi, t))
    }

    fn envelopes_with(&self, rabi: f64, t: f64) -> [Complex64; 3] {
        let [lower, secular, upper] = self.harmonics.envelopes(t);
        [secular * rabi, upper * rabi, lower * rabi]
    }

    /// Real-valued sideband `b1 cos(Ω_T t + ϕ)` of `Re[Ω v]` and `Im[Ω v]`,
    /// as `[(b1, ϕ); 2]`.
    pub fn sidebands(&self, t: f64) -> Result<[(f64, f64); 2]> {
        let [_, upper, lower] = self.envelopes(t)?;
        let re = upper + lower.conj();
        let im = (upper - lower.conj()) * Complex64::new(0.0, -1.0);
        Ok([(re.norm(), re.arg()), (im.norm(), im.arg())])
    }

    /// First-harmonic reconstruction of `χ_j v` at time `t`.
    pub fn reconstruct(&self, t: f64) -> Result<Complex64> {
        let [b0, upper, lower] = self.envelopes(t)?;
        let fast = Complex64::from_polar(1.0, self.harmonics.rf_frequency * t);
        let phase = self.a0(t) + self.a1 * (self.harmonics.rf_frequency * t + self.fast_phase).cos();
        Ok((b0 + upper * fast + lower * fast.conj()) * phase.sin())
    }

    /// Micromotion-averaged integrand, split into its `J0` and `J1` parts.
    fn averaged(&self, rabi: f64, t: f64) -> (Complex64, Complex64) {
        let [b0, upper, lower] = self.envelopes_with(rabi, t);
        let BesselValues { j0, j1 } = bessel(self.a1);
        let a0 = self.a0(t);
        let rotate = Complex64::from_polar(1.0, self.fast_phase);
        (
            b0 * (a0.sin() * j0),
            (upper * rotate.conj() + lower * rotate) * (a0.cos() * j1),
        )
    }
}

/// Splits the integrand of `∫ χ_j v dt` into slow and fast parts.
pub fn decompose(
    schedule: &PulseSchedule,
    ion: Ion,
    harmonics: &FloquetHarmonics,
    micromotion: &MicromotionPhase,
) -> Result<SlowFastDecomposition> {
    let sign = ion.micromotion_sign();
    let (offset, depth, drive_ratio) = match &micromotion.drive {
        None => (0.0, 0.0, 0.0),
        Some(drive) => {
            if drive.truncation() < 2 {
                return Err(Error::TruncationFailure(format!(
                    "the two-stage integral needs c_2, the drive is truncated at {}",
                    drive.truncation()
                )));
            }
            let scale = 0.5 * micromotion.wave_vector * micromotion.length_scale * drive.f0;
            let ratio = if drive.c(1) == 0.0 { 0.0 } else { (drive.c(2) / drive.c(1)).abs() };
            (sign * scale * drive.c(0), sign * scale * drive.c(1), ratio)
        }
    };
    Ok(SlowFastDecomposition {
        ion,
        schedule: schedule.clone(),
        harmonics: *harmonics,
        offset,
        a1: depth.abs(),
        fast_phase: if depth < 0.0 { PI } else { 0.0 },
        drive_ratio,
    })
}

/// The two parts of the averaged integral `∫ χ_j v dt`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FastDisplacement {
    pub i1: Complex64,
    pub i2: Complex64,
    /// Effective Rabi-frequency reduction factor `J0(a1)`.
    pub reduction: f64,
}

impl FastDisplacement {
    pub fn total(&self) -> Complex64 {
        self.i1 + self.i2
    }

    /// Displacement `α = iη (I1 + I2)`.
    pub fn alpha(&self, eta: f64) -> Complex64 {
        Complex64::i() * eta * self.total()
    }
}

/// Segment-aligned slow grid with `per_period` samples per period of the
/// fastest slow oscillation `|μ_δ| + ω`.
pub fn slow_grid(decomp: &SlowFastDecomposition, per_period: f64) -> Result<TimeGrid> {
    let fastest = decomp.schedule.detuning.abs() + decomp.harmonics.omega;
    TimeGrid::with_max_step(
        decomp.schedule.duration,
        decomp.schedule.segments(),
        2.0 * PI / fastest / per_period,
    )
}

/// Integrates the averaged integrand over `grid`, which must match the
/// pulse segmentation.
pub fn fast_displacement(decomp: &SlowFastDecomposition, grid: &TimeGrid) -> Result<FastDisplacement> {
    let schedule = &decomp.schedule;
    if grid.segments() != schedule.segments()
        || (grid.duration() - schedule.duration).abs() > 1e-12 * schedule.duration
    {
        return Err(Error::InvalidConfiguration(
            "the slow grid does not match the pulse segmentation".into(),
        ));
    }
    let fastest = schedule.detuning.abs() + decomp.harmonics.omega;
    if grid.step() * fastest > 2.0 * PI / MIN_SLOW_SAMPLES * (1.0 + 1e-12) {
        return Err(Error::GridResolution(format!(
            "the slow grid needs at least {MIN_SLOW_SAMPLES} samples per period of {fastest:e} rad/s"
        )));
    }
    let mut i1 = Complex64::default();
    let mut i2 = Complex64::default();
    for (segment, &rabi) in schedule.amplitudes.iter().enumerate() {
        let (first, second): (Vec<_>, Vec<_>) = grid
            .segment_nodes(segment)
            .map(|node| decomp.averaged(rabi, grid.time(node)))
            .unzip();
        i1 += simpson(&first, grid.step());
        i2 += simpson(&second, grid.step());
    }
    Ok(FastDisplacement {
        i1,
        i2,
        reduction: bessel_j0(decomp.a1),
    })
}

/// Two-stage displacement integrals `[mode][ion]` of a pulse in the
/// micromotion model, on slow grids with `per_period` samples.
pub fn model_fast_displacements(
    model: &GateModel,
    schedule: &PulseSchedule,
    per_period: f64,
) -> Result<[[FastDisplacement; 2]; 2]> {
    let micromotion = model.micromotion_phase(&[]);
    let mut out = [[None; 2]; 2];
    for label in ModeLabel::ALL {
        let harmonics = floquet_harmonics(&model.mathieu(label), label)?;
        for ion in Ion::BOTH {
            let decomp = decompose(schedule, ion, &harmonics, &micromotion)?;
            let grid = slow_grid(&decomp, per_period)?;
            out[label.index()][ion.index()] = Some(fast_displacement(&decomp, &grid)?);
        }
    }
    Ok(out.map(|row| row.map(|x| x.expect("every entry is filled"))))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Forty terms of the power series, summed independently.
    fn series_oracle(order: i32, x: f64) -> f64 {
        let mut sum = 0.0;
        for k in 0..40 {
            let mut term = (x / 2.0).powi(2 * k + order);
            for j in 1..=k {
                term /= j as f64;
            }
            for j in 1..=(k + order) {
                term /= j as f64;
            }
            sum += if k % 2 == 0 { term } else { -term };
        }
        sum
    }

    #[test]
    fn bessel_values_at_small_arguments() {
        assert_eq!(bessel_j0(0.0), 1.0);
        assert_eq!(bessel_j1(0.0), 0.0);
        assert!((bessel_j0(1.0) - 0.76519769).abs() < 1e-8);
        assert!((bessel_j1(1.0) - 0.44005059).abs() < 1e-8);
        assert!((bessel_j0(1.0) - series_oracle(0, 1.0)).abs() < 1e-14);
    }

    #[test]
    fn bessel_matches_reference_values() {
        // mpmath at 30 digits.
        let cases = [
            (2.404825557695773, 0.0, 0.51914749728946674),
            (5.0, -0.1775967713143383, -0.32757913759146522),
            (8.0, 0.17165080713755391, 0.23463634685391462),
            (10.0, -0.24593576445134834, 0.043472746168861437),
            (11.9, 0.025049441699589564, -0.22898324966192407),
            (12.1, 0.069666773606807388, -0.21574897337692478),
            (12.5, 0.1468840547004211, -0.16548380461475972),
            (15.0, -0.014224472826780773, 0.20510403861352276),
            (20.0, 0.16702466434058315, 0.066833124175850046),
        ];
        for (x, j0, j1) in cases {
            assert!((bessel_j0(x) - j0).abs() < 1e-9, "J0({x}) = {}", bessel_j0(x));
            assert!((bessel_j1(x) - j1).abs() < 1e-9, "J1({x}) = {}", bessel_j1(x));
        }
    }

    #[test]
    fn bessel_parity() {
        assert_eq!(bessel_j0(-3.3), bessel_j0(3.3));
        assert_eq!(bessel_j1(-3.3), -bessel_j1(3.3));
        assert_eq!(bessel_j1(-14.0), -bessel_j1(14.0));
    }

    #[test]
    fn static_harmonics_reconstruct_exactly() {
        let h = FloquetHarmonics::harmonic(ModeLabel::Cm, 2.0, 50.0);
        let schedule = PulseSchedule::constant(3.0, 1.5, [0.2, -0.1], 0.7).unwrap();
        let d = decompose(&schedule, Ion::Two, &h, &MicromotionPhase::none(0)).unwrap();
        assert_eq!(d.a1, 0.0);
        for t in [0.0, 0.4, 1.7, 2.9] {
            let exact = Complex64::from_polar(1.0, 2.0 * t) * 0.7 * (1.5 * t - 0.1).sin();
            assert!((d.reconstruct(t).unwrap() - exact).norm() < 1e-14);
        }
    }
    #[test]
    fn without_micromotion_i1_is_the_exact_integral() {
        use crate::gate::{displacement, QuadratureOptions};
        use crate::mathieu::ModeFunction;
        let omega = 1.3;
        let schedule = PulseSchedule::new(6.0, 0.8, [0.4, 1.1], vec![0.5, -1.2, 0.9]).unwrap();
        let grid = TimeGrid::new(6.0, 3, 512).unwrap();
        let mode = ModeFunction::harmonic(ModeLabel::Rel, omega, 1.0, &grid.times()).unwrap();
        let none = MicromotionPhase::none(grid.len());
        let exact = displacement(&schedule, &mode, 1.0, &none, &grid, QuadratureOptions::default()).unwrap();
        let h = FloquetHarmonics::harmonic(ModeLabel::Rel, omega, 100.0);
        for ion in Ion::BOTH {
            let d = decompose(&schedule, ion, &h, &none).unwrap();
            let f = fast_displacement(&d, &slow_grid(&d, 512.0).unwrap()).unwrap();
            assert_eq!(f.i2, Complex64::default());
            assert_eq!(f.reduction, 1.0);
            let err = (f.alpha(1.0) - exact[ion.index()]).norm();
            assert!(err < 1e-9, "{err:e}");
        }
    }

    #[test]
    fn example_trap_reconstruction() {
        use crate::model::{GateModel, Numerics};
        use crate::trap::beryllium_example;
        let model = GateModel::new(beryllium_example(), Numerics::default()).unwrap();
        let drive = &model.equilibrium.drive;
        let trf = model.rf_period();
        let times: Vec<f64> = (0..200).map(|k| 0.37 * trf * k as f64).collect();
        let micromotion = model.micromotion_phase(&times);
        let schedule = PulseSchedule::constant(times[199], 1e6, [0.0, 0.0], 1.0).unwrap();
        for label in ModeLabel::ALL {
            let h = floquet_harmonics(&model.mathieu(label), label).unwrap();
            let mode = model.mode(label, crate::model::Dynamics::Micromotion, &times).unwrap();
            for (t, v) in times.iter().zip(&mode.v) {
                assert!((h.evaluate(*t) - v).norm() < 3.0 * h.neglected, "{label:?} at {t}");
            }
            for ion in Ion::BOTH {
                let d = decompose(&schedule, ion, &h, &micromotion).unwrap();
                let expected = 0.5 * model.trap.wave_vector * model.separation() * drive.f0 * drive.c(1).abs();
                assert!((d.a1 - expected).abs() < 1e-12 * expected);
                assert!(d.a1 > 1.0 && d.a1 < 10.0);
                // The dropped drive harmonics bound the fast-phase residual.
                for (k, &t) in times.iter().enumerate() {
                    let sign = ion.micromotion_sign();
                    let first = d.offset + d.a1 * (model.trap.rf_frequency * t + d.fast_phase).cos();
                    let residual = (sign * micromotion.samples[k] - first).abs();
                    assert!(residual <= 1.01 * d.a1 * d.drive_ratio, "residual {residual}");
                }
            }
        }
    }

    #[test]
    fn shallow_drive_is_rejected() {
        use crate::mathieu::DriveSolution;
        let drive = DriveSolution {
            a: -0.04,
            q: 0.28,
            f0: 0.1,
            coefficients: vec![1.0, -0.1],
        };
        let mm = MicromotionPhase::new(&drive, 1e-5, 8e6, 1e9, &[]);
        let h = FloquetHarmonics::harmonic(ModeLabel::Cm, 1.0, 1e9);
        let schedule = PulseSchedule::constant(1.0, 1.0, [0.0; 2], 1.0).unwrap();
        assert!(matches!(
            decompose(&schedule, Ion::One, &h, &mm),
            Err(Error::TruncationFailure(_))
        ));
    }

    #[test]
    fn coarse_slow_grid_is_rejected() {
        let h = FloquetHarmonics::harmonic(ModeLabel::Cm, 1.0, 100.0);
        let schedule = PulseSchedule::constant(10.0, 1.0, [0.0; 2], 1.0).unwrap();
        let d = decompose(&schedule, Ion::One, &h, &MicromotionPhase::none(0)).unwrap();
        let grid = TimeGrid::new(10.0, 1, 8).unwrap();
        assert!(matches!(fast_displacement(&d, &grid), Err(Error::GridResolution(_))));
    }
}
