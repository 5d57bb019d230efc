//! Homogeneous and driven Mathieu equations `u'' + (a − 2q cos 2ξ) u = f0`.
//!
//! Mode functions on long time grids are assembled from the fundamental
//! solutions over a single period `[0, π]` and powers of the monodromy
//! matrix, so their accuracy does not degrade with the number of r.f.
//! periods covered.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::constants::CODATA_2018;
use crate::ode::{self, Tolerance};
use crate::trap::MathieuParameters;
use crate::{Error, Result};

/// Largest admissible spacing of a Mathieu-time output grid.
pub const MAX_XI_STEP: f64 = PI / 64.0;

/// Slack on `|trace| ≤ 2` absorbing integration error at band edges.
pub const STABILITY_SLACK: f64 = 1e-9;

/// Residues closer than this share one integration point.
const RESIDUE_MERGE: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MonodromyResult {
    pub trace: f64,
    /// Principal characteristic exponent `ν ∈ [0, 1]`; for unstable
    /// parameters the real part of the exponent (0 or 1).
    pub exponent: f64,
    pub stable: bool,
    /// `[[C(π), S(π)], [C'(π), S'(π)]]`.
    pub matrix: [[f64; 2]; 2],
}

impl MonodromyResult {
    fn from_matrix(matrix: [[f64; 2]; 2]) -> Self {
        let [[m11, m12], [m21, m22]] = matrix;
        let trace = m11 + m22;
        let stable = trace.abs() <= 2.0 + STABILITY_SLACK;
        // With det M = 1, sin²(πν) = 1 − (tr/2)² = −M12 M21 − (M11 − M22)²/4,
        // which stays accurate when ν is close to 0 or 1.
        let sin_sq = -m12 * m21 - 0.25 * (m11 - m22).powi(2);
        let exponent = if stable {
            sin_sq.max(0.0).sqrt().atan2(trace / 2.0) / PI
        } else if trace > 0.0 {
            0.0
        } else {
            1.0
        };
        Self {
            trace,
            exponent,
            stable,
            matrix,
        }
    }
}

fn tolerance() -> Tolerance {
    Tolerance::default()
}

/// Fundamental solutions `(C, C', S, S')` with `C(0) = S'(0) = 1`,
/// `C'(0) = S(0) = 0`, sampled at the non-decreasing points `xi`.
fn fundamental_solutions(a: f64, q: f64, xi: &[f64]) -> Result<Vec<[f64; 4]>> {
    let rhs = |x: f64, y: &[f64; 4]| {
        let k = a - 2.0 * q * (2.0 * x).cos();
        [y[1], -k * y[0], y[3], -k * y[2]]
    };
    ode::integrate(rhs, [1.0, 0.0, 0.0, 1.0], xi, tolerance())
}

/// Floquet analysis over one period of the Mathieu equation.
pub fn characteristic_exponent(a: f64, q: f64) -> Result<MonodromyResult> {
    if !(a.is_finite() && q.is_finite()) {
        return Err(Error::Domain(format!("non-finite Mathieu parameters ({a}, {q})")));
    }
    let sol = fundamental_solutions(a, q, &[0.0, PI])?;
    let [c, dc, s, ds] = sol[1];
    Ok(MonodromyResult::from_matrix([[c, s], [dc, ds]]))
}

/// Integrates the Mathieu equation from `grid[0]` with the complex initial
/// value `(u, du/dξ)` and returns `(u, du/dξ)` at every grid point.
///
/// The real and imaginary parts evolve independently; the drive acts on the
/// real part, so a driven solution should be started from real data.
pub fn integrate_mathieu(
    a: f64,
    q: f64,
    initial: (Complex64, Complex64),
    grid: &[f64],
    f0: Option<f64>,
) -> Result<Vec<(Complex64, Complex64)>> {
    for pair in grid.windows(2) {
        let step = pair[1] - pair[0];
        if step > MAX_XI_STEP * (1.0 + 1e-12) {
            return Err(Error::GridResolution(format!(
                "Mathieu-time step {step} exceeds pi/64"
            )));
        }
    }
    let drive = f0.unwrap_or(0.0);
    let rhs = |x: f64, y: &[f64; 4]| {
        let k = a - 2.0 * q * (2.0 * x).cos();
        [y[1], drive - k * y[0], y[3], -k * y[2]]
    };
    let (u, du) = initial;
    let states = ode::integrate(rhs, [u.re, du.re, u.im, du.im], grid, tolerance())?;
    Ok(states
        .into_iter()
        .map(|y| (Complex64::new(y[0], y[2]), Complex64::new(y[1], y[3])))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeLabel {
    Cm,
    Rel,
}

impl ModeLabel {
    pub const ALL: [ModeLabel; 2] = [ModeLabel::Cm, ModeLabel::Rel];

    /// Sign `j_μ` with which ion 2 enters the mode coordinate.
    pub fn branch_sign(self) -> f64 {
        match self {
            ModeLabel::Cm => 1.0,
            ModeLabel::Rel => -1.0,
        }
    }

    /// `√(ħ/4mω)` for the centre of mass and `√(ħ/mω)` for the relative
    /// coordinate.
    pub fn oscillator_length(self, mass: f64, omega: f64) -> f64 {
        let hbar = CODATA_2018.hbar;
        match self {
            ModeLabel::Cm => (hbar / (4.0 * mass * omega)).sqrt(),
            ModeLabel::Rel => (hbar / (mass * omega)).sqrt(),
        }
    }

    pub fn index(self) -> usize {
        match self {
            ModeLabel::Cm => 0,
            ModeLabel::Rel => 1,
        }
    }
}

/// Complex reference-oscillator solution `v(t)` with `v(0) = 1` and
/// `v̇(0) = iω`, sampled at given times.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeFunction {
    pub label: ModeLabel,
    /// Mathieu parameters, absent for a static harmonic mode.
    pub params: Option<MathieuParameters>,
    pub omega: f64,
    pub oscillator_length: f64,
    pub times: Vec<f64>,
    pub v: Vec<Complex64>,
    pub vdot: Vec<Complex64>,
}

impl ModeFunction {
    /// Static-trap mode `v(t) = e^{iωt}`.
    pub fn harmonic(label: ModeLabel, omega: f64, mass: f64, times: &[f64]) -> Result<Self> {
        if !(omega.is_finite() && omega > 0.0) {
            return Err(Error::InvalidConfiguration(format!(
                "mode frequency must be positive, got {omega}"
            )));
        }
        let v: Vec<Complex64> = times
            .iter()
            .map(|&t| Complex64::from_polar(1.0, omega * t))
            .collect();
        let vdot = v.iter().map(|z| Complex64::i() * omega * z).collect();
        Ok(Self {
            label,
            params: None,
            omega,
            oscillator_length: label.oscillator_length(mass, omega),
            times: times.to_vec(),
            v,
            vdot,
        })
    }

    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }

    /// `Im[v* v̇]`, which equals `ω` for every sample.
    pub fn wronskian(&self, sample: usize) -> f64 {
        (self.v[sample].conj() * self.vdot[sample]).im
    }

    pub fn max_abs(&self) -> f64 {
        self.v.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Characteristic exponent `ν = 2ω/Ω_T` of a Mathieu mode.
    pub fn exponent(&self) -> Option<f64> {
        self.params.map(|p| 2.0 * self.omega / p.rf_frequency)
    }
}

/// Mathieu mode function sampled at the non-negative times `times`.
pub fn mode_function(
    params: &MathieuParameters,
    label: ModeLabel,
    mass: f64,
    times: &[f64],
) -> Result<ModeFunction> {
    let half = params.rf_frequency / 2.0;
    let mut periods = Vec::with_capacity(times.len());
    let mut residues = Vec::with_capacity(times.len());
    for &t in times {
        if !(t.is_finite() && t >= 0.0) {
            return Err(Error::Domain(format!("mode sample time {t} is not in [0, inf)")));
        }
        let xi = half * t;
        let k = (xi / PI).floor();
        periods.push(k as usize);
        residues.push((xi - k * PI).clamp(0.0, PI));
    }

    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&i, &j| residues[i].total_cmp(&residues[j]));
    let mut points = vec![0.0];
    let mut slot = vec![0usize; times.len()];
    for &i in &order {
        let r = residues[i];
        if r > points[points.len() - 1] + RESIDUE_MERGE {
            points.push(r);
        }
        slot[i] = points.len() - 1;
    }
    if points[points.len() - 1] < PI {
        points.push(PI);
    }
    let phi = fundamental_solutions(params.a, params.q, &points)?;
    let [c, dc, s, ds] = phi[phi.len() - 1];
    let mono = MonodromyResult::from_matrix([[c, s], [dc, ds]]);
    if !mono.stable || !(mono.exponent > 0.0 && mono.exponent < 1.0) {
        return Err(Error::Unstable {
            context: format!(
                "{label:?} mode (a = {}, q = {}, nu = {})",
                params.a, params.q, mono.exponent
            ),
            trace: mono.trace.abs(),
        });
    }
    let nu = mono.exponent;
    let [[m11, m12], [m21, m22]] = mono.matrix;

    let max_period = periods.iter().copied().max().unwrap_or(0);
    let mut state = Vec::with_capacity(max_period + 1);
    state.push((Complex64::new(1.0, 0.0), Complex64::new(0.0, nu)));
    for k in 0..max_period {
        let (u, du) = state[k];
        state.push((u * m11 + du * m12, u * m21 + du * m22));
    }

    let mut v = Vec::with_capacity(times.len());
    let mut vdot = Vec::with_capacity(times.len());
    for i in 0..times.len() {
        let [c, dc, s, ds] = phi[slot[i]];
        let (u, du) = state[periods[i]];
        v.push(u * c + du * s);
        vdot.push((u * dc + du * ds) * half);
    }
    let omega = nu * half;
    Ok(ModeFunction {
        label,
        params: Some(*params),
        omega,
        oscillator_length: label.oscillator_length(mass, omega),
        times: times.to_vec(),
        v,
        vdot,
    })
}

/// Fourier-cosine coefficients of the periodic special solution
/// `ū(ξ) = f0 Σ c_n cos(2nξ)` of the driven Mathieu equation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriveSolution {
    pub a: f64,
    pub q: f64,
    pub f0: f64,
    pub coefficients: Vec<f64>,
}

impl DriveSolution {
    pub fn truncation(&self) -> usize {
        self.coefficients.len() - 1
    }

    /// `c_n`, zero beyond the truncation order.
    pub fn c(&self, n: usize) -> f64 {
        self.coefficients.get(n).copied().unwrap_or(0.0)
    }

    /// Period average `f0 c0`.
    pub fn mean(&self) -> f64 {
        self.f0 * self.coefficients[0]
    }

    /// `(ū, ū'')` at Mathieu time `xi`.
    pub fn evaluate(&self, xi: f64) -> (f64, f64) {
        let c2 = (2.0 * xi).cos();
        let (mut prev, mut cur) = (c2, 1.0);
        let mut value = 0.0;
        let mut second = 0.0;
        for (n, &cn) in self.coefficients.iter().enumerate() {
            // cos(2nξ) by the Chebyshev recurrence, seeded with cos(−2ξ).
            value += cn * cur;
            second -= 4.0 * (n * n) as f64 * cn * cur;
            let next = 2.0 * c2 * cur - prev;
            prev = cur;
            cur = next;
        }
        (self.f0 * value, self.f0 * second)
    }

    pub fn value(&self, xi: f64) -> f64 {
        self.evaluate(xi).0
    }

    /// Left side minus right side of the driven equation at `xi`.
    pub fn residual(&self, xi: f64) -> f64 {
        let (u, d2u) = self.evaluate(xi);
        d2u + (self.a - 2.0 * self.q * (2.0 * xi).cos()) * u - self.f0
    }

    /// Sup-norm of the residual on `samples` points over one period.
    pub fn max_residual(&self, samples: usize) -> f64 {
        (0..samples)
            .map(|i| self.residual(PI * i as f64 / samples as f64).abs())
            .fold(0.0, f64::max)
    }
}

pub const DEFAULT_DRIVE_TRUNCATION: usize = 8;

/// Solves the truncated linear system for `c_0 … c_N`, with `c_{N+1} = 0`.
pub fn driven_solution(a: f64, q: f64, f0: f64, truncation: usize) -> Result<DriveSolution> {
    if truncation < 2 {
        return Err(Error::TruncationFailure(format!(
            "truncation order {truncation} is below 2"
        )));
    }
    if !(a.is_finite() && q.is_finite() && f0.is_finite()) {
        return Err(Error::Domain("non-finite drive parameters".into()));
    }
    let size = truncation + 1;
    let mut m = DMatrix::<f64>::zeros(size, size);
    m[(0, 0)] = a;
    m[(0, 1)] = -q;
    for n in 1..size {
        // 1/D_n = q/(a − 4n²), finite also at q = 0.
        let inv_d = q / (a - 4.0 * (n * n) as f64);
        m[(n, n)] = 1.0;
        m[(n, n - 1)] = if n == 1 { -2.0 * inv_d } else { -inv_d };
        if n + 1 < size {
            m[(n, n + 1)] = -inv_d;
        }
    }
    let mut rhs = DVector::<f64>::zeros(size);
    rhs[0] = 1.0;
    let singular = || {
        Error::TruncationFailure(format!(
            "singular drive system at (a, q) = ({a}, {q}); try a larger truncation"
        ))
    };
    let c = m.lu().solve(&rhs).ok_or_else(singular)?;
    if c.iter().any(|x| !x.is_finite()) {
        return Err(singular());
    }
    Ok(DriveSolution {
        a,
        q,
        f0,
        coefficients: c.iter().copied().collect(),
    })
}

/// Closed forms of `c0, c1, c2` from the three-term truncation.
pub fn closed_form_c012(a: f64, q: f64) -> Result<(f64, f64, f64)> {
    let den = (32.0 - 3.0 * a) * q * q + a * (a - 4.0) * (a - 16.0);
    let size = (32.0 * q * q).abs() + (64.0 * a).abs();
    if !(den.abs() > 1e-12 * size.max(1e-300)) {
        return Err(Error::DegenerateParameters(format!(
            "closed-form denominator vanishes at (a, q) = ({a}, {q})"
        )));
    }
    let c0 = (64.0 + a * (a - 20.0) - q * q) / den;
    let c1 = 2.0 * (a - 16.0) * q / den;
    let c2 = 2.0 * q * q / den;
    Ok((c0, c1, c2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trap::Axis;

    fn params(a: f64, q: f64) -> MathieuParameters {
        MathieuParameters {
            a,
            q,
            f0: 0.0,
            length_scale: 0.0,
            rf_frequency: 2.0,
            axis: Axis::AxialCm,
        }
    }

    #[test]
    fn harmonic_exponent() {
        let r = characteristic_exponent(0.25, 0.0).unwrap();
        assert!(r.stable);
        assert!((r.exponent - 0.5).abs() < 1e-12);
        for a in [0.01, 0.09, 0.3, 0.81] {
            let r = characteristic_exponent(a, 0.0).unwrap();
            assert!((r.exponent - a.sqrt()).abs() < 1e-12 * a.sqrt());
        }
    }

    #[test]
    fn resonance_boundary_is_marginal() {
        let r = characteristic_exponent(1.0, 0.0).unwrap();
        assert!((r.trace + 2.0).abs() < 1e-9);
        assert!(r.stable);
        assert!((r.exponent - 1.0).abs() < 1e-4);
    }

    #[test]
    fn first_instability_tongue() {
        // (a, q) = (1, 0.5) lies inside the first unstable region.
        let r = characteristic_exponent(1.0, 0.5).unwrap();
        assert!(!r.stable);
        assert!(r.trace.abs() > 2.0);
    }

    #[test]
    fn monodromy_is_unimodular() {
        let r = characteristic_exponent(-0.0396, 0.283).unwrap();
        let [[a, b], [c, d]] = r.matrix;
        assert!((a * d - b * c - 1.0).abs() < 1e-11);
        // Even and odd fundamental solutions give equal diagonal entries.
        assert!((a - d).abs() < 1e-11);
    }

    #[test]
    fn harmonic_integration_over_hundred_periods() {
        let a: f64 = 0.3;
        let w = a.sqrt();
        let end = 100.0 * 2.0 * PI / w;
        let n = (end / MAX_XI_STEP).ceil() as usize;
        let grid: Vec<f64> = (0..=n).map(|i| end * i as f64 / n as f64).collect();
        let out = integrate_mathieu(
            a,
            0.0,
            (Complex64::new(1.0, 0.0), Complex64::new(0.0, w)),
            &grid,
            None,
        )
        .unwrap();
        for (x, (u, _)) in grid.iter().zip(&out) {
            assert!((u - Complex64::from_polar(1.0, w * x)).norm() < 1e-10);
        }
    }

    #[test]
    fn driven_harmonic_oscillator() {
        let (a, f0) = (0.2, 0.7);
        let grid: Vec<f64> = (0..=2000).map(|i| i as f64 * 0.01).collect();
        let zero = Complex64::new(0.0, 0.0);
        let out = integrate_mathieu(a, 0.0, (zero, zero), &grid, Some(f0)).unwrap();
        for (x, (u, _)) in grid.iter().zip(&out) {
            let exact = f0 / a * (1.0 - (a.sqrt() * x).cos());
            assert!((u.re - exact).abs() < 1e-10 && u.im == 0.0);
        }
    }

    #[test]
    fn coarse_grid_is_rejected() {
        let grid = [0.0, 0.1];
        let one = Complex64::new(1.0, 0.0);
        assert!(matches!(
            integrate_mathieu(0.1, 0.1, (one, one), &grid, None),
            Err(Error::GridResolution(_))
        ));
    }

    #[test]
    fn floquet_sweep_matches_direct_integration() {
        let p = params(-0.0396, 0.283);
        let nu = characteristic_exponent(p.a, p.q).unwrap().exponent;
        // Ω_T = 2 makes t and ξ coincide.
        let n = 64 * 40;
        let times: Vec<f64> = (0..=n).map(|i| i as f64 * PI / 64.0).collect();
        let mode = mode_function(&p, ModeLabel::Cm, 1.0, &times).unwrap();
        let direct = integrate_mathieu(
            p.a,
            p.q,
            (Complex64::new(1.0, 0.0), Complex64::new(0.0, nu)),
            &times,
            None,
        )
        .unwrap();
        for (i, (u, du)) in direct.iter().enumerate() {
            assert!((mode.v[i] - u).norm() < 1e-9, "v differs at {i}");
            assert!((mode.vdot[i] - du).norm() < 1e-9, "vdot differs at {i}");
        }
    }

    #[test]
    fn mode_initial_conditions_and_wronskian() {
        let p = params(-0.0396, 0.283);
        let times: Vec<f64> = (0..5000).map(|i| i as f64 * 0.037).collect();
        let mode = mode_function(&p, ModeLabel::Rel, 1.0, &times).unwrap();
        assert_eq!(mode.v[0], Complex64::new(1.0, 0.0));
        assert!((mode.vdot[0] - Complex64::new(0.0, mode.omega)).norm() < 1e-15);
        for i in 0..mode.len() {
            assert!((mode.wronskian(i) / mode.omega - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn mode_parity() {
        // Re v is even and Im v odd: integrating backwards from the mirror
        // image of v(X) lands on v(0).
        let p = params(-0.0396, 0.283);
        let x = 3.3;
        let mode = mode_function(&p, ModeLabel::Cm, 1.0, &[x]).unwrap();
        let (vx, dvx) = (mode.v[0], mode.vdot[0]);
        let n = 1000;
        let grid: Vec<f64> = (0..=n).map(|i| -x + x * i as f64 / n as f64).collect();
        let out = integrate_mathieu(p.a, p.q, (vx.conj(), -dvx.conj()), &grid, None).unwrap();
        let (v0, dv0) = out[n];
        assert!((v0 - 1.0).norm() < 1e-10);
        let nu = mode.exponent().unwrap();
        assert!((dv0 - Complex64::new(0.0, nu)).norm() < 1e-10);
    }

    #[test]
    fn q_zero_mode_is_plane_wave() {
        let p = params(0.16, 0.0);
        let times: Vec<f64> = (0..3000).map(|i| i as f64 * 0.05).collect();
        let mode = mode_function(&p, ModeLabel::Cm, 1.0, &times).unwrap();
        assert!((mode.omega - 0.4).abs() < 1e-12);
        for (t, v) in times.iter().zip(&mode.v) {
            assert!((v - Complex64::from_polar(1.0, 0.4 * t)).norm() < 1e-10);
        }
    }

    #[test]
    fn unstable_mode_is_rejected() {
        let p = params(1.0, 0.5);
        assert!(matches!(
            mode_function(&p, ModeLabel::Cm, 1.0, &[0.0, 1.0]),
            Err(Error::Unstable { .. })
        ));
    }

    #[test]
    fn harmonic_mode_wronskian() {
        let times: Vec<f64> = (0..100).map(|i| i as f64 * 0.1).collect();
        let mode = ModeFunction::harmonic(ModeLabel::Rel, 3.0, 1.0, &times).unwrap();
        for i in 0..mode.len() {
            assert!((mode.wronskian(i) - 3.0).abs() < 1e-14);
        }
    }

    #[test]
    fn drive_without_modulation() {
        let d = driven_solution(0.3, 0.0, 1.0, 8).unwrap();
        assert!((d.c(0) - 1.0 / 0.3).abs() < 1e-14);
        assert!(d.coefficients[1..].iter().all(|&c| c == 0.0));
    }

    #[test]
    fn closed_forms_match_three_term_truncation() {
        for (a, q) in [(-0.0388, 0.283), (0.1, 0.05), (-0.02, 0.2)] {
            let d = driven_solution(a, q, 1.0, 2).unwrap();
            let (c0, c1, c2) = closed_form_c012(a, q).unwrap();
            for (x, y) in [(d.c(0), c0), (d.c(1), c1), (d.c(2), c2)] {
                assert!((x - y).abs() <= 1e-12 * y.abs().max(1e-300) * 10.0, "{x} vs {y}");
            }
        }
    }

    #[test]
    fn closed_form_close_to_high_truncation() {
        let (c0, _, _) = closed_form_c012(0.1, 0.05).unwrap();
        let d = driven_solution(0.1, 0.05, 1.0, 8).unwrap();
        assert!((c0 / d.c(0) - 1.0).abs() < 1e-4);
    }

    #[test]
    fn closed_form_q_zero() {
        let (c0, c1, c2) = closed_form_c012(0.2, 0.0).unwrap();
        assert!((c0 - 5.0).abs() < 1e-12 && c1 == 0.0 && c2 == 0.0);
        assert!(closed_form_c012(0.0, 0.0).is_err());
    }

    #[test]
    fn drive_residual_and_convergence() {
        let d = driven_solution(-0.0395, 0.283, 0.02, 8).unwrap();
        assert!(d.max_residual(512) < 1e-8 * d.f0);
        let wide = driven_solution(-0.0395, 0.283, 0.02, 12).unwrap();
        for n in 0..=6 {
            assert!((d.c(n) - wide.c(n)).abs() <= 1e-10 * wide.c(n).abs());
        }
        for n in 1..6 {
            let ratio = (d.c(n + 1) / d.c(n)).abs();
            let estimate = d.q / (4.0 * ((n + 1) * (n + 1)) as f64);
            assert!(ratio < 2.0 * estimate && ratio > 0.5 * estimate, "n = {n}");
        }
    }

    #[test]
    fn truncation_below_two_is_rejected() {
        assert!(matches!(
            driven_solution(0.1, 0.1, 1.0, 1),
            Err(Error::TruncationFailure(_))
        ));
    }
}
