//! Segment-aligned uniform time grids and Simpson quadrature on them.

use std::ops::{Add, Mul, Range, Sub};

use serde::Serialize;

use crate::{Error, Result};

/// Uniform grid over `[0, duration]` whose nodes include every boundary of
/// `segments` equal-time pulse segments.
///
/// Each segment holds `intervals_per_segment` intervals, a multiple of four,
/// so that both the grid and its every-other-node coarsening support
/// composite Simpson rules segment by segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimeGrid {
    duration: f64,
    segments: usize,
    intervals_per_segment: usize,
}

impl TimeGrid {
    pub fn new(duration: f64, segments: usize, intervals_per_segment: usize) -> Result<Self> {
        if !(duration.is_finite() && duration > 0.0) {
            return Err(Error::InvalidConfiguration(format!(
                "gate duration must be positive, got {duration}"
            )));
        }
        if segments == 0 {
            return Err(Error::InvalidConfiguration("at least one segment is required".into()));
        }
        if intervals_per_segment == 0 || !intervals_per_segment.is_multiple_of(4) {
            return Err(Error::GridResolution(format!(
                "intervals per segment must be a positive multiple of 4, got {intervals_per_segment}"
            )));
        }
        Ok(Self {
            duration,
            segments,
            intervals_per_segment,
        })
    }

    /// The coarsest admissible grid whose step does not exceed `max_step`.
    pub fn with_max_step(duration: f64, segments: usize, max_step: f64) -> Result<Self> {
        if !(max_step.is_finite() && max_step > 0.0) {
            return Err(Error::GridResolution(format!("invalid maximal step {max_step}")));
        }
        let per_segment = duration / segments.max(1) as f64 / max_step;
        if !per_segment.is_finite() || per_segment > 1e9 {
            return Err(Error::GridResolution(format!(
                "{per_segment} intervals per segment requested"
            )));
        }
        let intervals = (per_segment.ceil() as usize).max(1).div_ceil(4) * 4;
        Self::new(duration, segments, intervals)
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn segments(&self) -> usize {
        self.segments
    }

    pub fn intervals_per_segment(&self) -> usize {
        self.intervals_per_segment
    }

    pub fn intervals(&self) -> usize {
        self.segments * self.intervals_per_segment
    }

    /// Number of nodes.
    pub fn len(&self) -> usize {
        self.intervals() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn step(&self) -> f64 {
        self.duration / self.intervals() as f64
    }

    pub fn time(&self, node: usize) -> f64 {
        if node == self.intervals() {
            self.duration
        } else {
            node as f64 * self.step()
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.time(i)).collect()
    }

    /// Node indices of segment `segment`, both boundaries included.
    pub fn segment_nodes(&self, segment: usize) -> Range<usize> {
        let start = segment * self.intervals_per_segment;
        start..start + self.intervals_per_segment + 1
    }

    /// Segment containing node `node`; shared boundary nodes belong to the
    /// later segment except for the final node.
    pub fn segment_of_node(&self, node: usize) -> usize {
        (node / self.intervals_per_segment).min(self.segments - 1)
    }
}

/// Values that Simpson rules can sum: reals and complex numbers.
pub trait Integrand:
    Copy + Default + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self>
{
}

impl<T> Integrand for T where
    T: Copy + Default + Add<Output = T> + Sub<Output = T> + Mul<f64, Output = T>
{
}

/// Composite Simpson rule on equally spaced samples, with an even number of
/// intervals.
pub fn simpson<T: Integrand>(values: &[T], step: f64) -> T {
    simpson_strided(values, 1, step)
}

/// Composite Simpson rule over every `stride`-th sample, where `step` is the
/// spacing of the original samples.
pub fn simpson_strided<T: Integrand>(values: &[T], stride: usize, step: f64) -> T {
    let intervals = (values.len() - 1) / stride;
    debug_assert!(intervals.is_multiple_of(2) && intervals * stride == values.len() - 1);
    let mut odd = T::default();
    let mut even = T::default();
    for k in 1..intervals {
        let value = values[k * stride];
        if k % 2 == 1 {
            odd = odd + value;
        } else {
            even = even + value;
        }
    }
    let h = step * stride as f64;
    (values[0] + values[intervals * stride] + odd * 4.0 + even * 2.0) * (h / 3.0)
}

/// Running integral from the first sample to every sample.
///
/// Even nodes carry the composite Simpson sum; odd nodes add the
/// three-point rule `h(5f₀ + 8f₁ − f₂)/12` over the half panel.
pub fn cumulative_simpson<T: Integrand>(values: &[T], step: f64) -> Vec<T> {
    let n = values.len();
    let mut out = vec![T::default(); n];
    let mut k = 0;
    while k + 2 < n {
        let (f0, f1, f2) = (values[k], values[k + 1], values[k + 2]);
        out[k + 1] = out[k] + (f0 * 5.0 + f1 * 8.0 - f2) * (step / 12.0);
        out[k + 2] = out[k] + (f0 + f1 * 4.0 + f2) * (step / 3.0);
        k += 2;
    }
    if k + 1 < n {
        // Trapezoid on a trailing odd interval.
        out[k + 1] = out[k] + (values[k] + values[k + 1]) * (step / 2.0);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;
    use std::f64::consts::PI;

    #[test]
    fn grid_nodes_hit_segment_boundaries() {
        let grid = TimeGrid::new(3.0, 3, 8).unwrap();
        assert_eq!(grid.len(), 25);
        assert_eq!(grid.segment_nodes(1), 8..17);
        assert_eq!(grid.time(8), 1.0);
        assert_eq!(grid.time(24), 3.0);
        assert_eq!(grid.segment_of_node(8), 1);
        assert_eq!(grid.segment_of_node(24), 2);
    }

    #[test]
    fn grid_rejects_bad_inputs() {
        assert!(TimeGrid::new(1.0, 2, 6).is_err());
        assert!(TimeGrid::new(0.0, 2, 8).is_err());
        assert!(TimeGrid::new(1.0, 0, 8).is_err());
    }

    #[test]
    fn max_step_rounds_up_to_multiple_of_four() {
        let grid = TimeGrid::with_max_step(1.0, 2, 0.1).unwrap();
        assert_eq!(grid.intervals_per_segment(), 8);
        assert!(grid.step() <= 0.1);
    }

    #[test]
    fn simpson_is_exact_for_cubics() {
        let xs: Vec<f64> = (0..=8).map(|i| i as f64 * 0.25).collect();
        let ys: Vec<f64> = xs.iter().map(|x| x * x * x - 2.0 * x + 1.0).collect();
        let exact = 2f64.powi(4) / 4.0 - 4.0 + 2.0;
        assert!((simpson(&ys, 0.25) - exact).abs() < 1e-14);
        assert!((simpson_strided(&ys, 2, 0.25) - exact).abs() < 1e-14);
    }

    #[test]
    fn cumulative_matches_antiderivative() {
        let n = 400;
        let h = PI / n as f64;
        let ys: Vec<Complex64> = (0..=n)
            .map(|i| Complex64::new(0.0, i as f64 * h).exp())
            .collect();
        let cum = cumulative_simpson(&ys, h);
        for (i, c) in cum.iter().enumerate() {
            let t = i as f64 * h;
            let exact = (Complex64::new(0.0, t).exp() - 1.0) / Complex64::i();
            assert!((c - exact).norm() < 1e-9, "node {i}");
        }
        assert!((cum[n] - simpson(&ys, h)).norm() < 1e-14);
    }
}
