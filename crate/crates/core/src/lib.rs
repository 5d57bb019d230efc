//! Design and evaluation of two-ion controlled-phase-flip gates in a
//! quadrupole r.f. Paul trap, treating micromotion exactly.
//!
//! The pipeline runs bottom-up:
//!
//! * [`trap`] turns voltages, geometry and ion mass into Mathieu parameters
//!   and finds the self-consistent ion separation.
//! * [`mathieu`] integrates the Mathieu equations, computes Floquet
//!   exponents, reference-oscillator mode functions and the driven
//!   micromotion trajectory.
//! * [`gate`] evaluates the spin-dependent displacements and the
//!   conditional phase for a segmented pulse.
//! * [`design`] solves for segment amplitudes that close every phase-space
//!   loop while accumulating a phase of π/4.
//! * [`fidelity`] averages the gate fidelity over thermal phonon states,
//!   analytically and with a truncated Fock-space propagation.
//! * [`twostage`] is the micromotion-averaged approximation of the
//!   displacement integrals together with the Bessel functions it needs.
//!
//! Everything is SI internally; time is measured in seconds and the
//! dimensionless Mathieu time is `ξ = Ω_T t / 2`.

pub mod constants;
pub mod design;
pub mod error;
pub mod fidelity;
pub mod gate;
pub mod mathieu;
pub mod model;
pub mod ode;
pub mod quad;
pub mod trap;
pub mod twostage;

pub use error::{Error, Result};
pub use num_complex::Complex64;
