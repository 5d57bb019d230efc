//! CODATA 2018 values. Every physical constant in the crate comes from here.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalConstants {
    /// Elementary charge (C).
    pub elementary_charge: f64,
    /// Vacuum permittivity (F/m).
    pub vacuum_permittivity: f64,
    /// Reduced Planck constant (J s).
    pub hbar: f64,
    /// Atomic mass unit (kg).
    pub atomic_mass_unit: f64,
    /// Boltzmann constant (J/K).
    pub boltzmann: f64,
}

pub const CODATA_2018: PhysicalConstants = PhysicalConstants {
    elementary_charge: 1.602_176_634e-19,
    vacuum_permittivity: 8.854_187_812_8e-12,
    hbar: 1.054_571_817e-34,
    atomic_mass_unit: 1.660_539_066_60e-27,
    boltzmann: 1.380_649e-23,
};

impl PhysicalConstants {
    /// `e² / (π ε0)`, the combination that appears in every Coulomb term.
    pub fn coulomb_factor(&self) -> f64 {
        self.elementary_charge * self.elementary_charge
            / (std::f64::consts::PI * self.vacuum_permittivity)
    }
}
