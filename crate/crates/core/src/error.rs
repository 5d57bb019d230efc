use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfiguration(String),

    #[error("unstable Mathieu parameters for {context}: |tr M| = {trace:.12} > 2")]
    Unstable { context: String, trace: f64 },

    #[error("no self-consistent equilibrium after {iterations} iterations (relative residual {residual:e})")]
    NoEquilibrium { iterations: usize, residual: f64 },

    #[error("integration failed at xi = {xi}: step size {step:e} underflowed")]
    IntegrationFailure { xi: f64, step: f64 },

    #[error("driven Mathieu truncation failed: {0}; try a larger truncation order")]
    TruncationFailure(String),

    #[error("degenerate parameters: {0}")]
    DegenerateParameters(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("grid resolution: {0}")]
    GridResolution(String),

    #[error("infeasible design: {0}")]
    Infeasible(String),

    #[error("Fock truncation leaks: population {population:e} in the top level n = {level}")]
    TruncationLeakage { population: f64, level: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),
}
