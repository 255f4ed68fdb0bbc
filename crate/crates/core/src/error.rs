//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("endpoint {0} lies outside the unit interval")]
    EndpointOutOfRange(f64),

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("interval set would exceed {cap} components; switch to the transfer engine")]
    ComponentCapExceeded { cap: usize },

    #[error("parameter `{name}` = {value} violates: {constraint}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        constraint: &'static str,
    },

    #[error("unknown map `{0}`")]
    UnknownMap(String),

    #[error("unknown measure `{0}`")]
    UnknownMeasure(String),

    #[error("engine `{engine}` is not usable with map `{map}`")]
    EngineIncompatible { engine: String, map: String },

    #[error("quadrature did not converge within {evals} evaluations")]
    QuadratureNonConvergence { evals: usize },

    #[error("abel grid point {lambda} too close to 1 for a sequence of length {len}")]
    AbelGridTooClose { lambda: f64, len: usize },

    #[error("sequence too short: need {need}, have {have}")]
    SequenceTooShort { need: usize, have: usize },

    #[error("invalid map table: {0}")]
    MapTable(String),

    #[error("invalid set expression `{expr}`: {reason}")]
    SetSyntax { expr: String, reason: String },

    #[error("degenerate orbit at step {step} (orbit reached an excluded point)")]
    DegenerateOrbit { step: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
