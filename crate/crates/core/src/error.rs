use thiserror::Error;

use crate::linalg::Precision;
use crate::spectral::ModeId;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum CascadeError {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },

    #[error("argument {value} outside the domain [{lower}, {upper}]")]
    Domain { value: f64, lower: f64, upper: f64 },

    #[error("grid too coarse: {nodes} nodes, at least {required} required")]
    GridTooCoarse { nodes: usize, required: usize },

    #[error("quadrature did not converge: error estimate {achieved:e} above tolerance {tolerance:e}")]
    QuadratureNonConvergence { achieved: f64, tolerance: f64 },

    #[error("vanishing coupling coefficient for mode {mode}")]
    VanishingCoupling { mode: ModeId },

    #[error(
        "ill-conditioned system at {precision:?} precision: condition {condition:e}, residual {residual:e}"
    )]
    IllConditioned {
        condition: f64,
        residual: f64,
        precision: Precision,
    },

    #[error("coefficient for mode {mode} lies outside the weight truncation")]
    SupportExceedsTruncation { mode: ModeId },

    #[error("index range [{lower}, {upper}] is too short: {reason}")]
    InsufficientRange { lower: f64, upper: f64, reason: String },

    #[error("weights are not polynomial: trend statistic {trend:.3} (local slopes {first_slope:.3} -> {last_slope:.3})")]
    NonPolynomialWeights {
        trend: f64,
        first_slope: f64,
        last_slope: f64,
    },
}

impl CascadeError {
    pub fn invalid(field: &str, reason: impl Into<String>) -> Self {
        CascadeError::InvalidParameter {
            field: field.to_string(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, CascadeError>;
