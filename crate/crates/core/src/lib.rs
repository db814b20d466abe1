//! Spectral toolkit for the boundary controllability of 1-D wave-heat and
//! heat-wave cascades.
//!
//! Everything works in modal coordinates: eigenvalues of the cascade
//! generator, boundary observation coefficients of the adjoint eigenvectors,
//! weighted sequence spaces, exponential Gram matrices and the
//! minimum-energy control of a truncated modal system.

pub mod coupling;
pub mod dd;
pub mod error;
pub mod gramian;
pub mod hum;
pub mod linalg;
pub mod quadrature;
pub mod scaled;
pub mod spaces;
pub mod spectral;

pub use coupling::{GammaHW, GammaMethod, GammaValue, ObsCoefficient};
pub use dd::Dd;
pub use error::{CascadeError, Result};
pub use gramian::{ExponentialFamily, GramMatrix};
pub use hum::{HumSolution, ModalSystem, TrajectorySample};
pub use linalg::Precision;
pub use scaled::ScaledComplex;
pub use spaces::{ModalVector, SpaceTag, WeightSequence};
pub use spectral::{CouplingProfile, ModeId, SystemParams, Truncation, Variant};
