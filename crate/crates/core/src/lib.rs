//! Numerical laboratory for multi-soliton solutions of the
//! Zakharov–Kuznetsov equations `∂_t u + ∂_1(Δu + u^p) = 0`.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod construction;
pub mod error;
pub mod evolution;
pub mod functionals;
pub mod grid;
pub mod groundstate;
pub mod linearized;
pub mod modulation;
pub mod output;
pub mod spectral;

pub use error::{Result, ZkError};
pub use grid::Grid;
pub use groundstate::{GroundState, SolitonParams};
pub use spectral::{Field, SpectralField};
