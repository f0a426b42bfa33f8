//! Numerical tools for Dini mean oscillation, Campanato decay and weak type-(1,1)
//! estimates of second-order elliptic equations on uniform 2-D grids.

pub mod coeffs;
pub mod error;
pub mod grid;
pub mod oscillation;
pub mod regularity;
pub mod scalar;
pub mod solver;
pub mod weaktype;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Grid64 = grid::Grid<f64>;
pub type GridFunction64 = grid::GridFunction<f64>;
pub type Grid32 = grid::Grid<f32>;
pub type GridFunction32 = grid::GridFunction<f32>;
pub type CoefficientField64 = coeffs::CoefficientField<f64>;
pub type CoefficientField32 = coeffs::CoefficientField<f32>;
