//! Coupled heat and moisture transport in a drying wood chip.
//!
//! The crate builds a finite-volume full-order model of the drying process,
//! reduces it with proper orthogonal decomposition, analyzes controllability
//! of the reduced dynamics through an empirical Gramian, and solves for
//! energy-optimal heating schedules on the reduced model.

pub mod error;
pub mod fom;
pub mod gramian;
pub mod grid;
pub mod material;
pub mod ocp;
pub mod pod;
pub mod presets;
pub mod rom;

pub use error::{CoreError, Result};
