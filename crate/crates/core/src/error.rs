//! Error type shared by all modules of the crate.

use thiserror::Error;

/// Errors produced by model construction, evaluation, and the solvers.
#[derive(Debug, Clone, Error)]
pub enum CoreError {
    /// A physical quantity was outside the domain of a property law.
    #[error("domain error in {law}: {name} = {value} is outside {window}")]
    Domain {
        law: &'static str,
        name: &'static str,
        value: f64,
        window: &'static str,
    },

    /// A parameter or configuration value failed validation.
    #[error("invalid parameter {name}: {reason} (got {value})")]
    InvalidParameter {
        name: &'static str,
        reason: &'static str,
        value: f64,
    },

    /// Mismatched vector or matrix dimensions between coupled objects.
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    /// A state or coefficient vector stopped being finite during integration.
    #[error("numerical failure in {context} at t = {time} s: {detail} (cell/index {index})")]
    NonFinite {
        context: &'static str,
        time: f64,
        index: usize,
        detail: &'static str,
    },

    /// The fixed time step exceeded the current stability bound.
    #[error("time step {dt} s exceeds the stability bound {bound} s at t = {time} s")]
    UnstableStep { dt: f64, bound: f64, time: f64 },

    /// An iteration failed to reach its tolerance within the step budget.
    #[error("{what} did not converge within {steps} steps (residual {residual})")]
    NoConvergence {
        what: &'static str,
        steps: usize,
        residual: f64,
    },

    /// Requested basis size exceeds what the snapshot set supports.
    #[error("requested {requested} modes for the {field} field, attainable rank is {attainable}")]
    RankDeficient {
        field: &'static str,
        requested: usize,
        attainable: usize,
    },

    /// A reference signal has zero range, so a normalized error is undefined.
    #[error("reference series for {context} is flat; normalized error undefined")]
    FlatReference { context: &'static str },

    /// A field value at some cell left the validity window of the material laws.
    #[error("{field} = {value} at cell {cell} is outside {window}")]
    ValidityWindow {
        field: &'static str,
        cell: usize,
        value: f64,
        window: &'static str,
    },

    /// The terminal-moisture constraint cannot be met even at full heating.
    #[error("terminal moisture {best} at full heating exceeds the target {target}")]
    Infeasible { best: f64, target: f64 },
}

pub type Result<T> = std::result::Result<T, CoreError>;
