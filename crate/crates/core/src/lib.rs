//! Numerical laboratory for thin poroelastic plates.
//!
//! Two solvers live side by side:
//!
//! * [`biot3d`] — the scaled quasi-static Biot system on the fixed slab
//!   `Ω = ω × (-1, 1)`, with the small thickness ratio `ε` entering as
//!   `ε⁻²`/`ε⁻⁴` weights on the transverse strain terms.
//! * [`limit2d`] — the dimension-reduced plate model: a stationary 2D
//!   Navier (membrane) system coupled to the mean pressure, plus a
//!   clamped bending equation coupled to a pressure fluctuation that
//!   diffuses only through the thickness.
//!
//! The [`verify`] module builds corrector fields, compares the two
//! solvers across an `ε`-sweep, and post-processes stress resultants,
//! moments and their equilibrium residuals. Everything is deterministic:
//! identical configurations produce bitwise-identical outputs.

pub mod biot3d;
pub mod cli;
pub mod config;
pub mod grid;
pub mod limit2d;
pub mod linsolve;
pub mod loads;
pub mod params;
pub mod verify;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Error, Debug)]
pub enum Error {
    #[error("invalid parameter `{name}`: {msg}")]
    Param { name: &'static str, msg: String },

    #[error("grid error: {0}")]
    Grid(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("config error at line {line}: {msg}")]
    Config { line: usize, msg: String },

    #[error("matrix is structurally singular: {0}")]
    StructurallySingular(String),

    #[error("numerically singular pivot at index {index} (|d| = {pivot:.3e})")]
    SingularPivot { index: usize, pivot: f64 },

    #[error("iteration did not converge after {iters} iterations (residual {residual:.3e})")]
    NonConvergence { iters: usize, residual: f64 },

    #[error("SPD contract violated: {0}")]
    SpdViolation(String),

    #[error("solve residual {residual:.3e} exceeds tolerance {tol:.3e}{context}")]
    ResidualCheck {
        residual: f64,
        tol: f64,
        context: String,
    },

    #[error("{context}: {source}")]
    Step {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Wrap an error with time-step context.
    pub fn at_step(self, step: usize, t: f64) -> Error {
        Error::Step {
            context: format!("at step {step} (t = {t:.6})"),
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
