use nalgebra::DVector;
use thiserror::Error;

/// Errors produced by the analysis and synthesis routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid game: {0}")]
    InvalidGame(String),

    #[error("invalid mixed profile: {0}")]
    InvalidProfile(String),

    #[error("dimension mismatch for player {player}: {detail}")]
    DimensionMismatch { player: usize, detail: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("profile is not a completely mixed equilibrium: {0}")]
    NotCompletelyMixed(String),

    #[error("Newton iteration did not converge: residual {residual:.3e} after {iterations} iterations")]
    NewtonFailed { residual: f64, iterations: usize },

    #[error("Newton iterate left the interior of the strategy space")]
    LeftInterior,

    #[error("state diverged at t = {time:.4}: norm {norm:.3e} exceeds limit")]
    Diverged {
        time: f64,
        norm: f64,
        last_state: DVector<f64>,
    },

    #[error("field is not stationary at the supplied point (norm {0:.3e})")]
    NotStationary(f64),

    #[error("plant is not stabilizable and detectable: {0}")]
    NotStabilizableDetectable(String),

    #[error("pole/zero computation is ambiguous ({0}); for 2-player 2-action plants use the closed-form path")]
    AmbiguousZeros(String),

    #[error("invalid bandit configuration: {0}")]
    BanditConfig(String),
}
