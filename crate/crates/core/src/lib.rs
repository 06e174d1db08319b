//! Analysis and synthesis of higher-order uncoupled learning dynamics in
//! finite games.
//!
//! The crate is organized around a pipeline:
//!
//! 1. [`game`] — finite games (utility tensors or polymatrix edge lists),
//!    payoff vectors, Nash equilibrium verification, and Newton root-finding
//!    for completely mixed equilibria with a regularity check.
//! 2. [`dynamics`] — learning dynamics as open systems (replicator, target
//!    gradient play, exponentially discounted learning), washout-filter
//!    higher-order wrappers, and closed-loop ODE assembly.
//! 3. [`integrate`] — deterministic fixed-step RK4 integration and the
//!    asymptotic-best-response probe.
//! 4. [`linear`] — the reduced linearized plant at a completely mixed
//!    equilibrium, decentralized stabilizability (rank test), spectra, and
//!    strong stabilizability via parity interlacing.
//! 5. [`synthesis`] — numerical search for block-diagonal stabilizing
//!    controllers, nonlinear verification, and robustness sweeps.
//! 6. [`bandit`] — discrete-time bandit iterates whose mean dynamics are the
//!    continuous-time closed loops, with Monte Carlo convergence estimation.
//!
//! All operations are pure functions of their inputs; randomized procedures
//! take explicit seeds and are reproducible.

pub mod bandit;
pub mod dynamics;
pub mod equilibrium;
mod error;
pub mod game;
pub mod games;
pub mod integrate;
pub mod linear;
pub mod simplex;
pub mod synthesis;

pub use error::Error;
pub use game::{Game, MixedProfile, NeVerdict};
pub use equilibrium::MixedEquilibrium;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
