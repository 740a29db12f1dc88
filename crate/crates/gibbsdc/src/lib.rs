//! Simulation and verification toolkit for finite- and infinite-volume Gibbs
//! point processes.
//!
//! The crate builds Gibbs samples by thinning a dominating marked Poisson
//! process, couples samples under different boundary conditions so that their
//! disagreement is confined to Boolean clusters, and evaluates geometric
//! functionals (kNN, Voronoi, MST, persistent Betti numbers) whose normalized
//! fluctuations are checked against a Gaussian limit by a Monte Carlo harness.
//!
//! Start with the [`guide`] module for a narrative tour; it mirrors the
//! mdbook under `book/` and every code block in it runs as a doctest.

pub mod coupling;
pub mod functionals;
pub mod geometry;
pub mod guide;
pub mod harness;
pub mod models;
pub mod percolation;
pub mod rng;
pub mod sampler;

pub use geometry::{Aabb, OrderMap, Point, PointPattern, Region};
pub use models::InteractionModel;
pub use rng::StreamKey;

/// Library version string, embedded in output file headers.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("region is unbounded or its exact {0} is not computable for this expression shape")]
    UnboundedRegion(&'static str),
    #[error("duplicate point coordinates at index {0}")]
    DuplicatePoint(usize),
    #[error("mark {value} outside [0, {bound}] at index {index}")]
    MarkOutOfRange {
        index: usize,
        value: f64,
        bound: f64,
    },
    #[error("mark vector length {marks} does not match point count {points}")]
    MarkLength { points: usize, marks: usize },
    #[error("order ties between distinct points (non-null level set or duplicated points)")]
    OrderTie,
    #[error("rejection sampler exceeded its iteration budget of {0}")]
    RejectionBudget(u64),
    #[error("retention recursion exceeded its work budget of {0}")]
    RetentionBudget(u64),
    #[error("terminal retention mode requires a provably empty remainder")]
    TerminalRemainder,
    #[error("window escalation reached n_max = {0} without a stabilization certificate")]
    NoCertificate(f64),
    #[error("infinite score at point ({0})")]
    InfiniteScore(String),
    #[error("zero variance: cannot studentize a constant sample")]
    ZeroVariance,
    #[error("{0}")]
    Invalid(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
