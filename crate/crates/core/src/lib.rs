//! Optimal uncoded cache placement for coded caching with nonuniform file
//! popularity.
//!
//! The crate covers the whole pipeline: popularity models and demand order
//! statistics ([`popularity`]), the linear rate functional and placement
//! bookkeeping ([`placement`]), closed-form candidate searches
//! ([`solver`]), an independent simplex oracle ([`lp`]), a bit-level
//! simulation of coded delivery ([`delivery`]) and genie-based lower bounds
//! ([`bounds`]).

pub mod bounds;
pub mod delivery;
pub mod error;
pub mod exec;
pub mod format;
pub mod lp;
pub mod placement;
pub mod popularity;
pub mod solver;

pub use error::{Error, Result};
pub use exec::Execution;
pub use placement::{PlacementMatrix, RateCoefficients};
pub use popularity::{OrderStatTable, PopularityModel};
pub use solver::{CandidateSolution, CaseId, PlacementProblem};
