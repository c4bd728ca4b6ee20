//! Lagrangian decomposition with a cutting-plane master for markdown pricing.
//!
//! Articles are priced independently once the linking constraints (such as
//! per-country sales-weighted discount targets) are moved into the objective
//! with multipliers. [`driver::run`] alternates exact evaluations of the
//! relaxation with cheap heuristic cuts assembled from earlier solutions and
//! finishes with a selection MIP over the evaluated offers.

pub mod driver;
pub mod error;
pub mod gen;
pub mod heuristics;
pub mod master;
pub mod model;
pub mod primal;
pub mod subproblem;

pub use error::{Error, Result};
pub use master::{CutOrigin, CutPool, MasterSolution};
pub use model::{Instance, LinkingConstraint, Offer};
