//! Simulation and numerical verification toolkit for critical decomposable
//! multi-type Galton-Watson processes with immigration (GWI processes).
//!
//! * [`model`]: laws, GWI models, criticality and the 3-type case table.
//! * [`simulate`]: branching recursion, martingale differences, decompositions
//!   and the exact weighted-sum identities.
//! * [`moments`]: exact means, variances and growth exponents.
//! * [`sde`]: the limit diffusions and their analytic moments.
//! * [`harness`]: scaled step processes, Monte Carlo convergence experiments
//!   and growth-rate fits.
//! * [`cli`]: the `gwi` command-line front end.

pub mod cli;
pub mod harness;
pub mod model;
pub mod moments;
pub mod rng;
pub mod sde;
pub mod simulate;

pub use model::{Case, CaseId, DistributionSpec, GwiModel, ModelError};
