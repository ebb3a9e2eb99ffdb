//! Analytics and learning for "Buy N, Get One Free" rewards programs.
//!
//! A customer's points-to-redemption under a fixed goal is a finite
//! Markov chain with closed-form stationary behavior. This crate builds
//! on that observation in layers:
//!
//! - [`model`]: purchase-probability links, problem instances, and
//!   regularity diagnostics;
//! - [`steady`]: stationary distributions, long-run revenues, optimal
//!   (personalized and shared) goals, the price of fairness, and mixing
//!   times;
//! - [`sim`]: exact discrete-time simulation with a reproducible
//!   draw-order contract;
//! - [`estimation`]: per-type GLM maximum likelihood with design-matrix
//!   diagnostics;
//! - [`policies`]: the Stable-Greedy and Fair-Greedy epoch policies,
//!   their schedules, and baselines;
//! - [`metrics`]: regret, observable regret, mixing loss, performance
//!   ratio, adaptivity statistics;
//! - [`experiments`]: seeded generators and study drivers reproducing
//!   the reference tables.

pub mod error;
pub mod estimation;
pub mod experiments;
pub mod metrics;
pub mod model;
pub mod policies;
pub mod rng;
pub mod sim;
pub mod steady;

pub use error::{Error, Result};
pub use model::{Instance, LinkKind, ParamBox, RegularityReport, TypeSpec};
pub use steady::{Threshold, ThresholdChoice};
