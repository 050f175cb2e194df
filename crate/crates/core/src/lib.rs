//! Utility indifference prices and superreplication on finite scenario trees.
//!
//! * [`market`]: event trees, claims, strategies and wealth dynamics.
//! * [`measures`]: the martingale polytope, no-arbitrage, superreplication by
//!   primal and dual linear programs, densities and the compactness diagnostic.
//! * [`utility`]: exponential, power and custom utility families with
//!   conjugates, normalization and assumption checkers.
//! * [`optimize`]: expected-utility maximization and conjugate dual bounds.
//! * [`pricing`]: indifference prices and the sweep over risk aversion.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod lp;
pub mod market;
pub mod measures;
pub mod optimize;
pub mod pricing;
pub mod synthetic;
pub mod utility;

pub use error::{Error, Result};
pub use market::{Claim, NodeId, ScenarioTree, Strategy, TreeBuilder};
pub use measures::{superreplication_price, MartingaleMeasure, SuperrepResult};
pub use optimize::{dual_upper_bound, max_expected_utility, OptResult, OptimizerConfig};
pub use pricing::{
    convergence_sweep, indifference_price, PriceCurve, PricePoint, PricingConfig, SweepMode,
};
pub use utility::{normalize, FamilyKind, ParametricUtility, Utility, UtilityFamily};
