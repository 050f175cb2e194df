use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed document: {0}")]
    Json(#[from] serde_json::Error),

    #[error("schema violation: {0}")]
    Schema(String),

    #[error("probabilities sum to {sum} at node {node}")]
    ProbabilitySum { node: String, sum: f64 },

    #[error("non-positive probability {prob} at node {node}")]
    NonPositiveProbability { node: String, prob: f64 },

    #[error("node {node} references unknown parent {parent}")]
    DanglingParent { node: String, parent: String },

    #[error("invalid tree: {0}")]
    InvalidTree(String),

    #[error("unknown node {0}")]
    UnknownNode(String),

    #[error("invalid claim: {0}")]
    InvalidClaim(String),

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The martingale polytope is empty (or has no strictly positive element).
    #[error("no martingale measure: the market admits arbitrage")]
    Arbitrage,

    #[error("linear program failed: {0}")]
    Lp(String),

    #[error("superreplication primal and dual disagree by {gap:e}")]
    DualityGap { gap: f64 },

    #[error("non-positive marginal utility {value} at x = {x}")]
    NonPositiveMarginal { x: f64, value: f64 },

    #[error("marginal level {y} outside attainable range ({lo}, {hi})")]
    OutsideMarginalRange { y: f64, lo: f64, hi: f64 },

    #[error("measure is not equivalent to P: {0}")]
    NotEquivalent(String),

    #[error("optimizer did not converge after {iterations} iterations (gradient norm {gradient_norm:e})")]
    NonConvergence {
        iterations: usize,
        gradient_norm: f64,
    },

    #[error("objective is not finite at the starting strategy")]
    NonFiniteObjective,

    #[error("exponent clamp reached at an accepted iterate (wealth {wealth})")]
    ExponentClamp { wealth: f64 },

    #[error("indifference bracket violated at p = {price}: {detail}")]
    BracketViolation { price: f64, detail: String },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
