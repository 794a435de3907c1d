//! Envy-free tollbooth pricing on cactus graphs.
//!
//! A seller prices the edges of a cactus; each buyer wants to travel between
//! two vertices and buys a cheapest path if its cost fits the budget. The
//! crate computes prices whose revenue is within a factor
//! `O(log m / log log m)` of the optimum, plus brute-force oracles used to
//! check that guarantee on small inputs.

pub mod decomposition;
pub mod engine;
pub mod evaluator;
pub mod generator;
pub mod graph;
pub mod nonskeleton;
pub mod oracle;
pub mod rooted;
pub mod scalar;
pub mod skeleton;
pub mod skeleton_solver;

pub use graph::{BcTree, Buyer, CactusError, CactusGraph, CactusInstance, Component};
pub use scalar::Scalar;

/// Exact arbitrary-precision rational; the default number type.
pub type Rational = num_rational::BigRational;
/// Totally ordered `f64`, for approximate runs.
pub type Float = ordered_float::OrderedFloat<f64>;

pub type Instance = CactusInstance<Rational>;
pub type Prices = Vec<Rational>;
