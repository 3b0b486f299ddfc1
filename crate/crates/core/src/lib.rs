//! Real-time thermal spin correlators from the discretized Schwinger–Keldysh
//! spin-coherent-state path integral.
//!
//! The lattice path integral is evaluated exactly as a matrix trace
//! ([`evaluator`]), sampled by phase-reweighted Metropolis ([`sampler`]), and
//! checked against exact diagonalization ([`oracle`]). [`continuum`] extrapolates
//! lattice results linearly in `1/N`.
//!
//! All numerics are generic over [`Real`] (`f32` or `f64`); the aliases at the
//! crate root fix `f64`.
// `!(x > 0.0)` is how NaN gets rejected throughout.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coherent;
pub mod continuum;
pub mod contour;
pub mod error;
pub mod evaluator;
pub mod lattice;
pub mod linalg;
pub mod oracle;
pub mod sampler;
pub mod scalar;

pub use contour::{Leg, Ordering, Slot};
pub use error::{Error, Result};
pub use lattice::{Component, LatticeSpec, SpinRep};
pub use scalar::Real;

pub type Complex = scalar::C<f64>;
pub type BlochPoint = coherent::BlochPoint<f64>;
pub type SphereConfig = coherent::SphereConfig<f64>;
pub type QuadratureGrid = coherent::QuadratureGrid<f64>;
pub type OperatorMatrix = linalg::OperatorMatrix<f64>;
pub type HamiltonianSpec = lattice::HamiltonianSpec<f64>;
pub type HamiltonianTerm = lattice::HamiltonianTerm<f64>;
pub type ContourParams = contour::ContourParams<f64>;
pub type ExactOracle = oracle::ExactOracle<f64>;
pub type SourceField = oracle::SourceField<f64>;
pub type PropagatorSet = evaluator::PropagatorSet<f64>;
pub type InsertionSet = evaluator::InsertionSet<f64>;
pub type TwoPoint = evaluator::TwoPoint<f64>;
pub type CorrelatorSeries = evaluator::CorrelatorSeries<f64>;
pub type FitWindow = continuum::FitWindow<f64>;
pub type FitResult = continuum::FitResult<f64>;
pub type ErrorTable = continuum::ErrorTable<f64>;
pub type PathConfig = sampler::PathConfig<f64>;
pub type ActionValue = sampler::ActionValue<f64>;
pub type McEstimate = sampler::McEstimate<f64>;
