//! Numerical engine for nonholonomic (Finsler–Cartan) geometry: jets,
//! N-adapted frames, d-connections and their curvature, conformal and
//! spinor decompositions, and twistor transport.

// Tensor code indexes several arrays with the same loop variables; `!(x > eps)`
// guards also reject NaN.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod conformal;
pub mod connections;
pub mod error;
pub mod expr;
pub mod field;
pub mod finsler;
pub mod geometry;
pub mod jetmat;
pub mod jets;
pub mod scenario;
pub mod spin;
pub mod suite;
pub mod tensor;
pub mod twistor;

pub use error::{Error, Result};
pub use field::{eval_jet, jet_crosscheck, ScalarField};
pub use geometry::{ChartSpec, DMetricField, DMetricJets, DMetricSource, FramePair, NConnectionField};
pub use jets::Jet;
pub use tensor::{Block, Role, TensorBlock, Variance};
