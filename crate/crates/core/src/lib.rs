//! Circle packing metrics on closed triangulated surfaces.
//!
//! The crate computes the piecewise-flat geometry of a circle packing
//! metric, assembles the discrete dual-Laplacian `L = dK/du`, integrates the
//! combinatorial Calabi and Ricci flows towards constant or prescribed
//! curvature, evaluates the Calabi energy and Ricci potential, and decides
//! admissibility of target curvatures by Thurston's subset inequalities.
//!
//! All numerics are generic over [`Real`] (`f32` or `f64`); the aliases at
//! the crate root fix the scalar to `f64`.

// negated comparisons are deliberate: they also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod eigen;
pub mod error;
pub mod flows;
pub mod geometry;
pub mod laplacian;
pub mod mesh;
pub mod potential;
pub mod scalar;
pub mod thurston;

pub use error::{Error, Result};
pub use geometry::Surface;
pub use mesh::{parse_mesh, Edge, MeshError, Triangulation, VertexSubset};
pub use scalar::Real;

pub type Weight = geometry::Weight<f64>;
pub type PackingMetric = geometry::PackingMetric<f64>;
pub type GeometryState = geometry::GeometryState<f64>;
pub type DualLaplacian = laplacian::DualLaplacian<f64>;
pub type FlowKind = flows::FlowKind<f64>;
pub type FlowTrace = flows::FlowTrace<f64>;
pub type IntegratorOptions = flows::IntegratorOptions<f64>;
