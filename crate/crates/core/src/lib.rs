//! Matrix-free cone-beam projection and backprojection on convex
//! tetrahedral meshes.
//!
//! Rays are initialised with an R*-tree over the boundary faces and then
//! walked element to element through the face-adjacency graph, with an
//! escalating safety margin in the ray/triangle test.

pub mod baseline;
pub mod error;
pub mod geom;
pub mod io;
pub mod mesh;
pub mod rstar;
pub mod scanner;
pub mod solvers;
pub mod trace;

#[cfg(test)]
mod testutil;

pub type Vec3 = nalgebra::Vector3<f64>;

pub use error::{Error, Result};
pub use geom::{Precision, Ray};
pub use mesh::{validate, AttenuationField, MeshGraph, ValidationReport};
pub use rstar::RStarTree;
pub use scanner::{GeometryConfig, ScanGeometry};
pub use solvers::SolveParams;
pub use trace::{Diagnostics, ProjectionStack, Projector, RayStatus, TraceConfig};
