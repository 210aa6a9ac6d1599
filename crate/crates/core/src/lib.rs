//! Weakly-supervised volumetric segmentation toolkit.
//!
//! The pieces fit together as a pipeline: sparse surface points deform a
//! spherical template ([`asm`]), the deformed mesh is rasterized into a
//! solid label ([`voxelize`]), the label and a boundary-band weight map
//! ([`grid`]) define a cross-entropy plus weighted-reconstruction loss
//! ([`loss`]) that [`varseg`] minimizes directly per voxel. [`annosim`]
//! simulates annotators and [`bench`] measures quality against effort.
//! [`service`] exposes the interactive annotate/deform loop over HTTP.

pub mod annosim;
pub mod asm;
pub mod bench;
pub mod error;
pub mod grid;
pub mod loss;
pub mod mesh;
pub mod pipeline;
pub mod rng;
pub mod service;
pub mod varseg;
pub mod voxelize;

pub use error::{Error, Result};
pub use grid::{Dims, VoxelGrid};
pub use mesh::TriMesh;

/// Physical 3D coordinate in millimetres, ordered (z, y, x) like grid indices.
pub type Point3 = nalgebra::Vector3<f64>;
