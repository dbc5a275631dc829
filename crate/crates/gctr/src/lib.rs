//! GCTR: registration of cross-source 3D point clouds.
//!
//! Estimates a similarity transform (uniform scale + rotation + translation)
//! between two heterogeneous point clouds by matching sparse salient
//! structures with a joint first-order / third-order affinity tensor,
//! solved by power iteration. Includes a point-to-point ICP baseline,
//! a synthetic cross-source benchmark generator, evaluation metrics,
//! and PLY/XYZ point cloud I/O.

pub mod affinity;
pub mod benchgen;
pub mod cli;
pub mod error;
pub mod geometry;
pub mod icp;
pub mod io;
pub mod kdtree;
pub mod metrics;
pub mod preprocess;
pub mod solver;

pub use error::{Error, Result};
pub use geometry::{flat_index, unflatten, Point3, PointCloud, SimilarityTransform};
pub use solver::{gctr_register, GctrConfig, GctrResult};
