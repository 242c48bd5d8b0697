//! Semantically informed feature selection for stereo visual odometry.
//!
//! Candidate features are ranked by the mutual information their stereo
//! measurement shares with the camera pose, penalized by the entropy of their
//! Monte-Carlo-dropout class distribution. Features whose most likely class
//! is dynamic are never kept.

pub mod camera;
pub mod error;
pub mod estimator;
pub mod geometry;
pub mod infotheory;
pub mod io_eval;
pub mod selection;
pub mod scenario;
pub mod semantics;
pub mod sim;

pub use error::{Result, SivoError};
