//! Failure detection for lidar motion segmentation by comparing a supervised
//! motion stream against labels derived from self-supervised scene flow.
//!
//! The pipeline fuses supervised semantic and motion predictions, derives
//! point-wise motion labels from ego-motion compensated scene flow with a
//! two-stage clustering, classifies every point into one of four agreement
//! categories, clusters the contradictions, and evaluates how well
//! contradictions line up with annotated anomalies.

pub mod camera;
pub mod cloud;
pub mod cluster;
pub mod config;
pub mod discrepancy;
pub mod error;
pub mod eval;
pub mod flowlabel;
pub mod fusion;
pub mod geometry;
pub mod io;
pub mod labels;
pub mod pipeline;
pub mod preprocess;
pub mod spatial;
pub mod synth;
pub mod transfer;

pub use camera::{CalibrationSet, ImageSize};
pub use cloud::{FlowField, PointCloud};
pub use config::Config;
pub use discrepancy::{ContradictionCluster, FrameDiscrepancyStats};
pub use error::{Error, GeometryError, IngestError, PipelineError};
pub use eval::{ConfusionCounts, Metrics, Protocol};
pub use flowlabel::FlowLabelParams;
pub use geometry::RigidTransform;
pub use io::{AnomalyBox, AnomalyBoxSet, PixelBox, Superclass};
pub use labels::{DiscrepancyCategory, Motion, MotionKind, SemanticClassTable, SemanticMotionLabel};
pub use pipeline::{Pipeline, Stage};
pub use transfer::AnomalyPoint;
