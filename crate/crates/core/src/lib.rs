//! Dense 2D-3D correspondence pipeline for 6DoF object pose estimation.
//!
//! Objects are textured with a quantized two-channel UV map (256 classes per
//! channel). Rendering a textured model yields an ID mask plus U/V class
//! images; decoding those images through the inverse color lookup produces
//! pixel-to-surface correspondences, which a P3P+RANSAC pose block turns into
//! a rigid pose. A render-and-rematch loop refines poses, and the metrics
//! module scores them with ADD / ADD-S, the composite cross-entropy loss and
//! mAP. The `noise` module degrades perfect maps to stand in for a network's
//! prediction errors.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod correspond;
pub mod error;
pub mod fixtures;
pub mod geometry;
pub mod mesh;
pub mod metrics;
pub mod noise;
pub mod posesolve;
pub mod raster;
pub mod refine;

pub use correspond::{decode, detected_ids, Correspondence2D3D, CorrespondenceSet};
pub use error::{Error, Result};
pub use geometry::{CameraIntrinsics, PoseDistortionParams, RigidPose};
pub use mesh::{ColorLookup, CorrespondenceModel, Mesh, UvMode};
pub use metrics::{AddScore, LossWeights};
pub use noise::CorruptionParams;
pub use posesolve::{PnPResult, RansacConfig};
pub use raster::{CorrespondenceMap, ViewSample};
