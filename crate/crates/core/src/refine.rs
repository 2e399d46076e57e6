//! Render-and-rematch pose refinement.
//!
//! Each pass renders the correspondence model at the current estimate, keeps
//! the observed pixels whose classes roughly agree with the rendering, and
//! re-solves the pose from those pixels alone.

use std::collections::BTreeMap;

use crate::correspond::{decode, Correspondence2D3D};
use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, RigidPose};
use crate::mesh::CorrespondenceModel;
use crate::posesolve::{mean_reprojection_error, ransac_pnp, RansacConfig};
use crate::raster::{render, CorrespondenceMap};

/// Maximum Chebyshev distance, in classes, between observed and rendered
/// (u, v) for a pixel to take part in the next solve.
pub const GATE_RADIUS: u8 = 8;

/// Default number of render-and-rematch passes.
pub const DEFAULT_ITERATIONS: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct RefineOutcome {
    /// Best pose seen; the init if nothing was accepted.
    pub pose: RigidPose,
    /// Passes whose solution was accepted.
    pub accepted: usize,
    /// Mean inlier reprojection error of the pose after each pass, pixels.
    pub errors: Vec<f64>,
    /// Why a pass could not produce a hypothesis, if one failed.
    pub failure: Option<String>,
}

impl RefineOutcome {
    pub fn failed(&self) -> bool {
        self.failure.is_some()
    }
}

/// Observed pixels of `object_id` whose classes lie within the gate radius of
/// the rendered classes at the same pixel, as a correspondence map.
pub fn gate(observed: &CorrespondenceMap, rendered: &CorrespondenceMap, object_id: u8) -> CorrespondenceMap {
    let mut out = CorrespondenceMap::empty(observed.width(), observed.height());
    for idx in 0..observed.len() {
        if observed.id[idx] != object_id || rendered.id[idx] != object_id {
            continue;
        }
        let du = observed.u[idx].abs_diff(rendered.u[idx]);
        let dv = observed.v[idx].abs_diff(rendered.v[idx]);
        if du.max(dv) <= GATE_RADIUS {
            out.id[idx] = object_id;
            out.u[idx] = observed.u[idx];
            out.v[idx] = observed.v[idx];
            out.depth[idx] = observed.depth[idx];
        }
    }
    out
}

fn check_inputs(observed: &CorrespondenceMap, object_id: u32, k: &CameraIntrinsics) -> Result<u8> {
    let id = u8::try_from(object_id)
        .ok()
        .filter(|&id| id != 0)
        .ok_or_else(|| Error::InvalidParameter(format!("object id {object_id} outside 1..=255")))?;
    if observed.width() != k.width || observed.height() != k.height {
        return Err(Error::ShapeMismatch(format!(
            "observed map is {}x{}, camera {}x{}",
            observed.width(),
            observed.height(),
            k.width,
            k.height
        )));
    }
    Ok(id)
}

/// Refines `init` against `observed`, reporting a failed pass in the outcome
/// instead of as an error. Only an empty render at `init` is an error.
pub fn refine_pose_outcome(
    observed: &CorrespondenceMap,
    model: &CorrespondenceModel,
    object_id: u32,
    init: &RigidPose,
    k: &CameraIntrinsics,
    iters: usize,
    cfg: &RansacConfig,
) -> Result<RefineOutcome> {
    let id = check_inputs(observed, object_id, k)?;
    let lookups = BTreeMap::from([(object_id, model.lookup())]);
    let mut outcome = RefineOutcome {
        pose: *init,
        accepted: 0,
        errors: Vec::with_capacity(iters),
        failure: None,
    };
    for pass in 0..iters {
        let rendered = render(model, object_id, &outcome.pose, k)?;
        if rendered.count_of(id) == 0 {
            if pass == 0 {
                return Err(Error::EmptyRender);
            }
            outcome.failure = Some("model left the image".into());
            break;
        }
        let gated = gate(observed, &rendered, id);
        let corrs: Vec<Correspondence2D3D> = decode(&gated, &lookups)?
            .into_iter()
            .flat_map(|s| s.items)
            .collect();
        let pass_cfg = RansacConfig {
            seed: cfg.seed.wrapping_add(pass as u64),
            ..*cfg
        };
        let result = match ransac_pnp(&corrs, k, &pass_cfg) {
            Ok(r) => r,
            Err(e @ (Error::NoValidHypothesis { .. } | Error::InsufficientCorrespondences(_))) => {
                outcome.failure = Some(e.to_string());
                break;
            }
            Err(e) => return Err(e),
        };
        // compare both poses on the same inlier set
        let inliers: Vec<Correspondence2D3D> = result.inlier_indices.iter().map(|&i| corrs[i]).collect();
        let current = mean_reprojection_error(&inliers, &outcome.pose, k);
        if result.mean_reproj_error <= current {
            outcome.pose = result.pose;
            outcome.accepted += 1;
            outcome.errors.push(result.mean_reproj_error);
        } else {
            outcome.errors.push(current);
        }
    }
    Ok(outcome)
}

/// Refines `init` with `iters` render-and-rematch passes.
///
/// A pass without a valid hypothesis yields `RefinementFailed` carrying the
/// best pose reached so far.
pub fn refine_pose(
    observed: &CorrespondenceMap,
    model: &CorrespondenceModel,
    object_id: u32,
    init: &RigidPose,
    k: &CameraIntrinsics,
    iters: usize,
    cfg: &RansacConfig,
) -> Result<RigidPose> {
    let outcome = refine_pose_outcome(observed, model, object_id, init, k, iters, cfg)?;
    match outcome.failure {
        Some(reason) => Err(Error::RefinementFailed {
            last_pose: Box::new(outcome.pose),
            reason,
        }),
        None => Ok(outcome.pose),
    }
}
