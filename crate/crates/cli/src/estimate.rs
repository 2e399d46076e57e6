//! Per-frame pose estimation over a dataset.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use uvpose::correspond::{decode, detected_ids, DEFAULT_MIN_PIXELS};
use uvpose::geometry::sample_distorted_pose;
use uvpose::noise::corrupt;
use uvpose::posesolve::ransac_pnp;
use uvpose::refine::{refine_pose_outcome, DEFAULT_ITERATIONS};
use uvpose::{CorruptionParams, PoseDistortionParams, RansacConfig, RigidPose};

use crate::commands::frame_corruption;
use crate::dataset::{stream_seed, Dataset, Stream};
use crate::error::{CliError, Result};

/// Initial poses sampled around ground truth instead of solved by RANSAC.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistortSpec {
    pub rot_sigma_deg: f64,
    /// Translation sigma (xy and z) as a fraction of the object diameter.
    pub trans_sigma_frac: f64,
}

impl DistortSpec {
    pub fn params(&self, diameter: f64) -> uvpose::Result<PoseDistortionParams> {
        let s = self.trans_sigma_frac * diameter;
        PoseDistortionParams::new(self.rot_sigma_deg, s, s)
    }
}

#[derive(Debug, Clone)]
pub struct EstimateOptions {
    pub corruption: Option<CorruptionParams>,
    pub ransac: RansacConfig,
    pub refine: bool,
    pub refine_iters: usize,
    pub distort: Option<DistortSpec>,
    pub min_pixels: usize,
    pub seed: u64,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        Self {
            corruption: None,
            ransac: RansacConfig::default(),
            refine: false,
            refine_iters: DEFAULT_ITERATIONS,
            distort: None,
            min_pixels: DEFAULT_MIN_PIXELS,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineInfo {
    pub accepted: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectResult {
    pub id: u32,
    pub name: String,
    /// Decoded correspondences available to the solver.
    pub correspondences: usize,
    /// Bounding box `[x0, y0, x1, y1)` of the observed mask.
    pub bbox: [u32; 4],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pose: Option<RigidPose>,
    /// RANSAC inlier proportion.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inliers: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_err_px: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refine: Option<RefineInfo>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameResult {
    pub frame: String,
    pub index: usize,
    pub objects: Vec<ObjectResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Results {
    pub frames: Vec<FrameResult>,
}

impl Results {
    pub fn detections(&self) -> usize {
        self.frames.iter().map(|f| f.objects.len()).sum()
    }

    pub fn solved(&self) -> usize {
        self.frames.iter().flat_map(|f| &f.objects).filter(|o| o.pose.is_some()).count()
    }
}

fn estimate_frame(ds: &Dataset, index: usize, opts: &EstimateOptions) -> Result<FrameResult> {
    let manifest = ds.frame_manifest(index)?;
    let mut map = ds.frame_map(&manifest)?;
    if let Some(c) = &opts.corruption {
        map = corrupt(&map, &frame_corruption(c, index))?;
    }
    let k = &ds.manifest.intrinsics;
    let detected = detected_ids(&map, opts.min_pixels);
    let sets = decode(&map, &ds.lookups())?;
    let mut objects = Vec::new();
    for set in sets.into_iter().filter(|s| detected.contains(&s.object_id)) {
        let id = set.object_id;
        let entry = ds
            .object(id)
            .ok_or_else(|| CliError::Usage(format!("frame {} contains unknown object id {id}", manifest.frame)))?;
        let bbox = map.bbox_of(id as u8).expect("detected object has pixels");
        let cfg = RansacConfig {
            seed: stream_seed(opts.seed ^ opts.ransac.seed, Stream::Ransac, index as u64, id),
            ..opts.ransac
        };
        let mut r = ObjectResult {
            id,
            name: entry.name.clone(),
            correspondences: set.items.len(),
            bbox,
            pose: None,
            confidence: None,
            inliers: None,
            mean_err_px: None,
            error: None,
            refine: None,
        };
        if let Some(spec) = &opts.distort {
            let gt = manifest.objects.iter().find(|o| o.id == id);
            match gt {
                Some(gt) => {
                    let seed = stream_seed(opts.seed, Stream::Distortion, index as u64, id);
                    r.pose = Some(sample_distorted_pose(&gt.pose, &spec.params(entry.diameter)?, seed));
                }
                None => r.error = Some("no ground truth to distort".into()),
            }
        } else {
            match ransac_pnp(&set.items, k, &cfg) {
                Ok(res) => {
                    r.pose = Some(res.pose);
                    r.confidence = Some(res.confidence);
                    r.inliers = Some(res.inlier_indices.len());
                    r.mean_err_px = Some(res.mean_reproj_error);
                }
                Err(e) => r.error = Some(e.to_string()),
            }
        }
        if let (true, Some(init)) = (opts.refine, r.pose) {
            let model = &ds.models[&id];
            match refine_pose_outcome(&map, model, id, &init, k, opts.refine_iters, &cfg) {
                Ok(o) => {
                    r.pose = Some(o.pose);
                    r.refine = Some(RefineInfo {
                        accepted: o.accepted,
                        failure: o.failure,
                    });
                }
                Err(e) => {
                    r.refine = Some(RefineInfo {
                        accepted: 0,
                        failure: Some(e.to_string()),
                    })
                }
            }
        }
        objects.push(r);
    }
    Ok(FrameResult {
        frame: manifest.frame,
        index,
        objects,
    })
}

/// Estimates every detected object in every frame. Frames run in parallel;
/// results keep frame order.
pub fn estimate(ds: &Dataset, opts: &EstimateOptions) -> Result<Results> {
    opts.ransac.validate()?;
    if let Some(c) = &opts.corruption {
        c.validate()?;
    }
    let frames = (0..ds.manifest.frames.len())
        .into_par_iter()
        .map(|i| estimate_frame(ds, i, opts))
        .collect::<Result<Vec<_>>>()?;
    Ok(Results { frames })
}
