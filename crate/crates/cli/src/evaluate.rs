//! Scoring estimation results against a dataset's ground truth.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use uvpose::geometry::rotation_angle_deg;
use uvpose::metrics::{add, add_symmetric, mean_average_precision, pose_correct, Detection, GroundTruthBox};
use uvpose::RigidPose;

use crate::dataset::Dataset;
use crate::error::Result;
use crate::estimate::Results;

/// Fraction of the diameter below which a pose counts as correct.
pub const ADD_FRACTION: f64 = 0.1;
pub const IOU_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectReport {
    pub id: u32,
    pub name: String,
    pub instances: usize,
    pub estimated: usize,
    pub correct: usize,
    pub percent_correct: f64,
    /// Mean ADD (ADD-S for symmetric objects) over estimated instances.
    pub mean_add: f64,
    pub mean_rot_err_deg: f64,
    pub mean_trans_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub objects: Vec<ObjectReport>,
    pub instances: usize,
    pub correct: usize,
    pub percent_correct: f64,
    pub map: f64,
    pub iou_threshold: f64,
    pub add_fraction: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct Score {
    pub add: f64,
    pub correct: bool,
    pub rot_err_deg: f64,
    pub trans_err: f64,
}

/// ADD-based score of one estimate against ground truth.
pub fn score(ds: &Dataset, id: u32, gt: &RigidPose, est: &RigidPose) -> Result<Score> {
    let entry = ds.object(id).expect("object listed in dataset");
    let mesh = ds.models[&id].mesh();
    let s = if entry.symmetric {
        add_symmetric(mesh, gt, est)?
    } else {
        add(mesh, gt, est)?
    };
    Ok(Score {
        add: s.value,
        correct: pose_correct(&s, entry.diameter, ADD_FRACTION),
        rot_err_deg: rotation_angle_deg(gt, est),
        trans_err: (gt.translation() - est.translation()).norm(),
    })
}

fn pct(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        100.0 * num as f64 / den as f64
    }
}

#[derive(Default)]
struct Acc {
    instances: usize,
    estimated: usize,
    correct: usize,
    add: f64,
    rot: f64,
    trans: f64,
}

/// Percent-correct per object and mAP. Frames are matched by stem; ground
/// truth boxes come from the dataset's (clean) id masks.
pub fn evaluate(ds: &Dataset, results: &Results) -> Result<Report> {
    let by_frame: BTreeMap<&str, &crate::estimate::FrameResult> =
        results.frames.iter().map(|f| (f.frame.as_str(), f)).collect();

    type FrameOut = (Vec<(u32, Option<Score>)>, Vec<GroundTruthBox>, Vec<Detection>);
    let per_frame: Vec<FrameOut> = (0..ds.manifest.frames.len())
        .into_par_iter()
        .map(|index| -> Result<FrameOut> {
            let manifest = ds.frame_manifest(index)?;
            let map = ds.frame_map(&manifest)?;
            let res = by_frame.get(manifest.frame.as_str());
            let mut scores = Vec::new();
            let mut gts = Vec::new();
            for inst in &manifest.objects {
                let est = res
                    .and_then(|f| f.objects.iter().find(|o| o.id == inst.id))
                    .and_then(|o| o.pose);
                let s = est.map(|p| score(ds, inst.id, &inst.pose, &p)).transpose()?;
                scores.push((inst.id, s));
                if let Some(b) = map.bbox_of(inst.id as u8) {
                    gts.push(GroundTruthBox {
                        frame: index,
                        object_id: inst.id,
                        bbox: b.map(|x| x as f64),
                    });
                }
            }
            let dets = res
                .map(|f| {
                    f.objects
                        .iter()
                        .filter_map(|o| {
                            o.confidence.map(|c| Detection {
                                frame: index,
                                object_id: o.id,
                                confidence: c,
                                bbox: o.bbox.map(|x| x as f64),
                            })
                        })
                        .collect()
                })
                .unwrap_or_default();
            Ok((scores, gts, dets))
        })
        .collect::<Result<_>>()?;

    let mut acc: BTreeMap<u32, Acc> = BTreeMap::new();
    let mut all_gts = Vec::new();
    let mut all_dets = Vec::new();
    for (scores, gts, dets) in per_frame {
        for (id, s) in scores {
            let a = acc.entry(id).or_default();
            a.instances += 1;
            if let Some(s) = s {
                a.estimated += 1;
                a.correct += s.correct as usize;
                a.add += s.add;
                a.rot += s.rot_err_deg;
                a.trans += s.trans_err;
            }
        }
        all_gts.extend(gts);
        all_dets.extend(dets);
    }
    let mean = |sum: f64, n: usize| if n == 0 { 0.0 } else { sum / n as f64 };
    let objects: Vec<ObjectReport> = ds
        .manifest
        .objects
        .iter()
        .map(|o| {
            let a = acc.remove(&o.id).unwrap_or_default();
            ObjectReport {
                id: o.id,
                name: o.name.clone(),
                instances: a.instances,
                estimated: a.estimated,
                correct: a.correct,
                percent_correct: pct(a.correct, a.instances),
                mean_add: mean(a.add, a.estimated),
                mean_rot_err_deg: mean(a.rot, a.estimated),
                mean_trans_err: mean(a.trans, a.estimated),
            }
        })
        .collect();
    let instances = objects.iter().map(|o| o.instances).sum();
    let correct = objects.iter().map(|o| o.correct).sum();
    Ok(Report {
        percent_correct: pct(correct, instances),
        instances,
        correct,
        objects,
        map: mean_average_precision(&all_dets, &all_gts, IOU_THRESHOLD),
        iou_threshold: IOU_THRESHOLD,
        add_fraction: ADD_FRACTION,
    })
}

/// Fixed-width text table of a report.
pub fn format_table(r: &Report) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:>4}  {:<12} {:>9} {:>9} {:>9} {:>12}",
        "id", "object", "instances", "correct", "percent", "mean ADD [m]"
    );
    for o in &r.objects {
        let _ = writeln!(
            s,
            "{:>4}  {:<12} {:>9} {:>9} {:>8.2}% {:>12.6}",
            o.id, o.name, o.instances, o.correct, o.percent_correct, o.mean_add
        );
    }
    let _ = writeln!(
        s,
        "{:>4}  {:<12} {:>9} {:>9} {:>8.2}%",
        "", "all", r.instances, r.correct, r.percent_correct
    );
    let _ = writeln!(s, "mAP@{:.2} IoU: {:.4}", r.iou_threshold, r.map);
    s
}
