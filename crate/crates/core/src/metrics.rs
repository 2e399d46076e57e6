//! Pose and detection metrics: ADD, ADD-S, the correctness criterion, the
//! refiner's L1 ADD loss, the composite cross-entropy loss and mAP.

use std::cmp::Ordering;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::RigidPose;
use crate::mesh::{Mesh, UV_CLASSES};
use crate::raster::CorrespondenceMap;

/// Upper bound on sampled points for [`add_l1_sampled`].
pub const MAX_SAMPLED_POINTS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AddScore {
    /// Meters.
    pub value: f64,
    pub symmetric: bool,
}

fn nonempty(mesh: &Mesh) -> Result<()> {
    if mesh.vertices().is_empty() {
        return Err(Error::DegenerateMesh("mesh has no vertices".into()));
    }
    Ok(())
}

/// Mean distance between each vertex under `gt` and under `pred`.
pub fn add(mesh: &Mesh, gt: &RigidPose, pred: &RigidPose) -> Result<AddScore> {
    nonempty(mesh)?;
    let (rg, rp) = (gt.rotation_matrix(), pred.rotation_matrix());
    let (tg, tp) = (gt.translation(), pred.translation());
    let sum: f64 = mesh
        .vertices()
        .iter()
        .map(|x| ((rg * x + tg) - (rp * x + tp)).norm())
        .sum();
    Ok(AddScore {
        value: sum / mesh.vertices().len() as f64,
        symmetric: false,
    })
}

/// ADD for symmetric objects: each predicted vertex is matched to the
/// nearest ground-truth vertex.
pub fn add_symmetric(mesh: &Mesh, gt: &RigidPose, pred: &RigidPose) -> Result<AddScore> {
    nonempty(mesh)?;
    let g: Vec<Vector3<f64>> = mesh.vertices().iter().map(|x| gt.transform_point(x)).collect();
    let p: Vec<Vector3<f64>> = mesh.vertices().iter().map(|x| pred.transform_point(x)).collect();
    let nearest: Vec<f64> = p
        .par_iter()
        .map(|q| g.iter().map(|r| (q - r).norm_squared()).fold(f64::INFINITY, f64::min).sqrt())
        .collect();
    Ok(AddScore {
        value: nearest.iter().sum::<f64>() / p.len() as f64,
        symmetric: true,
    })
}

/// True when the score is strictly below `fraction` of the diameter.
pub fn pose_correct(score: &AddScore, diameter: f64, fraction: f64) -> bool {
    score.value < fraction * diameter
}

/// Mean L1 distance between points under `gt` and under `pred`.
pub fn add_l1_sampled(points: &[Vector3<f64>], gt: &RigidPose, pred: &RigidPose) -> Result<f64> {
    if points.len() > MAX_SAMPLED_POINTS {
        return Err(Error::TooManyPoints(points.len()));
    }
    if points.is_empty() {
        return Err(Error::InvalidParameter("no points to score".into()));
    }
    let (rg, rp) = (gt.rotation_matrix(), pred.rotation_matrix());
    let sum: f64 = points
        .iter()
        .map(|x| ((rg * x + gt.translation()) - (rp * x + pred.translation())).lp_norm(1))
        .sum();
    Ok(sum / points.len() as f64)
}

/// Area-weighted uniform samples on the mesh surface.
pub fn sample_surface_points(mesh: &Mesh, n: usize, seed: u64) -> Result<Vec<Vector3<f64>>> {
    if n > MAX_SAMPLED_POINTS {
        return Err(Error::TooManyPoints(n));
    }
    let mut cumulative = Vec::with_capacity(mesh.triangles().len());
    let mut total = 0.0;
    for i in 0..mesh.triangles().len() {
        let [a, b, c] = mesh.triangle(i);
        total += 0.5 * (b - a).cross(&(c - a)).norm();
        cumulative.push(total);
    }
    if !(total > 0.0) {
        return Err(Error::DegenerateMesh("mesh has no surface area".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n)
        .map(|_| {
            let r = rng.random::<f64>() * total;
            let ti = cumulative.partition_point(|&c| c <= r).min(cumulative.len() - 1);
            let [a, b, c] = mesh.triangle(ti);
            let (s, t): (f64, f64) = (rng.random(), rng.random());
            let su = s.sqrt();
            a * (1.0 - su) + b * (su * (1.0 - t)) + c * (su * t)
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
            gamma: 1.0,
        }
    }
}

/// Per-pixel class probabilities, pixel-major: `data[pixel * classes + c]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbTensor {
    pub width: u32,
    pub height: u32,
    pub classes: usize,
    pub data: Vec<f64>,
}

impl ProbTensor {
    pub fn pixel(&self, idx: usize) -> &[f64] {
        &self.data[idx * self.classes..(idx + 1) * self.classes]
    }

    /// One-hot tensor from per-pixel labels.
    pub fn one_hot(width: u32, height: u32, classes: usize, labels: &[u8]) -> Self {
        let mut data = vec![0.0; labels.len() * classes];
        for (i, &l) in labels.iter().enumerate() {
            data[i * classes + l as usize] = 1.0;
        }
        Self {
            width,
            height,
            classes,
            data,
        }
    }

    pub fn uniform(width: u32, height: u32, classes: usize) -> Self {
        let n = width as usize * height as usize;
        Self {
            width,
            height,
            classes,
            data: vec![1.0 / classes as f64; n * classes],
        }
    }

    fn check(&self, name: &'static str, gt: &CorrespondenceMap, classes: Option<usize>) -> Result<()> {
        if self.width != gt.width() || self.height != gt.height() {
            return Err(Error::ShapeMismatch(format!(
                "{name} is {}x{}, ground truth {}x{}",
                self.width,
                self.height,
                gt.width(),
                gt.height()
            )));
        }
        if let Some(c) = classes {
            if self.classes != c {
                return Err(Error::ShapeMismatch(format!("{name} has {} classes, need {c}", self.classes)));
            }
        }
        if self.data.len() != gt.len() * self.classes {
            return Err(Error::ShapeMismatch(format!(
                "{name} holds {} values for {} pixels × {} classes",
                self.data.len(),
                gt.len(),
                self.classes
            )));
        }
        for idx in 0..gt.len() {
            let sum: f64 = self.pixel(idx).iter().sum();
            if (sum - 1.0).abs() > 1e-6 || self.pixel(idx).iter().any(|p| *p < 0.0) {
                return Err(Error::UnnormalizedProbabilities {
                    tensor: name,
                    pixel: idx,
                    sum,
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub mask: f64,
    pub u: f64,
    pub v: f64,
    pub total: f64,
}

/// Inverse class frequency of the ground-truth mask; absent classes get 0.
pub fn inverse_frequency_weights(gt: &CorrespondenceMap, classes: usize) -> Vec<f64> {
    let mut counts = vec![0usize; classes];
    for &id in &gt.id {
        if (id as usize) < classes {
            counts[id as usize] += 1;
        }
    }
    counts
        .iter()
        .map(|&c| if c > 0 { 1.0 / c as f64 } else { 0.0 })
        .collect()
}

/// `α·L_mask + β·L_u + γ·L_v` with natural-log cross-entropies.
///
/// The mask term is a class-weighted mean over all pixels (normalized by the
/// summed weights of the target classes); the U and V terms are plain means
/// over foreground pixels and are zero when there is no foreground. Without
/// explicit `mask_class_weights`, inverse class frequency is used.
pub fn composite_loss(
    mask_probs: &ProbTensor,
    u_probs: &ProbTensor,
    v_probs: &ProbTensor,
    gt: &CorrespondenceMap,
    w: &LossWeights,
    mask_class_weights: Option<&[f64]>,
) -> Result<LossBreakdown> {
    let max_id = gt.id.iter().copied().max().unwrap_or(0) as usize;
    if mask_probs.classes <= max_id {
        return Err(Error::ShapeMismatch(format!(
            "mask has {} classes but ground truth uses id {max_id}",
            mask_probs.classes
        )));
    }
    mask_probs.check("mask", gt, None)?;
    u_probs.check("u", gt, Some(UV_CLASSES))?;
    v_probs.check("v", gt, Some(UV_CLASSES))?;
    let weights = match mask_class_weights {
        Some(cw) if cw.len() != mask_probs.classes => {
            return Err(Error::ShapeMismatch(format!(
                "{} mask class weights for {} classes",
                cw.len(),
                mask_probs.classes
            )))
        }
        Some(cw) => cw.to_vec(),
        None => inverse_frequency_weights(gt, mask_probs.classes),
    };

    let (mut wsum, mut mask_sum) = (0.0, 0.0);
    let (mut fg, mut u_sum, mut v_sum) = (0usize, 0.0, 0.0);
    for idx in 0..gt.len() {
        let y = gt.id[idx] as usize;
        let wy = weights[y];
        wsum += wy;
        mask_sum += wy * -mask_probs.pixel(idx)[y].ln();
        if y != 0 {
            fg += 1;
            u_sum += -u_probs.pixel(idx)[gt.u[idx] as usize].ln();
            v_sum += -v_probs.pixel(idx)[gt.v[idx] as usize].ln();
        }
    }
    let mask = if wsum > 0.0 { mask_sum / wsum } else { 0.0 };
    let (u, v) = if fg > 0 {
        (u_sum / fg as f64, v_sum / fg as f64)
    } else {
        (0.0, 0.0)
    };
    Ok(LossBreakdown {
        mask,
        u,
        v,
        total: w.alpha * mask + w.beta * u + w.gamma * v,
    })
}

/// Axis-aligned box `[x0, y0, x1, y1]` with exclusive max corner.
pub type BBox = [f64; 4];

pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let iw = (a[2].min(b[2]) - a[0].max(b[0])).max(0.0);
    let ih = (a[3].min(b[3]) - a[1].max(b[1])).max(0.0);
    let inter = iw * ih;
    let area = |r: &BBox| (r[2] - r[0]).max(0.0) * (r[3] - r[1]).max(0.0);
    let union = area(a) + area(b) - inter;
    if union > 0.0 {
        inter / union
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    /// Image the detection belongs to; matching never crosses images.
    pub frame: usize,
    pub object_id: u32,
    pub confidence: f64,
    pub bbox: BBox,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthBox {
    pub frame: usize,
    pub object_id: u32,
    pub bbox: BBox,
}

/// All-point interpolated average precision for one class.
fn average_precision(dets: &[&Detection], gts: &[&GroundTruthBox], iou_threshold: f64) -> f64 {
    if gts.is_empty() {
        return 0.0;
    }
    let mut order: Vec<&Detection> = dets.to_vec();
    // stable: equal confidences keep input order
    order.sort_by(|a, b| b.confidence.partial_cmp(&a.confidence).unwrap_or(Ordering::Equal));
    let mut matched = vec![false; gts.len()];
    let mut tp = 0usize;
    let mut points = Vec::with_capacity(order.len());
    for (rank, d) in order.iter().enumerate() {
        let best = gts
            .iter()
            .enumerate()
            .filter(|(gi, g)| !matched[*gi] && g.frame == d.frame)
            .map(|(gi, g)| (gi, iou(&d.bbox, &g.bbox)))
            .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(Ordering::Equal).then(b.0.cmp(&a.0)));
        if let Some((gi, o)) = best {
            if o >= iou_threshold {
                matched[gi] = true;
                tp += 1;
            }
        }
        let recall = tp as f64 / gts.len() as f64;
        let precision = tp as f64 / (rank + 1) as f64;
        points.push((recall, precision));
    }
    // precision envelope from the right
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for i in 0..points.len() {
        let (r, _) = points[i];
        if r > prev_recall {
            let p_interp = points[i..].iter().map(|p| p.1).fold(0.0, f64::max);
            ap += (r - prev_recall) * p_interp;
            prev_recall = r;
        }
    }
    ap
}

/// Mean over ground-truth classes of the per-class AP at `iou_threshold`.
pub fn mean_average_precision(detections: &[Detection], gts: &[GroundTruthBox], iou_threshold: f64) -> f64 {
    let mut classes: Vec<u32> = gts.iter().map(|g| g.object_id).collect();
    classes.sort_unstable();
    classes.dedup();
    if classes.is_empty() {
        return 0.0;
    }
    let total: f64 = classes
        .iter()
        .map(|&c| {
            let d: Vec<&Detection> = detections.iter().filter(|d| d.object_id == c).collect();
            let g: Vec<&GroundTruthBox> = gts.iter().filter(|g| g.object_id == c).collect();
            average_precision(&d, &g, iou_threshold)
        })
        .sum();
    total / classes.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use nalgebra::UnitQuaternion;
    use proptest::prelude::*;

    fn pose(r: [f64; 3], t: [f64; 3]) -> RigidPose {
        RigidPose::new(UnitQuaternion::from_euler_angles(r[0], r[1], r[2]), Vector3::from(t))
    }

    #[test]
    fn add_of_identical_poses_is_zero() {
        let m = fixtures::icosphere_blob(0.1, 2);
        let p = pose([0.1, 0.2, 0.3], [0.0, 0.1, 0.9]);
        assert_eq!(add(&m, &p, &p).unwrap().value, 0.0);
        assert_eq!(add_symmetric(&m, &p, &p).unwrap().value, 0.0);
    }

    #[test]
    fn add_of_pure_translation() {
        let m = fixtures::voxel_cube(0.1, 3);
        let p = pose([0.3, -0.2, 0.1], [0.0, 0.0, 1.0]);
        let q = RigidPose::new(*p.rotation(), p.translation() + Vector3::new(0.03, 0.0, -0.04));
        assert!((add(&m, &p, &q).unwrap().value - 0.05).abs() < 1e-15);
    }

    #[test]
    fn strict_threshold() {
        let d = 3f64.sqrt();
        let s = |v| AddScore { value: v, symmetric: false };
        assert!(pose_correct(&s(0.0), d, 0.1));
        assert!(!pose_correct(&s(0.1 * d), d, 0.1));
        assert!(pose_correct(&s(0.17), d, 0.1));
    }

    #[test]
    fn l1_loss_cases() {
        let p = pose([0.1, 0.2, 0.3], [0.0, 0.0, 1.0]);
        let pts = vec![Vector3::new(0.1, -0.2, 0.3)];
        assert_eq!(add_l1_sampled(&pts, &p, &p).unwrap(), 0.0);
        let shifted = RigidPose::new(*p.rotation(), p.translation() + Vector3::new(0.01, -0.02, 0.03));
        assert!((add_l1_sampled(&pts, &p, &shifted).unwrap() - 0.06).abs() < 1e-15);
        let many = vec![Vector3::zeros(); 10_001];
        assert!(matches!(add_l1_sampled(&many, &p, &p), Err(Error::TooManyPoints(10_001))));
    }

    #[test]
    fn samples_lie_inside_single_triangle() {
        let m = Mesh::new(
            vec![Vector3::new(0.0, 0.0, 0.0), Vector3::new(2.0, 0.0, 0.0), Vector3::new(0.0, 1.0, 0.0)],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let pts = sample_surface_points(&m, 1000, 5).unwrap();
        for p in &pts {
            // barycentric coordinates of the right triangle
            let (b1, b2) = (p.x / 2.0, p.y);
            assert!(b1 >= 0.0 && b2 >= 0.0 && b1 + b2 <= 1.0 + 1e-12 && p.z == 0.0);
        }
        assert_eq!(pts, sample_surface_points(&m, 1000, 5).unwrap());
        assert!(sample_surface_points(&m, 10_001, 5).is_err());
        let no_faces = Mesh::new(vec![Vector3::zeros()], vec![]).unwrap();
        assert!(matches!(sample_surface_points(&no_faces, 5, 0), Err(Error::DegenerateMesh(_))));
    }

    #[test]
    fn samples_follow_area_weights() {
        // triangle A has area 4.5, triangle B 0.5: a 0.9 / 0.1 split
        let m = Mesh::new(
            vec![
                Vector3::new(0.0, 0.0, 0.0),
                Vector3::new(3.0, 0.0, 0.0),
                Vector3::new(0.0, 3.0, 0.0),
                Vector3::new(10.0, 0.0, 0.0),
                Vector3::new(11.0, 0.0, 0.0),
                Vector3::new(10.0, 1.0, 0.0),
            ],
            vec![[0, 1, 2], [3, 4, 5]],
        )
        .unwrap();
        let pts = sample_surface_points(&m, 10_000, 17).unwrap();
        let in_b = pts.iter().filter(|p| p.x >= 10.0).count() as f64;
        // 99% binomial band: 1000 ± 2.576·sqrt(10000·0.1·0.9) = 1000 ± 77.3
        assert!((in_b - 1000.0).abs() <= 77.3, "{in_b}");
    }

    /// Independent loop oracle for ADD.
    fn add_oracle(v: &[Vector3<f64>], gt: &RigidPose, pr: &RigidPose) -> f64 {
        let (rg, rp) = (gt.rotation_matrix(), pr.rotation_matrix());
        let mut s = 0.0;
        for x in v {
            let mut d2 = 0.0;
            for r in 0..3 {
                let mut a = gt.translation()[r];
                let mut b = pr.translation()[r];
                for c in 0..3 {
                    a += rg[(r, c)] * x[c];
                    b += rp[(r, c)] * x[c];
                }
                d2 += (a - b) * (a - b);
            }
            s += d2.sqrt();
        }
        s / v.len() as f64
    }

    #[test]
    fn add_symmetric_matches_brute_force() {
        let m = fixtures::icosphere_blob(0.1, 2); // 162 vertices
        let m = Mesh::new(m.vertices().iter().chain(m.vertices().iter().take(38)).map(|v| v * 1.1).collect(), vec![]).unwrap();
        assert_eq!(m.vertices().len(), 200);
        let gt = pose([0.1, 0.2, 0.3], [0.0, 0.0, 1.0]);
        let pr = pose([0.2, 0.1, -0.3], [0.01, 0.0, 1.02]);
        let g: Vec<_> = m.vertices().iter().map(|x| gt.transform_point(x)).collect();
        let mut total = 0.0;
        for x in m.vertices() {
            let q = pr.transform_point(x);
            let mut best = f64::INFINITY;
            for r in &g {
                best = best.min((q - r).norm());
            }
            total += best;
        }
        let brute = total / 200.0;
        assert!((add_symmetric(&m, &gt, &pr).unwrap().value - brute).abs() < 1e-12);
    }

    fn arb_pose() -> impl Strategy<Value = RigidPose> {
        (prop::array::uniform3(-3.0..3.0f64), prop::array::uniform3(-0.2..0.2f64)).prop_map(|(r, t)| pose(r, t))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn add_properties(
            pts in prop::collection::vec(prop::array::uniform3(-0.2..0.2f64), 4..40),
            gt in arb_pose(),
            pr in arb_pose(),
        ) {
            let v: Vec<Vector3<f64>> = pts.into_iter().map(Vector3::from).collect();
            let m = Mesh::new(v.clone(), vec![]).unwrap();
            let a = add(&m, &gt, &pr).unwrap().value;
            prop_assert!((a - add_oracle(&v, &gt, &pr)).abs() < 1e-12);
            prop_assert!((a - add(&m, &pr, &gt).unwrap().value).abs() < 1e-12);
            let s = add_symmetric(&m, &gt, &pr).unwrap().value;
            prop_assert!(s <= a + 1e-12);
            let l1 = add_l1_sampled(&v, &gt, &pr).unwrap();
            prop_assert!(l1 + 1e-12 >= a);
        }
    }

    fn tiny_gt() -> CorrespondenceMap {
        let mut gt = CorrespondenceMap::empty(2, 1);
        gt.id[0] = 1;
        gt.u[0] = 3;
        gt.v[0] = 5;
        gt.depth[0] = 1.0;
        gt
    }

    fn spread(classes: usize, hot: usize, p: f64) -> Vec<f64> {
        let rest = (1.0 - p) / (classes - 1) as f64;
        (0..classes).map(|c| if c == hot { p } else { rest }).collect()
    }

    #[test]
    fn loss_of_one_hot_truth_is_zero() {
        let gt = tiny_gt();
        let m = ProbTensor::one_hot(2, 1, 2, &gt.id);
        let u = ProbTensor::one_hot(2, 1, 256, &gt.u);
        let v = ProbTensor::one_hot(2, 1, 256, &gt.v);
        let l = composite_loss(&m, &u, &v, &gt, &LossWeights::default(), None).unwrap();
        assert_eq!(l.total, 0.0);
    }

    #[test]
    fn uniform_u_gives_ln_256() {
        let gt = tiny_gt();
        let m = ProbTensor::one_hot(2, 1, 2, &gt.id);
        let u = ProbTensor::uniform(2, 1, 256);
        let v = ProbTensor::one_hot(2, 1, 256, &gt.v);
        let l = composite_loss(&m, &u, &v, &gt, &LossWeights::default(), None).unwrap();
        assert!((l.u - 256f64.ln()).abs() < 1e-9);
        assert!((l.u - 5.545177444479562).abs() < 1e-9);
    }

    #[test]
    fn hand_computed_two_pixel_loss() {
        let gt = tiny_gt();
        let m = ProbTensor { width: 2, height: 1, classes: 2, data: vec![0.2, 0.8, 0.6, 0.4] };
        let mut u = ProbTensor::uniform(2, 1, 256);
        u.data[..256].copy_from_slice(&spread(256, 3, 0.5));
        let mut v = ProbTensor::uniform(2, 1, 256);
        v.data[..256].copy_from_slice(&spread(256, 5, 0.25));
        let l = composite_loss(&m, &u, &v, &gt, &LossWeights::default(), Some(&[1.0, 3.0])).unwrap();
        // (3·(−ln 0.8) + 1·(−ln 0.6)) / 4, −ln 0.5, −ln 0.25
        assert!((l.mask - 0.29506406942715496).abs() < 1e-12);
        assert!((l.u - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((l.v - 1.3862943611198906).abs() < 1e-12);
        assert!((l.total - 2.374505611106991).abs() < 1e-12);
        // default inverse-frequency weights: one pixel per class → equal weights
        let d = composite_loss(&m, &u, &v, &gt, &LossWeights::default(), None).unwrap();
        assert!((d.mask - (-(0.8f64.ln()) - 0.6f64.ln()) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn loss_is_linear_in_weights() {
        let gt = tiny_gt();
        let m = ProbTensor { width: 2, height: 1, classes: 2, data: vec![0.3, 0.7, 0.9, 0.1] };
        let u = ProbTensor::uniform(2, 1, 256);
        let mut v = ProbTensor::uniform(2, 1, 256);
        v.data[..256].copy_from_slice(&spread(256, 5, 0.1));
        let w = LossWeights { alpha: 0.7, beta: 1.3, gamma: 0.4 };
        let w2 = LossWeights { alpha: 1.4, beta: 2.6, gamma: 0.8 };
        let a = composite_loss(&m, &u, &v, &gt, &w, None).unwrap().total;
        let b = composite_loss(&m, &u, &v, &gt, &w2, None).unwrap().total;
        assert!((b - 2.0 * a).abs() < 1e-12);
    }

    #[test]
    fn loss_validation() {
        let gt = tiny_gt();
        let m = ProbTensor { width: 2, height: 1, classes: 2, data: vec![0.3, 0.6, 0.9, 0.1] };
        let u = ProbTensor::uniform(2, 1, 256);
        let r = composite_loss(&m, &u, &u, &gt, &LossWeights::default(), None);
        assert!(matches!(r, Err(Error::UnnormalizedProbabilities { pixel: 0, .. })));
        let small = ProbTensor::uniform(1, 1, 2);
        let r = composite_loss(&small, &u, &u, &gt, &LossWeights::default(), None);
        assert!(matches!(r, Err(Error::ShapeMismatch(_))));
    }

    fn det(frame: usize, id: u32, c: f64, b: BBox) -> Detection {
        Detection { frame, object_id: id, confidence: c, bbox: b }
    }

    fn gtb(frame: usize, id: u32, b: BBox) -> GroundTruthBox {
        GroundTruthBox { frame, object_id: id, bbox: b }
    }

    #[test]
    fn map_perfect_and_empty() {
        let gts = vec![gtb(0, 1, [0.0, 0.0, 10.0, 10.0]), gtb(1, 2, [5.0, 5.0, 20.0, 30.0])];
        let dets: Vec<Detection> = gts.iter().map(|g| det(g.frame, g.object_id, 1.0, g.bbox)).collect();
        assert_eq!(mean_average_precision(&dets, &gts, 0.5), 1.0);
        assert_eq!(mean_average_precision(&[], &gts, 0.5), 0.0);
        assert_eq!(mean_average_precision(&[], &[], 0.5), 0.0);
    }

    #[test]
    fn map_hand_fixture() {
        // ranks: 0.9 TP, 0.8 FP, 0.7 TP → PR points (0.5, 1), (0.5, 0.5), (1, 2/3)
        // AP = 0.5·1 + 0.5·2/3 = 5/6
        let gts = vec![gtb(0, 1, [0.0, 0.0, 10.0, 10.0]), gtb(0, 1, [20.0, 20.0, 30.0, 30.0])];
        let dets = vec![
            det(0, 1, 0.9, [0.0, 0.0, 10.0, 10.0]),
            det(0, 1, 0.8, [50.0, 50.0, 60.0, 60.0]),
            det(0, 1, 0.7, [21.0, 20.0, 30.0, 30.0]),
        ];
        assert!((mean_average_precision(&dets, &gts, 0.5) - 5.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn map_never_matches_across_frames() {
        let gts = vec![gtb(0, 1, [0.0, 0.0, 10.0, 10.0])];
        let dets = vec![det(1, 1, 0.9, [0.0, 0.0, 10.0, 10.0])];
        assert_eq!(mean_average_precision(&dets, &gts, 0.5), 0.0);
    }

    #[test]
    fn iou_basics() {
        assert_eq!(iou(&[0.0, 0.0, 2.0, 2.0], &[1.0, 0.0, 3.0, 2.0]), 2.0 / 6.0);
        assert_eq!(iou(&[0.0, 0.0, 1.0, 1.0], &[2.0, 2.0, 3.0, 3.0]), 0.0);
    }
}
