//! Rigid poses, pinhole intrinsics and pose perturbation.

use nalgebra::{Matrix3, Quaternion, Unit, UnitQuaternion, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Points closer to the camera plane than this are rejected by projection.
pub const MIN_DEPTH: f64 = 1e-9;

/// Rigid transform taking model coordinates into the camera frame.
///
/// The rotation is kept as a unit quaternion and re-normalized after every
/// construction and composition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "PoseRecord", into = "PoseRecord")]
pub struct RigidPose {
    rotation: UnitQuaternion<f64>,
    translation: Vector3<f64>,
}

/// JSON form: `{"q": [w, x, y, z], "t": [x, y, z]}`.
#[derive(Serialize, Deserialize)]
struct PoseRecord {
    q: [f64; 4],
    t: [f64; 3],
}

impl From<PoseRecord> for RigidPose {
    fn from(r: PoseRecord) -> Self {
        let q = Quaternion::new(r.q[0], r.q[1], r.q[2], r.q[3]);
        RigidPose::new(UnitQuaternion::from_quaternion(q), Vector3::from(r.t))
    }
}

impl From<RigidPose> for PoseRecord {
    fn from(p: RigidPose) -> Self {
        let q = p.rotation.quaternion();
        PoseRecord {
            q: [q.w, q.i, q.j, q.k],
            t: p.translation.into(),
        }
    }
}

impl Default for RigidPose {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidPose {
    pub fn new(rotation: UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation: renormalize(rotation),
            translation,
        }
    }

    pub fn identity() -> Self {
        Self::new(UnitQuaternion::identity(), Vector3::zeros())
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self::new(UnitQuaternion::identity(), translation)
    }

    /// Builds a pose from an orthonormal rotation matrix. Small departures
    /// from orthonormality are absorbed by quaternion normalization.
    pub fn from_matrix(rotation: &Matrix3<f64>, translation: Vector3<f64>) -> Self {
        let rot = nalgebra::Rotation3::from_matrix_unchecked(*rotation);
        Self::new(UnitQuaternion::from_rotation_matrix(&rot), translation)
    }

    /// Scalar-first quaternion `[w, x, y, z]`.
    pub fn quaternion_wxyz(&self) -> [f64; 4] {
        let q = self.rotation.quaternion();
        [q.w, q.i, q.j, q.k]
    }

    pub fn rotation(&self) -> &UnitQuaternion<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        *self.rotation.to_rotation_matrix().matrix()
    }

    /// Maps a model point into the camera frame.
    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// `self ∘ other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &RigidPose) -> RigidPose {
        RigidPose::new(
            self.rotation * other.rotation,
            self.rotation * other.translation + self.translation,
        )
    }

    pub fn inverse(&self) -> RigidPose {
        let inv = self.rotation.inverse();
        RigidPose::new(inv, -(inv * self.translation))
    }

    /// Rotates about the model origin by `delta` expressed in the camera frame.
    pub fn rotated_in_camera(&self, delta: &UnitQuaternion<f64>) -> RigidPose {
        RigidPose::new(delta * self.rotation, self.translation)
    }
}

fn renormalize(q: UnitQuaternion<f64>) -> UnitQuaternion<f64> {
    UnitQuaternion::new_normalize(q.into_inner())
}

/// Pinhole camera without distortion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "IntrinsicsRecord")]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

#[derive(Deserialize)]
struct IntrinsicsRecord {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: u32,
    height: u32,
}

impl TryFrom<IntrinsicsRecord> for CameraIntrinsics {
    type Error = Error;

    fn try_from(r: IntrinsicsRecord) -> Result<Self> {
        CameraIntrinsics::new(r.fx, r.fy, r.cx, r.cy, r.width, r.height)
    }
}

impl Default for CameraIntrinsics {
    fn default() -> Self {
        Self::linemod()
    }
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self> {
        let valid = fx > 0.0
            && fy > 0.0
            && fx.is_finite()
            && fy.is_finite()
            && (0.0..width as f64).contains(&cx)
            && (0.0..height as f64).contains(&cy);
        if !valid {
            return Err(Error::InvalidParameter(format!(
                "intrinsics fx={fx} fy={fy} cx={cx} cy={cy} for {width}x{height}"
            )));
        }
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        })
    }

    /// The LineMOD Kinect calibration at 640×480.
    pub fn linemod() -> Self {
        Self {
            fx: 572.4,
            fy: 572.4,
            cx: 325.3,
            cy: 242.0,
            width: 640,
            height: 480,
        }
    }

    /// Projects a camera-frame point.
    pub fn project_camera(&self, pc: &Vector3<f64>) -> Result<Vector2<f64>> {
        if pc.z <= MIN_DEPTH {
            return Err(Error::NonPositiveDepth(pc.z));
        }
        Ok(Vector2::new(
            self.fx * pc.x / pc.z + self.cx,
            self.fy * pc.y / pc.z + self.cy,
        ))
    }

    /// Unit-length viewing ray through a pixel position.
    pub fn bearing(&self, px: &Vector2<f64>) -> Vector3<f64> {
        Vector3::new((px.x - self.cx) / self.fx, (px.y - self.cy) / self.fy, 1.0).normalize()
    }
}

/// Pinhole projection of a model point under `pose`.
pub fn project(point: &Vector3<f64>, pose: &RigidPose, k: &CameraIntrinsics) -> Result<Vector2<f64>> {
    k.project_camera(&pose.transform_point(point))
}

/// Geodesic angle between two rotations, in degrees within [0, 180].
pub fn rotation_angle_deg(a: &RigidPose, b: &RigidPose) -> f64 {
    let rel = a.rotation.inverse() * b.rotation;
    let q = rel.quaternion();
    // atan2 keeps precision for tiny angles where acos does not
    let angle = 2.0 * q.imag().norm().atan2(q.w.abs());
    angle.to_degrees().clamp(0.0, 180.0)
}

/// Noise scales for sampling a pose around a reference pose.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PoseDistortionParams {
    /// Standard deviation of the rotation angle, degrees.
    pub rot_sigma_deg: f64,
    /// Standard deviation of x/y translation noise, meters.
    pub trans_sigma_xy: f64,
    /// Standard deviation of z translation noise, meters.
    pub trans_sigma_z: f64,
}

impl PoseDistortionParams {
    pub fn new(rot_sigma_deg: f64, trans_sigma_xy: f64, trans_sigma_z: f64) -> Result<Self> {
        let p = Self {
            rot_sigma_deg,
            trans_sigma_xy,
            trans_sigma_z,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = [self.rot_sigma_deg, self.trans_sigma_xy, self.trans_sigma_z]
            .iter()
            .all(|s| s.is_finite() && *s >= 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "pose distortion sigmas must be finite and >= 0: {self:?}"
            )))
        }
    }
}

/// Samples a pose around `pose`.
///
/// The rotation is perturbed about the model origin by an axis drawn uniformly
/// on the sphere and an angle `|N(0, rot_sigma)|`. The translation receives
/// independent Gaussian noise with separate x/y and z scales.
pub fn sample_distorted_pose(pose: &RigidPose, params: &PoseDistortionParams, seed: u64) -> RigidPose {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = *pose;

    if params.rot_sigma_deg > 0.0 {
        let axis = random_unit_vector(&mut rng);
        let z: f64 = rng.sample(StandardNormal);
        let angle = (z * params.rot_sigma_deg).abs().to_radians();
        let delta = UnitQuaternion::from_axis_angle(&axis, angle);
        out = out.rotated_in_camera(&delta);
    }

    let mut jitter = |sigma: f64| -> f64 {
        if sigma > 0.0 {
            Normal::new(0.0, sigma).expect("sigma validated").sample(&mut rng)
        } else {
            0.0
        }
    };
    let dt = Vector3::new(
        jitter(params.trans_sigma_xy),
        jitter(params.trans_sigma_xy),
        jitter(params.trans_sigma_z),
    );
    RigidPose::new(out.rotation, out.translation + dt)
}

pub(crate) fn random_unit_vector<R: Rng>(rng: &mut R) -> Unit<Vector3<f64>> {
    loop {
        let v = Vector3::new(
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
        );
        if v.norm() > 1e-12 {
            return Unit::new_normalize(v);
        }
    }
}
