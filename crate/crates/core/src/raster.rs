//! Z-buffered software rendering of correspondence models into ID / U / V /
//! depth maps, plus the synthetic viewpoint sampler.

use std::fs;
use std::path::Path;

use image::{ImageBuffer, Luma};
use nalgebra::{Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, RigidPose};
use crate::mesh::{quantize, unwrap_u, wrap_u, CorrespondenceModel};

/// Camera-space near plane used for clipping, meters.
pub const NEAR_PLANE: f64 = 1e-3;

/// Per-pixel ID mask, U/V class images and depth.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrespondenceMap {
    width: u32,
    height: u32,
    pub id: Vec<u8>,
    pub u: Vec<u8>,
    pub v: Vec<u8>,
    /// Camera-frame z in meters, 0 on background.
    pub depth: Vec<f64>,
}

impl CorrespondenceMap {
    pub fn empty(width: u32, height: u32) -> Self {
        let n = width as usize * height as usize;
        Self {
            width,
            height,
            id: vec![0; n],
            u: vec![0; n],
            v: vec![0; n],
            depth: vec![0.0; n],
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn len(&self) -> usize {
        self.id.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id.is_empty()
    }

    pub fn index(&self, col: u32, row: u32) -> usize {
        row as usize * self.width as usize + col as usize
    }

    /// Pixel center of a flat index.
    pub fn pixel_center(&self, idx: usize) -> Vector2<f64> {
        let w = self.width as usize;
        Vector2::new((idx % w) as f64 + 0.5, (idx / w) as f64 + 0.5)
    }

    pub fn clear_pixel(&mut self, idx: usize) {
        self.id[idx] = 0;
        self.u[idx] = 0;
        self.v[idx] = 0;
        self.depth[idx] = 0.0;
    }

    pub fn foreground_count(&self) -> usize {
        self.id.iter().filter(|&&i| i != 0).count()
    }

    pub fn count_of(&self, object_id: u8) -> usize {
        self.id.iter().filter(|&&i| i == object_id).count()
    }

    /// Tight pixel box `[x0, y0, x1, y1)` around the pixels of `object_id`.
    pub fn bbox_of(&self, object_id: u8) -> Option<[u32; 4]> {
        let mut b: Option<[u32; 4]> = None;
        for (i, _) in self.id.iter().enumerate().filter(|(_, &id)| id == object_id) {
            let (c, r) = ((i % self.width as usize) as u32, (i / self.width as usize) as u32);
            b = Some(match b {
                None => [c, r, c + 1, r + 1],
                Some([x0, y0, x1, y1]) => [x0.min(c), y0.min(r), x1.max(c + 1), y1.max(r + 1)],
            });
        }
        b
    }

    /// Writes `<stem>_id.png`, `<stem>_u.png`, `<stem>_v.png` (8-bit) and
    /// `<stem>_depth.png` (16-bit millimeters).
    pub fn save_pngs(&self, dir: &Path, stem: &str) -> Result<MapFiles> {
        let files = MapFiles::for_stem(stem);
        let (w, h) = (self.width, self.height);
        for (name, data) in [(&files.id, &self.id), (&files.u, &self.u), (&files.v, &self.v)] {
            let path = dir.join(name);
            let img: ImageBuffer<Luma<u8>, Vec<u8>> =
                ImageBuffer::from_raw(w, h, data.clone()).expect("buffer size matches");
            img.save(&path).map_err(|source| Error::Image { path, source })?;
        }
        let mm: Vec<u16> = self
            .depth
            .iter()
            .map(|d| (d * 1000.0 + 0.5).floor().clamp(0.0, u16::MAX as f64) as u16)
            .collect();
        let path = dir.join(&files.depth);
        let img: ImageBuffer<Luma<u16>, Vec<u16>> =
            ImageBuffer::from_raw(w, h, mm).expect("buffer size matches");
        img.save(&path).map_err(|source| Error::Image { path, source })?;
        Ok(files)
    }

    pub fn load_pngs(dir: &Path, files: &MapFiles) -> Result<Self> {
        let gray8 = |name: &str| -> Result<(u32, u32, Vec<u8>)> {
            let path = dir.join(name);
            let img = image::open(&path).map_err(|source| Error::Image {
                path: path.clone(),
                source,
            })?;
            let g = img.into_luma8();
            Ok((g.width(), g.height(), g.into_raw()))
        };
        let (w, h, id) = gray8(&files.id)?;
        let (_, _, u) = gray8(&files.u)?;
        let (_, _, v) = gray8(&files.v)?;
        let path = dir.join(&files.depth);
        let depth_img = image::open(&path)
            .map_err(|source| Error::Image {
                path: path.clone(),
                source,
            })?
            .into_luma16();
        let n = w as usize * h as usize;
        if u.len() != n || v.len() != n || depth_img.as_raw().len() != n {
            return Err(Error::ShapeMismatch(format!(
                "map images in {} differ in size",
                dir.display()
            )));
        }
        let depth = depth_img.as_raw().iter().map(|&mm| mm as f64 / 1000.0).collect();
        Ok(Self {
            width: w,
            height: h,
            id,
            u,
            v,
            depth,
        })
    }
}

/// File names of a serialized map, relative to its directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MapFiles {
    pub id: String,
    pub u: String,
    pub v: String,
    pub depth: String,
}

impl MapFiles {
    pub fn for_stem(stem: &str) -> Self {
        Self {
            id: format!("{stem}_id.png"),
            u: format!("{stem}_u.png"),
            v: format!("{stem}_v.png"),
            depth: format!("{stem}_depth.png"),
        }
    }
}

/// Ground truth for one object in a rendered frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectInstance {
    pub id: u32,
    pub name: String,
    pub pose: RigidPose,
}

/// JSON manifest accompanying a serialized map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapManifest {
    pub frame: String,
    pub files: MapFiles,
    pub intrinsics: CameraIntrinsics,
    pub view: Option<ViewSample>,
    pub objects: Vec<ObjectInstance>,
}

impl MapManifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)? + "\n";
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// A synthetic camera placement on the upper half-sphere.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViewSample {
    pub pose: RigidPose,
    pub azimuth: f64,
    pub elevation: f64,
    pub inplane: f64,
}

fn linspace(n: usize, lo: f64, hi: f64) -> Vec<f64> {
    if n <= 1 {
        return vec![if lo <= 0.0 && hi >= 0.0 { 0.0 } else { lo }];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Regular grid of views looking at `target` from distance `radius`.
///
/// Azimuth covers `[0, 360)` in `n_azimuth` steps, elevation `[0, 90]` and
/// in-plane rotation `[-30, 30]` inclusive (a single step sits at 0). The
/// camera's x axis follows the azimuth tangent, so the frame stays defined
/// at the pole.
pub fn sample_viewpoints(
    n_azimuth: usize,
    n_elevation: usize,
    n_inplane: usize,
    radius: f64,
    target: &Vector3<f64>,
) -> Result<Vec<ViewSample>> {
    if n_azimuth == 0 || n_elevation == 0 || n_inplane == 0 || !(radius > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "views need counts >= 1 and radius > 0 (got {n_azimuth} {n_elevation} {n_inplane} {radius})"
        )));
    }
    let azimuths: Vec<f64> = (0..n_azimuth).map(|i| 360.0 * i as f64 / n_azimuth as f64).collect();
    let elevations = linspace(n_elevation, 0.0, 90.0);
    let inplanes = linspace(n_inplane, -30.0, 30.0);

    let mut out = Vec::with_capacity(n_azimuth * n_elevation * n_inplane);
    for &az in &azimuths {
        for &el in &elevations {
            for &ip in &inplanes {
                out.push(ViewSample {
                    pose: look_at_pose(az, el, ip, radius, target),
                    azimuth: az,
                    elevation: el,
                    inplane: ip,
                });
            }
        }
    }
    Ok(out)
}

fn look_at_pose(az_deg: f64, el_deg: f64, ip_deg: f64, radius: f64, target: &Vector3<f64>) -> RigidPose {
    let (az, el, ip) = (az_deg.to_radians(), el_deg.to_radians(), ip_deg.to_radians());
    let dir = Vector3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin());
    let forward = -dir;
    let right = Vector3::new(-az.sin(), az.cos(), 0.0);
    let down = forward.cross(&right);
    let base = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
    let (s, c) = ip.sin_cos();
    let roll = Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0);
    let rot = roll * base;
    let eye = target + dir * radius;
    let pose = RigidPose::from_matrix(&rot, Vector3::zeros());
    let t = -(pose.rotation() * eye);
    RigidPose::new(*pose.rotation(), t)
}

#[derive(Clone, Copy)]
struct ClipVertex {
    p: Vector3<f64>,
    u: f64,
    v: f64,
}

impl ClipVertex {
    fn lerp(&self, o: &ClipVertex, t: f64) -> ClipVertex {
        ClipVertex {
            p: self.p + (o.p - self.p) * t,
            u: self.u + (o.u - self.u) * t,
            v: self.v + (o.v - self.v) * t,
        }
    }
}

/// Clips a convex polygon to `z >= NEAR_PLANE`.
fn clip_near(poly: &[ClipVertex]) -> Vec<ClipVertex> {
    let mut out = Vec::with_capacity(poly.len() + 1);
    for i in 0..poly.len() {
        let a = &poly[i];
        let b = &poly[(i + 1) % poly.len()];
        let a_in = a.p.z >= NEAR_PLANE;
        let b_in = b.p.z >= NEAR_PLANE;
        if a_in {
            out.push(*a);
        }
        if a_in != b_in {
            let t = (NEAR_PLANE - a.p.z) / (b.p.z - a.p.z);
            out.push(a.lerp(b, t));
        }
    }
    out
}

fn edge(a: &Vector2<f64>, b: &Vector2<f64>, p: &Vector2<f64>) -> f64 {
    (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x)
}

/// Top-left fill rule for the edge `a → b` of a positively oriented triangle.
fn is_top_left(a: &Vector2<f64>, b: &Vector2<f64>) -> bool {
    let d = b - a;
    d.y < 0.0 || (d.y == 0.0 && d.x > 0.0)
}

fn covers(w: f64, top_left: bool) -> bool {
    w > 0.0 || (w == 0.0 && top_left)
}

struct Target<'a> {
    map: &'a mut CorrespondenceMap,
    k: &'a CameraIntrinsics,
}

impl Target<'_> {
    fn raster_triangle(&mut self, tri: [ClipVertex; 3], object_id: u8) {
        let k = self.k;
        let mut s = tri.map(|c| Vector2::new(k.fx * c.p.x / c.p.z + k.cx, k.fy * c.p.y / c.p.z + k.cy));
        let mut t = tri;
        let mut area = edge(&s[0], &s[1], &s[2]);
        if area == 0.0 || !area.is_finite() {
            return;
        }
        if area < 0.0 {
            s.swap(1, 2);
            t.swap(1, 2);
            area = -area;
        }
        let (w, h) = (self.map.width as f64, self.map.height as f64);
        let min_x = s.iter().map(|p| p.x).fold(f64::INFINITY, f64::min);
        let max_x = s.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max);
        let min_y = s.iter().map(|p| p.y).fold(f64::INFINITY, f64::min);
        let max_y = s.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max);
        let c0 = (min_x - 0.5).ceil().max(0.0);
        let c1 = (max_x - 0.5).floor().min(w - 1.0);
        let r0 = (min_y - 0.5).ceil().max(0.0);
        let r1 = (max_y - 0.5).floor().min(h - 1.0);
        if c0 > c1 || r0 > r1 {
            return;
        }
        let tl = [is_top_left(&s[1], &s[2]), is_top_left(&s[2], &s[0]), is_top_left(&s[0], &s[1])];
        let inv_z = t.map(|c| 1.0 / c.p.z);

        for row in r0 as u32..=r1 as u32 {
            for col in c0 as u32..=c1 as u32 {
                let p = Vector2::new(col as f64 + 0.5, row as f64 + 0.5);
                let w0 = edge(&s[1], &s[2], &p);
                let w1 = edge(&s[2], &s[0], &p);
                let w2 = edge(&s[0], &s[1], &p);
                if !(covers(w0, tl[0]) && covers(w1, tl[1]) && covers(w2, tl[2])) {
                    continue;
                }
                // perspective-correct weights: screen barycentrics divided by depth
                let a = [w0 / area * inv_z[0], w1 / area * inv_z[1], w2 / area * inv_z[2]];
                let denom = a[0] + a[1] + a[2];
                let depth = 1.0 / denom;
                let idx = self.map.index(col, row);
                let cur = self.map.depth[idx];
                if cur != 0.0 && depth >= cur {
                    continue;
                }
                let u = (a[0] * t[0].u + a[1] * t[1].u + a[2] * t[2].u) / denom;
                let v = (a[0] * t[0].v + a[1] * t[1].v + a[2] * t[2].v) / denom;
                self.map.id[idx] = object_id;
                self.map.u[idx] = quantize(wrap_u(u));
                self.map.v[idx] = quantize(v);
                self.map.depth[idx] = depth;
            }
        }
    }

    fn draw(&mut self, model: &CorrespondenceModel, object_id: u8, pose: &RigidPose) {
        let cam: Vec<Vector3<f64>> = model
            .mesh()
            .vertices()
            .iter()
            .map(|v| pose.transform_point(v))
            .collect();
        let uv = model.uv();
        for tri in model.mesh().triangles() {
            let us = unwrap_u(tri.map(|i| uv[i as usize][0]));
            let verts: [ClipVertex; 3] = std::array::from_fn(|j| ClipVertex {
                p: cam[tri[j] as usize],
                u: us[j],
                v: uv[tri[j] as usize][1],
            });
            if verts.iter().all(|c| c.p.z >= NEAR_PLANE) {
                self.raster_triangle(verts, object_id);
                continue;
            }
            let poly = clip_near(&verts);
            for i in 1..poly.len().saturating_sub(1) {
                self.raster_triangle([poly[0], poly[i], poly[i + 1]], object_id);
            }
        }
    }
}

fn check_id(object_id: u32) -> Result<u8> {
    match u8::try_from(object_id) {
        Ok(id) if id >= 1 => Ok(id),
        _ => Err(Error::InvalidParameter(format!(
            "object id must be in 1..=255, got {object_id}"
        ))),
    }
}

/// Renders one object into a fresh map.
pub fn render(
    model: &CorrespondenceModel,
    object_id: u32,
    pose: &RigidPose,
    k: &CameraIntrinsics,
) -> Result<CorrespondenceMap> {
    render_multi(&[model], &[object_id], &[*pose], k)
}

/// Renders several objects with one shared z-buffer.
///
/// Objects are drawn in ascending id order and triangles in index order; a
/// pixel is only overwritten by a strictly nearer surface, so depth ties go
/// to the lower id, then the lower triangle index.
pub fn render_multi(
    models: &[&CorrespondenceModel],
    ids: &[u32],
    poses: &[RigidPose],
    k: &CameraIntrinsics,
) -> Result<CorrespondenceMap> {
    if models.len() != ids.len() || ids.len() != poses.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} models, {} ids, {} poses",
            models.len(),
            ids.len(),
            poses.len()
        )));
    }
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.sort_by_key(|&i| ids[i]);
    for w in order.windows(2) {
        if ids[w[0]] == ids[w[1]] {
            return Err(Error::DuplicateObjectId(ids[w[0]]));
        }
    }
    let mut map = CorrespondenceMap::empty(k.width, k.height);
    let mut target = Target { map: &mut map, k };
    for i in order {
        let id = check_id(ids[i])?;
        target.draw(models[i], id, &poses[i]);
    }
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::geometry::{project, sample_distorted_pose, PoseDistortionParams};
    use crate::mesh::{texture_spherical, Mesh, UvMode};
    use nalgebra::UnitQuaternion;

    fn blob_model() -> CorrespondenceModel {
        texture_spherical(fixtures::icosphere_blob(0.08, 3)).unwrap()
    }

    fn front_pose(z: f64) -> RigidPose {
        RigidPose::new(UnitQuaternion::from_euler_angles(0.4, -0.3, 0.2), Vector3::new(0.01, -0.02, z))
    }

    #[test]
    fn behind_camera_is_background() {
        let k = CameraIntrinsics::linemod();
        let pose = RigidPose::from_translation(Vector3::new(0.0, 0.0, -1.0));
        let map = render(&blob_model(), 1, &pose, &k).unwrap();
        assert_eq!(map.foreground_count(), 0);
        assert!(map.depth.iter().all(|&d| d == 0.0));
    }

    #[test]
    fn object_straddling_camera_plane_is_clipped() {
        let k = CameraIntrinsics::linemod();
        let pose = RigidPose::from_translation(Vector3::new(0.0, 0.0, 0.02));
        let map = render(&blob_model(), 1, &pose, &k).unwrap();
        for (i, &d) in map.depth.iter().enumerate() {
            assert_eq!(d > 0.0, map.id[i] != 0);
            if d > 0.0 {
                assert!(d >= NEAR_PLANE * (1.0 - 1e-9));
            }
        }
    }

    fn single_triangle(a: [f64; 3], b: [f64; 3], c: [f64; 3]) -> CorrespondenceModel {
        let mesh = Mesh::new(vec![a.into(), b.into(), c.into()], vec![[0, 1, 2]]).unwrap();
        CorrespondenceModel::new(mesh, UvMode::Spherical).unwrap()
    }

    /// Half-space oracle: count pixel centers strictly inside the projected
    /// triangle by sign agreement of cross products.
    fn oracle_count(s: [Vector2<f64>; 3], w: u32, h: u32) -> usize {
        let cross = |a: Vector2<f64>, b: Vector2<f64>, p: Vector2<f64>| {
            (b - a).perp(&(p - a))
        };
        let mut n = 0;
        for r in 0..h {
            for c in 0..w {
                let p = Vector2::new(c as f64 + 0.5, r as f64 + 0.5);
                let d = [cross(s[0], s[1], p), cross(s[1], s[2], p), cross(s[2], s[0], p)];
                if d.iter().all(|x| *x > 0.0) || d.iter().all(|x| *x < 0.0) {
                    n += 1;
                }
            }
        }
        n
    }

    #[test]
    fn triangle_coverage_matches_half_space_oracle() {
        let k = CameraIntrinsics::new(300.0, 300.0, 160.3, 120.7, 320, 240).unwrap();
        let tris = [
            ([-0.1, -0.07, 1.0], [0.12, -0.05, 1.0], [0.01, 0.11, 1.0]),
            ([-0.2, 0.05, 0.8], [0.1, 0.1, 1.3], [0.05, -0.15, 1.1]),
            // thin sliver
            ([-0.3, 0.0, 1.0], [0.3, 0.013, 1.0], [0.29, 0.02, 1.0]),
        ];
        for (a, b, c) in tris {
            let model = single_triangle(a, b, c);
            let map = render(&model, 1, &RigidPose::identity(), &k).unwrap();
            let s = [a, b, c].map(|p| project(&p.into(), &RigidPose::identity(), &k).unwrap());
            assert_eq!(map.foreground_count(), oracle_count(s, k.width, k.height));
            // back face draws the same pixels
            let flipped = single_triangle(a, c, b);
            let map2 = render(&flipped, 1, &RigidPose::identity(), &k).unwrap();
            assert_eq!(map2.id, map.id);
        }
    }

    #[test]
    fn shared_edges_follow_top_left_rule() {
        // With fx = 1 the square [10.5, 20.5]^2 lands exactly on pixel centers.
        let k = CameraIntrinsics::new(1.0, 1.0, 0.0, 0.0, 32, 32).unwrap();
        let v = [[10.5, 10.5, 1.0], [20.5, 10.5, 1.0], [20.5, 20.5, 1.0], [10.5, 20.5, 1.0]]
            .map(Vector3::from)
            .to_vec();
        let mesh = Mesh::new(v, vec![[0, 1, 2], [0, 2, 3]]).unwrap();
        let model = CorrespondenceModel::new(mesh, UvMode::Spherical).unwrap();
        let map = render(&model, 1, &RigidPose::identity(), &k).unwrap();
        assert_eq!(map.foreground_count(), 100);
        assert_eq!(map.bbox_of(1), Some([10, 10, 20, 20]));
    }

    #[test]
    fn depth_matches_ray_plane_intersection() {
        let k = CameraIntrinsics::linemod();
        let (a, b, c) = ([-0.1, -0.08, 0.7], [0.12, -0.05, 0.95], [0.0, 0.1, 0.8]);
        let model = single_triangle(a, b, c);
        let map = render(&model, 1, &RigidPose::identity(), &k).unwrap();
        let (a, b, c): (Vector3<f64>, Vector3<f64>, Vector3<f64>) = (a.into(), b.into(), c.into());
        let n = (b - a).cross(&(c - a));
        let mut checked = 0;
        for idx in 0..map.len() {
            if map.id[idx] == 0 {
                continue;
            }
            let px = map.pixel_center(idx);
            let ray = Vector3::new((px.x - k.cx) / k.fx, (px.y - k.cy) / k.fy, 1.0);
            let s = n.dot(&a) / n.dot(&ray);
            let z = s * ray.z;
            assert!((map.depth[idx] - z).abs() <= 1e-4 * z, "{} vs {z}", map.depth[idx]);
            checked += 1;
        }
        assert!(checked > 1000);
    }

    #[test]
    fn depth_positive_exactly_on_foreground() {
        let k = CameraIntrinsics::linemod();
        let map = render(&blob_model(), 3, &front_pose(0.6), &k).unwrap();
        assert!(map.foreground_count() > 1000);
        for i in 0..map.len() {
            assert_eq!(map.depth[i] > 0.0, map.id[i] == 3);
            if map.id[i] == 0 {
                assert_eq!((map.u[i], map.v[i]), (0, 0));
            }
        }
    }

    #[test]
    fn rendering_is_deterministic() {
        let k = CameraIntrinsics::linemod();
        let model = blob_model();
        let a = render(&model, 1, &front_pose(0.5), &k).unwrap();
        let b = render(&model, 1, &front_pose(0.5), &k).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn render_multi_single_equals_render() {
        let k = CameraIntrinsics::linemod();
        let model = blob_model();
        let a = render(&model, 2, &front_pose(0.5), &k).unwrap();
        let b = render_multi(&[&model], &[2], &[front_pose(0.5)], &k).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn nearer_object_wins_overlap() {
        let k = CameraIntrinsics::linemod();
        let far = blob_model();
        let near = texture_spherical(fixtures::voxel_cube(0.06, 6)).unwrap();
        let pa = RigidPose::from_translation(Vector3::new(0.0, 0.0, 0.8));
        let pb = RigidPose::from_translation(Vector3::new(0.02, 0.0, 0.5));
        // near object listed first with the larger id; order must not matter
        let map = render_multi(&[&near, &far], &[7, 1], &[pb, pa], &k).unwrap();
        let solo_near = render(&near, 7, &pb, &k).unwrap();
        for i in 0..map.len() {
            if solo_near.id[i] != 0 {
                assert_eq!(map.id[i], 7);
            }
        }
        assert!(map.count_of(1) > 0);
    }

    #[test]
    fn disjoint_objects_keep_their_footprints() {
        let k = CameraIntrinsics::linemod();
        let a = blob_model();
        let b = texture_spherical(fixtures::l_bracket(0.1, 0.05, 0.05, 0.01)).unwrap();
        let pa = RigidPose::from_translation(Vector3::new(-0.15, 0.0, 0.8));
        let pb = RigidPose::from_translation(Vector3::new(0.15, 0.0, 0.8));
        let both = render_multi(&[&a, &b], &[1, 2], &[pa, pb], &k).unwrap();
        let ra = render(&a, 1, &pa, &k).unwrap();
        let rb = render(&b, 2, &pb, &k).unwrap();
        assert_eq!(both.count_of(1), ra.count_of(1));
        assert_eq!(both.count_of(2), rb.count_of(2));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let k = CameraIntrinsics::linemod();
        let m = blob_model();
        let p = front_pose(0.5);
        let r = render_multi(&[&m, &m], &[4, 4], &[p, p], &k);
        assert!(matches!(r, Err(Error::DuplicateObjectId(4))));
        assert!(render(&m, 0, &p, &k).is_err());
    }

    fn convex_hull(mut pts: Vec<Vector2<f64>>) -> Vec<Vector2<f64>> {
        pts.sort_by(|a, b| a.x.partial_cmp(&b.x).unwrap().then(a.y.partial_cmp(&b.y).unwrap()));
        let cross = |o: &Vector2<f64>, a: &Vector2<f64>, b: &Vector2<f64>| (a - o).perp(&(b - o));
        let mut lower: Vec<Vector2<f64>> = Vec::new();
        for p in &pts {
            while lower.len() >= 2 && cross(&lower[lower.len() - 2], &lower[lower.len() - 1], p) <= 0.0 {
                lower.pop();
            }
            lower.push(*p);
        }
        let mut upper: Vec<Vector2<f64>> = Vec::new();
        for p in pts.iter().rev() {
            while upper.len() >= 2 && cross(&upper[upper.len() - 2], &upper[upper.len() - 1], p) <= 0.0 {
                upper.pop();
            }
            upper.push(*p);
        }
        lower.pop();
        upper.pop();
        lower.extend(upper);
        lower
    }

    fn distance_outside_hull(h: &[Vector2<f64>], p: &Vector2<f64>) -> f64 {
        // counter-clockwise hull: outside distance is max signed distance to edges
        (0..h.len())
            .map(|i| {
                let a = h[i];
                let b = h[(i + 1) % h.len()];
                let e = b - a;
                -(e.perp(&(p - a))) / e.norm()
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    #[test]
    fn foreground_stays_inside_projected_hull() {
        let k = CameraIntrinsics::linemod();
        for (name, mesh) in fixtures::standard_meshes() {
            let model = texture_spherical(mesh).unwrap();
            let params = PoseDistortionParams::new(60.0, 0.05, 0.05).unwrap();
            for seed in 0..8 {
                let pose = sample_distorted_pose(&front_pose(0.6), &params, seed);
                let map = render(&model, 1, &pose, &k).unwrap();
                let pts: Vec<Vector2<f64>> = model
                    .mesh()
                    .vertices()
                    .iter()
                    .map(|v| project(v, &pose, &k).unwrap())
                    .collect();
                let hull = convex_hull(pts);
                for idx in (0..map.len()).filter(|&i| map.id[i] != 0) {
                    let d = distance_outside_hull(&hull, &map.pixel_center(idx));
                    assert!(d <= 1.0, "{name} seed {seed}: pixel {idx} is {d} px outside");
                }
            }
        }
    }

    #[test]
    fn viewpoint_grid() {
        let target = Vector3::new(0.01, -0.02, 0.03);
        let one = sample_viewpoints(1, 1, 1, 0.7, &target).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!((one[0].azimuth, one[0].elevation, one[0].inplane), (0.0, 0.0, 0.0));
        let c = one[0].pose.transform_point(&target);
        assert!((c - Vector3::new(0.0, 0.0, 0.7)).norm() < 1e-12);

        let views = sample_viewpoints(8, 3, 3, 0.7, &target).unwrap();
        assert_eq!(views.len(), 72);
        for v in &views {
            let c = v.pose.transform_point(&target);
            assert!((c.z - 0.7).abs() < 1e-9);
            assert!(c.xy().norm() < 1e-9);
            assert!((0.0..=90.0).contains(&v.elevation));
            assert!((-30.0..=30.0).contains(&v.inplane));
        }
        assert_eq!(views.last().unwrap().elevation, 90.0);
        assert!(sample_viewpoints(0, 1, 1, 1.0, &target).is_err());
        assert!(sample_viewpoints(1, 1, 1, 0.0, &target).is_err());
    }

    #[test]
    fn upright_view_keeps_model_up_in_image() {
        // azimuth 0, elevation 0: model +z should point up (negative image y)
        let v = sample_viewpoints(1, 1, 1, 1.0, &Vector3::zeros()).unwrap()[0];
        let top = v.pose.transform_point(&Vector3::new(0.0, 0.0, 0.1));
        assert!(top.y < 0.0);
    }

    #[test]
    fn png_round_trip() {
        let k = CameraIntrinsics::linemod();
        let map = render(&blob_model(), 1, &front_pose(0.6), &k).unwrap();
        let d = tempfile::tempdir().unwrap();
        let files = map.save_pngs(d.path(), "f0").unwrap();
        assert_eq!(files.depth, "f0_depth.png");
        let back = CorrespondenceMap::load_pngs(d.path(), &files).unwrap();
        assert_eq!(back.id, map.id);
        assert_eq!(back.u, map.u);
        assert_eq!(back.v, map.v);
        for (a, b) in back.depth.iter().zip(&map.depth) {
            assert!((a - b).abs() <= 0.0005 + 1e-12);
            assert_eq!(*a == 0.0, *b == 0.0);
        }
    }
}
