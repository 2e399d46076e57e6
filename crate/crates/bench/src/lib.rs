//! Shared scene setup for the benchmarks in `benches/`.

use std::collections::BTreeMap;

use nalgebra::{UnitQuaternion, Vector3};
use uvpose::mesh::texture_spherical;
use uvpose::raster::render;
use uvpose::{decode, fixtures, CameraIntrinsics, Correspondence2D3D, CorrespondenceMap, CorrespondenceModel, RigidPose};

pub struct Scene {
    pub model: CorrespondenceModel,
    pub pose: RigidPose,
    pub k: CameraIntrinsics,
    pub map: CorrespondenceMap,
    pub correspondences: Vec<Correspondence2D3D>,
}

/// The standard blob at 0.7 m, rendered and decoded once.
pub fn blob_scene() -> Scene {
    let k = CameraIntrinsics::linemod();
    let model = texture_spherical(fixtures::icosphere_blob(0.08, 5)).expect("blob textures");
    let pose = RigidPose::new(UnitQuaternion::from_euler_angles(0.4, -0.2, 0.9), Vector3::new(0.0, 0.0, 0.7));
    let map = render(&model, 1, &pose, &k).expect("blob renders");
    let correspondences = decode(&map, &BTreeMap::from([(1, model.lookup())]))
        .expect("map decodes")
        .remove(0)
        .items;
    Scene {
        model,
        pose,
        k,
        map,
        correspondences,
    }
}
