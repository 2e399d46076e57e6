use std::collections::BTreeMap;

use nalgebra::{UnitQuaternion, Vector3};
use uvpose::geometry::rotation_angle_deg;
use uvpose::mesh::{diameter, texture_cylindrical, texture_spherical};
use uvpose::metrics::{add, pose_correct};
use uvpose::noise::corrupt;
use uvpose::posesolve::ransac_pnp;
use uvpose::raster::{render, render_multi};
use uvpose::refine::refine_pose;
use uvpose::{decode, fixtures, CameraIntrinsics, CorruptionParams, RansacConfig, RigidPose};

fn pose(z: f64) -> RigidPose {
    RigidPose::new(UnitQuaternion::from_euler_angles(0.5, -0.3, 1.1), Vector3::new(0.01, -0.02, z))
}

#[test]
fn blob_survives_thirty_percent_outliers() {
    let k = CameraIntrinsics::linemod();
    let mesh = fixtures::icosphere_blob(0.08, 5);
    let d = diameter(&mesh).unwrap();
    let model = texture_spherical(mesh).unwrap();
    let gt = pose(0.7);
    let clean = render(&model, 1, &gt, &k).unwrap();
    let map = corrupt(&clean, &CorruptionParams::outliers(0.3, 11)).unwrap();
    let sets = decode(&map, &BTreeMap::from([(1, model.lookup())])).unwrap();
    let res = ransac_pnp(&sets[0].items, &k, &RansacConfig::default()).unwrap();
    assert!(pose_correct(&add(model.mesh(), &gt, &res.pose).unwrap(), d, 0.1));
    assert!(rotation_angle_deg(&res.pose, &gt) < 2.0);
    assert_eq!(res.confidence, res.inlier_indices.len() as f64 / sets[0].items.len() as f64);

    let refined = refine_pose(&map, &model, 1, &res.pose, &k, 2, &RansacConfig::default()).unwrap();
    assert!(pose_correct(&add(model.mesh(), &gt, &refined).unwrap(), d, 0.1));
}

#[test]
fn two_objects_decode_and_solve_independently() {
    let k = CameraIntrinsics::linemod();
    let blob = texture_spherical(fixtures::icosphere_blob(0.06, 4)).unwrap();
    let cube = texture_cylindrical(fixtures::voxel_cube(0.08, 24)).unwrap();
    let pa = RigidPose::new(*pose(0.8).rotation(), Vector3::new(-0.1, 0.0, 0.8));
    let pb = RigidPose::new(*pose(0.8).rotation(), Vector3::new(0.1, 0.0, 0.8));
    let map = render_multi(&[&blob, &cube], &[1, 2], &[pa, pb], &k).unwrap();
    let lookups = BTreeMap::from([(1, blob.lookup()), (2, cube.lookup())]);
    let sets = decode(&map, &lookups).unwrap();
    assert_eq!(sets.iter().map(|s| s.object_id).collect::<Vec<_>>(), vec![1, 2]);
    for (set, (model, gt)) in sets.iter().zip([(&blob, pa), (&cube, pb)]) {
        let res = ransac_pnp(&set.items, &k, &RansacConfig::default()).unwrap();
        let d = diameter(model.mesh()).unwrap();
        assert!(pose_correct(&add(model.mesh(), &gt, &res.pose).unwrap(), d, 0.1), "object {}", set.object_id);
    }
}
