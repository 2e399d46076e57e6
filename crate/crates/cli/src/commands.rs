//! Dataset-producing commands: texture, fixture, render and corrupt.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::Serialize;
use uvpose::fixtures;
use uvpose::mesh::{diameter, load_mesh};
use uvpose::noise::corrupt;
use uvpose::raster::{render_multi, sample_viewpoints, MapManifest, ObjectInstance};
use uvpose::{CameraIntrinsics, CorrespondenceModel, CorruptionParams, Mesh, RigidPose, UvMode};

use crate::dataset::{
    frame_stem, object_dir_name, stream_seed, write_json, Dataset, DatasetManifest, ObjectEntry, Stream, DATASET_FILE,
};
use crate::error::{CliError, Result};

#[derive(Debug, Clone, Serialize)]
pub struct TextureSummary {
    pub vertices: usize,
    pub triangles: usize,
    pub populated_cells: usize,
    pub diameter: f64,
}

pub fn texture(mesh_path: &Path, mode: UvMode, out_dir: &Path) -> Result<TextureSummary> {
    let mesh = load_mesh(mesh_path)?;
    let d = diameter(&mesh)?;
    let model = CorrespondenceModel::new(mesh, mode)?;
    fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    model.write_dir(out_dir)?;
    Ok(TextureSummary {
        vertices: model.mesh().vertices().len(),
        triangles: model.mesh().triangles().len(),
        populated_cells: model.lookup().populated(),
        diameter: d,
    })
}

pub const FIXTURE_NAMES: [&str; 4] = ["unit-cube", "cube", "blob", "bracket"];

pub fn fixture_mesh(name: &str) -> Result<Mesh> {
    if name == "unit-cube" {
        return Ok(fixtures::unit_cube());
    }
    fixtures::standard_meshes()
        .into_iter()
        .find(|(n, _)| *n == name)
        .map(|(_, m)| m)
        .ok_or_else(|| CliError::Usage(format!("unknown fixture {name:?}; expected one of {FIXTURE_NAMES:?}")))
}

pub fn fixture(name: &str, out: &Path) -> Result<()> {
    let mesh = fixture_mesh(name)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    Ok(mesh.write_obj(out)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewGrid {
    pub azimuth: usize,
    pub elevation: usize,
    pub inplane: usize,
    pub radius: f64,
}

pub struct RenderOptions {
    pub models: Vec<PathBuf>,
    pub views: ViewGrid,
    pub intrinsics: CameraIntrinsics,
    /// Lateral spacing between objects when several are rendered together.
    pub spacing: f64,
    /// Object names flagged for ADD-S evaluation.
    pub symmetric: Vec<String>,
}

fn model_name(dir: &Path) -> String {
    let base = dir
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "object".into());
    // dataset object dirs are named <id>_<name>
    match base.split_once('_') {
        Some((id, rest)) if id.parse::<u32>().is_ok() && !rest.is_empty() => rest.to_string(),
        _ => base,
    }
}

/// Renders every model from a grid of viewpoints into a new dataset.
///
/// Objects get ids 1, 2, ... in argument order and sit on the world x axis,
/// `spacing` apart and centered on the viewpoint target.
pub fn render(opts: &RenderOptions, out: &Path) -> Result<DatasetManifest> {
    if opts.models.is_empty() || opts.models.len() > 255 {
        return Err(CliError::Usage("render needs between 1 and 255 models".into()));
    }
    let mut models = Vec::with_capacity(opts.models.len());
    let mut objects = Vec::with_capacity(opts.models.len());
    for (i, dir) in opts.models.iter().enumerate() {
        let model = CorrespondenceModel::read_dir(dir)?;
        let id = i as u32 + 1;
        let name = model_name(dir);
        objects.push(ObjectEntry {
            id,
            dir: object_dir_name(id, &name),
            diameter: diameter(model.mesh())?,
            symmetric: opts.symmetric.contains(&name),
            name,
        });
        models.push(model);
    }
    Dataset::create_dirs(out)?;
    for (obj, model) in objects.iter().zip(&models) {
        let dir = out.join(&obj.dir);
        fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        model.write_dir(&dir)?;
    }

    let v = opts.views;
    let views = sample_viewpoints(v.azimuth, v.elevation, v.inplane, v.radius, &Vector3::zeros())?;
    let n = models.len();
    let offsets: Vec<RigidPose> = (0..n)
        .map(|i| RigidPose::from_translation(Vector3::new((i as f64 - (n - 1) as f64 / 2.0) * opts.spacing, 0.0, 0.0)))
        .collect();
    let model_refs: Vec<&CorrespondenceModel> = models.iter().collect();
    let ids: Vec<u32> = objects.iter().map(|o| o.id).collect();
    let frames_dir = out.join(crate::dataset::FRAMES_DIR);
    let stems: Vec<String> = views
        .par_iter()
        .enumerate()
        .map(|(index, view)| -> Result<String> {
            let poses: Vec<RigidPose> = offsets.iter().map(|o| view.pose.compose(o)).collect();
            let map = render_multi(&model_refs, &ids, &poses, &opts.intrinsics)?;
            let stem = frame_stem(index);
            let files = map.save_pngs(&frames_dir, &stem)?;
            let manifest = MapManifest {
                frame: stem.clone(),
                files,
                intrinsics: opts.intrinsics,
                view: Some(*view),
                objects: objects
                    .iter()
                    .zip(&poses)
                    .map(|(o, p)| ObjectInstance {
                        id: o.id,
                        name: o.name.clone(),
                        pose: *p,
                    })
                    .collect(),
            };
            manifest.write(&frames_dir.join(format!("{stem}.json")))?;
            Ok(stem)
        })
        .collect::<Result<_>>()?;

    let manifest = DatasetManifest {
        intrinsics: opts.intrinsics,
        objects,
        frames: stems,
        corruption: None,
    };
    write_json(&out.join(DATASET_FILE), &manifest)?;
    Ok(manifest)
}

/// Writes a corrupted copy of a dataset. Frame `i` is corrupted with a seed
/// derived from `params.seed` and `i`.
pub fn corrupt_dataset(dataset: &Dataset, params: &CorruptionParams, out: &Path) -> Result<DatasetManifest> {
    params.validate()?;
    Dataset::create_dirs(out)?;
    for obj in &dataset.manifest.objects {
        let dir = out.join(&obj.dir);
        fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        dataset.models[&obj.id].write_dir(&dir)?;
    }
    let frames_dir = out.join(crate::dataset::FRAMES_DIR);
    (0..dataset.manifest.frames.len())
        .into_par_iter()
        .try_for_each(|index| -> Result<()> {
            let manifest = dataset.frame_manifest(index)?;
            let map = dataset.frame_map(&manifest)?;
            let frame_params = frame_corruption(params, index);
            let noisy = corrupt(&map, &frame_params)?;
            noisy.save_pngs(&frames_dir, &manifest.frame)?;
            manifest.write(&frames_dir.join(format!("{}.json", manifest.frame)))?;
            Ok(())
        })?;
    let manifest = DatasetManifest {
        corruption: Some(*params),
        ..dataset.manifest.clone()
    };
    write_json(&out.join(DATASET_FILE), &manifest)?;
    Ok(manifest)
}

/// Corruption parameters for one frame.
pub fn frame_corruption(params: &CorruptionParams, index: usize) -> CorruptionParams {
    CorruptionParams {
        seed: stream_seed(params.seed, Stream::Corruption, index as u64, 0),
        ..*params
    }
}
