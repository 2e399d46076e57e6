//! On-disk dataset layout.
//!
//! ```text
//! <root>/dataset.json
//! <root>/objects/<id>_<name>/{mesh.obj, uv.json, lookup.clut}
//! <root>/frames/<NNNNNN>.json
//! <root>/frames/<NNNNNN>_{id,u,v,depth}.png
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use uvpose::raster::MapManifest;
use uvpose::{CameraIntrinsics, ColorLookup, CorrespondenceMap, CorrespondenceModel, CorruptionParams};

use crate::error::{CliError, Result};

pub const DATASET_FILE: &str = "dataset.json";
pub const OBJECTS_DIR: &str = "objects";
pub const FRAMES_DIR: &str = "frames";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectEntry {
    pub id: u32,
    pub name: String,
    /// Model directory relative to the dataset root.
    pub dir: String,
    /// Maximum vertex distance, meters.
    pub diameter: f64,
    #[serde(default)]
    pub symmetric: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub intrinsics: CameraIntrinsics,
    pub objects: Vec<ObjectEntry>,
    /// Frame stems in order; frame index is the position in this list.
    pub frames: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corruption: Option<CorruptionParams>,
}

pub struct Dataset {
    pub root: PathBuf,
    pub manifest: DatasetManifest,
    pub models: BTreeMap<u32, CorrespondenceModel>,
}

impl Dataset {
    pub fn open(root: &Path) -> Result<Self> {
        let manifest: DatasetManifest = read_json(&root.join(DATASET_FILE))?;
        let mut models = BTreeMap::new();
        for obj in &manifest.objects {
            let model = CorrespondenceModel::read_dir(&root.join(&obj.dir))?;
            models.insert(obj.id, model);
        }
        Ok(Self {
            root: root.to_path_buf(),
            manifest,
            models,
        })
    }

    pub fn frames_dir(&self) -> PathBuf {
        self.root.join(FRAMES_DIR)
    }

    pub fn object(&self, id: u32) -> Option<&ObjectEntry> {
        self.manifest.objects.iter().find(|o| o.id == id)
    }

    pub fn lookups(&self) -> BTreeMap<u32, &ColorLookup> {
        self.models.iter().map(|(&id, m)| (id, m.lookup())).collect()
    }

    pub fn frame_manifest(&self, index: usize) -> Result<MapManifest> {
        let stem = &self.manifest.frames[index];
        Ok(MapManifest::read(&self.frames_dir().join(format!("{stem}.json")))?)
    }

    pub fn frame_map(&self, manifest: &MapManifest) -> Result<CorrespondenceMap> {
        Ok(CorrespondenceMap::load_pngs(&self.frames_dir(), &manifest.files)?)
    }

    /// Creates `<root>/objects` and `<root>/frames`.
    pub fn create_dirs(root: &Path) -> Result<()> {
        for d in [root.join(OBJECTS_DIR), root.join(FRAMES_DIR)] {
            fs::create_dir_all(&d).map_err(|e| CliError::io(&d, e))?;
        }
        Ok(())
    }
}

pub fn object_dir_name(id: u32, name: &str) -> String {
    format!("{OBJECTS_DIR}/{id}_{name}")
}

pub fn frame_stem(index: usize) -> String {
    format!("{index:06}")
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| CliError::Json {
        path: path.to_path_buf(),
        source,
    })
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|source| CliError::Json {
        path: path.to_path_buf(),
        source,
    })? + "\n";
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Random streams are keyed by purpose, frame and object so that every
/// draw is independent of processing order.
#[derive(Debug, Clone, Copy)]
pub enum Stream {
    Corruption = 1,
    Ransac = 2,
    Distortion = 3,
}

pub fn stream_seed(base: u64, purpose: Stream, index: u64, object_id: u32) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    rng.set_stream(((purpose as u64) << 56) ^ (index << 8) ^ object_id as u64);
    rng.next_u64()
}
