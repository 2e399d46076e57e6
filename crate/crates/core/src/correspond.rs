//! Decoding correspondence maps into 2D-3D point pairs.

use std::collections::BTreeMap;
use std::io::Write;

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::ColorLookup;
use crate::raster::CorrespondenceMap;

/// Detection threshold used when none is configured.
pub const DEFAULT_MIN_PIXELS: usize = 50;

/// A pixel center paired with a model-surface point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence2D3D {
    pub pixel: Vector2<f64>,
    pub point: Vector3<f64>,
}

impl Correspondence2D3D {
    pub fn new(pixel: Vector2<f64>, point: Vector3<f64>) -> Self {
        Self { pixel, point }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrespondenceSet {
    pub object_id: u32,
    pub items: Vec<Correspondence2D3D>,
}

#[derive(Serialize, Deserialize)]
struct CorrespondenceLine {
    id: u32,
    px: [f64; 2],
    p: [f64; 3],
}

impl CorrespondenceSet {
    /// Writes one JSON object per line: `{"id": k, "px": [x, y], "p": [x, y, z]}`.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for c in &self.items {
            let line = CorrespondenceLine {
                id: self.object_id,
                px: c.pixel.into(),
                p: c.point.into(),
            };
            serde_json::to_writer(&mut out, &line)?;
            out.write_all(b"\n")
                .map_err(|e| Error::io("<jsonl output>", e))?;
        }
        Ok(())
    }
}

/// Decodes every foreground pixel of `map` through its object's lookup.
///
/// Pixels whose class cell is empty are skipped. Sets come out in ascending
/// object id, items in row-major pixel order.
pub fn decode(map: &CorrespondenceMap, lookups: &BTreeMap<u32, &ColorLookup>) -> Result<Vec<CorrespondenceSet>> {
    let mut sets: BTreeMap<u32, Vec<Correspondence2D3D>> = BTreeMap::new();
    for idx in 0..map.len() {
        let id = map.id[idx] as u32;
        if id == 0 {
            continue;
        }
        let lut = lookups.get(&id).ok_or(Error::MissingLookup(id))?;
        let items = sets.entry(id).or_default();
        if let Some(p) = lut.get(map.u[idx], map.v[idx]) {
            items.push(Correspondence2D3D::new(map.pixel_center(idx), p));
        }
    }
    Ok(sets
        .into_iter()
        .map(|(object_id, items)| CorrespondenceSet { object_id, items })
        .collect())
}

/// Object ids covering at least `min_pixels` pixels, ascending.
pub fn detected_ids(map: &CorrespondenceMap, min_pixels: usize) -> Vec<u32> {
    let mut counts = [0usize; 256];
    for &id in &map.id {
        counts[id as usize] += 1;
    }
    (1..256u32)
        .filter(|&id| counts[id as usize] >= min_pixels.max(1))
        .collect()
}
