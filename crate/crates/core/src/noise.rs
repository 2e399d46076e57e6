//! Corruption simulator: degrades a clean correspondence map the way an
//! imperfect network prediction would.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::CorrespondenceMap;

/// Largest occluder as a fraction of the object's bounding-box area.
pub const MAX_OCCLUDER_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct CorruptionParams {
    /// Gaussian jitter on u/v, in class units.
    pub uv_jitter_sigma: f64,
    /// Fraction of foreground pixels given uniformly random (u, v).
    pub outlier_rate: f64,
    /// Fraction of foreground pixels flipped to background.
    pub dropout_rate: f64,
    /// Random background rectangles per visible object.
    pub occlusion_boxes: u32,
    pub seed: u64,
}

impl CorruptionParams {
    pub fn outliers(rate: f64, seed: u64) -> Self {
        Self {
            outlier_rate: rate,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, r) in [("outlier_rate", self.outlier_rate), ("dropout_rate", self.dropout_rate)] {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::InvalidParameter(format!("{name} must lie in [0, 1], got {r}")));
            }
        }
        if !(self.uv_jitter_sigma >= 0.0) || !self.uv_jitter_sigma.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "uv_jitter_sigma must be finite and non-negative, got {}",
                self.uv_jitter_sigma
            )));
        }
        Ok(())
    }
}

/// Applies occlusion boxes, dropout, outlier replacement and jitter, in that
/// order. Background pixels are never modified.
pub fn corrupt(map: &CorrespondenceMap, params: &CorruptionParams) -> Result<CorrespondenceMap> {
    params.validate()?;
    let mut out = map.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);

    if params.occlusion_boxes > 0 {
        let mut present: Vec<u8> = out.id.iter().copied().filter(|&id| id != 0).collect();
        present.sort_unstable();
        present.dedup();
        for id in present {
            let Some([x0, y0, x1, y1]) = map.bbox_of(id) else {
                continue;
            };
            let (bw, bh) = ((x1 - x0) as f64, (y1 - y0) as f64);
            for _ in 0..params.occlusion_boxes {
                let frac = rng.random_range(0.0..=MAX_OCCLUDER_FRACTION);
                let aspect: f64 = rng.random_range(0.5..2.0);
                let w = ((frac * aspect).sqrt() * bw).floor().min(bw) as u32;
                let h = ((frac / aspect).sqrt() * bh).floor().min(bh) as u32;
                if w == 0 || h == 0 {
                    continue;
                }
                let ox = x0 + rng.random_range(0..=(x1 - x0 - w));
                let oy = y0 + rng.random_range(0..=(y1 - y0 - h));
                for row in oy..oy + h {
                    for col in ox..ox + w {
                        let idx = out.index(col, row);
                        if out.id[idx] != 0 {
                            out.clear_pixel(idx);
                        }
                    }
                }
            }
        }
    }

    if params.dropout_rate > 0.0 {
        for idx in 0..out.len() {
            if out.id[idx] != 0 && rng.random_bool(params.dropout_rate) {
                out.clear_pixel(idx);
            }
        }
    }

    if params.outlier_rate > 0.0 {
        for idx in 0..out.len() {
            if out.id[idx] != 0 && rng.random_bool(params.outlier_rate) {
                out.u[idx] = rng.random();
                out.v[idx] = rng.random();
            }
        }
    }

    if params.uv_jitter_sigma > 0.0 {
        let normal = Normal::new(0.0, params.uv_jitter_sigma).expect("validated sigma");
        let jitter = |c: u8, rng: &mut ChaCha8Rng| (c as f64 + normal.sample(rng)).round().clamp(0.0, 255.0) as u8;
        for idx in 0..out.len() {
            if out.id[idx] != 0 {
                out.u[idx] = jitter(out.u[idx], &mut rng);
                out.v[idx] = jitter(out.v[idx], &mut rng);
            }
        }
    }
    Ok(out)
}
