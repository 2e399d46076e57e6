//! RANSAC iteration-count sweep.

use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use uvpose::correspond::{decode, detected_ids, DEFAULT_MIN_PIXELS};
use uvpose::noise::corrupt;
use uvpose::posesolve::ransac_pnp;
use uvpose::refine::{refine_pose_outcome, DEFAULT_ITERATIONS};
use uvpose::{CorruptionParams, RansacConfig};

use crate::dataset::{stream_seed, Dataset, Stream};
use crate::error::{CliError, Result};
use crate::evaluate::score;

pub const DEFAULT_ITERATION_LIST: [usize; 9] = [5, 25, 50, 100, 150, 200, 250, 350, 500];

#[derive(Debug, Clone)]
pub struct SweepOptions {
    pub corruption: Option<CorruptionParams>,
    pub iterations: Vec<usize>,
    /// Number of (frame, seed) trials; frames are reused cyclically.
    pub trials: usize,
    pub ransac: RansacConfig,
    pub refine_iters: usize,
    pub min_pixels: usize,
    pub seed: u64,
}

impl SweepOptions {
    pub fn new(trials: usize) -> Self {
        Self {
            corruption: None,
            iterations: DEFAULT_ITERATION_LIST.to_vec(),
            trials,
            ransac: RansacConfig::default(),
            refine_iters: DEFAULT_ITERATIONS,
            min_pixels: DEFAULT_MIN_PIXELS,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub iterations: usize,
    pub percent_correct: f64,
    pub percent_correct_refined: f64,
    /// Mean wall time of one `ransac_pnp` call. Not reproducible.
    pub mean_ransac_ms: f64,
}

#[derive(Default, Clone, Copy)]
struct Tally {
    instances: usize,
    correct: usize,
    refined: usize,
    calls: usize,
    seconds: f64,
}

/// Runs every iteration setting on the same corrupted trials, so the
/// columns are paired comparisons.
pub fn sweep_ransac(ds: &Dataset, opts: &SweepOptions) -> Result<Vec<SweepRow>> {
    if opts.iterations.is_empty() || opts.iterations.contains(&0) {
        return Err(CliError::Usage("iteration list must be non-empty and positive".into()));
    }
    let n_frames = ds.manifest.frames.len();
    if n_frames == 0 {
        return Err(CliError::Usage("dataset has no frames".into()));
    }
    if let Some(c) = &opts.corruption {
        c.validate()?;
    }
    let k = &ds.manifest.intrinsics;
    let lookups = ds.lookups();
    let mut tallies = vec![Tally::default(); opts.iterations.len()];
    for trial in 0..opts.trials {
        let index = trial % n_frames;
        let manifest = ds.frame_manifest(index)?;
        let mut map = ds.frame_map(&manifest)?;
        if let Some(c) = &opts.corruption {
            let params = CorruptionParams {
                seed: stream_seed(c.seed ^ opts.seed, Stream::Corruption, trial as u64, 0),
                ..*c
            };
            map = corrupt(&map, &params)?;
        }
        let detected = detected_ids(&map, opts.min_pixels);
        let sets = decode(&map, &lookups)?;
        for inst in &manifest.objects {
            let set = sets
                .iter()
                .find(|s| s.object_id == inst.id && detected.contains(&s.object_id));
            for (tally, &iters) in tallies.iter_mut().zip(&opts.iterations) {
                tally.instances += 1;
                let Some(set) = set else {
                    continue;
                };
                let cfg = RansacConfig {
                    iterations: iters,
                    seed: stream_seed(opts.seed ^ opts.ransac.seed, Stream::Ransac, trial as u64, inst.id),
                    ..opts.ransac
                };
                let start = Instant::now();
                let res = ransac_pnp(&set.items, k, &cfg);
                tally.seconds += start.elapsed().as_secs_f64();
                tally.calls += 1;
                let Ok(res) = res else {
                    continue;
                };
                if score(ds, inst.id, &inst.pose, &res.pose)?.correct {
                    tally.correct += 1;
                }
                let refined = refine_pose_outcome(&map, &ds.models[&inst.id], inst.id, &res.pose, k, opts.refine_iters, &cfg)
                    .map(|o| o.pose)
                    .unwrap_or(res.pose);
                if score(ds, inst.id, &inst.pose, &refined)?.correct {
                    tally.refined += 1;
                }
            }
        }
    }
    let pct = |n: usize, d: usize| if d == 0 { 0.0 } else { 100.0 * n as f64 / d as f64 };
    Ok(opts
        .iterations
        .iter()
        .zip(&tallies)
        .map(|(&iterations, t)| SweepRow {
            iterations,
            percent_correct: pct(t.correct, t.instances),
            percent_correct_refined: pct(t.refined, t.instances),
            mean_ransac_ms: if t.calls == 0 { 0.0 } else { 1000.0 * t.seconds / t.calls as f64 },
        })
        .collect())
}

pub const CSV_HEADER: &str = "iterations,percent_correct,percent_correct_refined,mean_ransac_ms";

/// CSV with a header row, LF line endings and '.' decimals.
pub fn to_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(
            s,
            "{},{:.2},{:.2},{:.4}",
            r.iterations, r.percent_correct, r.percent_correct_refined, r.mean_ransac_ms
        );
    }
    s
}
