//! Argument parsing and command dispatch.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use uvpose::correspond::DEFAULT_MIN_PIXELS;
use uvpose::refine::DEFAULT_ITERATIONS;
use uvpose::{CameraIntrinsics, CorruptionParams, RansacConfig, UvMode};

use crate::commands::{self, RenderOptions, ViewGrid};
use crate::dataset::{read_json, write_json, Dataset};
use crate::error::{CliError, Result};
use crate::estimate::{self, DistortSpec, EstimateOptions};
use crate::evaluate;
use crate::loss::{self, LossFixture};
use crate::sweep::{self, SweepOptions, DEFAULT_ITERATION_LIST};

#[derive(Debug, Parser)]
#[command(name = "uvpose", version, about = "Dense UV-correspondence 6DoF pose estimation harness")]
pub struct Cli {
    /// Base seed; overrides seeds in JSON configs.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Texture a mesh with a UV correspondence map.
    Texture {
        #[arg(long)]
        mesh: PathBuf,
        #[arg(long, default_value_t = UvMode::Spherical)]
        mode: UvMode,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a built-in mesh as OBJ.
    Fixture {
        /// unit-cube, cube, blob or bracket
        #[arg(long)]
        name: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render textured models from a viewpoint grid into a dataset.
    Render(RenderArgs),
    /// Write a corrupted copy of a dataset.
    Corrupt {
        #[arg(long)]
        dataset: PathBuf,
        #[command(flatten)]
        corruption: CorruptionArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate poses for every frame of a dataset.
    Estimate(EstimateArgs),
    /// Percent-correct as a function of RANSAC iterations, as CSV.
    SweepRansac(SweepArgs),
    /// Score estimation results against ground truth.
    Evaluate {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Composite cross-entropy loss of a probability-tensor fixture.
    Loss {
        #[arg(long)]
        fixture: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    /// Model directory written by `texture`; repeat for several objects.
    #[arg(long = "model", required = true)]
    pub models: Vec<PathBuf>,
    /// Azimuth, elevation and in-plane step counts.
    #[arg(long, value_delimiter = ',', default_values_t = [8, 3, 3])]
    pub views: Vec<usize>,
    /// Camera distance from the target, meters.
    #[arg(long, default_value_t = 0.7)]
    pub radius: f64,
    /// Intrinsics JSON; defaults to the LineMOD calibration.
    #[arg(long)]
    pub intrinsics: Option<PathBuf>,
    /// Distance between neighbouring objects, meters.
    #[arg(long, default_value_t = 0.25)]
    pub spacing: f64,
    /// Object names scored with ADD-S.
    #[arg(long, value_delimiter = ',')]
    pub symmetric: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Default)]
pub struct CorruptionArgs {
    /// CorruptionParams JSON.
    #[arg(long = "corruption")]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub outlier_rate: Option<f64>,
    #[arg(long)]
    pub dropout_rate: Option<f64>,
    #[arg(long)]
    pub jitter: Option<f64>,
    #[arg(long)]
    pub occlusion_boxes: Option<u32>,
}

impl CorruptionArgs {
    /// `None` when neither a file nor any override is given.
    fn resolve(&self, seed: Option<u64>) -> Result<Option<CorruptionParams>> {
        let overridden =
            self.outlier_rate.is_some() || self.dropout_rate.is_some() || self.jitter.is_some() || self.occlusion_boxes.is_some();
        let mut p = match &self.config {
            Some(path) => read_json::<CorruptionParams>(path)?,
            None if overridden => CorruptionParams::default(),
            None => return Ok(None),
        };
        if let Some(r) = self.outlier_rate {
            p.outlier_rate = r;
        }
        if let Some(r) = self.dropout_rate {
            p.dropout_rate = r;
        }
        if let Some(s) = self.jitter {
            p.uv_jitter_sigma = s;
        }
        if let Some(n) = self.occlusion_boxes {
            p.occlusion_boxes = n;
        }
        if let Some(s) = seed {
            p.seed = s;
        }
        p.validate()?;
        Ok(Some(p))
    }
}

#[derive(Debug, Args)]
pub struct RansacArgs {
    /// RansacConfig JSON.
    #[arg(long)]
    pub ransac: Option<PathBuf>,
    /// Reprojection threshold in pixels.
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub min_inliers: Option<usize>,
    /// Minimum mask pixels for an object to count as detected.
    #[arg(long, default_value_t = DEFAULT_MIN_PIXELS)]
    pub min_pixels: usize,
}

impl RansacArgs {
    fn resolve(&self, iterations: Option<usize>, seed: Option<u64>) -> Result<RansacConfig> {
        let mut cfg = match &self.ransac {
            Some(path) => read_json::<RansacConfig>(path)?,
            None => RansacConfig::default(),
        };
        if let Some(n) = iterations {
            cfg.iterations = n;
        }
        if let Some(t) = self.threshold {
            cfg.reproj_threshold = t;
        }
        if let Some(m) = self.min_inliers {
            cfg.min_inliers = m;
        }
        if let Some(s) = seed {
            cfg.seed = s;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[command(flatten)]
    pub corruption: CorruptionArgs,
    #[command(flatten)]
    pub ransac: RansacArgs,
    /// RANSAC iterations.
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Refine each estimate by render-and-rematch.
    #[arg(long)]
    pub refine: bool,
    #[arg(long, default_value_t = DEFAULT_ITERATIONS)]
    pub refine_iters: usize,
    /// Replace RANSAC by ground truth distorted with ROT_DEG,TRANS_FRAC
    /// (rotation sigma in degrees, translation sigma as diameter fraction).
    #[arg(long, value_delimiter = ',')]
    pub distort: Option<Vec<f64>>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[command(flatten)]
    pub corruption: CorruptionArgs,
    #[command(flatten)]
    pub ransac: RansacArgs,
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_ITERATION_LIST)]
    pub iterations: Vec<usize>,
    /// Number of trials; defaults to the number of frames.
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_ITERATIONS)]
    pub refine_iters: usize,
    #[arg(long)]
    pub out: PathBuf,
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    ensure_parent(path)?;
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Runs one parsed command. Messages go to stdout; files are written as
/// the command describes.
pub fn run(cli: &Cli) -> Result<()> {
    match cli.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Usage(format!("cannot start {n} threads: {e}")))?
            .install(|| dispatch(cli)),
        None => dispatch(cli),
    }
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Texture { mesh, mode, out } => {
            let s = commands::texture(mesh, *mode, out)?;
            println!(
                "textured {} ({} vertices, {} triangles, {} lookup cells, diameter {:.4} m) -> {}",
                mesh.display(),
                s.vertices,
                s.triangles,
                s.populated_cells,
                s.diameter,
                out.display()
            );
        }
        Command::Fixture { name, out } => {
            commands::fixture(name, out)?;
            println!("wrote {name} -> {}", out.display());
        }
        Command::Render(a) => {
            if a.views.len() != 3 {
                return Err(CliError::Usage(format!(
                    "--views takes azimuth,elevation,inplane counts, got {} values",
                    a.views.len()
                )));
            }
            let intrinsics = match &a.intrinsics {
                Some(p) => read_json::<CameraIntrinsics>(p)?,
                None => CameraIntrinsics::linemod(),
            };
            let opts = RenderOptions {
                models: a.models.clone(),
                views: ViewGrid {
                    azimuth: a.views[0],
                    elevation: a.views[1],
                    inplane: a.views[2],
                    radius: a.radius,
                },
                intrinsics,
                spacing: a.spacing,
                symmetric: a.symmetric.clone(),
            };
            let m = commands::render(&opts, &a.out)?;
            println!("rendered {} frames of {} objects -> {}", m.frames.len(), m.objects.len(), a.out.display());
        }
        Command::Corrupt { dataset, corruption, out } => {
            let params = corruption
                .resolve(cli.seed)?
                .ok_or_else(|| CliError::Usage("corrupt needs --corruption or a rate override".into()))?;
            let ds = Dataset::open(dataset)?;
            let m = commands::corrupt_dataset(&ds, &params, out)?;
            println!("corrupted {} frames -> {}", m.frames.len(), out.display());
        }
        Command::Estimate(a) => {
            if a.distort.as_ref().is_some_and(|d| d.len() != 2) {
                return Err(CliError::Usage("--distort takes ROT_DEG,TRANS_FRAC".into()));
            }
            let ds = Dataset::open(&a.dataset)?;
            let opts = EstimateOptions {
                corruption: a.corruption.resolve(cli.seed)?,
                ransac: a.ransac.resolve(a.iterations, None)?,
                refine: a.refine,
                refine_iters: a.refine_iters,
                distort: a.distort.as_ref().map(|d| DistortSpec {
                    rot_sigma_deg: d[0],
                    trans_sigma_frac: d[1],
                }),
                min_pixels: a.ransac.min_pixels,
                seed: cli.seed.unwrap_or(0),
            };
            let results = estimate::estimate(&ds, &opts)?;
            write_text(&a.out, &(to_json(&results)? + "\n"))?;
            let (n, ok) = (results.detections(), results.solved());
            println!("estimated {ok}/{n} detections in {} frames -> {}", results.frames.len(), a.out.display());
            if n > 0 && ok == 0 {
                return Err(CliError::Compute("no detection produced a pose".into()));
            }
        }
        Command::SweepRansac(a) => {
            let ds = Dataset::open(&a.dataset)?;
            let opts = SweepOptions {
                corruption: a.corruption.resolve(cli.seed)?,
                iterations: a.iterations.clone(),
                trials: a.trials.unwrap_or(ds.manifest.frames.len()),
                ransac: a.ransac.resolve(None, None)?,
                refine_iters: a.refine_iters,
                min_pixels: a.ransac.min_pixels,
                seed: cli.seed.unwrap_or(0),
            };
            let rows = sweep::sweep_ransac(&ds, &opts)?;
            let csv = sweep::to_csv(&rows);
            write_text(&a.out, &csv)?;
            print!("{csv}");
        }
        Command::Evaluate { dataset, results, out } => {
            let ds = Dataset::open(dataset)?;
            let res: estimate::Results = read_json(results)?;
            let report = evaluate::evaluate(&ds, &res)?;
            ensure_parent(out)?;
            write_json(out, &report)?;
            print!("{}", evaluate::format_table(&report));
        }
        Command::Loss { fixture, out } => {
            let f: LossFixture = read_json(fixture)?;
            let l = loss::loss(&f)?;
            let text = to_json(&l)? + "\n";
            if let Some(out) = out {
                write_text(out, &text)?;
            }
            print!("{text}");
        }
    }
    Ok(())
}

fn to_json<T: serde::Serialize>(v: &T) -> Result<String> {
    serde_json::to_string_pretty(v).map_err(|e| CliError::Usage(e.to_string()))
}
