use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use voxelzip::grid::{Scale, ValuePrecision};
use voxelzip::render::MarchConfig;
use voxelzip::synth::SceneKind;

/// Compress, refine, restore and render sparse voxel radiance grids.
#[derive(Parser, Debug)]
#[command(name = "voxelzip", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write a procedural test scene as a raw grid file.
    #[command(args_override_self = true)]
    Generate(GenerateArgs),
    /// Compress a raw grid into a container.
    #[command(args_override_self = true)]
    Compress(CompressArgs),
    /// Fit a refinement network and store it in an existing container.
    #[command(name = "train-ncb", args_override_self = true)]
    TrainNcb(TrainArgs),
    /// Restore a container to a raw grid file.
    #[command(args_override_self = true)]
    Decompress(DecompressArgs),
    /// Render one view of a container or raw grid to PNG.
    #[command(args_override_self = true)]
    Render(RenderArgs),
    /// Time the renderer with each acceleration switched on in turn.
    #[command(args_override_self = true)]
    Bench(BenchArgs),
    /// Run a compression parameter sweep over a procedural scene.
    #[command(args_override_self = true)]
    Ablate(AblateArgs),
    /// Print the header and section table of a container and verify it.
    #[command(args_override_self = true)]
    Inspect(InspectArgs),
}

fn parse_precision(s: &str) -> Result<ValuePrecision, voxelzip::Error> {
    ValuePrecision::parse(s)
}

fn parse_triple(s: &str) -> Result<[f64; 3], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(format!("expected three comma-separated numbers, got {s:?}"));
    }
    let mut out = [0.0; 3];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = p.parse().map_err(|_| format!("{p:?} is not a number"))?;
    }
    Ok(out)
}

#[derive(Args, Debug, Clone)]
pub struct WorkerArgs {
    /// Worker threads. Defaults to $VOXELZIP_WORKERS, then to the number of cores.
    #[arg(long, env = "VOXELZIP_WORKERS")]
    pub workers: Option<usize>,
}

impl WorkerArgs {
    pub fn resolve(&self) -> usize {
        self.workers
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
    }
}

#[derive(Args, Debug, Clone)]
pub struct MarchArgs {
    /// Base ray-marching step in voxels.
    #[arg(long, default_value_t = 0.5)]
    pub step: f64,
    #[arg(long, default_value_t = 2.0)]
    pub step_multiplier: f64,
    /// Stop a ray once transmittance falls below this.
    #[arg(long, default_value_t = 0.01)]
    pub termination_threshold: f64,
    #[arg(long)]
    pub no_early_termination: bool,
    /// Background colour as r,g,b.
    #[arg(long, value_parser = parse_triple, default_value = "0,0,0")]
    pub background: [f64; 3],
}

impl MarchArgs {
    pub fn config(&self) -> MarchConfig {
        MarchConfig {
            step: self.step,
            step_multiplier: self.step_multiplier,
            early_termination: !self.no_early_termination,
            termination_threshold: self.termination_threshold,
            background: self.background,
        }
    }
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[arg(long, default_value = "checker")]
    pub scene: SceneKind,
    /// Side length of the cubic grid.
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    /// Fraction of voxels that are occupied.
    #[arg(long, default_value_t = 0.1)]
    pub occupancy: f64,
    #[arg(long, default_value_t = 2)]
    pub sh_degree: u8,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_parser = parse_precision, default_value = "f32")]
    pub precision: ValuePrecision,
    #[arg(short, long)]
    pub output: PathBuf,
    #[arg(long)]
    pub json: bool,
}

#[derive(Args, Debug)]
pub struct CompressArgs {
    /// Raw grid file.
    pub input: PathBuf,
    #[arg(short, long)]
    pub output: PathBuf,
    #[arg(long, default_value = "1/4")]
    pub scale_color: Scale,
    #[arg(long, default_value = "1/2")]
    pub scale_density: Scale,
    /// Fraction of occupied voxels kept verbatim.
    #[arg(long, default_value_t = 0.05)]
    pub retain: f64,
    /// Probe rays used to score voxel importance.
    #[arg(long, default_value_t = 20 * 64 * 64)]
    pub importance_rays: u64,
    #[arg(long, value_parser = parse_precision, default_value = "f16")]
    pub precision: ValuePrecision,
    #[command(flatten)]
    pub march: MarchArgs,
    #[command(flatten)]
    pub workers: WorkerArgs,
    #[arg(long)]
    pub json: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Schedule {
    /// 2000 iterations of 8192 voxels.
    Desk,
    /// 20000 iterations of 100000 voxels.
    Full,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Container to extend.
    pub container: PathBuf,
    /// Raw grid the container was made from.
    #[arg(long)]
    pub source: PathBuf,
    #[arg(long, value_enum, default_value = "desk")]
    pub schedule: Schedule,
    #[arg(long)]
    pub iters: Option<usize>,
    /// Voxels per training batch.
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub lr_decay: Option<f64>,
    #[arg(long)]
    pub decay_every: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Fraction of voxels withheld from training.
    #[arg(long, default_value_t = 0.0)]
    pub holdout: f64,
    #[arg(long, value_parser = parse_precision, default_value = "f16")]
    pub ncb_precision: ValuePrecision,
    /// Report the mean batch loss every this many iterations.
    #[arg(long, default_value_t = 100)]
    pub log_every: usize,
    /// Replace a network already present in the container.
    #[arg(long)]
    pub overwrite: bool,
    #[command(flatten)]
    pub workers: WorkerArgs,
    #[arg(long)]
    pub json: bool,
}

#[derive(Args, Debug)]
pub struct DecompressArgs {
    pub container: PathBuf,
    #[arg(short, long)]
    pub output: PathBuf,
    #[arg(long, value_parser = parse_precision, default_value = "f32")]
    pub precision: ValuePrecision,
    /// Skip the refinement network even if the container has one.
    #[arg(long)]
    pub no_ncb: bool,
    #[command(flatten)]
    pub workers: WorkerArgs,
    #[arg(long)]
    pub json: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Kernel {
    Combined,
    LaneSplit,
}

#[derive(Args, Debug)]
pub struct RenderArgs {
    /// Container or raw grid file.
    pub input: PathBuf,
    #[arg(short, long)]
    pub output: PathBuf,
    /// Also write the linear float image here.
    #[arg(long)]
    pub float_dump: Option<PathBuf>,
    /// Index of a held-out view direction (0-7).
    #[arg(long, default_value_t = 0)]
    pub view: usize,
    /// Explicit view direction x,y,z, pointing from the grid centre to the camera.
    #[arg(long, value_parser = parse_triple, conflicts_with = "view")]
    pub direction: Option<[f64; 3]>,
    #[arg(long, default_value_t = 256)]
    pub resolution: usize,
    /// Camera distance in grid half-diagonals.
    #[arg(long, default_value_t = 2.5)]
    pub radius: f64,
    #[arg(long)]
    pub no_ncb: bool,
    #[arg(long, value_enum, default_value = "combined")]
    pub kernel: Kernel,
    /// Render with the fine reference step and no early termination.
    #[arg(long)]
    pub reference: bool,
    #[command(flatten)]
    pub march: MarchArgs,
    #[command(flatten)]
    pub workers: WorkerArgs,
    #[arg(long)]
    pub json: bool,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Container or raw grid file.
    pub input: PathBuf,
    #[arg(long, default_value_t = 128)]
    pub resolution: usize,
    /// Number of held-out views to render (1-8).
    #[arg(long, default_value_t = 8)]
    pub views: usize,
    /// Timed runs per ladder row; the fastest is reported.
    #[arg(long, default_value_t = 1)]
    pub repeat: usize,
    /// Base step before doubling.
    #[arg(long, default_value_t = 0.5)]
    pub step: f64,
    #[arg(long, default_value_t = 0.01)]
    pub termination_threshold: f64,
    #[arg(long, value_parser = parse_triple, default_value = "0,0,0")]
    pub background: [f64; 3],
    #[arg(long)]
    pub no_ncb: bool,
    #[command(flatten)]
    pub workers: WorkerArgs,
    #[arg(long)]
    pub json: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Sweep {
    /// Colour and density scales 1/2 and 1/4.
    Downsample,
    /// Retention 0 to 10 percent.
    Retention,
    All,
}

#[derive(Args, Debug)]
pub struct AblateArgs {
    #[arg(long, default_value = "checker")]
    pub scene: SceneKind,
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    #[arg(long, default_value_t = 0.1)]
    pub occupancy: f64,
    #[arg(long, default_value_t = 2)]
    pub sh_degree: u8,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "all")]
    pub sweep: Sweep,
    /// Train a refinement network of this many iterations per configuration.
    #[arg(long, default_value_t = 0)]
    pub ncb_iters: usize,
    #[arg(long, default_value_t = 64)]
    pub resolution: usize,
    /// Directory for renders and the CSV table.
    #[arg(long)]
    pub results: PathBuf,
    #[command(flatten)]
    pub march: MarchArgs,
    #[command(flatten)]
    pub workers: WorkerArgs,
    #[arg(long)]
    pub json: bool,
}

#[derive(Args, Debug)]
pub struct InspectArgs {
    pub container: PathBuf,
    #[arg(long)]
    pub json: bool,
}
