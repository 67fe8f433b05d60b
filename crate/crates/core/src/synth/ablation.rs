use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::codec::{container_bytes, pointer_baseline_bytes};
use crate::compress::{compress, probe_cameras, restore, restore_with, CompressionConfig};
use crate::error::{Error, Result};
use crate::grid::{Scale, Shape, VoxelGrid};
use crate::ncb::{train_ncb, TrainConfig};
use crate::render::{psnr_from_mse, render_image, Camera, Image, MarchConfig};

use super::SceneSpec;

pub const HELDOUT_VIEWS: usize = 8;
/// Orbit distance of the held-out cameras, in grid half-diagonals.
pub const HELDOUT_RADIUS: f64 = 2.5;
pub const RECORD_SCHEMA: u32 = 1;

/// Eight of the twenty icosahedron face normals: the ones shared with the
/// cube diagonals.
pub fn heldout_directions() -> [[f64; 3]; HELDOUT_VIEWS] {
    let s = 1.0 / 3f64.sqrt();
    let mut out = [[0.0; 3]; HELDOUT_VIEWS];
    for (i, d) in out.iter_mut().enumerate() {
        let sign = |bit: usize| if i >> bit & 1 == 1 { -s } else { s };
        *d = [sign(2), sign(1), sign(0)];
    }
    out
}

pub fn heldout_cameras(shape: Shape, resolution: usize) -> Result<Vec<Camera>> {
    heldout_directions()
        .into_iter()
        .map(|d| Camera::orbit(shape, d, HELDOUT_RADIUS, resolution))
        .collect()
}

/// Renders every camera in order.
pub fn render_views(grid: &VoxelGrid, cameras: &[Camera], march: &MarchConfig, workers: usize) -> Result<Vec<Image>> {
    cameras
        .iter()
        .map(|c| Ok(render_image(grid, c, march, workers)?.image))
        .collect()
}

/// PSNR of the pooled squared error over all view pairs. Identical view
/// sets give `+inf`.
pub fn views_psnr(truth: &[Image], test: &[Image]) -> Result<f64> {
    if truth.len() != test.len() || truth.is_empty() {
        return Err(Error::DimensionMismatch(format!(
            "{} reference views vs {} test views",
            truth.len(),
            test.len()
        )));
    }
    let (mut se, mut n) = (0.0, 0usize);
    for (a, b) in truth.iter().zip(test) {
        let (s, c) = a.squared_error(b)?;
        se += s;
        n += c;
    }
    Ok(psnr_from_mse(se / n as f64))
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AblationConfig {
    pub compression: CompressionConfig,
    /// Train a refinement network with this schedule before restoring.
    pub ncb: Option<TrainConfig>,
}

impl AblationConfig {
    pub fn plain(compression: CompressionConfig) -> Self {
        Self {
            compression,
            ncb: None,
        }
    }

    /// Stable 8-hex-digit key naming the configuration.
    pub fn hash(&self) -> String {
        let c = &self.compression;
        let text = format!(
            "{}|{}|{:016x}|{}|{}|{:?}",
            c.scale_color,
            c.scale_density,
            c.retain_fraction.to_bits(),
            c.importance_rays,
            c.precision.name(),
            self.ncb
        );
        format!("{:08x}", crc32fast::hash(text.as_bytes()))
    }
}

/// The four combinations of colour and density scale 1/2 and 1/4.
pub fn downsample_grid(base: &CompressionConfig) -> Vec<AblationConfig> {
    let mut out = Vec::new();
    for sc in [Scale::Half, Scale::Quarter] {
        for sd in [Scale::Half, Scale::Quarter] {
            out.push(AblationConfig::plain(CompressionConfig {
                scale_color: sc,
                scale_density: sd,
                ..*base
            }));
        }
    }
    out
}

/// Retention fractions 0, 2.5, 5, 7.5 and 10 percent.
pub fn retention_sweep(base: &CompressionConfig) -> Vec<AblationConfig> {
    [0.0, 0.025, 0.05, 0.075, 0.1]
        .into_iter()
        .map(|p| {
            AblationConfig::plain(CompressionConfig {
                retain_fraction: p,
                ..*base
            })
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct AblationOptions {
    pub march: MarchConfig,
    pub resolution: usize,
    pub workers: usize,
    /// Where to write per-experiment renders and the CSV, if anywhere.
    pub results_dir: Option<PathBuf>,
}

impl Default for AblationOptions {
    fn default() -> Self {
        Self {
            march: MarchConfig::default(),
            resolution: 64,
            workers: 1,
            results_dir: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct ExperimentRecord {
    pub schema: u32,
    pub scene: SceneSpec,
    pub config: CompressionConfig,
    pub config_hash: String,
    /// `psnr_db` is `+inf` when the restored views match exactly.
    pub metrics: BTreeMap<String, f64>,
}

impl ExperimentRecord {
    pub fn metric(&self, name: &str) -> f64 {
        self.metrics.get(name).copied().unwrap_or(f64::NAN)
    }
}

fn ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

/// Compresses `grid` under every configuration, optionally trains a
/// network, restores, renders the held-out views and scores them against
/// renders of `grid` itself.
pub fn run_ablation(
    scene: &SceneSpec,
    grid: &VoxelGrid,
    configs: &[AblationConfig],
    opts: &AblationOptions,
) -> Result<Vec<ExperimentRecord>> {
    if configs.is_empty() {
        return Err(Error::InvalidConfig("ablation needs at least one configuration".into()));
    }
    let cams = heldout_cameras(grid.shape(), opts.resolution)?;
    let truth = render_views(grid, &cams, &opts.march, opts.workers)?;
    let baseline = pointer_baseline_bytes(grid.dims(), grid.occupied());
    let mut records = Vec::with_capacity(configs.len());
    for cfg in configs {
        let t = Instant::now();
        let probes = probe_cameras(grid.shape(), cfg.compression.importance_rays)?;
        let mut model = compress(grid, &probes, &opts.march, &cfg.compression, opts.workers)?;
        let wall_compress = ms(t);

        let t = Instant::now();
        let mut iters = 0;
        if let Some(train) = &cfg.ncb {
            let plain = restore_with(&model, None, opts.workers)?;
            let out = train_ncb(grid, &plain, train)?;
            iters = out.log.iterations;
            model.ncb = Some(out.network);
        }
        let wall_ncb = ms(t);

        let t = Instant::now();
        let bytes = container_bytes(&model)?;
        let wall_encode = ms(t);
        let t = Instant::now();
        let restored = restore(&model, opts.workers)?;
        let wall_restore = ms(t);
        let t = Instant::now();
        let views = render_views(&restored, &cams, &opts.march, opts.workers)?;
        let wall_render = ms(t);
        let hash = cfg.hash();
        if let Some(dir) = &opts.results_dir {
            let sub = dir.join(&hash);
            std::fs::create_dir_all(&sub)?;
            for (i, v) in views.iter().enumerate() {
                v.write_png(&sub.join(format!("view_{i}.png")))?;
            }
        }
        let metrics = BTreeMap::from([
            ("psnr_db".to_string(), views_psnr(&truth, &views)?),
            ("container_bytes".to_string(), bytes.len() as f64),
            ("baseline_bytes".to_string(), baseline as f64),
            ("ratio".to_string(), baseline as f64 / bytes.len() as f64),
            ("ncb_iters".to_string(), iters as f64),
            ("wall_ms_compress".to_string(), wall_compress),
            ("wall_ms_ncb".to_string(), wall_ncb),
            ("wall_ms_encode".to_string(), wall_encode),
            ("wall_ms_restore".to_string(), wall_restore),
            ("wall_ms_render".to_string(), wall_render),
        ]);
        records.push(ExperimentRecord {
            schema: RECORD_SCHEMA,
            scene: *scene,
            config: cfg.compression,
            config_hash: hash,
            metrics,
        });
    }
    if let Some(dir) = &opts.results_dir {
        let mut f = std::fs::File::create(dir.join("ablation.csv"))?;
        write_csv(&records, &mut f)?;
    }
    Ok(records)
}

pub const CSV_COLUMNS: [&str; 16] = [
    "config_hash",
    "scene",
    "scale_color",
    "scale_density",
    "retain_fraction",
    "precision",
    "ncb_iters",
    "psnr_db",
    "container_bytes",
    "baseline_bytes",
    "ratio",
    "wall_ms_compress",
    "wall_ms_ncb",
    "wall_ms_encode",
    "wall_ms_restore",
    "wall_ms_render",
];

/// One header row plus one row per record, LF line endings.
pub fn write_csv<W: Write>(records: &[ExperimentRecord], sink: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(sink);
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(CSV_COLUMNS).map_err(csv_err)?;
    for r in records {
        let mut row = vec![
            r.config_hash.clone(),
            r.scene.kind.to_string(),
            r.config.scale_color.to_string(),
            r.config.scale_density.to_string(),
            r.config.retain_fraction.to_string(),
            r.config.precision.name().to_string(),
        ];
        row.extend(CSV_COLUMNS[6..].iter().map(|m| r.metric(m).to_string()));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv_file(records: &[ExperimentRecord], path: &Path) -> Result<()> {
    write_csv(records, std::fs::File::create(path)?)
}
