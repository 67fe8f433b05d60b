use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::{json, Value};
use voxelzip::codec::{
    container_bytes, decode_container, decode_raw_grid, raw_grid_bytes, read_header, report_from_bytes,
    StorageReport, MAGIC, RAW_MAGIC,
};
use voxelzip::compress::{compress, probe_cameras, restore_timed, CompressedModel, CompressionConfig, RestoreTimings};
use voxelzip::grid::VoxelGrid;
use voxelzip::ncb::{train_ncb_observed, TrainConfig};
use voxelzip::render::{
    render_image_with, Camera, Image, MarchConfig, RayKernel, RenderOptions, REFERENCE_STEP,
};
use voxelzip::synth::{
    downsample_grid, generate_scene, heldout_cameras, heldout_directions, retention_sweep, run_ablation,
    views_psnr, AblationConfig, AblationOptions, SceneSpec, HELDOUT_VIEWS,
};
use voxelzip::Error;

use crate::cli::*;
use crate::error::CliError;

/// Version of every `--json` document.
pub const JSON_SCHEMA: u32 = 1;

type Res<T> = Result<T, CliError>;

fn ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

fn read_input(path: &Path) -> Res<Vec<u8>> {
    match std::fs::read(path) {
        Ok(b) => Ok(b),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(CliError::InputNotFound(path.to_path_buf())),
        Err(e) => Err(e.into()),
    }
}

/// Writes through a temporary file in the destination directory and renames
/// it into place, so readers never see a partial file.
fn write_atomic(path: &Path, bytes: &[u8]) -> Res<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

fn workers_checked(w: &WorkerArgs) -> Res<usize> {
    match w.resolve() {
        0 => Err(Error::InvalidConfig("workers must be >= 1".into()).into()),
        n => Ok(n),
    }
}

fn emit(as_json: bool, doc: Value, text: String) {
    if as_json {
        println!("{}", serde_json::to_string_pretty(&doc).expect("serialisable document"));
    } else {
        print!("{text}");
    }
}

/// JSON has no infinities; an exact match is reported as `null`.
fn finite_or_null(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        Value::Null
    }
}

fn dims_json(grid_dims: voxelzip::grid::GridDims) -> Value {
    json!([grid_dims.h, grid_dims.w, grid_dims.k, grid_dims.c])
}

enum Loaded {
    Grid(VoxelGrid),
    Model(Box<CompressedModel>),
}

fn decode_any(bytes: &[u8]) -> Res<Loaded> {
    if bytes.starts_with(&MAGIC) {
        Ok(Loaded::Model(Box::new(decode_container(bytes)?)))
    } else if bytes.starts_with(&RAW_MAGIC) {
        Ok(Loaded::Grid(decode_raw_grid(bytes)?.0))
    } else {
        Err(Error::BadMagic { expected: MAGIC }.into())
    }
}

/// Restores a container (or passes a raw grid through) and reports the stage times.
fn materialise(loaded: Loaded, use_ncb: bool, workers: usize) -> Res<(VoxelGrid, RestoreTimings)> {
    match loaded {
        Loaded::Grid(g) => Ok((g, RestoreTimings::default())),
        Loaded::Model(m) => {
            let ncb = if use_ncb { m.ncb.as_ref() } else { None };
            Ok(restore_timed(&m, ncb, workers)?)
        }
    }
}

pub fn generate(a: &GenerateArgs) -> Res<()> {
    let spec = SceneSpec::cube(a.scene, a.size, a.occupancy, a.sh_degree, a.seed)?;
    let t = Instant::now();
    let grid = generate_scene(&spec)?;
    let bytes = raw_grid_bytes(&grid, a.precision);
    write_atomic(&a.output, &bytes)?;
    let wall = ms(t);
    let doc = json!({
        "schema": JSON_SCHEMA,
        "command": "generate",
        "output": a.output,
        "scene": spec,
        "dims": dims_json(grid.dims()),
        "occupied": grid.occupied(),
        "bytes": bytes.len(),
        "wall_ms": wall,
    });
    let text = format!(
        "wrote {} ({} scene, {}^3, {} occupied voxels, {} bytes)\n",
        a.output.display(),
        a.scene,
        a.size,
        grid.occupied(),
        bytes.len()
    );
    emit(a.json, doc, text);
    Ok(())
}

fn report_table(r: &StorageReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:<16} {:>14} {:>14}", "section", "raw_bytes", "stored_bytes");
    for sec in &r.sections {
        let _ = writeln!(s, "{:<16} {:>14} {:>14}", sec.name, sec.raw_bytes, sec.compressed_bytes);
    }
    let _ = writeln!(s, "{:<16} {:>14} {:>14}", "header", "", r.header_bytes);
    let _ = writeln!(s, "{:<16} {:>14} {:>14}", "total", "", r.total_bytes);
    let _ = writeln!(s, "{:<16} {:>14} {:>14}", "baseline", "", r.baseline_bytes);
    let _ = writeln!(s, "{:<16} {:>14} {:>14.2}", "ratio", "", r.ratio);
    s
}

pub fn compress_cmd(a: &CompressArgs) -> Res<()> {
    let config = CompressionConfig {
        scale_color: a.scale_color,
        scale_density: a.scale_density,
        retain_fraction: a.retain,
        importance_rays: a.importance_rays,
        precision: a.precision,
    };
    config.validate()?;
    let march = a.march.config();
    march.validate()?;
    let workers = workers_checked(&a.workers)?;

    let t = Instant::now();
    let (grid, _) = decode_raw_grid(&read_input(&a.input)?)?;
    let wall_read = ms(t);
    let t = Instant::now();
    let cams = probe_cameras(grid.shape(), config.importance_rays)?;
    let model = compress(&grid, &cams, &march, &config, workers)?;
    let wall_compress = ms(t);
    let t = Instant::now();
    let bytes = container_bytes(&model)?;
    write_atomic(&a.output, &bytes)?;
    let wall_write = ms(t);
    let report = report_from_bytes(&bytes, grid.occupied())?;

    let doc = json!({
        "schema": JSON_SCHEMA,
        "command": "compress",
        "input": a.input,
        "output": a.output,
        "dims": dims_json(grid.dims()),
        "occupied": grid.occupied(),
        "retained": model.important.len(),
        "config": config,
        "report": report,
        "timings_ms": {"read": wall_read, "compress": wall_compress, "write": wall_write},
    });
    let mut text = format!(
        "{} -> {} ({} occupied, {} retained)\n",
        a.input.display(),
        a.output.display(),
        grid.occupied(),
        model.important.len()
    );
    text.push_str(&report_table(&report));
    emit(a.json, doc, text);
    Ok(())
}

fn train_config(a: &TrainArgs) -> Res<TrainConfig> {
    let base = match a.schedule {
        Schedule::Desk => TrainConfig::desk(),
        Schedule::Full => TrainConfig::default(),
    };
    let cfg = TrainConfig {
        total_iters: a.iters.unwrap_or(base.total_iters),
        batch_voxels: a.batch.unwrap_or(base.batch_voxels),
        lr: a.lr.unwrap_or(base.lr),
        lr_decay: a.lr_decay.unwrap_or(base.lr_decay),
        decay_every: a.decay_every.unwrap_or(base.decay_every),
        seed: a.seed,
        holdout_fraction: a.holdout,
        output_precision: a.ncb_precision,
        ..base
    };
    cfg.validate()?;
    if a.log_every == 0 {
        return Err(Error::InvalidConfig("log-every must be >= 1".into()).into());
    }
    Ok(cfg)
}

pub fn train_ncb_cmd(a: &TrainArgs) -> Res<()> {
    let cfg = train_config(a)?;
    let workers = workers_checked(&a.workers)?;
    let container = read_input(&a.container)?;
    let source_bytes = read_input(&a.source)?;
    let mut model = decode_container(&container)?;
    if model.ncb.is_some() && !a.overwrite {
        return Err(Error::AlreadyHasNcb.into());
    }
    let (source, _) = decode_raw_grid(&source_bytes)?;
    let (plain, _) = restore_timed(&model, None, workers)?;

    let t = Instant::now();
    let mut curve: Vec<(usize, f64)> = Vec::new();
    let (mut window, mut count) = (0.0, 0usize);
    let log_every = a.log_every;
    let total = cfg.total_iters;
    let mut observe = |i: usize, loss: f64| {
        window += loss;
        count += 1;
        if (i + 1) % log_every == 0 || i + 1 == total {
            let mean = window / count as f64;
            eprintln!("iter {:>6}  loss {mean:.6}", i + 1);
            curve.push((i + 1, mean));
            window = 0.0;
            count = 0;
        }
    };
    let outcome = train_ncb_observed(&source, &plain, &cfg, &mut observe)?;
    let wall_train = ms(t);

    model.ncb = Some(outcome.network);
    let bytes = container_bytes(&model)?;
    write_atomic(&a.container, &bytes)?;
    let log = &outcome.log;
    let doc = json!({
        "schema": JSON_SCHEMA,
        "command": "train-ncb",
        "container": a.container,
        "source": a.source,
        "config": cfg,
        "iterations": log.iterations,
        "initial_loss": log.initial_loss,
        "final_loss": log.final_loss,
        "curve": curve.iter().map(|&(i, l)| json!({"iteration": i, "mean_loss": l})).collect::<Vec<_>>(),
        "holdout_voxels": outcome.holdout.len(),
        "bytes_before": container.len(),
        "bytes_after": bytes.len(),
        "wall_ms": wall_train,
    });
    let text = format!(
        "trained {} iterations in {:.1} s: loss {:.6} -> {:.6}\ncontainer {} bytes -> {} bytes\n",
        log.iterations,
        wall_train / 1e3,
        log.initial_loss,
        log.final_loss,
        container.len(),
        bytes.len()
    );
    emit(a.json, doc, text);
    Ok(())
}

fn timings_json(read: f64, decode: f64, r: &RestoreTimings) -> Value {
    json!({
        "read": read,
        "decode": decode,
        "upsample": r.upsample_ms,
        "ncb": r.ncb_ms,
        "retained": r.retained_ms,
    })
}

pub fn decompress(a: &DecompressArgs) -> Res<()> {
    let workers = workers_checked(&a.workers)?;
    let t = Instant::now();
    let bytes = read_input(&a.container)?;
    let wall_read = ms(t);
    let t = Instant::now();
    let model = decode_container(&bytes)?;
    let wall_decode = ms(t);
    let used_ncb = model.ncb.is_some() && !a.no_ncb;
    let (grid, timings) = materialise(Loaded::Model(Box::new(model)), !a.no_ncb, workers)?;
    let t = Instant::now();
    let out = raw_grid_bytes(&grid, a.precision);
    write_atomic(&a.output, &out)?;
    let wall_write = ms(t);
    let mut stages = timings_json(wall_read, wall_decode, &timings);
    stages["write"] = json!(wall_write);
    let doc = json!({
        "schema": JSON_SCHEMA,
        "command": "decompress",
        "input": a.container,
        "output": a.output,
        "dims": dims_json(grid.dims()),
        "occupied": grid.occupied(),
        "ncb_applied": used_ncb,
        "bytes": out.len(),
        "timings_ms": stages,
    });
    let text = format!(
        "{} -> {} ({} occupied voxels, refinement {})\n",
        a.container.display(),
        a.output.display(),
        grid.occupied(),
        if used_ncb { "applied" } else { "off" }
    );
    emit(a.json, doc, text);
    Ok(())
}

fn kernel(k: Kernel) -> RayKernel {
    match k {
        Kernel::Combined => RayKernel::Combined,
        Kernel::LaneSplit => RayKernel::LaneSplit,
    }
}

fn stage_table(stages: &[(&str, f64)]) -> String {
    let mut s = format!("{:<10} {:>12}\n", "stage", "wall_ms");
    for (name, v) in stages {
        let _ = writeln!(s, "{name:<10} {v:>12.3}");
    }
    s
}

pub fn render(a: &RenderArgs) -> Res<()> {
    let march = if a.reference {
        MarchConfig::reference(REFERENCE_STEP, a.march.background)
    } else {
        a.march.config()
    };
    march.validate()?;
    let workers = workers_checked(&a.workers)?;
    let direction = match a.direction {
        Some(d) => d,
        None => *heldout_directions().get(a.view).ok_or_else(|| {
            Error::InvalidConfig(format!("view {} outside 0..{HELDOUT_VIEWS}", a.view))
        })?,
    };
    if a.resolution == 0 || !(a.radius > 1.0 && a.radius.is_finite()) {
        return Err(Error::InvalidConfig("resolution must be >= 1 and radius > 1".into()).into());
    }

    let t = Instant::now();
    let bytes = read_input(&a.input)?;
    let wall_read = ms(t);
    let t = Instant::now();
    let loaded = decode_any(&bytes)?;
    let wall_decode = ms(t);
    let (grid, timings) = materialise(loaded, !a.no_ncb, workers)?;

    let cam = Camera::orbit(grid.shape(), direction, a.radius, a.resolution)?;
    let t = Instant::now();
    let opts = RenderOptions {
        workers,
        kernel: kernel(a.kernel),
    };
    let out = render_image_with(&grid, &cam, &march, &opts)?;
    let wall_render = ms(t);
    let t = Instant::now();
    write_atomic(&a.output, &out.image.png_bytes()?)?;
    if let Some(p) = &a.float_dump {
        write_atomic(p, &out.image.float_dump_bytes())?;
    }
    let wall_write = ms(t);

    let mut stages = timings_json(wall_read, wall_decode, &timings);
    stages["render"] = json!(wall_render);
    stages["write"] = json!(wall_write);
    let doc = json!({
        "schema": JSON_SCHEMA,
        "command": "render",
        "input": a.input,
        "output": a.output,
        "float_dump": a.float_dump,
        "resolution": a.resolution,
        "direction": direction,
        "march": {
            "step": march.step,
            "step_multiplier": march.step_multiplier,
            "early_termination": march.early_termination,
            "termination_threshold": march.termination_threshold,
        },
        "stats": out.stats,
        "timings_ms": stages,
    });
    let mut text = stage_table(&[
        ("read", wall_read),
        ("decode", wall_decode),
        ("upsample", timings.upsample_ms),
        ("ncb", timings.ncb_ms),
        ("retained", timings.retained_ms),
        ("render", wall_render),
        ("write", wall_write),
    ]);
    let _ = writeln!(
        text,
        "rays {} samples {} terminated {}",
        out.stats.rays, out.stats.samples, out.stats.terminated_rays
    );
    emit(a.json, doc, text);
    Ok(())
}

struct LadderRow {
    name: &'static str,
    march: MarchConfig,
    kernel: RayKernel,
}

fn ladder(step: f64, threshold: f64, background: [f64; 3]) -> Vec<LadderRow> {
    let base = MarchConfig {
        step,
        step_multiplier: 1.0,
        early_termination: false,
        termination_threshold: threshold,
        background,
    };
    let doubled = MarchConfig {
        step_multiplier: 2.0,
        ..base
    };
    let early = MarchConfig {
        early_termination: true,
        ..doubled
    };
    vec![
        LadderRow {
            name: "baseline",
            march: base,
            kernel: RayKernel::LaneSplit,
        },
        LadderRow {
            name: "+step x2",
            march: doubled,
            kernel: RayKernel::LaneSplit,
        },
        LadderRow {
            name: "+early-term",
            march: early,
            kernel: RayKernel::LaneSplit,
        },
        LadderRow {
            name: "+combined",
            march: early,
            kernel: RayKernel::Combined,
        },
    ]
}

fn render_all(grid: &VoxelGrid, cams: &[Camera], march: &MarchConfig, opts: &RenderOptions) -> Res<(Vec<Image>, u64)> {
    let mut images = Vec::with_capacity(cams.len());
    let mut samples = 0;
    for c in cams {
        let out = render_image_with(grid, c, march, opts)?;
        samples += out.stats.samples;
        images.push(out.image);
    }
    Ok((images, samples))
}

pub fn bench(a: &BenchArgs) -> Res<()> {
    let workers = workers_checked(&a.workers)?;
    if !(1..=HELDOUT_VIEWS).contains(&a.views) || a.repeat == 0 || a.resolution == 0 {
        return Err(Error::InvalidConfig(format!(
            "views must be in 1..={HELDOUT_VIEWS}, repeat and resolution >= 1"
        ))
        .into());
    }
    let rows = ladder(a.step, a.termination_threshold, a.background);
    for r in &rows {
        r.march.validate()?;
    }
    let (grid, _) = materialise(decode_any(&read_input(&a.input)?)?, !a.no_ncb, workers)?;
    let cams = &heldout_cameras(grid.shape(), a.resolution)?[..a.views];
    let reference_opts = RenderOptions {
        workers,
        kernel: RayKernel::Combined,
    };
    let (reference, _) = render_all(
        &grid,
        cams,
        &MarchConfig::reference(REFERENCE_STEP, a.background),
        &reference_opts,
    )?;

    let mut results = Vec::new();
    let mut prev: Option<Vec<Image>> = None;
    let mut base_ms = None;
    for row in &rows {
        let opts = RenderOptions {
            workers,
            kernel: row.kernel,
        };
        let mut best = f64::INFINITY;
        let mut last = None;
        for _ in 0..a.repeat {
            let t = Instant::now();
            let r = render_all(&grid, cams, &row.march, &opts)?;
            best = best.min(ms(t));
            last = Some(r);
        }
        let (images, samples) = last.expect("at least one repeat");
        let psnr = views_psnr(&reference, &images)?;
        let delta = match &prev {
            Some(p) => p
                .iter()
                .zip(&images)
                .map(|(x, y)| x.max_abs_diff(y))
                .try_fold(0.0f64, |m, d| d.map(|d| m.max(d)))?,
            None => 0.0,
        };
        let base = *base_ms.get_or_insert(best);
        results.push((row.name, samples, best, base / best, psnr, delta));
        prev = Some(images);
    }

    let doc = json!({
        "schema": JSON_SCHEMA,
        "command": "bench",
        "input": a.input,
        "resolution": a.resolution,
        "views": a.views,
        "workers": workers,
        "rows": results.iter().map(|&(name, samples, wall, speedup, psnr, delta)| json!({
            "config": name,
            "samples": samples,
            "wall_ms": wall,
            "speedup": speedup,
            "psnr_db": finite_or_null(psnr),
            "max_delta_vs_previous": delta,
        })).collect::<Vec<_>>(),
    });
    let mut text = format!(
        "{:<12} {:>12} {:>10} {:>8} {:>9} {:>10}\n",
        "config", "samples", "wall_ms", "speedup", "psnr_db", "max_delta"
    );
    for (name, samples, wall, speedup, psnr, delta) in &results {
        let _ = writeln!(
            text,
            "{name:<12} {samples:>12} {wall:>10.1} {speedup:>8.2} {psnr:>9.2} {delta:>10.5}"
        );
    }
    emit(a.json, doc, text);
    Ok(())
}

pub fn ablate(a: &AblateArgs) -> Res<()> {
    let spec = SceneSpec::cube(a.scene, a.size, a.occupancy, a.sh_degree, a.seed)?;
    let march = a.march.config();
    march.validate()?;
    let workers = workers_checked(&a.workers)?;
    let base = CompressionConfig::default();
    let mut configs: Vec<AblationConfig> = match a.sweep {
        Sweep::Downsample => downsample_grid(&base),
        Sweep::Retention => retention_sweep(&base),
        Sweep::All => downsample_grid(&base).into_iter().chain(retention_sweep(&base)).collect(),
    };
    if a.ncb_iters > 0 {
        let train = TrainConfig {
            total_iters: a.ncb_iters,
            ..TrainConfig::desk()
        };
        train.validate()?;
        for c in &mut configs {
            c.ncb = Some(train);
        }
    }
    let grid = generate_scene(&spec)?;
    std::fs::create_dir_all(&a.results)?;
    let opts = AblationOptions {
        march,
        resolution: a.resolution,
        workers,
        results_dir: Some(a.results.clone()),
    };
    let records = run_ablation(&spec, &grid, &configs, &opts)?;
    let csv: PathBuf = a.results.join("ablation.csv");

    let doc = json!({
        "schema": JSON_SCHEMA,
        "command": "ablate",
        "scene": spec,
        "csv": csv,
        "records": records.iter().map(|r| json!({
            "config_hash": r.config_hash,
            "config": r.config,
            "metrics": r.metrics.iter().map(|(k, v)| (k.clone(), finite_or_null(*v))).collect::<serde_json::Map<_, _>>(),
        })).collect::<Vec<_>>(),
    });
    let mut text = format!(
        "{:<9} {:>5} {:>5} {:>7} {:>9} {:>10} {:>8}\n",
        "config", "sc", "sd", "retain", "psnr_db", "bytes", "ratio"
    );
    for r in &records {
        let _ = writeln!(
            text,
            "{:<9} {:>5} {:>5} {:>7.3} {:>9.2} {:>10} {:>8.2}",
            r.config_hash,
            r.config.scale_color.to_string(),
            r.config.scale_density.to_string(),
            r.config.retain_fraction,
            r.metric("psnr_db"),
            r.metric("container_bytes"),
            r.metric("ratio")
        );
    }
    let _ = writeln!(text, "table written to {}", csv.display());
    emit(a.json, doc, text);
    Ok(())
}

pub fn inspect(a: &InspectArgs) -> Res<()> {
    let bytes = read_input(&a.container)?;
    let header = read_header(&bytes)?;
    let verified = decode_container(&bytes).map(|_| ());

    let sections: Vec<Value> = header
        .sections
        .iter()
        .map(|s| {
            json!({
                "id": s.id,
                "name": s.name(),
                "flags": s.flags,
                "offset": s.offset,
                "stored_bytes": s.compressed_len,
                "raw_bytes": s.raw_len,
                "crc32": format!("{:08x}", s.checksum),
            })
        })
        .collect();
    let d = header.original_dims;
    let doc = json!({
        "schema": JSON_SCHEMA,
        "command": "inspect",
        "input": a.container,
        "version": header.version,
        "dims": dims_json(d),
        "scale_color": header.scale_color.to_string(),
        "scale_density": header.scale_density.to_string(),
        "precision": header.precision().name(),
        "has_ncb": header.has_ncb(),
        "retain_count": header.retain_count,
        "header_bytes": header.byte_len(),
        "total_bytes": bytes.len(),
        "sections": sections,
        "verified": verified.is_ok(),
    });
    let mut text = String::new();
    let _ = writeln!(text, "version        {}", header.version);
    let _ = writeln!(text, "dims           {}x{}x{} c={}", d.h, d.w, d.k, d.c);
    let _ = writeln!(text, "scale_color    {}", header.scale_color);
    let _ = writeln!(text, "scale_density  {}", header.scale_density);
    let _ = writeln!(text, "precision      {}", header.precision().name());
    let _ = writeln!(text, "has_ncb        {}", header.has_ncb());
    let _ = writeln!(text, "retain_count   {}", header.retain_count);
    let _ = writeln!(text, "header_bytes   {}", header.byte_len());
    let _ = writeln!(text, "total_bytes    {}", bytes.len());
    let _ = writeln!(
        text,
        "{:>3} {:<14} {:>5} {:>10} {:>12} {:>12} {:>9}",
        "id", "name", "flags", "offset", "stored", "raw", "crc32"
    );
    for s in &header.sections {
        let _ = writeln!(
            text,
            "{:>3} {:<14} {:>5} {:>10} {:>12} {:>12} {:>9}",
            s.id,
            s.name(),
            s.flags,
            s.offset,
            s.compressed_len,
            s.raw_len,
            format!("{:08x}", s.checksum)
        );
    }
    let _ = writeln!(text, "verified       {}", verified.is_ok());
    emit(a.json, doc, text);
    verified.map_err(Into::into)
}
