use rayon::prelude::*;

use super::camera::{Camera, Ray};
use super::image::Image;
use super::sh::{activate, basis_len, raw_color, sh_basis};
use crate::error::{Error, Result};
use crate::grid::{Stencil, VoxelGrid};

/// Sampling policy of the ray marcher.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MarchConfig {
    /// Base step in voxel units.
    pub step: f64,
    /// The effective step is `step * step_multiplier`.
    pub step_multiplier: f64,
    pub early_termination: bool,
    pub termination_threshold: f64,
    pub background: [f64; 3],
}

impl Default for MarchConfig {
    fn default() -> Self {
        Self {
            step: 0.5,
            step_multiplier: 2.0,
            early_termination: true,
            termination_threshold: 0.01,
            background: [0.0; 3],
        }
    }
}

impl MarchConfig {
    /// Oracle settings: fine step, no multiplier, no early termination.
    pub fn reference(fine_step: f64, background: [f64; 3]) -> Self {
        Self {
            step: fine_step,
            step_multiplier: 1.0,
            early_termination: false,
            termination_threshold: 0.0,
            background,
        }
    }

    pub fn with_background(mut self, background: [f64; 3]) -> Self {
        self.background = background;
        self
    }

    /// Distance between consecutive samples.
    #[inline]
    pub fn delta(&self) -> f64 {
        self.step * self.step_multiplier
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::InvalidConfig(format!("step {} must be > 0", self.step)));
        }
        if !(self.step_multiplier > 0.0 && self.step_multiplier.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "step multiplier {} must be > 0",
                self.step_multiplier
            )));
        }
        if !(0.0..1.0).contains(&self.termination_threshold) {
            return Err(Error::InvalidConfig(format!(
                "termination threshold {} outside [0, 1)",
                self.termination_threshold
            )));
        }
        if self.background.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput("background colour".into()));
        }
        Ok(())
    }
}

/// How a ray's colour coefficients are fetched.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum RayKernel {
    /// One task walks the ray and fetches all coefficients of a voxel in a
    /// single strided pass.
    #[default]
    Combined,
    /// Every coefficient lane walks the ray on its own, recomputing the
    /// sample position, stencil and density.
    LaneSplit,
}

/// Compositing state after a sample.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SampleState {
    pub t_accum: f64,
    pub color_accum: [f64; 3],
    pub i: u64,
}

/// Per-ray outcome of a march.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MarchSummary {
    /// Transmittance left after the last sample.
    pub transmittance: f64,
    pub samples: u64,
    pub terminated: bool,
}

/// Walks `ray` through the grid, calling `visit(stencil, T_i, alpha_i)` for
/// every sample with non-zero opacity. Negative interpolated densities are
/// treated as empty space.
#[inline]
pub fn march_ray<F>(grid: &VoxelGrid, ray: &Ray, cfg: &MarchConfig, mut visit: F) -> MarchSummary
where
    F: FnMut(&Stencil, f64, f64),
{
    let mut out = MarchSummary {
        transmittance: 1.0,
        samples: 0,
        terminated: false,
    };
    let shape = grid.shape();
    let Some((t0, t1)) = ray.clip_to_grid(shape) else {
        return out;
    };
    let delta = cfg.delta();
    let density = grid.density_volume();
    let mut i = 0u64;
    loop {
        let t = t0 + (i as f64 + 0.5) * delta;
        if t >= t1 {
            break;
        }
        i += 1;
        out.samples += 1;
        let st = Stencil::at(&shape, ray.at(t));
        let sigma = density.sample_channel(&st, 0);
        if sigma <= 0.0 {
            continue;
        }
        let alpha = 1.0 - (-sigma * delta).exp();
        visit(&st, out.transmittance, alpha);
        out.transmittance *= 1.0 - alpha;
        if cfg.early_termination && out.transmittance < cfg.termination_threshold {
            out.terminated = true;
            break;
        }
    }
    out
}

/// Colour of one ray plus its march statistics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RayResult {
    pub color: [f64; 3],
    pub samples: u64,
    pub terminated: bool,
    pub transmittance: f64,
}

pub fn render_ray(grid: &VoxelGrid, ray: &Ray, cfg: &MarchConfig) -> Result<RayResult> {
    let nb = basis_len(grid.dims().c)?;
    Ok(render_ray_combined(grid, ray, cfg, nb))
}

/// Same as [`render_ray`] but also reports the state after every
/// contributing sample.
pub fn render_ray_traced(
    grid: &VoxelGrid,
    ray: &Ray,
    cfg: &MarchConfig,
) -> Result<(RayResult, Vec<SampleState>)> {
    let nb = basis_len(grid.dims().c)?;
    let basis = sh_basis(ray.direction);
    let mut coeffs = vec![0.0; grid.dims().c];
    let mut acc = [0.0; 3];
    let mut trace = Vec::new();
    let summary = march_ray(grid, ray, cfg, |st, t, alpha| {
        grid.color_volume().sample_into(st, &mut coeffs);
        let rgb = activate(raw_color(&coeffs, &basis, nb));
        let w = t * alpha;
        for ch in 0..3 {
            acc[ch] += w * rgb[ch];
        }
        trace.push(SampleState {
            t_accum: t * (1.0 - alpha),
            color_accum: acc,
            i: trace.len() as u64,
        });
    });
    Ok((finish(acc, summary, cfg), trace))
}

#[inline]
fn finish(acc: [f64; 3], s: MarchSummary, cfg: &MarchConfig) -> RayResult {
    let mut color = acc;
    for ch in 0..3 {
        color[ch] += s.transmittance * cfg.background[ch];
    }
    RayResult {
        color,
        samples: s.samples,
        terminated: s.terminated,
        transmittance: s.transmittance,
    }
}

#[inline]
fn render_ray_combined(grid: &VoxelGrid, ray: &Ray, cfg: &MarchConfig, nb: usize) -> RayResult {
    let basis = sh_basis(ray.direction);
    // supported layouts have at most 27 coefficients
    let mut buf = [0.0f64; 27];
    let coeffs = &mut buf[..grid.dims().c];
    let color = grid.color_volume();
    let mut acc = [0.0; 3];
    let summary = march_ray(grid, ray, cfg, |st, t, alpha| {
        color.sample_into(st, coeffs);
        let rgb = activate(raw_color(coeffs, &basis, nb));
        let w = t * alpha;
        for ch in 0..3 {
            acc[ch] += w * rgb[ch];
        }
    });
    finish(acc, summary, cfg)
}

/// Lane-per-coefficient evaluation. Produces the same bits as the combined
/// kernel; every lane repeats the positional work of the march.
fn render_ray_lanes(grid: &VoxelGrid, ray: &Ray, cfg: &MarchConfig, nb: usize) -> RayResult {
    let shape = grid.shape();
    let c = grid.dims().c;
    let basis = sh_basis(ray.direction);
    let density = grid.density_volume();
    let color = grid.color_volume();
    let mut s = MarchSummary {
        transmittance: 1.0,
        samples: 0,
        terminated: false,
    };
    let mut acc = [0.0; 3];
    let Some((t0, t1)) = ray.clip_to_grid(shape) else {
        return finish(acc, s, cfg);
    };
    let delta = cfg.delta();
    let mut coeffs = vec![0.0; c];
    let mut i = 0u64;
    loop {
        let t = t0 + (i as f64 + 0.5) * delta;
        if t >= t1 {
            break;
        }
        i += 1;
        s.samples += 1;
        let st = Stencil::at(&shape, ray.at(t));
        let sigma = density.sample_channel(&st, 0);
        if sigma <= 0.0 {
            continue;
        }
        let alpha = 1.0 - (-sigma * delta).exp();
        for (lane, out) in coeffs.iter_mut().enumerate() {
            let lane_st = Stencil::at(&shape, ray.at(t));
            if density.sample_channel(&lane_st, 0) <= 0.0 {
                continue;
            }
            *out = color.sample_channel(&lane_st, lane);
        }
        let rgb = activate(raw_color(&coeffs, &basis, nb));
        let w = s.transmittance * alpha;
        for ch in 0..3 {
            acc[ch] += w * rgb[ch];
        }
        s.transmittance *= 1.0 - alpha;
        if cfg.early_termination && s.transmittance < cfg.termination_threshold {
            s.terminated = true;
            break;
        }
    }
    finish(acc, s, cfg)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize)]
pub struct RenderStats {
    pub rays: u64,
    pub samples: u64,
    pub terminated_rays: u64,
}

impl RenderStats {
    fn add(self, o: Self) -> Self {
        Self {
            rays: self.rays + o.rays,
            samples: self.samples + o.samples,
            terminated_rays: self.terminated_rays + o.terminated_rays,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RenderOutput {
    pub image: Image,
    pub stats: RenderStats,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RenderOptions {
    pub workers: usize,
    pub kernel: RayKernel,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self {
            workers: 1,
            kernel: RayKernel::Combined,
        }
    }
}

pub fn render_image(
    grid: &VoxelGrid,
    camera: &Camera,
    cfg: &MarchConfig,
    workers: usize,
) -> Result<RenderOutput> {
    render_image_with(
        grid,
        camera,
        cfg,
        &RenderOptions {
            workers,
            kernel: RayKernel::Combined,
        },
    )
}

/// Renders every pixel, one task per ray, rows distributed over `workers`
/// threads. The result does not depend on the worker count.
pub fn render_image_with(
    grid: &VoxelGrid,
    camera: &Camera,
    cfg: &MarchConfig,
    opts: &RenderOptions,
) -> Result<RenderOutput> {
    cfg.validate()?;
    let nb = basis_len(grid.dims().c)?;
    let pool = worker_pool(opts.workers)?;
    let (w, h) = (camera.width, camera.height);
    let mut data = vec![0.0f32; w * h * 3];
    let stats = pool.install(|| {
        data.par_chunks_mut(w * 3)
            .enumerate()
            .map(|(v, row)| {
                let mut st = RenderStats::default();
                for u in 0..w {
                    let ray = camera.pixel_ray(u, v);
                    let r = match opts.kernel {
                        RayKernel::Combined => render_ray_combined(grid, &ray, cfg, nb),
                        RayKernel::LaneSplit => render_ray_lanes(grid, &ray, cfg, nb),
                    };
                    for ch in 0..3 {
                        row[u * 3 + ch] = r.color[ch] as f32;
                    }
                    st.rays += 1;
                    st.samples += r.samples;
                    st.terminated_rays += r.terminated as u64;
                }
                st
            })
            .reduce(RenderStats::default, RenderStats::add)
    });
    Ok(RenderOutput {
        image: Image::from_raw(w, h, data)?,
        stats,
    })
}

/// Fine-step oracle rendering without early termination.
pub fn render_reference(
    grid: &VoxelGrid,
    camera: &Camera,
    fine_step: f64,
    background: [f64; 3],
    workers: usize,
) -> Result<Image> {
    let cfg = MarchConfig::reference(fine_step, background);
    Ok(render_image(grid, camera, &cfg, workers)?.image)
}

pub(crate) fn worker_pool(workers: usize) -> Result<rayon::ThreadPool> {
    if workers == 0 {
        return Err(Error::InvalidConfig("worker count must be >= 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))
}
