use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{Shape, VoxelGrid};
use crate::render::{march_ray, worker_pool, Camera, MarchConfig, Ray};

/// Accumulated rendering contribution of every occupied voxel.
///
/// `scores` is aligned with the grid's mask rank order. Sample weight that
/// lands on unoccupied stencil corners is kept in `unassigned`, so
/// `sum(scores) + unassigned == total_weight` where `total_weight` is the sum
/// of `T_i * alpha_i` over all probe samples.
#[derive(Clone, Debug, PartialEq)]
pub struct ImportanceMap {
    shape: Shape,
    scores: Vec<f64>,
    unassigned: f64,
    total_weight: f64,
}

impl ImportanceMap {
    pub fn new(shape: Shape, scores: Vec<f64>, unassigned: f64, total_weight: f64) -> Result<Self> {
        let bad = |v: f64| !(v.is_finite() && v >= 0.0);
        if scores.iter().copied().any(bad) || bad(unassigned) || bad(total_weight) {
            return Err(Error::NonFiniteInput("importance scores".into()));
        }
        Ok(Self {
            shape,
            scores,
            unassigned,
            total_weight,
        })
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn unassigned(&self) -> f64 {
        self.unassigned
    }

    pub fn total_weight(&self) -> f64 {
        self.total_weight
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// Slots ordered by descending score, ties by ascending slot (which is
    /// ascending linear index).
    pub fn ranking(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.scores.len()).collect();
        order.sort_by(|&a, &b| self.scores[b].total_cmp(&self.scores[a]).then(a.cmp(&b)));
        order
    }
}

/// `ceil(f * n)` that ignores floating-point noise just above an integer.
pub fn retained_count(fraction: f64, n: usize) -> usize {
    let x = fraction * n as f64;
    let r = x.round();
    let k = if (x - r).abs() < 1e-9 { r } else { x.ceil() };
    (k.max(0.0) as usize).min(n)
}

fn accumulate_ray(
    grid: &VoxelGrid,
    ray: &Ray,
    cfg: &MarchConfig,
    scores: &mut [f64],
    unassigned: &mut f64,
) -> f64 {
    let mask = grid.mask();
    let mut total = 0.0;
    march_ray(grid, ray, cfg, |st, t, alpha| {
        let w = t * alpha;
        total += w;
        for (&idx, &wt) in st.corners.iter().zip(&st.weights) {
            if wt == 0.0 {
                continue;
            }
            match mask.rank(idx) {
                Some(slot) => scores[slot] += wt * w,
                None => *unassigned += wt * w,
            }
        }
    });
    total
}

fn check_grid(grid: &VoxelGrid, cfg: &MarchConfig) -> Result<()> {
    cfg.validate()?;
    if grid.occupied() == 0 {
        return Err(Error::EmptyGrid);
    }
    Ok(())
}

/// Importance from an explicit list of rays, marched in order.
pub fn compute_importance_for_rays(
    grid: &VoxelGrid,
    rays: &[Ray],
    cfg: &MarchConfig,
) -> Result<ImportanceMap> {
    check_grid(grid, cfg)?;
    let mut scores = vec![0.0; grid.occupied()];
    let mut unassigned = 0.0;
    let mut total = 0.0;
    for ray in rays {
        total += accumulate_ray(grid, ray, cfg, &mut scores, &mut unassigned);
    }
    ImportanceMap::new(grid.shape(), scores, unassigned, total)
}

/// Importance from every pixel ray of every camera. Cameras are processed in
/// parallel into private buffers that are summed in camera order, so the
/// result does not depend on `workers`.
pub fn compute_importance(
    grid: &VoxelGrid,
    cameras: &[Camera],
    cfg: &MarchConfig,
    workers: usize,
) -> Result<ImportanceMap> {
    if cameras.is_empty() {
        return Err(Error::NoCameras);
    }
    check_grid(grid, cfg)?;
    let n = grid.occupied();
    let pool = worker_pool(workers)?;
    let shards: Vec<(Vec<f64>, f64, f64)> = pool.install(|| {
        cameras
            .par_iter()
            .map(|cam| {
                let mut scores = vec![0.0; n];
                let mut unassigned = 0.0;
                let mut total = 0.0;
                for v in 0..cam.height {
                    for u in 0..cam.width {
                        let ray = cam.pixel_ray(u, v);
                        total += accumulate_ray(grid, &ray, cfg, &mut scores, &mut unassigned);
                    }
                }
                (scores, unassigned, total)
            })
            .collect()
    });
    let mut scores = vec![0.0; n];
    let mut unassigned = 0.0;
    let mut total = 0.0;
    for (s, u, t) in shards {
        for (acc, v) in scores.iter_mut().zip(s) {
            *acc += v;
        }
        unassigned += u;
        total += t;
    }
    ImportanceMap::new(grid.shape(), scores, unassigned, total)
}

/// Share of the total score held by the top `ceil(f * n)` voxels, for each
/// fraction `f`. An all-zero map yields zero shares.
pub fn importance_concentration(map: &ImportanceMap, fractions: &[f64]) -> Result<Vec<f64>> {
    let order = map.ranking();
    let mut prefix = Vec::with_capacity(order.len() + 1);
    prefix.push(0.0);
    let mut acc = 0.0;
    for &slot in &order {
        acc += map.scores[slot];
        prefix.push(acc);
    }
    let total = acc;
    fractions
        .iter()
        .map(|&f| {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::InvalidConfig(format!("fraction {f} outside [0, 1]")));
            }
            let k = retained_count(f, order.len());
            Ok(if total > 0.0 { prefix[k] / total } else { 0.0 })
        })
        .collect()
}

/// Probe directions spread evenly over the sphere (golden-angle spiral).
pub fn fibonacci_directions(n: usize) -> Vec<[f64; 3]> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - z * z).sqrt();
            let phi = golden * i as f64;
            [r * phi.cos(), r * phi.sin(), z]
        })
        .collect()
}

pub const PROBE_CAMERAS: usize = 20;
pub const PROBE_RADIUS: f64 = 2.5;

/// The default probe ring: 20 cameras at 2.5 half-diagonals from the grid
/// centre with square images sized so the total ray count is close to
/// `rays`.
pub fn probe_cameras(shape: Shape, rays: u64) -> Result<Vec<Camera>> {
    let per_cam = (rays as f64 / PROBE_CAMERAS as f64).max(1.0);
    let res = per_cam.sqrt().round().max(1.0) as usize;
    fibonacci_directions(PROBE_CAMERAS)
        .into_iter()
        .map(|d| Camera::orbit(shape, d, PROBE_RADIUS, res))
        .collect()
}
