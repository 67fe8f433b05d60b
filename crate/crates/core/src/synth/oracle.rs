use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::compress::ImportanceMap;
use crate::error::{Error, Result};
use crate::grid::{GridDims, OccupancyMask, VoxelGrid};
use crate::render::{grid_center, grid_half_diagonal, MarchConfig, Ray};

/// Largest grid (in voxels) the brute-force oracle accepts.
pub const ORACLE_MAX_VOXELS: usize = 16 * 16 * 16;

/// Tent weight of lattice point `l` at coordinate `x`: `max(0, 1 - |x - l|)`,
/// written as the smaller of the two one-sided ramps.
fn tent(x: f64, l: f64) -> f64 {
    (x - (l - 1.0)).min((l + 1.0) - x).max(0.0)
}

/// Ray parameter interval inside `[0, n-1]^3`, by slab tests.
fn clip(ray: &Ray, hi: [f64; 3]) -> Option<(f64, f64)> {
    let (mut lo_t, mut hi_t) = (ray.t_near, ray.t_far);
    for a in 0..3 {
        let (o, d) = (ray.origin[a], ray.direction[a]);
        if d == 0.0 {
            if !(0.0..=hi[a]).contains(&o) {
                return None;
            }
        } else {
            let t_a = (0.0 - o) / d;
            let t_b = (hi[a] - o) / d;
            lo_t = lo_t.max(t_a.min(t_b));
            hi_t = hi_t.min(t_a.max(t_b));
        }
    }
    (lo_t < hi_t).then_some((lo_t, hi_t))
}

/// Brute-force importance: materialises every sample of every ray and tests
/// each voxel of the grid for membership in the sample's interpolation
/// support. Scores of unoccupied voxels are summed into `unassigned`.
pub fn oracle_importance(grid: &VoxelGrid, rays: &[Ray], cfg: &MarchConfig) -> Result<ImportanceMap> {
    cfg.validate()?;
    let shape = grid.shape();
    let n = shape.voxel_count();
    if n > ORACLE_MAX_VOXELS {
        return Err(Error::GridTooLargeForOracle {
            voxels: n,
            max: ORACLE_MAX_VOXELS,
        });
    }
    let mut sigma_dense = vec![0.0f64; n];
    for (slot, i) in grid.mask().iter_ones().enumerate() {
        sigma_dense[i] = grid.density()[slot] as f64;
    }
    let hi = [
        (shape.h - 1) as f64,
        (shape.w - 1) as f64,
        (shape.k - 1) as f64,
    ];
    let coords: Vec<[f64; 3]> = (0..n).map(|i| shape.coords(i).map(|v| v as f64)).collect();
    let delta = cfg.step * cfg.step_multiplier;
    let mut dense = vec![0.0f64; n];
    let mut total = 0.0;
    let mut weights = vec![0.0f64; n];
    for ray in rays {
        let Some((t0, t1)) = clip(ray, hi) else {
            continue;
        };
        let samples: Vec<[f64; 3]> = (0..)
            .map(|i| t0 + (i as f64 + 0.5) * delta)
            .take_while(|&t| t < t1)
            .map(|t| {
                let p = [0, 1, 2].map(|a| ray.origin[a] + t * ray.direction[a]);
                [0, 1, 2].map(|a| p[a].clamp(0.0, hi[a]))
            })
            .collect();
        let mut transmittance = 1.0;
        for x in samples {
            let mut sigma = 0.0;
            for (l, c) in coords.iter().enumerate() {
                let w = tent(x[0], c[0]) * tent(x[1], c[1]) * tent(x[2], c[2]);
                weights[l] = w;
                sigma += w * sigma_dense[l];
            }
            if sigma <= 0.0 {
                continue;
            }
            let alpha = 1.0 - (-sigma * delta).exp();
            let contrib = transmittance * alpha;
            total += contrib;
            for l in 0..n {
                if weights[l] > 0.0 {
                    dense[l] += weights[l] * contrib;
                }
            }
            transmittance *= 1.0 - alpha;
            if cfg.early_termination && transmittance < cfg.termination_threshold {
                break;
            }
        }
    }
    let mask = grid.mask();
    let scores = mask.iter_ones().map(|i| dense[i]).collect();
    let unassigned = (0..n).filter(|&i| !mask.get(i)).map(|i| dense[i]).sum();
    ImportanceMap::new(shape, scores, unassigned, total)
}

/// Random grid with at most 16 voxels per side, for oracle comparisons.
pub fn random_scene(seed: u64) -> VoxelGrid {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut side = || rng.random_range(3..=16usize);
    let (h, w, k) = (side(), side(), side());
    let c = [3, 12, 27][rng.random_range(0..3)];
    let dims = GridDims::new(h, w, k, c).expect("valid random dims");
    let fill = rng.random_range(0.1..0.9);
    let mask = OccupancyMask::from_fn(dims.shape(), |_| rng.random_bool(fill));
    let count = mask.count();
    let density = (0..count).map(|_| rng.random_range(0.0..3.0f32)).collect();
    let color = (0..count * c).map(|_| rng.random_range(-1.0..1.0f32)).collect();
    VoxelGrid::new(dims, mask, density, color).expect("consistent random grid")
}

/// Rays from a sphere around the grid aimed at jittered points inside it.
pub fn random_probe_rays(grid: &VoxelGrid, count: usize, seed: u64) -> Vec<Ray> {
    let shape = grid.shape();
    let center = grid_center(shape);
    let radius = 2.0 * grid_half_diagonal(shape);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hi = shape.as_array().map(|v| (v - 1) as f64);
    (0..count)
        .map(|_| {
            let z: f64 = rng.random_range(-1.0..1.0);
            let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let r = (1.0 - z * z).sqrt();
            let origin = [
                center[0] + radius * r * phi.cos(),
                center[1] + radius * r * phi.sin(),
                center[2] + radius * z,
            ];
            let target = [0, 1, 2].map(|a| rng.random_range(0.0..=hi[a]));
            let d = [0, 1, 2].map(|a| target[a] - origin[a]);
            let len = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
            Ray::new(origin, d.map(|v| v / len), 0.0, f64::INFINITY).expect("finite probe ray")
        })
        .collect()
}
