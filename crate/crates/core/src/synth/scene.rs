use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::{GridDims, OccupancyMask, Shape, VoxelGrid};
use crate::render::SH_C0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SceneKind {
    Slab,
    SphereShell,
    Checker,
    PerlinCloud,
}

impl SceneKind {
    pub const ALL: [SceneKind; 4] = [
        SceneKind::Slab,
        SceneKind::SphereShell,
        SceneKind::Checker,
        SceneKind::PerlinCloud,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SceneKind::Slab => "slab",
            SceneKind::SphereShell => "sphere-shell",
            SceneKind::Checker => "checker",
            SceneKind::PerlinCloud => "perlin-cloud",
        }
    }
}

impl fmt::Display for SceneKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SceneKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.to_ascii_lowercase().replace('_', "-");
        Self::ALL
            .into_iter()
            .find(|k| k.name() == norm)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown scene kind {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SceneSpec {
    pub kind: SceneKind,
    pub dims: GridDims,
    pub occupancy_target: f64,
    pub sh_degree: u8,
    pub seed: u64,
}

/// Side of a checker cell in voxels.
pub const CHECKER_CELL: usize = 8;
/// Density inside the slab band.
pub const SLAB_SIGMA: f32 = 4.0;

const PALETTE: [[f64; 3]; 2] = [[0.85, 0.3, 0.2], [0.2, 0.4, 0.85]];

impl SceneSpec {
    /// Cubic scene of side `n` whose colour channels match `sh_degree`.
    pub fn cube(kind: SceneKind, n: usize, occupancy_target: f64, sh_degree: u8, seed: u64) -> Result<Self> {
        let c = 3 * (sh_degree as usize + 1).pow(2);
        let spec = Self {
            kind,
            dims: GridDims::new(n, n, n, c)?,
            occupancy_target,
            sh_degree,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sh_degree > 2 {
            return Err(Error::InvalidConfig(format!("SH degree {} above 2", self.sh_degree)));
        }
        let c = 3 * (self.sh_degree as usize + 1).pow(2);
        if self.dims.c != c {
            return Err(Error::InvalidConfig(format!(
                "degree {} needs {c} colour channels, dims have {}",
                self.sh_degree, self.dims.c
            )));
        }
        if !(self.occupancy_target > 0.0 && self.occupancy_target <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "occupancy target {} outside (0, 1]",
                self.occupancy_target
            )));
        }
        Ok(())
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Lattice value noise in `[-1, 1]` with smoothstep interpolation, summed
/// over octaves.
#[derive(Clone, Copy, Debug)]
pub struct ValueNoise {
    seed: u64,
    period: f64,
    octaves: u32,
}

impl ValueNoise {
    pub fn new(seed: u64, period: f64, octaves: u32) -> Self {
        Self { seed, period, octaves }
    }

    fn lattice(&self, octave: u32, p: [i64; 3]) -> f64 {
        let mut h = splitmix(self.seed ^ (octave as u64).wrapping_mul(0x1f3d_5b79));
        for v in p {
            h = splitmix(h ^ v as u64);
        }
        (h >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
    }

    fn octave(&self, octave: u32, p: [f64; 3]) -> f64 {
        let base = p.map(|v| v.floor());
        let f = [0, 1, 2].map(|a| {
            let t = p[a] - base[a];
            t * t * (3.0 - 2.0 * t)
        });
        let b = base.map(|v| v as i64);
        let mut acc = 0.0;
        for j in 0..8 {
            let d = [(j >> 2) & 1, (j >> 1) & 1, j & 1];
            let mut w = 1.0;
            for a in 0..3 {
                w *= if d[a] == 1 { f[a] } else { 1.0 - f[a] };
            }
            acc += w * self.lattice(octave, [b[0] + d[0], b[1] + d[1], b[2] + d[2]]);
        }
        acc
    }

    /// Normalised so the result stays in `[-1, 1]`.
    pub fn sample(&self, p: [f64; 3]) -> f64 {
        let (mut sum, mut amp, mut norm, mut freq) = (0.0, 1.0, 0.0, 1.0 / self.period);
        for o in 0..self.octaves {
            sum += amp * self.octave(o, p.map(|v| v * freq));
            norm += amp;
            amp *= 0.5;
            freq *= 2.0;
        }
        sum / norm
    }
}

/// Writes SH coefficients whose DC term yields `rgb` (clamped to
/// `[0.2, 0.8]`) and whose higher bands are small `detail` values, so the
/// evaluated colour stays inside `[0, 1]` before clamping.
fn write_coeffs(rgb: [f64; 3], nb: usize, detail: &mut impl FnMut() -> f64, out: &mut [f32]) {
    for ch in 0..3 {
        let base = rgb[ch].clamp(0.2, 0.8);
        out[ch * nb] = ((base - 0.5) / SH_C0) as f32;
        for j in 1..nb {
            out[ch * nb + j] = (0.03 * detail().clamp(-1.0, 1.0)) as f32;
        }
    }
}

/// The `count` voxels with the smallest `key`, ties by index.
fn select_smallest(shape: Shape, key: &[f64], count: usize) -> OccupancyMask {
    let mut order: Vec<usize> = (0..key.len()).collect();
    order.sort_by(|&a, &b| key[a].total_cmp(&key[b]).then(a.cmp(&b)));
    let mut keep = vec![false; key.len()];
    for &i in order.iter().take(count) {
        keep[i] = true;
    }
    OccupancyMask::from_fn(shape, |i| keep[i])
}

fn target_count(spec: &SceneSpec) -> usize {
    let n = spec.dims.voxel_count();
    ((spec.occupancy_target * n as f64).round() as usize).clamp(1, n)
}

/// Distance of every voxel from the shell surface of radius `0.35 min(h, w, k)`.
fn shell_distance(shape: Shape) -> Vec<f64> {
    let c = [
        (shape.h - 1) as f64 / 2.0,
        (shape.w - 1) as f64 / 2.0,
        (shape.k - 1) as f64 / 2.0,
    ];
    let r = 0.35 * shape.h.min(shape.w).min(shape.k) as f64;
    (0..shape.voxel_count())
        .map(|i| {
            let p = shape.coords(i);
            let d2: f64 = (0..3).map(|a| (p[a] as f64 - c[a]).powi(2)).sum();
            (d2.sqrt() - r).abs()
        })
        .collect()
}

fn pos(shape: Shape, i: usize) -> [f64; 3] {
    shape.coords(i).map(|v| v as f64)
}

/// Builds the scene described by `spec`. Identical specs give identical
/// grids.
pub fn generate_scene(spec: &SceneSpec) -> Result<VoxelGrid> {
    spec.validate()?;
    let dims = spec.dims;
    let shape = dims.shape();
    let c = dims.c;
    let nb = c / 3;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut detail = move || rng.random_range(-1.0..1.0f64);
    let noise = |salt: u64, period: f64| ValueNoise::new(splitmix(spec.seed ^ salt), period, 3);

    let (mask, density_of, color_of): (OccupancyMask, Box<dyn Fn(usize) -> f64>, Box<dyn Fn(usize) -> [f64; 3]>) =
        match spec.kind {
            SceneKind::Slab => {
                let k = shape.k;
                let band = ((spec.occupancy_target * k as f64).round() as usize)
                    .saturating_sub(2)
                    .clamp(1, k.saturating_sub(2).max(1));
                let z0 = (k - band) / 2;
                let (lo, hi) = (z0.saturating_sub(1), (z0 + band).min(k - 1));
                let mask = OccupancyMask::from_fn(shape, |i| (lo..=hi).contains(&shape.coords(i)[2]));
                let density = move |i: usize| {
                    let z = shape.coords(i)[2];
                    if (z0..z0 + band).contains(&z) {
                        SLAB_SIGMA as f64
                    } else {
                        0.0
                    }
                };
                (mask, Box::new(density), Box::new(|_| [0.7, 0.45, 0.3]))
            }
            SceneKind::SphereShell | SceneKind::Checker => {
                let dist = shell_distance(shape);
                let mask = select_smallest(shape, &dist, target_count(spec));
                let (nd, nr, ng, nbl) = (noise(1, 12.0), noise(2, 16.0), noise(3, 16.0), noise(4, 16.0));
                let density = move |i: usize| 3.0 + 1.5 * nd.sample(pos(shape, i));
                let color: Box<dyn Fn(usize) -> [f64; 3]> = if spec.kind == SceneKind::Checker {
                    Box::new(move |i| {
                        let p = shape.coords(i);
                        let cell = (p[0] / CHECKER_CELL + p[1] / CHECKER_CELL + p[2] / CHECKER_CELL) % 2;
                        PALETTE[cell]
                    })
                } else {
                    Box::new(move |i| {
                        let p = pos(shape, i);
                        [nr, ng, nbl].map(|n| 0.5 + 0.3 * n.sample(p))
                    })
                };
                (mask, Box::new(density), color)
            }
            SceneKind::PerlinCloud => {
                let field = noise(5, 16.0);
                let key: Vec<f64> = (0..shape.voxel_count()).map(|i| -field.sample(pos(shape, i))).collect();
                let mask = select_smallest(shape, &key, target_count(spec));
                let thresh = mask.iter_ones().map(|i| -key[i]).fold(f64::INFINITY, f64::min);
                let (nr, ng, nbl) = (noise(6, 20.0), noise(7, 20.0), noise(8, 20.0));
                let density = move |i: usize| 1.0 + 12.0 * (field.sample(pos(shape, i)) - thresh).max(0.0);
                let color = move |i: usize| {
                    let p = pos(shape, i);
                    [nr, ng, nbl].map(|n| 0.5 + 0.3 * n.sample(p))
                };
                (mask, Box::new(density), Box::new(color))
            }
        };

    let n = mask.count();
    let mut density = Vec::with_capacity(n);
    let mut color = vec![0.0f32; n * c];
    // high-frequency detail: density jitter and colour noise per voxel
    let (sigma_jitter, color_jitter) = match spec.kind {
        SceneKind::Slab => (0.0, 0.0),
        SceneKind::Checker => (0.2, 0.02),
        _ => (0.4, 0.08),
    };
    for (slot, i) in mask.iter_ones().enumerate() {
        let s = density_of(i) + sigma_jitter * detail();
        density.push(s.max(0.0) as f32);
        let base = color_of(i).map(|v| v + color_jitter * detail());
        let mut hf = || if spec.kind == SceneKind::Slab { 0.0 } else { detail() };
        write_coeffs(base, nb, &mut hf, &mut color[slot * c..(slot + 1) * c]);
    }
    VoxelGrid::new(dims, mask, density, color)
}
