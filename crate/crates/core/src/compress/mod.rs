//! Non-uniform compression: importance scoring, top-p voxel retention,
//! separate density and colour downsampling, and the inverse restoration.

mod importance;

pub use importance::{
    compute_importance, compute_importance_for_rays, fibonacci_directions,
    importance_concentration, probe_cameras, retained_count, ImportanceMap, PROBE_CAMERAS,
    PROBE_RADIUS,
};

use std::time::Instant;

use crate::error::{Error, Result};
use crate::grid::{
    coarsen_mask, sparsify, trilinear_resize, upsample_to, GridDims, OccupancyMask, Scale,
    SparseVolume, ValuePrecision, VoxelGrid,
};
use crate::ncb::{refine_grid, NcbNetwork};
use crate::render::{Camera, MarchConfig};

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CompressionConfig {
    pub scale_color: Scale,
    pub scale_density: Scale,
    /// Fraction of occupied voxels kept exactly.
    pub retain_fraction: f64,
    /// Number of probe rays used for importance scoring.
    pub importance_rays: u64,
    pub precision: ValuePrecision,
}

impl Default for CompressionConfig {
    fn default() -> Self {
        Self {
            scale_color: Scale::Quarter,
            scale_density: Scale::Half,
            retain_fraction: 0.05,
            importance_rays: 20 * 64 * 64,
            precision: ValuePrecision::F16,
        }
    }
}

impl CompressionConfig {
    /// No downsampling, no retention, full precision.
    pub fn identity() -> Self {
        Self {
            scale_color: Scale::Unit,
            scale_density: Scale::Unit,
            retain_fraction: 0.0,
            precision: ValuePrecision::F32,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, s) in [("color", self.scale_color), ("density", self.scale_density)] {
            if !matches!(s, Scale::Quarter | Scale::Half | Scale::Unit) {
                return Err(Error::InvalidConfig(format!(
                    "{name} scale {s} must be one of 1/4, 1/2, 1"
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.retain_fraction) {
            return Err(Error::InvalidConfig(format!(
                "retain fraction {} outside [0, 1]",
                self.retain_fraction
            )));
        }
        if self.importance_rays == 0 {
            return Err(Error::InvalidConfig("importance ray count must be >= 1".into()));
        }
        Ok(())
    }
}

/// Voxels stored verbatim at full precision.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ImportantVoxelSet {
    indices: Vec<usize>,
    density: Vec<f32>,
    color: Vec<f32>,
}

impl ImportantVoxelSet {
    pub fn new(indices: Vec<usize>, density: Vec<f32>, color: Vec<f32>, channels: usize) -> Result<Self> {
        if let Some(pos) = indices.windows(2).position(|w| w[0] >= w[1]) {
            return Err(Error::NonMonotonicIndices { position: pos + 1 });
        }
        if density.len() != indices.len() || color.len() != indices.len() * channels {
            return Err(Error::DimensionMismatch(format!(
                "{} indices, {} densities, {} colour values",
                indices.len(),
                density.len(),
                color.len()
            )));
        }
        if density.iter().chain(&color).any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput("important voxel values".into()));
        }
        Ok(Self {
            indices,
            density,
            color,
        })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn density(&self) -> &[f32] {
        &self.density
    }

    pub fn color(&self) -> &[f32] {
        &self.color
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// The `ceil(p * n)` highest-scoring occupied voxels with their source values.
pub fn select_important(grid: &VoxelGrid, map: &ImportanceMap, p: f64) -> Result<ImportantVoxelSet> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidConfig(format!("retain fraction {p} outside [0, 1]")));
    }
    if map.len() != grid.occupied() || map.shape() != grid.shape() {
        return Err(Error::DimensionMismatch(format!(
            "importance map with {} scores for a grid with {} occupied voxels",
            map.len(),
            grid.occupied()
        )));
    }
    let k = retained_count(p, map.len());
    let mut slots: Vec<usize> = map.ranking().into_iter().take(k).collect();
    slots.sort_unstable();
    let pointers: Vec<usize> = grid.mask().iter_ones().collect();
    let c = grid.dims().c;
    let mut indices = Vec::with_capacity(k);
    let mut density = Vec::with_capacity(k);
    let mut color = Vec::with_capacity(k * c);
    for slot in slots {
        indices.push(pointers[slot]);
        density.push(grid.density()[slot]);
        color.extend_from_slice(grid.voxel_color(slot));
    }
    ImportantVoxelSet::new(indices, density, color, c)
}

/// Everything needed to rebuild a grid: the full-resolution mask, the two
/// downsampled volumes (sparse over the coarsened mask), the retained
/// voxels and an optional refinement network.
#[derive(Clone, Debug, PartialEq)]
pub struct CompressedModel {
    pub original_dims: GridDims,
    pub full_mask: OccupancyMask,
    pub down_density: SparseVolume,
    pub down_color: SparseVolume,
    pub important: ImportantVoxelSet,
    pub ncb: Option<NcbNetwork>,
    pub config: CompressionConfig,
}

impl CompressedModel {
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        let shape = self.original_dims.shape();
        if self.full_mask.shape() != shape {
            return Err(Error::DimensionMismatch("full mask shape".into()));
        }
        for (vol, scale, ch, name) in [
            (&self.down_density, self.config.scale_density, 1, "density"),
            (&self.down_color, self.config.scale_color, self.original_dims.c, "colour"),
        ] {
            let expect = scale.apply_shape(shape)?;
            if vol.shape() != expect || vol.channels() != ch {
                return Err(Error::DimensionMismatch(format!(
                    "down {name} volume {:?}x{} vs expected {:?}x{ch}",
                    vol.shape(),
                    vol.channels(),
                    expect
                )));
            }
            if *vol.mask() != coarsen_mask(&self.full_mask, scale)? {
                return Err(Error::DimensionMismatch(format!(
                    "down {name} mask is not the coarsened full mask"
                )));
            }
        }
        let c = self.original_dims.c;
        ImportantVoxelSet::new(
            self.important.indices.clone(),
            self.important.density.clone(),
            self.important.color.clone(),
            c,
        )?;
        if let Some(&i) = self.important.indices.iter().find(|&&i| i >= shape.voxel_count() || !self.full_mask.get(i)) {
            return Err(Error::IndexOutOfRange {
                index: i,
                len: shape.voxel_count(),
            });
        }
        if let Some(net) = &self.ncb {
            if net.channels() != c {
                return Err(Error::DimensionMismatch(format!(
                    "network predicts {} colour channels, grid has {c}",
                    net.channels()
                )));
            }
        }
        Ok(())
    }
}

fn downsample(vol: &SparseVolume, full: &OccupancyMask, scale: Scale, precision: ValuePrecision) -> Result<SparseVolume> {
    let coarse = sparsify(&trilinear_resize(vol, scale)?, &coarsen_mask(full, scale)?)?;
    let (mask, ch) = (coarse.mask().clone(), coarse.channels());
    let mut values = coarse.into_values();
    precision.quantize_slice(&mut values)?;
    SparseVolume::new(mask, ch, values)
}

/// Compresses with an already computed importance map.
pub fn compress_with_importance(
    grid: &VoxelGrid,
    map: &ImportanceMap,
    config: &CompressionConfig,
) -> Result<CompressedModel> {
    config.validate()?;
    let full = grid.mask().clone();
    let down_density = downsample(grid.density_volume(), &full, config.scale_density, config.precision)?;
    let down_color = downsample(grid.color_volume(), &full, config.scale_color, config.precision)?;
    let important = if config.retain_fraction > 0.0 {
        select_important(grid, map, config.retain_fraction)?
    } else {
        ImportantVoxelSet::default()
    };
    Ok(CompressedModel {
        original_dims: grid.dims(),
        full_mask: full,
        down_density,
        down_color,
        important,
        ncb: None,
        config: *config,
    })
}

/// Scores importance over `cameras` with `march` (skipped when nothing is
/// retained or the grid is empty) and compresses.
pub fn compress(
    grid: &VoxelGrid,
    cameras: &[Camera],
    march: &MarchConfig,
    config: &CompressionConfig,
    workers: usize,
) -> Result<CompressedModel> {
    config.validate()?;
    let map = if config.retain_fraction > 0.0 && grid.occupied() > 0 {
        compute_importance(grid, cameras, march, workers)?
    } else {
        ImportanceMap::new(grid.shape(), vec![0.0; grid.occupied()], 0.0, 0.0)?
    };
    compress_with_importance(grid, &map, config)
}

/// Wall time of each restoration stage, in milliseconds.
#[derive(Clone, Copy, Debug, Default, PartialEq, serde::Serialize)]
pub struct RestoreTimings {
    pub upsample_ms: f64,
    pub ncb_ms: f64,
    pub retained_ms: f64,
}

/// Upsamples and re-sparsifies the stored volumes, applies `ncb` when given
/// and finally writes back the retained voxels.
pub fn restore_with(model: &CompressedModel, ncb: Option<&NcbNetwork>, workers: usize) -> Result<VoxelGrid> {
    Ok(restore_timed(model, ncb, workers)?.0)
}

/// As [`restore_with`], also timing each stage.
pub fn restore_timed(
    model: &CompressedModel,
    ncb: Option<&NcbNetwork>,
    workers: usize,
) -> Result<(VoxelGrid, RestoreTimings)> {
    let ms = |t: Instant| t.elapsed().as_secs_f64() * 1e3;
    let mut timings = RestoreTimings::default();
    model.validate()?;
    let t = Instant::now();
    let dims = model.original_dims;
    let shape = dims.shape();
    let density = sparsify(
        &upsample_to(&model.down_density, shape, model.config.scale_density),
        &model.full_mask,
    )?;
    let color = sparsify(
        &upsample_to(&model.down_color, shape, model.config.scale_color),
        &model.full_mask,
    )?;
    let mut grid = VoxelGrid::from_volumes(dims, density, color)?;
    timings.upsample_ms = ms(t);
    if let Some(net) = ncb {
        let t = Instant::now();
        grid = refine_grid(net, &grid, workers)?;
        timings.ncb_ms = ms(t);
    }
    let t = Instant::now();
    let c = dims.c;
    let imp = &model.important;
    for (i, &idx) in imp.indices.iter().enumerate() {
        let slot = model.full_mask.rank(idx).ok_or(Error::IndexOutOfRange {
            index: idx,
            len: shape.voxel_count(),
        })?;
        grid.set_voxel(slot, imp.density[i], &imp.color[i * c..(i + 1) * c]);
    }
    timings.retained_ms = ms(t);
    Ok((grid, timings))
}

/// Restores using the model's own network, if any.
pub fn restore(model: &CompressedModel, workers: usize) -> Result<VoxelGrid> {
    restore_with(model, model.ncb.as_ref(), workers)
}
