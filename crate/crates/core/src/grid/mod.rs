//! Sparse voxel grids: occupancy masks, trilinear sampling and resampling.
//!
//! Storage is row-major with the `k` axis fastest. Occupied voxels are stored
//! densely in mask-rank order, and the `c` colour coefficients of one voxel
//! sit contiguously so a single slot lookup plus a fixed stride reaches every
//! coefficient.

mod mask;
mod precision;
mod resample;
mod sample;

pub use mask::{mask_to_pointers, pointers_to_mask, OccupancyMask};
pub use precision::ValuePrecision;
pub use resample::{coarsen_mask, resample, sparsify, trilinear_resize, upsample_to, Scale};
pub use sample::Stencil;

use crate::error::{Error, Result};

/// Spatial extent of a grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Shape {
    pub h: usize,
    pub w: usize,
    pub k: usize,
}

impl Shape {
    pub fn new(h: usize, w: usize, k: usize) -> Result<Self> {
        for (axis, dim) in [h, w, k].into_iter().enumerate() {
            if dim < 2 {
                return Err(Error::DimensionTooSmall { axis, dim });
            }
        }
        h.checked_mul(w)
            .and_then(|hw| hw.checked_mul(k))
            .ok_or_else(|| Error::InvalidDims(format!("{h}x{w}x{k} overflows the index range")))?;
        Ok(Self { h, w, k })
    }

    pub fn cube(n: usize) -> Result<Self> {
        Self::new(n, n, n)
    }

    #[inline]
    pub fn voxel_count(&self) -> usize {
        self.h * self.w * self.k
    }

    #[inline]
    pub fn linear(&self, x: usize, y: usize, z: usize) -> usize {
        (x * self.w + y) * self.k + z
    }

    #[inline]
    pub fn coords(&self, index: usize) -> [usize; 3] {
        let z = index % self.k;
        let y = (index / self.k) % self.w;
        let x = index / (self.k * self.w);
        [x, y, z]
    }

    pub fn as_array(&self) -> [usize; 3] {
        [self.h, self.w, self.k]
    }
}

/// Grid resolution plus colour-feature channel count.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct GridDims {
    pub h: usize,
    pub w: usize,
    pub k: usize,
    pub c: usize,
}

impl GridDims {
    pub fn new(h: usize, w: usize, k: usize, c: usize) -> Result<Self> {
        Shape::new(h, w, k)?;
        if c < 3 || c % 3 != 0 {
            return Err(Error::InvalidDims(format!(
                "colour channel count {c} must be a positive multiple of 3"
            )));
        }
        Ok(Self { h, w, k, c })
    }

    /// Cubic grid with degree-2 spherical harmonics (27 coefficients).
    pub fn cube(n: usize) -> Result<Self> {
        Self::new(n, n, n, 27)
    }

    pub fn shape(&self) -> Shape {
        Shape {
            h: self.h,
            w: self.w,
            k: self.k,
        }
    }

    pub fn voxel_count(&self) -> usize {
        self.shape().voxel_count()
    }
}

/// A sparse multi-channel field: values for the set bits of `mask`,
/// `channels` contiguous values per occupied voxel.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseVolume {
    mask: OccupancyMask,
    channels: usize,
    values: Vec<f32>,
}

impl SparseVolume {
    pub fn new(mask: OccupancyMask, channels: usize, values: Vec<f32>) -> Result<Self> {
        if channels == 0 {
            return Err(Error::InvalidDims("volume needs at least one channel".into()));
        }
        if values.len() != mask.count() * channels {
            return Err(Error::DimensionMismatch(format!(
                "{} values for {} occupied voxels x {} channels",
                values.len(),
                mask.count(),
                channels
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput("volume values".into()));
        }
        Ok(Self {
            mask,
            channels,
            values,
        })
    }

    /// Dense volume built from a full `shape.voxel_count() * channels` array.
    pub fn from_dense(shape: Shape, channels: usize, dense: Vec<f32>) -> Result<Self> {
        Self::new(OccupancyMask::dense(shape), channels, dense)
    }

    pub fn shape(&self) -> Shape {
        self.mask.shape()
    }

    pub fn mask(&self) -> &OccupancyMask {
        &self.mask
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f32] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    /// Values of the voxel at linear `index`, `None` when unoccupied.
    pub fn voxel(&self, index: usize) -> Option<&[f32]> {
        self.mask
            .rank(index)
            .map(|s| &self.values[s * self.channels..(s + 1) * self.channels])
    }

    /// Full array with zeros at unoccupied voxels.
    pub fn to_dense(&self) -> Vec<f32> {
        let mut out = vec![0.0; self.shape().voxel_count() * self.channels];
        let c = self.channels;
        for (slot, idx) in self.mask.iter_ones().enumerate() {
            out[idx * c..(idx + 1) * c].copy_from_slice(&self.values[slot * c..(slot + 1) * c]);
        }
        out
    }

    /// Trilinear interpolation into `out` (length `channels`), reading
    /// unoccupied neighbours as zero.
    #[inline]
    pub fn sample_into(&self, stencil: &Stencil, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        let c = self.channels;
        for (&idx, &w) in stencil.corners.iter().zip(&stencil.weights) {
            if w == 0.0 {
                continue;
            }
            if let Some(slot) = self.mask.rank(idx) {
                let base = slot * c;
                for (o, &v) in out.iter_mut().zip(&self.values[base..base + c]) {
                    *o += w * v as f64;
                }
            }
        }
    }

    /// Single-channel interpolation; `channel` selects the coefficient.
    #[inline]
    pub fn sample_channel(&self, stencil: &Stencil, channel: usize) -> f64 {
        let mut acc = 0.0;
        for (&idx, &w) in stencil.corners.iter().zip(&stencil.weights) {
            if w == 0.0 {
                continue;
            }
            if let Some(slot) = self.mask.rank(idx) {
                acc += w * self.values[slot * self.channels + channel] as f64;
            }
        }
        acc
    }
}

/// Full-resolution sparse radiance grid: density plus spherical-harmonic
/// colour coefficients for every occupied voxel.
#[derive(Clone, Debug, PartialEq)]
pub struct VoxelGrid {
    dims: GridDims,
    density: SparseVolume,
    color: SparseVolume,
}

impl VoxelGrid {
    pub fn new(
        dims: GridDims,
        mask: OccupancyMask,
        density: Vec<f32>,
        color: Vec<f32>,
    ) -> Result<Self> {
        if mask.shape() != dims.shape() {
            return Err(Error::DimensionMismatch(format!(
                "mask shape {:?} vs grid {:?}",
                mask.shape(),
                dims.shape()
            )));
        }
        let density = SparseVolume::new(mask.clone(), 1, density)?;
        let color = SparseVolume::new(mask, dims.c, color)?;
        Ok(Self {
            dims,
            density,
            color,
        })
    }

    /// Grid with no occupied voxels.
    pub fn empty(dims: GridDims) -> Self {
        let mask = OccupancyMask::empty(dims.shape());
        Self::new(dims, mask, Vec::new(), Vec::new()).expect("empty grid is consistent")
    }

    /// Combines a one-channel density volume and a `c`-channel colour volume
    /// sharing one mask.
    pub fn from_volumes(dims: GridDims, density: SparseVolume, color: SparseVolume) -> Result<Self> {
        if density.mask() != color.mask() {
            return Err(Error::DimensionMismatch(
                "density and colour masks differ".into(),
            ));
        }
        if density.channels() != 1 || color.channels() != dims.c {
            return Err(Error::DimensionMismatch(format!(
                "channels {} / {} vs expected 1 / {}",
                density.channels(),
                color.channels(),
                dims.c
            )));
        }
        if density.shape() != dims.shape() {
            return Err(Error::DimensionMismatch(format!(
                "volume shape {:?} vs grid {:?}",
                density.shape(),
                dims.shape()
            )));
        }
        Ok(Self {
            dims,
            density,
            color,
        })
    }

    pub fn dims(&self) -> GridDims {
        self.dims
    }

    pub fn shape(&self) -> Shape {
        self.dims.shape()
    }

    pub fn mask(&self) -> &OccupancyMask {
        self.density.mask()
    }

    pub fn occupied(&self) -> usize {
        self.mask().count()
    }

    /// Density per occupied voxel, in mask-rank order.
    pub fn density(&self) -> &[f32] {
        self.density.values()
    }

    /// Colour coefficients, `c` per occupied voxel, in mask-rank order.
    pub fn color(&self) -> &[f32] {
        self.color.values()
    }

    pub fn density_volume(&self) -> &SparseVolume {
        &self.density
    }

    pub fn color_volume(&self) -> &SparseVolume {
        &self.color
    }

    pub fn into_volumes(self) -> (SparseVolume, SparseVolume) {
        (self.density, self.color)
    }

    pub fn voxel_color(&self, slot: usize) -> &[f32] {
        let c = self.dims.c;
        &self.color.values()[slot * c..(slot + 1) * c]
    }

    /// Overwrites the values stored at `slot`.
    pub(crate) fn set_voxel(&mut self, slot: usize, density: f32, color: &[f32]) {
        let c = self.dims.c;
        self.density.values_mut()[slot] = density;
        self.color.values_mut()[slot * c..(slot + 1) * c].copy_from_slice(color);
    }

    /// Interpolated `(density, colour)` at a continuous voxel-space point.
    /// Points outside the grid are clamped to the boundary.
    pub fn trilinear_sample(&self, p: [f64; 3]) -> (f64, Vec<f64>) {
        let stencil = Stencil::at(&self.shape(), p);
        let mut d = [0.0];
        self.density.sample_into(&stencil, &mut d);
        let mut c = vec![0.0; self.dims.c];
        self.color.sample_into(&stencil, &mut c);
        (d[0], c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dims_validation() {
        assert!(GridDims::new(2, 2, 2, 3).is_ok());
        assert!(matches!(
            GridDims::new(1, 2, 2, 3),
            Err(Error::DimensionTooSmall { axis: 0, dim: 1 })
        ));
        assert!(GridDims::new(2, 2, 2, 4).is_err());
        assert!(GridDims::new(2, 2, 2, 0).is_err());
        assert!(Shape::new(usize::MAX / 2, 4, 4).is_err());
    }

    #[test]
    fn linear_and_coords_agree() {
        let s = Shape::new(3, 4, 5).unwrap();
        for i in 0..s.voxel_count() {
            let [x, y, z] = s.coords(i);
            assert_eq!(s.linear(x, y, z), i);
        }
        assert_eq!(s.linear(0, 0, 1), 1);
        assert_eq!(s.linear(0, 1, 0), 5);
    }

    #[test]
    fn grid_rejects_bad_lengths_and_non_finite() {
        let dims = GridDims::new(2, 2, 2, 3).unwrap();
        let mask = OccupancyMask::dense(dims.shape());
        assert!(VoxelGrid::new(dims, mask.clone(), vec![0.0; 7], vec![0.0; 24]).is_err());
        let mut d = vec![0.0; 8];
        d[3] = f32::NAN;
        assert!(matches!(
            VoxelGrid::new(dims, mask, d, vec![0.0; 24]),
            Err(Error::NonFiniteInput(_))
        ));
    }

    #[test]
    fn sample_at_voxel_center_returns_voxel() {
        let dims = GridDims::new(3, 3, 3, 3).unwrap();
        let mask = OccupancyMask::from_fn(dims.shape(), |i| i % 2 == 0);
        let n = mask.count();
        let density: Vec<f32> = (0..n).map(|i| i as f32 * 0.5 + 1.0).collect();
        let color: Vec<f32> = (0..n * 3).map(|i| (i as f32).sin()).collect();
        let grid = VoxelGrid::new(dims, mask.clone(), density.clone(), color.clone()).unwrap();
        for (slot, idx) in mask.iter_ones().enumerate() {
            let [x, y, z] = dims.shape().coords(idx);
            let (d, c) = grid.trilinear_sample([x as f64, y as f64, z as f64]);
            assert_eq!(d, density[slot] as f64);
            for j in 0..3 {
                assert_eq!(c[j], color[slot * 3 + j] as f64);
            }
        }
        // unoccupied voxel reads zero
        let (d, c) = grid.trilinear_sample([0.0, 0.0, 1.0]);
        assert_eq!(d, 0.0);
        assert!(c.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn constant_grid_samples_constant() {
        let dims = GridDims::new(4, 5, 6, 3).unwrap();
        let n = dims.voxel_count();
        let grid = VoxelGrid::new(
            dims,
            OccupancyMask::dense(dims.shape()),
            vec![2.0; n],
            vec![0.25; n * 3],
        )
        .unwrap();
        for p in [[0.3, 1.7, 2.2], [2.9, 3.99, 0.01], [1.5, 2.5, 4.5]] {
            let (d, c) = grid.trilinear_sample(p);
            assert!((d - 2.0).abs() < 1e-12);
            assert!(c.iter().all(|v| (v - 0.25).abs() < 1e-12));
        }
    }

    #[test]
    fn random_grid_cell_center_is_mean_of_corners() {
        // p = (1.5,1.5,1.5): each of the 8 surrounding voxels has weight 1/8.
        let dims = GridDims::new(4, 4, 4, 3).unwrap();
        let shape = dims.shape();
        let n = dims.voxel_count();
        let density: Vec<f32> = (0..n).map(|i| ((i * 7919) % 101) as f32 / 17.0).collect();
        let color: Vec<f32> = (0..n * 3).map(|i| ((i * 104729) % 97) as f32 / 31.0).collect();
        let grid =
            VoxelGrid::new(dims, OccupancyMask::dense(shape), density.clone(), color.clone())
                .unwrap();
        let mut expect = 0.0f64;
        let mut expect_c = [0.0f64; 3];
        for x in 1..3 {
            for y in 1..3 {
                for z in 1..3 {
                    let i = shape.linear(x, y, z);
                    expect += density[i] as f64;
                    for j in 0..3 {
                        expect_c[j] += color[i * 3 + j] as f64;
                    }
                }
            }
        }
        let (d, c) = grid.trilinear_sample([1.5, 1.5, 1.5]);
        assert!((d - expect / 8.0).abs() < 1e-12);
        for j in 0..3 {
            assert!((c[j] - expect_c[j] / 8.0).abs() < 1e-12);
        }
    }

    #[test]
    fn out_of_range_points_clamp() {
        let dims = GridDims::new(2, 2, 2, 3).unwrap();
        let grid = VoxelGrid::new(
            dims,
            OccupancyMask::dense(dims.shape()),
            vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0],
            vec![0.0; 24],
        )
        .unwrap();
        assert_eq!(grid.trilinear_sample([-3.0, -1.0, -0.5]).0, 1.0);
        assert_eq!(grid.trilinear_sample([9.0, 9.0, 9.0]).0, 8.0);
    }
}
