//! Trilinear resampling, re-sparsification and mask coarsening.
//!
//! Resampling uses half-pixel-centre alignment: destination index `i` reads
//! the source at `(i + 0.5) / factor - 0.5`, clamped to the source extent.

use std::fmt;
use std::str::FromStr;

use super::{GridDims, OccupancyMask, Shape, SparseVolume, Stencil, VoxelGrid};
use crate::error::{Error, Result};

/// Per-axis resampling ratio.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Scale {
    Quarter,
    Half,
    Unit,
    Double,
    Quadruple,
}

impl Scale {
    pub fn factor(self) -> f64 {
        match self {
            Scale::Quarter => 0.25,
            Scale::Half => 0.5,
            Scale::Unit => 1.0,
            Scale::Double => 2.0,
            Scale::Quadruple => 4.0,
        }
    }

    /// Destination length `ceil(n * factor)`.
    pub fn apply(self, n: usize) -> usize {
        match self {
            Scale::Quarter => n.div_ceil(4),
            Scale::Half => n.div_ceil(2),
            Scale::Unit => n,
            Scale::Double => n * 2,
            Scale::Quadruple => n * 4,
        }
    }

    pub fn apply_shape(self, s: Shape) -> Result<Shape> {
        Shape::new(self.apply(s.h), self.apply(s.w), self.apply(s.k))
    }

    /// Inverse ratio.
    pub fn inverse(self) -> Scale {
        match self {
            Scale::Quarter => Scale::Quadruple,
            Scale::Half => Scale::Double,
            Scale::Unit => Scale::Unit,
            Scale::Double => Scale::Half,
            Scale::Quadruple => Scale::Quarter,
        }
    }

    /// Denominator code used on disk for the down-sampling ratios 1, 1/2, 1/4.
    pub fn denominator(self) -> Option<u8> {
        match self {
            Scale::Unit => Some(1),
            Scale::Half => Some(2),
            Scale::Quarter => Some(4),
            _ => None,
        }
    }

    pub fn from_denominator(code: u8) -> Option<Scale> {
        match code {
            1 => Some(Scale::Unit),
            2 => Some(Scale::Half),
            4 => Some(Scale::Quarter),
            _ => None,
        }
    }

    pub fn is_downsample(self) -> bool {
        matches!(self, Scale::Unit | Scale::Half | Scale::Quarter)
    }
}

impl fmt::Display for Scale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scale::Quarter => "1/4",
            Scale::Half => "1/2",
            Scale::Unit => "1",
            Scale::Double => "2",
            Scale::Quadruple => "4",
        })
    }
}

impl FromStr for Scale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "1/4" | "0.25" => Ok(Scale::Quarter),
            "1/2" | "0.5" => Ok(Scale::Half),
            "1" | "1.0" => Ok(Scale::Unit),
            "2" | "2.0" => Ok(Scale::Double),
            "4" | "4.0" => Ok(Scale::Quadruple),
            other => Err(Error::InvalidConfig(format!(
                "scale {other:?} is not one of 1/4, 1/2, 1, 2, 4"
            ))),
        }
    }
}

/// Resamples `src` onto a dense grid of shape `dst`, reading the source at
/// `(i + 0.5) / factor - 0.5` on each axis.
pub fn resample(src: &SparseVolume, dst: Shape, factor: [f64; 3]) -> SparseVolume {
    let shape = src.shape();
    let c = src.channels();
    let mut values = vec![0.0f32; dst.voxel_count() * c];
    let mut tmp = vec![0.0f64; c];
    let map = |i: usize, a: usize| (i as f64 + 0.5) / factor[a] - 0.5;
    for x in 0..dst.h {
        let px = map(x, 0);
        for y in 0..dst.w {
            let py = map(y, 1);
            for z in 0..dst.k {
                let st = Stencil::at(&shape, [px, py, map(z, 2)]);
                src.sample_into(&st, &mut tmp);
                let base = dst.linear(x, y, z) * c;
                for (o, &v) in values[base..base + c].iter_mut().zip(&tmp) {
                    *o = v as f32;
                }
            }
        }
    }
    SparseVolume::from_dense(dst, c, values).expect("resampled values are finite")
}

/// Resizes by `scale` to `ceil(dim * scale)` per axis. The result is dense.
pub fn trilinear_resize(src: &SparseVolume, scale: Scale) -> Result<SparseVolume> {
    let dst = scale.apply_shape(src.shape())?;
    let f = scale.factor();
    Ok(resample(src, dst, [f, f, f]))
}

/// Upsamples a grid that was produced by down-sampling with `down` back onto
/// the explicit original shape `target`.
pub fn upsample_to(src: &SparseVolume, target: Shape, down: Scale) -> SparseVolume {
    let f = down.inverse().factor();
    resample(src, target, [f, f, f])
}

/// Keeps only voxels set in `reference`; values come from `src` (zero where
/// `src` was unoccupied).
pub fn sparsify(src: &SparseVolume, reference: &OccupancyMask) -> Result<SparseVolume> {
    if reference.shape() != src.shape() {
        return Err(Error::DimensionMismatch(format!(
            "mask shape {:?} vs volume {:?}",
            reference.shape(),
            src.shape()
        )));
    }
    let c = src.channels();
    let mut values = Vec::with_capacity(reference.count() * c);
    for idx in reference.iter_ones() {
        match src.voxel(idx) {
            Some(v) => values.extend_from_slice(v),
            None => values.extend(std::iter::repeat_n(0.0, c)),
        }
    }
    SparseVolume::new(reference.clone(), c, values)
}

/// Coarse mask at `scale`: a coarse voxel is set iff any voxel of its
/// full-resolution block is set.
pub fn coarsen_mask(mask: &OccupancyMask, scale: Scale) -> Result<OccupancyMask> {
    let block = match scale {
        Scale::Unit => return Ok(mask.clone()),
        Scale::Half => 2,
        Scale::Quarter => 4,
        other => {
            return Err(Error::InvalidConfig(format!(
                "mask coarsening needs a down-sampling ratio, got {other}"
            )))
        }
    };
    let fine = mask.shape();
    let coarse = scale.apply_shape(fine)?;
    let mut set = vec![false; coarse.voxel_count()];
    for idx in mask.iter_ones() {
        let [x, y, z] = fine.coords(idx);
        set[coarse.linear(x / block, y / block, z / block)] = true;
    }
    Ok(OccupancyMask::from_fn(coarse, |i| set[i]))
}

impl VoxelGrid {
    /// Resizes density and colour by `scale`; the output mask is dense.
    pub fn resize(&self, scale: Scale) -> Result<VoxelGrid> {
        let d = trilinear_resize(self.density_volume(), scale)?;
        let c = trilinear_resize(self.color_volume(), scale)?;
        let s = d.shape();
        let dims = GridDims::new(s.h, s.w, s.k, self.dims().c)?;
        VoxelGrid::from_volumes(dims, d, c)
    }

    /// Restricts the grid to `reference`.
    pub fn sparsify(&self, reference: &OccupancyMask) -> Result<VoxelGrid> {
        let d = sparsify(self.density_volume(), reference)?;
        let c = sparsify(self.color_volume(), reference)?;
        VoxelGrid::from_volumes(self.dims(), d, c)
    }
}
