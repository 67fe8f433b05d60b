//! Neural codebook: a per-scene residual network that maps restored voxel
//! values back towards the originals, conditioned on a Fourier encoding of
//! the voxel position through adaptive layer normalisation.

mod encoding;
mod layers;
mod network;
mod serial;
mod train;

pub use encoding::{normalized, PositionalEncoder};
pub use layers::{AdaLnLayer, LayerCache, Linear, Real, ADALN_EPS, LEAKY_SLOPE};
pub use network::{l1_loss, ncb_backward, NcbArch, NcbNetwork, NcbParams, ParamGroup, Tape};
pub use train::{train_ncb, train_ncb_observed, TrainConfig, TrainLog, TrainOutcome};

use ndarray::{Array2, Axis};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{Shape, VoxelGrid};
use crate::render::worker_pool;

/// Rows of `[sigma, c...]` for every occupied voxel, in slot order.
pub fn voxel_inputs(grid: &VoxelGrid) -> Array2<f32> {
    let c = grid.dims().c;
    let n = grid.occupied();
    let mut x = Array2::zeros((n, 1 + c));
    for (slot, mut row) in x.axis_iter_mut(Axis(0)).enumerate() {
        row[0] = grid.density()[slot];
        for (dst, &v) in row.iter_mut().skip(1).zip(grid.voxel_color(slot)) {
            *dst = v;
        }
    }
    x
}

/// Positional encodings of the given linear voxel indices.
pub fn voxel_encodings(encoder: &PositionalEncoder, shape: Shape, indices: &[usize]) -> Array2<f32> {
    let mut p = Array2::zeros((indices.len(), encoder.dim()));
    let mut buf = vec![0.0; encoder.dim()];
    for (&idx, mut row) in indices.iter().zip(p.axis_iter_mut(Axis(0))) {
        encoder.encode_into(normalized(shape.coords(idx), shape), &mut buf);
        for (dst, &v) in row.iter_mut().zip(&buf) {
            *dst = v as f32;
        }
    }
    p
}

const REFINE_CHUNK: usize = 4096;

impl NcbNetwork {
    /// Refined `(sigma, colour)` of one voxel at integer coordinates `v`.
    pub fn apply(&self, sigma: f32, color: &[f32], v: [usize; 3], shape: Shape) -> Result<(f32, Vec<f32>)> {
        if color.len() != self.channels() {
            return Err(Error::DimensionMismatch(format!(
                "{} colour values for a {}-channel network",
                color.len(),
                self.channels()
            )));
        }
        if !sigma.is_finite() || color.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFiniteInput("network input".into()));
        }
        let mut x = Array2::zeros((1, 1 + color.len()));
        x[[0, 0]] = sigma;
        for (i, &c) in color.iter().enumerate() {
            x[[0, 1 + i]] = c;
        }
        let p = voxel_encodings(&self.encoder, shape, &[shape.linear(v[0], v[1], v[2])]);
        let out = self.params.forward(x.view(), p.view());
        let row = out.row(0);
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput("network output".into()));
        }
        Ok((row[0], row.iter().skip(1).copied().collect()))
    }
}

/// Applies the network to every occupied voxel; the mask is unchanged.
/// Chunks are evaluated in parallel and written back by position.
pub fn refine_grid(net: &NcbNetwork, grid: &VoxelGrid, workers: usize) -> Result<VoxelGrid> {
    let c = grid.dims().c;
    if net.channels() != c {
        return Err(Error::DimensionMismatch(format!(
            "network predicts {} colour channels, grid has {c}",
            net.channels()
        )));
    }
    let x = voxel_inputs(grid);
    let indices: Vec<usize> = grid.mask().iter_ones().collect();
    let shape = grid.shape();
    let pool = worker_pool(workers)?;
    let chunks: Vec<Array2<f32>> = pool.install(|| {
        indices
            .par_chunks(REFINE_CHUNK)
            .enumerate()
            .map(|(ci, idx)| {
                let start = ci * REFINE_CHUNK;
                let xs = x.slice(ndarray::s![start..start + idx.len(), ..]);
                let p = voxel_encodings(&net.encoder, shape, idx);
                net.params.forward(xs, p.view())
            })
            .collect()
    });
    let mut density = Vec::with_capacity(indices.len());
    let mut color = Vec::with_capacity(indices.len() * c);
    for out in &chunks {
        for row in out.axis_iter(Axis(0)) {
            density.push(row[0]);
            color.extend(row.iter().skip(1));
        }
    }
    if density.iter().chain(&color).any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput("network output".into()));
    }
    VoxelGrid::new(grid.dims(), grid.mask().clone(), density, color)
}

#[cfg(test)]
mod tests;
