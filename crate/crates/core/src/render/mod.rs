//! Volume rendering over a [`VoxelGrid`](crate::grid::VoxelGrid): the
//! accelerated marcher and the fine-step reference it is checked against.

mod camera;
mod image;
mod march;
mod sh;

pub use camera::{grid_center, grid_half_diagonal, Camera, Ray, Vec3};
pub use image::{psnr, psnr_from_mse, Image};
pub use march::{
    march_ray, render_image, render_image_with, render_ray, render_ray_traced, render_reference,
    MarchConfig, MarchSummary, RayKernel, RayResult, RenderOptions, RenderOutput, RenderStats,
    SampleState,
};
pub use sh::{basis_len, degree_of, eval_sh, sh_basis, SH_C0, SH_C1, SH_C2};

pub(crate) use march::worker_pool;

/// Default fine step of the reference renderer, in voxels.
pub const REFERENCE_STEP: f64 = 0.125;

#[cfg(test)]
mod tests;
