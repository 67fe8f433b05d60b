//! Procedural scenes, brute-force oracles and the ablation runner.

mod ablation;
mod oracle;
mod scene;

pub use ablation::{
    downsample_grid, heldout_cameras, heldout_directions, render_views, retention_sweep,
    run_ablation, views_psnr, write_csv, write_csv_file, AblationConfig, AblationOptions,
    ExperimentRecord, CSV_COLUMNS, HELDOUT_RADIUS, HELDOUT_VIEWS, RECORD_SCHEMA,
};
pub use oracle::{oracle_importance, random_probe_rays, random_scene, ORACLE_MAX_VOXELS};
pub use scene::{generate_scene, SceneKind, SceneSpec, ValueNoise, CHECKER_CELL, SLAB_SIGMA};

#[cfg(test)]
mod tests;
