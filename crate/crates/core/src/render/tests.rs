use super::camera::normalize;
use super::*;
use crate::grid::{GridDims, OccupancyMask, VoxelGrid};

fn dense_grid(dims: GridDims, sigma: impl Fn([usize; 3]) -> f32, rgb: [f64; 3]) -> VoxelGrid {
    let shape = dims.shape();
    let mask = OccupancyMask::dense(shape);
    let density = (0..shape.voxel_count()).map(|i| sigma(shape.coords(i))).collect();
    let nb = dims.c / 3;
    let mut color = vec![0.0f32; shape.voxel_count() * dims.c];
    for v in 0..shape.voxel_count() {
        for ch in 0..3 {
            color[v * dims.c + ch * nb] = ((rgb[ch] - 0.5) / SH_C0) as f32;
        }
    }
    VoxelGrid::new(dims, mask, density, color).unwrap()
}

fn z_ray(x: f64, y: f64) -> Ray {
    Ray::new([x, y, -5.0], [0.0, 0.0, 1.0], 0.0, f64::INFINITY).unwrap()
}

#[test]
fn empty_space_returns_background() {
    let g = dense_grid(GridDims::new(4, 4, 4, 27).unwrap(), |_| 0.0, [0.9; 3]);
    let cfg = MarchConfig::default().with_background([0.1, 0.2, 0.3]);
    let (r, trace) = render_ray_traced(&g, &z_ray(1.5, 1.5), &cfg).unwrap();
    assert_eq!(r.color, [0.1, 0.2, 0.3]);
    assert_eq!(r.transmittance, 1.0);
    assert!(trace.is_empty());
    assert!(r.samples > 0);
}

#[test]
fn beer_lambert_slab_matches_closed_form() {
    let sigma = 0.1;
    let c = [0.8, 0.3, 0.6];
    let bg = [1.0, 1.0, 1.0];
    let g = dense_grid(GridDims::new(8, 8, 16, 3).unwrap(), |_| sigma as f32, c);
    let cfg = MarchConfig::reference(0.05, bg);
    let r = render_ray(&g, &z_ray(3.5, 3.5), &cfg).unwrap();
    let tau = (sigma as f32 as f64) * 15.0;
    for ch in 0..3 {
        let expect = c[ch] * (1.0 - (-tau).exp()) + bg[ch] * (-tau).exp();
        assert!((r.color[ch] - expect).abs() <= 0.02 * expect, "{ch}: {} vs {expect}", r.color[ch]);
    }
}

#[test]
fn opaque_first_sample_hides_the_rest() {
    let dims = GridDims::new(3, 3, 4, 3).unwrap();
    let shape = dims.shape();
    let mask = OccupancyMask::dense(shape);
    let density = vec![1e4; shape.voxel_count()];
    let color: Vec<f32> = (0..shape.voxel_count() * 3)
        .map(|i| ((i * 7) % 11) as f32 * 0.1 - 0.5)
        .collect();
    let g = VoxelGrid::new(dims, mask, density, color).unwrap();
    let ray = Ray::new([1.2, 0.7, -1.0], [0.0, 0.0, 1.0], 0.0, f64::INFINITY).unwrap();
    let cfg = MarchConfig::reference(0.5, [0.0; 3]);
    let r = render_ray(&g, &ray, &cfg).unwrap();
    // first sample sits half a step past the entry point z = 0
    let (_, coeffs) = g.trilinear_sample([1.2, 0.7, 0.25]);
    let coeffs: Vec<f32> = coeffs.iter().map(|&v| v as f32).collect();
    let expect = eval_sh(&coeffs, [0.0, 0.0, 1.0]).unwrap();
    for ch in 0..3 {
        assert!((r.color[ch] - expect[ch]).abs() < 1e-6);
    }
    assert_eq!(r.transmittance, 0.0);
}

fn slab_grid(n: usize) -> VoxelGrid {
    let dims = GridDims::cube(n).unwrap();
    dense_grid(
        dims,
        |[_, _, z]| if (n / 3..n / 3 + 3).contains(&z) { 4.0 } else { 0.0 },
        [0.9, 0.2, 0.4],
    )
}

#[test]
fn transmittance_monotone_and_weights_subprobability() {
    let g = slab_grid(12);
    let cam = Camera::orbit(g.shape(), [0.3, 0.5, 1.0], 2.5, 16).unwrap();
    let cfg = MarchConfig::reference(0.25, [0.0; 3]);
    for v in 0..16 {
        for u in 0..16 {
            let ray = cam.pixel_ray(u, v);
            let (_, trace) = render_ray_traced(&g, &ray, &cfg).unwrap();
            let mut prev = 1.0;
            let mut weight = 0.0;
            for s in &trace {
                assert!(s.t_accum <= prev && s.t_accum >= 0.0);
                weight += prev - s.t_accum;
                prev = s.t_accum;
                assert!(s.color_accum.iter().all(|&c| c >= 0.0));
            }
            assert!(weight <= 1.0 + 1e-12);
        }
    }
}

#[test]
fn early_termination_error_is_bounded() {
    let g = slab_grid(16);
    let cam = Camera::orbit(g.shape(), [0.2, -0.4, 1.0], 2.5, 24).unwrap();
    let on = MarchConfig::default().with_background([1.0; 3]);
    let off = MarchConfig {
        early_termination: false,
        ..on
    };
    let a = render_image(&g, &cam, &on, 1).unwrap();
    let b = render_image(&g, &cam, &off, 1).unwrap();
    assert!(a.stats.terminated_rays > 0);
    assert!(a.stats.samples < b.stats.samples);
    assert!(a.image.max_abs_diff(&b.image).unwrap() <= on.termination_threshold);
}

#[test]
fn worker_count_and_kernel_do_not_change_bits() {
    let g = slab_grid(10);
    let cam = Camera::orbit(g.shape(), [1.0, 0.4, 0.6], 2.5, 20).unwrap();
    let cfg = MarchConfig::default();
    let one = render_image(&g, &cam, &cfg, 1).unwrap();
    let many = render_image(&g, &cam, &cfg, 8).unwrap();
    assert_eq!(one, many);
    let lanes = render_image_with(
        &g,
        &cam,
        &cfg,
        &RenderOptions {
            workers: 3,
            kernel: RayKernel::LaneSplit,
        },
    )
    .unwrap();
    assert_eq!(one, lanes);
}

#[test]
fn step_refinement_converges_on_slab() {
    let n = 16;
    let dims = GridDims::cube(n).unwrap();
    let g = dense_grid(
        dims,
        |[_, _, z]| if (6..10).contains(&z) { 0.3 } else { 0.0 },
        [0.7, 0.5, 0.2],
    );
    let d = normalize([0.3, 0.2, 1.0]);
    let ray = Ray::new([2.0, 3.0, -2.0], d, 0.0, f64::INFINITY).unwrap();
    let color = |step: f64| {
        render_ray(&g, &ray, &MarchConfig::reference(step, [0.0; 3])).unwrap().color[0]
    };
    let tau = 0.3f32 as f64 * 4.0 / d[2];
    let exact = 0.7 * (1.0 - (-tau).exp());
    let errs: Vec<f64> = [0.8, 0.4, 0.2, 0.1, 0.05]
        .iter()
        .map(|&s| (color(s) - exact).abs())
        .collect();
    // first-order or better between the coarsest and finest steps
    assert!(errs[4] <= errs[0] / 16.0 + 1e-12, "{errs:?}");
    assert!(errs[4] < 1e-3, "{errs:?}");
}

#[test]
fn empty_grid_renders_background() {
    let g = VoxelGrid::empty(GridDims::cube(6).unwrap());
    let cam = Camera::orbit(g.shape(), [1.0, 1.0, 1.0], 2.5, 8).unwrap();
    let cfg = MarchConfig::default().with_background([1.0; 3]);
    let out = render_image(&g, &cam, &cfg, 2).unwrap();
    assert_eq!(out.image, Image::filled(8, 8, [1.0; 3]));
    let reference = render_reference(&g, &cam, REFERENCE_STEP, [1.0; 3], 1).unwrap();
    assert_eq!(reference, out.image);
}

#[test]
fn config_validation() {
    let g = VoxelGrid::empty(GridDims::cube(4).unwrap());
    let cam = Camera::orbit(g.shape(), [1.0, 0.0, 0.0], 2.5, 4).unwrap();
    let bad = MarchConfig {
        step: 0.0,
        ..MarchConfig::default()
    };
    assert!(render_image(&g, &cam, &bad, 1).is_err());
    let bad = MarchConfig {
        termination_threshold: 1.0,
        ..MarchConfig::default()
    };
    assert!(render_image(&g, &cam, &bad, 1).is_err());
    assert!(render_image(&g, &cam, &MarchConfig::default(), 0).is_err());
}
