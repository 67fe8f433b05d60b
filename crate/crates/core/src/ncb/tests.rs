use super::*;
use crate::grid::{GridDims, OccupancyMask, ValuePrecision};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_grid(dims: GridDims, seed: u64) -> VoxelGrid {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mask = OccupancyMask::from_fn(dims.shape(), |_| rng.random::<f64>() < 0.5);
    let n = mask.count();
    let density = (0..n).map(|_| rng.random_range(0.0..2.0f32)).collect();
    let color = (0..n * dims.c).map(|_| rng.random_range(-1.0..1.0f32)).collect();
    VoxelGrid::new(dims, mask, density, color).unwrap()
}

fn batch(rows: usize, c: usize, enc: usize, seed: u64) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Array2::from_shape_fn((rows, 1 + c), |_| rng.random_range(-1.0..1.0));
    let p = Array2::from_shape_fn((rows, enc), |_| rng.random_range(-1.0..1.0));
    let y = Array2::from_shape_fn((rows, 1 + c), |_| rng.random_range(-1.0..1.0));
    (x, p, y)
}

#[test]
fn identity_network_leaves_grid_unchanged() {
    let g = random_grid(GridDims::new(5, 6, 7, 27).unwrap(), 1);
    let net = NcbNetwork::identity(NcbArch::default(), 27, 3).unwrap();
    assert_eq!(refine_grid(&net, &g, 2).unwrap(), g);
    let (s, c) = net.apply(g.density()[0], g.voxel_color(0), [0, 0, 0], g.shape()).unwrap();
    assert_eq!(s, g.density()[0]);
    assert_eq!(c, g.voxel_color(0));
}

#[test]
fn default_architecture_shape() {
    let net = NcbNetwork::identity(NcbArch::default(), 27, 0).unwrap();
    assert_eq!(net.params.trunk.len(), 2);
    assert_eq!(net.params.density_branch.len() + 2, net.params.color_branch.len());
    assert_eq!(net.params.trunk[0].linear.inputs(), 28);
    assert_eq!(net.params.trunk[0].modulation.outputs(), 256);
    assert_eq!(net.encoder.dim(), 32);
    let bad = NcbArch {
        color_layers: 3,
        ..NcbArch::default()
    };
    assert!(NcbNetwork::identity(bad, 27, 0).is_err());
}

#[test]
fn output_depends_on_position() {
    let net = NcbNetwork::random(NcbArch::tiny(), 3, 5).unwrap();
    let shape = crate::grid::Shape::cube(8).unwrap();
    let a = net.apply(0.5, &[0.1, 0.2, 0.3], [1, 2, 3], shape).unwrap();
    let b = net.apply(0.5, &[0.1, 0.2, 0.3], [6, 0, 4], shape).unwrap();
    assert_ne!(a, b);
    assert!(net.apply(f32::NAN, &[0.0; 3], [0, 0, 0], shape).is_err());
}

#[test]
fn batched_refinement_matches_per_voxel() {
    let g = random_grid(GridDims::new(6, 6, 6, 12).unwrap(), 2);
    let net = NcbNetwork::random(NcbArch::tiny(), 12, 9).unwrap();
    let r = refine_grid(&net, &g, 3).unwrap();
    for (slot, idx) in g.mask().iter_ones().enumerate() {
        let (s, c) = net
            .apply(g.density()[slot], g.voxel_color(slot), g.shape().coords(idx), g.shape())
            .unwrap();
        assert!((s - r.density()[slot]).abs() <= 1e-5 * (1.0 + s.abs()));
        for (a, b) in c.iter().zip(r.voxel_color(slot)) {
            assert!((a - b).abs() <= 1e-5 * (1.0 + a.abs()));
        }
    }
}

#[test]
fn perfect_prediction_has_zero_loss_and_gradient() {
    let params = NcbParams::<f64>::random_init(&NcbArch::tiny(), 3, 1);
    let (x, p, _) = batch(5, 3, 8, 2);
    let y = params.forward(x.view(), p.view());
    let (loss, g) = ncb_backward(&params, x.view(), p.view(), y.view(), 1.0, 1.0).unwrap();
    assert_eq!(loss, 0.0);
    assert!(g.slices().iter().all(|(_, s)| s.iter().all(|&v| v == 0.0)));
}

#[test]
fn colour_weight_zero_silences_colour_head() {
    let params = NcbParams::<f64>::random_init(&NcbArch::tiny(), 3, 4);
    let (x, p, y) = batch(6, 3, 8, 5);
    let (_, g) = ncb_backward(&params, x.view(), p.view(), y.view(), 0.0, 1.0).unwrap();
    for (group, s) in g.slices() {
        match group {
            ParamGroup::ColorHead | ParamGroup::ColorLinear | ParamGroup::ColorModulation => {
                assert!(s.iter().all(|&v| v == 0.0), "{group:?}")
            }
            ParamGroup::TrunkLinear | ParamGroup::DensityHead => {
                assert!(s.iter().any(|&v| v != 0.0), "{group:?}")
            }
            _ => {}
        }
    }
}

fn loss_of(params: &NcbParams<f64>, x: &Array2<f64>, p: &Array2<f64>, y: &Array2<f64>) -> f64 {
    let out = params.forward(x.view(), p.view());
    l1_loss(out.view(), y.view(), 0.7, 1.3).0
}

#[test]
fn analytic_gradients_match_finite_differences() {
    let params = NcbParams::<f64>::random_init(&NcbArch::tiny(), 6, 7);
    let (x, p, y) = batch(4, 6, 8, 8);
    let (_, grads) = ncb_backward(&params, x.view(), p.view(), y.view(), 0.7, 1.3).unwrap();
    let flat_grads: Vec<(ParamGroup, f64)> = grads
        .slices()
        .into_iter()
        .flat_map(|(g, s)| s.iter().map(move |&v| (g, v)))
        .collect();
    let mut checked = 0;
    let mut idx = 0;
    for (k, &(group, analytic)) in flat_grads.iter().enumerate() {
        if k % 7 != 0 {
            continue;
        }
        let mut plus = params.clone();
        let mut minus = params.clone();
        let (mut seen, mut theta) = (0, 0.0);
        for ((_, sp), (_, sm)) in plus.slices_mut().into_iter().zip(minus.slices_mut()) {
            if k < seen + sp.len() {
                theta = sp[k - seen];
                let h = 1e-5 * theta.abs().max(1.0);
                sp[k - seen] += h;
                sm[k - seen] -= h;
                break;
            }
            seen += sp.len();
        }
        let h = 1e-5 * f64::abs(theta).max(1.0);
        let numeric = (loss_of(&plus, &x, &p, &y) - loss_of(&minus, &x, &p, &y)) / (2.0 * h);
        let err = (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-6);
        assert!(err < 1e-4, "param {k} ({group:?}): {analytic} vs {numeric}");
        checked += 1;
        idx += 1;
    }
    assert!(checked > 50 && idx == checked);
}

#[test]
fn serialization_round_trip() {
    let net = NcbNetwork::random(NcbArch::tiny(), 12, 3).unwrap();
    for p in [ValuePrecision::F32, ValuePrecision::F16] {
        let cast = net.cast(p).unwrap();
        let bytes = cast.to_bytes();
        assert_eq!(NcbNetwork::from_bytes(&bytes).unwrap(), cast);
        assert!(NcbNetwork::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(NcbNetwork::from_bytes(&extra).is_err());
    }
}

fn degraded_pair(seed: u64) -> (VoxelGrid, VoxelGrid) {
    let src = random_grid(GridDims::new(8, 8, 8, 3).unwrap(), seed);
    let density: Vec<f32> = src.density().iter().map(|v| 0.6 * v).collect();
    let color: Vec<f32> = src.color().iter().map(|v| 0.5 * v + 0.1).collect();
    let restored = VoxelGrid::new(src.dims(), src.mask().clone(), density, color).unwrap();
    (src, restored)
}

fn quick_config() -> TrainConfig {
    TrainConfig {
        total_iters: 150,
        batch_voxels: 64,
        decay_every: 100,
        arch: NcbArch::tiny(),
        seed: 17,
        ..TrainConfig::desk()
    }
}

#[test]
fn training_reduces_loss_and_is_deterministic() {
    let (src, restored) = degraded_pair(4);
    let cfg = quick_config();
    let a = train_ncb(&src, &restored, &cfg).unwrap();
    let b = train_ncb(&src, &restored, &cfg).unwrap();
    assert_eq!(a.network, b.network);
    assert_eq!(a.log, b.log);
    assert_eq!(a.log.iterations, 150);
    assert!(a.log.final_loss < 0.5 * a.log.initial_loss, "{:?}", (a.log.initial_loss, a.log.final_loss));
    assert_eq!(a.network.precision, ValuePrecision::F16);
}

#[test]
fn training_on_identical_grids_stays_near_identity() {
    let (src, _) = degraded_pair(6);
    let cfg = TrainConfig {
        total_iters: 20,
        ..quick_config()
    };
    let out = train_ncb(&src, &src, &cfg).unwrap();
    assert_eq!(out.log.initial_loss, 0.0);
    assert!(out.log.final_loss < 0.05);
}

#[test]
fn holdout_is_excluded_and_reported() {
    let (src, restored) = degraded_pair(8);
    let cfg = TrainConfig {
        holdout_fraction: 0.2,
        total_iters: 5,
        ..quick_config()
    };
    let out = train_ncb(&src, &restored, &cfg).unwrap();
    assert_eq!(out.holdout.len(), crate::compress::retained_count(0.2, src.occupied()));
    assert!(out.holdout.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn mismatched_pair_is_rejected() {
    let (src, _) = degraded_pair(1);
    let other = random_grid(GridDims::new(8, 8, 8, 3).unwrap(), 99);
    assert!(matches!(
        train_ncb(&src, &other, &quick_config()),
        Err(Error::DimensionMismatch(_))
    ));
}
