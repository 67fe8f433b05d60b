use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::network::{l1_loss, NcbArch, NcbNetwork, NcbParams, Tape};
use super::{voxel_encodings, voxel_inputs};
use crate::compress::retained_count;
use crate::error::{Error, Result};
use crate::grid::{ValuePrecision, VoxelGrid};

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    /// Multiplier applied to the learning rate every `decay_every` iterations.
    pub lr_decay: f64,
    pub decay_every: usize,
    pub total_iters: usize,
    pub batch_voxels: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub weight_decay: f64,
    /// Fold weight decay into the gradient instead of applying it to the
    /// weights directly.
    pub coupled_weight_decay: bool,
    pub lambda_c: f64,
    pub lambda_sigma: f64,
    pub seed: u64,
    /// Fraction of occupied voxels withheld from training.
    pub holdout_fraction: f64,
    pub output_precision: ValuePrecision,
    pub arch: NcbArch,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 5e-3,
            lr_decay: 0.3,
            decay_every: 5000,
            total_iters: 20000,
            batch_voxels: 100_000,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            weight_decay: 1e-5,
            coupled_weight_decay: false,
            lambda_c: 1.0,
            lambda_sigma: 1.0,
            seed: 0,
            holdout_fraction: 0.0,
            output_precision: ValuePrecision::F16,
            arch: NcbArch::default(),
        }
    }
}

impl TrainConfig {
    /// Schedule scaled down for small grids: 2000 iterations of 8192 voxels.
    pub fn desk() -> Self {
        Self {
            total_iters: 2000,
            batch_voxels: 8192,
            decay_every: 500,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        let positive = [
            ("lr", self.lr),
            ("lr_decay", self.lr_decay),
            ("beta1", self.beta1),
            ("beta2", self.beta2),
            ("adam_eps", self.adam_eps),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} = {v} must be > 0")));
            }
        }
        if self.beta1 >= 1.0 || self.beta2 >= 1.0 {
            return Err(Error::InvalidConfig("Adam betas must be < 1".into()));
        }
        for (name, v) in [
            ("weight_decay", self.weight_decay),
            ("lambda_c", self.lambda_c),
            ("lambda_sigma", self.lambda_sigma),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} = {v} must be >= 0")));
            }
        }
        if self.batch_voxels == 0 || self.decay_every == 0 {
            return Err(Error::InvalidConfig("batch size and decay period must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return Err(Error::InvalidConfig(format!(
                "holdout fraction {} outside [0, 1)",
                self.holdout_fraction
            )));
        }
        Ok(())
    }

    pub fn lr_at(&self, iteration: usize) -> f64 {
        self.lr * self.lr_decay.powi((iteration / self.decay_every) as i32)
    }
}

#[derive(Clone, Debug, Default, PartialEq, serde::Serialize)]
pub struct TrainLog {
    pub iterations: usize,
    /// Loss of every training batch, before its update.
    pub batch_losses: Vec<f64>,
    /// Loss over all training voxels before the first update.
    pub initial_loss: f64,
    /// Loss over all training voxels with the final, cast network.
    pub final_loss: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub network: NcbNetwork,
    pub log: TrainLog,
    /// Mask slots withheld from training, ascending.
    pub holdout: Vec<usize>,
}

struct Dataset {
    x: Array2<f32>,
    p: Array2<f32>,
    y: Array2<f32>,
}

fn dataset_loss(params: &NcbParams<f32>, d: &Dataset, rows: &[usize], cfg: &TrainConfig) -> f64 {
    let mut total = 0.0;
    for chunk in rows.chunks(8192) {
        let x = d.x.select(Axis(0), chunk);
        let p = d.p.select(Axis(0), chunk);
        let y = d.y.select(Axis(0), chunk);
        let out = params.forward(x.view(), p.view());
        let (l, _) = l1_loss(out.view(), y.view(), cfg.lambda_c, cfg.lambda_sigma);
        total += l * chunk.len() as f64;
    }
    total / rows.len().max(1) as f64
}

fn adam_step(
    params: &mut NcbParams<f32>,
    grads: &NcbParams<f32>,
    m: &mut NcbParams<f32>,
    v: &mut NcbParams<f32>,
    step: usize,
    lr: f64,
    cfg: &TrainConfig,
) {
    let bc1 = 1.0 - cfg.beta1.powi(step as i32);
    let bc2 = 1.0 - cfg.beta2.powi(step as i32);
    let (b1, b2) = (cfg.beta1 as f32, cfg.beta2 as f32);
    let wd = cfg.weight_decay as f32;
    let step_size = (lr / bc1) as f32;
    let inv_bc2 = (1.0 / bc2) as f32;
    let eps = cfg.adam_eps as f32;
    let decay = (lr * cfg.weight_decay) as f32;
    let gs = grads.slices();
    for ((((_, w), (_, g)), (_, m)), (_, v)) in params
        .slices_mut()
        .into_iter()
        .zip(gs)
        .zip(m.slices_mut())
        .zip(v.slices_mut())
    {
        for i in 0..w.len() {
            let mut gi = g[i];
            if cfg.coupled_weight_decay {
                gi += wd * w[i];
            }
            m[i] = b1 * m[i] + (1.0 - b1) * gi;
            v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
            let mut wi = w[i];
            if !cfg.coupled_weight_decay {
                wi -= decay * wi;
            }
            w[i] = wi - step_size * m[i] / ((v[i] * inv_bc2).sqrt() + eps);
        }
    }
}

fn check_pair(source: &VoxelGrid, restored: &VoxelGrid) -> Result<()> {
    if source.dims() != restored.dims() || source.mask() != restored.mask() {
        return Err(Error::DimensionMismatch(
            "source and restored grids must share dimensions and mask".into(),
        ));
    }
    if source.occupied() == 0 {
        return Err(Error::EmptyGrid);
    }
    Ok(())
}

/// Fits a network mapping `restored` voxel values to `source` values.
pub fn train_ncb(source: &VoxelGrid, restored: &VoxelGrid, cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_ncb_observed(source, restored, cfg, &mut |_, _| {})
}

/// As [`train_ncb`], reporting `(iteration, batch loss)` after every batch.
pub fn train_ncb_observed(
    source: &VoxelGrid,
    restored: &VoxelGrid,
    cfg: &TrainConfig,
    observer: &mut dyn FnMut(usize, f64),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    check_pair(source, restored)?;
    let c = source.dims().c;
    let mut net = NcbNetwork::identity(cfg.arch, c, cfg.seed)?;
    let indices: Vec<usize> = source.mask().iter_ones().collect();
    let data = Dataset {
        x: voxel_inputs(restored),
        p: voxel_encodings(&net.encoder, source.shape(), &indices),
        y: voxel_inputs(source),
    };

    let n = indices.len();
    let mut split_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_0f_401d_0u64);
    let mut slots: Vec<usize> = (0..n).collect();
    slots.shuffle(&mut split_rng);
    let n_hold = retained_count(cfg.holdout_fraction, n).min(n.saturating_sub(1));
    let mut holdout = slots[..n_hold].to_vec();
    holdout.sort_unstable();
    let mut train: Vec<usize> = slots[n_hold..].to_vec();
    train.sort_unstable();

    let mut log = TrainLog {
        initial_loss: dataset_loss(&net.params, &data, &train, cfg),
        ..TrainLog::default()
    };
    let mut m = net.params.zeros_like();
    let mut v = net.params.zeros_like();
    let mut grads = net.params.zeros_like();
    let mut tape = Tape::new();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order = train.clone();
    let mut cursor = order.len();
    let batch = cfg.batch_voxels.min(order.len());
    for it in 0..cfg.total_iters {
        if cursor >= order.len() {
            order.shuffle(&mut rng);
            cursor = 0;
        }
        let end = (cursor + batch).min(order.len());
        let rows = &order[cursor..end];
        cursor = end;
        let x = data.x.select(Axis(0), rows);
        let p = data.p.select(Axis(0), rows);
        let y = data.y.select(Axis(0), rows);
        let loss = batch_grad(&net.params, x.view(), p.view(), y.view(), cfg, &mut tape, &mut grads);
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { iteration: it });
        }
        log.batch_losses.push(loss);
        observer(it, loss);
        adam_step(&mut net.params, &grads, &mut m, &mut v, it + 1, cfg.lr_at(it), cfg);
        log.iterations = it + 1;
    }
    let net = net.cast(cfg.output_precision)?;
    log.final_loss = dataset_loss(&net.params, &data, &train, cfg);
    if !log.final_loss.is_finite() {
        return Err(Error::NonFiniteLoss {
            iteration: cfg.total_iters,
        });
    }
    Ok(TrainOutcome {
        network: net,
        log,
        holdout,
    })
}

fn batch_grad(
    params: &NcbParams<f32>,
    x: ArrayView2<f32>,
    p: ArrayView2<f32>,
    y: ArrayView2<f32>,
    cfg: &TrainConfig,
    tape: &mut Tape<f32>,
    grads: &mut NcbParams<f32>,
) -> f64 {
    params.forward_into(x, p, tape);
    let (loss, dout) = l1_loss(tape.output().view(), y, cfg.lambda_c, cfg.lambda_sigma);
    params.backward_into(tape, p, dout.view(), grads);
    loss
}
