use ndarray::{s, Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::encoding::PositionalEncoder;
use super::layers::{AdaLnLayer, LayerCache, Linear, Real};
use crate::error::{Error, Result};
use crate::grid::ValuePrecision;

/// Layer counts and widths of the refinement network.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct NcbArch {
    pub l_count: usize,
    pub trunk_layers: usize,
    pub trunk_width: usize,
    pub density_layers: usize,
    pub density_width: usize,
    pub color_layers: usize,
    pub color_width: usize,
}

impl Default for NcbArch {
    fn default() -> Self {
        Self {
            l_count: 16,
            trunk_layers: 2,
            trunk_width: 128,
            density_layers: 2,
            density_width: 64,
            color_layers: 4,
            color_width: 128,
        }
    }
}

impl NcbArch {
    /// A small network for tests.
    pub fn tiny() -> Self {
        Self {
            l_count: 4,
            trunk_layers: 1,
            trunk_width: 12,
            density_layers: 1,
            density_width: 6,
            color_layers: 3,
            color_width: 8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            self.l_count,
            self.trunk_layers,
            self.trunk_width,
            self.density_layers,
            self.density_width,
            self.color_layers,
            self.color_width,
        ];
        if fields.iter().any(|&v| v == 0 || v > 1 << 16) {
            return Err(Error::InvalidConfig(format!("network shape {self:?} out of range")));
        }
        if self.color_layers != self.density_layers + 2 {
            return Err(Error::InvalidConfig(
                "colour branch must have exactly two more layers than the density branch".into(),
            ));
        }
        if self.color_width < self.density_width {
            return Err(Error::InvalidConfig(
                "colour branch must be at least as wide as the density branch".into(),
            ));
        }
        Ok(())
    }
}

/// Which part of the network a parameter belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ParamGroup {
    TrunkLinear,
    TrunkModulation,
    DensityLinear,
    DensityModulation,
    DensityHead,
    ColorLinear,
    ColorModulation,
    ColorHead,
}

/// Trainable parameters. Gradients and optimiser moments reuse this type.
#[derive(Clone, Debug, PartialEq)]
pub struct NcbParams<T> {
    pub trunk: Vec<AdaLnLayer<T>>,
    pub density_branch: Vec<AdaLnLayer<T>>,
    pub density_head: Linear<T>,
    pub color_branch: Vec<AdaLnLayer<T>>,
    pub color_head: Linear<T>,
}

/// Activations, caches and scratch buffers of one forward and backward
/// pass. Reusing a tape for batches of one size avoids reallocating them.
#[derive(Clone, Debug, Default)]
pub struct Tape<T> {
    input: Array2<T>,
    trunk: Vec<LayerCache<T>>,
    density: Vec<LayerCache<T>>,
    color: Vec<LayerCache<T>>,
    out: Array2<T>,
    dtrunk: Array2<T>,
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Network output of the last forward pass.
    pub fn output(&self) -> &Array2<T> {
        &self.out
    }
}

fn chain_output<'a, T: Real>(caches: &'a [LayerCache<T>], input: &'a Array2<T>) -> &'a Array2<T> {
    caches.last().map_or(input, |c| c.output())
}

fn run_chain<T: Real>(layers: &[AdaLnLayer<T>], input: ArrayView2<T>, p: ArrayView2<T>, caches: &mut Vec<LayerCache<T>>) {
    caches.resize_with(layers.len(), LayerCache::default);
    for (i, layer) in layers.iter().enumerate() {
        let (done, rest) = caches.split_at_mut(i);
        let x = if i == 0 { input } else { done[i - 1].output().view() };
        layer.forward_into(x, p, &mut rest[0]);
    }
}

/// Leaves `dL/dinput` in the first cache (or in `dlast` for an empty chain)
/// when `input_grad` is set.
fn back_chain<T: Real>(
    layers: &[AdaLnLayer<T>],
    caches: &mut [LayerCache<T>],
    input: ArrayView2<T>,
    p: ArrayView2<T>,
    dlast: &mut Array2<T>,
    grads: &mut [AdaLnLayer<T>],
    input_grad: bool,
) {
    let n = layers.len();
    for i in (0..n).rev() {
        let (lo, hi) = caches.split_at_mut(i + 1);
        let (before, cache) = lo.split_at_mut(i);
        let x = if i == 0 { input } else { before[i - 1].output().view() };
        let dout = if i + 1 == n { &mut *dlast } else { &mut hi[0].dx };
        layers[i].backward_into(x, p, &mut cache[0], dout, &mut grads[i], i > 0 || input_grad);
    }
}

fn chain_input_grad<'a, T: Real>(caches: &'a [LayerCache<T>], dlast: &'a Array2<T>) -> &'a Array2<T> {
    caches.first().map_or(dlast, |c| c.input_grad())
}

impl<T: Real> NcbParams<T> {
    fn build(
        arch: &NcbArch,
        channels: usize,
        seed: u64,
        layer: impl Fn(usize, usize, usize, &mut ChaCha8Rng) -> AdaLnLayer<T>,
        zero_heads: bool,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let enc = 2 * arch.l_count;
        let stack = |n: usize, input: usize, width: usize, rng: &mut ChaCha8Rng| {
            (0..n)
                .map(|i| layer(if i == 0 { input } else { width }, width, enc, rng))
                .collect::<Vec<_>>()
        };
        let trunk = stack(arch.trunk_layers, 1 + channels, arch.trunk_width, &mut rng);
        let density_branch = stack(arch.density_layers, arch.trunk_width, arch.density_width, &mut rng);
        let color_branch = stack(arch.color_layers, arch.trunk_width, arch.color_width, &mut rng);
        let (density_head, color_head) = if zero_heads {
            (Linear::zeros(arch.density_width, 1), Linear::zeros(arch.color_width, channels))
        } else {
            (
                Linear::uniform(arch.density_width, 1, &mut rng),
                Linear::uniform(arch.color_width, channels, &mut rng),
            )
        };
        Self {
            trunk,
            density_branch,
            density_head,
            color_branch,
            color_head,
        }
    }

    /// Residual-identity initialisation: zero heads and unit modulation.
    pub fn identity_init(arch: &NcbArch, channels: usize, seed: u64) -> Self {
        Self::build(arch, channels, seed, AdaLnLayer::new_identity, true)
    }

    /// Every parameter random, including heads and modulation maps.
    pub fn random_init(arch: &NcbArch, channels: usize, seed: u64) -> Self {
        Self::build(arch, channels, seed, AdaLnLayer::new_random, false)
    }

    pub fn channels(&self) -> usize {
        self.color_head.outputs()
    }

    pub fn enc_dim(&self) -> usize {
        self.trunk[0].modulation.inputs()
    }

    /// Refined `[sigma, c...]` rows for input rows `x` and encodings `p`.
    pub fn forward(&self, x: ArrayView2<T>, p: ArrayView2<T>) -> Array2<T> {
        let mut h = x.to_owned();
        for l in &self.trunk {
            h = l.forward(h.view(), p);
        }
        let mut hd = h.clone();
        for l in &self.density_branch {
            hd = l.forward(hd.view(), p);
        }
        let mut hc = h;
        for l in &self.color_branch {
            hc = l.forward(hc.view(), p);
        }
        let mut out = x.to_owned();
        out.slice_mut(s![.., 0..1]).scaled_add(T::one(), &self.density_head.forward(hd.view()));
        out.slice_mut(s![.., 1..]).scaled_add(T::one(), &self.color_head.forward(hc.view()));
        out
    }

    pub fn forward_tape(&self, x: ArrayView2<T>, p: ArrayView2<T>) -> (Array2<T>, Tape<T>) {
        let mut tape = Tape::new();
        self.forward_into(x, p, &mut tape);
        (tape.out.clone(), tape)
    }

    /// Forward pass recording into `tape`; the output is `tape.output()`.
    pub fn forward_into(&self, x: ArrayView2<T>, p: ArrayView2<T>, tape: &mut Tape<T>) {
        let Tape {
            input,
            trunk,
            density,
            color,
            out,
            ..
        } = tape;
        if input.dim() != x.dim() {
            *input = Array2::zeros(x.dim());
        }
        input.assign(&x);
        run_chain(&self.trunk, input.view(), p, trunk);
        let h = chain_output(trunk, input);
        run_chain(&self.density_branch, h.view(), p, density);
        run_chain(&self.color_branch, h.view(), p, color);
        *out = x.to_owned();
        out.slice_mut(s![.., 0..1])
            .scaled_add(T::one(), &self.density_head.forward(chain_output(density, h).view()));
        out.slice_mut(s![.., 1..])
            .scaled_add(T::one(), &self.color_head.forward(chain_output(color, h).view()));
    }

    /// Gradients of a loss with output gradient `dout` (same shape as the
    /// forward output recorded in `tape`).
    pub fn backward(&self, tape: &mut Tape<T>, p: ArrayView2<T>, dout: ArrayView2<T>) -> NcbParams<T> {
        let mut g = self.zeros_like();
        self.backward_into(tape, p, dout, &mut g);
        g
    }

    /// As [`Self::backward`], overwriting `grads`.
    pub fn backward_into(&self, tape: &mut Tape<T>, p: ArrayView2<T>, dout: ArrayView2<T>, grads: &mut NcbParams<T>) {
        for (_, v) in grads.slices_mut() {
            v.fill(T::zero());
        }
        let Tape {
            input,
            trunk,
            density,
            color,
            dtrunk,
            ..
        } = tape;
        let h = chain_output(trunk, input);
        let mut dd = self.density_head.backward(
            chain_output(density, h).view(),
            dout.slice(s![.., 0..1]),
            &mut grads.density_head,
        );
        let mut dc = self.color_head.backward(
            chain_output(color, h).view(),
            dout.slice(s![.., 1..]),
            &mut grads.color_head,
        );
        back_chain(&self.density_branch, density, h.view(), p, &mut dd, &mut grads.density_branch, true);
        back_chain(&self.color_branch, color, h.view(), p, &mut dc, &mut grads.color_branch, true);
        let gd = chain_input_grad(density, &dd);
        if dtrunk.dim() != gd.dim() {
            *dtrunk = Array2::zeros(gd.dim());
        }
        dtrunk.assign(gd);
        *dtrunk += chain_input_grad(color, &dc);
        let (trunk_layers, trunk_input) = (&self.trunk, input.view());
        back_chain(trunk_layers, trunk, trunk_input, p, dtrunk, &mut grads.trunk, false);
    }

    pub fn zeros_like(&self) -> Self {
        self.map(|_| T::zero())
    }

    pub fn map<U: Real>(&self, f: impl Fn(T) -> U + Copy) -> NcbParams<U> {
        NcbParams {
            trunk: self.trunk.iter().map(|l| l.map(f)).collect(),
            density_branch: self.density_branch.iter().map(|l| l.map(f)).collect(),
            density_head: self.density_head.map(f),
            color_branch: self.color_branch.iter().map(|l| l.map(f)).collect(),
            color_head: self.color_head.map(f),
        }
    }

    /// Every parameter array in canonical order with its group.
    pub fn slices(&self) -> Vec<(ParamGroup, &[T])> {
        fn push_stack<'a, T: Real>(
            layers: &'a [AdaLnLayer<T>],
            lin: ParamGroup,
            m: ParamGroup,
            out: &mut Vec<(ParamGroup, &'a [T])>,
        ) {
            for l in layers {
                out.push((lin, l.linear.weight.as_slice().unwrap()));
                out.push((lin, l.linear.bias.as_slice().unwrap()));
                out.push((m, l.modulation.weight.as_slice().unwrap()));
                out.push((m, l.modulation.bias.as_slice().unwrap()));
            }
        }
        let mut out = Vec::new();
        use ParamGroup::*;
        push_stack(&self.trunk, TrunkLinear, TrunkModulation, &mut out);
        push_stack(&self.density_branch, DensityLinear, DensityModulation, &mut out);
        out.push((DensityHead, self.density_head.weight.as_slice().unwrap()));
        out.push((DensityHead, self.density_head.bias.as_slice().unwrap()));
        push_stack(&self.color_branch, ColorLinear, ColorModulation, &mut out);
        out.push((ColorHead, self.color_head.weight.as_slice().unwrap()));
        out.push((ColorHead, self.color_head.bias.as_slice().unwrap()));
        out
    }

    /// Mutable counterpart of [`NcbParams::slices`], same order.
    pub fn slices_mut(&mut self) -> Vec<(ParamGroup, &mut [T])> {
        use ParamGroup::*;
        let mut out: Vec<(ParamGroup, &mut [T])> = Vec::new();
        fn stack<'a, T: Real>(
            layers: &'a mut [AdaLnLayer<T>],
            lin: ParamGroup,
            m: ParamGroup,
            out: &mut Vec<(ParamGroup, &'a mut [T])>,
        ) {
            for l in layers {
                out.push((lin, l.linear.weight.as_slice_mut().unwrap()));
                out.push((lin, l.linear.bias.as_slice_mut().unwrap()));
                out.push((m, l.modulation.weight.as_slice_mut().unwrap()));
                out.push((m, l.modulation.bias.as_slice_mut().unwrap()));
            }
        }
        stack(&mut self.trunk, TrunkLinear, TrunkModulation, &mut out);
        stack(&mut self.density_branch, DensityLinear, DensityModulation, &mut out);
        out.push((DensityHead, self.density_head.weight.as_slice_mut().unwrap()));
        out.push((DensityHead, self.density_head.bias.as_slice_mut().unwrap()));
        stack(&mut self.color_branch, ColorLinear, ColorModulation, &mut out);
        out.push((ColorHead, self.color_head.weight.as_slice_mut().unwrap()));
        out.push((ColorHead, self.color_head.bias.as_slice_mut().unwrap()));
        out
    }

    pub fn param_count(&self) -> usize {
        self.slices().iter().map(|(_, s)| s.len()).sum()
    }
}

/// Mean weighted L1 loss between `out` and `target` rows (`[sigma, c...]`)
/// and its gradient with respect to `out`. The gradient of `|r|` at `r = 0`
/// is taken as zero.
pub fn l1_loss<T: Real>(
    out: ArrayView2<T>,
    target: ArrayView2<T>,
    lambda_c: f64,
    lambda_sigma: f64,
) -> (f64, Array2<T>) {
    let b = out.nrows().max(1) as f64;
    let mut loss = 0.0;
    let mut grad = Array2::zeros(out.raw_dim());
    for ((idx, &o), &t) in out.indexed_iter().zip(target.iter()) {
        let lambda = if idx.1 == 0 { lambda_sigma } else { lambda_c };
        let r = o - t;
        loss += lambda * r.f64().abs();
        let sign = if r > T::zero() {
            1.0
        } else if r < T::zero() {
            -1.0
        } else {
            0.0
        };
        grad[idx] = T::of(sign * lambda / b);
    }
    (loss / b, grad)
}

/// Loss and exact parameter gradients for one batch.
pub fn ncb_backward<T: Real>(
    params: &NcbParams<T>,
    x: ArrayView2<T>,
    p: ArrayView2<T>,
    target: ArrayView2<T>,
    lambda_c: f64,
    lambda_sigma: f64,
) -> Result<(f64, NcbParams<T>)> {
    if x.nrows() == 0 {
        return Err(Error::InvalidConfig("empty batch".into()));
    }
    if x.shape() != target.shape() || p.nrows() != x.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "batch inputs {:?}, encodings {:?}, targets {:?}",
            x.shape(),
            p.shape(),
            target.shape()
        )));
    }
    let (out, mut tape) = params.forward_tape(x, p);
    let (loss, dout) = l1_loss(out.view(), target, lambda_c, lambda_sigma);
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss { iteration: 0 });
    }
    Ok((loss, params.backward(&mut tape, p, dout.view())))
}

/// A trained refinement network: positional encoder plus parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct NcbNetwork {
    pub arch: NcbArch,
    pub encoder: PositionalEncoder,
    pub params: NcbParams<f32>,
    pub precision: ValuePrecision,
}

impl NcbNetwork {
    /// Residual-identity network; refining with it changes nothing.
    pub fn identity(arch: NcbArch, channels: usize, seed: u64) -> Result<Self> {
        arch.validate()?;
        Ok(Self {
            arch,
            encoder: PositionalEncoder::sample(arch.l_count, seed),
            params: NcbParams::identity_init(&arch, channels, seed.wrapping_add(1)),
            precision: ValuePrecision::F32,
        })
    }

    /// Network with every parameter randomly initialised.
    pub fn random(arch: NcbArch, channels: usize, seed: u64) -> Result<Self> {
        arch.validate()?;
        Ok(Self {
            arch,
            encoder: PositionalEncoder::sample(arch.l_count, seed),
            params: NcbParams::random_init(&arch, channels, seed.wrapping_add(1)),
            precision: ValuePrecision::F32,
        })
    }

    pub fn channels(&self) -> usize {
        self.params.channels()
    }

    /// Rounds every weight to `precision`; the encoder basis stays `f32`.
    pub fn cast(&self, precision: ValuePrecision) -> Result<Self> {
        let mut out = self.clone();
        for (_, s) in out.params.slices_mut() {
            precision.quantize_slice(s)?;
        }
        out.precision = precision;
        Ok(out)
    }
}
