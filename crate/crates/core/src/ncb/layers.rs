use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;

/// Floating-point element type of network parameters.
pub trait Real:
    ndarray::LinalgScalar
    + ndarray::ScalarOperand
    + num_traits::Float
    + std::ops::AddAssign
    + std::ops::SubAssign
    + Default
    + Send
    + Sync
    + std::fmt::Debug
    + 'static
{
    fn of(v: f64) -> Self;
    fn f64(self) -> f64;
}

impl Real for f32 {
    #[inline]
    fn of(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    #[inline]
    fn of(v: f64) -> Self {
        v
    }
    #[inline]
    fn f64(self) -> f64 {
        self
    }
}

pub const LEAKY_SLOPE: f64 = 0.01;
pub const ADALN_EPS: f64 = 1e-5;

/// Fully connected map `y = x W + b` with `W` stored as `in x out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear<T> {
    pub weight: Array2<T>,
    pub bias: Array1<T>,
}

impl<T: Real> Linear<T> {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weight: Array2::zeros((inputs, outputs)),
            bias: Array1::zeros(outputs),
        }
    }

    /// Weights and biases uniform in `[-1/sqrt(in), 1/sqrt(in)]`.
    pub fn uniform<R: Rng>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        let mut draw = || T::of(rng.random_range(-bound..bound));
        Self {
            weight: Array2::from_shape_simple_fn((inputs, outputs), &mut draw),
            bias: Array1::from_shape_simple_fn(outputs, &mut draw),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.nrows()
    }

    pub fn outputs(&self) -> usize {
        self.weight.ncols()
    }

    pub fn forward(&self, x: ArrayView2<T>) -> Array2<T> {
        let mut y = x.dot(&self.weight);
        y += &self.bias;
        y
    }

    /// Accumulates parameter gradients into `grad` and returns `dL/dx`.
    pub fn backward(&self, x: ArrayView2<T>, dy: ArrayView2<T>, grad: &mut Linear<T>) -> Array2<T> {
        self.accumulate(x, dy, grad);
        dy.dot(&self.weight.t())
    }

    fn accumulate(&self, x: ArrayView2<T>, dy: ArrayView2<T>, grad: &mut Linear<T>) {
        general_mat_mul(T::one(), &x.t(), &dy, T::one(), &mut grad.weight);
        grad.bias += &dy.sum_axis(Axis(0));
    }

    pub(crate) fn map<U: Real>(&self, f: impl Fn(T) -> U) -> Linear<U> {
        Linear {
            weight: self.weight.mapv(&f),
            bias: self.bias.mapv(&f),
        }
    }
}

/// Linear layer followed by adaptive layer normalisation and LeakyReLU.
/// `modulation` maps the positional encoding to `[y_s | y_b]`.
#[derive(Clone, Debug, PartialEq)]
pub struct AdaLnLayer<T> {
    pub linear: Linear<T>,
    pub modulation: Linear<T>,
}

/// Intermediate values kept for the backward pass, plus scratch space for
/// it. Buffers are reused across calls of the same batch size.
#[derive(Clone, Debug, Default)]
pub struct LayerCache<T> {
    /// Layer output.
    out: Array2<T>,
    hhat: Array2<T>,
    inv_nu: Array1<T>,
    /// Modulation output `[y_s | y_b]`.
    m: Array2<T>,
    dm: Array2<T>,
    pub(crate) dx: Array2<T>,
}

impl<T: Real> LayerCache<T> {
    pub fn output(&self) -> &Array2<T> {
        &self.out
    }

    /// `dL/dx` from the last backward pass.
    pub fn input_grad(&self) -> &Array2<T> {
        &self.dx
    }
}

fn ensure<T: Real>(a: &mut Array2<T>, rows: usize, cols: usize) {
    if a.dim() != (rows, cols) {
        *a = Array2::zeros((rows, cols));
    }
}

/// Sum of `f(i)` over `0..n` in eight interleaved partial sums, so the
/// loop vectorises. The order is fixed, so results are reproducible.
#[inline]
fn lane_sum<T: Real>(n: usize, f: impl Fn(usize) -> T) -> T {
    let mut acc = [T::zero(); 8];
    let full = n / 8 * 8;
    for i in (0..full).step_by(8) {
        for (k, a) in acc.iter_mut().enumerate() {
            *a += f(i + k);
        }
    }
    for i in full..n {
        acc[i - full] += f(i);
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]))
}

impl<T: Real> AdaLnLayer<T> {
    pub fn width(&self) -> usize {
        self.linear.outputs()
    }

    /// Identity modulation: `y_s = 1`, `y_b = 0` for every input.
    pub fn new_identity<R: Rng>(inputs: usize, width: usize, enc_dim: usize, rng: &mut R) -> Self {
        let mut modulation = Linear::zeros(enc_dim, 2 * width);
        modulation.bias.slice_mut(s![..width]).fill(T::one());
        Self {
            linear: Linear::uniform(inputs, width, rng),
            modulation,
        }
    }

    pub fn new_random<R: Rng>(inputs: usize, width: usize, enc_dim: usize, rng: &mut R) -> Self {
        let mut modulation = Linear::uniform(enc_dim, 2 * width, rng);
        modulation.bias.slice_mut(s![..width]).mapv_inplace(|v| v + T::one());
        Self {
            linear: Linear::uniform(inputs, width, rng),
            modulation,
        }
    }

    pub fn forward(&self, x: ArrayView2<T>, p: ArrayView2<T>) -> Array2<T> {
        let mut cache = LayerCache::default();
        self.forward_into(x, p, &mut cache);
        cache.out
    }

    pub fn forward_cached(&self, x: ArrayView2<T>, p: ArrayView2<T>) -> (Array2<T>, LayerCache<T>) {
        let mut cache = LayerCache::default();
        self.forward_into(x, p, &mut cache);
        (cache.out.clone(), cache)
    }

    /// Forward pass writing the output and backward state into `cache`.
    /// One pass per row: bias, standardisation, modulation and activation.
    pub fn forward_into(&self, x: ArrayView2<T>, p: ArrayView2<T>, cache: &mut LayerCache<T>) {
        let w = self.width();
        let rows = x.nrows();
        ensure(&mut cache.hhat, rows, w);
        ensure(&mut cache.m, rows, 2 * w);
        ensure(&mut cache.out, rows, w);
        if cache.inv_nu.len() != rows {
            cache.inv_nu = Array1::zeros(rows);
        }
        general_mat_mul(T::one(), &x, &self.linear.weight, T::zero(), &mut cache.hhat);
        general_mat_mul(T::one(), &p, &self.modulation.weight, T::zero(), &mut cache.m);
        let eps = T::of(ADALN_EPS);
        let slope = T::of(LEAKY_SLOPE);
        let b = self.linear.bias.as_slice().expect("contiguous bias");
        let bm = self.modulation.bias.as_slice().expect("contiguous bias");
        let hs = cache.hhat.as_slice_mut().expect("standard layout");
        let ms = cache.m.as_slice_mut().expect("standard layout");
        let os = cache.out.as_slice_mut().expect("standard layout");
        let inv_nu = cache.inv_nu.as_slice_mut().expect("standard layout");
        for r in 0..rows {
            let h = &mut hs[r * w..(r + 1) * w];
            for (v, &bb) in h.iter_mut().zip(b) {
                *v += bb;
            }
            let n = T::of(w as f64);
            let mu = lane_sum(w, |j| h[j]) / n;
            let var = lane_sum(w, |j| (h[j] - mu) * (h[j] - mu)) / n;
            let inv = T::one() / (var + eps).sqrt();
            inv_nu[r] = inv;
            let mr = &mut ms[r * 2 * w..(r + 1) * 2 * w];
            for (v, &bb) in mr.iter_mut().zip(bm) {
                *v += bb;
            }
            let (ys, yb) = mr.split_at(w);
            let or = &mut os[r * w..(r + 1) * w];
            for j in 0..w {
                let hn = (h[j] - mu) * inv;
                h[j] = hn;
                let zz = ys[j] * hn + yb[j];
                or[j] = if zz > T::zero() { zz } else { zz * slope };
            }
        }
    }

    /// Accumulates gradients into `grad` and returns `dL/dx`.
    pub fn backward(
        &self,
        x: ArrayView2<T>,
        p: ArrayView2<T>,
        cache: &LayerCache<T>,
        dout: Array2<T>,
        grad: &mut AdaLnLayer<T>,
    ) -> Array2<T> {
        let mut cache = cache.clone();
        let mut dz = dout.as_standard_layout().into_owned();
        self.backward_into(x, p, &mut cache, &mut dz, grad, true);
        cache.dx
    }

    /// Accumulates gradients into `grad`, overwriting `dout` with `dL/dz`
    /// scratch. With `input_grad`, `dL/dx` lands in the cache.
    pub fn backward_into(
        &self,
        x: ArrayView2<T>,
        p: ArrayView2<T>,
        cache: &mut LayerCache<T>,
        dout: &mut Array2<T>,
        grad: &mut AdaLnLayer<T>,
        input_grad: bool,
    ) {
        let w = self.width();
        let rows = dout.nrows();
        let slope = T::of(LEAKY_SLOPE);
        ensure(&mut cache.dm, rows, 2 * w);
        let hs = cache.hhat.as_slice().expect("standard layout");
        let ms = cache.m.as_slice().expect("standard layout");
        let ds = dout.as_slice_mut().expect("standard layout");
        let dms = cache.dm.as_slice_mut().expect("standard layout");
        for r in 0..rows {
            let d = &mut ds[r * w..(r + 1) * w];
            let h = &hs[r * w..(r + 1) * w];
            let (ys, yb) = ms[r * 2 * w..(r + 1) * 2 * w].split_at(w);
            let (dys, dyb) = dms[r * 2 * w..(r + 1) * 2 * w].split_at_mut(w);
            // d becomes dL/dz, then dL/dhhat
            for j in 0..w {
                let z = ys[j] * h[j] + yb[j];
                let g = if z <= T::zero() { d[j] * slope } else { d[j] };
                dys[j] = g * h[j];
                dyb[j] = g;
                d[j] = g * ys[j];
            }
            let n = T::of(w as f64);
            let mean_d = lane_sum(w, |j| d[j]) / n;
            let mean_dh = lane_sum(w, |j| d[j] * h[j]) / n;
            let inv = cache.inv_nu[r];
            for j in 0..w {
                d[j] = inv * (d[j] - mean_d - h[j] * mean_dh);
            }
        }
        self.modulation.accumulate(p, cache.dm.view(), &mut grad.modulation);
        self.linear.accumulate(x, dout.view(), &mut grad.linear);
        if input_grad {
            ensure(&mut cache.dx, rows, self.linear.inputs());
            general_mat_mul(T::one(), &dout.view(), &self.linear.weight.t(), T::zero(), &mut cache.dx);
        }
    }

    pub(crate) fn map<U: Real>(&self, f: impl Fn(T) -> U + Copy) -> AdaLnLayer<U> {
        AdaLnLayer {
            linear: self.linear.map(f),
            modulation: self.modulation.map(f),
        }
    }
}
