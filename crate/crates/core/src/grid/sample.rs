use super::Shape;

/// The eight neighbours of a continuous voxel-space point together with
/// their trilinear weights.
///
/// Corner `j` sits at offset `(j >> 2 & 1, j >> 1 & 1, j & 1)` from the
/// lower corner, so `z` varies fastest like the storage order.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stencil {
    pub corners: [usize; 8],
    pub weights: [f64; 8],
}

impl Stencil {
    /// Stencil of `p`, clamped into `[0, n-1]` on every axis.
    #[inline]
    pub fn at(shape: &Shape, p: [f64; 3]) -> Self {
        let dims = shape.as_array();
        let mut base = [0usize; 3];
        let mut frac = [0.0f64; 3];
        for a in 0..3 {
            let hi = (dims[a] - 1) as f64;
            let q = p[a].clamp(0.0, hi);
            let i0 = (q.floor() as usize).min(dims[a] - 2);
            base[a] = i0;
            frac[a] = q - i0 as f64;
        }
        let wx = [1.0 - frac[0], frac[0]];
        let wy = [1.0 - frac[1], frac[1]];
        let wz = [1.0 - frac[2], frac[2]];
        let mut corners = [0usize; 8];
        let mut weights = [0.0f64; 8];
        for j in 0..8 {
            let (dx, dy, dz) = ((j >> 2) & 1, (j >> 1) & 1, j & 1);
            corners[j] = shape.linear(base[0] + dx, base[1] + dy, base[2] + dz);
            weights[j] = wx[dx] * wy[dy] * wz[dz];
        }
        Self { corners, weights }
    }
}
