use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::grid::Shape;

/// Random Fourier features of a normalised voxel position:
/// `[cos(2 pi a_1 . v), sin(2 pi a_1 . v), cos(2 pi a_2 . v), ...]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PositionalEncoder {
    basis: Vec<[f32; 3]>,
}

impl PositionalEncoder {
    /// `l_count` frequencies drawn from a standard normal distribution.
    pub fn sample(l_count: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let basis = (0..l_count)
            .map(|_| {
                let mut a = [0.0f32; 3];
                for v in &mut a {
                    *v = <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng) as f32;
                }
                a
            })
            .collect();
        Self { basis }
    }

    pub fn from_basis(basis: Vec<[f32; 3]>) -> Self {
        Self { basis }
    }

    pub fn basis(&self) -> &[[f32; 3]] {
        &self.basis
    }

    pub fn l_count(&self) -> usize {
        self.basis.len()
    }

    pub fn dim(&self) -> usize {
        2 * self.basis.len()
    }

    /// Encoding of a point in `[0, 1]^3`, written to `out` (length `2L`).
    pub fn encode_into(&self, v: [f64; 3], out: &mut [f64]) {
        let tau = 2.0 * std::f64::consts::PI;
        for (l, a) in self.basis.iter().enumerate() {
            let phase = tau * (a[0] as f64 * v[0] + a[1] as f64 * v[1] + a[2] as f64 * v[2]);
            out[2 * l] = phase.cos();
            out[2 * l + 1] = phase.sin();
        }
    }

    pub fn encode(&self, v: [f64; 3]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.encode_into(v, &mut out);
        out
    }

    /// Encoding of integer voxel coordinates, normalised by `dim - 1`.
    pub fn encode_voxel(&self, coords: [usize; 3], shape: Shape) -> Vec<f64> {
        self.encode(normalized(coords, shape))
    }
}

pub fn normalized(coords: [usize; 3], shape: Shape) -> [f64; 3] {
    let d = shape.as_array();
    [
        coords[0] as f64 / (d[0] - 1) as f64,
        coords[1] as f64 / (d[1] - 1) as f64,
        coords[2] as f64 / (d[2] - 1) as f64,
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn origin_gives_unit_cosines() {
        let e = PositionalEncoder::sample(16, 3);
        let p = e.encode([0.0; 3]);
        assert_eq!(p.len(), 32);
        for l in 0..16 {
            assert_eq!(p[2 * l], 1.0);
            assert_eq!(p[2 * l + 1], 0.0);
        }
    }

    #[test]
    fn half_period_along_x() {
        let e = PositionalEncoder::from_basis(vec![[1.0, 0.0, 0.0]]);
        let p = e.encode([0.5, 0.3, 0.9]);
        assert!((p[0] + 1.0).abs() < 1e-12);
        assert!(p[1].abs() < 1e-12);
    }

    #[test]
    fn matches_direct_evaluation_and_is_bounded() {
        let e = PositionalEncoder::sample(8, 11);
        let shape = Shape::new(5, 9, 17).unwrap();
        let c = [3, 2, 16];
        let p = e.encode_voxel(c, shape);
        let v = [0.75, 0.25, 1.0];
        for (l, a) in e.basis().iter().enumerate() {
            let dot = a[0] as f64 * v[0] + a[1] as f64 * v[1] + a[2] as f64 * v[2];
            let ang = 2.0 * std::f64::consts::PI * dot;
            assert!((p[2 * l] - ang.cos()).abs() < 1e-12);
            assert!((p[2 * l + 1] - ang.sin()).abs() < 1e-12);
        }
        assert!(p.iter().all(|x| (-1.0..=1.0).contains(x)));
        assert_eq!(PositionalEncoder::sample(8, 11), e);
    }
}
