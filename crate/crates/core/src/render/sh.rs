//! Real spherical harmonics up to degree 2.
//!
//! Coefficients of one voxel are laid out channel-major: `(deg+1)^2` values
//! for red, then green, then blue. Colour is the basis dot product shifted
//! by 0.5 and clamped to `[0, 1]`.

use super::camera::Vec3;
use crate::error::{Error, Result};

pub const SH_C0: f64 = 0.282_094_791_773_878_14;
pub const SH_C1: f64 = 0.488_602_511_902_919_9;
pub const SH_C2: [f64; 5] = [
    1.092_548_430_592_079_2,
    -1.092_548_430_592_079_2,
    0.315_391_565_252_520_05,
    -1.092_548_430_592_079_2,
    0.546_274_215_296_039_6,
];

/// Number of basis functions per channel for a colour-coefficient count.
pub fn basis_len(coeffs: usize) -> Result<usize> {
    match coeffs {
        3 => Ok(1),
        12 => Ok(4),
        27 => Ok(9),
        _ => Err(Error::UnsupportedDegree { coeffs }),
    }
}

/// Degree of the expansion for a colour-coefficient count.
pub fn degree_of(coeffs: usize) -> Result<usize> {
    Ok(match basis_len(coeffs)? {
        1 => 0,
        4 => 1,
        _ => 2,
    })
}

/// Basis values at unit direction `d`; entries past `(deg+1)^2` are unused.
#[inline]
pub fn sh_basis(d: Vec3) -> [f64; 9] {
    let [x, y, z] = d;
    [
        SH_C0,
        -SH_C1 * y,
        SH_C1 * z,
        -SH_C1 * x,
        SH_C2[0] * x * y,
        SH_C2[1] * y * z,
        SH_C2[2] * (2.0 * z * z - x * x - y * y),
        SH_C2[3] * x * z,
        SH_C2[4] * (x * x - y * y),
    ]
}

/// Pre-activation colour from interpolated coefficients and a basis.
#[inline]
pub(crate) fn raw_color(coeffs: &[f64], basis: &[f64; 9], nb: usize) -> [f64; 3] {
    let mut out = [0.0; 3];
    for (ch, o) in out.iter_mut().enumerate() {
        let block = &coeffs[ch * nb..(ch + 1) * nb];
        *o = block.iter().zip(basis.iter()).map(|(a, b)| a * b).sum();
    }
    out
}

#[inline]
pub(crate) fn activate(raw: [f64; 3]) -> [f64; 3] {
    raw.map(|v| (v + 0.5).clamp(0.0, 1.0))
}

/// RGB colour of a voxel's coefficients seen from direction `d`.
pub fn eval_sh(coeffs: &[f32], d: Vec3) -> Result<[f64; 3]> {
    let nb = basis_len(coeffs.len())?;
    let c: Vec<f64> = coeffs.iter().map(|&v| v as f64).collect();
    Ok(activate(raw_color(&c, &sh_basis(d), nb)))
}
