//! Uncompressed grid interchange format:
//!
//! ```text
//! "VXGR" | u32 version (1) | 4 x u32 dims (H, W, K, C) | u8 precision | 3 reserved
//! packed occupancy mask (ceil(HWK / 8) bytes)
//! density values (n) | colour values (n * C), channel-major per voxel
//! ```

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::grid::{GridDims, OccupancyMask, ValuePrecision, VoxelGrid};

pub const RAW_MAGIC: [u8; 4] = *b"VXGR";
const RAW_VERSION: u32 = 1;
const RAW_HEADER: usize = 28;
const SECTION: &str = "VXGR";

fn malformed(reason: impl Into<String>) -> Error {
    Error::MalformedSection {
        section: SECTION.into(),
        reason: reason.into(),
    }
}

pub fn raw_grid_bytes(grid: &VoxelGrid, precision: ValuePrecision) -> Vec<u8> {
    let d = grid.dims();
    let mut out = Vec::new();
    out.extend_from_slice(&RAW_MAGIC);
    out.extend_from_slice(&RAW_VERSION.to_le_bytes());
    for v in [d.h, d.w, d.k, d.c] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.extend_from_slice(&[precision_code(precision), 0, 0, 0]);
    out.extend_from_slice(&grid.mask().to_packed_bytes());
    precision.encode(grid.density(), &mut out);
    precision.encode(grid.color(), &mut out);
    out
}

fn precision_code(p: ValuePrecision) -> u8 {
    match p {
        ValuePrecision::F32 => 0,
        ValuePrecision::F16 => 1,
    }
}

pub fn write_raw_grid<W: Write>(grid: &VoxelGrid, precision: ValuePrecision, sink: &mut W) -> Result<u64> {
    let bytes = raw_grid_bytes(grid, precision);
    sink.write_all(&bytes)?;
    Ok(bytes.len() as u64)
}

/// Decodes a raw grid and the precision it was stored at.
pub fn decode_raw_grid(bytes: &[u8]) -> Result<(VoxelGrid, ValuePrecision)> {
    if bytes.len() < 4 || bytes[..4] != RAW_MAGIC {
        return Err(Error::BadMagic { expected: RAW_MAGIC });
    }
    if bytes.len() < RAW_HEADER {
        return Err(Error::TruncatedSection {
            section: SECTION.into(),
        });
    }
    let u32_at = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
    let version = u32_at(4);
    if version != RAW_VERSION {
        return Err(Error::UnsupportedVersion { version });
    }
    let dims = GridDims::new(
        u32_at(8) as usize,
        u32_at(12) as usize,
        u32_at(16) as usize,
        u32_at(20) as usize,
    )?;
    let precision = match bytes[24] {
        0 => ValuePrecision::F32,
        1 => ValuePrecision::F16,
        other => return Err(malformed(format!("precision code {other}"))),
    };
    let mask_len = dims.voxel_count().div_ceil(8);
    let body = &bytes[RAW_HEADER..];
    if body.len() < mask_len {
        return Err(Error::TruncatedSection {
            section: SECTION.into(),
        });
    }
    let mask = OccupancyMask::from_packed_bytes(dims.shape(), &body[..mask_len])?;
    let n = mask.count();
    let bpv = precision.bytes_per_value();
    let expect = n * (1 + dims.c) * bpv;
    let values = &body[mask_len..];
    if values.len() < expect {
        return Err(Error::TruncatedSection {
            section: SECTION.into(),
        });
    }
    if values.len() > expect {
        return Err(malformed("trailing bytes"));
    }
    let decode = |b: &[u8]| precision.decode(b).expect("whole number of values");
    let density = decode(&values[..n * bpv]);
    let color = decode(&values[n * bpv..]);
    Ok((VoxelGrid::new(dims, mask, density, color)?, precision))
}

pub fn read_raw_grid<R: Read>(source: &mut R) -> Result<(VoxelGrid, ValuePrecision)> {
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes)?;
    decode_raw_grid(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> VoxelGrid {
        let dims = GridDims::new(3, 4, 5, 3).unwrap();
        let mask = OccupancyMask::from_fn(dims.shape(), |i| i % 3 == 1);
        let n = mask.count();
        let density = (0..n).map(|i| i as f32 * 0.25).collect();
        let color = (0..n * 3).map(|i| (i as f32 * 0.1).sin()).collect();
        VoxelGrid::new(dims, mask, density, color).unwrap()
    }

    #[test]
    fn f32_round_trip_is_exact() {
        let g = grid();
        let b = raw_grid_bytes(&g, ValuePrecision::F32);
        assert_eq!(b.len(), RAW_HEADER + 60usize.div_ceil(8) + g.occupied() * 4 * 4);
        let (back, p) = decode_raw_grid(&b).unwrap();
        assert_eq!(back, g);
        assert_eq!(p, ValuePrecision::F32);
    }

    #[test]
    fn f16_round_trip_quantizes() {
        let g = grid();
        let (back, p) = decode_raw_grid(&raw_grid_bytes(&g, ValuePrecision::F16)).unwrap();
        assert_eq!(p, ValuePrecision::F16);
        for (a, b) in g.color().iter().zip(back.color()) {
            assert_eq!(ValuePrecision::F16.quantize(*a), *b);
        }
    }

    #[test]
    fn rejects_damage() {
        let b = raw_grid_bytes(&grid(), ValuePrecision::F32);
        assert!(matches!(decode_raw_grid(b"NCBC0000"), Err(Error::BadMagic { .. })));
        assert!(matches!(
            decode_raw_grid(&b[..b.len() - 1]),
            Err(Error::TruncatedSection { .. })
        ));
        let mut extra = b.clone();
        extra.push(0);
        assert!(decode_raw_grid(&extra).is_err());
    }
}
