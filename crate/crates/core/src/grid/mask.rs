//! Bit-packed occupancy masks.
//!
//! A mask replaces per-voxel data pointers: bit `i` (row-major, `k` fastest)
//! says whether linear voxel `i` is stored, and the rank of a set bit is its
//! slot in the dense value arrays.

use super::Shape;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OccupancyMask {
    shape: Shape,
    words: Vec<u64>,
    /// Number of set bits strictly before each word.
    ranks: Vec<usize>,
    count: usize,
}

impl OccupancyMask {
    fn from_words(shape: Shape, words: Vec<u64>) -> Self {
        let mut ranks = Vec::with_capacity(words.len());
        let mut count = 0usize;
        for w in &words {
            ranks.push(count);
            count += w.count_ones() as usize;
        }
        Self {
            shape,
            words,
            ranks,
            count,
        }
    }

    fn word_count(shape: &Shape) -> usize {
        shape.voxel_count().div_ceil(64)
    }

    pub fn empty(shape: Shape) -> Self {
        Self::from_words(shape, vec![0; Self::word_count(&shape)])
    }

    pub fn dense(shape: Shape) -> Self {
        Self::from_fn(shape, |_| true)
    }

    /// Builds a mask by evaluating `occupied` for every linear index.
    pub fn from_fn(shape: Shape, mut occupied: impl FnMut(usize) -> bool) -> Self {
        let n = shape.voxel_count();
        let mut words = vec![0u64; Self::word_count(&shape)];
        for i in 0..n {
            if occupied(i) {
                words[i / 64] |= 1 << (i % 64);
            }
        }
        Self::from_words(shape, words)
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.shape.voxel_count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of set bits.
    pub fn count(&self) -> usize {
        self.count
    }

    #[inline]
    pub fn get(&self, index: usize) -> bool {
        index < self.len() && (self.words[index / 64] >> (index % 64)) & 1 == 1
    }

    /// Dense storage slot of `index`, or `None` when the voxel is unoccupied.
    #[inline]
    pub fn rank(&self, index: usize) -> Option<usize> {
        if index >= self.len() {
            return None;
        }
        let w = self.words[index / 64];
        let bit = index % 64;
        if (w >> bit) & 1 == 0 {
            return None;
        }
        let below = w & ((1u64 << bit) - 1);
        Some(self.ranks[index / 64] + below.count_ones() as usize)
    }

    /// Linear indices of set bits in ascending order.
    pub fn iter_ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut rest = w;
            std::iter::from_fn(move || {
                if rest == 0 {
                    return None;
                }
                let b = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                Some(wi * 64 + b)
            })
        })
    }

    /// Packs the bits LSB-first within bytes, `ceil(len / 8)` bytes.
    pub fn to_packed_bytes(&self) -> Vec<u8> {
        let n_bytes = self.len().div_ceil(8);
        let mut out = Vec::with_capacity(n_bytes);
        for w in &self.words {
            out.extend_from_slice(&w.to_le_bytes());
        }
        out.truncate(n_bytes);
        out
    }

    /// Inverse of [`to_packed_bytes`](Self::to_packed_bytes). Padding bits
    /// past the last voxel must be zero.
    pub fn from_packed_bytes(shape: Shape, bytes: &[u8]) -> Result<Self> {
        let n = shape.voxel_count();
        if bytes.len() != n.div_ceil(8) {
            return Err(Error::DimensionMismatch(format!(
                "mask needs {} bytes for {} voxels, got {}",
                n.div_ceil(8),
                n,
                bytes.len()
            )));
        }
        let mut words = vec![0u64; Self::word_count(&shape)];
        for (i, chunk) in bytes.chunks(8).enumerate() {
            let mut buf = [0u8; 8];
            buf[..chunk.len()].copy_from_slice(chunk);
            words[i] = u64::from_le_bytes(buf);
        }
        if n % 64 != 0 {
            if let Some(last) = words.last() {
                if last >> (n % 64) != 0 {
                    return Err(Error::IndexOutOfRange { index: n, len: n });
                }
            }
        }
        Ok(Self::from_words(shape, words))
    }
}

/// Expands a mask into the sorted list of occupied linear indices.
pub fn mask_to_pointers(mask: &OccupancyMask) -> Vec<usize> {
    mask.iter_ones().collect()
}

/// Rebuilds a mask from strictly increasing linear indices.
pub fn pointers_to_mask(indices: &[usize], shape: Shape) -> Result<OccupancyMask> {
    let n = shape.voxel_count();
    let mut words = vec![0u64; OccupancyMask::word_count(&shape)];
    for (pos, &idx) in indices.iter().enumerate() {
        if idx >= n {
            return Err(Error::IndexOutOfRange { index: idx, len: n });
        }
        if pos > 0 && idx <= indices[pos - 1] {
            return Err(Error::NonMonotonicIndices { position: pos });
        }
        words[idx / 64] |= 1 << (idx % 64);
    }
    Ok(OccupancyMask::from_words(shape, words))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn shape(h: usize, w: usize, k: usize) -> Shape {
        Shape::new(h, w, k).unwrap()
    }

    #[test]
    fn empty_mask_round_trip() {
        let s = shape(3, 4, 5);
        let m = OccupancyMask::empty(s);
        let p = mask_to_pointers(&m);
        assert!(p.is_empty());
        assert_eq!(pointers_to_mask(&p, s).unwrap(), m);
    }

    #[test]
    fn dense_mask_is_identity_pointers() {
        let s = shape(2, 3, 11);
        let m = OccupancyMask::dense(s);
        let p = mask_to_pointers(&m);
        assert_eq!(p, (0..66).collect::<Vec<_>>());
        assert_eq!(pointers_to_mask(&p, s).unwrap(), m);
        assert_eq!(m.count(), 66);
    }

    #[test]
    fn rank_matches_position_in_pointer_list() {
        let s = shape(4, 5, 7);
        let m = OccupancyMask::from_fn(s, |i| i % 3 == 1 || i % 7 == 0);
        let p = mask_to_pointers(&m);
        for (slot, &idx) in p.iter().enumerate() {
            assert_eq!(m.rank(idx), Some(slot));
        }
        for i in 0..s.voxel_count() {
            assert_eq!(m.rank(i).is_some(), m.get(i));
        }
    }

    #[test]
    fn pointer_errors() {
        let s = shape(2, 2, 2);
        assert!(matches!(
            pointers_to_mask(&[1, 8], s),
            Err(Error::IndexOutOfRange { index: 8, .. })
        ));
        assert!(matches!(
            pointers_to_mask(&[3, 3], s),
            Err(Error::NonMonotonicIndices { position: 1 })
        ));
        assert!(matches!(
            pointers_to_mask(&[4, 2], s),
            Err(Error::NonMonotonicIndices { position: 1 })
        ));
    }

    #[test]
    fn packed_bytes_are_lsb_first() {
        let s = shape(2, 2, 3);
        let m = pointers_to_mask(&[0, 3, 9], s).unwrap();
        let bytes = m.to_packed_bytes();
        assert_eq!(bytes, vec![0b0000_1001, 0b0000_0010]);
        assert_eq!(OccupancyMask::from_packed_bytes(s, &bytes).unwrap(), m);
        // padding bit set
        assert!(OccupancyMask::from_packed_bytes(s, &[0, 0b0001_0000]).is_err());
    }

    proptest! {
        #[test]
        fn pointer_mask_round_trip(h in 2usize..9, w in 2usize..9, k in 2usize..9, seed in any::<u64>()) {
            let s = shape(h, w, k);
            let m = OccupancyMask::from_fn(s, |i| {
                let x = (i as u64 ^ seed).wrapping_mul(0x9E37_79B9_7F4A_7C15);
                (x >> 61) & 1 == 1
            });
            let p = mask_to_pointers(&m);
            prop_assert_eq!(p.len(), m.count());
            let back = pointers_to_mask(&p, s).unwrap();
            prop_assert_eq!(&back, &m);
            let bytes = m.to_packed_bytes();
            prop_assert_eq!(OccupancyMask::from_packed_bytes(s, &bytes).unwrap(), m);
        }
    }
}
