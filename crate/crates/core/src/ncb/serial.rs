//! Raw byte layout of a network (before container compression):
//!
//! ```text
//! u32 version (1) | u8 precision (0 = f32, 1 = f16) | 3 reserved bytes
//! 7 x u32 arch fields | u32 colour channels
//! L x 3 f32 basis
//! parameters in canonical order at the stated precision
//! ```

use super::encoding::PositionalEncoder;
use super::network::{NcbArch, NcbNetwork, NcbParams};
use crate::error::{Error, Result};
use crate::grid::ValuePrecision;

const VERSION: u32 = 1;
const SECTION: &str = "NCB_WEIGHTS";

fn malformed(reason: impl Into<String>) -> Error {
    Error::MalformedSection {
        section: SECTION.into(),
        reason: reason.into(),
    }
}

fn precision_code(p: ValuePrecision) -> u8 {
    match p {
        ValuePrecision::F32 => 0,
        ValuePrecision::F16 => 1,
    }
}

impl NcbNetwork {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&[precision_code(self.precision), 0, 0, 0]);
        let a = &self.arch;
        for v in [
            a.l_count,
            a.trunk_layers,
            a.trunk_width,
            a.density_layers,
            a.density_width,
            a.color_layers,
            a.color_width,
            self.channels(),
        ] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        for row in self.encoder.basis() {
            for v in row {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        for (_, s) in self.params.slices() {
            self.precision.encode(s, &mut out);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::UnsupportedVersion { version });
        }
        let precision = match r.take(4)?[0] {
            0 => ValuePrecision::F32,
            1 => ValuePrecision::F16,
            other => return Err(malformed(format!("precision code {other}"))),
        };
        let mut f = [0usize; 8];
        for v in &mut f {
            *v = r.u32()? as usize;
        }
        let arch = NcbArch {
            l_count: f[0],
            trunk_layers: f[1],
            trunk_width: f[2],
            density_layers: f[3],
            density_width: f[4],
            color_layers: f[5],
            color_width: f[6],
        };
        arch.validate().map_err(|e| malformed(e.to_string()))?;
        let channels = f[7];
        if channels < 3 || channels % 3 != 0 || channels > 1 << 16 {
            return Err(malformed(format!("colour channel count {channels}")));
        }
        let basis_bytes = r.take(arch.l_count * 12)?;
        let basis = basis_bytes
            .chunks_exact(12)
            .map(|c| {
                let v = |i: usize| f32::from_le_bytes(c[i * 4..i * 4 + 4].try_into().unwrap());
                [v(0), v(1), v(2)]
            })
            .collect::<Vec<_>>();
        if basis.iter().flatten().any(|v| !v.is_finite()) {
            return Err(malformed("non-finite basis"));
        }
        let mut params = NcbParams::<f32>::identity_init(&arch, channels, 0);
        let bpv = precision.bytes_per_value();
        for (_, s) in params.slices_mut() {
            let raw = r.take(s.len() * bpv)?;
            let vals = precision.decode(raw).expect("length is a multiple of the value size");
            if vals.iter().any(|v| !v.is_finite()) {
                return Err(malformed("non-finite weight"));
            }
            s.copy_from_slice(&vals);
        }
        if r.pos != bytes.len() {
            return Err(malformed("trailing bytes"));
        }
        Ok(Self {
            arch,
            encoder: PositionalEncoder::from_basis(basis),
            params,
            precision,
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::TruncatedSection {
            section: SECTION.into(),
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}
