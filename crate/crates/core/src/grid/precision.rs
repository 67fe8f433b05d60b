use half::f16;

use crate::error::{Error, Result};

/// Storage precision of value arrays.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum ValuePrecision {
    F32,
    #[default]
    F16,
}

impl ValuePrecision {
    pub fn bytes_per_value(self) -> usize {
        match self {
            ValuePrecision::F32 => 4,
            ValuePrecision::F16 => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ValuePrecision::F32 => "f32",
            ValuePrecision::F16 => "f16",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "f32" => Ok(ValuePrecision::F32),
            "f16" => Ok(ValuePrecision::F16),
            other => Err(Error::InvalidConfig(format!(
                "precision {other:?} is not f32 or f16"
            ))),
        }
    }

    /// Rounds to the nearest representable value.
    #[inline]
    pub fn quantize(self, v: f32) -> f32 {
        match self {
            ValuePrecision::F32 => v,
            ValuePrecision::F16 => f16::from_f32(v).to_f32(),
        }
    }

    /// Quantizes in place, failing if a value leaves the representable range.
    pub fn quantize_slice(self, values: &mut [f32]) -> Result<()> {
        if self == ValuePrecision::F32 {
            return Ok(());
        }
        for v in values.iter_mut() {
            let q = self.quantize(*v);
            if !q.is_finite() {
                return Err(Error::NonFiniteInput(format!(
                    "value {v} overflows {}",
                    self.name()
                )));
            }
            *v = q;
        }
        Ok(())
    }

    /// Appends little-endian encodings of `values`.
    pub fn encode(self, values: &[f32], out: &mut Vec<u8>) {
        out.reserve(values.len() * self.bytes_per_value());
        match self {
            ValuePrecision::F32 => {
                for v in values {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
            ValuePrecision::F16 => {
                for v in values {
                    out.extend_from_slice(&f16::from_f32(*v).to_bits().to_le_bytes());
                }
            }
        }
    }

    /// Decodes `bytes`, which must hold a whole number of values.
    pub fn decode(self, bytes: &[u8]) -> Option<Vec<f32>> {
        let n = self.bytes_per_value();
        if bytes.len() % n != 0 {
            return None;
        }
        Some(match self {
            ValuePrecision::F32 => bytes
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect(),
            ValuePrecision::F16 => bytes
                .chunks_exact(2)
                .map(|b| f16::from_bits(u16::from_le_bytes([b[0], b[1]])).to_f32())
                .collect(),
        })
    }
}
