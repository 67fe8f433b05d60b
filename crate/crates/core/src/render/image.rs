use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Linear RGB image, `f32` per channel, pixels row-major and interleaved.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl Image {
    pub fn filled(width: usize, height: usize, rgb: [f32; 3]) -> Self {
        let data = (0..width * height).flat_map(|_| rgb).collect();
        Self {
            width,
            height,
            data,
        }
    }

    pub fn from_raw(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height * 3 {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a {width}x{height} RGB image",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn pixel(&self, u: usize, v: usize) -> [f32; 3] {
        let i = (v * self.width + u) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// Largest per-channel absolute difference.
    pub fn max_abs_diff(&self, other: &Image) -> Result<f64> {
        self.check_same(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (*a as f64 - *b as f64).abs())
            .fold(0.0, f64::max))
    }

    /// Sum of squared differences and the number of terms.
    pub fn squared_error(&self, other: &Image) -> Result<(f64, usize)> {
        self.check_same(other)?;
        let sse = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| {
                let d = *a as f64 - *b as f64;
                d * d
            })
            .sum();
        Ok((sse, self.data.len()))
    }

    fn check_same(&self, other: &Image) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::DimensionMismatch(format!(
                "image {}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        Ok(())
    }

    pub fn to_rgb8(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect()
    }

    pub fn png_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut out, self.width as u32, self.height as u32);
            enc.set_color(png::ColorType::Rgb);
            enc.set_depth(png::BitDepth::Eight);
            let mut w = enc.write_header().map_err(png_err)?;
            w.write_image_data(&self.to_rgb8()).map_err(png_err)?;
        }
        Ok(out)
    }

    pub fn write_png(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.png_bytes()?)?;
        Ok(())
    }

    /// Planar float dump: `u32` width, `u32` height, then the R, G and B
    /// planes as little-endian `f32`.
    pub fn float_dump_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + self.data.len() * 4);
        out.extend_from_slice(&(self.width as u32).to_le_bytes());
        out.extend_from_slice(&(self.height as u32).to_le_bytes());
        for ch in 0..3 {
            for px in self.data.chunks_exact(3) {
                out.extend_from_slice(&px[ch].to_le_bytes());
            }
        }
        out
    }

    pub fn write_float_dump(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.float_dump_bytes())?;
        Ok(())
    }

    pub fn from_float_dump(bytes: &[u8]) -> Result<Self> {
        let bad = |reason: &str| Error::MalformedSection {
            section: "float_dump".into(),
            reason: reason.into(),
        };
        if bytes.len() < 8 {
            return Err(bad("missing header"));
        }
        let w = u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize;
        let h = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let n = w * h;
        if bytes.len() != 8 + n * 12 {
            return Err(bad("length does not match dimensions"));
        }
        let planes: Vec<f32> = bytes[8..]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        let mut data = vec![0.0; n * 3];
        for i in 0..n {
            for ch in 0..3 {
                data[i * 3 + ch] = planes[ch * n + i];
            }
        }
        Self::from_raw(w, h, data)
    }
}

fn png_err(e: png::EncodingError) -> Error {
    match e {
        png::EncodingError::IoError(io) => Error::Io(io),
        other => Error::InvalidConfig(format!("png encoding: {other}")),
    }
}

/// Peak signal-to-noise ratio in dB for images in `[0, 1]`; `+inf` when the
/// images are identical.
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    let (sse, n) = a.squared_error(b)?;
    Ok(psnr_from_mse(sse / n.max(1) as f64))
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        -10.0 * mse.log10()
    }
}
