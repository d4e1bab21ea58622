//! Dense per-pixel depth maps and their on-disk encodings.
//!
//! A [`DepthMap`] stores one [`Sample`] per pixel in row-major order. Two
//! encodings are supported:
//!
//! * 16-bit grayscale PNG, `value = round(depth_m * 256)`, with `0` meaning
//!   invalid *or* sky (the KITTI ground-truth convention). Sky cannot be
//!   recovered from this encoding.
//! * Raw `f32` little-endian: an 8-byte header holding width and height as
//!   `u32`, followed by `width * height` floats. `0.0` is invalid and
//!   `+inf` is sky.

use std::io::Cursor;
use std::path::Path;

use image::{ImageBuffer, ImageFormat, Luma};
use thiserror::Error;

/// Scale factor of the 16-bit PNG encoding (units per meter).
pub const PNG16_SCALE: f64 = 256.0;

#[derive(Debug, Error)]
pub enum DepthError {
    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },
    #[error("depth map must have non-zero dimensions")]
    Empty,
    #[error("invalid depth value {value} at ({x}, {y})")]
    InvalidValue { x: usize, y: usize, value: f64 },
    #[error("malformed depth file: {0}")]
    Format(String),
    #[error("image codec error: {0}")]
    Image(#[from] image::ImageError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// State of a single depth pixel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Sample {
    /// No depth is known for this pixel.
    Invalid,
    /// The pixel looks at the sky; its depth is treated as infinite.
    Sky,
    /// Metric depth in meters; always finite and strictly positive.
    Depth(f64),
}

impl Sample {
    pub fn depth(self) -> Option<f64> {
        match self {
            Sample::Depth(d) => Some(d),
            _ => None,
        }
    }

    pub fn is_valid(self) -> bool {
        matches!(self, Sample::Depth(_))
    }

    pub fn is_sky(self) -> bool {
        matches!(self, Sample::Sky)
    }
}

/// Per-pixel metric depth with a validity state and a sky flag.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthMap {
    width: usize,
    height: usize,
    samples: Vec<Sample>,
}

impl DepthMap {
    /// A map with every pixel invalid.
    pub fn invalid(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            samples: vec![Sample::Invalid; width * height],
        }
    }

    /// Builds a map from row-major samples, checking the value invariants.
    pub fn from_samples(
        width: usize,
        height: usize,
        samples: Vec<Sample>,
    ) -> Result<Self, DepthError> {
        if width == 0 || height == 0 {
            return Err(DepthError::Empty);
        }
        if samples.len() != width * height {
            return Err(DepthError::Format(format!(
                "expected {} samples for {width}x{height}, got {}",
                width * height,
                samples.len()
            )));
        }
        for (i, s) in samples.iter().enumerate() {
            if let Sample::Depth(d) = *s {
                if !(d.is_finite() && d > 0.0) {
                    return Err(DepthError::InvalidValue {
                        x: i % width,
                        y: i / width,
                        value: d,
                    });
                }
            }
        }
        Ok(Self {
            width,
            height,
            samples,
        })
    }

    /// Builds a map from a dense row-major buffer of depths; non-finite or
    /// non-positive entries become invalid.
    pub fn from_values(width: usize, height: usize, values: &[f64]) -> Result<Self, DepthError> {
        if values.len() != width * height {
            return Err(DepthError::Format(format!(
                "expected {} values for {width}x{height}, got {}",
                width * height,
                values.len()
            )));
        }
        let samples = values
            .iter()
            .map(|&d| {
                if d.is_finite() && d > 0.0 {
                    Sample::Depth(d)
                } else {
                    Sample::Invalid
                }
            })
            .collect();
        Self::from_samples(width, height, samples)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Sample {
        self.samples[y * self.width + x]
    }

    #[inline]
    pub fn depth(&self, x: usize, y: usize) -> Option<f64> {
        self.get(x, y).depth()
    }

    /// Sets a pixel.
    ///
    /// # Panics
    /// Panics if `sample` is a depth that is not finite and positive.
    #[inline]
    pub fn set(&mut self, x: usize, y: usize, sample: Sample) {
        if let Sample::Depth(d) = sample {
            assert!(d.is_finite() && d > 0.0, "depth must be finite and > 0, got {d}");
        }
        self.samples[y * self.width + x] = sample;
    }

    pub fn valid_count(&self) -> usize {
        self.samples.iter().filter(|s| s.is_valid()).count()
    }

    pub fn sky_count(&self) -> usize {
        self.samples.iter().filter(|s| s.is_sky()).count()
    }

    pub fn invalid_count(&self) -> usize {
        self.samples.len() - self.valid_count() - self.sky_count()
    }

    pub fn ensure_dims(&self, width: usize, height: usize) -> Result<(), DepthError> {
        if (self.width, self.height) != (width, height) {
            return Err(DepthError::DimensionMismatch {
                expected: (width, height),
                actual: self.dims(),
            });
        }
        Ok(())
    }

    /// Minimum and maximum over valid pixels.
    pub fn value_range(&self) -> Option<(f64, f64)> {
        self.samples
            .iter()
            .filter_map(|s| s.depth())
            .fold(None, |acc, d| match acc {
                None => Some((d, d)),
                Some((lo, hi)) => Some((lo.min(d), hi.max(d))),
            })
    }

    /// Dense `f32` buffer: valid depths, `0.0` for invalid, `+inf` for sky.
    pub fn to_f32_vec(&self) -> Vec<f32> {
        self.samples
            .iter()
            .map(|s| match *s {
                Sample::Depth(d) => d as f32,
                Sample::Sky => f32::INFINITY,
                Sample::Invalid => 0.0,
            })
            .collect()
    }

    pub fn encode_f32(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 4 * self.samples.len());
        out.extend_from_slice(&(self.width as u32).to_le_bytes());
        out.extend_from_slice(&(self.height as u32).to_le_bytes());
        for v in self.to_f32_vec() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn decode_f32(bytes: &[u8]) -> Result<Self, DepthError> {
        if bytes.len() < 8 {
            return Err(DepthError::Format("missing 8-byte header".into()));
        }
        let width = u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize;
        let height = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let body = &bytes[8..];
        if body.len() != width * height * 4 {
            return Err(DepthError::Format(format!(
                "expected {} payload bytes for {width}x{height}, got {}",
                width * height * 4,
                body.len()
            )));
        }
        let samples = body
            .chunks_exact(4)
            .map(|c| {
                let v = f32::from_le_bytes(c.try_into().unwrap());
                if v == f32::INFINITY {
                    Sample::Sky
                } else if v.is_finite() && v > 0.0 {
                    Sample::Depth(v as f64)
                } else {
                    Sample::Invalid
                }
            })
            .collect();
        Self::from_samples(width, height, samples)
    }

    /// Encodes as a 16-bit PNG. Valid depths that would round to zero are
    /// stored as `1` so they stay distinguishable from invalid pixels;
    /// depths above 255.99 m saturate.
    pub fn encode_png16(&self) -> Result<Vec<u8>, DepthError> {
        let raw: Vec<u16> = self
            .samples
            .iter()
            .map(|s| match *s {
                Sample::Depth(d) => (d * PNG16_SCALE).round().clamp(1.0, u16::MAX as f64) as u16,
                _ => 0,
            })
            .collect();
        let img: ImageBuffer<Luma<u16>, Vec<u16>> =
            ImageBuffer::from_raw(self.width as u32, self.height as u32, raw)
                .ok_or_else(|| DepthError::Format("buffer size mismatch".into()))?;
        let mut out = Cursor::new(Vec::new());
        img.write_to(&mut out, ImageFormat::Png)?;
        Ok(out.into_inner())
    }

    pub fn decode_png16(bytes: &[u8]) -> Result<Self, DepthError> {
        let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)?;
        let img = match img {
            image::DynamicImage::ImageLuma16(b) => b,
            other => {
                return Err(DepthError::Format(format!(
                    "expected 16-bit single-channel PNG, got {:?}",
                    other.color()
                )))
            }
        };
        let (w, h) = (img.width() as usize, img.height() as usize);
        let samples = img
            .into_raw()
            .into_iter()
            .map(|v| {
                if v == 0 {
                    Sample::Invalid
                } else {
                    Sample::Depth(v as f64 / PNG16_SCALE)
                }
            })
            .collect();
        Self::from_samples(w, h, samples)
    }

    /// Reads either encoding, chosen by file extension (`.png` or anything
    /// else for raw `f32`).
    pub fn read(path: &Path) -> Result<Self, DepthError> {
        let bytes = std::fs::read(path)?;
        if is_png(path) {
            Self::decode_png16(&bytes)
        } else {
            Self::decode_f32(&bytes)
        }
    }

    pub fn write_png16(&self, path: &Path) -> Result<(), DepthError> {
        std::fs::write(path, self.encode_png16()?)?;
        Ok(())
    }

    pub fn write_f32(&self, path: &Path) -> Result<(), DepthError> {
        std::fs::write(path, self.encode_f32())?;
        Ok(())
    }
}

fn is_png(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("png"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_map() -> DepthMap {
        DepthMap::from_samples(
            3,
            2,
            vec![
                Sample::Depth(1.5),
                Sample::Sky,
                Sample::Invalid,
                Sample::Depth(12.25),
                Sample::Depth(0.001),
                Sample::Depth(80.0),
            ],
        )
        .unwrap()
    }

    #[test]
    fn rejects_non_positive_depth() {
        let err = DepthMap::from_samples(1, 1, vec![Sample::Depth(0.0)]).unwrap_err();
        assert!(matches!(err, DepthError::InvalidValue { .. }));
        assert!(DepthMap::from_samples(0, 3, vec![]).is_err());
    }

    #[test]
    fn f32_encoding_keeps_sky_and_invalid() {
        let map = sample_map();
        let bytes = map.encode_f32();
        assert_eq!(bytes.len(), 8 + 6 * 4);
        assert_eq!(&bytes[0..4], &3u32.to_le_bytes());
        assert_eq!(&bytes[4..8], &2u32.to_le_bytes());
        let back = DepthMap::decode_f32(&bytes).unwrap();
        assert_eq!(back.get(1, 0), Sample::Sky);
        assert_eq!(back.get(2, 0), Sample::Invalid);
        assert_eq!(back.depth(0, 1), Some(12.25));
        assert!(DepthMap::decode_f32(&bytes[..10]).is_err());
    }

    #[test]
    fn png16_uses_kitti_scale() {
        let map = sample_map();
        let back = DepthMap::decode_png16(&map.encode_png16().unwrap()).unwrap();
        assert_eq!(back.depth(0, 0), Some(1.5));
        // sky collapses to invalid in this encoding
        assert_eq!(back.get(1, 0), Sample::Invalid);
        assert_eq!(back.depth(1, 1), Some(1.0 / 256.0));
        assert_eq!(back.depth(2, 1), Some(80.0));
    }

    #[test]
    fn counts_and_range() {
        let map = sample_map();
        assert_eq!(map.valid_count(), 4);
        assert_eq!(map.sky_count(), 1);
        assert_eq!(map.invalid_count(), 1);
        assert_eq!(map.value_range(), Some((0.001, 80.0)));
    }
}
