//! Single-channel floating-point images.
//!
//! A [`Raster`] is the sample source for both modalities: the visual frame is
//! read on its own grid and the thermal frame is resampled through the
//! candidate transform. Decoding supports PGM (`P2`/`P5`, 8 or 16 bit) and PNG
//! (8/16-bit grayscale, 8-bit RGB). RGB input is reduced to Rec.601 luma.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

/// Rec.601 luma weights applied to RGB input.
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

/// Row-major grayscale image with finite `f64` intensities.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Raster {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidRaster(format!(
                "dimensions must be positive, got {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(Error::InvalidRaster(format!(
                "{} samples for a {width}x{height} image",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidRaster(format!(
                "non-finite intensity at index {i}"
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Image filled with a single value.
    pub fn constant(width: usize, height: usize, value: f64) -> Self {
        Self::new(width, height, vec![value; width * height]).expect("valid constant raster")
    }

    /// Builds an image by evaluating `f(x, y)` at every pixel.
    ///
    /// Panics if `f` produces a non-finite value.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, data).expect("generator produced an invalid raster")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// The `width × height` window whose top-left pixel is `(x0, y0)`.
    pub fn crop(&self, x0: usize, y0: usize, width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 || x0 + width > self.width || y0 + height > self.height {
            return Err(Error::InvalidRaster(format!(
                "crop {width}x{height}+{x0}+{y0} exceeds {}x{}",
                self.width, self.height
            )));
        }
        Ok(Self::from_fn(width, height, |x, y| self.get(x0 + x, y0 + y)))
    }

    /// Applies `f` to every intensity. Panics if `f` yields a non-finite value.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        let data = self.data.iter().map(|&v| f(v)).collect();
        Self::new(self.width, self.height, data).expect("map produced an invalid raster")
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    pub fn is_constant(&self) -> bool {
        let (lo, hi) = self.min_max();
        lo == hi
    }

    /// Minimum, maximum and bin width for `bin_count` equal bins.
    ///
    /// Panics if `bin_count < 2`.
    pub fn intensity_stats(&self, bin_count: usize) -> IntensityStats {
        assert!(bin_count >= 2, "bin count must be at least 2");
        let (min, max) = self.min_max();
        let bin_width = if max > min {
            (max - min) / bin_count as f64
        } else {
            1.0
        };
        IntensityStats {
            min,
            max,
            bin_width,
        }
    }

    /// Hard-assignment histogram over `bin_count` bins spanning the image's
    /// own intensity range.
    pub fn histogram(&self, bin_count: usize) -> Histogram {
        let range = self.intensity_stats(bin_count);
        let mut counts = vec![0u64; bin_count];
        for &v in &self.data {
            counts[range.bin_index(v, bin_count)] += 1;
        }
        Histogram { counts, range }
    }
}

/// Intensity range of an image and the width of one histogram bin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IntensityStats {
    pub min: f64,
    pub max: f64,
    /// Intensity covered by one bin; 1 for constant images.
    pub bin_width: f64,
}

impl IntensityStats {
    /// Continuous bin coordinate `(v - min) / bin_width`.
    #[inline]
    pub fn bin_coordinate(&self, v: f64) -> f64 {
        (v - self.min) / self.bin_width
    }

    #[inline]
    pub fn bin_index(&self, v: f64, bin_count: usize) -> usize {
        let b = self.bin_coordinate(v).floor();
        if b <= 0.0 {
            0
        } else {
            (b as usize).min(bin_count - 1)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub counts: Vec<u64>,
    pub range: IntensityStats,
}

impl Histogram {
    pub fn bin_count(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Reads a PGM or PNG file into a [`Raster`].
///
/// The format is detected from the file contents, not the extension.
pub fn load_image(path: impl AsRef<Path>) -> Result<Raster> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(b"P2") || bytes.starts_with(b"P5") {
        decode_pgm(&bytes).map_err(|reason| Error::format(path, reason))
    } else if bytes.starts_with(b"\x89PNG") {
        decode_png(&bytes).map_err(|reason| Error::format(path, reason))
    } else {
        Err(Error::format(path, "not a PGM (P2/P5) or PNG file"))
    }
}

/// Writes an 8-bit grayscale image: PGM (`P5`) when the extension is `.pgm`,
/// PNG otherwise. Intensities are clamped to `[0, 255]` and rounded half-up.
pub fn save_image(raster: &Raster, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let pixels: Vec<u8> = raster.data().iter().map(|&v| quantize(v)).collect();
    let is_pgm = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("pgm"));
    let bytes = if is_pgm {
        let mut out = format!("P5\n{} {}\n255\n", raster.width(), raster.height()).into_bytes();
        out.extend_from_slice(&pixels);
        out
    } else {
        encode_png_gray(&pixels, raster.width(), raster.height())
            .map_err(|e| Error::io(path, std::io::Error::other(e)))?
    };
    write_file(path, &bytes)
}

/// Clamp to `[0, 255]` and round half-up.
#[inline]
pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 255.0) + 0.5).floor().min(255.0) as u8
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

pub(crate) fn encode_png_gray(pixels: &[u8], width: usize, height: usize) -> Result<Vec<u8>, String> {
    encode_png(pixels, width, height, image::ExtendedColorType::L8)
}

pub(crate) fn encode_png(
    pixels: &[u8],
    width: usize,
    height: usize,
    color: image::ExtendedColorType,
) -> Result<Vec<u8>, String> {
    use image::ImageEncoder;
    let mut out = Vec::new();
    image::codecs::png::PngEncoder::new(&mut out)
        .write_image(pixels, width as u32, height as u32, color)
        .map_err(|e| e.to_string())?;
    Ok(out)
}

fn decode_png(bytes: &[u8]) -> Result<Raster, String> {
    let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
        .map_err(|e| e.to_string())?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data: Vec<f64> = match img {
        image::DynamicImage::ImageLuma8(buf) => buf.into_raw().into_iter().map(f64::from).collect(),
        image::DynamicImage::ImageLuma16(buf) => {
            buf.into_raw().into_iter().map(f64::from).collect()
        }
        image::DynamicImage::ImageRgb8(buf) => buf
            .into_raw()
            .chunks_exact(3)
            .map(|p| {
                LUMA_WEIGHTS[0] * f64::from(p[0])
                    + LUMA_WEIGHTS[1] * f64::from(p[1])
                    + LUMA_WEIGHTS[2] * f64::from(p[2])
            })
            .collect(),
        other => return Err(format!("unsupported PNG color type {:?}", other.color())),
    };
    Raster::new(w, h, data).map_err(|e| e.to_string())
}

fn decode_pgm(bytes: &[u8]) -> Result<Raster, String> {
    let binary = bytes[1] == b'5';
    let mut pos = 2;
    let mut header = [0usize; 3];
    for field in header.iter_mut() {
        *field = pgm_header_number(bytes, &mut pos)?;
    }
    let [width, height, maxval] = header;
    if width == 0 || height == 0 {
        return Err(format!("invalid dimensions {width}x{height}"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(format!("invalid maxval {maxval}"));
    }
    let n = width * height;
    let data: Vec<f64> = if binary {
        // exactly one whitespace byte separates the header from the raster
        pos += 1;
        let sample_bytes = if maxval < 256 { 1 } else { 2 };
        let raw = bytes
            .get(pos..pos + n * sample_bytes)
            .ok_or("truncated binary raster")?;
        if sample_bytes == 1 {
            raw.iter().map(|&b| f64::from(b)).collect()
        } else {
            raw.chunks_exact(2)
                .map(|c| f64::from(u16::from_be_bytes([c[0], c[1]])))
                .collect()
        }
    } else {
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            out.push(pgm_header_number(bytes, &mut pos)? as f64);
        }
        out
    };
    if data.iter().any(|&v| v > maxval as f64) {
        return Err(format!("sample exceeds maxval {maxval}"));
    }
    Raster::new(width, height, data).map_err(|e| e.to_string())
}

/// Next ASCII decimal, skipping whitespace and `#` comments.
fn pgm_header_number(bytes: &[u8], pos: &mut usize) -> Result<usize, String> {
    loop {
        match bytes.get(*pos) {
            Some(b) if b.is_ascii_whitespace() => *pos += 1,
            Some(b'#') => {
                while bytes.get(*pos).is_some_and(|&b| b != b'\n') {
                    *pos += 1;
                }
            }
            Some(b) if b.is_ascii_digit() => break,
            Some(b) => return Err(format!("unexpected byte {b:#04x} in PGM data")),
            None => return Err("unexpected end of PGM data".into()),
        }
    }
    let start = *pos;
    while bytes.get(*pos).is_some_and(u8::is_ascii_digit) {
        *pos += 1;
    }
    std::str::from_utf8(&bytes[start..*pos])
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| "number out of range in PGM data".into())
}
