use std::fs;
use std::path::Path;

use image::{DynamicImage, ImageBuffer, Luma, Rgb};

use super::{MatteMask, NormalField, PixelField};
use crate::error::{Error, Result};

/// sRGB electro-optical transfer function (display code value to linear).
pub(crate) fn srgb_to_linear(v: f64) -> f64 {
    if v <= 0.04045 {
        v / 12.92
    } else {
        ((v + 0.055) / 1.055).powf(2.4)
    }
}

/// Loads an 8- or 16-bit gray or RGB PNG into a bounded field in `[0, 1]`.
///
/// Values are divided by the maximum code value. With `gamma_decode` the sRGB
/// transfer function is inverted afterwards; by default pixels are taken as
/// linear intensities.
pub fn load_image(path: impl AsRef<Path>, gamma_decode: bool) -> Result<PixelField> {
    let path = path.as_ref();
    let img = image::open(path).map_err(|source| Error::Png {
        path: path.to_path_buf(),
        source,
    })?;
    let (width, height) = (img.width() as usize, img.height() as usize);
    let (channels, data): (usize, Vec<f64>) = match img {
        DynamicImage::ImageLuma8(b) => (1, b.into_raw().into_iter().map(|v| v as f64 / 255.0).collect()),
        DynamicImage::ImageRgb8(b) => (3, b.into_raw().into_iter().map(|v| v as f64 / 255.0).collect()),
        DynamicImage::ImageLuma16(b) => (1, b.into_raw().into_iter().map(|v| v as f64 / 65535.0).collect()),
        DynamicImage::ImageRgb16(b) => (3, b.into_raw().into_iter().map(|v| v as f64 / 65535.0).collect()),
        other => {
            return Err(Error::Unsupported(format!(
                "{}: color type {:?} (expected 8/16-bit gray or RGB)",
                path.display(),
                other.color()
            )))
        }
    };
    let data = if gamma_decode {
        data.into_iter().map(srgb_to_linear).collect()
    } else {
        data
    };
    PixelField::bounded(width, height, channels, data)
}

/// Loads a PNG matte; multi-channel inputs use their first channel.
pub fn load_mask(path: impl AsRef<Path>) -> Result<MatteMask> {
    MatteMask::from_field(&load_image(path, false)?)
}

/// Writes a display PNG. Values are clamped to `[0, 1]` and quantized to 8 or 16 bits.
pub fn save_png(field: &PixelField, path: impl AsRef<Path>, sixteen_bit: bool) -> Result<()> {
    let path = path.as_ref();
    let (w, h) = (field.width() as u32, field.height() as u32);
    let q8 = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    let q16 = |v: f64| (v.clamp(0.0, 1.0) * 65535.0).round() as u16;
    let result = match (field.channels(), sixteen_bit) {
        (1, false) => ImageBuffer::<Luma<u8>, _>::from_raw(w, h, field.data().iter().map(|&v| q8(v)).collect())
            .map(DynamicImage::ImageLuma8),
        (3, false) => ImageBuffer::<Rgb<u8>, _>::from_raw(w, h, field.data().iter().map(|&v| q8(v)).collect())
            .map(DynamicImage::ImageRgb8),
        (1, true) => ImageBuffer::<Luma<u16>, _>::from_raw(w, h, field.data().iter().map(|&v| q16(v)).collect())
            .map(DynamicImage::ImageLuma16),
        (3, true) => ImageBuffer::<Rgb<u16>, _>::from_raw(w, h, field.data().iter().map(|&v| q16(v)).collect())
            .map(DynamicImage::ImageRgb16),
        (c, _) => return Err(Error::Unsupported(format!("PNG export of {c}-channel field"))),
    };
    let img = result.expect("buffer length matches field extent");
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|source| Error::Png {
            path: path.to_path_buf(),
            source,
        })
}

pub fn save_mask(mask: &MatteMask, path: impl AsRef<Path>) -> Result<()> {
    save_png(&mask.to_field(), path, false)
}

/// Anything storable as a float map.
pub trait FloatMap {
    fn as_pixel_field(&self) -> PixelField;
}

impl FloatMap for PixelField {
    fn as_pixel_field(&self) -> PixelField {
        self.clone()
    }
}

impl FloatMap for NormalField {
    fn as_pixel_field(&self) -> PixelField {
        self.to_field()
    }
}

impl FloatMap for MatteMask {
    fn as_pixel_field(&self) -> PixelField {
        self.to_field()
    }
}

/// Encodes a field as little-endian PFM with bottom-up scanlines.
///
/// One-channel fields use the `Pf` header, three-channel fields `PF`; two-channel
/// fields (uv maps) are padded with a zero third channel.
pub fn encode_pfm(field: &PixelField) -> Result<Vec<u8>> {
    let (w, h, c) = field.shape();
    let (tag, out_c) = match c {
        1 => ("Pf", 1),
        2 | 3 => ("PF", 3),
        _ => return Err(Error::Unsupported(format!("PFM export of {c}-channel field"))),
    };
    let mut out = format!("{tag}\n{w} {h}\n-1.0\n").into_bytes();
    out.reserve(w * h * out_c * 4);
    for y in (0..h).rev() {
        for x in 0..w {
            for k in 0..out_c {
                let v = if k < c { field.get(x, y, k) } else { 0.0 };
                let v32 = v as f32;
                if !v32.is_finite() {
                    return Err(Error::NonFinite("float map"));
                }
                out.extend_from_slice(&v32.to_le_bytes());
            }
        }
    }
    Ok(out)
}

/// Decodes a PFM byte stream (either endianness).
pub fn decode_pfm(bytes: &[u8]) -> Result<PixelField> {
    let mut pos = 0;
    let mut token = || -> Result<String> {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::format("PFM", "truncated header"));
        }
        let tok = std::str::from_utf8(&bytes[start..pos])
            .map_err(|_| Error::format("PFM", "non-ASCII header"))?
            .to_string();
        Ok(tok)
    };
    let channels = match token()?.as_str() {
        "PF" => 3,
        "Pf" => 1,
        other => return Err(Error::format("PFM", format!("bad magic `{other}`"))),
    };
    let parse_dim = |s: String| {
        s.parse::<usize>()
            .map_err(|_| Error::format("PFM", format!("bad dimension `{s}`")))
    };
    let width = parse_dim(token()?)?;
    let height = parse_dim(token()?)?;
    let scale_tok = token()?;
    let scale: f64 = scale_tok
        .parse()
        .map_err(|_| Error::format("PFM", format!("bad scale `{scale_tok}`")))?;
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let n = width * height * channels;
    let raster = bytes
        .get(pos..pos + 4 * n)
        .ok_or_else(|| Error::format("PFM", "truncated raster"))?;
    let little = scale < 0.0;
    let mut data = vec![0.0; n];
    for (i, chunk) in raster.chunks_exact(4).enumerate() {
        let b = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) };
        let file_row = i / (width * channels);
        let rest = i % (width * channels);
        let y = height - 1 - file_row;
        data[y * width * channels + rest] = v as f64;
    }
    PixelField::new(width, height, channels, data)
}

/// Writes a field as PFM. Fails on non-finite data.
pub fn save_float_map(field: &impl FloatMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_pfm(&field.as_pixel_field())?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_float_map(path: impl AsRef<Path>) -> Result<PixelField> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pfm(&bytes)
}
