//! Disparity and image file formats.
//!
//! * PFM: `Pf` header, single channel, little-endian (scale `-1.0`), rows
//!   stored bottom-up. Invalid pixels are written as `+inf`.
//! * PNG16: single-channel 16-bit PNG holding `round(256 * d)`, with `0`
//!   reserved for invalid pixels (KITTI convention). A valid disparity that
//!   would quantize to 0 is stored as 1.

use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, ImageBuffer, ImageFormat, Luma, Rgb};

use crate::error::{Error, Result};
use crate::raster::{DisparityMap, Image};

const PNG_SIGNATURE: &[u8] = b"\x89PNG";

/// Largest disparity representable in PNG16 (65535 / 256).
pub const PNG16_MAX_DISPARITY: f32 = 65535.0 / 256.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DisparityFormat {
    Pfm,
    Png16,
}

impl DisparityFormat {
    pub fn extension(self) -> &'static str {
        match self {
            DisparityFormat::Pfm => "pfm",
            DisparityFormat::Png16 => "png",
        }
    }
}

pub fn encode_pfm(d: &DisparityMap) -> Vec<u8> {
    let (h, w) = (d.height(), d.width());
    let mut out = format!("Pf\n{w} {h}\n-1.0\n").into_bytes();
    out.reserve(h * w * 4);
    for i in (0..h).rev() {
        for &v in &d.values()[i * w..(i + 1) * w] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn malformed(reason: impl Into<String>) -> Error {
    Error::Malformed {
        format: "PFM",
        reason: reason.into(),
    }
}

/// Reads the next whitespace-delimited header token; `pos` ends just past the
/// single whitespace byte that terminates it.
fn header_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a str> {
    while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos || *pos >= bytes.len() {
        return Err(malformed("truncated header"));
    }
    let tok = std::str::from_utf8(&bytes[start..*pos]).map_err(|_| malformed("non-ASCII header"))?;
    *pos += 1;
    Ok(tok)
}

pub fn decode_pfm(bytes: &[u8]) -> Result<DisparityMap> {
    let mut pos = 0;
    match header_token(bytes, &mut pos)? {
        "Pf" => {}
        "PF" => return Err(malformed("three-channel PFM is not a disparity map")),
        other => return Err(malformed(format!("bad magic {other:?}"))),
    }
    let w: usize = header_token(bytes, &mut pos)?
        .parse()
        .map_err(|_| malformed("bad width"))?;
    let h: usize = header_token(bytes, &mut pos)?
        .parse()
        .map_err(|_| malformed("bad height"))?;
    let scale: f32 = header_token(bytes, &mut pos)?
        .parse()
        .map_err(|_| malformed("bad scale"))?;
    if w == 0 || h == 0 {
        return Err(malformed("zero dimension"));
    }
    if scale == 0.0 || !scale.is_finite() {
        return Err(malformed("scale must be non-zero"));
    }
    let little = scale < 0.0;
    let payload = &bytes[pos..];
    if payload.len() != w * h * 4 {
        return Err(malformed(format!(
            "payload is {} bytes, expected {}",
            payload.len(),
            w * h * 4
        )));
    }
    let mut values = vec![0.0f32; w * h];
    let mut mask = vec![false; w * h];
    for (k, chunk) in payload.chunks_exact(4).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little {
            f32::from_le_bytes(raw)
        } else {
            f32::from_be_bytes(raw)
        };
        let (row, col) = (k / w, k % w);
        let idx = (h - 1 - row) * w + col;
        values[idx] = v;
        mask[idx] = v.is_finite();
    }
    DisparityMap::new(h, w, values, mask)
}

pub fn encode_png16(d: &DisparityMap) -> Result<Vec<u8>> {
    let mut raw = Vec::with_capacity(d.len());
    for (&v, &ok) in d.values().iter().zip(d.mask()) {
        if !ok {
            raw.push(0u16);
            continue;
        }
        if v < 0.0 {
            return Err(Error::OutOfRange(format!(
                "negative disparity {v} cannot be stored as PNG16"
            )));
        }
        let q = (f64::from(v) * 256.0).round();
        if q > f64::from(u16::MAX) {
            return Err(Error::OutOfRange(format!(
                "disparity {v} exceeds PNG16 limit {PNG16_MAX_DISPARITY}"
            )));
        }
        raw.push((q as u16).max(1));
    }
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(d.width() as u32, d.height() as u32, raw)
            .expect("buffer sized from map");
    encode_dynamic(&DynamicImage::ImageLuma16(buf))
}

pub fn decode_png16(bytes: &[u8]) -> Result<DisparityMap> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Png).map_err(|e| {
        Error::Malformed {
            format: "PNG16",
            reason: e.to_string(),
        }
    })?;
    let DynamicImage::ImageLuma16(buf) = img else {
        return Err(Error::Malformed {
            format: "PNG16",
            reason: format!("expected 16-bit grayscale, got {:?}", img.color()),
        });
    };
    let (w, h) = (buf.width() as usize, buf.height() as usize);
    let raw = buf.into_raw();
    let mask: Vec<bool> = raw.iter().map(|&q| q != 0).collect();
    let values = raw.iter().map(|&q| f32::from(q) / 256.0).collect();
    DisparityMap::new(h, w, values, mask)
}

pub fn encode_disparity(d: &DisparityMap, format: DisparityFormat) -> Result<Vec<u8>> {
    match format {
        DisparityFormat::Pfm => Ok(encode_pfm(d)),
        DisparityFormat::Png16 => encode_png16(d),
    }
}

/// Decodes either format, detected from the leading bytes.
pub fn decode_disparity(bytes: &[u8]) -> Result<DisparityMap> {
    if bytes.starts_with(PNG_SIGNATURE) {
        decode_png16(bytes)
    } else {
        decode_pfm(bytes)
    }
}

pub fn save_disparity(d: &DisparityMap, path: impl AsRef<Path>, format: DisparityFormat) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_disparity(d, format)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_disparity(path: impl AsRef<Path>) -> Result<DisparityMap> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_disparity(&bytes)
}

fn encode_dynamic(img: &DynamicImage) -> Result<Vec<u8>> {
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png)
        .map_err(|e| Error::Malformed {
            format: "PNG",
            reason: e.to_string(),
        })?;
    Ok(out.into_inner())
}

/// Encodes an image as PNG at 8 or 16 bits per channel.
pub fn encode_image_png(img: &Image, bits: u8) -> Result<Vec<u8>> {
    let (w, h) = (img.width() as u32, img.height() as u32);
    let dynamic = match (bits, img.channels()) {
        (8, 1) => DynamicImage::ImageLuma8(
            ImageBuffer::<Luma<u8>, _>::from_raw(w, h, quantize::<u8>(img.data())).unwrap(),
        ),
        (8, 3) => DynamicImage::ImageRgb8(
            ImageBuffer::<Rgb<u8>, _>::from_raw(w, h, quantize::<u8>(img.data())).unwrap(),
        ),
        (16, 1) => DynamicImage::ImageLuma16(
            ImageBuffer::<Luma<u16>, _>::from_raw(w, h, quantize::<u16>(img.data())).unwrap(),
        ),
        (16, 3) => DynamicImage::ImageRgb16(
            ImageBuffer::<Rgb<u16>, _>::from_raw(w, h, quantize::<u16>(img.data())).unwrap(),
        ),
        _ => return Err(Error::param("bits", format!("unsupported bit depth {bits}"))),
    };
    encode_dynamic(&dynamic)
}

trait Quantum: Copy {
    const MAX: f32;
    fn from_f32(v: f32) -> Self;
}

impl Quantum for u8 {
    const MAX: f32 = 255.0;
    fn from_f32(v: f32) -> Self {
        v as u8
    }
}

impl Quantum for u16 {
    const MAX: f32 = 65535.0;
    fn from_f32(v: f32) -> Self {
        v as u16
    }
}

fn quantize<T: Quantum>(data: &[f32]) -> Vec<T> {
    data.iter()
        .map(|&v| T::from_f32((v.clamp(0.0, 1.0) * T::MAX).round()))
        .collect()
}

/// Encodes raw 8-bit grayscale samples (voting maps, occlusion masks).
pub fn encode_gray8(data: &[u8], height: usize, width: usize) -> Result<Vec<u8>> {
    if data.len() != height * width {
        return Err(Error::BufferLength {
            expected: height * width,
            got: data.len(),
        });
    }
    let buf = ImageBuffer::<Luma<u8>, _>::from_raw(width as u32, height as u32, data.to_vec())
        .expect("length checked");
    encode_dynamic(&DynamicImage::ImageLuma8(buf))
}

/// Decodes an 8-bit grayscale PNG into `(data, height, width)`.
pub fn decode_gray8(bytes: &[u8]) -> Result<(Vec<u8>, usize, usize)> {
    let img = image::load_from_memory(bytes).map_err(|e| Error::Malformed {
        format: "PNG",
        reason: e.to_string(),
    })?;
    let g = img.to_luma8();
    let (w, h) = (g.width() as usize, g.height() as usize);
    Ok((g.into_raw(), h, w))
}

/// Loads any supported raster as an [`Image`]; color inputs keep 3 channels.
pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let img = image::open(path).map_err(|e| Error::Codec {
        path: path.to_path_buf(),
        source: e,
    })?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    if img.color().has_color() {
        let data = img.to_rgb32f().into_raw().into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
        Image::new(h, w, 3, data)
    } else {
        let data = img.to_luma32f().into_raw().into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
        Image::new(h, w, 1, data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_map() -> DisparityMap {
        DisparityMap::from_fn(3, 4, |i, j| {
            if (i + j) % 5 == 0 {
                None
            } else {
                Some(i as f32 * 1.25 + j as f32 * 0.1)
            }
        })
        .unwrap()
    }

    #[test]
    fn pfm_header_layout() {
        let d = DisparityMap::dense(2, 1, vec![1.0, 2.0]).unwrap();
        let bytes = encode_pfm(&d);
        assert!(bytes.starts_with(b"Pf\n1 2\n-1.0\n"));
        let payload = &bytes[bytes.len() - 8..];
        // Bottom row first.
        assert_eq!(&payload[..4], &2.0f32.to_le_bytes());
        assert_eq!(&payload[4..], &1.0f32.to_le_bytes());
    }

    #[test]
    fn pfm_round_trip_with_mask() {
        let d = sample_map();
        assert_eq!(decode_pfm(&encode_pfm(&d)).unwrap(), d);
    }

    #[test]
    fn pfm_big_endian_accepted() {
        let mut bytes = b"Pf\n2 1\n1.0\n".to_vec();
        bytes.extend_from_slice(&3.5f32.to_be_bytes());
        bytes.extend_from_slice(&0.25f32.to_be_bytes());
        let d = decode_pfm(&bytes).unwrap();
        assert_eq!(d.values(), &[3.5, 0.25]);
    }

    #[test]
    fn pfm_malformed_headers() {
        assert!(decode_pfm(b"P6\n1 1\n-1.0\n\0\0\0\0").is_err());
        assert!(decode_pfm(b"Pf\nx 1\n-1.0\n\0\0\0\0").is_err());
        assert!(decode_pfm(b"Pf\n1 1\n-1.0\n\0\0").is_err());
        assert!(decode_pfm(b"Pf\n1 1\n").is_err());
        assert!(decode_pfm(b"PF\n1 1\n-1.0\n").is_err());
    }

    #[test]
    fn png16_exact_and_quantized() {
        let d = DisparityMap::new(1, 3, vec![37.5, 10.001, 0.0], vec![true, true, false]).unwrap();
        let back = decode_png16(&encode_png16(&d).unwrap()).unwrap();
        assert_eq!(back.mask(), d.mask());
        assert_eq!(back.get(0, 0), Some(37.5));
        assert!((back.get(0, 1).unwrap() - 10.001).abs() <= 1.0 / 256.0);
    }

    #[test]
    fn png16_valid_zero_stays_valid() {
        let d = DisparityMap::dense(1, 1, vec![0.0]).unwrap();
        let back = decode_png16(&encode_png16(&d).unwrap()).unwrap();
        assert_eq!(back.mask(), &[true]);
        assert!(back.get(0, 0).unwrap() <= 1.0 / 256.0);
    }

    #[test]
    fn png16_range_errors() {
        let big = DisparityMap::dense(1, 1, vec![256.0]).unwrap();
        assert!(encode_png16(&big).is_err());
        let ok = DisparityMap::dense(1, 1, vec![255.99]).unwrap();
        assert!(encode_png16(&ok).is_ok());
        let neg = DisparityMap::dense(1, 1, vec![-1.0]).unwrap();
        assert!(encode_png16(&neg).is_err());
    }

    #[test]
    fn format_detection_and_files() {
        let dir = tempfile::tempdir().unwrap();
        let d = sample_map();
        let pfm = dir.path().join("d.pfm");
        let png = dir.path().join("d.png");
        save_disparity(&d, &pfm, DisparityFormat::Pfm).unwrap();
        save_disparity(&d, &png, DisparityFormat::Png16).unwrap();
        assert_eq!(load_disparity(&pfm).unwrap(), d);
        let q = load_disparity(&png).unwrap();
        assert_eq!(q.mask(), d.mask());
        assert!(save_disparity(&d, dir.path().join("missing/d.pfm"), DisparityFormat::Pfm).is_err());
    }

    #[test]
    fn image_png_round_trip_16bit() {
        let dir = tempfile::tempdir().unwrap();
        let img = Image::from_fn(4, 5, |i, j| (i * 5 + j) as f32 / 19.0).unwrap();
        let path = dir.path().join("img.png");
        std::fs::write(&path, encode_image_png(&img, 16).unwrap()).unwrap();
        let back = load_image(&path).unwrap();
        assert_eq!(back.channels(), 1);
        for (a, b) in img.data().iter().zip(back.data()) {
            assert!((a - b).abs() < 1e-4);
        }
    }

    #[test]
    fn gray8_round_trip() {
        let data = vec![0u8, 128, 255, 7];
        let bytes = encode_gray8(&data, 2, 2).unwrap();
        assert_eq!(decode_gray8(&bytes).unwrap(), (data, 2, 2));
    }
}
