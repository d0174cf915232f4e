//! Binary netpbm codecs: PPM (`P6`) for RGB images and PGM (`P5`) for masks and
//! grayscale maps. Only `maxval` 255 is supported.

use std::fs;
use std::path::Path;

use super::ChangeMask;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// `round(v·255)` after clamping to `[0, 1]`.
pub fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn dequantize(b: u8) -> f32 {
    b as f32 / 255.0
}

fn header(magic: &str, width: usize, height: usize) -> Vec<u8> {
    format!("{magic}\n{width} {height}\n255\n").into_bytes()
}

/// Encodes a `3×H×W` image as `P6`.
pub fn encode_ppm(image: &Tensor<f32>) -> Result<Vec<u8>> {
    let &[3, h, w] = image.shape() else {
        return Err(Error::shape("encode_ppm", format!("expected 3×H×W, got {:?}", image.shape())));
    };
    let plane = h * w;
    let mut out = header("P6", w, h);
    out.reserve(3 * plane);
    let d = image.data();
    for p in 0..plane {
        out.extend((0..3).map(|c| quantize(d[c * plane + p])));
    }
    Ok(out)
}

pub fn encode_pgm(width: usize, height: usize, pixels: &[u8]) -> Result<Vec<u8>> {
    if pixels.len() != width * height {
        return Err(Error::shape("encode_pgm", format!("{width}x{height} with {} pixels", pixels.len())));
    }
    let mut out = header("P5", width, height);
    out.extend_from_slice(pixels);
    Ok(out)
}

/// Masks are stored as `{0, 255}`.
pub fn encode_mask(mask: &ChangeMask) -> Vec<u8> {
    let px: Vec<u8> = mask.data().iter().map(|&v| v * 255).collect();
    encode_pgm(mask.width(), mask.height(), &px).expect("mask extents are consistent")
}

struct Parsed<'a> {
    width: usize,
    height: usize,
    body: &'a [u8],
}

fn parse<'a>(bytes: &'a [u8], magic: &[u8; 2], channels: usize) -> std::result::Result<Parsed<'a>, String> {
    if bytes.len() < 2 || &bytes[..2] != magic {
        return Err(format!("expected magic {}", String::from_utf8_lossy(magic)));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in &mut fields {
        // whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err("truncated header".into());
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .unwrap()
            .parse()
            .map_err(|_| "header value out of range".to_string())?;
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err("missing whitespace after maxval".into());
    }
    pos += 1;
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(format!("unsupported maxval {maxval}"));
    }
    if width == 0 || height == 0 {
        return Err(format!("empty extent {width}x{height}"));
    }
    let need = width * height * channels;
    let body = &bytes[pos..];
    if body.len() != need {
        return Err(format!("expected {need} data bytes for {width}x{height}, found {}", body.len()));
    }
    Ok(Parsed { width, height, body })
}

pub fn decode_ppm(bytes: &[u8]) -> std::result::Result<Tensor<f32>, String> {
    let p = parse(bytes, b"P6", 3)?;
    let plane = p.width * p.height;
    let mut data = vec![0.0f32; 3 * plane];
    for (px, rgb) in p.body.chunks_exact(3).enumerate() {
        for c in 0..3 {
            data[c * plane + px] = dequantize(rgb[c]);
        }
    }
    Tensor::new(&[3, p.height, p.width], data).map_err(|e| e.to_string())
}

/// Returns `(width, height, pixels)`.
pub fn decode_pgm(bytes: &[u8]) -> std::result::Result<(usize, usize, Vec<u8>), String> {
    let p = parse(bytes, b"P5", 1)?;
    Ok((p.width, p.height, p.body.to_vec()))
}

/// Pixels above 127 are change.
pub fn decode_mask(bytes: &[u8]) -> std::result::Result<ChangeMask, String> {
    let (w, h, px) = decode_pgm(bytes)?;
    ChangeMask::new(h, w, px.into_iter().map(|v| u8::from(v > 127)).collect()).map_err(|e| e.to_string())
}

fn image_err(path: &Path) -> impl FnOnce(String) -> Error + '_ {
    move |reason| Error::Image { path: path.to_path_buf(), reason }
}

pub fn write_image(path: &Path, image: &Tensor<f32>) -> Result<()> {
    fs::write(path, encode_ppm(image)?)?;
    Ok(())
}

pub fn read_image(path: &Path) -> Result<Tensor<f32>> {
    decode_ppm(&fs::read(path)?).map_err(image_err(path))
}

pub fn write_mask(path: &Path, mask: &ChangeMask) -> Result<()> {
    fs::write(path, encode_mask(mask))?;
    Ok(())
}

pub fn read_mask(path: &Path) -> Result<ChangeMask> {
    decode_mask(&fs::read(path)?).map_err(image_err(path))
}

pub fn write_gray(path: &Path, width: usize, height: usize, pixels: &[u8]) -> Result<()> {
    fs::write(path, encode_pgm(width, height, pixels)?)?;
    Ok(())
}
