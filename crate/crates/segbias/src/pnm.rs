//! Binary PGM (P5) and PPM (P6) with 8-bit samples.

use std::fs;
use std::io::Write;
use std::path::Path;

use segbias_core::image::{GrayImage, RgbImage};
use segbias_core::mask::BinaryMask;

use crate::error::{Error, InModule, Result};

struct Raster {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<u8>,
}

fn encode(magic: &str, width: usize, height: usize, data: &[u8]) -> Vec<u8> {
    let mut out = format!("{magic}\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(data);
    out
}

fn decode(bytes: &[u8], path: &Path) -> Result<Raster> {
    let bad = |msg: &str| Error::parse(path, None, msg);
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        // whitespace and comments between header fields
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(bad("truncated header")),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|b| !b.is_ascii_whitespace()) {
            pos += 1;
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("non-ASCII header"))?);
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let channels = match fields[0] {
        "P5" => 1,
        "P6" => 3,
        other => return Err(bad(&format!("unsupported magic `{other}`"))),
    };
    let num = |s: &str| s.parse::<usize>().map_err(|_| bad(&format!("bad header number `{s}`")));
    let (width, height, maxval) = (num(fields[1])?, num(fields[2])?, num(fields[3])?);
    if maxval != 255 {
        return Err(bad(&format!("only 8-bit samples are supported, maxval {maxval}")));
    }
    let need = width * height * channels;
    let data = bytes.get(pos..).unwrap_or_default();
    if data.len() != need {
        return Err(bad(&format!("expected {need} raster bytes, found {}", data.len())));
    }
    Ok(Raster {
        width,
        height,
        channels,
        data: data.to_vec(),
    })
}

fn read_raster(path: &Path, channels: usize) -> Result<Raster> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let r = decode(&bytes, path)?;
    if r.channels != channels {
        let want = if channels == 1 { "P5" } else { "P6" };
        return Err(Error::parse(path, None, format!("expected a {want} file")));
    }
    Ok(r)
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

/// Writes a mask with foreground as 255 and background as 0.
pub fn write_mask(path: impl AsRef<Path>, mask: &BinaryMask) -> Result<()> {
    let data: Vec<u8> = mask.as_slice().iter().map(|&v| v * 255).collect();
    write_bytes(path.as_ref(), &encode("P5", mask.width(), mask.height(), &data))
}

/// Reads a mask; any value other than 0 or 255 is rejected.
pub fn read_mask(path: impl AsRef<Path>) -> Result<BinaryMask> {
    let path = path.as_ref();
    let r = read_raster(path, 1)?;
    let mut data = r.data;
    for v in &mut data {
        *v = match *v {
            0 => 0,
            255 => 1,
            other => return Err(Error::parse(path, None, format!("mask value {other} is neither 0 nor 255"))),
        };
    }
    BinaryMask::from_vec(r.width, r.height, data).in_module("mask_ops")
}

/// Writes intensities as `round(255 * v)`.
pub fn write_gray(path: impl AsRef<Path>, image: &GrayImage) -> Result<()> {
    write_bytes(path.as_ref(), &encode("P5", image.width(), image.height(), &image.to_u8()))
}

pub fn read_gray(path: impl AsRef<Path>) -> Result<GrayImage> {
    let r = read_raster(path.as_ref(), 1)?;
    GrayImage::from_u8(r.width, r.height, &r.data).in_module("synth_corpus")
}

pub fn write_rgb(path: impl AsRef<Path>, image: &RgbImage) -> Result<()> {
    let data: Vec<u8> = image.pixels().iter().flatten().copied().collect();
    write_bytes(path.as_ref(), &encode("P6", image.width(), image.height(), &data))
}

pub fn read_rgb(path: impl AsRef<Path>) -> Result<RgbImage> {
    let r = read_raster(path.as_ref(), 3)?;
    let pixels = r.data.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
    RgbImage::from_vec(r.width, r.height, pixels).in_module("tone_grouping")
}
