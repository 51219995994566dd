//! Frame images on disk.
//!
//! Two formats are read and written:
//!
//! * Binary PPM (`P6`), 8-bit, header `P6\n<w> <h>\n255\n` followed by
//!   interleaved RGB bytes. Comments are accepted on read.
//! * `MVIM` float tensors: a 16-byte header of magic `b"MVIM"`, then three
//!   little-endian `u32`s: dtype code (1 = f32, 2 = f64), height, width. The
//!   payload is `3 * H * W` little-endian floats in channel-planar order
//!   (all red, then green, then blue), values in `[0, 1]`.
//!
//! The format is chosen by extension: `.ppm` or `.mvim`.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const MVIM_MAGIC: &[u8; 4] = b"MVIM";
pub const MVIM_F32: u32 = 1;
pub const MVIM_F64: u32 = 2;

/// Three-channel planar image with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    /// `[3, height, width]` row-major.
    pub data: Vec<f32>,
}

impl Image {
    pub fn new(width: usize, height: usize) -> Self {
        Image {
            width,
            height,
            data: vec![0.0; 3 * width * height],
        }
    }

    pub fn filled(width: usize, height: usize, rgb: [f32; 3]) -> Self {
        let mut img = Self::new(width, height);
        for (c, v) in rgb.iter().enumerate() {
            img.plane_mut(c).fill(*v);
        }
        img
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f32) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [f32] {
        let n = self.width * self.height;
        &mut self.data[c * n..(c + 1) * n]
    }

    /// Copy of the integer-aligned window covering `[x0, x0 + w) x [y0, y0 + h)`.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Image {
        let mut out = Image::new(w, h);
        for c in 0..3 {
            for y in 0..h {
                for x in 0..w {
                    out.set(c, y, x, self.get(c, y0 + y, x0 + x));
                }
            }
        }
        out
    }

    /// Quantize to 8 bits, the precision PPM stores.
    pub fn quantized(&self) -> Image {
        Image {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|v| quantize(*v) as f32 / 255.0).collect(),
        }
    }
}

fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn encode_ppm(img: &Image) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.reserve(3 * img.width * img.height);
    for y in 0..img.height {
        for x in 0..img.width {
            for c in 0..3 {
                out.push(quantize(img.get(c, y, x)));
            }
        }
    }
    out
}

pub fn decode_ppm(bytes: &[u8], path: &Path) -> Result<Image> {
    let err = |msg: &str| Error::Image {
        path: path.to_path_buf(),
        msg: msg.to_string(),
    };
    let mut pos = 0;
    let mut token = || -> Option<String> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        (pos > start).then(|| String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    if token().as_deref() != Some("P6") {
        return Err(err("not a binary PPM (P6)"));
    }
    let mut num = || token().and_then(|t| t.parse::<usize>().ok());
    let (w, h, max) = match (num(), num(), num()) {
        (Some(w), Some(h), Some(m)) => (w, h, m),
        _ => return Err(err("malformed header")),
    };
    if max != 255 || w == 0 || h == 0 {
        return Err(err("only non-empty 8-bit PPM is supported"));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let raster = bytes.get(pos..pos + 3 * w * h).ok_or_else(|| err("truncated raster"))?;
    let mut img = Image::new(w, h);
    for (i, px) in raster.chunks_exact(3).enumerate() {
        let (y, x) = (i / w, i % w);
        for (c, v) in px.iter().enumerate() {
            img.set(c, y, x, *v as f32 / 255.0);
        }
    }
    Ok(img)
}

pub fn encode_mvim(img: &Image, dtype: u32) -> Vec<u8> {
    let mut out = MVIM_MAGIC.to_vec();
    out.extend(dtype.to_le_bytes());
    out.extend((img.height as u32).to_le_bytes());
    out.extend((img.width as u32).to_le_bytes());
    for v in &img.data {
        match dtype {
            MVIM_F64 => out.extend((*v as f64).to_le_bytes()),
            _ => out.extend(v.to_le_bytes()),
        }
    }
    out
}

pub fn decode_mvim(bytes: &[u8], path: &Path) -> Result<Image> {
    let err = |msg: String| Error::Image {
        path: path.to_path_buf(),
        msg,
    };
    if bytes.len() < 16 || &bytes[..4] != MVIM_MAGIC {
        return Err(err("bad MVIM header".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
    let (dtype, h, w) = (word(4) as u32, word(8), word(12));
    let n = 3 * h * w;
    let payload = &bytes[16..];
    let data: Vec<f32> = match dtype {
        MVIM_F32 if payload.len() == 4 * n => payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect(),
        MVIM_F64 if payload.len() == 8 * n => payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()) as f32)
            .collect(),
        MVIM_F32 | MVIM_F64 => return Err(err(format!("payload size {} does not match {h}x{w}", payload.len()))),
        other => return Err(err(format!("unknown dtype code {other}"))),
    };
    Ok(Image { width: w, height: h, data })
}

pub fn read_image(path: &Path) -> Result<Image> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    match path.extension().and_then(|e| e.to_str()) {
        Some("mvim") => decode_mvim(&bytes, path),
        _ => decode_ppm(&bytes, path),
    }
}

pub fn write_image(img: &Image, path: &Path) -> Result<()> {
    let bytes = match path.extension().and_then(|e| e.to_str()) {
        Some("mvim") => encode_mvim(img, MVIM_F32),
        _ => encode_ppm(img),
    };
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Image {
        let mut img = Image::new(3, 2);
        for (i, v) in img.data.iter_mut().enumerate() {
            *v = i as f32 / 17.0;
        }
        img
    }

    #[test]
    fn ppm_layout_and_round_trip() {
        let img = sample().quantized();
        let bytes = encode_ppm(&img);
        assert!(bytes.starts_with(b"P6\n3 2\n255\n"));
        assert_eq!(bytes.len(), 11 + 18);
        // first pixel interleaves the three planes
        assert_eq!(bytes[11..14], [0, quantize(6.0 / 17.0), quantize(12.0 / 17.0)]);
        assert_eq!(decode_ppm(&bytes, Path::new("x.ppm")).unwrap(), img);
    }

    #[test]
    fn ppm_accepts_comments() {
        let mut bytes = b"P6\n# made by hand\n1 1\n255\n".to_vec();
        bytes.extend([255, 0, 51]);
        let img = decode_ppm(&bytes, Path::new("c.ppm")).unwrap();
        assert_eq!(img.data, vec![1.0, 0.0, 0.2]);
    }

    #[test]
    fn mvim_layout_and_round_trip() {
        let img = sample();
        let bytes = encode_mvim(&img, MVIM_F32);
        assert_eq!(&bytes[..4], b"MVIM");
        assert_eq!(bytes[4..16], [1, 0, 0, 0, 2, 0, 0, 0, 3, 0, 0, 0]);
        assert_eq!(bytes.len(), 16 + 4 * 18);
        assert_eq!(decode_mvim(&bytes, Path::new("a.mvim")).unwrap(), img);
        let b64 = encode_mvim(&img, MVIM_F64);
        assert_eq!(b64.len(), 16 + 8 * 18);
        assert_eq!(decode_mvim(&b64, Path::new("a.mvim")).unwrap(), img);
        assert!(decode_mvim(&bytes[..20], Path::new("a.mvim")).is_err());
    }
}
