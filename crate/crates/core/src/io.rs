//! Binary PPM (P6) reading and writing.
//!
//! The canonical encoding written by [`save_image`] is
//! `P6\n<width> <height>\n255\n` followed by the raw interleaved RGB bytes.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::raster::RgbImage;

pub fn load_image(path: impl AsRef<Path>) -> Result<RgbImage> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_ppm(&bytes).map_err(|err| match err {
        PpmError::Header(reason) => Error::MalformedHeader {
            path: path.to_owned(),
            reason,
        },
        PpmError::Depth(maxval) => Error::UnsupportedDepth {
            path: path.to_owned(),
            maxval,
        },
    })
}

pub fn save_image(image: &RgbImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_ppm(image)).map_err(|e| Error::io(path, e))
}

pub fn encode_ppm(image: &RgbImage) -> Vec<u8> {
    let header = format!("P6\n{} {}\n255\n", image.width(), image.height());
    let mut out = Vec::with_capacity(header.len() + image.data().len());
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(image.data());
    out
}

enum PpmError {
    Header(String),
    Depth(u32),
}

struct HeaderReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderReader<'_> {
    fn skip_whitespace_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, field: &str) -> Result<u32, PpmError> {
        self.skip_whitespace_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(PpmError::Header(format!("expected {field}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| PpmError::Header(format!("{field} out of range")))
    }
}

fn decode_ppm(bytes: &[u8]) -> Result<RgbImage, PpmError> {
    if bytes.len() < 2 || &bytes[..2] != b"P6" {
        return Err(PpmError::Header("missing P6 magic".into()));
    }
    let mut reader = HeaderReader { bytes, pos: 2 };
    let width = reader.number("width")? as usize;
    let height = reader.number("height")? as usize;
    let maxval = reader.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(PpmError::Header(format!(
            "dimensions must be positive, got {width}x{height}"
        )));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(PpmError::Header(format!("invalid maxval {maxval}")));
    }
    if maxval != 255 {
        return Err(PpmError::Depth(maxval));
    }
    // exactly one whitespace byte separates the header from the raster
    match bytes.get(reader.pos) {
        Some(b) if b.is_ascii_whitespace() => reader.pos += 1,
        _ => return Err(PpmError::Header("missing separator after maxval".into())),
    }
    let expected = width * height * 3;
    let payload = &bytes[reader.pos..];
    if payload.len() < expected {
        return Err(PpmError::Header(format!(
            "raster truncated: expected {expected} bytes, found {}",
            payload.len()
        )));
    }
    RgbImage::new(height, width, payload[..expected].to_vec())
        .map_err(|e| PpmError::Header(e.to_string()))
}
