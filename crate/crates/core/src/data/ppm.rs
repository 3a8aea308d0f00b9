//! Binary PPM (P6, maxval 255).

use std::path::Path;

use crate::data::Image;
use crate::error::{Error, Result};

pub fn decode_ppm(bytes: &[u8]) -> Result<Image> {
    if bytes.len() < 2 {
        return Err(Error::BadHeader("missing magic number".into()));
    }
    let magic = &bytes[..2];
    if magic != b"P6" {
        return Err(Error::UnsupportedFormat(String::from_utf8_lossy(magic).into_owned()));
    }
    let mut pos = 2;
    let width = header_number(bytes, &mut pos, "width")?;
    let height = header_number(bytes, &mut pos, "height")?;
    let maxval = header_number(bytes, &mut pos, "maxval")?;
    if maxval != 255 {
        return Err(Error::UnsupportedMaxval(maxval as u32));
    }
    // Exactly one whitespace byte separates the header from the raster.
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(Error::BadHeader("expected whitespace after maxval".into())),
    }
    let expected = 3 * width * height;
    let raster = &bytes[pos..];
    if raster.len() < expected {
        return Err(Error::ShortPixelData {
            expected,
            found: raster.len(),
        });
    }
    Image::new(width, height, raster[..expected].to_vec())
}

/// Skips whitespace and `#` comments, then parses a decimal number.
fn header_number(bytes: &[u8], pos: &mut usize, field: &str) -> Result<usize> {
    loop {
        match bytes.get(*pos) {
            Some(b) if b.is_ascii_whitespace() => *pos += 1,
            Some(b'#') => {
                while bytes.get(*pos).is_some_and(|&b| b != b'\n') {
                    *pos += 1;
                }
            }
            _ => break,
        }
    }
    let start = *pos;
    while bytes.get(*pos).is_some_and(u8::is_ascii_digit) {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::BadHeader(format!("missing {field}")));
    }
    std::str::from_utf8(&bytes[start..*pos])
        .expect("ascii digits")
        .parse()
        .map_err(|_| Error::BadHeader(format!("{field} out of range")))
}

/// Canonical encoding: `P6\n<w> <h>\n255\n` followed by the raster.
pub fn encode_ppm(image: &Image) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    out.extend_from_slice(image.pixels());
    out
}

pub fn read_ppm(path: &Path) -> Result<Image> {
    let bytes = std::fs::read(path).map_err(|e| Error::from(e).in_file(path))?;
    decode_ppm(&bytes).map_err(|e| e.in_file(path))
}

pub fn write_ppm(path: &Path, image: &Image) -> Result<()> {
    std::fs::write(path, encode_ppm(image)).map_err(|e| Error::from(e).in_file(path))
}
