//! Binary PPM (P6) and PGM (P5) images with 8-bit samples.

use std::fs;
use std::path::Path;

use spd_core::{BinaryMask, Image};

use crate::error::{invalid, CliError, Result};

struct Header {
    magic: [u8; 2],
    width: usize,
    height: usize,
    maxval: usize,
    data_start: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    if bytes.len() < 2 || bytes[0] != b'P' || !(bytes[1] == b'5' || bytes[1] == b'6') {
        return Err(invalid!("not a binary PPM/PGM file (expected P5 or P6)"));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for f in &mut fields {
        // Whitespace and `#` comments may separate header fields.
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
            return Err(invalid!("truncated or malformed image header"));
        }
        *f = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| invalid!("header number out of range"))?;
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(invalid!("missing whitespace after the image header"));
    }
    let [width, height, maxval] = fields;
    if maxval == 0 || maxval > 255 {
        return Err(invalid!("only 8-bit samples are supported (maxval {maxval})"));
    }
    Ok(Header {
        magic: [bytes[0], bytes[1]],
        width,
        height,
        maxval,
        data_start: pos + 1,
    })
}

fn samples<'a>(bytes: &'a [u8], h: &Header, channels: usize) -> Result<&'a [u8]> {
    let n = h
        .width
        .checked_mul(h.height)
        .and_then(|v| v.checked_mul(channels))
        .ok_or_else(|| invalid!("image dimensions overflow"))?;
    let data = &bytes[h.data_start..];
    if data.len() < n {
        return Err(invalid!("pixel data truncated: expected {n} bytes, found {}", data.len()));
    }
    Ok(&data[..n])
}

/// Decodes P6 (3 channels) or P5 (1 channel) into `[0, 1]` values.
pub fn decode_image(bytes: &[u8]) -> Result<Image> {
    let h = parse_header(bytes)?;
    let channels = if h.magic[1] == b'6' { 3 } else { 1 };
    let data = samples(bytes, &h, channels)?;
    let scale = h.maxval as f32;
    Ok(Image::new(h.height, h.width, channels, data.iter().map(|&b| f32::from(b) / scale).collect())?)
}

/// Encodes as P6 or P5 depending on the channel count.
pub fn encode_image(img: &Image) -> Vec<u8> {
    let magic = if img.channels() == 3 { "P6" } else { "P5" };
    let mut out = format!("{magic}\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(img.data().iter().map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8));
    out
}

/// Reads a mask stored as P5 or P6; any non-zero sample marks a pixel.
pub fn decode_mask(bytes: &[u8]) -> Result<BinaryMask> {
    let h = parse_header(bytes)?;
    let channels = if h.magic[1] == b'6' { 3 } else { 1 };
    let data = samples(bytes, &h, channels)?;
    let bits = data.chunks(channels).map(|p| p.iter().any(|&b| b != 0)).collect();
    Ok(BinaryMask::new(h.height, h.width, bits)?)
}

/// P5 with 0 / 255 samples.
pub fn encode_mask(mask: &BinaryMask) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", mask.width(), mask.height()).into_bytes();
    out.extend(mask.data().iter().map(|&b| if b { 255u8 } else { 0 }));
    out
}

pub fn read_image(path: &Path) -> Result<Image> {
    let bytes = fs::read(path).map_err(CliError::io(path))?;
    decode_image(&bytes).map_err(|e| e.in_file(path))
}

pub fn write_image(path: &Path, img: &Image) -> Result<()> {
    write_bytes(path, &encode_image(img))
}

pub fn read_mask(path: &Path) -> Result<BinaryMask> {
    let bytes = fs::read(path).map_err(CliError::io(path))?;
    decode_mask(&bytes).map_err(|e| e.in_file(path))
}

pub fn write_mask(path: &Path, mask: &BinaryMask) -> Result<()> {
    write_bytes(path, &encode_mask(mask))
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(CliError::io(dir))?;
    }
    fs::write(path, bytes).map_err(CliError::io(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_with_comment() {
        let mut bytes = b"P5\n# made by hand\n8 8\n255\n".to_vec();
        bytes.extend([128u8; 64]);
        let img = decode_image(&bytes).unwrap();
        assert_eq!((img.height(), img.width(), img.channels()), (8, 8, 1));
        assert!((img.get(3, 3, 0) - 128.0 / 255.0).abs() < 1e-7);
    }

    #[test]
    fn rejects_truncated_and_wide() {
        assert!(decode_image(b"P6\n8 8\n255\n\x00").is_err());
        assert!(decode_image(b"P6\n8 8\n65535\n").is_err());
        assert!(decode_image(b"P3\n8 8\n255\n").is_err());
    }
}
