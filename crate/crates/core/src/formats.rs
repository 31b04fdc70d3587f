//! Raster side formats: `.spm` float maps, 16-bit PGM ground truth, and
//! 8-bit PNG previews.
//!
//! An `.spm` file reuses the 24-byte `.spk` header with magic `SPM1`,
//! `steps = 1` and a zero clock field, followed by `width·height`
//! little-endian `f32` values in row-major order.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::sim::NonuniformityMap;
use crate::spike::{parse_header, IntensityImage, HEADER_LEN};

pub const SPM_MAGIC: [u8; 4] = *b"SPM1";

pub fn encode_map(width: usize, height: usize, values: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * values.len());
    out.extend_from_slice(&SPM_MAGIC);
    out.extend_from_slice(&(width as u32).to_le_bytes());
    out.extend_from_slice(&(height as u32).to_le_bytes());
    out.extend_from_slice(&1u32.to_le_bytes());
    out.extend_from_slice(&0u64.to_le_bytes());
    for v in values {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out
}

/// Returns `(width, height, values)`.
pub fn decode_map(bytes: &[u8]) -> Result<(usize, usize, Vec<f64>)> {
    let header = parse_header(bytes, SPM_MAGIC)?;
    let n = header.width * header.height * header.steps;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != 4 * n {
        return Err(Error::TruncatedPayload {
            expected: 4 * n,
            found: payload.len(),
        });
    }
    let values = payload
        .chunks_exact(4)
        .take(header.width * header.height)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    Ok((header.width, header.height, values))
}

pub fn write_nonuniformity(path: &Path, map: &NonuniformityMap) -> Result<()> {
    std::fs::write(path, encode_map(map.width(), map.height(), map.values()))?;
    Ok(())
}

pub fn read_nonuniformity(path: &Path) -> Result<NonuniformityMap> {
    let (w, h, v) = decode_map(&std::fs::read(path)?)?;
    NonuniformityMap::new(w, h, v)
}

pub fn write_intensity_map(path: &Path, image: &IntensityImage) -> Result<()> {
    std::fs::write(path, encode_map(image.width(), image.height(), image.values()))?;
    Ok(())
}

pub fn read_intensity_map(path: &Path) -> Result<IntensityImage> {
    let (w, h, v) = decode_map(&std::fs::read(path)?)?;
    IntensityImage::new(w, h, v)
}

/// Binary 16-bit PGM (`P5`, maxval 65535, big-endian samples). Values are
/// divided by `full_scale` and clamped to `[0, 1]` before quantization.
pub fn encode_pgm16(image: &IntensityImage, full_scale: f64) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n65535\n", image.width(), image.height()).into_bytes();
    for v in image.values() {
        let q = ((v / full_scale).clamp(0.0, 1.0) * 65535.0).round() as u16;
        out.extend_from_slice(&q.to_be_bytes());
    }
    out
}

/// Parses binary PGM (8 or 16 bit) back into intensities in `[0, full_scale]`.
pub fn decode_pgm(bytes: &[u8], full_scale: f64) -> Result<IntensityImage> {
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Parse("truncated PGM header".into()));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1;
    if fields[0] != "P5" {
        return Err(Error::Parse(format!("unsupported PGM magic {}", fields[0])));
    }
    let parse = |s: &str| s.parse::<usize>().map_err(|e| Error::Parse(format!("PGM header: {e}")));
    let (w, h, maxval) = (parse(&fields[1])?, parse(&fields[2])?, parse(&fields[3])?);
    if maxval == 0 || maxval > 65535 {
        return Err(Error::Parse(format!("PGM maxval {maxval}")));
    }
    let bps = if maxval > 255 { 2 } else { 1 };
    let data = bytes.get(pos..).unwrap_or_default();
    if data.len() != w * h * bps {
        return Err(Error::TruncatedPayload {
            expected: w * h * bps,
            found: data.len(),
        });
    }
    let values = data
        .chunks_exact(bps)
        .map(|c| {
            let q = if bps == 2 {
                u16::from_be_bytes([c[0], c[1]]) as f64
            } else {
                c[0] as f64
            };
            q / maxval as f64 * full_scale
        })
        .collect();
    IntensityImage::new(w, h, values)
}

/// 8-bit grayscale PNG; `value·scale` is clamped to `[0, 255]`.
pub fn write_png8<W: Write>(sink: W, image: &IntensityImage, scale: f64) -> Result<()> {
    let pixels: Vec<u8> = image
        .values()
        .iter()
        .map(|v| (v * scale).round().clamp(0.0, 255.0) as u8)
        .collect();
    let encoder = image::codecs::png::PngEncoder::new(sink);
    image::ImageEncoder::write_image(
        encoder,
        &pixels,
        image.width() as u32,
        image.height() as u32,
        image::ExtendedColorType::L8,
    )?;
    Ok(())
}

pub fn save_png8(path: &Path, image: &IntensityImage, scale: f64) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_png8(std::io::BufWriter::new(file), image, scale)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_roundtrip_at_f32_precision() {
        let values = vec![1.0, 0.8125, 1.25, 0.5];
        let bytes = encode_map(2, 2, &values);
        assert_eq!(&bytes[0..4], b"SPM1");
        assert_eq!(bytes.len(), HEADER_LEN + 16);
        let (w, h, back) = decode_map(&bytes).unwrap();
        assert_eq!((w, h), (2, 2));
        assert_eq!(back, values);
    }

    #[test]
    fn map_rejects_spike_magic() {
        let mut bytes = encode_map(1, 1, &[1.0]);
        bytes[2] = b'K';
        assert!(matches!(decode_map(&bytes), Err(Error::BadMagic { .. })));
    }

    #[test]
    fn pgm16_roundtrip() {
        let img = IntensityImage::new(3, 1, vec![0.0, 0.5, 1.0]).unwrap();
        let bytes = encode_pgm16(&img, 1.0);
        assert!(bytes.starts_with(b"P5\n3 1\n65535\n"));
        let back = decode_pgm(&bytes, 1.0).unwrap();
        for (a, b) in img.values().iter().zip(back.values()) {
            assert!((a - b).abs() <= 0.5 / 65535.0);
        }
    }

    #[test]
    fn png_header() {
        let img = IntensityImage::new(2, 2, vec![0.0, 0.25, 0.5, 1.0]).unwrap();
        let mut out = Vec::new();
        write_png8(&mut out, &img, 255.0).unwrap();
        assert_eq!(&out[1..4], b"PNG");
    }
}
