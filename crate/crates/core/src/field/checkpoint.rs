//! `NRF1` parameter checkpoints.
//!
//! Layout (little endian): magic `NRF1`, `u32` network count, then per
//! network seven `u32` config words (m_pos, m_dir, depth, width, skip or
//! `u32::MAX`, dir_width, channels), a `u64` parameter count and the
//! parameters as `f64` in slot order.

use std::fs;
use std::path::Path;

use super::encoding::EncodingConfig;
use super::mlp::{FieldArch, RadianceFieldParams};
use crate::error::{Error, Result};

pub const NRF_MAGIC: &[u8; 4] = b"NRF1";

pub fn encode_checkpoint(nets: &[&RadianceFieldParams]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(NRF_MAGIC);
    out.extend_from_slice(&(nets.len() as u32).to_le_bytes());
    for net in nets {
        let a = &net.arch;
        let words = [
            a.encoding.m_pos as u32,
            a.encoding.m_dir as u32,
            a.depth as u32,
            a.width as u32,
            a.skip.map_or(u32::MAX, |s| s as u32),
            a.dir_width as u32,
            a.channels as u32,
        ];
        for w in words {
            out.extend_from_slice(&w.to_le_bytes());
        }
        out.extend_from_slice(&(net.data.len() as u64).to_le_bytes());
        for v in &net.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::TruncatedPayload {
                expected: self.pos + n,
                found: self.bytes.len(),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Vec<RadianceFieldParams>> {
    if bytes.len() < 4 || &bytes[..4] != NRF_MAGIC {
        return Err(Error::BadMagic {
            expected: *NRF_MAGIC,
            found: bytes.get(..4).map_or([0; 4], |m| m.try_into().expect("4 bytes")),
        });
    }
    let mut r = Reader { bytes, pos: 4 };
    let count = r.u32()? as usize;
    let mut nets = Vec::with_capacity(count.min(16));
    for _ in 0..count {
        let mut w = [0u32; 7];
        for x in &mut w {
            *x = r.u32()?;
        }
        let arch = FieldArch {
            encoding: EncodingConfig {
                m_pos: w[0] as usize,
                m_dir: w[1] as usize,
            },
            depth: w[2] as usize,
            width: w[3] as usize,
            skip: (w[4] != u32::MAX).then_some(w[4] as usize),
            dir_width: w[5] as usize,
            channels: w[6] as usize,
        };
        let n = r.u64()? as usize;
        let raw = r.take(n.checked_mul(8).ok_or_else(|| Error::Invalid("parameter count overflows".into()))?)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        nets.push(RadianceFieldParams::from_data(arch, data)?);
    }
    if r.pos != bytes.len() {
        return Err(Error::Invalid(format!("{} trailing bytes after checkpoint", bytes.len() - r.pos)));
    }
    Ok(nets)
}

pub fn save_checkpoint(path: impl AsRef<Path>, nets: &[&RadianceFieldParams]) -> Result<()> {
    fs::write(path, encode_checkpoint(nets))?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Vec<RadianceFieldParams>> {
    decode_checkpoint(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn net(seed: u64, skip: Option<usize>) -> RadianceFieldParams {
        let arch = FieldArch {
            encoding: EncodingConfig { m_pos: 3, m_dir: 2 },
            depth: 3,
            width: 8,
            skip,
            dir_width: 4,
            channels: 1,
        };
        RadianceFieldParams::init(arch, -1.0, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    #[test]
    fn roundtrip() {
        let a = net(1, Some(2));
        let b = net(2, None);
        let bytes = encode_checkpoint(&[&a, &b]);
        assert_eq!(&bytes[..4], b"NRF1");
        assert_eq!(&bytes[4..8], &2u32.to_le_bytes());
        let back = decode_checkpoint(&bytes).unwrap();
        assert_eq!(back, vec![a, b]);
    }

    #[test]
    fn corrupt_inputs() {
        let a = net(1, Some(2));
        let bytes = encode_checkpoint(&[&a]);
        assert!(matches!(decode_checkpoint(&bytes[..bytes.len() - 1]), Err(Error::TruncatedPayload { .. })));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_checkpoint(&bad), Err(Error::BadMagic { .. })));
    }
}
