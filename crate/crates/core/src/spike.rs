//! Spike stream data model and the `.spk` interchange format.
//!
//! A stream is an H×W×T binary tensor. Frames are stored one after another,
//! each frame row-major and packed MSB-first, padded up to a whole byte so a
//! single frame can be located without decoding its neighbours.
//!
//! File layout (all integers little-endian):
//!
//! ```text
//! offset  size  field
//! 0       4     magic "SPK1"
//! 4       4     width
//! 8       4     height
//! 12      4     steps
//! 16      8     clock period in nanoseconds
//! 24      ..    steps × ceil(width·height / 8) payload bytes
//! ```

use std::io::{Read, Write};

use crate::error::{Error, Result};

pub const SPK_MAGIC: [u8; 4] = *b"SPK1";
pub const HEADER_LEN: usize = 24;

/// Default clock tick of the portable camera, 50 µs.
pub const DEFAULT_CLOCK_NS: u64 = 50_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PixelCoord {
    pub x: usize,
    pub y: usize,
}

impl PixelCoord {
    pub fn new(x: usize, y: usize) -> Self {
        Self { x, y }
    }
}

/// Per-pixel non-negative intensity in accumulation units per clock tick.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityImage {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl IntensityImage {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::ZeroDimension);
        }
        if values.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a {width}x{height} image",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::Invalid(format!("intensity {v} is negative or non-finite")));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn constant(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn same_dims(&self, other: &IntensityImage) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

/// Immutable bit-packed spike tensor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpikeStream {
    width: usize,
    height: usize,
    steps: usize,
    clock_period_ns: u64,
    bits: Vec<u8>,
}

fn frame_bytes_for(width: usize, height: usize) -> usize {
    (width * height).div_ceil(8)
}

impl SpikeStream {
    /// Builds a stream from an already packed payload.
    pub fn from_packed(
        width: usize,
        height: usize,
        steps: usize,
        clock_period_ns: u64,
        bits: Vec<u8>,
    ) -> Result<Self> {
        if width == 0 || height == 0 || steps == 0 {
            return Err(Error::ZeroDimension);
        }
        if clock_period_ns == 0 {
            return Err(Error::InvalidClockPeriod);
        }
        let expected = steps * frame_bytes_for(width, height);
        if bits.len() != expected {
            return Err(Error::TruncatedPayload {
                expected,
                found: bits.len(),
            });
        }
        Ok(Self {
            width,
            height,
            steps,
            clock_period_ns,
            bits,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn clock_period_ns(&self) -> u64 {
        self.clock_period_ns
    }

    pub fn clock_period_secs(&self) -> f64 {
        self.clock_period_ns as f64 * 1e-9
    }

    pub fn frame_bytes(&self) -> usize {
        frame_bytes_for(self.width, self.height)
    }

    pub fn packed(&self) -> &[u8] {
        &self.bits
    }

    #[inline]
    fn bit_index(&self, pixel: usize, t: usize) -> (usize, u8) {
        let byte = t * self.frame_bytes() + pixel / 8;
        (byte, 0x80 >> (pixel % 8))
    }

    /// Bit at row-major pixel index `pixel`, step `t`. Panics when out of range.
    #[inline]
    pub fn get_index(&self, pixel: usize, t: usize) -> bool {
        let (byte, mask) = self.bit_index(pixel, t);
        self.bits[byte] & mask != 0
    }

    pub fn get(&self, x: usize, y: usize, t: usize) -> bool {
        self.get_index(y * self.width + x, t)
    }

    fn check_pixel(&self, p: PixelCoord) -> Result<usize> {
        if p.x >= self.width || p.y >= self.height {
            return Err(Error::OutOfBounds { x: p.x, y: p.y });
        }
        Ok(p.y * self.width + p.x)
    }

    /// Number of spikes at `p` in `[t_begin, t_end)`.
    pub fn spike_count(&self, p: PixelCoord, t_begin: usize, t_end: usize) -> Result<usize> {
        let idx = self.check_pixel(p)?;
        if t_begin > t_end || t_end > self.steps {
            return Err(Error::OutOfBounds { x: p.x, y: p.y });
        }
        Ok(self.count_index(idx, t_begin, t_end))
    }

    pub(crate) fn count_index(&self, pixel: usize, t_begin: usize, t_end: usize) -> usize {
        (t_begin..t_end).filter(|&t| self.get_index(pixel, t)).count()
    }

    /// Full-length spike count for every pixel, row-major.
    pub fn counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.pixel_count()];
        for t in 0..self.steps {
            let frame = &self.bits[t * self.frame_bytes()..(t + 1) * self.frame_bytes()];
            for (i, c) in counts.iter_mut().enumerate() {
                if frame[i / 8] & (0x80 >> (i % 8)) != 0 {
                    *c += 1;
                }
            }
        }
        counts
    }

    /// Ascending spike times at a row-major pixel index.
    pub fn spike_times_index(&self, pixel: usize) -> Vec<usize> {
        (0..self.steps).filter(|&t| self.get_index(pixel, t)).collect()
    }

    pub fn spike_times(&self, p: PixelCoord) -> Result<Vec<usize>> {
        let idx = self.check_pixel(p)?;
        Ok(self.spike_times_index(idx))
    }

    /// Adjacent spike-time pairs at `p`; empty when fewer than two spikes.
    pub fn inter_spike_intervals(&self, p: PixelCoord) -> Result<Vec<(usize, usize)>> {
        let times = self.spike_times(p)?;
        Ok(times.windows(2).map(|w| (w[0], w[1])).collect())
    }

    /// Copy of the frames in `[t_center − ⌊w/2⌋, t_center + ⌈w/2⌉)` clipped to the stream.
    pub fn slice_window(&self, t_center: usize, w: usize) -> Result<SpikeStream> {
        let (begin, end) = window_bounds(t_center, w, self.steps);
        if begin >= end {
            return Err(Error::EmptyWindow);
        }
        let fb = self.frame_bytes();
        SpikeStream::from_packed(
            self.width,
            self.height,
            end - begin,
            self.clock_period_ns,
            self.bits[begin * fb..end * fb].to_vec(),
        )
    }

    pub fn write_spk<W: Write>(&self, sink: &mut W) -> Result<usize> {
        let mut header = [0u8; HEADER_LEN];
        header[0..4].copy_from_slice(&SPK_MAGIC);
        header[4..8].copy_from_slice(&(self.width as u32).to_le_bytes());
        header[8..12].copy_from_slice(&(self.height as u32).to_le_bytes());
        header[12..16].copy_from_slice(&(self.steps as u32).to_le_bytes());
        header[16..24].copy_from_slice(&self.clock_period_ns.to_le_bytes());
        sink.write_all(&header)?;
        sink.write_all(&self.bits)?;
        Ok(HEADER_LEN + self.bits.len())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.bits.len());
        self.write_spk(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn read_spk<R: Read>(source: &mut R) -> Result<SpikeStream> {
        let mut bytes = Vec::new();
        source.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<SpikeStream> {
        let header = parse_header(bytes, SPK_MAGIC)?;
        let expected = header.steps * frame_bytes_for(header.width, header.height);
        let payload = &bytes[HEADER_LEN..];
        if payload.len() != expected {
            return Err(Error::TruncatedPayload {
                expected,
                found: payload.len(),
            });
        }
        SpikeStream::from_packed(
            header.width,
            header.height,
            header.steps,
            header.clock_ns,
            payload.to_vec(),
        )
    }
}

/// Clipped `[begin, end)` of a length-`w` window centred on `t_center`.
pub fn window_bounds(t_center: usize, w: usize, steps: usize) -> (usize, usize) {
    let begin = t_center.saturating_sub(w / 2);
    let end = (t_center + w.div_ceil(2)).min(steps);
    (begin.min(steps), end)
}

pub(crate) struct Header {
    pub width: usize,
    pub height: usize,
    pub steps: usize,
    pub clock_ns: u64,
}

pub(crate) fn parse_header(bytes: &[u8], magic: [u8; 4]) -> Result<Header> {
    if bytes.len() < 4 || bytes[0..4] != magic {
        let mut found = [0u8; 4];
        for (dst, src) in found.iter_mut().zip(bytes.iter()) {
            *dst = *src;
        }
        return Err(Error::BadMagic {
            expected: magic,
            found,
        });
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::TruncatedPayload {
            expected: HEADER_LEN,
            found: bytes.len(),
        });
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
    let header = Header {
        width: u32_at(4),
        height: u32_at(8),
        steps: u32_at(12),
        clock_ns: u64::from_le_bytes(bytes[16..24].try_into().unwrap()),
    };
    if header.width == 0 || header.height == 0 || header.steps == 0 {
        return Err(Error::ZeroDimension);
    }
    Ok(header)
}

/// Mutable staging area for building a [`SpikeStream`].
#[derive(Debug, Clone)]
pub struct SpikeStreamBuilder {
    width: usize,
    height: usize,
    steps: usize,
    clock_period_ns: u64,
    bits: Vec<u8>,
}

impl SpikeStreamBuilder {
    pub fn new(width: usize, height: usize, steps: usize, clock_period_ns: u64) -> Result<Self> {
        if width == 0 || height == 0 || steps == 0 {
            return Err(Error::ZeroDimension);
        }
        if clock_period_ns == 0 {
            return Err(Error::InvalidClockPeriod);
        }
        Ok(Self {
            width,
            height,
            steps,
            clock_period_ns,
            bits: vec![0u8; steps * frame_bytes_for(width, height)],
        })
    }

    pub fn set_index(&mut self, pixel: usize, t: usize, spike: bool) {
        assert!(pixel < self.width * self.height && t < self.steps);
        let byte = t * frame_bytes_for(self.width, self.height) + pixel / 8;
        let mask = 0x80u8 >> (pixel % 8);
        if spike {
            self.bits[byte] |= mask;
        } else {
            self.bits[byte] &= !mask;
        }
    }

    pub fn set(&mut self, x: usize, y: usize, t: usize, spike: bool) {
        assert!(x < self.width && y < self.height);
        self.set_index(y * self.width + x, t, spike);
    }

    pub fn build(self) -> SpikeStream {
        SpikeStream {
            width: self.width,
            height: self.height,
            steps: self.steps,
            clock_period_ns: self.clock_period_ns,
            bits: self.bits,
        }
    }
}
