//! Classic spike-to-intensity reconstructions.

use crate::error::{Error, Result};
use crate::spike::{window_bounds, IntensityImage, SpikeStream};

/// Reconstructed image plus a per-pixel flag telling which pixels had enough
/// spikes to produce an estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub image: IntensityImage,
    pub valid: Vec<bool>,
}

/// Picks the adjacent spike pair used for a TFI estimate at `t`: the first
/// pair with `m ≤ t ≤ n`, otherwise the first pair when `t` precedes all
/// spikes and the last pair when it follows them.
pub fn enclosing_interval(times: &[usize], t: usize) -> Option<(usize, usize)> {
    if times.len() < 2 {
        return None;
    }
    let pairs = times.windows(2).map(|w| (w[0], w[1]));
    if t < times[0] {
        return Some((times[0], times[1]));
    }
    for (m, n) in pairs {
        if m <= t && t <= n {
            return Some((m, n));
        }
    }
    Some((times[times.len() - 2], times[times.len() - 1]))
}

/// Texture from inter-spike interval: `θ / (n − m)` around step `t`.
pub fn tfi(stream: &SpikeStream, t: usize, theta: f64) -> Result<Reconstruction> {
    if t >= stream.steps() {
        return Err(Error::Invalid(format!("t={t} outside {} steps", stream.steps())));
    }
    let mut values = Vec::with_capacity(stream.pixel_count());
    let mut valid = Vec::with_capacity(stream.pixel_count());
    for pixel in 0..stream.pixel_count() {
        let times = stream.spike_times_index(pixel);
        match enclosing_interval(&times, t) {
            Some((m, n)) => {
                values.push(theta / (n - m) as f64);
                valid.push(true);
            }
            None => {
                values.push(0.0);
                valid.push(false);
            }
        }
    }
    Ok(Reconstruction {
        image: IntensityImage::new(stream.width(), stream.height(), values)?,
        valid,
    })
}

/// Texture from playback: `θ·count / window length` over a window of `w`
/// steps centred on `t`, clipped to the stream.
pub fn tfp(stream: &SpikeStream, t: usize, w: usize, theta: f64) -> Result<IntensityImage> {
    if w == 0 {
        return Err(Error::EmptyWindow);
    }
    let (begin, end) = window_bounds(t, w, stream.steps());
    let len = end.saturating_sub(begin);
    let values = (0..stream.pixel_count())
        .map(|pixel| {
            if len == 0 {
                0.0
            } else {
                theta * stream.count_index(pixel, begin, end) as f64 / len as f64
            }
        })
        .collect();
    IntensityImage::new(stream.width(), stream.height(), values)
}

/// Firing rate over the whole stream, `θ·count / steps`.
pub fn long_term_rate(stream: &SpikeStream, theta: f64) -> IntensityImage {
    let steps = stream.steps() as f64;
    let values = stream
        .counts()
        .into_iter()
        .map(|c| theta * c as f64 / steps)
        .collect();
    IntensityImage::new(stream.width(), stream.height(), values).expect("stream dimensions are valid")
}
