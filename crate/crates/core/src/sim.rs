//! Integrate-and-fire spike camera simulator and two-scene calibration.
//!
//! Each pixel integrates `L + L_d` per clock tick into an accumulator and
//! fires when the accumulator reaches `theta·R(x,y)`. Shot noise replaces the
//! per-tick charge with a Poisson photon count; quantization noise comes from
//! the clock itself and is not injected separately.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, Uniform};

use crate::error::{Error, Result};
use crate::parallel;
use crate::spike::{IntensityImage, PixelCoord, SpikeStream, SpikeStreamBuilder, DEFAULT_CLOCK_NS};

/// Relative slack on the firing comparison. Repeated float addition of a
/// charge like 0.1 lands a few ulps short of the exact sum; the slack makes
/// the accumulator fire where exact arithmetic would.
pub const FIRE_SLACK: f64 = 1e-10;

#[inline]
pub fn fires(v: f64, threshold: f64) -> bool {
    v >= threshold * (1.0 - FIRE_SLACK)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ResetMode {
    /// Subtract the threshold and keep the residual charge.
    #[default]
    SubtractThreshold,
    /// Discard all charge on firing.
    ResetToZero,
}

impl ResetMode {
    #[inline]
    pub fn apply(self, v: f64, threshold: f64) -> f64 {
        match self {
            ResetMode::SubtractThreshold => v - threshold,
            ResetMode::ResetToZero => 0.0,
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "subtract" | "subtract_threshold" | "soft" => Ok(ResetMode::SubtractThreshold),
            "zero" | "reset_to_zero" | "hard" => Ok(ResetMode::ResetToZero),
            other => Err(Error::Parse(format!("unknown reset mode {other:?}"))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ResetMode::SubtractThreshold => "subtract",
            ResetMode::ResetToZero => "zero",
        }
    }
}

/// Per-pixel multiplicative threshold deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct NonuniformityMap {
    width: usize,
    height: usize,
    r: Vec<f64>,
    reference: Option<PixelCoord>,
}

impl NonuniformityMap {
    pub fn new(width: usize, height: usize, r: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::ZeroDimension);
        }
        if r.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a {width}x{height} map",
                r.len()
            )));
        }
        if let Some(v) = r.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::Invalid(format!("nonuniformity value {v} must be positive")));
        }
        Ok(Self {
            width,
            height,
            r,
            reference: None,
        })
    }

    pub fn uniform(width: usize, height: usize) -> Self {
        Self::new(width, height, vec![1.0; width * height]).expect("valid dimensions")
    }

    /// Independent draws from `U[lo, hi]`.
    pub fn random_uniform(width: usize, height: usize, lo: f64, hi: f64, seed: u64) -> Result<Self> {
        if !(lo > 0.0 && hi >= lo) {
            return Err(Error::Invalid(format!("bad nonuniformity range [{lo}, {hi}]")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dist = Uniform::new_inclusive(lo, hi).map_err(|e| Error::Invalid(e.to_string()))?;
        let r = (0..width * height).map(|_| dist.sample(&mut rng)).collect();
        Self::new(width, height, r)
    }

    /// Zero-mean uniform spread with standard deviation `sigma` around 1.
    pub fn random_with_sigma(width: usize, height: usize, sigma: f64, seed: u64) -> Result<Self> {
        if sigma == 0.0 {
            return Ok(Self::uniform(width, height));
        }
        let half = sigma * 3f64.sqrt();
        if !(sigma > 0.0 && half < 1.0) {
            return Err(Error::Invalid(format!("nonuniformity sigma {sigma} out of range")));
        }
        Self::random_uniform(width, height, 1.0 - half, 1.0 + half, seed)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.r
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.r[y * self.width + x]
    }

    pub fn reference(&self) -> Option<PixelCoord> {
        self.reference
    }
}

#[derive(Debug, Clone)]
pub struct SpikeCameraModel {
    pub theta: f64,
    pub clock_period_ns: u64,
    pub reset_mode: ResetMode,
    pub dark_current: IntensityImage,
    pub nonuniformity: NonuniformityMap,
    pub shot_noise: bool,
    pub photon_scale: f64,
}

impl SpikeCameraModel {
    /// Noiseless, uniform sensor.
    pub fn ideal(width: usize, height: usize, theta: f64) -> Self {
        Self {
            theta,
            clock_period_ns: DEFAULT_CLOCK_NS,
            reset_mode: ResetMode::SubtractThreshold,
            dark_current: IntensityImage::constant(width, height, 0.0).expect("valid dimensions"),
            nonuniformity: NonuniformityMap::uniform(width, height),
            shot_noise: false,
            photon_scale: 1.0,
        }
    }

    pub fn width(&self) -> usize {
        self.nonuniformity.width()
    }

    pub fn height(&self) -> usize {
        self.nonuniformity.height()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0 && self.theta.is_finite()) {
            return Err(Error::Invalid(format!("theta {} must be positive", self.theta)));
        }
        if !(self.photon_scale > 0.0 && self.photon_scale.is_finite()) {
            return Err(Error::Invalid(format!(
                "photon scale {} must be positive",
                self.photon_scale
            )));
        }
        if self.clock_period_ns == 0 {
            return Err(Error::InvalidClockPeriod);
        }
        if self.dark_current.width() != self.nonuniformity.width()
            || self.dark_current.height() != self.nonuniformity.height()
        {
            return Err(Error::DimensionMismatch(
                "dark current and nonuniformity maps differ in size".into(),
            ));
        }
        Ok(())
    }
}

/// Seeds an independent generator per pixel so results do not depend on the
/// order pixels are visited in.
pub fn pixel_rng(seed: u64, pixel: usize) -> ChaCha8Rng {
    // splitmix64 finalizer over (seed, pixel)
    let mut z = seed ^ (pixel as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    ChaCha8Rng::seed_from_u64(z)
}

/// Simulates `frames.len() × steps_per_frame` clock ticks.
pub fn simulate_stream(
    frames: &[IntensityImage],
    model: &SpikeCameraModel,
    steps_per_frame: usize,
    seed: u64,
) -> Result<SpikeStream> {
    model.validate()?;
    let first = frames
        .first()
        .ok_or_else(|| Error::DimensionMismatch("no frames supplied".into()))?;
    let (width, height) = (model.width(), model.height());
    if frames.iter().any(|f| f.width() != width || f.height() != height) {
        return Err(Error::DimensionMismatch(format!(
            "frames are {}x{}, camera model is {width}x{height}",
            first.width(),
            first.height()
        )));
    }
    if steps_per_frame == 0 {
        return Err(Error::ZeroDimension);
    }
    let steps = frames.len() * steps_per_frame;

    let trains: Vec<Vec<u32>> = parallel::map_indexed(width * height, |pixel| {
        let threshold = model.theta * model.nonuniformity.values()[pixel];
        let dark = model.dark_current.values()[pixel];
        let mut rng = pixel_rng(seed, pixel);
        let mut v = 0.0f64;
        let mut times = Vec::new();
        let mut t = 0u32;
        for frame in frames {
            let charge = frame.values()[pixel] + dark;
            let photons = if model.shot_noise && charge > 0.0 {
                Some(Poisson::new(model.photon_scale * charge).expect("positive finite rate"))
            } else {
                None
            };
            for _ in 0..steps_per_frame {
                v += match &photons {
                    Some(p) => p.sample(&mut rng) / model.photon_scale,
                    None if model.shot_noise => 0.0,
                    None => charge,
                };
                if fires(v, threshold) {
                    times.push(t);
                    v = model.reset_mode.apply(v, threshold);
                }
                t += 1;
            }
        }
        times
    });

    let mut builder = SpikeStreamBuilder::new(width, height, steps, model.clock_period_ns)?;
    for (pixel, times) in trains.iter().enumerate() {
        for &t in times {
            builder.set_index(pixel, t as usize, true);
        }
    }
    Ok(builder.build())
}

/// Asymptotic spikes per tick, `(L + L_d) / (θ·R)`.
pub fn firing_rate_expectation(intensity: f64, theta: f64, r: f64, dark: f64) -> f64 {
    (intensity + dark) / (theta * r)
}

/// Which way round the nonuniformity ratio is taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ROrientation {
    /// `R = response(x,y) / response(ref)`: a pixel that needs more charge to
    /// fire gets `R > 1`, matching the threshold-modulation model.
    #[default]
    ThresholdScale,
    /// The reciprocal, `R = response(ref) / response(x,y)`.
    Literal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationRecord {
    pub l1: f64,
    pub l2: f64,
    /// Map-wide mean dark interval in ticks.
    pub t_d: f64,
    /// Map-wide mean interval under `l1` in ticks.
    pub t1: f64,
    pub t2_map: Vec<f64>,
    pub ld_map: IntensityImage,
}

/// Arithmetic mean of adjacent-spike gaps for every pixel.
pub fn mean_intervals(stream: &SpikeStream) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(stream.pixel_count());
    let mut starved = Vec::new();
    for pixel in 0..stream.pixel_count() {
        let times = stream.spike_times_index(pixel);
        if times.len() < 2 {
            starved.push(PixelCoord::new(pixel % stream.width(), pixel / stream.width()));
            out.push(f64::NAN);
        } else {
            out.push((times[times.len() - 1] - times[0]) as f64 / (times.len() - 1) as f64);
        }
    }
    if starved.is_empty() {
        Ok(out)
    } else {
        Err(Error::InsufficientSpikes(starved))
    }
}

/// `L_d = L1·T1 / (T_d − T1)`; `None` when `T_d ≤ T1`.
pub fn dark_current_from_intervals(l1: f64, t1: f64, t_d: f64) -> Option<f64> {
    if t_d <= t1 {
        None
    } else {
        Some(l1 * t1 / (t_d - t1))
    }
}

fn same_size(a: &SpikeStream, b: &SpikeStream) -> Result<()> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    Ok(())
}

/// Per-pixel dark-current intensity from a dark capture and a capture at `l1`.
pub fn calibrate_dark_current(
    dark_stream: &SpikeStream,
    lit_stream: &SpikeStream,
    l1: f64,
) -> Result<IntensityImage> {
    same_size(dark_stream, lit_stream)?;
    if !(l1 > 0.0) {
        return Err(Error::Invalid(format!("l1 {l1} must be positive")));
    }
    let t_d = mean_intervals(dark_stream)?;
    let t_1 = mean_intervals(lit_stream)?;
    let width = dark_stream.width();
    let ld = t_d
        .iter()
        .zip(&t_1)
        .enumerate()
        .map(|(pixel, (&td, &t1))| {
            dark_current_from_intervals(l1, t1, td).ok_or(Error::DegenerateInterval {
                pixel: PixelCoord::new(pixel % width, pixel / width),
                t_d: td,
                t1,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    IntensityImage::new(width, dark_stream.height(), ld)
}

/// Nonuniformity map from a uniform capture at `l2` and a dark-current map.
///
/// The reference pixel is the one whose response `(l2 + L_d)·T2` is closest
/// to the map mean, lowest row-major index on ties; it maps to exactly 1.
pub fn calibrate_nonuniformity(
    stream_l2: &SpikeStream,
    l2: f64,
    ld_map: &IntensityImage,
    orientation: ROrientation,
) -> Result<NonuniformityMap> {
    let t2 = mean_intervals(stream_l2)?;
    nonuniformity_from_intervals(&t2, stream_l2.width(), stream_l2.height(), l2, ld_map, orientation)
}

pub fn nonuniformity_from_intervals(
    t2: &[f64],
    width: usize,
    height: usize,
    l2: f64,
    ld_map: &IntensityImage,
    orientation: ROrientation,
) -> Result<NonuniformityMap> {
    if ld_map.width() != width || ld_map.height() != height || t2.len() != width * height {
        return Err(Error::DimensionMismatch("dark-current map does not match stream".into()));
    }
    let response: Vec<f64> = t2
        .iter()
        .zip(ld_map.values())
        .map(|(&t, &ld)| (l2 + ld) * t)
        .collect();
    let mean = response.iter().sum::<f64>() / response.len() as f64;
    let mut reference = 0;
    for (i, p) in response.iter().enumerate() {
        if (p - mean).abs() < (response[reference] - mean).abs() {
            reference = i;
        }
    }
    let ref_response = response[reference];
    let r = response
        .iter()
        .map(|&p| match orientation {
            ROrientation::ThresholdScale => p / ref_response,
            ROrientation::Literal => ref_response / p,
        })
        .collect();
    let mut map = NonuniformityMap::new(width, height, r)?;
    map.reference = Some(PixelCoord::new(reference % width, reference / width));
    Ok(map)
}

/// Runs the full two-scene calibration.
pub fn calibrate(
    dark: &SpikeStream,
    lit1: &SpikeStream,
    l1: f64,
    lit2: &SpikeStream,
    l2: f64,
    orientation: ROrientation,
) -> Result<(CalibrationRecord, NonuniformityMap)> {
    same_size(dark, lit2)?;
    if !(l2 > 0.0) {
        return Err(Error::Invalid(format!("l2 {l2} must be positive")));
    }
    let ld_map = calibrate_dark_current(dark, lit1, l1)?;
    let t2_map = mean_intervals(lit2)?;
    let map = nonuniformity_from_intervals(
        &t2_map,
        lit2.width(),
        lit2.height(),
        l2,
        &ld_map,
        orientation,
    )?;
    let mean = |v: Vec<f64>| v.iter().sum::<f64>() / v.len() as f64;
    let record = CalibrationRecord {
        l1,
        l2,
        t_d: mean(mean_intervals(dark)?),
        t1: mean(mean_intervals(lit1)?),
        t2_map,
        ld_map,
    };
    Ok((record, map))
}
