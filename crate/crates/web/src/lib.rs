//! Browser bindings for the static demo page in `www/`.

use spikefield_core::recon::{long_term_rate, tfi, tfp};
use spikefield_core::scenegen::{render_image, DatasetSpec, ExposurePreset, NoiseSpec, PoseRing};
use spikefield_core::sim::simulate_stream;
use spikefield_core::snn::{if_forward, IFLayerConfig};
use spikefield_core::sim::ResetMode;
use spikefield_core::IntensityImage;
use wasm_bindgen::prelude::*;

fn ring(size: usize) -> PoseRing {
    let base = DatasetSpec::builtin(ExposurePreset::Medium, 0).ring;
    PoseRing {
        focal: base.focal * size as f64 / base.width as f64,
        width: size,
        height: size,
        ..base
    }
}

fn scene_image(azimuth_deg: f64, exposure: f64, size: usize) -> Result<IntensityImage, JsError> {
    if size == 0 || size > 512 {
        return Err(JsError::new("size must be in 1..=512"));
    }
    if !(exposure > 0.0) {
        return Err(JsError::new("exposure must be positive"));
    }
    let mut scene = DatasetSpec::builtin(ExposurePreset::Medium, 0).scene;
    scene.exposure = exposure;
    let cam = ring(size).camera_at(azimuth_deg.to_radians());
    render_image(&scene, &cam).map_err(|e| JsError::new(&e.to_string()))
}

fn to_rgba(image: &IntensityImage, scale: f64) -> Vec<u8> {
    image
        .values()
        .iter()
        .flat_map(|v| {
            let g = (v * scale).round().clamp(0.0, 255.0) as u8;
            [g, g, g, 255]
        })
        .collect()
}

/// Ground-truth view of the builtin scene as RGBA bytes, `size × size`.
#[wasm_bindgen]
pub fn render_scene(azimuth_deg: f64, exposure: f64, size: usize) -> Result<Vec<u8>, JsError> {
    Ok(to_rgba(&scene_image(azimuth_deg, exposure, size)?, 255.0 / exposure))
}

/// Simulates the view with the benchmark sensor noise and reconstructs it
/// with `method` (`tfi`, `tfp` or `rate`). RGBA bytes, `size × size`.
#[wasm_bindgen]
pub fn spike_reconstruct(
    azimuth_deg: f64,
    exposure: f64,
    size: usize,
    steps: usize,
    method: &str,
    window: usize,
    noisy: bool,
    seed: u32,
) -> Result<Vec<u8>, JsError> {
    let err = |e: spikefield_core::Error| JsError::new(&e.to_string());
    let frame = scene_image(azimuth_deg, exposure, size)?;
    let noise = if noisy { NoiseSpec::medium() } else { NoiseSpec::noiseless() };
    let model = noise.model(size, size, seed as u64).map_err(err)?;
    let stream = simulate_stream(&[frame], &model, steps, seed as u64).map_err(err)?;
    let image = match method {
        "tfi" => tfi(&stream, steps / 2, noise.theta).map_err(err)?.image,
        "tfp" => tfp(&stream, steps / 2, window, noise.theta).map_err(err)?,
        "rate" => long_term_rate(&stream, noise.theta),
        other => return Err(JsError::new(&format!("unknown method `{other}`"))),
    };
    Ok(to_rgba(&image, 255.0 / exposure))
}

/// Membrane potential of one integrate-and-fire neuron under constant input.
/// The first `steps` entries are the pre-reset potentials, the next `steps`
/// are 1 where the neuron fired and 0 elsewhere.
#[wasm_bindgen]
pub fn neuron_trace(intensity: f64, r: f64, v_th: f64, steps: usize, hard_reset: bool) -> Result<Vec<f64>, JsError> {
    let cfg = IFLayerConfig {
        v_th,
        steps,
        reset_mode: if hard_reset { ResetMode::ResetToZero } else { ResetMode::SubtractThreshold },
        ..IFLayerConfig::default()
    };
    cfg.validate().map_err(|e| JsError::new(&e.to_string()))?;
    let (_, trace) = if_forward(intensity, r, &cfg);
    let mut out = trace.potentials;
    out.extend(trace.spikes.iter().map(|&s| if s { 1.0 } else { 0.0 }));
    Ok(out)
}
