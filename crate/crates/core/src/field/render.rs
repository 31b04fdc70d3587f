//! Alpha compositing along a ray.

use crate::error::{Error, Result};

/// One ray sample: density, color (one entry per channel) and segment length.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub sigma: f64,
    pub color: Vec<f64>,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderCache {
    sigma: Vec<f64>,
    delta: Vec<f64>,
    colors: Vec<Vec<f64>>,
    /// Transmittance before each sample, plus the residual after the last.
    trans: Vec<f64>,
    weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rendered {
    pub color: Vec<f64>,
    pub weights: Vec<f64>,
    pub cache: RenderCache,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderGrads {
    pub sigma: Vec<f64>,
    pub color: Vec<Vec<f64>>,
}

/// `C = Σ T_i (1 − e^{−σ_i δ_i}) c_i` with `T_i = e^{−Σ_{j<i} σ_j δ_j}`.
pub fn volume_render(samples: &[Sample]) -> Result<Rendered> {
    let channels = samples.first().map_or(0, |s| s.color.len());
    let mut color = vec![0.0; channels];
    let mut weights = Vec::with_capacity(samples.len());
    let mut trans = Vec::with_capacity(samples.len() + 1);
    let mut depth = 0.0f64;
    let mut spent = 0.0f64;
    for s in samples {
        if s.sigma < 0.0 || s.sigma.is_nan() {
            return Err(Error::NegativeDensity(s.sigma));
        }
        if s.color.len() != channels {
            return Err(Error::DimensionMismatch("samples disagree on channel count".into()));
        }
        let t = (-depth).exp();
        let tau = s.sigma * s.delta;
        // w_i ≤ 1 − Σ_{j<i} w_j holds exactly; enforce it against rounding
        let w = (t * -(-tau).exp_m1()).min((1.0 - spent).max(0.0));
        spent += w;
        trans.push(t);
        weights.push(w);
        for (acc, c) in color.iter_mut().zip(&s.color) {
            *acc += w * c;
        }
        depth += tau;
    }
    trans.push((-depth).exp());
    Ok(Rendered {
        color,
        weights: weights.clone(),
        cache: RenderCache {
            sigma: samples.iter().map(|s| s.sigma).collect(),
            delta: samples.iter().map(|s| s.delta).collect(),
            colors: samples.iter().map(|s| s.color.clone()).collect(),
            trans,
            weights,
        },
    })
}

/// Reverse pass: `∂C/∂c_i = w_i`, and for the densities
/// `∂L/∂σ_k = δ_k (T_{k+1} g·c_k − Σ_{i>k} w_i g·c_i)`.
pub fn volume_render_backward(cache: &RenderCache, grad_color: &[f64]) -> Result<RenderGrads> {
    let n = cache.sigma.len();
    let channels = cache.colors.first().map_or(grad_color.len(), Vec::len);
    if grad_color.len() != channels {
        return Err(Error::CacheMismatch(format!(
            "{} color gradients for {channels} channels",
            grad_color.len()
        )));
    }
    let dot = |c: &[f64]| c.iter().zip(grad_color).map(|(a, b)| a * b).sum::<f64>();
    let mut sigma = vec![0.0; n];
    let mut color = Vec::with_capacity(n);
    let mut tail = 0.0;
    for k in (0..n).rev() {
        let gc = dot(&cache.colors[k]);
        sigma[k] = cache.delta[k] * (cache.trans[k + 1] * gc - tail);
        tail += cache.weights[k] * gc;
    }
    for k in 0..n {
        color.push(grad_color.iter().map(|g| g * cache.weights[k]).collect());
    }
    Ok(RenderGrads { sigma, color })
}
