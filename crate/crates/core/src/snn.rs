//! Differentiable integrate-and-fire layer.
//!
//! The forward pass runs the same accumulate-and-fire dynamics as the camera
//! simulator. The backward pass unrolls those dynamics through time and
//! replaces the Heaviside derivative with the constant surrogate `1/v_th`.

use crate::error::{Error, Result};
use crate::sim::{fires, ResetMode};

#[derive(Debug, Clone, PartialEq)]
pub struct IFLayerConfig {
    pub v_th: f64,
    pub steps: usize,
    pub reset_mode: ResetMode,
    /// Treat the reset as a constant in the backward pass.
    pub detach_reset: bool,
    /// Use the base threshold and multiply the spike count by `r` instead of
    /// scaling the threshold by `r`.
    pub literal_scale_output: bool,
}

impl Default for IFLayerConfig {
    fn default() -> Self {
        Self {
            v_th: 1.0,
            steps: 256,
            reset_mode: ResetMode::SubtractThreshold,
            detach_reset: true,
            literal_scale_output: false,
        }
    }
}

impl IFLayerConfig {
    pub fn surrogate_scale(&self) -> f64 {
        1.0 / self.v_th
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.v_th > 0.0 && self.v_th.is_finite()) {
            return Err(Error::Invalid(format!("v_th {} must be positive", self.v_th)));
        }
        if self.steps == 0 {
            return Err(Error::ZeroDimension);
        }
        Ok(())
    }

    fn threshold_for(&self, r: f64) -> f64 {
        if self.literal_scale_output {
            self.v_th
        } else {
            self.v_th * r
        }
    }
}

/// Unrolled forward state kept for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct IFTrace {
    /// Pre-reset membrane potential at each step.
    pub potentials: Vec<f64>,
    pub spikes: Vec<bool>,
    pub theta_eff: f64,
    pub r: f64,
}

impl IFTrace {
    pub fn count(&self) -> usize {
        self.spikes.iter().filter(|&&s| s).count()
    }
}

/// Runs `cfg.steps` steps with constant input `intensity`.
pub fn if_forward(intensity: f64, r: f64, cfg: &IFLayerConfig) -> (usize, IFTrace) {
    run(std::iter::repeat_n(intensity, cfg.steps), r, cfg)
}

/// Step-varying input; only the unit tests drive the layer this way.
#[cfg(test)]
pub(crate) fn if_forward_sequence(inputs: &[f64], r: f64, cfg: &IFLayerConfig) -> (usize, IFTrace) {
    run(inputs.iter().copied(), r, cfg)
}

fn run(inputs: impl Iterator<Item = f64>, r: f64, cfg: &IFLayerConfig) -> (usize, IFTrace) {
    let theta_eff = cfg.threshold_for(r);
    let mut v = 0.0f64;
    let mut potentials = Vec::with_capacity(cfg.steps);
    let mut spikes = Vec::with_capacity(cfg.steps);
    for x in inputs {
        v += x;
        potentials.push(v);
        let s = fires(v, theta_eff);
        spikes.push(s);
        if s {
            v = cfg.reset_mode.apply(v, theta_eff);
        }
    }
    let trace = IFTrace {
        potentials,
        spikes,
        theta_eff,
        r,
    };
    (trace.count(), trace)
}

/// Effective output of the layer: the spike count, scaled by `r` when the
/// literal output-scaling reading is selected.
pub fn generated_count(trace: &IFTrace, cfg: &IFLayerConfig) -> f64 {
    let c = trace.count() as f64;
    if cfg.literal_scale_output {
        c * trace.r
    } else {
        c
    }
}

/// Per-step gradients of the summed layer output with respect to the input
/// at each step, scaled by `upstream_grad`.
pub fn if_backward_per_step(trace: &IFTrace, upstream_grad: f64, cfg: &IFLayerConfig) -> Result<Vec<f64>> {
    let steps = trace.potentials.len();
    if steps != cfg.steps || trace.spikes.len() != steps {
        return Err(Error::TraceMismatch(format!(
            "trace has {} steps, config expects {}",
            steps, cfg.steps
        )));
    }
    let out_scale = if cfg.literal_scale_output { trace.r } else { 1.0 };
    let surrogate = cfg.surrogate_scale();
    let g_spike = upstream_grad * out_scale;
    let mut grads = vec![0.0; steps];
    // gradient flowing into the post-reset potential of step t from step t+1
    let mut carry = 0.0;
    for t in (0..steps).rev() {
        let spiked = trace.spikes[t];
        let v = trace.potentials[t];
        // d post / d pre, and the spike path through the reset if kept
        let (direct, through_spike) = match (cfg.reset_mode, cfg.detach_reset) {
            (ResetMode::SubtractThreshold, true) => (1.0, 0.0),
            (ResetMode::SubtractThreshold, false) => (1.0, -trace.theta_eff),
            (ResetMode::ResetToZero, true) => (if spiked { 0.0 } else { 1.0 }, 0.0),
            (ResetMode::ResetToZero, false) => (if spiked { 0.0 } else { 1.0 }, -v),
        };
        let d_spike = g_spike + carry * through_spike;
        let d_v = d_spike * surrogate + carry * direct;
        grads[t] = d_v;
        carry = d_v;
    }
    Ok(grads)
}

/// Gradient of the layer output with respect to the (constant) ray intensity.
pub fn if_backward(trace: &IFTrace, upstream_grad: f64, cfg: &IFLayerConfig) -> Result<f64> {
    Ok(if_backward_per_step(trace, upstream_grad, cfg)?.iter().sum())
}

/// Squared spike-count discrepancy for one ray and its gradient with respect
/// to the rendered intensity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpikeLoss {
    pub generated: f64,
    pub discrepancy: f64,
    pub loss: f64,
    pub grad: f64,
}

pub fn spike_render_loss(
    rendered_intensity: f64,
    observed_count: usize,
    r: f64,
    cfg: &IFLayerConfig,
) -> Result<SpikeLoss> {
    if rendered_intensity < 0.0 || rendered_intensity.is_nan() {
        return Err(Error::NegativeIntensity(rendered_intensity));
    }
    let (_, trace) = if_forward(rendered_intensity, r, cfg);
    let generated = generated_count(&trace, cfg);
    let discrepancy = generated - observed_count as f64;
    let grad = if discrepancy == 0.0 {
        0.0
    } else {
        2.0 * discrepancy * if_backward(&trace, 1.0, cfg)?
    };
    Ok(SpikeLoss {
        generated,
        discrepancy,
        loss: discrepancy * discrepancy,
        grad,
    })
}

/// Pairwise tree sum; the reduction order depends only on the slice length.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        n => {
            let (a, b) = values.split_at(n / 2);
            pairwise_sum(a) + pairwise_sum(b)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{simulate_stream, NonuniformityMap, SpikeCameraModel};
    use crate::spike::IntensityImage;
    use proptest::prelude::*;

    fn cfg(steps: usize) -> IFLayerConfig {
        IFLayerConfig {
            steps,
            ..IFLayerConfig::default()
        }
    }

    #[test]
    fn half_intensity_counts_four_in_eight() {
        let (count, trace) = if_forward(0.5, 1.0, &cfg(8));
        assert_eq!(count, 4);
        assert_eq!(trace.spikes, vec![false, true, false, true, false, true, false, true]);
    }

    #[test]
    fn zero_input_stays_at_rest() {
        let (count, trace) = if_forward(0.0, 1.0, &cfg(8));
        assert_eq!(count, 0);
        assert!(trace.potentials.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn hand_traced_varying_input() {
        let (count, trace) = if_forward_sequence(&[1.2, 0.3, 0.9], 1.0, &cfg(3));
        assert_eq!(count, 2);
        assert_eq!(trace.spikes, vec![true, false, true]);
        let expected = [1.2, 0.5, 1.4];
        for (v, e) in trace.potentials.iter().zip(expected) {
            assert!((v - e).abs() < 1e-12);
        }
        assert!(trace
            .spikes
            .iter()
            .zip(&trace.potentials)
            .all(|(&s, &v)| !s || v >= trace.theta_eff * (1.0 - crate::sim::FIRE_SLACK)));
    }

    #[test]
    fn detached_gradient_closed_form() {
        let c = cfg(4);
        let (_, trace) = if_forward(0.37, 1.0, &c);
        assert_eq!(if_backward(&trace, 1.0, &c).unwrap(), 10.0);
        assert_eq!(if_backward(&trace, 0.0, &c).unwrap(), 0.0);
        let c = IFLayerConfig { v_th: 2.0, ..cfg(256) };
        let (_, trace) = if_forward(0.9, 1.3, &c);
        assert_eq!(if_backward(&trace, 1.0, &c).unwrap(), 256.0 * 257.0 / 4.0);
    }

    #[test]
    fn backward_rejects_foreign_trace() {
        let (_, trace) = if_forward(0.5, 1.0, &cfg(8));
        assert!(matches!(if_backward(&trace, 1.0, &cfg(9)), Err(Error::TraceMismatch(_))));
    }

    #[test]
    fn attached_soft_reset_at_unit_r_is_linear_in_steps() {
        // with r = 1 the reset feedback cancels the carried gradient exactly
        let c = IFLayerConfig {
            detach_reset: false,
            ..cfg(16)
        };
        let (_, trace) = if_forward(0.4, 1.0, &c);
        assert!((if_backward(&trace, 1.0, &c).unwrap() - 16.0).abs() < 1e-12);
    }

    #[test]
    fn loss_examples() {
        let c = cfg(24);
        // 10/24 rounds down to 10 generated spikes
        let l = spike_render_loss(10.0 / 24.0 + 1e-3, 12, 1.0, &c).unwrap();
        assert_eq!(l.generated, 10.0);
        assert_eq!(l.discrepancy, -2.0);
        assert_eq!(l.loss, 4.0);
        assert!(l.grad < 0.0);
        assert!(matches!(spike_render_loss(-0.1, 3, 1.0, &c), Err(Error::NegativeIntensity(_))));
    }

    #[test]
    fn loss_vanishes_on_generating_intensity() {
        let (w, steps) = (3, 256);
        let mut model = SpikeCameraModel::ideal(w, 1, 1.0);
        model.nonuniformity = NonuniformityMap::new(w, 1, vec![0.9, 1.0, 1.17]).unwrap();
        let scene = IntensityImage::new(w, 1, vec![0.31, 0.5, 0.77]).unwrap();
        let stream = simulate_stream(&[scene.clone()], &model, steps, 0).unwrap();
        let counts = stream.counts();
        for x in 0..w {
            let l = spike_render_loss(scene.get(x, 0), counts[x], model.nonuniformity.get(x, 0), &cfg(steps)).unwrap();
            assert_eq!(l.loss, 0.0);
        }
    }

    #[test]
    fn literal_output_scaling() {
        let c = IFLayerConfig {
            literal_scale_output: true,
            ..cfg(8)
        };
        let (count, trace) = if_forward(0.5, 2.0, &c);
        assert_eq!(count, 4);
        assert_eq!(generated_count(&trace, &c), 8.0);
        assert_eq!(if_backward(&trace, 1.0, &c).unwrap(), 2.0 * 36.0);
    }

    #[test]
    fn loss_is_minimal_near_generating_intensity() {
        let c = cfg(256);
        let truth = 0.4137;
        let (observed, _) = if_forward(truth, 1.0, &c);
        let sweep: Vec<f64> = (0..=1000).map(|i| i as f64 / 1000.0).collect();
        let best = sweep
            .iter()
            .copied()
            .min_by(|a, b| {
                let la = spike_render_loss(*a, observed, 1.0, &c).unwrap().loss;
                let lb = spike_render_loss(*b, observed, 1.0, &c).unwrap().loss;
                la.partial_cmp(&lb).unwrap()
            })
            .unwrap();
        assert!((best - truth).abs() <= 1.0 / 256.0, "{best}");
    }

    #[test]
    fn pairwise_sum_matches_naive_on_integers() {
        let v: Vec<f64> = (0..37).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&v), 666.0);
        assert_eq!(pairwise_sum(&[]), 0.0);
    }

    proptest! {
        #[test]
        fn gradient_is_positive(intensity in 0.0f64..1.5, r in 0.5f64..1.5, steps in 1usize..300, v_th in 0.2f64..3.0) {
            let c = IFLayerConfig { v_th, ..cfg(steps) };
            let (_, trace) = if_forward(intensity, r, &c);
            prop_assert!(if_backward(&trace, 1.0, &c).unwrap() > 0.0);
            let c = IFLayerConfig { reset_mode: ResetMode::ResetToZero, ..c };
            let (_, trace) = if_forward(intensity, r, &c);
            prop_assert!(if_backward(&trace, 1.0, &c).unwrap() > 0.0);
        }

        #[test]
        fn loss_gradient_has_sign_of_discrepancy(intensity in 0.0f64..1.0, observed in 0usize..256) {
            let l = spike_render_loss(intensity, observed, 1.0, &cfg(256)).unwrap();
            prop_assert_eq!(l.grad.signum() * (l.grad != 0.0) as i32 as f64, l.discrepancy.signum() * (l.discrepancy != 0.0) as i32 as f64);
        }

        #[test]
        fn forward_is_deterministic(intensity in 0.0f64..1.0, r in 0.5f64..1.5) {
            let c = cfg(64);
            prop_assert_eq!(if_forward(intensity, r, &c), if_forward(intensity, r, &c));
        }
    }
}
