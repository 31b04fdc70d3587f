use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use spikefield_core::config::KeyValues;
use spikefield_core::field::encoding::{encoded_len, positional_encode};
use spikefield_core::field::render::{volume_render, Sample};
use spikefield_core::field::sampling::{bin_edges, hierarchical_sample, stratified_samples};
use spikefield_core::metrics::{psnr, ssim};
use spikefield_core::recon::{long_term_rate, tfi, tfp};
use spikefield_core::sim::{simulate_stream, NonuniformityMap, ResetMode, SpikeCameraModel};
use spikefield_core::snn::{if_backward, if_forward, spike_render_loss, IFLayerConfig};
use spikefield_core::{IntensityImage, PixelCoord, SpikeStream, SpikeStreamBuilder};

fn stream_strategy() -> impl Strategy<Value = SpikeStream> {
    (1usize..6, 1usize..6, 1usize..40, 1u64..100_000).prop_flat_map(|(w, h, t, clock)| {
        prop::collection::vec(any::<bool>(), w * h * t).prop_map(move |bits| {
            let mut b = SpikeStreamBuilder::new(w, h, t, clock).unwrap();
            for (i, bit) in bits.into_iter().enumerate() {
                b.set_index(i % (w * h), i / (w * h), bit);
            }
            b.build()
        })
    })
}

fn constant_stream(l: f64, theta: f64, steps: usize, reset: ResetMode) -> SpikeStream {
    let mut model = SpikeCameraModel::ideal(1, 1, theta);
    model.reset_mode = reset;
    simulate_stream(&[IntensityImage::constant(1, 1, l).unwrap()], &model, steps, 0).unwrap()
}

proptest! {
    #[test]
    fn spk_roundtrip(s in stream_strategy()) {
        let bytes = s.to_bytes();
        prop_assert_eq!(bytes.len(), 24 + s.steps() * (s.pixel_count()).div_ceil(8));
        prop_assert_eq!(SpikeStream::from_bytes(&bytes).unwrap(), s);
    }

    #[test]
    fn counts_add_over_partitions(s in stream_strategy(), cut_a in 0usize..40, cut_b in 0usize..40) {
        let t = s.steps();
        let (a, b) = (cut_a.min(t), cut_b.min(t));
        let (a, b) = (a.min(b), a.max(b));
        for y in 0..s.height() {
            for x in 0..s.width() {
                let p = PixelCoord::new(x, y);
                let whole = s.spike_count(p, 0, t).unwrap();
                let parts = s.spike_count(p, 0, a).unwrap() + s.spike_count(p, a, b).unwrap() + s.spike_count(p, b, t).unwrap();
                prop_assert_eq!(whole, parts);
            }
        }
    }

    #[test]
    fn intervals_chain(s in stream_strategy()) {
        let p = PixelCoord::new(0, 0);
        let pairs = s.inter_spike_intervals(p).unwrap();
        for w in pairs.windows(2) {
            prop_assert_eq!(w[0].1, w[1].0);
        }
        for (m, n) in &pairs {
            prop_assert!(m < n);
        }
        prop_assert_eq!(pairs.len(), s.spike_count(p, 0, s.steps()).unwrap().saturating_sub(1));
    }

    #[test]
    fn brighter_never_fires_less(l in 0.0f64..1.0, extra in 0.0f64..0.5, theta in 0.3f64..2.0, steps in 1usize..600) {
        let a = constant_stream(l, theta, steps, ResetMode::SubtractThreshold).counts()[0];
        let b = constant_stream(l + extra, theta, steps, ResetMode::SubtractThreshold).counts()[0];
        prop_assert!(b >= a);
    }

    #[test]
    fn hard_reset_fires_no_more_than_soft(l in 0.0f64..1.5, theta in 0.3f64..2.0, steps in 1usize..600) {
        let soft = constant_stream(l, theta, steps, ResetMode::SubtractThreshold).counts()[0];
        let hard = constant_stream(l, theta, steps, ResetMode::ResetToZero).counts()[0];
        prop_assert!(hard <= soft);
    }

    #[test]
    fn reconstructions_are_finite_and_non_negative(s in stream_strategy(), t in 0usize..40, w in 1usize..50, theta in 0.1f64..3.0) {
        let t = t.min(s.steps() - 1);
        let a = tfi(&s, t, theta).unwrap();
        let b = tfp(&s, t, w, theta).unwrap();
        let c = long_term_rate(&s, theta);
        for v in a.image.values().iter().chain(b.values()).chain(c.values()) {
            prop_assert!(v.is_finite() && *v >= 0.0);
        }
        let full = tfp(&s, s.steps() / 2, s.steps(), theta).unwrap();
        prop_assert_eq!(c, full);
    }

    #[test]
    fn tfp_is_shift_invariant_on_periodic_streams(period in 1usize..9, w in 1usize..6, shift in 0usize..5) {
        // L = θ/period fires every `period` ticks exactly
        let steps = 256;
        let s = constant_stream(1.0 / period as f64, 1.0, steps, ResetMode::SubtractThreshold);
        let w = w * period;
        let t0 = 100;
        let a = tfp(&s, t0, w, 1.0).unwrap();
        let b = tfp(&s, t0 + shift * period, w, 1.0).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn surrogate_gradient_is_positive(intensity in 0.0f64..3.0, r in 0.5f64..1.5, v_th in 0.2f64..3.0, steps in 1usize..300, detach in any::<bool>()) {
        let cfg = IFLayerConfig { v_th, steps, detach_reset: detach, ..IFLayerConfig::default() };
        let (_, trace) = if_forward(intensity, r, &cfg);
        if detach {
            prop_assert!(if_backward(&trace, 1.0, &cfg).unwrap() > 0.0);
        }
        let observed = (intensity * steps as f64 / (v_th * r)) as usize / 2;
        let loss = spike_render_loss(intensity, observed, r, &cfg).unwrap();
        if detach && loss.discrepancy != 0.0 {
            prop_assert_eq!(loss.grad.signum(), loss.discrepancy.signum());
        }
        prop_assert_eq!(loss.loss, loss.discrepancy * loss.discrepancy);
    }

    #[test]
    fn layer_is_deterministic(intensity in 0.0f64..2.0, r in 0.5f64..1.5, steps in 1usize..300) {
        let cfg = IFLayerConfig { steps, ..IFLayerConfig::default() };
        prop_assert_eq!(if_forward(intensity, r, &cfg), if_forward(intensity, r, &cfg));
    }

    #[test]
    fn weights_sum_to_at_most_one(
        sigmas in prop::collection::vec(0.0f64..50.0, 1..40),
        delta in 0.0f64..2.0,
    ) {
        let samples: Vec<Sample> = sigmas.iter().map(|&s| Sample { sigma: s, color: vec![1.0], delta }).collect();
        let r = volume_render(&samples).unwrap();
        prop_assert!(r.weights.iter().sum::<f64>() <= 1.0);
        prop_assert!(r.weights.iter().all(|w| *w >= 0.0));
        prop_assert!(r.color[0] <= 1.0);
    }

    #[test]
    fn samplers_stay_in_range(near in 0.0f64..3.0, span in 0.1f64..5.0, n in 1usize..64, seed in any::<u64>(), weights in prop::collection::vec(0.0f64..1.0, 1..32)) {
        let far = near + span;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = stratified_samples(near, far, n, Some(&mut rng));
        prop_assert!(d.windows(2).all(|p| p[0] <= p[1]));
        prop_assert!(d.iter().all(|x| (near..=far).contains(x)));
        let edges = bin_edges(near, far, weights.len());
        let h = hierarchical_sample(&weights, &edges, n, Some(&mut rng));
        prop_assert_eq!(h.len(), n);
        prop_assert!(h.windows(2).all(|p| p[0] <= p[1]));
        prop_assert!(h.iter().all(|x| (near..=far).contains(x)));
    }

    #[test]
    fn encoding_has_expected_width(v in prop::collection::vec(-3.0f64..3.0, 1..4), m in 0usize..8) {
        let e = positional_encode(&v, m);
        prop_assert_eq!(e.len(), encoded_len(v.len(), m));
        prop_assert_eq!(&e[..v.len()], &v[..]);
        prop_assert!(e[v.len()..].iter().all(|x| x.abs() <= 1.0));
    }

    #[test]
    fn metrics_are_symmetric(values in prop::collection::vec(0.0f64..1.0, 144), noise in prop::collection::vec(-0.1f64..0.1, 144)) {
        let a = IntensityImage::new(12, 12, values.clone()).unwrap();
        let b = IntensityImage::new(12, 12, values.iter().zip(&noise).map(|(v, n)| (v + n).max(0.0)).collect()).unwrap();
        prop_assert_eq!(psnr(&a, &b, 1.0).unwrap(), psnr(&b, &a, 1.0).unwrap());
        prop_assert!((ssim(&a, &b, 1.0).unwrap() - ssim(&b, &a, 1.0).unwrap()).abs() < 1e-12);
        prop_assert!((ssim(&a, &a, 1.0).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn key_values_roundtrip(entries in prop::collection::btree_map("[a-z][a-z0-9_.]{0,12}", "[A-Za-z0-9_.:+-]{1,16}", 0..12)) {
        let mut kv = KeyValues::new();
        for (k, v) in &entries {
            kv.set(k, v);
        }
        prop_assert_eq!(KeyValues::parse(&kv.to_string()).unwrap(), kv);
    }
}

#[test]
fn nonuniformity_reference_is_exactly_one() {
    let r = NonuniformityMap::random_uniform(8, 8, 0.8, 1.2, 3).unwrap();
    let mut model = SpikeCameraModel::ideal(8, 8, 1.0);
    model.nonuniformity = r;
    model.dark_current = IntensityImage::constant(8, 8, 0.05).unwrap();
    let capture = |l: f64| simulate_stream(&[IntensityImage::constant(8, 8, l).unwrap()], &model, 2048, 0).unwrap();
    let (_, map) = spikefield_core::sim::calibrate(
        &capture(0.0),
        &capture(0.2),
        0.2,
        &capture(0.5),
        0.5,
        Default::default(),
    )
    .unwrap();
    let p = map.reference().unwrap();
    assert_eq!(map.get(p.x, p.y), 1.0);
}
