use spikefield_web::{neuron_trace, render_scene, spike_reconstruct};

#[test]
fn scene_is_rgba_and_lit() {
    let px = render_scene(0.0, 0.14, 32).unwrap();
    assert_eq!(px.len(), 32 * 32 * 4);
    assert!(px.chunks(4).all(|c| c[0] == c[1] && c[1] == c[2] && c[3] == 255));
    assert!(px.chunks(4).any(|c| c[0] > 0));
}

#[test]
fn reconstructions_have_image_size() {
    for method in ["tfi", "tfp", "rate"] {
        let px = spike_reconstruct(30.0, 0.28, 24, 256, method, 32, true, 1).unwrap();
        assert_eq!(px.len(), 24 * 24 * 4);
    }
    let a = spike_reconstruct(30.0, 0.28, 24, 256, "rate", 32, true, 5).unwrap();
    let b = spike_reconstruct(30.0, 0.28, 24, 256, "rate", 32, true, 5).unwrap();
    assert_eq!(a, b);
}

#[test]
fn neuron_fires_at_the_rate_law() {
    let out = neuron_trace(0.3, 1.0, 1.0, 100, false).unwrap();
    assert_eq!(out.len(), 200);
    let spikes = out[100..].iter().filter(|&&s| s == 1.0).count();
    assert_eq!(spikes, 30);
    assert!((out[0] - 0.3).abs() < 1e-15);
}
