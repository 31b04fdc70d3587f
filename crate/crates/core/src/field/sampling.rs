//! Depth sampling along rays.

use rand::Rng;

const PDF_FLOOR: f64 = 1e-5;

/// One depth per equal-width bin of `[near, far)`. With `rng = None` every
/// depth sits at its bin midpoint.
pub fn stratified_samples<R: Rng + ?Sized>(near: f64, far: f64, n: usize, rng: Option<&mut R>) -> Vec<f64> {
    let width = (far - near) / n as f64;
    match rng {
        Some(rng) => (0..n)
            .map(|i| {
                let u: f64 = rng.random();
                (near + (i as f64 + u) * width).min(far - width * 1e-12)
            })
            .collect(),
        None => (0..n).map(|i| near + (i as f64 + 0.5) * width).collect(),
    }
}

/// Segment lengths between consecutive depths; the last runs to `far`.
pub fn deltas(depths: &[f64], far: f64) -> Vec<f64> {
    let mut out: Vec<f64> = depths.windows(2).map(|w| w[1] - w[0]).collect();
    if let Some(&last) = depths.last() {
        out.push(far - last);
    }
    out
}

/// Bin edges of the stratified partition, `n + 1` values.
pub fn bin_edges(near: f64, far: f64, n: usize) -> Vec<f64> {
    let width = (far - near) / n as f64;
    (0..=n).map(|i| if i == n { far } else { near + i as f64 * width }).collect()
}

/// Inverse-CDF draws from the piecewise-constant density `w_i + floor` over
/// `edges`. With `rng = None` the quantiles `(j + 0.5)/n` are used.
pub fn hierarchical_sample<R: Rng + ?Sized>(weights: &[f64], edges: &[f64], n: usize, rng: Option<&mut R>) -> Vec<f64> {
    assert_eq!(edges.len(), weights.len() + 1, "one more edge than weights");
    let pdf: Vec<f64> = weights.iter().map(|w| w.max(0.0) + PDF_FLOOR).collect();
    let total: f64 = pdf.iter().sum();
    let mut cdf = Vec::with_capacity(pdf.len() + 1);
    cdf.push(0.0);
    let mut acc = 0.0;
    for p in &pdf {
        acc += p / total;
        cdf.push(acc);
    }
    let last = cdf.len() - 1;
    cdf[last] = 1.0;

    let invert = |u: f64| -> f64 {
        // first bin whose upper cdf edge exceeds u
        let bin = cdf[1..].partition_point(|&c| c <= u).min(pdf.len() - 1);
        let lo = cdf[bin];
        let span = cdf[bin + 1] - lo;
        let frac = if span > 0.0 { ((u - lo) / span).clamp(0.0, 1.0) } else { 0.5 };
        edges[bin] + frac * (edges[bin + 1] - edges[bin])
    };
    let mut out: Vec<f64> = match rng {
        Some(rng) => (0..n).map(|_| invert(rng.random::<f64>())).collect(),
        None => (0..n).map(|j| invert((j as f64 + 0.5) / n as f64)).collect(),
    };
    out.sort_by(f64::total_cmp);
    out
}

/// Sorted union of two depth lists.
pub fn merge(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    out.extend_from_slice(a);
    out.extend_from_slice(b);
    out.sort_by(f64::total_cmp);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    type NoRng = ChaCha8Rng;

    #[test]
    fn midpoints_are_evenly_spaced() {
        let d = stratified_samples::<NoRng>(2.0, 6.0, 4, None);
        assert_eq!(d, vec![2.5, 3.5, 4.5, 5.5]);
        assert_eq!(deltas(&d, 6.0), vec![1.0, 1.0, 1.0, 0.5]);
    }

    #[test]
    fn random_depths_stay_in_bins() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let d = stratified_samples(0.0, 1.0, 2, Some(&mut rng));
            assert!((0.0..0.5).contains(&d[0]) && (0.5..1.0).contains(&d[1]));
        }
        let d = stratified_samples(2.0, 6.0, 32, Some(&mut rng));
        assert!(d.windows(2).all(|w| w[0] <= w[1]));
        assert!(d.iter().all(|&x| (2.0..6.0).contains(&x)));
    }

    #[test]
    fn concentrated_weight_stays_in_bin() {
        let edges = bin_edges(0.0, 4.0, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let d = hierarchical_sample(&[0.0, 0.0, 1e6, 0.0], &edges, 200, Some(&mut rng));
        let inside = d.iter().filter(|&&x| (2.0..=3.0).contains(&x)).count();
        assert!(inside >= 199);
        let d = hierarchical_sample::<NoRng>(&[0.0, 0.0, 1.0, 0.0], &edges, 64, None);
        assert!(d.iter().all(|&x| (2.0..=3.0).contains(&x)));
    }

    #[test]
    fn zero_weights_fall_back_to_uniform() {
        let edges = bin_edges(0.0, 1.0, 4);
        let d = hierarchical_sample::<NoRng>(&[0.0; 4], &edges, 4, None);
        let expect = [0.125, 0.375, 0.625, 0.875];
        for (a, b) in d.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn merge_sorts() {
        assert_eq!(merge(&[1.0, 3.0], &[2.0, 0.5]), vec![0.5, 1.0, 2.0, 3.0]);
    }
}
