//! Full-reference image quality metrics.

use crate::error::{Error, Result};
use crate::spike::IntensityImage;

/// Returned by [`psnr`] when the images are identical.
pub const PSNR_CAP: f64 = 99.0;

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const K1: f64 = 0.01;
const K2: f64 = 0.03;

fn check_dims(a: &IntensityImage, b: &IntensityImage) -> Result<()> {
    if !a.same_dims(b) {
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

/// Peak signal-to-noise ratio in dB. With a mask only the flagged pixels
/// count; an empty mask yields the cap.
pub fn psnr_masked(a: &IntensityImage, b: &IntensityImage, peak: f64, mask: Option<&[bool]>) -> Result<f64> {
    check_dims(a, b)?;
    if !(peak > 0.0) {
        return Err(Error::Invalid(format!("peak {peak} must be positive")));
    }
    if let Some(m) = mask {
        if m.len() != a.values().len() {
            return Err(Error::DimensionMismatch("mask length differs from image".into()));
        }
    }
    let mut sum = 0.0;
    let mut n = 0usize;
    for (i, (x, y)) in a.values().iter().zip(b.values()).enumerate() {
        if mask.is_none_or(|m| m[i]) {
            sum += (x - y) * (x - y);
            n += 1;
        }
    }
    if n == 0 || sum == 0.0 {
        return Ok(PSNR_CAP);
    }
    let mse = sum / n as f64;
    Ok((10.0 * (peak * peak / mse).log10()).min(PSNR_CAP))
}

pub fn psnr(a: &IntensityImage, b: &IntensityImage, peak: f64) -> Result<f64> {
    psnr_masked(a, b, peak, None)
}

fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Separable Gaussian filter over the valid region.
fn filter(img: &[f64], w: usize, h: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let ow = w - SSIM_WINDOW + 1;
    let oh = h - SSIM_WINDOW + 1;
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = (0..SSIM_WINDOW).map(|i| k[i] * img[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..SSIM_WINDOW).map(|i| k[i] * rows[(y + i) * ow + x]).sum();
        }
    }
    out
}

/// Per-window SSIM map over the valid region, `(w − 10) × (h − 10)` values.
pub fn ssim_map(a: &IntensityImage, b: &IntensityImage, peak: f64) -> Result<Vec<f64>> {
    check_dims(a, b)?;
    let (w, h) = (a.width(), a.height());
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::TooSmall(format!("{w}x{h} is below {SSIM_WINDOW}x{SSIM_WINDOW}")));
    }
    let k = gaussian_kernel();
    let (x, y) = (a.values(), b.values());
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(p, q)| p * q).collect();
    let mx = filter(x, w, h, &k);
    let my = filter(y, w, h, &k);
    let sxx = filter(&xx, w, h, &k);
    let syy = filter(&yy, w, h, &k);
    let sxy = filter(&xy, w, h, &k);
    let c1 = (K1 * peak).powi(2);
    let c2 = (K2 * peak).powi(2);
    Ok((0..mx.len())
        .map(|i| {
            let (ux, uy) = (mx[i], my[i]);
            let vx = sxx[i] - ux * ux;
            let vy = syy[i] - uy * uy;
            let cov = sxy[i] - ux * uy;
            ((2.0 * ux * uy + c1) * (2.0 * cov + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2))
        })
        .collect())
}

/// Mean local SSIM. With a mask, only windows whose centre pixel is flagged
/// are averaged; if none are, the unmasked mean is returned.
pub fn ssim_masked(a: &IntensityImage, b: &IntensityImage, peak: f64, mask: Option<&[bool]>) -> Result<f64> {
    let map = ssim_map(a, b, peak)?;
    let ow = a.width() - SSIM_WINDOW + 1;
    let half = SSIM_WINDOW / 2;
    let mut sum = 0.0;
    let mut n = 0usize;
    if let Some(m) = mask {
        if m.len() != a.values().len() {
            return Err(Error::DimensionMismatch("mask length differs from image".into()));
        }
        for (i, v) in map.iter().enumerate() {
            let (x, y) = (i % ow + half, i / ow + half);
            if m[y * a.width() + x] {
                sum += v;
                n += 1;
            }
        }
    }
    if n == 0 {
        sum = map.iter().sum();
        n = map.len();
    }
    Ok(sum / n as f64)
}

pub fn ssim(a: &IntensityImage, b: &IntensityImage, peak: f64) -> Result<f64> {
    ssim_masked(a, b, peak, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn img(w: usize, h: usize, mut f: impl FnMut(usize, usize) -> f64) -> IntensityImage {
        let v = (0..w * h).map(|i| f(i % w, i / w)).collect();
        IntensityImage::new(w, h, v).unwrap()
    }

    #[test]
    fn psnr_examples() {
        let a = img(4, 4, |x, y| (x + y) as f64 / 8.0);
        assert_eq!(psnr(&a, &a, 1.0).unwrap(), 99.0);
        let z = IntensityImage::constant(4, 4, 0.0).unwrap();
        let b = IntensityImage::constant(4, 4, 0.1).unwrap();
        assert!((psnr(&z, &b, 1.0).unwrap() - 20.0).abs() < 1e-9);
        let c = IntensityImage::constant(4, 4, 1.0).unwrap();
        assert!((psnr(&z, &c, 255.0).unwrap() - 48.130803608679).abs() < 1e-9);
        assert_eq!(psnr(&a, &b, 1.0).unwrap(), psnr(&b, &a, 1.0).unwrap());
        assert!(psnr(&a, &IntensityImage::constant(3, 4, 0.0).unwrap(), 1.0).is_err());
    }

    #[test]
    fn psnr_mask() {
        let a = img(2, 1, |x, _| x as f64);
        let b = img(2, 1, |_, _| 0.0);
        assert_eq!(psnr_masked(&a, &b, 1.0, Some(&[true, false])).unwrap(), 99.0);
        assert!((psnr_masked(&a, &b, 1.0, Some(&[false, true])).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn ssim_examples() {
        let a = img(16, 16, |x, y| ((x * 3 + y * 5) % 11) as f64 / 10.0);
        assert!((ssim(&a, &a, 1.0).unwrap() - 1.0).abs() < 1e-12);
        let neg = img(16, 16, |x, y| 1.0 - a.values()[y * 16 + x]);
        assert!(ssim(&a, &neg, 1.0).unwrap() < 1.0);
        assert!(matches!(ssim(&img(10, 16, |_, _| 0.0), &img(10, 16, |_, _| 0.0), 1.0), Err(Error::TooSmall(_))));
        let b = img(16, 16, |x, y| ((x + y) % 4) as f64 / 4.0);
        assert!((ssim(&a, &b, 1.0).unwrap() - ssim(&b, &a, 1.0).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn ssim_decreases_with_noise() {
        let base = IntensityImage::constant(24, 24, 0.5).unwrap();
        let mut prev = 1.0;
        for scale in [0.01, 0.03, 0.1, 0.3] {
            let mut rng = ChaCha8Rng::seed_from_u64(4);
            let noisy = img(24, 24, |_, _| 0.5 + scale * (rng.random::<f64>() - 0.5));
            let s = ssim(&base, &noisy, 1.0).unwrap();
            assert!(s > 0.0 && s < prev, "{s} after {prev}");
            prev = s;
        }
    }
}
