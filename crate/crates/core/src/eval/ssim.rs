//! Structural similarity with an 11×11 Gaussian window (σ = 1.5).

use crate::error::{input, Result};
use crate::imaging::ColorImage;

pub const WINDOW: usize = 11;
pub const SIGMA: f64 = 1.5;
/// Dynamic range of pixel values in `[-1, 1]`.
const RANGE: f64 = 2.0;
const K1: f64 = 0.01;
const K2: f64 = 0.03;

pub(crate) fn window_1d() -> [f64; WINDOW] {
    let r = (WINDOW / 2) as f64;
    let mut w = [0.0; WINDOW];
    for (i, v) in w.iter_mut().enumerate() {
        let d = i as f64 - r;
        *v = (-d * d / (2.0 * SIGMA * SIGMA)).exp();
    }
    let s: f64 = w.iter().sum();
    w.map(|v| v / s)
}

/// Separable filtering over fully contained windows only.
fn filter_valid(src: &[f64], w: usize, h: usize, k: &[f64; WINDOW]) -> Vec<f64> {
    let (ow, oh) = (w + 1 - WINDOW, h + 1 - WINDOW);
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = (0..WINDOW).map(|i| k[i] * src[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..WINDOW).map(|i| k[i] * rows[(y + i) * ow + x]).sum();
        }
    }
    out
}

fn ssim_plane(a: &[f64], b: &[f64], w: usize, h: usize) -> f64 {
    let k = window_1d();
    let c1 = (K1 * RANGE).powi(2);
    let c2 = (K2 * RANGE).powi(2);
    let prod = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(x, y)| x * y).collect::<Vec<_>>();
    let mu_a = filter_valid(a, w, h, &k);
    let mu_b = filter_valid(b, w, h, &k);
    let aa = filter_valid(&prod(a, a), w, h, &k);
    let bb = filter_valid(&prod(b, b), w, h, &k);
    let ab = filter_valid(&prod(a, b), w, h, &k);
    let n = mu_a.len();
    let mut total = 0.0;
    for i in 0..n {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = aa[i] - ma * ma;
        let vb = bb[i] - mb * mb;
        let cov = ab[i] - ma * mb;
        total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    total / n as f64
}

/// Mean SSIM over all window positions, averaged over the three channels.
pub fn ssim(a: &ColorImage, b: &ColorImage) -> Result<f64> {
    if a.height() != b.height() || a.width() != b.width() {
        return input(format!(
            "ssim needs equal shapes, got {}x{} and {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        ));
    }
    let (w, h) = (a.width(), a.height());
    if w < WINDOW || h < WINDOW {
        return input(format!("ssim needs images of at least {WINDOW}x{WINDOW}"));
    }
    let mut sum = 0.0;
    for c in 0..3 {
        let pa: Vec<f64> = a.plane(c).iter().map(|&v| v as f64).collect();
        let pb: Vec<f64> = b.plane(c).iter().map(|&v| v as f64).collect();
        sum += ssim_plane(&pa, &pb, w, h);
    }
    Ok(sum / 3.0)
}
