#![allow(dead_code)]

use sketchscene::background::{BackgroundConfig, BackgroundModel};
use sketchscene::imaging::ColorImage;
use sketchscene::model::{NetWidths, ObjectModel, TrainConfig};
use sketchscene::scene::ModelBundle;

/// Direct per-window SSIM with a dense 11×11 Gaussian (σ = 1.5), valid
/// windows only, data range 2, channel mean. Written without separable
/// filtering so it shares no code path with the library.
pub fn reference_ssim(a: &ColorImage, b: &ColorImage) -> f64 {
    let (w, h) = (a.width(), a.height());
    let k = 11usize;
    let mut g = vec![0.0f64; k * k];
    for j in 0..k {
        for i in 0..k {
            let (dx, dy) = (i as f64 - 5.0, j as f64 - 5.0);
            g[j * k + i] = (-(dx * dx + dy * dy) / (2.0 * 1.5 * 1.5)).exp();
        }
    }
    let s: f64 = g.iter().sum();
    g.iter_mut().for_each(|v| *v /= s);
    let c1 = (0.01f64 * 2.0).powi(2);
    let c2 = (0.03f64 * 2.0).powi(2);
    let mut total = 0.0;
    for c in 0..3 {
        let (pa, pb) = (a.plane(c), b.plane(c));
        let mut acc = 0.0;
        let mut count = 0usize;
        for y0 in 0..=h - k {
            for x0 in 0..=w - k {
                let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for j in 0..k {
                    for i in 0..k {
                        let wt = g[j * k + i];
                        let p = (y0 + j) * w + x0 + i;
                        let (x, y) = (pa[p] as f64, pb[p] as f64);
                        ma += wt * x;
                        mb += wt * y;
                        saa += wt * x * x;
                        sbb += wt * y * y;
                        sab += wt * x * y;
                    }
                }
                let (va, vb, cov) = (saa - ma * ma, sbb - mb * mb, sab - ma * mb);
                acc += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                count += 1;
            }
        }
        total += acc / count as f64;
    }
    total / 3.0
}

/// Sylvester Hadamard matrix of order 16.
fn hadamard16() -> Vec<Vec<f64>> {
    let mut h = vec![vec![1.0]];
    while h.len() < 16 {
        let n = h.len();
        let mut next = vec![vec![0.0; 2 * n]; 2 * n];
        for i in 0..n {
            for j in 0..n {
                next[i][j] = h[i][j];
                next[i][j + n] = h[i][j];
                next[i + n][j] = h[i][j];
                next[i + n][j + n] = -h[i][j];
            }
        }
        h = next;
    }
    h
}

/// 16 feature vectors whose sample mean is `mean` and whose unbiased sample
/// covariance is exactly `diag(std² · 16/15)`: column `j` is `mean[j] +
/// std[j] · H[:, j + 1]` for a Hadamard matrix `H` (orthogonal, zero-sum
/// columns). At most 15 dimensions.
pub fn diagonal_features(mean: &[f64], std: &[f64]) -> Vec<Vec<f32>> {
    assert!(mean.len() == std.len() && mean.len() <= 15);
    let h = hadamard16();
    (0..16)
        .map(|i| (0..mean.len()).map(|j| (mean[j] + std[j] * h[i][j + 1]) as f32).collect())
        .collect()
}

/// Fréchet distance between two diagonal Gaussians given means and variances.
pub fn diagonal_frechet(ma: &[f64], va: &[f64], mb: &[f64], vb: &[f64]) -> f64 {
    let mean: f64 = ma.iter().zip(mb).map(|(a, b)| (a - b).powi(2)).sum();
    let cov: f64 = va.iter().zip(vb).map(|(a, b)| a + b - 2.0 * (a * b).sqrt()).sum();
    mean + cov
}

/// Small untrained models flagged as trained, for plumbing tests.
pub fn tiny_bundle(seed: u64) -> ModelBundle {
    let cfg = TrainConfig {
        noise_dim: 4,
        seed,
        widths: NetWidths {
            generator: 4,
            critic: 4,
            encoder: 4,
            classifier: 4,
            classifier_features: 8,
        },
        ..Default::default()
    };
    let mut object = ObjectModel::new(cfg, vec!["circle".into(), "triangle".into()]).unwrap();
    object.epochs_trained = 1;
    let mut background = BackgroundModel::new(BackgroundConfig {
        resolution: 64,
        width: 4,
        seed,
        categories: vec!["stripes".into()],
        ..Default::default()
    })
    .unwrap();
    background.epochs_trained = 1;
    ModelBundle { object, background }
}
