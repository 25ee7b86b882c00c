//! Oriented band-pass filter bank over sketches, pooled on a spatial grid.

use serde::{Deserialize, Serialize};

use crate::filter::correlate_zero;
use crate::imaging::EdgeImage;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaborBank {
    pub orientations: usize,
    /// Carrier wavelengths in pixels, one scale each.
    pub wavelengths: Vec<f32>,
    /// Envelope width as a fraction of the wavelength.
    pub sigma_ratio: f32,
    /// Pooling grid is `grid × grid` cells.
    pub grid: usize,
    /// Scale the pooled vector to unit length, so stroke thickness matters
    /// less than stroke placement and orientation.
    pub normalize: bool,
}

impl Default for GaborBank {
    fn default() -> Self {
        GaborBank {
            orientations: 4,
            wavelengths: vec![4.0, 8.0, 16.0],
            sigma_ratio: 0.4,
            grid: 8,
            normalize: true,
        }
    }
}

/// Fixed-length descriptor of a sketch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaborFeature(pub Vec<f32>);

impl GaborFeature {
    pub fn values(&self) -> &[f32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Euclidean distance, accumulated in f64.
    pub fn distance(&self, other: &GaborFeature) -> f64 {
        assert_eq!(self.len(), other.len(), "feature lengths differ");
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| {
                let d = (*a as f64) - (*b as f64);
                d * d
            })
            .sum::<f64>()
            .sqrt()
    }
}

struct Kernel {
    size: usize,
    re: Vec<f32>,
    im: Vec<f32>,
}

impl GaborBank {
    pub fn feature_len(&self) -> usize {
        self.orientations * self.wavelengths.len() * self.grid * self.grid
    }

    fn kernel(&self, theta: f32, lambda: f32) -> Kernel {
        let sigma = self.sigma_ratio * lambda;
        let r = (3.0 * sigma).ceil() as isize;
        let size = (2 * r + 1) as usize;
        let (c, s) = (theta.cos(), theta.sin());
        let mut re = Vec::with_capacity(size * size);
        let mut im = Vec::with_capacity(size * size);
        for y in -r..=r {
            for x in -r..=r {
                let (xf, yf) = (x as f32, y as f32);
                let u = xf * c + yf * s;
                let env = (-(xf * xf + yf * yf) / (2.0 * sigma * sigma)).exp();
                let phase = 2.0 * std::f32::consts::PI * u / lambda;
                re.push(env * phase.cos());
                im.push(env * phase.sin());
            }
        }
        // remove the DC response of the even part so flat regions stay silent
        let env_sum: f32 = (-r..=r)
            .flat_map(|y| (-r..=r).map(move |x| (x, y)))
            .map(|(x, y)| (-((x * x + y * y) as f32) / (2.0 * sigma * sigma)).exp())
            .sum();
        let dc = re.iter().sum::<f32>() / env_sum;
        let mut i = 0;
        for y in -r..=r {
            for x in -r..=r {
                let env = (-((x * x + y * y) as f32) / (2.0 * sigma * sigma)).exp();
                re[i] -= dc * env;
                i += 1;
            }
        }
        Kernel { size, re, im }
    }

    pub fn features(&self, sketch: &EdgeImage) -> GaborFeature {
        let n = sketch.size();
        // filter the ink strength: paper is 0, full ink is 1
        let ink: Vec<f32> = sketch.pixels().iter().map(|v| (1.0 - v) / 2.0).collect();
        let g = self.grid;
        let mut out = Vec::with_capacity(self.feature_len());
        for &lambda in &self.wavelengths {
            for o in 0..self.orientations {
                let theta = std::f32::consts::PI * o as f32 / self.orientations as f32;
                let k = self.kernel(theta, lambda);
                let re = correlate_zero(&ink, n, n, &k.re, k.size, k.size);
                let im = correlate_zero(&ink, n, n, &k.im, k.size, k.size);
                let mut cells = vec![0.0f64; g * g];
                let mut counts = vec![0usize; g * g];
                for y in 0..n {
                    let cy = y * g / n;
                    for x in 0..n {
                        let cx = x * g / n;
                        let i = y * n + x;
                        cells[cy * g + cx] += (re[i] as f64).hypot(im[i] as f64);
                        counts[cy * g + cx] += 1;
                    }
                }
                out.extend(
                    cells
                        .iter()
                        .zip(&counts)
                        .map(|(s, &c)| if c == 0 { 0.0 } else { (s / c as f64) as f32 }),
                );
            }
        }
        if self.normalize {
            let norm = out.iter().map(|v| (*v as f64).powi(2)).sum::<f64>().sqrt();
            if norm > 0.0 {
                out.iter_mut().for_each(|v| *v = (*v as f64 / norm) as f32);
            }
        }
        GaborFeature(out)
    }
}

pub fn gabor_features(sketch: &EdgeImage, bank: &GaborBank) -> GaborFeature {
    bank.features(sketch)
}
