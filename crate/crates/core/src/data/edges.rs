//! Synthetic edge maps: extended difference-of-Gaussians and a gradient
//! detector with non-maximum suppression and hysteresis.

use serde::{Deserialize, Serialize};

use crate::filter::gaussian_blur;
use crate::imaging::{ColorImage, EdgeImage, INK, NO_EDGE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeStyle {
    Xdog,
    Standard,
}

impl EdgeStyle {
    pub fn as_str(self) -> &'static str {
        match self {
            EdgeStyle::Xdog => "xdog",
            EdgeStyle::Standard => "standard",
        }
    }
}

impl std::str::FromStr for EdgeStyle {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "xdog" => Ok(EdgeStyle::Xdog),
            "standard" | "canny" => Ok(EdgeStyle::Standard),
            other => Err(crate::Error::Input(format!("unknown edge style {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct XdogParams {
    pub sigma: f32,
    /// Ratio between the two Gaussian widths.
    pub k: f32,
    /// Sharpening of the difference.
    pub p: f32,
    /// Threshold below which the response turns into ink.
    pub epsilon: f32,
    /// Steepness of the soft threshold.
    pub phi: f32,
}

impl Default for XdogParams {
    fn default() -> Self {
        XdogParams {
            sigma: 0.8,
            k: 1.6,
            p: 20.0,
            epsilon: 0.5,
            phi: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CannyParams {
    pub sigma: f32,
    /// Hysteresis thresholds on the gradient magnitude (luma in [0, 1] per pixel).
    pub low: f32,
    pub high: f32,
}

impl Default for CannyParams {
    fn default() -> Self {
        CannyParams {
            sigma: 1.0,
            low: 0.04,
            high: 0.1,
        }
    }
}

fn luma01(image: &ColorImage) -> Vec<f32> {
    image.luma().into_iter().map(|v| (v + 1.0) / 2.0).collect()
}

/// Edge map of `image` in the requested style, with default parameters.
/// Non-square images are first resampled to their shorter side.
pub fn extract_edges(image: &ColorImage, style: EdgeStyle) -> EdgeImage {
    let side = image.height().min(image.width());
    let image = image.resize(side, side);
    match style {
        EdgeStyle::Xdog => xdog(&image, &XdogParams::default()),
        EdgeStyle::Standard => canny(&image, &CannyParams::default()),
    }
}

/// `u = (1+p)·G_σ − p·G_kσ` compared to the plain blur, soft-thresholded:
/// flat regions give `u − G_σ = 0` and stay paper.
pub fn xdog(image: &ColorImage, params: &XdogParams) -> EdgeImage {
    let s = image.width();
    let luma = luma01(image);
    let g1 = gaussian_blur(&luma, s, s, params.sigma);
    let g2 = gaussian_blur(&luma, s, s, params.sigma * params.k);
    let pixels: Vec<f32> = g1
        .iter()
        .zip(&g2)
        .map(|(a, b)| {
            let d = params.p * (a - b);
            let t = if d >= -params.epsilon {
                1.0
            } else {
                1.0 + (params.phi * (d + params.epsilon)).tanh()
            };
            // t in [0, 1]: 1 = paper, 0 = ink
            INK + (NO_EDGE - INK) * t
        })
        .collect();
    EdgeImage::new(s, pixels).expect("values in range by construction")
}

pub fn gradient_magnitude(plane: &[f32], s: usize) -> (Vec<f32>, Vec<f32>, Vec<f32>) {
    let at = |x: isize, y: isize| {
        let x = x.clamp(0, s as isize - 1) as usize;
        let y = y.clamp(0, s as isize - 1) as usize;
        plane[y * s + x]
    };
    let mut gx = vec![0.0; s * s];
    let mut gy = vec![0.0; s * s];
    let mut mag = vec![0.0; s * s];
    for y in 0..s as isize {
        for x in 0..s as isize {
            let dx = (at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1)
                - at(x - 1, y - 1)
                - 2.0 * at(x - 1, y)
                - at(x - 1, y + 1))
                / 8.0;
            let dy = (at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1)
                - at(x - 1, y - 1)
                - 2.0 * at(x, y - 1)
                - at(x + 1, y - 1))
                / 8.0;
            let i = y as usize * s + x as usize;
            gx[i] = dx;
            gy[i] = dy;
            mag[i] = (dx * dx + dy * dy).sqrt();
        }
    }
    (gx, gy, mag)
}

/// Gaussian smoothing, Sobel gradients, non-maximum suppression, hysteresis.
pub fn canny(image: &ColorImage, params: &CannyParams) -> EdgeImage {
    let s = image.width();
    let blurred = gaussian_blur(&luma01(image), s, s, params.sigma);
    let (gx, gy, mag) = gradient_magnitude(&blurred, s);
    let mut thin = vec![0.0f32; s * s];
    for y in 0..s {
        for x in 0..s {
            let i = y * s + x;
            let m = mag[i];
            if m < params.low {
                continue;
            }
            let angle = gy[i].atan2(gx[i]).to_degrees().rem_euclid(180.0);
            let (ox, oy): (isize, isize) = if !(22.5..157.5).contains(&angle) {
                (1, 0)
            } else if angle < 67.5 {
                (1, 1)
            } else if angle < 112.5 {
                (0, 1)
            } else {
                (-1, 1)
            };
            let nb = |dx: isize, dy: isize| {
                let (nx, ny) = (x as isize + dx, y as isize + dy);
                if nx < 0 || ny < 0 || nx >= s as isize || ny >= s as isize {
                    0.0
                } else {
                    mag[ny as usize * s + nx as usize]
                }
            };
            // ties go to the first pixel along the gradient direction
            if m >= nb(ox, oy) && m > nb(-ox, -oy) {
                thin[i] = m;
            }
        }
    }
    let mut edge = vec![false; s * s];
    let mut stack: Vec<usize> = (0..s * s).filter(|&i| thin[i] >= params.high).collect();
    for &i in &stack {
        edge[i] = true;
    }
    while let Some(i) = stack.pop() {
        let (x, y) = ((i % s) as isize, (i / s) as isize);
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= s as isize || ny >= s as isize {
                    continue;
                }
                let j = ny as usize * s + nx as usize;
                if !edge[j] && thin[j] >= params.low {
                    edge[j] = true;
                    stack.push(j);
                }
            }
        }
    }
    EdgeImage::new(s, edge.iter().map(|&e| if e { INK } else { NO_EDGE }).collect())
        .expect("binary values")
}
