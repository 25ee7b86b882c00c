//! Plane filtering helpers (row-major `f32` planes, replicated borders).

pub fn gaussian_kernel(sigma: f32, radius: usize) -> Vec<f32> {
    let mut k: Vec<f32> = (0..=2 * radius)
        .map(|i| {
            let d = i as f32 - radius as f32;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let sum: f32 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Separable convolution with a symmetric 1-D kernel, replicate padding.
pub fn convolve_separable(src: &[f32], w: usize, h: usize, kernel: &[f32]) -> Vec<f32> {
    let r = (kernel.len() / 2) as isize;
    let clamp = |v: isize, hi: usize| v.clamp(0, hi as isize - 1) as usize;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..w {
            let mut acc = 0.0;
            for (i, k) in kernel.iter().enumerate() {
                acc += k * row[clamp(x as isize + i as isize - r, w)];
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (i, k) in kernel.iter().enumerate() {
                acc += k * tmp[clamp(y as isize + i as isize - r, h) * w + x];
            }
            out[y * w + x] = acc;
        }
    }
    out
}

pub fn gaussian_blur(src: &[f32], w: usize, h: usize, sigma: f32) -> Vec<f32> {
    let radius = (3.0 * sigma).ceil().max(1.0) as usize;
    convolve_separable(src, w, h, &gaussian_kernel(sigma, radius))
}

/// 2-D correlation with zero padding (used for non-separable kernels).
pub fn correlate_zero(src: &[f32], w: usize, h: usize, kernel: &[f32], kw: usize, kh: usize) -> Vec<f32> {
    let (rx, ry) = ((kw / 2) as isize, (kh / 2) as isize);
    let mut out = vec![0.0; w * h];
    // Skip zero source pixels: sketches are mostly blank.
    for sy in 0..h {
        for sx in 0..w {
            let v = src[sy * w + sx];
            if v == 0.0 {
                continue;
            }
            for ky in 0..kh {
                let y = sy as isize - (ky as isize - ry);
                if y < 0 || y >= h as isize {
                    continue;
                }
                let orow = y as usize * w;
                let krow = &kernel[ky * kw..(ky + 1) * kw];
                for (kx, k) in krow.iter().enumerate() {
                    let x = sx as isize - (kx as isize - rx);
                    if x >= 0 && x < w as isize {
                        out[orow + x as usize] += v * k;
                    }
                }
            }
        }
    }
    out
}
