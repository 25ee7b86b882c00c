//! Small building blocks on top of `tch::nn` shared by all networks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tch::{nn, Kind, Tensor};

/// Per-sample, per-channel normalization with a learned affine map.
///
/// Written with elementary ops so that second derivatives (needed by the
/// gradient penalty) are available.
#[derive(Debug)]
pub struct InstanceNorm {
    gain: Tensor,
    bias: Tensor,
    eps: f64,
}

impl InstanceNorm {
    pub fn new(p: nn::Path, channels: i64) -> Self {
        InstanceNorm {
            gain: p.ones("gain", &[channels]),
            bias: p.zeros("bias", &[channels]),
            eps: 1e-5,
        }
    }
}

impl nn::Module for InstanceNorm {
    fn forward(&self, xs: &Tensor) -> Tensor {
        let mean = xs.mean_dim(&[2i64, 3][..], true, Kind::Float);
        let centered = xs - mean;
        let var = centered.square().mean_dim(&[2i64, 3][..], true, Kind::Float);
        let normed = centered / (var + self.eps).sqrt();
        normed * self.gain.view([1, -1, 1, 1]) + self.bias.view([1, -1, 1, 1])
    }
}

/// Leaky ReLU with slope 0.2.
pub fn lrelu(xs: &Tensor) -> Tensor {
    xs.maximum(&(xs * 0.2))
}

/// 4x4 stride-2 convolution halving the spatial size.
pub fn down_conv(p: nn::Path, c_in: i64, c_out: i64) -> nn::Conv2D {
    let cfg = nn::ConvConfig {
        stride: 2,
        padding: 1,
        ..Default::default()
    };
    nn::conv2d(p, c_in, c_out, 4, cfg)
}

/// 4x4 stride-2 transposed convolution doubling the spatial size.
pub fn up_conv(p: nn::Path, c_in: i64, c_out: i64) -> nn::ConvTranspose2D {
    let cfg = nn::ConvTransposeConfig {
        stride: 2,
        padding: 1,
        ..Default::default()
    };
    nn::conv_transpose2d(p, c_in, c_out, 4, cfg)
}

pub fn same_conv(p: nn::Path, c_in: i64, c_out: i64, k: i64) -> nn::Conv2D {
    let cfg = nn::ConvConfig {
        padding: k / 2,
        ..Default::default()
    };
    nn::conv2d(p, c_in, c_out, k, cfg)
}

/// Overwrites every variable of `vs` with values drawn from a seeded stream.
///
/// Matrices and kernels get Kaiming-uniform values (leaky slope 0.2, fan-in
/// taken from dims 1..), `gain` vectors ones, everything else zeros. Variables
/// are visited in name order so the result depends on `seed` alone.
pub fn seeded_init(vs: &nn::VarStore, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut vars: Vec<(String, Tensor)> = vs.variables().into_iter().collect();
    vars.sort_by(|a, b| a.0.cmp(&b.0));
    tch::no_grad(|| {
        for (name, mut var) in vars {
            let dims = var.size();
            let numel: i64 = dims.iter().product();
            let values: Vec<f32> = if dims.len() >= 2 {
                let fan_in: i64 = dims[1..].iter().product();
                let bound = (6.0 / (1.04 * fan_in as f64)).sqrt() as f32;
                (0..numel).map(|_| rng.random_range(-bound..bound)).collect()
            } else if name.ends_with("gain") {
                vec![1.0; numel as usize]
            } else {
                vec![0.0; numel as usize]
            };
            var.copy_(&Tensor::from_slice(&values).view(dims.as_slice()));
        }
    });
}

/// Stable per-network seed derived from a run seed and a network name.
pub fn sub_seed(seed: u64, name: &str) -> u64 {
    // FNV-1a over the name, mixed with the seed.
    let mut h: u64 = 0xcbf29ce484222325 ^ seed.wrapping_mul(0x9E3779B97F4A7C15);
    for b in name.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}
