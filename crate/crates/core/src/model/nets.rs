//! Network topologies of the object model.

use tch::nn::{self, Module};
use tch::{Kind, Tensor};

use crate::layers::{down_conv, lrelu, same_conv, up_conv, InstanceNorm};

fn log2_steps(from: usize, to: usize) -> usize {
    let mut n = 0;
    let mut s = from;
    while s > to {
        s /= 2;
        n += 1;
    }
    n
}

/// Noise ⊕ one-hot → fully connected 4x4 map → stride-2 upsampling blocks.
///
/// ReLU and instance norm between blocks, `tanh` at the output.
#[derive(Debug)]
pub struct Generator {
    fc: nn::Linear,
    norm0: InstanceNorm,
    ups: Vec<nn::ConvTranspose2D>,
    norms: Vec<InstanceNorm>,
    c0: i64,
    pub out_channels: i64,
    pub resolution: usize,
}

impl Generator {
    pub fn new(p: &nn::Path, input_dim: i64, width: i64, out_channels: i64, resolution: usize) -> Self {
        let n = log2_steps(resolution, 4);
        let chans: Vec<i64> = (0..n).map(|i| width << (n - 1 - i)).collect();
        let c0 = chans[0];
        let fc = nn::linear(p / "fc", input_dim, c0 * 16, Default::default());
        let norm0 = InstanceNorm::new(p / "norm0", c0);
        let mut ups = Vec::new();
        let mut norms = Vec::new();
        for i in 0..n {
            let c_out = if i + 1 < n { chans[i + 1] } else { out_channels };
            ups.push(up_conv(p / format!("up{i}"), chans[i], c_out));
            if i + 1 < n {
                norms.push(InstanceNorm::new(p / format!("norm{}", i + 1), c_out));
            }
        }
        Generator {
            fc,
            norm0,
            ups,
            norms,
            c0,
            out_channels,
            resolution,
        }
    }

    pub fn forward(&self, noise: &Tensor, one_hot: &Tensor) -> Tensor {
        let n = noise.size()[0];
        let mut x = Tensor::cat(&[noise, one_hot], 1)
            .apply(&self.fc)
            .view([n, self.c0, 4, 4])
            .apply(&self.norm0)
            .relu();
        for (i, up) in self.ups.iter().enumerate() {
            x = x.apply(up);
            x = match self.norms.get(i) {
                Some(norm) => x.apply(norm).relu(),
                None => x.tanh(),
            };
        }
        x
    }
}

/// Strided convolutional critic producing one unbounded score per sample.
#[derive(Debug)]
pub struct CriticNet {
    convs: Vec<nn::Conv2D>,
    norms: Vec<Option<InstanceNorm>>,
    head: nn::Linear,
    condition: bool,
}

impl CriticNet {
    fn new(
        p: &nn::Path,
        in_channels: i64,
        height: usize,
        width: usize,
        base: i64,
        cond_dim: i64,
    ) -> Self {
        let n = log2_steps(height.min(width), 4);
        let mut convs = Vec::new();
        let mut norms = Vec::new();
        let mut c_in = in_channels;
        for i in 0..n {
            let c_out = base << i.min(3);
            convs.push(down_conv(p / format!("conv{i}"), c_in, c_out));
            norms.push((i > 0).then(|| InstanceNorm::new(p / format!("norm{i}"), c_out)));
            c_in = c_out;
        }
        let feat = c_in * ((height >> n) * (width >> n)) as i64;
        let head = nn::linear(p / "head", feat + cond_dim, 1, Default::default());
        CriticNet {
            convs,
            norms,
            head,
            condition: cond_dim > 0,
        }
    }

    fn forward(&self, xs: &Tensor, one_hot: Option<&Tensor>) -> Tensor {
        let mut x = xs.shallow_clone();
        for (conv, norm) in self.convs.iter().zip(&self.norms) {
            x = x.apply(conv);
            if let Some(norm) = norm {
                x = x.apply(norm);
            }
            x = lrelu(&x);
        }
        let mut feats = x.flatten(1, -1);
        if self.condition {
            let oh = one_hot.expect("conditioned critic needs a category");
            feats = Tensor::cat(&[&feats, oh], 1);
        }
        feats.apply(&self.head).view([-1])
    }
}

/// One critic, or a sum of copies applied to successively halved inputs.
#[derive(Debug)]
pub struct Critic {
    scales: Vec<CriticNet>,
    pub in_channels: i64,
    pub height: usize,
    pub width: usize,
}

impl Critic {
    pub fn new(
        p: &nn::Path,
        in_channels: i64,
        height: usize,
        width: usize,
        base: i64,
        cond_dim: i64,
        num_scales: usize,
    ) -> Self {
        let scales = (0..num_scales.max(1))
            .map(|k| {
                CriticNet::new(
                    &(p / format!("scale{k}")),
                    in_channels,
                    height >> k,
                    width >> k,
                    base,
                    cond_dim,
                )
            })
            .collect();
        Critic {
            scales,
            in_channels,
            height,
            width,
        }
    }

    pub fn num_scales(&self) -> usize {
        self.scales.len()
    }

    pub fn forward(&self, xs: &Tensor, one_hot: Option<&Tensor>) -> Tensor {
        let mut total = self.scales[0].forward(xs, one_hot);
        let mut x = xs.shallow_clone();
        for net in &self.scales[1..] {
            x = x.avg_pool2d([2, 2], [2, 2], [0, 0], false, true, None::<i64>);
            total = total + net.forward(&x, one_hot);
        }
        total
    }
}

/// Pre-activation residual block with average-pool downsampling.
#[derive(Debug)]
struct ResDown {
    norm1: InstanceNorm,
    conv1: nn::Conv2D,
    norm2: InstanceNorm,
    conv2: nn::Conv2D,
    shortcut: nn::Conv2D,
}

impl ResDown {
    fn new(p: &nn::Path, c_in: i64, c_out: i64) -> Self {
        ResDown {
            norm1: InstanceNorm::new(p / "norm1", c_in),
            conv1: same_conv(p / "conv1", c_in, c_in, 3),
            norm2: InstanceNorm::new(p / "norm2", c_in),
            conv2: same_conv(p / "conv2", c_in, c_out, 3),
            shortcut: same_conv(p / "shortcut", c_in, c_out, 1),
        }
    }

    fn forward(&self, xs: &Tensor) -> Tensor {
        let pool = |t: Tensor| t.avg_pool2d([2, 2], [2, 2], [0, 0], false, true, None::<i64>);
        let y = xs
            .apply(&self.norm1)
            .relu()
            .apply(&self.conv1)
            .apply(&self.norm2)
            .relu()
            .apply(&self.conv2);
        pool(y) + pool(xs.apply(&self.shortcut))
    }
}

/// Residual encoder mapping an edge map to an attribute vector.
#[derive(Debug)]
pub struct Encoder {
    stem: nn::Conv2D,
    blocks: Vec<ResDown>,
    head: nn::Linear,
    pub resolution: usize,
}

impl Encoder {
    pub fn new(p: &nn::Path, in_channels: i64, width: i64, out_dim: i64, resolution: usize) -> Self {
        let stem = down_conv(p / "stem", in_channels, width);
        let n = log2_steps(resolution / 2, 4);
        let mut blocks = Vec::new();
        let mut c = width;
        for i in 0..n {
            let c_out = width << (i + 1).min(2);
            blocks.push(ResDown::new(&(p / format!("res{i}")), c, c_out));
            c = c_out;
        }
        let head = nn::linear(p / "head", c, out_dim, Default::default());
        Encoder {
            stem,
            blocks,
            head,
            resolution,
        }
    }

    pub fn forward(&self, xs: &Tensor) -> Tensor {
        let mut x = xs.apply(&self.stem);
        for b in &self.blocks {
            x = b.forward(&x);
        }
        x.relu()
            .mean_dim(&[2i64, 3][..], false, Kind::Float)
            .apply(&self.head)
    }
}

/// Convolutional image classifier; its penultimate layer doubles as a
/// feature extractor for distribution metrics.
#[derive(Debug)]
pub struct Classifier {
    convs: Vec<nn::Conv2D>,
    norms: Vec<Option<InstanceNorm>>,
    features: nn::Linear,
    logits: nn::Linear,
    pub resolution: usize,
    pub feature_dim: i64,
}

impl Classifier {
    pub fn new(
        p: &nn::Path,
        width: i64,
        feature_dim: i64,
        num_classes: i64,
        resolution: usize,
    ) -> Self {
        let n = log2_steps(resolution, 4);
        let mut convs = Vec::new();
        let mut norms = Vec::new();
        let mut c_in = 3;
        for i in 0..n {
            let c_out = width << i.min(3);
            convs.push(down_conv(p / format!("conv{i}"), c_in, c_out));
            norms.push((i > 0).then(|| InstanceNorm::new(p / format!("norm{i}"), c_out)));
            c_in = c_out;
        }
        let features = nn::linear(p / "features", c_in * 16, feature_dim, Default::default());
        let logits = nn::linear(p / "logits", feature_dim, num_classes, Default::default());
        Classifier {
            convs,
            norms,
            features,
            logits,
            resolution,
            feature_dim,
        }
    }

    pub fn features(&self, xs: &Tensor) -> Tensor {
        let mut x = xs.shallow_clone();
        for (conv, norm) in self.convs.iter().zip(&self.norms) {
            x = x.apply(conv);
            if let Some(norm) = norm {
                x = x.apply(norm);
            }
            x = lrelu(&x);
        }
        lrelu(&x.flatten(1, -1).apply(&self.features))
    }

    pub fn logits(&self, xs: &Tensor) -> Tensor {
        self.features(xs).apply(&self.logits)
    }
}

impl Module for Classifier {
    fn forward(&self, xs: &Tensor) -> Tensor {
        self.logits(xs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use tch::Device;

    #[test]
    fn output_shapes() {
        let vs = nn::VarStore::new(Device::Cpu);
        let root = vs.root();
        let g = Generator::new(&(&root / "g"), 10, 4, 3, 64);
        let z = Tensor::randn([2, 8], (Kind::Float, Device::Cpu));
        let oh = Tensor::zeros([2, 2], (Kind::Float, Device::Cpu));
        let img = g.forward(&z, &oh);
        assert_eq!(img.size(), vec![2, 3, 64, 64]);

        let d = Critic::new(&(&root / "dj"), 3, 64, 128, 4, 2, 1);
        assert_eq!(d.forward(&Tensor::cat(&[&img, &img], 3), Some(&oh)).size(), vec![2]);

        let ms = Critic::new(&(&root / "ms"), 3, 128, 128, 4, 0, 2);
        let big = Tensor::zeros([2, 3, 128, 128], (Kind::Float, Device::Cpu));
        assert_eq!(ms.forward(&big, None).size(), vec![2]);
        assert_eq!(ms.num_scales(), 2);

        let e = Encoder::new(&(&root / "e"), 1, 4, 8, 64);
        let edge = Tensor::zeros([2, 1, 64, 64], (Kind::Float, Device::Cpu));
        assert_eq!(e.forward(&edge).size(), vec![2, 8]);

        let c = Classifier::new(&(&root / "c"), 4, 16, 2, 64);
        assert_eq!(c.logits(&img).size(), vec![2, 2]);
        assert_eq!(c.features(&img).size(), vec![2, 16]);
    }
}
