//! Quantitative metrics: FID, local FID, SSIM, accuracy and shape similarity.

pub mod classifier;
pub mod extract;
pub mod fid;
pub mod report;
pub mod ssim;

use crate::data::{extract_edges, gabor_features, EdgeStyle, GaborBank};
use crate::error::{input, Result};
use crate::imaging::{BBox, ColorImage, EdgeImage};

pub use classifier::{accuracy, ClassifierConfig, ImageClassifier};
pub use extract::{FeatureExtractor, PixelPca};
pub use fid::{fid, frechet_distance, moments, Moments};
pub use report::{evaluate, EvalInputs, EvalReport, ObjectMetrics, SceneMetrics, REFERENCE, REFERENCE_ABLATIONS};
pub use ssim::ssim;

/// Gabor-feature distance between a sketch and the standard edge map of the
/// generated image. Lower means more faithful.
pub fn shape_similarity(input_sketch: &EdgeImage, generated: &ColorImage, bank: &GaborBank) -> Result<f64> {
    let s = input_sketch.size();
    if generated.height() != s || generated.width() != s {
        return input(format!(
            "sketch is {s}x{s}, generated image is {}x{}",
            generated.width(),
            generated.height()
        ));
    }
    let edges = extract_edges(generated, EdgeStyle::Standard);
    Ok(gabor_features(input_sketch, bank).distance(&gabor_features(&edges, bank)))
}

/// One generated scene, its ground truth, and the foreground boxes to compare.
#[derive(Debug, Clone)]
pub struct ScenePair {
    pub generated: ColorImage,
    pub ground_truth: ColorImage,
    pub boxes: Vec<BBox>,
}

/// FID over foreground crops, each resized to `size`×`size` before embedding.
pub fn fid_local(pairs: &[ScenePair], extractor: &FeatureExtractor, size: usize) -> Result<f64> {
    let mut gen = Vec::new();
    let mut real = Vec::new();
    for p in pairs {
        for b in &p.boxes {
            gen.push(p.generated.crop(b)?.resize(size, size));
            real.push(p.ground_truth.crop(b)?.resize(size, size));
        }
    }
    if gen.is_empty() {
        return input("no foreground regions to compare");
    }
    fid(&extractor.extract(&real)?, &extractor.extract(&gen)?)
}
