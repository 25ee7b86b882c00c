//! Image embeddings used by the distribution metrics.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::classifier::ImageClassifier;
use crate::error::{input, Error, Result};
use crate::imaging::ColorImage;

/// Principal components of downsampled pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PixelPca {
    pub size: usize,
    pub mean: Vec<f32>,
    /// `k` rows of length `3 * size * size`.
    pub components: Vec<Vec<f32>>,
}

impl PixelPca {
    fn flatten(&self, image: &ColorImage) -> Vec<f32> {
        image.resize(self.size, self.size).pixels().to_vec()
    }

    /// Top-`k` principal axes of `images` resized to `size`×`size`.
    pub fn fit(images: &[ColorImage], size: usize, k: usize) -> Result<Self> {
        if images.len() < 2 {
            return input("pixel PCA needs at least 2 images");
        }
        let d = 3 * size * size;
        if k == 0 || k > d {
            return input(format!("component count {k} outside 1..={d}"));
        }
        let rows: Vec<Vec<f32>> = images.iter().map(|im| im.resize(size, size).pixels().to_vec()).collect();
        let n = rows.len();
        let x = DMatrix::from_fn(n, d, |i, j| rows[i][j] as f64);
        let mean: Vec<f64> = (0..d).map(|j| x.column(j).mean()).collect();
        let mut c = x;
        for (j, m) in mean.iter().enumerate() {
            c.column_mut(j).add_scalar_mut(-m);
        }
        let cov = c.transpose() * &c / (n as f64 - 1.0);
        let eig = SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..d).collect();
        // descending eigenvalue, index breaks ties
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
        let components = order[..k]
            .iter()
            .map(|&i| {
                let v = eig.eigenvectors.column(i);
                // fix the sign so the largest-magnitude entry is positive
                let (mut best, mut sign) = (0.0, 1.0);
                for &e in v.iter() {
                    if e.abs() > best {
                        best = e.abs();
                        sign = e.signum();
                    }
                }
                v.iter().map(|&e| (e * sign) as f32).collect()
            })
            .collect();
        Ok(PixelPca {
            size,
            mean: mean.iter().map(|&m| m as f32).collect(),
            components,
        })
    }

    pub fn project(&self, image: &ColorImage) -> Vec<f32> {
        let x = self.flatten(image);
        self.components
            .iter()
            .map(|c| c.iter().zip(&x).zip(&self.mean).map(|((w, v), m)| w * (v - m)).sum())
            .collect()
    }
}

#[derive(Debug)]
pub enum FeatureExtractor {
    /// Penultimate layer of a classifier trained on the toy corpus.
    ToyClassifier(ImageClassifier),
    /// Classifier weights loaded from an external checkpoint.
    PretrainedClassifier { path: PathBuf, model: ImageClassifier },
    PixelPca(PixelPca),
}

impl FeatureExtractor {
    pub fn pretrained(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::Data(format!("feature extractor checkpoint {} not found", path.display())));
        }
        Ok(FeatureExtractor::PretrainedClassifier {
            path: path.to_path_buf(),
            model: ImageClassifier::load(path)?,
        })
    }

    pub fn kind(&self) -> &'static str {
        match self {
            FeatureExtractor::ToyClassifier(_) => "toy_classifier",
            FeatureExtractor::PretrainedClassifier { .. } => "pretrained_classifier",
            FeatureExtractor::PixelPca(_) => "pixel_pca",
        }
    }

    /// Short description recorded in reports.
    pub fn identity(&self) -> String {
        match self {
            FeatureExtractor::ToyClassifier(c) => format!("toy_classifier(seed={}, dim={})", c.config.seed, c.feature_dim()),
            FeatureExtractor::PretrainedClassifier { path, model } => {
                format!("pretrained_classifier({}, dim={})", path.display(), model.feature_dim())
            }
            FeatureExtractor::PixelPca(p) => format!("pixel_pca({}x{}, k={})", p.size, p.size, p.components.len()),
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            FeatureExtractor::ToyClassifier(c) | FeatureExtractor::PretrainedClassifier { model: c, .. } => c.feature_dim(),
            FeatureExtractor::PixelPca(p) => p.components.len(),
        }
    }

    pub fn extract(&self, images: &[ColorImage]) -> Result<Vec<Vec<f32>>> {
        match self {
            FeatureExtractor::ToyClassifier(c) | FeatureExtractor::PretrainedClassifier { model: c, .. } => c.features(images),
            FeatureExtractor::PixelPca(p) => Ok(images.iter().map(|im| p.project(im)).collect()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pca_projects_training_mean_to_zero() {
        let imgs: Vec<ColorImage> = (0..6)
            .map(|i| ColorImage::from_fn(8, 8, |x, y| [(x as f32 - 4.0) * 0.1 * i as f32 / 6.0, (y as f32) * 0.05, -0.2]))
            .collect();
        let pca = PixelPca::fit(&imgs, 4, 3).unwrap();
        let ex = FeatureExtractor::PixelPca(pca.clone());
        assert_eq!(ex.output_dim(), 3);
        let mean_img = ColorImage::new(4, 4, pca.mean.clone()).unwrap();
        assert!(pca.project(&mean_img).iter().all(|v| v.abs() < 1e-5));
        assert_eq!(ex.extract(&imgs).unwrap(), ex.extract(&imgs).unwrap());
    }
}
