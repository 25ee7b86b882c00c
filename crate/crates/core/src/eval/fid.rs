//! Fréchet distance between Gaussian fits of two feature sets.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{input, Result};

/// Eigenvalues below this are treated as zero.
const EIG_FLOOR: f64 = 1e-10;

/// Mean and unbiased covariance of a feature set.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl Moments {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

pub fn moments(features: &[Vec<f32>]) -> Result<Moments> {
    let n = features.len();
    if n < 2 {
        return input(format!("need at least 2 feature vectors, got {n}"));
    }
    let d = features[0].len();
    if d == 0 {
        return input("feature vectors are empty");
    }
    if features.iter().any(|f| f.len() != d) {
        return input("feature vectors differ in length");
    }
    if features.iter().flatten().any(|v| !v.is_finite()) {
        return input("non-finite feature value");
    }
    let x = DMatrix::from_fn(n, d, |i, j| features[i][j] as f64);
    let mean = DVector::from_fn(d, |j, _| x.column(j).mean());
    let mut centered = x;
    for j in 0..d {
        let m = mean[j];
        centered.column_mut(j).add_scalar_mut(-m);
    }
    let cov = centered.transpose() * &centered / (n as f64 - 1.0);
    Ok(Moments { mean, cov })
}

/// Square root of a symmetric positive semi-definite matrix.
fn sym_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let roots = eig.eigenvalues.map(|l| if l < EIG_FLOOR { 0.0 } else { l.sqrt() });
    &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose()
}

/// `‖μa − μb‖² + Tr(Σa + Σb − 2 (Σa Σb)^½)`, clamped at 0.
///
/// The trace term uses `Tr((Σa Σb)^½) = Tr((Σa^½ Σb Σa^½)^½)`, which keeps
/// every factorized matrix symmetric.
pub fn frechet_distance(a: &Moments, b: &Moments) -> Result<f64> {
    if a.dim() != b.dim() {
        return input(format!("feature dimensions differ: {} vs {}", a.dim(), b.dim()));
    }
    let diff = &a.mean - &b.mean;
    let sa = sym_sqrt(&a.cov);
    let inner = &sa * &b.cov * &sa;
    let inner = (&inner + inner.transpose()) * 0.5;
    let cross: f64 = SymmetricEigen::new(inner)
        .eigenvalues
        .iter()
        .map(|&l| if l < EIG_FLOOR { 0.0 } else { l.sqrt() })
        .sum();
    let value = diff.norm_squared() + a.cov.trace() + b.cov.trace() - 2.0 * cross;
    Ok(value.max(0.0))
}

pub fn fid(features_real: &[Vec<f32>], features_fake: &[Vec<f32>]) -> Result<f64> {
    let (r, f) = (moments(features_real)?, moments(features_fake)?);
    frechet_distance(&r, &f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    fn gaussian_set(n: usize, mean: &[f64], sd: &[f64], seed: u64) -> Vec<Vec<f32>> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                mean.iter()
                    .zip(sd)
                    .map(|(&m, &s)| Normal::new(m, s).unwrap().sample(&mut rng) as f32)
                    .collect()
            })
            .collect()
    }

    #[test]
    fn identical_sets_give_zero() {
        let a = gaussian_set(200, &[0.0, 1.0, -2.0], &[1.0, 0.5, 2.0], 1);
        assert!(fid(&a, &a).unwrap().abs() < 1e-6);
    }

    #[test]
    fn unit_gaussians_one_apart() {
        let mut a = Moments {
            mean: DVector::from_element(1, 0.0),
            cov: DMatrix::from_element(1, 1, 1.0),
        };
        let b = Moments {
            mean: DVector::from_element(1, 1.0),
            cov: DMatrix::from_element(1, 1, 1.0),
        };
        assert!((frechet_distance(&a, &b).unwrap() - 1.0).abs() < 1e-12);
        a.cov[(0, 0)] = 4.0;
        // (0 - 1)^2 + 4 + 1 - 2 * 2
        assert!((frechet_distance(&a, &b).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn errors_on_bad_input() {
        let a = vec![vec![0.0f32; 3]; 4];
        let b = vec![vec![0.0f32; 2]; 4];
        assert!(fid(&a, &b).is_err());
        assert!(fid(&a[..1], &a).is_err());
        let mut c = a.clone();
        c[2][1] = f32::NAN;
        assert!(fid(&a, &c).is_err());
    }
}
