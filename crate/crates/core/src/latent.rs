use rand::Rng;
use rand_distr::StandardNormal;
use tch::Tensor;

use crate::error::{input, Result};

/// Generator input: Gaussian noise plus a one-hot category.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentCode {
    noise: Vec<f32>,
    category: Vec<f32>,
}

impl LatentCode {
    pub fn new(noise: Vec<f32>, num_categories: usize, category_index: usize) -> Result<Self> {
        if noise.is_empty() {
            return input("noise_dim must be positive");
        }
        Ok(LatentCode {
            noise,
            category: one_hot(num_categories, category_index)?,
        })
    }

    pub fn noise(&self) -> &[f32] {
        &self.noise
    }

    pub fn one_hot(&self) -> &[f32] {
        &self.category
    }

    pub fn noise_dim(&self) -> usize {
        self.noise.len()
    }

    pub fn num_categories(&self) -> usize {
        self.category.len()
    }

    pub fn category_index(&self) -> usize {
        self.category
            .iter()
            .position(|&v| v == 1.0)
            .expect("one-hot invariant")
    }

    /// Same noise, different category.
    pub fn with_category(&self, category_index: usize) -> Result<Self> {
        LatentCode::new(self.noise.clone(), self.category.len(), category_index)
    }
}

pub fn one_hot(num_categories: usize, index: usize) -> Result<Vec<f32>> {
    if index >= num_categories {
        return input(format!(
            "category index {index} out of range for {num_categories} categories"
        ));
    }
    let mut v = vec![0.0; num_categories];
    v[index] = 1.0;
    Ok(v)
}

/// Draws `noise ~ N(0, I)` and one-hot encodes the category.
pub fn sample_latent<R: Rng + ?Sized>(
    num_categories: usize,
    category_index: usize,
    noise_dim: usize,
    rng: &mut R,
) -> Result<LatentCode> {
    if noise_dim == 0 {
        return input("noise_dim must be positive");
    }
    let category = one_hot(num_categories, category_index)?;
    let noise = (0..noise_dim).map(|_| rng.sample(StandardNormal)).collect();
    Ok(LatentCode { noise, category })
}

/// Stacks codes into `([N, noise_dim], [N, num_categories])` tensors.
pub fn codes_to_tensors(codes: &[LatentCode]) -> Result<(Tensor, Tensor)> {
    let first = match codes.first() {
        Some(c) => c,
        None => return input("empty latent batch"),
    };
    let (nz, nc) = (first.noise_dim(), first.num_categories());
    if codes
        .iter()
        .any(|c| c.noise_dim() != nz || c.num_categories() != nc)
    {
        return input("latent batch mixes dimensions");
    }
    let n = codes.len() as i64;
    let noise: Vec<f32> = codes.iter().flat_map(|c| c.noise.iter().copied()).collect();
    let cats: Vec<f32> = codes.iter().flat_map(|c| c.category.iter().copied()).collect();
    Ok((
        Tensor::from_slice(&noise).view([n, nz as i64]),
        Tensor::from_slice(&cats).view([n, nc as i64]),
    ))
}
