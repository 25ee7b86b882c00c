//! Scatters background-category sketches over their scene regions.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::retrieval::SketchPool;
use super::Split;
use crate::error::{data, input, Result};
use crate::imaging::{BBox, EdgeImage};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlacementConfig {
    /// Mask area (pixels) per placed sketch.
    pub area_per_sketch: usize,
    /// Side of a placed sketch before clipping.
    pub sketch_side: usize,
}

impl Default for PlacementConfig {
    fn default() -> Self {
        PlacementConfig {
            area_per_sketch: 32 * 32,
            sketch_side: 32,
        }
    }
}

/// Binary region of one background category over a square canvas.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionMask {
    pub category: String,
    pub canvas: usize,
    pub mask: Vec<bool>,
}

impl RegionMask {
    pub fn area(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        x < self.canvas && y < self.canvas && self.mask[y * self.canvas + x]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Placement {
    pub category: String,
    pub sketch_id: String,
    /// Sampled mask pixel the sketch is centred on.
    pub center: (usize, usize),
    /// Sketch footprint clipped to the canvas.
    pub bbox: BBox,
}

impl Placement {
    /// Top-left corner of the unclipped footprint, possibly off-canvas.
    pub fn origin(&self, side: usize) -> (isize, isize) {
        (
            self.center.0 as isize - (side / 2) as isize,
            self.center.1 as isize - (side / 2) as isize,
        )
    }
}

/// Places `⌊area / area_per_sketch⌋` randomly chosen sketches per region,
/// each centred on a uniformly sampled mask pixel.
pub fn composite_background<R: Rng + ?Sized>(
    regions: &[RegionMask],
    pool: &SketchPool,
    split: Split,
    config: &PlacementConfig,
    rng: &mut R,
) -> Result<Vec<Placement>> {
    if config.area_per_sketch == 0 || config.sketch_side == 0 {
        return input("placement density and sketch side must be positive");
    }
    let mut out = Vec::new();
    for region in regions {
        let n = region.canvas;
        if region.mask.len() != n * n {
            return input(format!("{} mask does not match its {n}x{n} canvas", region.category));
        }
        let pixels: Vec<usize> = (0..n * n).filter(|&i| region.mask[i]).collect();
        let count = pixels.len() / config.area_per_sketch;
        if count == 0 {
            continue;
        }
        let candidates = pool.candidates(&region.category, split);
        if candidates.is_empty() {
            return data(format!("no {} sketches in the {} pool", region.category, split.as_str()));
        }
        let half = config.sketch_side / 2;
        for _ in 0..count {
            let p = pixels[rng.random_range(0..pixels.len())];
            let (cx, cy) = (p % n, p / n);
            let entry = &pool.entries()[candidates[rng.random_range(0..candidates.len())]];
            let bbox = BBox {
                x1: cx.saturating_sub(half),
                y1: cy.saturating_sub(half),
                x2: (cx + config.sketch_side - half).min(n),
                y2: (cy + config.sketch_side - half).min(n),
            };
            out.push(Placement {
                category: region.category.clone(),
                sketch_id: entry.id.clone(),
                center: (cx, cy),
                bbox,
            });
        }
    }
    Ok(out)
}

/// Draws the placements onto a blank canvas.
pub fn render_placements(placements: &[Placement], pool: &SketchPool, canvas: usize, side: usize) -> Result<EdgeImage> {
    let mut out = EdgeImage::blank(canvas);
    for p in placements {
        let Some(entry) = pool.entries().iter().find(|e| e.id == p.sketch_id) else {
            return data(format!("placed sketch {} is not in the pool", p.sketch_id));
        };
        let (x0, y0) = p.origin(side);
        out.overlay(&entry.sketch.resize(side), x0, y0);
    }
    Ok(out)
}
