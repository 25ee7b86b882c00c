//! Nearest-neighbour sketch retrieval in Gabor feature space.

use std::path::Path;

use crate::data::{extract_edges, EdgeStyle, GaborBank, GaborFeature, Split};
use crate::error::{data, input, Error, Result};
use crate::imaging::{ColorImage, EdgeImage};

#[derive(Debug, Clone, PartialEq)]
pub struct PoolSketch {
    pub id: String,
    pub category: String,
    pub split: Split,
    pub sketch: EdgeImage,
}

/// Sketch collection with cached features. Entry order is the stable index
/// used for tie-breaking.
#[derive(Debug, Clone)]
pub struct SketchPool {
    bank: GaborBank,
    entries: Vec<PoolSketch>,
    features: Vec<GaborFeature>,
}

/// Index and distance of the closest candidate; the first wins on ties.
pub fn nearest(query: &GaborFeature, candidates: &[&GaborFeature]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, c) in candidates.iter().enumerate() {
        let d = query.distance(c);
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((i, d));
        }
    }
    best
}

impl SketchPool {
    pub fn new(bank: GaborBank, entries: Vec<PoolSketch>) -> Result<Self> {
        if let Some(first) = entries.first() {
            let s = first.sketch.size();
            if let Some(bad) = entries.iter().find(|e| e.sketch.size() != s) {
                return input(format!("pool sketch {} is not {s}x{s}", bad.id));
            }
        }
        let features = entries.iter().map(|e| bank.features(&e.sketch)).collect();
        Ok(SketchPool { bank, entries, features })
    }

    pub fn bank(&self) -> &GaborBank {
        &self.bank
    }

    pub fn entries(&self) -> &[PoolSketch] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn resolution(&self) -> Option<usize> {
        self.entries.first().map(|e| e.sketch.size())
    }

    pub fn candidates(&self, category: &str, split: Split) -> Vec<usize> {
        (0..self.entries.len())
            .filter(|&i| self.entries[i].category == category && self.entries[i].split == split)
            .collect()
    }

    /// Closest pool sketch to an edge map, among those of `category` in `split`.
    pub fn retrieve_edge(&self, edge: &EdgeImage, category: &str, split: Split) -> Result<(&PoolSketch, f64)> {
        let idx = self.candidates(category, split);
        if idx.is_empty() {
            return data(format!("sketch pool has no {category:?} sketches in the {} split", split.as_str()));
        }
        let res = self.resolution().expect("non-empty");
        let query = if edge.size() == res {
            self.bank.features(edge)
        } else {
            self.bank.features(&edge.resize(res))
        };
        let feats: Vec<&GaborFeature> = idx.iter().map(|&i| &self.features[i]).collect();
        let (k, d) = nearest(&query, &feats).expect("non-empty candidates");
        Ok((&self.entries[idx[k]], d))
    }

    /// Reads `dir/{split}/{category}/*.png`; ids are `category/file-stem`.
    pub fn load_dir(dir: &Path, bank: GaborBank, resolution: usize) -> Result<Self> {
        let mut entries = Vec::new();
        for split in [Split::Train, Split::Test] {
            let split_dir = dir.join(split.as_str());
            if !split_dir.is_dir() {
                continue;
            }
            for cat in sorted_children(&split_dir)? {
                if !cat.is_dir() {
                    continue;
                }
                let category = cat.file_name().unwrap_or_default().to_string_lossy().into_owned();
                for file in sorted_children(&cat)? {
                    if file.extension().is_none_or(|e| e != "png") {
                        continue;
                    }
                    let stem = file.file_stem().unwrap_or_default().to_string_lossy();
                    let sketch = EdgeImage::load_png(&file)?.resize(resolution);
                    entries.push(PoolSketch {
                        id: format!("{category}/{stem}"),
                        category: category.clone(),
                        split,
                        sketch,
                    });
                }
            }
        }
        if entries.is_empty() {
            return data(format!("no sketches found under {}", dir.display()));
        }
        SketchPool::new(bank, entries)
    }
}

fn sorted_children(dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    let mut out: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    out.sort();
    Ok(out)
}

/// Extracts the standard edge map of `object_image` and returns the closest
/// same-category sketch of the split with its feature distance.
pub fn retrieve_sketch<'a>(
    object_image: &ColorImage,
    category: &str,
    pool: &'a SketchPool,
    split: Split,
) -> Result<(&'a PoolSketch, f64)> {
    let edge = extract_edges(object_image, EdgeStyle::Standard);
    pool.retrieve_edge(&edge, category, split)
}
