//! Dataset synthesis: edge extraction, sketch retrieval, background-sketch
//! placement, five-tuple records and reproducible loaders.

pub mod build;
pub mod edges;
pub mod gabor;
pub mod loader;
pub mod placement;
pub mod retrieval;
pub mod toy;

use serde::{Deserialize, Serialize};

use crate::error::{input, Result};
use crate::imaging::{BBox, ColorImage, EdgeImage};

pub use edges::{extract_edges, EdgeStyle};
pub use gabor::{gabor_features, GaborBank, GaborFeature};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => input(format!("unknown split {other:?} (expected train or test)")),
        }
    }
}

/// Edge map tagged with the extractor that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct StyledEdge {
    pub style: EdgeStyle,
    pub edge: EdgeImage,
}

/// Object-level record: image, matched freehand sketch, extracted edge maps.
#[derive(Debug, Clone)]
pub struct ObjectTriplet {
    pub image: ColorImage,
    pub sketch: EdgeImage,
    pub edge_maps: Vec<StyledEdge>,
    pub category: usize,
    /// Identity of the retrieved sketch in its pool.
    pub sketch_id: String,
}

impl ObjectTriplet {
    pub fn validate(&self) -> Result<()> {
        let s = self.sketch.size();
        if self.image.height() != s || self.image.width() != s {
            return input("object image and sketch differ in resolution");
        }
        if self.edge_maps.is_empty() {
            return input("object triplet has no edge map");
        }
        if self.edge_maps.iter().any(|e| e.edge.size() != s) {
            return input("edge map resolution differs from sketch");
        }
        Ok(())
    }

    pub fn resolution(&self) -> usize {
        self.sketch.size()
    }

    pub fn edge(&self, style: EdgeStyle) -> Option<&EdgeImage> {
        self.edge_maps.iter().find(|e| e.style == style).map(|e| &e.edge)
    }
}

/// In-memory collection of object triplets with their category names.
#[derive(Debug, Clone)]
pub struct ObjectStore {
    pub categories: Vec<String>,
    pub items: Vec<ObjectTriplet>,
}

impl ObjectStore {
    pub fn resolution(&self) -> Option<usize> {
        self.items.first().map(ObjectTriplet::resolution)
    }

    pub fn count_per_category(&self) -> Vec<usize> {
        let mut counts = vec![0; self.categories.len()];
        for it in &self.items {
            if let Some(c) = counts.get_mut(it.category) {
                *c += 1;
            }
        }
        counts
    }
}

/// Instance-level annotation of a scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceAnnotation {
    pub category: String,
    pub bbox: BBox,
    /// Row-major binary mask over the whole canvas (`canvas * canvas`).
    #[serde(skip)]
    pub mask: Vec<bool>,
}

impl InstanceAnnotation {
    /// Checks bbox containment and that mask pixels lie in the bbox grown by `margin`.
    pub fn validate(&self, canvas: usize, margin: usize) -> Result<()> {
        if !self.bbox.fits(canvas, canvas) {
            return input(format!("bbox {:?} outside {canvas}x{canvas} canvas", self.bbox));
        }
        if self.mask.is_empty() {
            return Ok(());
        }
        if self.mask.len() != canvas * canvas {
            return input("instance mask does not match canvas size");
        }
        let b = self.bbox;
        for (i, _) in self.mask.iter().enumerate().filter(|(_, &m)| m) {
            let (x, y) = (i % canvas, i / canvas);
            if x + margin < b.x1 || x >= b.x2 + margin || y + margin < b.y1 || y >= b.y2 + margin {
                return input(format!("mask pixel ({x}, {y}) outside bbox {b:?}"));
            }
        }
        Ok(())
    }
}

/// Raw scene before dataset assembly: an image plus per-instance masks.
#[derive(Debug, Clone)]
pub struct SourceScene {
    pub id: String,
    pub image: ColorImage,
    pub instances: Vec<SourceInstance>,
}

#[derive(Debug, Clone)]
pub struct SourceInstance {
    pub category: String,
    /// Visible pixels, row-major over the canvas.
    pub mask: Vec<bool>,
    /// Pixel count of the instance had it been fully visible.
    pub full_area: usize,
}

impl SourceInstance {
    pub fn bbox(&self, width: usize) -> Option<BBox> {
        let mut b: Option<BBox> = None;
        for (i, _) in self.mask.iter().enumerate().filter(|(_, &m)| m) {
            let (x, y) = (i % width, i / width);
            let p = BBox { x1: x, y1: y, x2: x + 1, y2: y + 1 };
            b = Some(b.map_or(p, |b| b.union(&p)));
        }
        b
    }
}
