//! Scene generation: split a labeled scene sketch into instances, generate
//! every foreground object, paste the patches, then complete the background.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::background::{generate_background, paste, BackgroundInput, BackgroundModel, NEUTRAL_FILL};
use crate::data::InstanceAnnotation;
use crate::error::{input, Error, Result};
use crate::imaging::{stroke_mask, BBox, ColorImage, EdgeImage};
use crate::model::ObjectModel;

/// Pen radius, in pixels, used to rasterize strokes.
pub const STROKE_RADIUS: f32 = 1.0;

/// Smallest foreground box area; smaller groups are grown around their centre.
pub const MIN_FOREGROUND_AREA: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stroke {
    pub points: Vec<(f32, f32)>,
    pub category: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSketch {
    pub canvas: EdgeImage,
    pub strokes: Option<Vec<Stroke>>,
    /// Ground-truth instances, present for dataset scenes.
    pub annotations: Option<Vec<InstanceAnnotation>>,
}

impl SceneSketch {
    /// Rasterizes `strokes` onto a blank `size`×`size` canvas.
    pub fn from_strokes(size: usize, strokes: Vec<Stroke>) -> Result<Self> {
        if size == 0 {
            return input("canvas size must be positive");
        }
        let mut canvas = EdgeImage::blank(size);
        for (i, s) in strokes.iter().enumerate() {
            if let Some(p) = s.points.iter().find(|p| !inside(**p, size)) {
                return input(format!("stroke {i} point ({}, {}) outside the {size}x{size} canvas", p.0, p.1));
            }
            canvas.draw_polyline(&s.points, STROKE_RADIUS);
        }
        Ok(SceneSketch {
            canvas,
            strokes: Some(strokes),
            annotations: None,
        })
    }

    pub fn from_annotated(canvas: EdgeImage, annotations: Vec<InstanceAnnotation>) -> Self {
        SceneSketch {
            canvas,
            strokes: None,
            annotations: Some(annotations),
        }
    }

    pub fn size(&self) -> usize {
        self.canvas.size()
    }
}

fn inside((x, y): (f32, f32), size: usize) -> bool {
    x.is_finite() && y.is_finite() && x >= 0.0 && y >= 0.0 && x <= size as f32 && y <= size as f32
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentMode {
    Oracle,
    LabeledStrokes,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategorySets {
    pub foreground: Vec<String>,
    pub background: Vec<String>,
}

impl CategorySets {
    fn role(&self, category: &str) -> Option<bool> {
        if self.foreground.iter().any(|c| c == category) {
            Some(true)
        } else if self.background.iter().any(|c| c == category) {
            Some(false)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SegmentationResult {
    pub foreground: Vec<InstanceAnnotation>,
    pub background: Vec<InstanceAnnotation>,
}

fn mask_bbox(mask: &[bool], n: usize) -> Option<BBox> {
    let mut b: Option<BBox> = None;
    for (i, _) in mask.iter().enumerate().filter(|(_, &m)| m) {
        let p = BBox { x1: i % n, y1: i / n, x2: i % n + 1, y2: i / n + 1 };
        b = Some(b.map_or(p, |b| b.union(&p)));
    }
    b
}

/// Grows `b` symmetrically until it covers at least `min_area` pixels.
fn grow_to(b: BBox, min_area: usize, n: usize) -> BBox {
    let mut b = b;
    while b.area() < min_area && (b.width() < n || b.height() < n) {
        b = BBox {
            x1: b.x1.saturating_sub(1),
            y1: b.y1.saturating_sub(1),
            x2: (b.x2 + 1).min(n),
            y2: (b.y2 + 1).min(n),
        };
    }
    b
}

/// Groups strokes of one category whose boxes overlap, transitively.
fn group_strokes(boxes: &[BBox]) -> Vec<Vec<usize>> {
    let mut parent: Vec<usize> = (0..boxes.len()).collect();
    fn find(p: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while p[r] != r {
            r = p[r];
        }
        let mut j = i;
        while p[j] != r {
            let next = p[j];
            p[j] = r;
            j = next;
        }
        r
    }
    for i in 0..boxes.len() {
        for j in i + 1..boxes.len() {
            if boxes[i].intersects(&boxes[j]) {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut slot = vec![usize::MAX; boxes.len()];
    for i in 0..boxes.len() {
        let r = find(&mut parent, i);
        if slot[r] == usize::MAX {
            slot[r] = groups.len();
            groups.push(Vec::new());
        }
        groups[slot[r]].push(i);
    }
    groups
}

pub fn segment_scene(sketch: &SceneSketch, mode: SegmentMode, categories: &CategorySets) -> Result<SegmentationResult> {
    let n = sketch.size();
    let mut out = SegmentationResult::default();
    match mode {
        SegmentMode::Oracle => {
            let Some(anns) = &sketch.annotations else {
                return input("oracle segmentation needs stored annotations");
            };
            for a in anns {
                match categories.role(&a.category) {
                    Some(true) => out.foreground.push(a.clone()),
                    Some(false) => out.background.push(a.clone()),
                    None => return input(format!("annotation category {:?} is not served", a.category)),
                }
            }
        }
        SegmentMode::LabeledStrokes => {
            let Some(strokes) = &sketch.strokes else {
                return input("labeled-stroke segmentation needs stroke labels");
            };
            let mut names: Vec<&str> = Vec::new();
            for s in strokes {
                if categories.role(&s.category).is_none() {
                    return input(format!("stroke category {:?} is not served", s.category));
                }
                if !names.contains(&s.category.as_str()) {
                    names.push(&s.category);
                }
            }
            for cat in names {
                let members: Vec<(Vec<bool>, BBox)> = strokes
                    .iter()
                    .filter(|s| s.category == cat)
                    .filter_map(|s| {
                        let m = stroke_mask(n, n, &s.points, STROKE_RADIUS);
                        mask_bbox(&m, n).map(|b| (m, b))
                    })
                    .collect();
                let boxes: Vec<BBox> = members.iter().map(|(_, b)| *b).collect();
                let fg = categories.role(cat) == Some(true);
                for g in group_strokes(&boxes) {
                    let mut mask = vec![false; n * n];
                    for &i in &g {
                        for (m, &v) in mask.iter_mut().zip(&members[i].0) {
                            *m |= v;
                        }
                    }
                    let bbox = g.iter().skip(1).fold(boxes[g[0]], |b, &i| b.union(&boxes[i]));
                    let ann = InstanceAnnotation {
                        category: cat.to_string(),
                        bbox: if fg { grow_to(bbox, MIN_FOREGROUND_AREA, n) } else { bbox },
                        mask,
                    };
                    if fg {
                        out.foreground.push(ann);
                    } else {
                        out.background.push(ann);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Trained object and background stages served together.
#[derive(Debug)]
pub struct ModelBundle {
    pub object: ObjectModel,
    pub background: BackgroundModel,
}

impl ModelBundle {
    pub fn load(object: &Path, background: &Path) -> Result<Self> {
        Ok(ModelBundle {
            object: ObjectModel::load(object)?,
            background: BackgroundModel::load(background)?,
        })
    }

    pub fn categories(&self) -> CategorySets {
        CategorySets {
            foreground: self.object.categories.clone(),
            background: self.background.config.categories.clone(),
        }
    }

    fn check_trained(&self) -> Result<()> {
        if self.object.epochs_trained == 0 || self.background.epochs_trained == 0 {
            return Err(Error::State("scene generation needs trained object and background models".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct InstancePatch {
    pub category: String,
    pub bbox: BBox,
    /// Instance sketch at object resolution, as fed to the encoder.
    pub sketch: EdgeImage,
    /// Object-stage output before resizing to the box.
    pub image: ColorImage,
}

#[derive(Debug, Clone)]
pub struct SceneOutput {
    pub image: ColorImage,
    pub foreground_canvas: ColorImage,
    pub background_input: BackgroundInput,
    /// Same order as the segmentation's foreground list.
    pub patches: Vec<InstancePatch>,
    /// Indices into `patches`, in paste order.
    pub paste_order: Vec<usize>,
}

/// Sketch pixels under `mask`, others blank.
fn masked(canvas: &EdgeImage, keep: impl Fn(usize) -> bool) -> EdgeImage {
    let n = canvas.size();
    let mut out = EdgeImage::blank(n);
    for i in (0..n * n).filter(|&i| keep(i)) {
        out.set(i % n, i / n, canvas.pixels()[i]);
    }
    out
}

/// Instance sketch cropped to its box and resampled to `resolution`.
pub fn instance_sketch(canvas: &EdgeImage, ann: &InstanceAnnotation, resolution: usize) -> Result<EdgeImage> {
    let n = canvas.size();
    ann.validate(n, 0)?;
    let only = if ann.mask.is_empty() {
        canvas.clone()
    } else {
        masked(canvas, |i| ann.mask[i])
    };
    Ok(only.crop(&ann.bbox)?.resize(resolution))
}

/// Pastes `patches` onto a neutral canvas in `order`.
pub fn paste_foreground(size: usize, patches: &[(ColorImage, BBox)], order: &[usize]) -> ColorImage {
    let mut canvas = ColorImage::filled(size, size, [NEUTRAL_FILL; 3]);
    for &i in order {
        let (p, b) = &patches[i];
        paste(&mut canvas, p, b);
    }
    canvas
}

pub fn generate_scene<R: Rng + ?Sized>(
    sketch: &SceneSketch,
    seg: &SegmentationResult,
    bundle: &ModelBundle,
    rng: &mut R,
) -> Result<SceneOutput> {
    bundle.check_trained()?;
    let n = sketch.size();
    let res = bundle.object.resolution();
    let mut patches = Vec::with_capacity(seg.foreground.len());
    for ann in &seg.foreground {
        let c = bundle
            .object
            .category_index(&ann.category)
            .ok_or_else(|| Error::Input(format!("object model has no category {:?}", ann.category)))?;
        let s = instance_sketch(&sketch.canvas, ann, res)?;
        let image = bundle.object.infer_object(&s, c)?;
        patches.push(InstancePatch {
            category: ann.category.clone(),
            bbox: ann.bbox,
            sketch: s,
            image,
        });
    }
    let mut order: Vec<usize> = (0..patches.len()).collect();
    order.shuffle(rng);
    let boxed: Vec<(ColorImage, BBox)> = patches.iter().map(|p| (p.image.clone(), p.bbox)).collect();
    let foreground_canvas = paste_foreground(n, &boxed, &order);

    let background_sketch = if seg.background.iter().all(|a| a.mask.is_empty()) && !seg.background.is_empty() {
        sketch.canvas.clone()
    } else {
        masked(&sketch.canvas, |i| seg.background.iter().any(|a| a.mask.get(i) == Some(&true)))
    };
    let background_input = BackgroundInput::new(foreground_canvas.clone(), background_sketch)?;
    let r = bundle.background.resolution();
    let image = if r == n {
        generate_background(&bundle.background, &background_input)?
    } else {
        let scaled = BackgroundInput::new(
            background_input.canvas.resize(r, r),
            background_input.background_sketch.resize(r),
        )?;
        generate_background(&bundle.background, &scaled)?.resize(n, n)
    };
    Ok(SceneOutput {
        image,
        foreground_canvas,
        background_input,
        patches,
        paste_order: order,
    })
}
