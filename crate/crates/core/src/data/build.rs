//! Assembles the five record kinds from annotated source scenes and writes
//! them under a dataset root.
//!
//! ```text
//! root/
//!   manifest.json
//!   objects/{split}/{category}/{scene}_{k}_{image,sketch,xdog,standard}.png
//!   background_pairs/{split}/{category}/{scene}_{j}_{image,sketch}.png
//!   composites/{split}/{scene}_{canvas,sketch}.png
//!   scenes/{split}/{scene}_{image,sketch}.png
//!   segmentation/{split}/{scene}.json            annotation records
//!   segmentation/{split}/{scene}_labels.png      stroke labels, palette index + 1
//!   segmentation/{split}/{scene}_regions.png     source region labels
//!   segmentation/{split}/{scene}_inst{a}.png     per-annotation stroke mask
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::placement::{composite_background, render_placements, Placement, PlacementConfig, RegionMask};
use super::retrieval::SketchPool;
use super::{extract_edges, EdgeStyle, SourceScene, Split};
use crate::background::compose_background_input;
use crate::error::{data, Error, Result};
use crate::imaging::{save_label_png, BBox, ColorImage, EdgeImage};
use crate::layers::sub_seed;

pub const MANIFEST: &str = "manifest.json";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BuildConfig {
    pub foreground: Vec<String>,
    pub background: Vec<String>,
    pub object_resolution: usize,
    pub train_fraction: f64,
    /// Foreground instances whose visible share of their full area is below
    /// this get no object triplet.
    pub min_visible_fraction: f64,
    pub placement: PlacementConfig,
    pub seed: u64,
}

impl Default for BuildConfig {
    fn default() -> Self {
        BuildConfig {
            foreground: Vec::new(),
            background: Vec::new(),
            object_resolution: 64,
            train_fraction: 0.8,
            min_visible_fraction: 0.7,
            placement: PlacementConfig::default(),
            seed: 0,
        }
    }
}

impl BuildConfig {
    /// Foreground then background, the order of the label palette.
    pub fn palette(&self) -> Vec<String> {
        self.foreground.iter().chain(&self.background).cloned().collect()
    }

    pub fn label_of(&self, category: &str) -> Option<u8> {
        self.palette().iter().position(|c| c == category).map(|i| i as u8 + 1)
    }

    pub fn is_foreground(&self, category: &str) -> bool {
        self.foreground.iter().any(|c| c == category)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub scenes: usize,
    pub objects: BTreeMap<String, usize>,
    pub background_pairs: BTreeMap<String, usize>,
    /// Foreground instances left out of the object records as occluded.
    pub skipped_occluded: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForegroundEntry {
    pub index: usize,
    pub category: String,
    pub sketch_id: String,
    /// Square instance frame clipped to the canvas.
    pub bbox: BBox,
    pub visible_fraction: f64,
    /// Whether an object triplet was written for this instance.
    pub triplet: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub category: String,
    pub bbox: BBox,
    /// Relative to the dataset root.
    pub mask: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneEntry {
    pub id: String,
    pub split: Split,
    pub seed: u64,
    pub foreground: Vec<ForegroundEntry>,
    pub placements: Vec<Placement>,
    /// Placement indices that produced a background pair (unclipped ones).
    pub background_pairs: Vec<usize>,
    pub annotations: Vec<AnnotationRecord>,
}

impl SceneEntry {
    /// Every pool sketch this scene's sketch is composed of.
    pub fn sketch_ids(&self) -> impl Iterator<Item = &str> {
        self.foreground
            .iter()
            .map(|f| f.sketch_id.as_str())
            .chain(self.placements.iter().map(|p| p.sketch_id.as_str()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: u32,
    pub source: String,
    pub canvas: usize,
    pub config: BuildConfig,
    pub counts: BTreeMap<Split, SplitCounts>,
    /// Pool sketch ids by split.
    pub pool: BTreeMap<Split, Vec<String>>,
    pub scenes: Vec<SceneEntry>,
}

impl Manifest {
    pub fn scenes_in(&self, split: Split) -> impl Iterator<Item = &SceneEntry> {
        self.scenes.iter().filter(move |s| s.split == split)
    }

    pub fn total_scenes(&self) -> usize {
        self.counts.values().map(|c| c.scenes).sum()
    }
}

pub fn object_paths(split: Split, category: &str, scene: &str, k: usize) -> [String; 4] {
    let base = format!("objects/{}/{category}/{scene}_{k}", split.as_str());
    ["image", "sketch", "xdog", "standard"].map(|s| format!("{base}_{s}.png"))
}

pub fn background_pair_paths(split: Split, category: &str, scene: &str, j: usize) -> [String; 2] {
    let base = format!("background_pairs/{}/{category}/{scene}_{j}", split.as_str());
    ["image", "sketch"].map(|s| format!("{base}_{s}.png"))
}

pub fn composite_paths(split: Split, scene: &str) -> [String; 2] {
    let base = format!("composites/{}/{scene}", split.as_str());
    ["canvas", "sketch"].map(|s| format!("{base}_{s}.png"))
}

pub fn scene_paths(split: Split, scene: &str) -> [String; 2] {
    let base = format!("scenes/{}/{scene}", split.as_str());
    ["image", "sketch"].map(|s| format!("{base}_{s}.png"))
}

pub fn segmentation_base(split: Split, scene: &str) -> String {
    format!("segmentation/{}/{scene}", split.as_str())
}

/// Square frame around a visible bbox: `(origin x, origin y, side)`; the
/// origin may be off-canvas.
fn square_frame(b: &BBox) -> (isize, isize, usize) {
    let side = b.width().max(b.height());
    let ox = b.x1 as isize - ((side - b.width()) / 2) as isize;
    let oy = b.y1 as isize - ((side - b.height()) / 2) as isize;
    (ox, oy, side)
}

fn clip_frame((ox, oy, side): (isize, isize, usize), canvas: usize) -> BBox {
    let c = canvas as isize;
    let clip = |v: isize| v.clamp(0, c) as usize;
    BBox {
        x1: clip(ox),
        y1: clip(oy),
        x2: clip(ox + side as isize),
        y2: clip(oy + side as isize),
    }
}

/// The instance's visible pixels on white, framed square.
fn object_crop(image: &ColorImage, mask: &[bool], (ox, oy, side): (isize, isize, usize)) -> ColorImage {
    let n = image.width() as isize;
    ColorImage::from_fn(side, side, |x, y| {
        let (sx, sy) = (ox + x as isize, oy + y as isize);
        if sx >= 0 && sy >= 0 && sx < n && sy < n && mask[(sy * n + sx) as usize] {
            image.get(sx as usize, sy as usize)
        } else {
            [1.0; 3]
        }
    })
}

fn ink_mask(e: &EdgeImage) -> Vec<bool> {
    e.pixels().iter().map(|&v| v < 0.0).collect()
}

fn mask_bbox(mask: &[bool], n: usize) -> Option<BBox> {
    let mut b: Option<BBox> = None;
    for (i, _) in mask.iter().enumerate().filter(|(_, &m)| m) {
        let p = BBox { x1: i % n, y1: i / n, x2: i % n + 1, y2: i / n + 1 };
        b = Some(b.map_or(p, |b| b.union(&p)));
    }
    b
}

fn check_sources(sources: &[SourceScene], config: &BuildConfig) -> Result<usize> {
    let Some(first) = sources.first() else {
        return data("dataset source has no scenes");
    };
    let n = first.image.width();
    let mut offenders = BTreeSet::new();
    let mut ids = BTreeSet::new();
    for s in sources {
        if s.image.width() != n || s.image.height() != n {
            return data(format!("scene {} is not {n}x{n}", s.id));
        }
        if !ids.insert(&s.id) {
            return data(format!("duplicate scene id {}", s.id));
        }
        if s.instances.is_empty() {
            return data(format!("scene {} has no instance annotations", s.id));
        }
        for inst in &s.instances {
            if config.label_of(&inst.category).is_none() {
                offenders.insert(format!("{}: {}", s.id, inst.category));
            }
            if inst.mask.len() != n * n {
                return data(format!("scene {}: {} mask does not cover the canvas", s.id, inst.category));
            }
        }
    }
    if !offenders.is_empty() {
        let list: Vec<String> = offenders.into_iter().collect();
        return data(format!("annotations reference unknown categories: {}", list.join(", ")));
    }
    Ok(n)
}

/// Train/test assignment: a seeded shuffle of scene ids, the first
/// `round(train_fraction * n)` go to train.
pub fn assign_splits(ids: &[&str], train_fraction: f64, seed: u64) -> BTreeMap<String, Split> {
    let mut order: Vec<&str> = ids.to_vec();
    order.sort_unstable();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(sub_seed(seed, "split")));
    let n_train = (train_fraction * order.len() as f64).round() as usize;
    order
        .iter()
        .enumerate()
        .map(|(i, id)| (id.to_string(), if i < n_train { Split::Train } else { Split::Test }))
        .collect()
}

struct Writer<'a> {
    root: &'a Path,
}

impl Writer<'_> {
    fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }
    fn color(&self, rel: &str, im: &ColorImage) -> Result<()> {
        im.save_png(&self.path(rel))
    }
    fn edge(&self, rel: &str, e: &EdgeImage) -> Result<()> {
        e.save_png(&self.path(rel))
    }
    fn labels(&self, rel: &str, n: usize, l: &[u8]) -> Result<()> {
        save_label_png(&self.path(rel), n, l)
    }
}

fn build_scene(
    src: &SourceScene,
    split: Split,
    pool: &SketchPool,
    config: &BuildConfig,
    w: &Writer,
    counts: &mut SplitCounts,
) -> Result<SceneEntry> {
    let n = src.image.width();
    let seed = sub_seed(config.seed, &src.id);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let res = config.object_resolution;

    let mut region_labels = vec![0u8; n * n];
    let mut regions = Vec::new();
    for inst in src.instances.iter().filter(|i| !config.is_foreground(&i.category)) {
        let l = config.label_of(&inst.category).expect("checked");
        for (lab, _) in region_labels.iter_mut().zip(&inst.mask).filter(|(_, &m)| m) {
            *lab = l;
        }
        regions.push(RegionMask {
            category: inst.category.clone(),
            canvas: n,
            mask: inst.mask.clone(),
        });
    }

    // Foreground: object triplets and sketches framed at the instance.
    let mut foreground = Vec::new();
    let mut fg_sketches = Vec::new();
    for (k, inst) in src.instances.iter().enumerate() {
        if !config.is_foreground(&inst.category) {
            continue;
        }
        let Some(vis) = inst.bbox(n) else { continue };
        let l = config.label_of(&inst.category).expect("checked");
        for (lab, _) in region_labels.iter_mut().zip(&inst.mask).filter(|(_, &m)| m) {
            *lab = l;
        }
        let frame = square_frame(&vis);
        let crop = object_crop(&src.image, &inst.mask, frame).resize(res, res);
        let standard = extract_edges(&crop, EdgeStyle::Standard);
        let (hit, _) = pool.retrieve_edge(&standard, &inst.category, split)?;
        let visible = inst.mask.iter().filter(|&&m| m).count();
        let visible_fraction = visible as f64 / inst.full_area.max(1) as f64;
        let triplet = visible_fraction >= config.min_visible_fraction;
        if triplet {
            let [pi, ps, px, pstd] = object_paths(split, &inst.category, &src.id, k);
            w.color(&pi, &crop)?;
            w.edge(&ps, &hit.sketch.resize(res))?;
            w.edge(&px, &extract_edges(&crop, EdgeStyle::Xdog))?;
            w.edge(&pstd, &standard)?;
            *counts.objects.entry(inst.category.clone()).or_default() += 1;
        } else {
            counts.skipped_occluded += 1;
        }
        let mut layer = EdgeImage::blank(n);
        layer.overlay(&hit.sketch.resize(frame.2), frame.0, frame.1);
        fg_sketches.push((inst.category.clone(), layer));
        foreground.push(ForegroundEntry {
            index: k,
            category: inst.category.clone(),
            sketch_id: hit.id.clone(),
            bbox: clip_frame(frame, n),
            visible_fraction,
            triplet,
        });
    }

    // Background: sketches scattered over the regions.
    let placements = composite_background(&regions, pool, split, &config.placement, &mut rng)?;
    let side = config.placement.sketch_side;
    let background_sketch = render_placements(&placements, pool, n, side)?;
    let mut background_pairs = Vec::new();
    for (j, p) in placements.iter().enumerate() {
        if p.bbox.width() != side || p.bbox.height() != side {
            continue;
        }
        let [pi, ps] = background_pair_paths(split, &p.category, &src.id, j);
        w.color(&pi, &src.image.crop(&p.bbox)?)?;
        w.edge(&ps, &background_sketch.crop(&p.bbox)?)?;
        *counts.background_pairs.entry(p.category.clone()).or_default() += 1;
        background_pairs.push(j);
    }

    // Scene sketch and its stroke labels; foreground strokes win.
    let mut scene_sketch = background_sketch.clone();
    let mut stroke_labels = vec![0u8; n * n];
    for p in &placements {
        let mut layer = EdgeImage::blank(n);
        let (x0, y0) = p.origin(side);
        let entry = pool.entries().iter().find(|e| e.id == p.sketch_id).expect("placed from pool");
        layer.overlay(&entry.sketch.resize(side), x0, y0);
        let l = config.label_of(&p.category).expect("checked");
        for (lab, _) in stroke_labels.iter_mut().zip(ink_mask(&layer)).filter(|(_, m)| *m) {
            *lab = l;
        }
    }
    for (cat, layer) in &fg_sketches {
        scene_sketch.overlay(layer, 0, 0);
        let l = config.label_of(cat).expect("checked");
        for (lab, _) in stroke_labels.iter_mut().zip(ink_mask(layer)).filter(|(_, m)| *m) {
            *lab = l;
        }
    }

    // Foreground image & background sketch composite.
    let patches = foreground
        .iter()
        .map(|f| Ok((src.image.crop(&f.bbox)?, f.bbox)))
        .collect::<Result<Vec<_>>>()?;
    let composite = compose_background_input(&patches, &background_sketch, n)?;
    let [cc, cs] = composite_paths(split, &src.id);
    w.color(&cc, &composite.canvas)?;
    w.edge(&cs, &composite.background_sketch)?;
    let [si, ss] = scene_paths(split, &src.id);
    w.color(&si, &src.image)?;
    w.edge(&ss, &scene_sketch)?;

    // Segmentation: one annotation per foreground instance, one per
    // background category with placements.
    let seg = segmentation_base(split, &src.id);
    let mut annotations = Vec::new();
    let mut emit = |category: &str, bbox: BBox, mask: Vec<bool>| -> Result<()> {
        let rel = format!("{seg}_inst{}.png", annotations.len());
        let labels: Vec<u8> = mask.iter().map(|&m| if m { 255 } else { 0 }).collect();
        w.labels(&rel, n, &labels)?;
        annotations.push(AnnotationRecord {
            category: category.to_string(),
            bbox,
            mask: rel,
        });
        Ok(())
    };
    for (f, (_, layer)) in foreground.iter().zip(&fg_sketches) {
        emit(&f.category, f.bbox, ink_mask(layer))?;
    }
    for cat in &config.background {
        let mine: Vec<&Placement> = placements.iter().filter(|p| &p.category == cat).collect();
        if mine.is_empty() {
            continue;
        }
        let mask: Vec<bool> = stroke_labels.iter().map(|&l| Some(l) == config.label_of(cat)).collect();
        let bbox = mask_bbox(&mask, n)
            .unwrap_or_else(|| mine.iter().skip(1).fold(mine[0].bbox, |b, p| b.union(&p.bbox)));
        emit(cat, bbox, mask)?;
    }
    w.labels(&format!("{seg}_labels.png"), n, &stroke_labels)?;
    w.labels(&format!("{seg}_regions.png"), n, &region_labels)?;
    let json = serde_json::to_string_pretty(&annotations)?;
    crate::imaging::write_bytes(&w.path(&format!("{seg}.json")), json.as_bytes())?;

    counts.scenes += 1;
    Ok(SceneEntry {
        id: src.id.clone(),
        split,
        seed,
        foreground,
        placements,
        background_pairs,
        annotations,
    })
}

/// Writes every record kind and the manifest under `root`.
pub fn build_dataset(
    sources: &[SourceScene],
    pool: &SketchPool,
    config: &BuildConfig,
    source_name: &str,
    root: &Path,
) -> Result<Manifest> {
    if config.foreground.is_empty() {
        return Err(Error::Config("no foreground categories configured".into()));
    }
    if !(0.0..=1.0).contains(&config.train_fraction) {
        return Err(Error::Config(format!("train fraction {} outside [0, 1]", config.train_fraction)));
    }
    if pool.resolution().is_some_and(|r| r == 0) || config.object_resolution < 8 {
        return Err(Error::Config("object resolution must be at least 8".into()));
    }
    let canvas = check_sources(sources, config)?;
    std::fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let ids: Vec<&str> = sources.iter().map(|s| s.id.as_str()).collect();
    let splits = assign_splits(&ids, config.train_fraction, config.seed);
    let w = Writer { root };
    let mut counts: BTreeMap<Split, SplitCounts> = [Split::Train, Split::Test].map(|s| (s, SplitCounts::default())).into();
    let mut scenes = Vec::with_capacity(sources.len());
    let mut ordered: Vec<&SourceScene> = sources.iter().collect();
    ordered.sort_by(|a, b| a.id.cmp(&b.id));
    for src in ordered {
        let split = splits[&src.id];
        let c = counts.get_mut(&split).expect("both splits present");
        scenes.push(build_scene(src, split, pool, config, &w, c)?);
    }
    let mut pool_ids: BTreeMap<Split, Vec<String>> = BTreeMap::new();
    for e in pool.entries() {
        pool_ids.entry(e.split).or_default().push(e.id.clone());
    }
    let manifest = Manifest {
        format: FORMAT_VERSION,
        source: source_name.to_string(),
        canvas,
        config: config.clone(),
        counts,
        pool: pool_ids,
        scenes,
    };
    let text = serde_json::to_string_pretty(&manifest)? + "\n";
    crate::imaging::write_bytes(&root.join(MANIFEST), text.as_bytes())?;
    Ok(manifest)
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct AuditReport {
    /// Sketch ids used by scenes of both splits.
    pub shared_sketch_ids: Vec<String>,
    /// Scene sketch ids not listed in the pool of the scene's split.
    pub foreign_sketch_ids: Vec<String>,
    pub placements: usize,
    pub placements_outside_mask: usize,
    pub invalid_annotations: usize,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.shared_sketch_ids.is_empty()
            && self.foreign_sketch_ids.is_empty()
            && self.placements_outside_mask == 0
            && self.invalid_annotations == 0
    }
}

/// Re-checks split purity, placement containment and annotation validity
/// from the files on disk.
pub fn audit_dataset(root: &Path) -> Result<AuditReport> {
    let manifest = super::loader::read_manifest(root)?;
    let mut report = AuditReport::default();
    let mut used: BTreeMap<Split, BTreeSet<&str>> = BTreeMap::new();
    for s in &manifest.scenes {
        let allowed: BTreeSet<&str> = manifest
            .pool
            .get(&s.split)
            .map(|v| v.iter().map(String::as_str).collect())
            .unwrap_or_default();
        for id in s.sketch_ids() {
            used.entry(s.split).or_default().insert(id);
            if !allowed.contains(id) {
                report.foreign_sketch_ids.push(format!("{}: {id}", s.id));
            }
        }
        let regions = root.join(format!("{}_regions.png", segmentation_base(s.split, &s.id)));
        let (n, labels) = crate::imaging::load_label_png(&regions)?;
        for p in &s.placements {
            report.placements += 1;
            let inside = p.center.0 < n
                && p.center.1 < n
                && Some(labels[p.center.1 * n + p.center.0]) == manifest.config.label_of(&p.category);
            if !inside || !p.bbox.fits(n, n) {
                report.placements_outside_mask += 1;
            }
        }
        for a in super::loader::read_annotations(root, s)? {
            if a.validate(n, 0).is_err() {
                report.invalid_annotations += 1;
            }
        }
    }
    if let (Some(tr), Some(te)) = (used.get(&Split::Train), used.get(&Split::Test)) {
        report.shared_sketch_ids = tr.intersection(te).map(|s| s.to_string()).collect();
    }
    Ok(report)
}
