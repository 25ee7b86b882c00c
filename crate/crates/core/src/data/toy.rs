//! Procedural toy corpus: flat-colored circles and triangles, wobbly
//! hand-drawn-looking outlines, and scenes over a striped ground.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::build::{build_dataset, BuildConfig, Manifest};
use crate::data::retrieval::{PoolSketch, SketchPool};
use crate::data::{extract_edges, EdgeStyle, GaborBank, ObjectStore, ObjectTriplet, SourceInstance, SourceScene, Split, StyledEdge};
use crate::error::Result;
use crate::imaging::{BBox, ColorImage, EdgeImage};
use crate::layers::sub_seed;

pub const FOREGROUND: [&str; 2] = ["circle", "triangle"];
pub const BACKGROUND: [&str; 1] = ["stripes"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ShapeKind {
    Circle,
    Triangle,
}

impl ShapeKind {
    pub fn from_index(i: usize) -> ShapeKind {
        if i == 0 {
            ShapeKind::Circle
        } else {
            ShapeKind::Triangle
        }
    }

    pub fn name(self) -> &'static str {
        FOREGROUND[self as usize]
    }

    fn palette(self) -> &'static [[f32; 3]] {
        match self {
            ShapeKind::Circle => &[[0.90, 0.20, 0.15], [0.95, 0.55, 0.10], [0.85, 0.30, 0.45]],
            ShapeKind::Triangle => &[[0.15, 0.35, 0.85], [0.10, 0.60, 0.65], [0.35, 0.25, 0.75]],
        }
    }
}

/// Shape in normalized frame coordinates (`[0, 1]²`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToyObject {
    pub kind: ShapeKind,
    pub cx: f32,
    pub cy: f32,
    pub radius: f32,
    pub rotation: f32,
    /// RGB in `[0, 1]`.
    pub color: [f32; 3],
}

impl ToyObject {
    pub fn sample<R: Rng + ?Sized>(kind: ShapeKind, rng: &mut R) -> Self {
        let pal = kind.palette();
        let base = pal[rng.random_range(0..pal.len())];
        let color = base.map(|c| (c + rng.random_range(-0.06..0.06f32)).clamp(0.0, 1.0));
        ToyObject {
            kind,
            cx: 0.5 + rng.random_range(-0.1..0.1),
            cy: 0.5 + rng.random_range(-0.1..0.1),
            radius: rng.random_range(0.26..0.4),
            rotation: rng.random_range(-0.5..0.5),
            color,
        }
    }

    fn vertices(&self) -> [(f32, f32); 3] {
        std::array::from_fn(|k| {
            let a = self.rotation - std::f32::consts::FRAC_PI_2 + k as f32 * std::f32::consts::TAU / 3.0;
            (self.cx + self.radius * a.cos(), self.cy + self.radius * a.sin())
        })
    }

    pub fn contains(&self, u: f32, v: f32) -> bool {
        match self.kind {
            ShapeKind::Circle => (u - self.cx).powi(2) + (v - self.cy).powi(2) <= self.radius * self.radius,
            ShapeKind::Triangle => {
                let p = self.vertices();
                let side = |a: (f32, f32), b: (f32, f32)| (b.0 - a.0) * (v - a.1) - (b.1 - a.1) * (u - a.0);
                let (d0, d1, d2) = (side(p[0], p[1]), side(p[1], p[2]), side(p[2], p[0]));
                (d0 >= 0.0 && d1 >= 0.0 && d2 >= 0.0) || (d0 <= 0.0 && d1 <= 0.0 && d2 <= 0.0)
            }
        }
    }

    /// Fill color at normalized `v`, with a light top-to-bottom shade.
    fn shade(&self, v: f32) -> [f32; 3] {
        let k = 1.0 - 0.2 * (v - self.cy + self.radius) / (2.0 * self.radius);
        self.color.map(|c| c * k)
    }

    /// Draws onto `image` inside `frame` with 2×2 supersampling. Returns the
    /// coverage mask (≥ half covered) over `image`, clipped to it.
    pub fn paint(&self, image: &mut ColorImage, frame: (f32, f32, f32)) -> Vec<bool> {
        let (fx, fy, side) = frame;
        let (w, h) = (image.width(), image.height());
        let mut mask = vec![false; w * h];
        let x_lo = fx.floor().max(0.0) as usize;
        let y_lo = fy.floor().max(0.0) as usize;
        let x_hi = ((fx + side).ceil().max(0.0) as usize).min(w);
        let y_hi = ((fy + side).ceil().max(0.0) as usize).min(h);
        for y in y_lo..y_hi {
            for x in x_lo..x_hi {
                let mut hits = 0;
                for (ox, oy) in [(0.25, 0.25), (0.75, 0.25), (0.25, 0.75), (0.75, 0.75)] {
                    let u = (x as f32 + ox - fx) / side;
                    let v = (y as f32 + oy - fy) / side;
                    if self.contains(u, v) {
                        hits += 1;
                    }
                }
                if hits == 0 {
                    continue;
                }
                let a = hits as f32 / 4.0;
                let v = (y as f32 + 0.5 - fy) / side;
                let fill = self.shade(v).map(|c| 2.0 * c - 1.0);
                let old = image.get(x, y);
                image.set(x, y, std::array::from_fn(|c| a * fill[c] + (1.0 - a) * old[c]));
                mask[y * w + x] = hits >= 2;
            }
        }
        mask
    }

    /// The shape alone on white paper at `size`×`size`.
    pub fn render(&self, size: usize) -> ColorImage {
        let mut img = ColorImage::filled(size, size, [1.0; 3]);
        self.paint(&mut img, (0.0, 0.0, size as f32));
        img
    }

    /// Number of mask pixels when painted unclipped at `side` pixels.
    pub fn full_area(&self, side: usize) -> usize {
        let mut img = ColorImage::filled(side, side, [1.0; 3]);
        self.paint(&mut img, (0.0, 0.0, side as f32)).iter().filter(|&&m| m).count()
    }
}

fn jitter<R: Rng + ?Sized>(rng: &mut R, a: f32) -> f32 {
    rng.random_range(-a..a)
}

/// Wobbly outline of `kind`, loosely following the object frame.
pub fn freehand_sketch<R: Rng + ?Sized>(kind: ShapeKind, size: usize, rng: &mut R) -> EdgeImage {
    let s = size as f32;
    let width = 0.9 * s / 64.0;
    let mut out = EdgeImage::blank(size);
    let (cx, cy) = (0.5 + jitter(rng, 0.1), 0.5 + jitter(rng, 0.1));
    let radius = rng.random_range(0.26..0.4f32);
    match kind {
        ShapeKind::Circle => {
            let start = rng.random_range(0.0..std::f32::consts::TAU);
            let sweep = std::f32::consts::TAU + rng.random_range(-0.35..0.45f32);
            let (a2, p2, a3, p3) = (
                jitter(rng, 0.06),
                rng.random_range(0.0..6.3f32),
                jitter(rng, 0.04),
                rng.random_range(0.0..6.3f32),
            );
            let n = 56;
            let pts: Vec<(f32, f32)> = (0..=n)
                .map(|i| {
                    let t = start + sweep * i as f32 / n as f32;
                    let r = radius * (1.0 + a2 * (2.0 * t + p2).sin() + a3 * (3.0 * t + p3).sin());
                    let r = r + jitter(rng, 0.006);
                    ((cx + r * t.cos()) * s, (cy + r * t.sin()) * s)
                })
                .collect();
            out.draw_polyline(&pts, width);
        }
        ShapeKind::Triangle => {
            let rot = jitter(rng, 0.3);
            let verts: Vec<(f32, f32)> = (0..3)
                .map(|k| {
                    let a = rot - std::f32::consts::FRAC_PI_2 + k as f32 * std::f32::consts::TAU / 3.0;
                    (cx + radius * a.cos() + jitter(rng, 0.03), cy + radius * a.sin() + jitter(rng, 0.03))
                })
                .collect();
            for k in 0..3 {
                let (a, b) = (verts[k], verts[(k + 1) % 3]);
                let over0 = rng.random_range(-0.02..0.06f32);
                let over1 = rng.random_range(-0.02..0.06f32);
                let bulge = jitter(rng, 0.025);
                let (dx, dy) = (b.0 - a.0, b.1 - a.1);
                let len = (dx * dx + dy * dy).sqrt().max(1e-6);
                let (nx, ny) = (-dy / len, dx / len);
                let n = 14;
                let pts: Vec<(f32, f32)> = (0..=n)
                    .map(|i| {
                        let t = -over0 + (1.0 + over0 + over1) * i as f32 / n as f32;
                        let off = bulge * 4.0 * t.clamp(0.0, 1.0) * (1.0 - t.clamp(0.0, 1.0)) + jitter(rng, 0.004);
                        ((a.0 + t * dx + off * nx) * s, (a.1 + t * dy + off * ny) * s)
                    })
                    .collect();
                out.draw_polyline(&pts, width);
            }
        }
    }
    out
}

/// A few wavy parallel strokes filling the frame.
pub fn stripes_sketch<R: Rng + ?Sized>(size: usize, rng: &mut R) -> EdgeImage {
    let s = size as f32;
    let mut out = EdgeImage::blank(size);
    let lines = rng.random_range(3..=4);
    let amp = rng.random_range(0.02..0.06f32);
    let freq = rng.random_range(1.0..2.5f32);
    let phase = rng.random_range(0.0..6.3f32);
    for l in 0..lines {
        let y0 = (l as f32 + 0.5) / lines as f32 + jitter(rng, 0.04);
        let (t0, t1) = (rng.random_range(0.0..0.15f32), rng.random_range(0.85..1.0f32));
        let pts: Vec<(f32, f32)> = (0..=20)
            .map(|i| {
                let u = t0 + (t1 - t0) * i as f32 / 20.0;
                let v = y0 + amp * (std::f32::consts::TAU * freq * u + phase).sin();
                (u * s, v * s)
            })
            .collect();
        out.draw_polyline(&pts, 0.9 * s / 32.0);
    }
    out
}

/// Sketch pool with `per_category` sketches for every toy category; the
/// first 80% of each category go to the train split.
pub fn sketch_pool(per_category: usize, object_size: usize, background_size: usize, seed: u64) -> Result<SketchPool> {
    let mut entries = Vec::new();
    let n_train = (per_category * 4).div_ceil(5);
    for (ci, name) in FOREGROUND.iter().chain(BACKGROUND.iter()).enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, &format!("pool/{name}")));
        for i in 0..per_category {
            let sketch = if ci < FOREGROUND.len() {
                freehand_sketch(ShapeKind::from_index(ci), object_size, &mut rng)
            } else {
                stripes_sketch(background_size, &mut rng)
            };
            // background sketches live at their own size; stored upsampled to
            // the object size so the pool has one resolution
            let sketch = sketch.resize(object_size);
            entries.push(PoolSketch {
                id: format!("{name}-{i:04}"),
                category: name.to_string(),
                split: if i < n_train { Split::Train } else { Split::Test },
                sketch,
            });
        }
    }
    SketchPool::new(GaborBank::default(), entries)
}

/// Object triplets rendered directly at `resolution`, with sketches
/// retrieved from `pool` for the matching split.
pub fn object_store(
    per_category: usize,
    resolution: usize,
    split: Split,
    pool: &SketchPool,
    seed: u64,
) -> Result<ObjectStore> {
    let mut items = Vec::with_capacity(per_category * FOREGROUND.len());
    for i in 0..per_category {
        for (c, name) in FOREGROUND.iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, &format!("{}/{name}/{i}", split.as_str())));
            let obj = ToyObject::sample(ShapeKind::from_index(c), &mut rng);
            let image = obj.render(resolution);
            items.push(triplet(image, c, name, split, pool)?);
        }
    }
    Ok(ObjectStore {
        categories: FOREGROUND.iter().map(|s| s.to_string()).collect(),
        items,
    })
}

/// Builds the triplet for an object image: both edge styles plus the
/// retrieved sketch.
pub fn triplet(image: ColorImage, category: usize, name: &str, split: Split, pool: &SketchPool) -> Result<ObjectTriplet> {
    let xdog = extract_edges(&image, EdgeStyle::Xdog);
    let standard = extract_edges(&image, EdgeStyle::Standard);
    let (hit, _) = pool.retrieve_edge(&standard, name, split)?;
    let sketch = hit.sketch.resize(image.width());
    Ok(ObjectTriplet {
        image,
        sketch,
        edge_maps: vec![
            StyledEdge { style: EdgeStyle::Xdog, edge: xdog },
            StyledEdge { style: EdgeStyle::Standard, edge: standard },
        ],
        category,
        sketch_id: hit.id.clone(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    pub canvas: usize,
    pub max_objects: usize,
    pub min_side: usize,
    pub max_side: usize,
    /// Chance that an object is allowed to hang over the canvas border.
    pub border_chance: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            canvas: 128,
            max_objects: 2,
            min_side: 40,
            max_side: 60,
            border_chance: 0.1,
        }
    }
}

fn sky_and_stripes(canvas: usize, horizon: usize, phase: f32) -> (ColorImage, Vec<bool>) {
    let mut mask = vec![false; canvas * canvas];
    let img = ColorImage::from_fn(canvas, canvas, |x, y| {
        if y >= horizon {
            mask[y * canvas + x] = true;
            let wave = 1.5 * (x as f32 / 10.0 + phase).sin();
            let band = (((y as f32 + wave) / 5.0).floor() as i64).rem_euclid(2);
            let c = if band == 0 { [0.30, 0.58, 0.22] } else { [0.52, 0.78, 0.34] };
            c.map(|v| 2.0 * v - 1.0)
        } else {
            let t = y as f32 / canvas as f32;
            [0.78 + 0.1 * t, 0.86 + 0.05 * t, 0.97].map(|v: f32| 2.0 * v.min(1.0) - 1.0)
        }
    });
    (img, mask)
}

/// One toy source scene: sky over a striped ground, up to `max_objects` shapes.
pub fn scene(config: &SceneConfig, id: &str, seed: u64) -> SourceScene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = config.canvas;
    let horizon = rng.random_range(n * 2 / 5..n * 3 / 4);
    let (mut image, ground) = sky_and_stripes(n, horizon, rng.random_range(0.0..6.3));
    let mut instances = vec![SourceInstance {
        category: BACKGROUND[0].to_string(),
        mask: ground.clone(),
        full_area: ground.iter().filter(|&&m| m).count(),
    }];
    let count = rng.random_range(1..=config.max_objects);
    let mut placed: Vec<BBox> = Vec::new();
    let mut objects = Vec::new();
    for _ in 0..count {
        let kind = ShapeKind::from_index(rng.random_range(0..FOREGROUND.len()));
        let side = rng.random_range(config.min_side..=config.max_side);
        let hang = rng.random_bool(config.border_chance);
        let lo: i64 = if hang { -(side as i64) / 2 } else { 0 };
        let hi = (n - side) as i64 + if hang { side as i64 / 2 } else { 0 };
        // keep trying for a spot that does not collide with earlier shapes
        for _ in 0..30 {
            let x = rng.random_range(lo..=hi);
            let y = rng.random_range(lo..=hi);
            let frame = BBox {
                x1: x.max(0) as usize,
                y1: y.max(0) as usize,
                x2: ((x + side as i64) as usize).min(n),
                y2: ((y + side as i64) as usize).min(n),
            };
            if placed.iter().all(|b| !b.intersects(&frame)) {
                placed.push(frame);
                objects.push((ToyObject::sample(kind, &mut rng), x, y, side));
                break;
            }
        }
    }
    for (obj, x, y, side) in objects {
        let mask = obj.paint(&mut image, (x as f32, y as f32, side as f32));
        // the ground stays annotated only where it is still visible
        for (g, _) in instances[0].mask.iter_mut().zip(&mask).filter(|(_, &m)| m) {
            *g = false;
        }
        instances.push(SourceInstance {
            category: obj.kind.name().to_string(),
            mask,
            full_area: obj.full_area(side),
        });
    }
    SourceScene {
        id: id.to_string(),
        image,
        instances,
    }
}

/// `count` scenes with ids `scene-0000`, … derived from `seed`.
pub fn source_scenes(count: usize, config: &SceneConfig, seed: u64) -> Vec<SourceScene> {
    (0..count)
        .map(|i| {
            let id = format!("scene-{i:04}");
            scene(config, &id, sub_seed(seed, &id))
        })
        .collect()
}

/// Everything needed to build the toy dataset.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct ToySource {
    pub scenes: usize,
    pub sketches_per_category: usize,
    pub seed: u64,
}

impl Default for ToySource {
    fn default() -> Self {
        ToySource {
            scenes: 200,
            sketches_per_category: 40,
            seed: 0,
        }
    }
}

pub fn build_config(seed: u64) -> BuildConfig {
    BuildConfig {
        foreground: FOREGROUND.iter().map(|s| s.to_string()).collect(),
        background: BACKGROUND.iter().map(|s| s.to_string()).collect(),
        seed,
        ..BuildConfig::default()
    }
}

/// Generates the toy scenes and sketch pool and builds the dataset at `root`.
pub fn build(source: &ToySource, root: &Path) -> Result<Manifest> {
    let config = build_config(source.seed);
    let pool = sketch_pool(
        source.sketches_per_category,
        config.object_resolution,
        config.placement.sketch_side,
        sub_seed(source.seed, "pool"),
    )?;
    let scenes = source_scenes(source.scenes, &SceneConfig::default(), sub_seed(source.seed, "scenes"));
    build_dataset(&scenes, &pool, &config, "toy", root)
}
