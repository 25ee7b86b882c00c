//! Reading a built dataset back: manifest, typed records and seeded
//! epoch iteration.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::build::{
    background_pair_paths, composite_paths, object_paths, scene_paths, Manifest, SceneEntry, MANIFEST,
};
use super::{EdgeStyle, InstanceAnnotation, ObjectStore, ObjectTriplet, Split, StyledEdge};
use crate::background::{BackgroundInput, BackgroundPair};
use crate::error::{data, Error, Result};
use crate::imaging::{load_label_png, ColorImage, EdgeImage};
use crate::layers::sub_seed;

pub fn read_manifest(root: &Path) -> Result<Manifest> {
    let path = root.join(MANIFEST);
    let text = match std::fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return data(format!("no dataset manifest at {}", path.display()));
        }
        Err(e) => return Err(Error::io(&path, e)),
    };
    serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

/// Annotations of one scene with masks decoded.
pub fn read_annotations(root: &Path, scene: &SceneEntry) -> Result<Vec<InstanceAnnotation>> {
    scene
        .annotations
        .iter()
        .map(|a| {
            let path = root.join(&a.mask);
            let (_, labels) = load_label_png(&path)?;
            Ok(InstanceAnnotation {
                category: a.category.clone(),
                bbox: a.bbox,
                mask: labels.iter().map(|&v| v > 0).collect(),
            })
        })
        .collect()
}

/// Ground truth of one scene.
#[derive(Debug, Clone)]
pub struct SceneRecord {
    pub id: String,
    pub split: Split,
    pub scene_image: ColorImage,
    pub scene_sketch: EdgeImage,
    pub composite: BackgroundInput,
    pub annotations: Vec<InstanceAnnotation>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordKind {
    Object,
    BackgroundPair,
    Scene,
}

#[derive(Debug, Clone)]
pub enum Record {
    Object(ObjectTriplet),
    BackgroundPair {
        category: String,
        image: ColorImage,
        sketch: EdgeImage,
    },
    Scene(Box<SceneRecord>),
}

#[derive(Debug, Clone)]
enum RecordRef {
    Object { category: usize, paths: [PathBuf; 4] },
    BackgroundPair { category: String, paths: [PathBuf; 2] },
    Scene(usize),
}

/// Records of one kind and split; each epoch visits every record once in an
/// order fixed by `(seed, epoch)`.
#[derive(Debug)]
pub struct SplitLoader {
    root: PathBuf,
    manifest: Manifest,
    split: Split,
    seed: u64,
    records: Vec<RecordRef>,
}

pub fn load_split(root: &Path, kind: RecordKind, split: Split, seed: u64) -> Result<SplitLoader> {
    let manifest = read_manifest(root)?;
    let abs = |rels: &[String]| rels.iter().map(|r| root.join(r)).collect::<Vec<_>>();
    let mut records = Vec::new();
    for (si, s) in manifest.scenes.iter().enumerate().filter(|(_, s)| s.split == split) {
        match kind {
            RecordKind::Object => {
                for f in s.foreground.iter().filter(|f| f.triplet) {
                    let category = manifest
                        .config
                        .foreground
                        .iter()
                        .position(|c| c == &f.category)
                        .ok_or_else(|| Error::Data(format!("unknown category {} in manifest", f.category)))?;
                    let p = abs(&object_paths(split, &f.category, &s.id, f.index));
                    records.push(RecordRef::Object {
                        category,
                        paths: p.try_into().expect("four paths"),
                    });
                }
            }
            RecordKind::BackgroundPair => {
                for &j in &s.background_pairs {
                    let cat = &s.placements[j].category;
                    let p = abs(&background_pair_paths(split, cat, &s.id, j));
                    records.push(RecordRef::BackgroundPair {
                        category: cat.clone(),
                        paths: p.try_into().expect("two paths"),
                    });
                }
            }
            RecordKind::Scene => records.push(RecordRef::Scene(si)),
        }
    }
    Ok(SplitLoader {
        root: root.to_path_buf(),
        manifest,
        split,
        seed,
        records,
    })
}

impl SplitLoader {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn split(&self) -> Split {
        self.split
    }

    /// Visiting order of `epoch`.
    pub fn order(&self, epoch: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.records.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(self.seed, &format!("loader-epoch-{epoch}")));
        idx.shuffle(&mut rng);
        idx
    }

    pub fn epoch(&self, epoch: usize) -> impl Iterator<Item = Result<Record>> + '_ {
        self.order(epoch).into_iter().map(move |i| self.get(i))
    }

    /// Records in manifest order.
    pub fn iter(&self) -> impl Iterator<Item = Result<Record>> + '_ {
        (0..self.records.len()).map(move |i| self.get(i))
    }

    pub fn get(&self, i: usize) -> Result<Record> {
        match &self.records[i] {
            RecordRef::Object { category, paths } => {
                let [img, sk, xd, st] = paths;
                let t = ObjectTriplet {
                    image: ColorImage::load_png(img)?,
                    sketch: EdgeImage::load_png(sk)?,
                    edge_maps: vec![
                        StyledEdge {
                            style: EdgeStyle::Xdog,
                            edge: EdgeImage::load_png(xd)?,
                        },
                        StyledEdge {
                            style: EdgeStyle::Standard,
                            edge: EdgeImage::load_png(st)?,
                        },
                    ],
                    category: *category,
                    sketch_id: String::new(),
                };
                t.validate().map_err(|e| Error::Data(format!("{}: {e}", img.display())))?;
                Ok(Record::Object(t))
            }
            RecordRef::BackgroundPair { category, paths } => Ok(Record::BackgroundPair {
                category: category.clone(),
                image: ColorImage::load_png(&paths[0])?,
                sketch: EdgeImage::load_png(&paths[1])?,
            }),
            RecordRef::Scene(si) => {
                let s = &self.manifest.scenes[*si];
                let [cc, cs] = composite_paths(s.split, &s.id).map(|p| self.root.join(p));
                let [im, sk] = scene_paths(s.split, &s.id).map(|p| self.root.join(p));
                let composite = BackgroundInput::new(ColorImage::load_png(&cc)?, EdgeImage::load_png(&cs)?)
                    .map_err(|e| Error::Data(format!("{}: {e}", cc.display())))?;
                Ok(Record::Scene(Box::new(SceneRecord {
                    id: s.id.clone(),
                    split: s.split,
                    scene_image: ColorImage::load_png(&im)?,
                    scene_sketch: EdgeImage::load_png(&sk)?,
                    composite,
                    annotations: read_annotations(&self.root, s)?,
                })))
            }
        }
    }
}

/// All object triplets of a split, in manifest order.
pub fn load_object_store(root: &Path, split: Split) -> Result<ObjectStore> {
    let loader = load_split(root, RecordKind::Object, split, 0)?;
    let mut items = Vec::with_capacity(loader.len());
    let sketch_ids: Vec<String> = loader
        .manifest
        .scenes_in(split)
        .flat_map(|s| s.foreground.iter().filter(|f| f.triplet).map(|f| f.sketch_id.clone()))
        .collect();
    for (rec, id) in loader.iter().zip(sketch_ids) {
        if let Record::Object(mut t) = rec? {
            t.sketch_id = id;
            items.push(t);
        }
    }
    Ok(ObjectStore {
        categories: loader.manifest.config.foreground.clone(),
        items,
    })
}

pub fn load_scene_records(root: &Path, split: Split) -> Result<Vec<SceneRecord>> {
    load_split(root, RecordKind::Scene, split, 0)?
        .iter()
        .map(|r| match r? {
            Record::Scene(s) => Ok(*s),
            _ => unreachable!("scene loader yields scenes"),
        })
        .collect()
}

/// Composite inputs paired with their scene images, optionally resampled.
pub fn load_background_training(root: &Path, split: Split, resolution: Option<usize>) -> Result<Vec<BackgroundPair>> {
    load_scene_records(root, split)?
        .into_iter()
        .map(|s| {
            let (input, target) = match resolution {
                Some(r) if r != s.scene_sketch.size() => (
                    BackgroundInput::new(
                        s.composite.canvas.resize(r, r),
                        s.composite.background_sketch.resize(r),
                    )?,
                    s.scene_image.resize(r, r),
                ),
                _ => (s.composite, s.scene_image),
            };
            Ok(BackgroundPair { input, target })
        })
        .collect()
}
