//! Python bindings: model loading, object and scene generation, metrics and
//! the toy dataset builder.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyBytes;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sketchscene::data::toy::{self, ToySource};
use sketchscene::imaging::{ColorImage, EdgeImage};
use sketchscene::scene::{generate_scene, segment_scene, ModelBundle, SceneSketch, SegmentMode, Stroke};
use sketchscene::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Input(_) | Error::Image(_) | Error::Data(_) | Error::Config(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// Trained object and background models.
#[pyclass(unsendable)]
pub struct Models {
    bundle: ModelBundle,
}

#[pymethods]
impl Models {
    #[new]
    fn new(object: PathBuf, background: PathBuf) -> PyResult<Self> {
        Ok(Models {
            bundle: ModelBundle::load(&object, &background).map_err(py_err)?,
        })
    }

    /// `(foreground, background)` category names.
    fn categories(&self) -> (Vec<String>, Vec<String>) {
        let c = self.bundle.categories();
        (c.foreground, c.background)
    }

    /// PNG bytes of the object generated for a PNG sketch.
    fn generate_object<'py>(&self, py: Python<'py>, sketch_png: &[u8], category: &str) -> PyResult<Bound<'py, PyBytes>> {
        let object = &self.bundle.object;
        let c = object.category_index(category).ok_or_else(|| {
            PyValueError::new_err(format!("unknown category {category:?}; valid: {:?}", object.categories))
        })?;
        let sketch = EdgeImage::from_png_bytes(sketch_png).map_err(py_err)?.resize(object.resolution());
        let img = object.infer_object(&sketch, c).map_err(py_err)?;
        Ok(PyBytes::new(py, &img.to_png_bytes().map_err(py_err)?))
    }

    /// Generates a scene from labelled strokes given as JSON
    /// (`[{"points": [[x, y], ...], "category": "..."}]`). Returns the scene
    /// PNG and the paste order used.
    #[pyo3(signature = (strokes_json, canvas_size, seed = 0))]
    fn generate_scene<'py>(
        &self,
        py: Python<'py>,
        strokes_json: &str,
        canvas_size: usize,
        seed: u64,
    ) -> PyResult<(Bound<'py, PyBytes>, Vec<usize>)> {
        let strokes: Vec<Stroke> = serde_json::from_str(strokes_json).map_err(|e| PyValueError::new_err(e.to_string()))?;
        let sketch = SceneSketch::from_strokes(canvas_size, strokes).map_err(py_err)?;
        let seg = segment_scene(&sketch, SegmentMode::LabeledStrokes, &self.bundle.categories()).map_err(py_err)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let out = generate_scene(&sketch, &seg, &self.bundle, &mut rng).map_err(py_err)?;
        let png = out.image.to_png_bytes().map_err(py_err)?;
        Ok((PyBytes::new(py, &png), out.paste_order))
    }
}

/// Fréchet distance between two feature sets (rows are samples).
#[pyfunction]
fn fid(a: Vec<Vec<f32>>, b: Vec<Vec<f32>>) -> PyResult<f64> {
    sketchscene::eval::fid(&a, &b).map_err(py_err)
}

/// SSIM between two PNG images of the same size.
#[pyfunction]
fn ssim(a_png: &[u8], b_png: &[u8]) -> PyResult<f64> {
    let a = ColorImage::from_png_bytes(a_png).map_err(py_err)?;
    let b = ColorImage::from_png_bytes(b_png).map_err(py_err)?;
    sketchscene::eval::ssim(&a, &b).map_err(py_err)
}

/// Builds the toy dataset under `out` and returns `(train, test)` scene counts.
#[pyfunction]
#[pyo3(signature = (out, scenes = 20, sketches_per_category = 10, seed = 0))]
fn build_toy_dataset(out: PathBuf, scenes: usize, sketches_per_category: usize, seed: u64) -> PyResult<(usize, usize)> {
    let src = ToySource {
        scenes,
        sketches_per_category,
        seed,
    };
    let m = toy::build(&src, &out).map_err(py_err)?;
    let count = |s| m.counts.get(&s).map_or(0, |c| c.scenes);
    Ok((count(sketchscene::data::Split::Train), count(sketchscene::data::Split::Test)))
}

#[pymodule]
fn sketchscene_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Models>()?;
    m.add_function(wrap_pyfunction!(fid, m)?)?;
    m.add_function(wrap_pyfunction!(ssim, m)?)?;
    m.add_function(wrap_pyfunction!(build_toy_dataset, m)?)?;
    Ok(())
}
