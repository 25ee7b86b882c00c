//! Single-file checkpoint archive: named `f32` arrays plus string metadata
//! (configuration and provenance as JSON), stored in the safetensors layout.

use std::borrow::Cow;
use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use safetensors::tensor::{Dtype, SafeTensors, View};
use tch::{nn, Tensor};

use crate::error::{Error, Result};
use crate::imaging::tensor_to_vec;

#[derive(Debug, Clone, PartialEq)]
pub struct Array {
    pub shape: Vec<usize>,
    pub values: Vec<f32>,
}

impl View for &Array {
    fn dtype(&self) -> Dtype {
        Dtype::F32
    }

    fn shape(&self) -> &[usize] {
        &self.shape
    }

    fn data(&self) -> Cow<'_, [u8]> {
        Cow::Owned(self.values.iter().flat_map(|v| v.to_le_bytes()).collect())
    }

    fn data_len(&self) -> usize {
        self.values.len() * 4
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Archive {
    pub metadata: BTreeMap<String, String>,
    pub arrays: BTreeMap<String, Array>,
}

impl Archive {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds every variable of `vs` under `prefix.`.
    pub fn insert_store(&mut self, prefix: &str, vs: &nn::VarStore) -> Result<()> {
        for (name, t) in vs.variables() {
            let shape = t.size().iter().map(|&d| d as usize).collect();
            let values = tensor_to_vec(&t)?;
            self.arrays
                .insert(format!("{prefix}.{name}"), Array { shape, values });
        }
        Ok(())
    }

    /// Copies `prefix.*` arrays into the matching variables of `vs`.
    /// Every variable must be present with the right shape.
    pub fn restore_store(&self, prefix: &str, vs: &nn::VarStore) -> Result<()> {
        let vars = vs.variables();
        tch::no_grad(|| -> Result<()> {
            for (name, mut var) in vars {
                let key = format!("{prefix}.{name}");
                let arr = self
                    .arrays
                    .get(&key)
                    .ok_or_else(|| Error::Data(format!("checkpoint is missing array {key}")))?;
                let dims: Vec<i64> = arr.shape.iter().map(|&d| d as i64).collect();
                if dims != var.size() {
                    return Err(Error::Data(format!(
                        "array {key} has shape {:?}, model expects {:?}",
                        dims,
                        var.size()
                    )));
                }
                var.copy_(&Tensor::from_slice(&arr.values).view(dims.as_slice()));
            }
            Ok(())
        })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let meta: HashMap<String, String> = self.metadata.clone().into_iter().collect();
        safetensors::tensor::serialize(self.arrays.iter(), &Some(meta))
            .map_err(|e| Error::Data(format!("checkpoint serialization failed: {e}")))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |e: safetensors::SafeTensorError| Error::Data(format!("invalid checkpoint: {e}"));
        let (_, header) = SafeTensors::read_metadata(bytes).map_err(bad)?;
        let metadata = header
            .metadata()
            .clone()
            .unwrap_or_default()
            .into_iter()
            .collect();
        let st = SafeTensors::deserialize(bytes).map_err(bad)?;
        let mut arrays = BTreeMap::new();
        for (name, view) in st.tensors() {
            if view.dtype() != Dtype::F32 {
                return Err(Error::Data(format!("array {name} is not f32")));
            }
            let values = view
                .data()
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            arrays.insert(
                name,
                Array {
                    shape: view.shape().to_vec(),
                    values,
                },
            );
        }
        Ok(Archive { metadata, arrays })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Archive::from_bytes(&bytes).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
    }

    pub fn meta(&self, key: &str) -> Result<&str> {
        self.metadata
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::Data(format!("checkpoint metadata lacks {key:?}")))
    }
}
