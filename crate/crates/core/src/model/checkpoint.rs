//! Binary checkpoint: magic `STJGCN1`, a little-endian u64 manifest length,
//! the JSON manifest, then each array's little-endian payload in manifest
//! order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::network::Stjgcn;
use crate::error::{read_file, write_file, Error, Result};
use crate::tensor::{Scalar, Tensor};

pub const MAGIC: &[u8; 7] = b"STJGCN1";

#[derive(Clone, Debug, PartialEq)]
pub enum ArrayData {
    F32(Vec<f32>),
    F64(Vec<f64>),
}

impl ArrayData {
    pub fn dtype(&self) -> &'static str {
        match self {
            ArrayData::F32(_) => "f32",
            ArrayData::F64(_) => "f64",
        }
    }

    pub fn len(&self) -> usize {
        match self {
            ArrayData::F32(v) => v.len(),
            ArrayData::F64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_f64(&self) -> Vec<f64> {
        match self {
            ArrayData::F32(v) => v.iter().map(|&x| f64::from(x)).collect(),
            ArrayData::F64(v) => v.clone(),
        }
    }

    fn from_tensor<T: Scalar>(t: &Tensor<T>) -> Self {
        match T::DTYPE {
            "f32" => ArrayData::F32(t.data().iter().map(|v| v.f64() as f32).collect()),
            _ => ArrayData::F64(t.to_f64_vec()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NamedArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: ArrayData,
}

impl NamedArray {
    pub fn new(name: impl Into<String>, shape: &[usize], data: ArrayData) -> Self {
        Self {
            name: name.into(),
            shape: shape.to_vec(),
            data,
        }
    }

    /// Read as a tensor of `T`; the stored dtype must match.
    pub fn to_tensor<T: Scalar>(&self) -> Result<Tensor<T>> {
        if self.data.dtype() != T::DTYPE {
            return Err(Error::Format(format!(
                "array `{}` is {} but {} was requested",
                self.name,
                self.data.dtype(),
                T::DTYPE
            )));
        }
        Tensor::from_f64(&self.shape, &self.data.to_f64())
    }
}

#[derive(Serialize, Deserialize)]
struct ArrayEntry {
    name: String,
    shape: Vec<usize>,
    dtype: String,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    meta: serde_json::Value,
    arrays: Vec<ArrayEntry>,
}

/// Named arrays plus free-form JSON metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub meta: serde_json::Value,
    pub arrays: Vec<NamedArray>,
}

impl Checkpoint {
    pub fn get(&self, name: &str) -> Result<&NamedArray> {
        self.arrays
            .iter()
            .find(|a| a.name == name)
            .ok_or_else(|| Error::Format(format!("checkpoint has no array `{name}`")))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let manifest = Manifest {
            meta: self.meta.clone(),
            arrays: self
                .arrays
                .iter()
                .map(|a| ArrayEntry {
                    name: a.name.clone(),
                    shape: a.shape.clone(),
                    dtype: a.data.dtype().to_string(),
                })
                .collect(),
        };
        let json = serde_json::to_vec(&manifest)?;
        let mut out = Vec::with_capacity(json.len() + 64);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for a in &self.arrays {
            if a.shape.iter().product::<usize>() != a.data.len() {
                return Err(Error::Format(format!(
                    "array `{}` has shape {:?} but {} values",
                    a.name,
                    a.shape,
                    a.data.len()
                )));
            }
            match &a.data {
                ArrayData::F32(v) => v.iter().for_each(|x| x.write_le(&mut out)),
                ArrayData::F64(v) => v.iter().for_each(|x| x.write_le(&mut out)),
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |msg: &str| Error::Format(format!("checkpoint: {msg}"));
        if bytes.len() < MAGIC.len() + 8 || &bytes[..MAGIC.len()] != MAGIC {
            return Err(bad("missing STJGCN1 header"));
        }
        let mut pos = MAGIC.len();
        let len = u64::from_le_bytes(bytes[pos..pos + 8].try_into().unwrap()) as usize;
        pos += 8;
        let json = bytes.get(pos..pos + len).ok_or_else(|| bad("truncated manifest"))?;
        pos += len;
        let manifest: Manifest = serde_json::from_slice(json)?;
        let mut arrays = Vec::with_capacity(manifest.arrays.len());
        for e in manifest.arrays {
            let count: usize = e.shape.iter().product();
            let width = match e.dtype.as_str() {
                "f32" => 4,
                "f64" => 8,
                other => return Err(bad(&format!("unknown dtype `{other}`"))),
            };
            let raw = bytes
                .get(pos..pos + count * width)
                .ok_or_else(|| bad(&format!("truncated payload for `{}`", e.name)))?;
            pos += count * width;
            let data = if width == 4 {
                ArrayData::F32(raw.chunks_exact(4).map(f32::read_le).collect())
            } else {
                ArrayData::F64(raw.chunks_exact(8).map(f64::read_le).collect())
            };
            arrays.push(NamedArray {
                name: e.name,
                shape: e.shape,
                data,
            });
        }
        if pos != bytes.len() {
            return Err(bad("trailing bytes after payload"));
        }
        Ok(Self {
            meta: manifest.meta,
            arrays,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&read_file(path)?)
    }
}

impl<T: Scalar> Stjgcn<T> {
    /// Parameters then batch-norm running statistics, as named arrays.
    pub fn export_arrays(&self) -> Vec<NamedArray> {
        let mut out: Vec<NamedArray> = self
            .params()
            .entries()
            .iter()
            .map(|e| NamedArray::new(&e.name, e.value.shape(), ArrayData::from_tensor(&e.value)))
            .collect();
        for (name, s) in self.batch_norm_names().iter().zip(self.batch_norm_stats()) {
            let c = s.channels();
            let mean = Tensor::new(&[c], s.running_mean.clone()).unwrap();
            let var = Tensor::new(&[c], s.running_var.clone()).unwrap();
            out.push(NamedArray::new(format!("{name}.running_mean"), &[c], ArrayData::from_tensor(&mean)));
            out.push(NamedArray::new(format!("{name}.running_var"), &[c], ArrayData::from_tensor(&var)));
            out.push(NamedArray::new(
                format!("{name}.updates"),
                &[1],
                ArrayData::F64(vec![s.updates as f64]),
            ));
        }
        out
    }

    /// Overwrite parameters and statistics from arrays written by
    /// [`Self::export_arrays`].
    pub fn import_arrays(&mut self, ckpt: &Checkpoint) -> Result<()> {
        let mut values = Vec::with_capacity(self.params().len());
        for e in self.params().entries() {
            let t: Tensor<T> = ckpt.get(&e.name)?.to_tensor()?;
            if t.shape() != e.value.shape() {
                return Err(Error::shape("import_arrays", e.value.shape(), t.shape()));
            }
            values.push(t);
        }
        self.params_mut().set_values(values);
        let names = self.batch_norm_names().to_vec();
        for (name, s) in names.iter().zip(self.batch_norm_stats_mut()) {
            let mean: Tensor<T> = ckpt.get(&format!("{name}.running_mean"))?.to_tensor()?;
            let var: Tensor<T> = ckpt.get(&format!("{name}.running_var"))?.to_tensor()?;
            if mean.len() != s.channels() || var.len() != s.channels() {
                return Err(Error::Format(format!("batch-norm state `{name}` has wrong width")));
            }
            s.running_mean = mean.into_data();
            s.running_var = var.into_data();
            s.updates = ckpt.get(&format!("{name}.updates"))?.data.to_f64()[0] as u64;
        }
        Ok(())
    }
}
