//! The `LARW` weights container.
//!
//! ```text
//! magic      4 bytes  "LARW"
//! version    u32      1
//! count      u32      number of tensors
//! manifest   count × { name_len u32, name UTF-8, dtype u8 (0 f32, 1 f64), rank u8, dims u32[rank] }
//! payload    raw scalars, manifest order, no padding
//! ```
//!
//! All integers and scalars are little-endian.

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{DType, Real, Tensor};

pub const MAGIC: [u8; 4] = *b"LARW";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    F64(Vec<f64>),
}

impl TensorData {
    pub fn dtype(&self) -> DType {
        match self {
            TensorData::F32(_) => DType::F32,
            TensorData::F64(_) => DType::F64,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            TensorData::F32(v) => v.len(),
            TensorData::F64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Converts to the requested scalar type.
    pub fn to_vec<T: Real>(&self) -> Vec<T> {
        match self {
            TensorData::F32(v) => v.iter().map(|&x| T::of(x as f64)).collect(),
            TensorData::F64(v) => v.iter().map(|&x| T::of(x)).collect(),
        }
    }

    pub fn from_slice<T: Real>(data: &[T]) -> Self {
        match T::DTYPE {
            DType::F32 => TensorData::F32(data.iter().map(|v| v.as_f64() as f32).collect()),
            DType::F64 => TensorData::F64(data.iter().map(|v| v.as_f64()).collect()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StoredTensor {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: TensorData,
}

/// Ordered, name-unique collection of tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct WeightStore {
    entries: Vec<StoredTensor>,
    index: HashMap<String, usize>,
}

impl WeightStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, dims: Vec<usize>, data: TensorData) -> Result<()> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::DuplicateName(name));
        }
        let n: usize = dims.iter().product();
        if n != data.len() {
            return Err(Error::TensorShape {
                name,
                expected: dims,
                actual: vec![data.len()],
            });
        }
        self.index.insert(name.clone(), self.entries.len());
        self.entries.push(StoredTensor { name, dims, data });
        Ok(())
    }

    pub fn insert_slice<T: Real>(&mut self, name: impl Into<String>, dims: Vec<usize>, data: &[T]) -> Result<()> {
        self.insert(name, dims, TensorData::from_slice(data))
    }

    pub fn insert_tensor<T: Real>(&mut self, name: impl Into<String>, t: &Tensor<T>) -> Result<()> {
        self.insert_slice(name, t.shape().to_vec(), t.data())
    }

    pub fn get(&self, name: &str) -> Option<&StoredTensor> {
        self.index.get(name).map(|&i| &self.entries[i])
    }

    pub fn remove(&mut self, name: &str) -> Option<StoredTensor> {
        let i = self.index.remove(name)?;
        let t = self.entries.remove(i);
        for v in self.index.values_mut() {
            if *v > i {
                *v -= 1;
            }
        }
        Some(t)
    }

    /// Fetches `name` as `T`, checking its shape.
    pub fn take<T: Real>(&self, name: &str, dims: &[usize]) -> Result<Vec<T>> {
        let t = self.get(name).ok_or_else(|| Error::MissingTensor(name.to_string()))?;
        if t.dims != dims {
            return Err(Error::TensorShape {
                name: name.to_string(),
                expected: dims.to_vec(),
                actual: t.dims.clone(),
            });
        }
        Ok(t.data.to_vec())
    }

    pub fn tensor<T: Real>(&self, name: &str, dims: &[usize]) -> Result<Tensor<T>> {
        Tensor::new(dims.to_vec(), self.take(name, dims)?)
    }

    pub fn iter(&self) -> impl Iterator<Item = &StoredTensor> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.entries.iter().map(|e| e.data.len()).sum()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + self.num_scalars() * 4);
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for e in &self.entries {
            out.extend_from_slice(&(e.name.len() as u32).to_le_bytes());
            out.extend_from_slice(e.name.as_bytes());
            out.push(e.data.dtype().code());
            out.push(e.dims.len() as u8);
            for &d in &e.dims {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
        }
        for e in &self.entries {
            match &e.data {
                TensorData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
                TensorData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic: [u8; 4] = r.take(4)?.try_into().expect("4 bytes");
        if magic != MAGIC {
            return Err(Error::BadMagic { found: magic });
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::UnsupportedVersion {
                found: version,
                supported: FORMAT_VERSION,
            });
        }
        let count = r.u32()? as usize;
        let mut manifest = Vec::with_capacity(count.min(1 << 16));
        let mut seen = HashMap::new();
        for _ in 0..count {
            let len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| Error::Malformed("tensor name is not valid UTF-8".into()))?
                .to_string();
            let dtype = DType::from_code(r.u8()?)?;
            let rank = r.u8()? as usize;
            let dims = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            if seen.insert(name.clone(), ()).is_some() {
                return Err(Error::DuplicateName(name));
            }
            manifest.push((name, dtype, dims));
        }
        let payload: u64 = manifest
            .iter()
            .map(|(_, dt, dims)| dims.iter().map(|&d| d as u64).product::<u64>() * dt.size() as u64)
            .sum();
        let expected = r.pos as u64 + payload;
        if (bytes.len() as u64) < expected {
            return Err(Error::Truncated {
                expected,
                actual: bytes.len() as u64,
            });
        }
        if (bytes.len() as u64) > expected {
            return Err(Error::Malformed(format!(
                "{} trailing bytes after payload",
                bytes.len() as u64 - expected
            )));
        }
        let mut store = WeightStore::new();
        for (name, dtype, dims) in manifest {
            let n: usize = dims.iter().product();
            let raw = r.take(n * dtype.size())?;
            let data = match dtype {
                DType::F32 => TensorData::F32(
                    raw.chunks_exact(4)
                        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                        .collect(),
                ),
                DType::F64 => TensorData::F64(
                    raw.chunks_exact(8)
                        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                        .collect(),
                ),
            };
            store.insert(name, dims, data)?;
        }
        Ok(store)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or(Error::Truncated {
            expected: (self.pos + n) as u64,
            actual: self.bytes.len() as u64,
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}
