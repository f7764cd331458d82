//! Named f32 tensor sets, the NTC container format, task-vector extraction,
//! and low-rank delta materialization.
//!
//! A `NamedTensorSet` holds a checkpoint, a task vector (checkpoint delta), or
//! any other collection of named, shaped f32 buffers. Entry order is the
//! stored order and round trips through the codec bit-exactly.

use std::fmt;
use std::path::Path;

use indexmap::IndexMap;
use sha2::{Digest, Sha256};

use crate::binio::{self, Reader};
use crate::error::{Error, Result};

pub const NTC_MAGIC: &[u8; 4] = b"NTC1";

/// Shaped, row-major f32 buffer. `data.len()` always equals the product of
/// `shape`, and every dimension is positive.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(Error::usage(format!("zero dimension in shape {shape:?}")));
        }
        let n = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::usage(format!("shape {shape:?} overflows")))?;
        if n != data.len() {
            return Err(Error::usage(format!(
                "shape {shape:?} wants {n} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    /// Rank-1 tensor over a nonempty vector.
    pub fn vector(data: Vec<f32>) -> Self {
        assert!(!data.is_empty(), "vector tensor must be nonempty");
        Tensor {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    /// Element count.
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// 128-bit digest over the ordered (name, shape) table of a set. Values never
/// enter the digest, so structurally equal sets compare equal regardless of
/// their contents.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct Fingerprint([u8; 16]);

impl Fingerprint {
    pub fn from_bytes(bytes: [u8; 16]) -> Self {
        Fingerprint(bytes)
    }

    pub fn bytes(&self) -> &[u8; 16] {
        &self.0
    }

    pub fn hex(&self) -> String {
        self.0.iter().map(|b| format!("{b:02x}")).collect()
    }
}

impl fmt::Display for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.hex())
    }
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct NamedTensorSet {
    entries: IndexMap<String, Tensor>,
    meta: IndexMap<String, String>,
}

impl NamedTensorSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends an entry; names are unique and at most 64 KiB so they fit the
    /// container's length prefixes.
    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<()> {
        let name = name.into();
        if name.len() > u16::MAX as usize {
            return Err(Error::usage(format!(
                "tensor name too long ({} bytes)",
                name.len()
            )));
        }
        if tensor.shape.len() > u8::MAX as usize {
            return Err(Error::usage(format!(
                "tensor rank {} exceeds 255",
                tensor.shape.len()
            )));
        }
        if self.entries.contains_key(&name) {
            return Err(Error::usage(format!("duplicate tensor name {name:?}")));
        }
        self.entries.insert(name, tensor);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.entries.get_mut(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(|k| k.as_str())
    }

    pub fn meta(&self) -> &IndexMap<String, String> {
        &self.meta
    }

    pub fn set_meta(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.meta.insert(key.into(), value.into());
    }

    pub fn total_elements(&self) -> usize {
        self.entries.values().map(|t| t.len()).sum()
    }

    pub fn fingerprint(&self) -> Fingerprint {
        let mut hasher = Sha256::new();
        for (name, tensor) in &self.entries {
            hasher.update((name.len() as u16).to_le_bytes());
            hasher.update(name.as_bytes());
            hasher.update([tensor.shape.len() as u8]);
            for &d in &tensor.shape {
                hasher.update((d as u64).to_le_bytes());
            }
        }
        let digest = hasher.finalize();
        Fingerprint(digest[..16].try_into().unwrap())
    }

    /// Checks the `validated` invariant: no NaN or infinity anywhere.
    pub fn validate_finite(&self) -> Result<()> {
        for (name, tensor) in self.iter() {
            if let Some(i) = tensor.data().iter().position(|v| !v.is_finite()) {
                return Err(Error::usage(format!(
                    "tensor {name:?} has a non-finite value at flat index {i}"
                )));
            }
        }
        Ok(())
    }
}

/// Serializes a set to the NTC container. Writing is atomic: the file appears
/// fully formed or not at all.
pub fn save_ntc(set: &NamedTensorSet, path: &Path) -> Result<()> {
    let mut buf = Vec::with_capacity(16 + set.total_elements() * 4);
    buf.extend_from_slice(NTC_MAGIC);
    binio::put_u32(&mut buf, set.len() as u32);
    for (name, tensor) in set.iter() {
        binio::put_str16(&mut buf, name)?;
        buf.push(tensor.shape().len() as u8);
        for &d in tensor.shape() {
            binio::put_u64(&mut buf, d as u64);
        }
        for &v in tensor.data() {
            binio::put_f32(&mut buf, v);
        }
    }
    binio::put_u32(&mut buf, set.meta().len() as u32);
    for (k, v) in set.meta() {
        binio::put_str16(&mut buf, k)?;
        binio::put_str16(&mut buf, v)?;
    }
    binio::atomic_write(path, &buf)
}

pub fn load_ntc(path: &Path) -> Result<NamedTensorSet> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut r = Reader::new(&bytes, path);
    r.magic(NTC_MAGIC, "NTC")?;
    let count = r.u32("entry count")?;
    let mut set = NamedTensorSet::new();
    for _ in 0..count {
        let name = r.str16("tensor name")?;
        if set.get(&name).is_some() {
            return Err(Error::DuplicateName {
                path: path.to_path_buf(),
                name,
            });
        }
        let rank = r.u8("tensor rank")? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            let d = r.u64("tensor dim")?;
            let d = usize::try_from(d).map_err(|_| Error::Corrupt {
                path: path.to_path_buf(),
                what: format!("tensor {name:?}: dimension {d} too large"),
            })?;
            shape.push(d);
        }
        let n = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .filter(|n| n.checked_mul(4).is_some())
            .ok_or_else(|| Error::Corrupt {
                path: path.to_path_buf(),
                what: format!("tensor {name:?}: shape {shape:?} overflows"),
            })?;
        let payload = r.bytes(n * 4, "tensor payload")?;
        let data: Vec<f32> = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let tensor = Tensor::new(shape, data).map_err(|e| Error::Corrupt {
            path: path.to_path_buf(),
            what: format!("tensor {name:?}: {e}"),
        })?;
        set.insert(name, tensor).map_err(|e| Error::Corrupt {
            path: path.to_path_buf(),
            what: e.to_string(),
        })?;
    }
    let meta_count = r.u32("meta count")?;
    for _ in 0..meta_count {
        let k = r.str16("meta key")?;
        let v = r.str16("meta value")?;
        set.set_meta(k, v);
    }
    r.finish()?;
    Ok(set)
}

/// Elementwise `finetuned - base`. Both sets must be structurally identical;
/// the result records the base fingerprint in its metadata.
pub fn compute_task_vector(
    base: &NamedTensorSet,
    finetuned: &NamedTensorSet,
) -> Result<NamedTensorSet> {
    let bfp = base.fingerprint();
    let ffp = finetuned.fingerprint();
    if bfp != ffp {
        return Err(Error::FingerprintMismatch {
            context: "task-vector extraction".to_string(),
            expected: bfp.hex(),
            actual: ffp.hex(),
        });
    }
    let mut out = NamedTensorSet::new();
    for ((name, b), (_, f)) in base.iter().zip(finetuned.iter()) {
        let data: Vec<f32> = b
            .data()
            .iter()
            .zip(f.data())
            .map(|(&bv, &fv)| fv - bv)
            .collect();
        out.insert(name, Tensor::new(b.shape().to_vec(), data)?)?;
    }
    out.set_meta("kind", "task_vector");
    out.set_meta("base_fingerprint", bfp.hex());
    Ok(out)
}

/// Expands a low-rank factorization into a dense delta: `scale * (down @ up)`
/// with `down: d x r`, `up: r x k`. Products accumulate in f64.
pub fn materialize_lowrank(down: &Tensor, up: &Tensor, scale: f32) -> Result<Tensor> {
    let (d, r) = match down.shape() {
        [d, r] => (*d, *r),
        other => {
            return Err(Error::DimMismatch {
                what: format!("down factor must be rank 2, got shape {other:?}"),
            })
        }
    };
    let (r2, k) = match up.shape() {
        [r2, k] => (*r2, *k),
        other => {
            return Err(Error::DimMismatch {
                what: format!("up factor must be rank 2, got shape {other:?}"),
            })
        }
    };
    if r != r2 {
        return Err(Error::DimMismatch {
            what: format!("inner dims disagree: down is {d}x{r}, up is {r2}x{k}"),
        });
    }
    let scale = scale as f64;
    let mut data = vec![0.0f32; d * k];
    for i in 0..d {
        for j in 0..k {
            let mut acc = 0.0f64;
            for l in 0..r {
                acc += down.data()[i * r + l] as f64 * up.data()[l * k + j] as f64;
            }
            data[i * k + j] = (scale * acc) as f32;
        }
    }
    Tensor::new(vec![d, k], data)
}
