//! Binarize a task vector into a switch pack: an activation bitset, a
//! polarity bitset over the kept positions, and one scalar knob restoring the
//! kept entries' RMS magnitude. Includes the bit-packed TSW file format.

use std::path::Path;

use crate::binio::{self, Reader};
use crate::bitset::Bitset;
use crate::error::{Error, Result};
use crate::pulse::{pulse_mask, Scope};
use crate::tensorstore::{Fingerprint, NamedTensorSet, Tensor};

pub const TSW_MAGIC: &[u8; 4] = b"TSW1";

/// One tensor's switch data. `polarity` has exactly `activation.count_ones()`
/// bits, one per active position in ascending element order (1 = positive).
#[derive(Clone, Debug, PartialEq)]
pub struct SwitchTensor {
    name: String,
    shape: Vec<usize>,
    activation: Bitset,
    polarity: Bitset,
}

impl SwitchTensor {
    pub fn new(
        name: String,
        shape: Vec<usize>,
        activation: Bitset,
        polarity: Bitset,
    ) -> Result<Self> {
        let n: usize = shape.iter().product();
        if shape.contains(&0) || n != activation.len() {
            return Err(Error::internal(format!(
                "switch tensor {name:?}: shape {shape:?} disagrees with mask length {}",
                activation.len()
            )));
        }
        if activation.count_ones() != polarity.len() {
            return Err(Error::internal(format!(
                "switch tensor {name:?}: {} active bits but {} polarity bits",
                activation.count_ones(),
                polarity.len()
            )));
        }
        Ok(SwitchTensor {
            name,
            shape,
            activation,
            polarity,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn activation(&self) -> &Bitset {
        &self.activation
    }

    pub fn polarity(&self) -> &Bitset {
        &self.polarity
    }

    /// Element count.
    pub fn len(&self) -> usize {
        self.activation.len()
    }

    pub fn is_empty(&self) -> bool {
        self.activation.is_empty()
    }

    pub fn active(&self) -> usize {
        self.polarity.len()
    }
}

/// The scalar knob: one lambda for the whole pack or one per tensor.
#[derive(Clone, Debug, PartialEq)]
pub enum Knob {
    Global(f32),
    PerTensor(Vec<f32>),
}

/// Binarized task vector. Reconstruction places +/-lambda at active positions
/// (sign from the polarity bits) and exact 0.0 everywhere else.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskSwitchPack {
    scope: Scope,
    alpha: f32,
    fingerprint: Fingerprint,
    tensors: Vec<SwitchTensor>,
    knob: Knob,
}

impl TaskSwitchPack {
    pub fn new(
        scope: Scope,
        alpha: f32,
        fingerprint: Fingerprint,
        tensors: Vec<SwitchTensor>,
        knob: Knob,
    ) -> Result<Self> {
        let pack = TaskSwitchPack {
            scope,
            alpha,
            fingerprint,
            tensors,
            knob,
        };
        pack.validate()?;
        Ok(pack)
    }

    fn validate(&self) -> Result<()> {
        match (&self.knob, self.scope) {
            (Knob::Global(l), Scope::Global) => {
                let k = self.total_active();
                if !(l.is_finite() && *l >= 0.0) || (*l == 0.0) != (k == 0) {
                    return Err(Error::internal(format!(
                        "global knob {l} inconsistent with {k} active elements"
                    )));
                }
            }
            (Knob::PerTensor(ls), Scope::PerTensor) => {
                if ls.len() != self.tensors.len() {
                    return Err(Error::internal("per-tensor knob count mismatch"));
                }
                for (l, t) in ls.iter().zip(&self.tensors) {
                    if !(l.is_finite() && *l >= 0.0) || (*l == 0.0) != (t.active() == 0) {
                        return Err(Error::internal(format!(
                            "knob {l} inconsistent with {} active elements in {:?}",
                            t.active(),
                            t.name()
                        )));
                    }
                }
            }
            _ => return Err(Error::internal("knob layout disagrees with scope")),
        }
        Ok(())
    }

    pub fn scope(&self) -> Scope {
        self.scope
    }

    pub fn alpha(&self) -> f32 {
        self.alpha
    }

    pub fn fingerprint(&self) -> Fingerprint {
        self.fingerprint
    }

    pub fn tensors(&self) -> &[SwitchTensor] {
        &self.tensors
    }

    pub fn knob(&self) -> &Knob {
        &self.knob
    }

    /// Lambda applying to tensor `idx`.
    pub fn lambda_for(&self, idx: usize) -> f32 {
        match &self.knob {
            Knob::Global(l) => *l,
            Knob::PerTensor(ls) => ls[idx],
        }
    }

    pub fn total_params(&self) -> usize {
        self.tensors.iter().map(|t| t.len()).sum()
    }

    pub fn total_active(&self) -> usize {
        self.tensors.iter().map(|t| t.active()).sum()
    }

    /// Exact byte length of the serialized pack.
    pub fn encoded_len(&self) -> u64 {
        // magic + scope + alpha + tensor count + fingerprint
        let mut len: u64 = 4 + 1 + 4 + 4 + 16;
        for t in &self.tensors {
            len += 2 + t.name().len() as u64; // name
            len += 1 + 8 * t.shape().len() as u64; // rank + dims
            len += 8; // active count
            len += t.activation.bytes().len() as u64;
            len += t.polarity.bytes().len() as u64;
            if self.scope == Scope::PerTensor {
                len += 4;
            }
        }
        if self.scope == Scope::Global {
            len += 4;
        }
        len
    }
}

/// Size summary for a pack: serialized bytes, bits per parameter, and the
/// ratio against 32-bit floats.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StorageReport {
    pub bytes_serialized: u64,
    pub bits_per_parameter: f64,
    pub ratio_vs_fp32: f64,
}

pub fn storage_report(pack: &TaskSwitchPack) -> StorageReport {
    let bytes = pack.encoded_len();
    let n = pack.total_params();
    let bits = if n == 0 {
        0.0
    } else {
        8.0 * bytes as f64 / n as f64
    };
    StorageReport {
        bytes_serialized: bytes,
        bits_per_parameter: bits,
        ratio_vs_fp32: bits / 32.0,
    }
}

/// Binarizes `tau`: masks the small-magnitude tail at ratio `alpha`, records
/// each kept entry's sign, and restores magnitude with lambda = RMS of the
/// kept entries (computed in f64 over ascending element order, per scope
/// unit). Returns the pack and its dense reconstruction.
pub fn bin_discard(
    tau: &NamedTensorSet,
    alpha: f32,
    scope: Scope,
) -> Result<(TaskSwitchPack, NamedTensorSet)> {
    let mask = pulse_mask(tau, alpha, scope)?;
    let mut tensors = Vec::with_capacity(tau.len());
    for (name, t) in tau.iter() {
        let bits = mask.mask(name).expect("mask covers every tensor");
        let mut polarity = Bitset::zeros(bits.count_ones());
        let mut j = 0usize;
        for (i, &v) in t.data().iter().enumerate() {
            if bits.get(i) {
                polarity.set(j, v > 0.0);
                j += 1;
            }
        }
        tensors.push(SwitchTensor::new(
            name.to_string(),
            t.shape().to_vec(),
            bits.clone(),
            polarity,
        )?);
    }

    let rms_over = |range: std::ops::Range<usize>| -> f32 {
        let mut sum = 0.0f64;
        let mut k = 0usize;
        for (ti, (name, t)) in tau.iter().enumerate() {
            if !range.contains(&ti) {
                continue;
            }
            let bits = mask.mask(name).unwrap();
            for (i, &v) in t.data().iter().enumerate() {
                if bits.get(i) {
                    sum += v as f64 * v as f64;
                    k += 1;
                }
            }
        }
        if k == 0 {
            0.0
        } else {
            (sum / k as f64).sqrt() as f32
        }
    };

    let knob = match scope {
        Scope::Global => Knob::Global(rms_over(0..tau.len())),
        Scope::PerTensor => Knob::PerTensor((0..tau.len()).map(|i| rms_over(i..i + 1)).collect()),
    };

    let pack = TaskSwitchPack::new(scope, alpha, tau.fingerprint(), tensors, knob)?;
    let tau_hat = reconstruct(&pack);
    Ok((pack, tau_hat))
}

/// Dense reconstruction: +/-lambda at active positions, exact 0.0 elsewhere.
/// Bit-identical to the set `bin_discard` returns.
pub fn reconstruct(pack: &TaskSwitchPack) -> NamedTensorSet {
    let mut out = NamedTensorSet::new();
    for (idx, t) in pack.tensors().iter().enumerate() {
        let lambda = pack.lambda_for(idx);
        let mut data = vec![0.0f32; t.len()];
        let mut j = 0usize;
        for (i, slot) in data.iter_mut().enumerate() {
            if t.activation().get(i) {
                *slot = if t.polarity().get(j) { lambda } else { -lambda };
                j += 1;
            }
        }
        out.insert(
            t.name().to_string(),
            Tensor::new(t.shape().to_vec(), data).expect("pack shapes are valid"),
        )
        .expect("pack names are unique");
    }
    out.set_meta("kind", "task_vector");
    out
}

/// Serializes a pack; atomic like every writer in this crate.
pub fn encode_tsw(pack: &TaskSwitchPack, path: &Path) -> Result<()> {
    let mut buf = Vec::with_capacity(pack.encoded_len() as usize);
    buf.extend_from_slice(TSW_MAGIC);
    buf.push(pack.scope().to_u8());
    binio::put_f32(&mut buf, pack.alpha());
    binio::put_u32(&mut buf, pack.tensors().len() as u32);
    buf.extend_from_slice(pack.fingerprint().bytes());
    for (idx, t) in pack.tensors().iter().enumerate() {
        binio::put_str16(&mut buf, t.name())?;
        buf.push(t.shape().len() as u8);
        for &d in t.shape() {
            binio::put_u64(&mut buf, d as u64);
        }
        binio::put_u64(&mut buf, t.active() as u64);
        buf.extend_from_slice(t.activation().bytes());
        buf.extend_from_slice(t.polarity().bytes());
        if pack.scope() == Scope::PerTensor {
            binio::put_f32(&mut buf, pack.lambda_for(idx));
        }
    }
    if let Knob::Global(l) = pack.knob() {
        binio::put_f32(&mut buf, *l);
    }
    binio::atomic_write(path, &buf)
}

pub fn decode_tsw(path: &Path) -> Result<TaskSwitchPack> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut r = Reader::new(&bytes, path);
    r.magic(TSW_MAGIC, "TSW")?;
    let corrupt = |what: String| Error::Corrupt {
        path: path.to_path_buf(),
        what,
    };
    let scope_byte = r.u8("scope")?;
    let scope = Scope::from_u8(scope_byte)
        .ok_or_else(|| corrupt(format!("unknown scope byte {scope_byte}")))?;
    let alpha = r.f32("alpha")?;
    if !(alpha.is_finite() && (0.0..1.0).contains(&alpha)) {
        return Err(corrupt(format!("alpha {alpha} outside [0, 1)")));
    }
    let count = r.u32("tensor count")?;
    let fp_bytes: [u8; 16] = r.bytes(16, "fingerprint")?.try_into().unwrap();
    let fingerprint = Fingerprint::from_bytes(fp_bytes);

    let mut tensors = Vec::with_capacity(count as usize);
    let mut lambdas = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for _ in 0..count {
        let name = r.str16("tensor name")?;
        if !seen.insert(name.clone()) {
            return Err(Error::DuplicateName {
                path: path.to_path_buf(),
                name,
            });
        }
        let rank = r.u8("tensor rank")? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            let d = r.u64("tensor dim")?;
            let d = usize::try_from(d)
                .ok()
                .filter(|&d| d > 0)
                .ok_or_else(|| corrupt(format!("tensor {name:?}: bad dimension {d}")))?;
            shape.push(d);
        }
        let n = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| corrupt(format!("tensor {name:?}: shape {shape:?} overflows")))?;
        let k = r.u64("active count")?;
        let k = usize::try_from(k)
            .ok()
            .filter(|&k| k <= n)
            .ok_or_else(|| corrupt(format!("tensor {name:?}: active count {k} exceeds {n}")))?;
        let mask_bytes = r.bytes(n.div_ceil(8), "activation mask")?.to_vec();
        let activation = Bitset::from_bytes(n, mask_bytes)
            .ok_or_else(|| corrupt(format!("tensor {name:?}: nonzero mask tail bits")))?;
        let counted = activation.count_ones();
        if counted != k {
            return Err(Error::Popcount {
                path: path.to_path_buf(),
                name,
                stored: k as u64,
                counted: counted as u64,
            });
        }
        let pol_bytes = r.bytes(k.div_ceil(8), "polarity bits")?.to_vec();
        let polarity = Bitset::from_bytes(k, pol_bytes)
            .ok_or_else(|| corrupt(format!("tensor {name:?}: nonzero polarity tail bits")))?;
        if scope == Scope::PerTensor {
            lambdas.push(r.f32("tensor knob")?);
        }
        tensors.push(
            SwitchTensor::new(name, shape, activation, polarity)
                .map_err(|e| corrupt(e.to_string()))?,
        );
    }
    let knob = match scope {
        Scope::Global => Knob::Global(r.f32("global knob")?),
        Scope::PerTensor => Knob::PerTensor(lambdas),
    };
    r.finish()?;
    TaskSwitchPack::new(scope, alpha, fingerprint, tensors, knob)
        .map_err(|e| corrupt(e.to_string()))
}
