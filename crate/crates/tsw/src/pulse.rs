//! Keep/discard masks over task vectors and the three discard procedures:
//! drop the small-magnitude tail of each sign pool (`p_discard`), drop the
//! complement (`discard_high`), or drop uniformly at random with rescaling
//! (`dare_discard`).

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bitset::Bitset;
use crate::error::{Error, Result};
use crate::tensorstore::{NamedTensorSet, Tensor};

/// Whether thresholds are computed over the whole flattened set or per tensor.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Scope {
    Global,
    PerTensor,
}

impl Scope {
    pub(crate) fn to_u8(self) -> u8 {
        match self {
            Scope::Global => 0,
            Scope::PerTensor => 1,
        }
    }

    pub(crate) fn from_u8(v: u8) -> Option<Scope> {
        match v {
            0 => Some(Scope::Global),
            1 => Some(Scope::PerTensor),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scope::Global => "global",
            Scope::PerTensor => "per-tensor",
        }
    }
}

/// Keep counts and thresholds for one scope unit (the whole set under
/// `Scope::Global`, one tensor under `Scope::PerTensor`).
///
/// `gamma_u` is the largest discarded positive and `gamma_l` the most negative
/// discarded negative: the boundaries of the discarded region, so the kept
/// elements are exactly those with value > gamma_u or < gamma_l (up to ties at
/// the boundary, which are broken by element index). Both are 0 when nothing
/// from that pool was discarded.
#[derive(Clone, Debug, PartialEq)]
pub struct UnitStats {
    pub unit: String,
    pub kept_pos: usize,
    pub kept_neg: usize,
    pub total: usize,
    pub gamma_u: f32,
    pub gamma_l: f32,
}

/// Per-tensor keep bitsets (1 = kept) plus per-unit statistics. Exact zeros
/// (and NaNs) are never kept.
#[derive(Clone, Debug, PartialEq)]
pub struct PulseMask {
    scope: Scope,
    alpha: f32,
    entries: Vec<(String, Bitset)>,
    units: Vec<UnitStats>,
}

impl PulseMask {
    pub fn scope(&self) -> Scope {
        self.scope
    }

    pub fn alpha(&self) -> f32 {
        self.alpha
    }

    pub fn masks(&self) -> impl Iterator<Item = (&str, &Bitset)> {
        self.entries.iter().map(|(n, b)| (n.as_str(), b))
    }

    pub fn mask(&self, name: &str) -> Option<&Bitset> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, b)| b)
    }

    pub fn units(&self) -> &[UnitStats] {
        &self.units
    }

    /// Total kept elements across all tensors.
    pub fn kept(&self) -> usize {
        self.entries.iter().map(|(_, b)| b.count_ones()).sum()
    }

    /// Kept entries unchanged, discarded entries exactly 0.0.
    pub fn keep_masked(&self, tau: &NamedTensorSet) -> Result<NamedTensorSet> {
        self.apply(tau, |kept, v| if kept { v } else { 0.0 })
    }

    /// The complement on nonzeros: zeroes what `keep_masked` keeps, keeps what
    /// it discards. Exact zeros and NaNs stay zero on both sides.
    pub fn keep_complement(&self, tau: &NamedTensorSet) -> Result<NamedTensorSet> {
        self.apply(tau, |kept, v| {
            if !kept && v != 0.0 && !v.is_nan() {
                v
            } else {
                0.0
            }
        })
    }

    fn apply(&self, tau: &NamedTensorSet, f: impl Fn(bool, f32) -> f32) -> Result<NamedTensorSet> {
        if tau.len() != self.entries.len() {
            return Err(Error::usage("mask was built from a different tensor set"));
        }
        let mut out = NamedTensorSet::new();
        for ((name, t), (mname, bits)) in tau.iter().zip(&self.entries) {
            if name != mname || t.len() != bits.len() {
                return Err(Error::usage("mask was built from a different tensor set"));
            }
            let data: Vec<f32> = t
                .data()
                .iter()
                .enumerate()
                .map(|(i, &v)| f(bits.get(i), v))
                .collect();
            out.insert(name, Tensor::new(t.shape().to_vec(), data)?)?;
        }
        for (k, v) in tau.meta() {
            out.set_meta(k.clone(), v.clone());
        }
        Ok(out)
    }
}

fn check_alpha(alpha: f32) -> Result<()> {
    if alpha.is_finite() && (0.0..1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(Error::InvalidAlpha { alpha })
    }
}

/// Discard count for a pool of `n` elements: floor of `alpha * n` evaluated in
/// f64 on the given f32 alpha. Tests and callers share this one definition.
pub fn discard_count(alpha: f32, n: usize) -> usize {
    (alpha as f64 * n as f64).floor() as usize
}

/// Element reference inside one scope unit: (value, tensor index, element
/// index). Tensor-then-element order is the global flat order, which breaks
/// value ties deterministically (lower index discarded first).
type Ref = (f32, usize, usize);

/// Discards the `discard_count` smallest positives. Returns the largest
/// discarded value (0.0 if none).
fn drop_smallest_positives(pool: &mut [Ref], alpha: f32, bits: &mut [Bitset]) -> (usize, f32) {
    let d = discard_count(alpha, pool.len());
    if d == 0 {
        return (0, 0.0);
    }
    pool.select_nth_unstable_by(d - 1, |a, b| {
        a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2))
    });
    for &(_, ti, i) in pool[..d].iter() {
        bits[ti].set(i, false);
    }
    (d, pool[d - 1].0)
}

/// Discards the `discard_count` negatives closest to zero. Returns the most
/// negative discarded value (0.0 if none).
fn drop_closest_negatives(pool: &mut [Ref], alpha: f32, bits: &mut [Bitset]) -> (usize, f32) {
    let d = discard_count(alpha, pool.len());
    if d == 0 {
        return (0, 0.0);
    }
    pool.select_nth_unstable_by(d - 1, |a, b| {
        b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2))
    });
    for &(_, ti, i) in pool[..d].iter() {
        bits[ti].set(i, false);
    }
    (d, pool[d - 1].0)
}

/// Builds the keep mask: within each scope unit, the floor(alpha * n_pos)
/// positives of smallest value and floor(alpha * n_neg) negatives of smallest
/// magnitude are discarded, zeros always are, everything else is kept.
pub fn pulse_mask(tau: &NamedTensorSet, alpha: f32, scope: Scope) -> Result<PulseMask> {
    check_alpha(alpha)?;
    if tau.is_empty() {
        return Err(Error::EmptyInput {
            what: "task vector set",
        });
    }
    let mut bits: Vec<Bitset> = tau.iter().map(|(_, t)| Bitset::zeros(t.len())).collect();
    let mut units = Vec::new();

    let collect_pools =
        |range: std::ops::Range<usize>, bits: &mut [Bitset]| -> (Vec<Ref>, Vec<Ref>, usize) {
            let mut pos = Vec::new();
            let mut neg = Vec::new();
            let mut total = 0usize;
            for (ti, (_, t)) in tau.iter().enumerate() {
                if !range.contains(&ti) {
                    continue;
                }
                total += t.len();
                for (i, &v) in t.data().iter().enumerate() {
                    if v > 0.0 {
                        bits[ti].set(i, true);
                        pos.push((v, ti, i));
                    } else if v < 0.0 {
                        bits[ti].set(i, true);
                        neg.push((v, ti, i));
                    }
                }
            }
            (pos, neg, total)
        };

    let unit_ranges: Vec<(String, std::ops::Range<usize>)> = match scope {
        Scope::Global => vec![("global".to_string(), 0..tau.len())],
        Scope::PerTensor => tau
            .iter()
            .enumerate()
            .map(|(i, (name, _))| (name.to_string(), i..i + 1))
            .collect(),
    };

    for (unit, range) in unit_ranges {
        let (mut pos, mut neg, total) = collect_pools(range, &mut bits);
        let n_pos = pos.len();
        let n_neg = neg.len();
        let (d_pos, gamma_u) = drop_smallest_positives(&mut pos, alpha, &mut bits);
        let (d_neg, gamma_l) = drop_closest_negatives(&mut neg, alpha, &mut bits);
        units.push(UnitStats {
            unit,
            kept_pos: n_pos - d_pos,
            kept_neg: n_neg - d_neg,
            total,
            gamma_u,
            gamma_l,
        });
    }

    let entries = tau
        .names()
        .map(str::to_string)
        .zip(bits)
        .collect::<Vec<_>>();
    Ok(PulseMask {
        scope,
        alpha,
        entries,
        units,
    })
}

/// Zeroes the small-magnitude tail of each sign pool, keeps the rest.
pub fn p_discard(tau: &NamedTensorSet, alpha: f32, scope: Scope) -> Result<NamedTensorSet> {
    pulse_mask(tau, alpha, scope)?.keep_masked(tau)
}

/// Keeps only what `p_discard` drops (minus exact zeros): the control
/// condition showing the discarded tail carries little task signal.
pub fn discard_high(tau: &NamedTensorSet, alpha: f32, scope: Scope) -> Result<NamedTensorSet> {
    pulse_mask(tau, alpha, scope)?.keep_complement(tau)
}

/// Zeroes each element independently with probability `alpha` and rescales
/// survivors by 1/(1-alpha). The PRNG word position equals the flat element
/// index (tensor order, then element order), so any parallel implementation
/// that seeds per element reproduces this output bit for bit.
pub fn dare_discard(tau: &NamedTensorSet, alpha: f32, seed: u64) -> Result<NamedTensorSet> {
    check_alpha(alpha)?;
    if alpha == 0.0 {
        return Ok(tau.clone());
    }
    let scale = 1.0f32 / (1.0 - alpha);
    let threshold = alpha as f64 * 4_294_967_296.0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = NamedTensorSet::new();
    for (name, t) in tau.iter() {
        // One u32 word per element; sequential draws keep the stream aligned
        // with the flat index.
        let data: Vec<f32> = t
            .data()
            .iter()
            .map(|&v| {
                let word = rng.next_u32();
                if (word as f64) < threshold {
                    0.0
                } else {
                    v * scale
                }
            })
            .collect();
        out.insert(name, Tensor::new(t.shape().to_vec(), data)?)?;
    }
    for (k, v) in tau.meta() {
        out.set_meta(k.clone(), v.clone());
    }
    Ok(out)
}
