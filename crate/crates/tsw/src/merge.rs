//! Weight-space merging: plain averaging, scaled task arithmetic, the
//! norm-rescaled direct merge, single-switch application, and weighted
//! multi-switch application.
//!
//! All reductions over task vectors run in ascending task order with f64
//! accumulators, so results are bit-stable for a given input order.

use crate::binarize::{reconstruct, TaskSwitchPack};
use crate::error::{Error, Result};
use crate::router::RouteWeights;
use crate::tensorstore::{NamedTensorSet, Tensor};

fn check_fingerprints(
    base: &NamedTensorSet,
    others: impl Iterator<Item = crate::tensorstore::Fingerprint>,
    context: &str,
) -> Result<()> {
    let bfp = base.fingerprint();
    for fp in others {
        if fp != bfp {
            return Err(Error::FingerprintMismatch {
                context: context.to_string(),
                expected: bfp.hex(),
                actual: fp.hex(),
            });
        }
    }
    Ok(())
}

/// Per-tensor f64 element sums over `taus`, ascending task order.
fn sum_taus(base: &NamedTensorSet, taus: &[NamedTensorSet]) -> Vec<Vec<f64>> {
    let mut sums: Vec<Vec<f64>> = base.iter().map(|(_, t)| vec![0.0f64; t.len()]).collect();
    for tau in taus {
        for (acc, (_, t)) in sums.iter_mut().zip(tau.iter()) {
            for (a, &v) in acc.iter_mut().zip(t.data()) {
                *a += v as f64;
            }
        }
    }
    sums
}

/// base + delta(tensor index, element index), cast to f32 once per element.
fn apply_delta_f64(base: &NamedTensorSet, delta: impl Fn(usize, usize) -> f64) -> NamedTensorSet {
    let mut out = NamedTensorSet::new();
    for (ti, (name, t)) in base.iter().enumerate() {
        let data: Vec<f32> = t
            .data()
            .iter()
            .enumerate()
            .map(|(i, &b)| (b as f64 + delta(ti, i)) as f32)
            .collect();
        out.insert(name, Tensor::new(t.shape().to_vec(), data).unwrap())
            .unwrap();
    }
    for (k, v) in base.meta() {
        out.set_meta(k.clone(), v.clone());
    }
    out
}

/// Sum of task vectors rescaled so the merged delta's length equals the sum of
/// the individual lengths: base + (sum_i ||tau_i|| / ||sum_i tau_i||) * sum.
/// Norms are taken over the whole flattened set. A zero-length sum (full
/// cancellation) returns the base unchanged.
pub fn direct_merge(base: &NamedTensorSet, taus: &[NamedTensorSet]) -> Result<NamedTensorSet> {
    Ok(direct_merge_with_scale(base, taus)?.0)
}

/// `direct_merge` plus the scale factor it applied (0 when the sum cancelled).
pub fn direct_merge_with_scale(
    base: &NamedTensorSet,
    taus: &[NamedTensorSet],
) -> Result<(NamedTensorSet, f64)> {
    if taus.is_empty() {
        return Err(Error::EmptyInput {
            what: "task vector list",
        });
    }
    check_fingerprints(base, taus.iter().map(|t| t.fingerprint()), "direct merge")?;
    let sums = sum_taus(base, taus);
    let sum_of_norms: f64 = taus
        .iter()
        .map(|tau| {
            tau.iter()
                .flat_map(|(_, t)| t.data())
                .map(|&v| v as f64 * v as f64)
                .sum::<f64>()
                .sqrt()
        })
        .sum();
    let norm_of_sum: f64 = sums
        .iter()
        .flat_map(|acc| acc.iter())
        .map(|&v| v * v)
        .sum::<f64>()
        .sqrt();
    if norm_of_sum == 0.0 {
        return Ok((base.clone(), 0.0));
    }
    let scale = sum_of_norms / norm_of_sum;
    let merged = apply_delta_f64(base, |ti, i| scale * sums[ti][i]);
    Ok((merged, scale))
}

/// base + mean of the task vectors.
pub fn weight_average(base: &NamedTensorSet, taus: &[NamedTensorSet]) -> Result<NamedTensorSet> {
    if taus.is_empty() {
        return Err(Error::EmptyInput {
            what: "task vector list",
        });
    }
    check_fingerprints(base, taus.iter().map(|t| t.fingerprint()), "weight average")?;
    let sums = sum_taus(base, taus);
    let k = taus.len() as f64;
    Ok(apply_delta_f64(base, |ti, i| sums[ti][i] / k))
}

/// base + s * sum of the task vectors.
pub fn task_arithmetic(
    base: &NamedTensorSet,
    taus: &[NamedTensorSet],
    s: f32,
) -> Result<NamedTensorSet> {
    if taus.is_empty() {
        return Err(Error::EmptyInput {
            what: "task vector list",
        });
    }
    check_fingerprints(
        base,
        taus.iter().map(|t| t.fingerprint()),
        "task arithmetic",
    )?;
    let sums = sum_taus(base, taus);
    let s = s as f64;
    Ok(apply_delta_f64(base, |ti, i| s * sums[ti][i]))
}

/// base + the pack's dense reconstruction, plain f32 addition per element.
pub fn apply_switch(base: &NamedTensorSet, pack: &TaskSwitchPack) -> Result<NamedTensorSet> {
    check_fingerprints(
        base,
        std::iter::once(pack.fingerprint()),
        "switch application",
    )?;
    let delta = reconstruct(pack);
    let mut out = NamedTensorSet::new();
    for ((name, b), (_, d)) in base.iter().zip(delta.iter()) {
        let data: Vec<f32> = b
            .data()
            .iter()
            .zip(d.data())
            .map(|(&x, &y)| x + y)
            .collect();
        out.insert(name, Tensor::new(b.shape().to_vec(), data)?)?;
    }
    for (k, v) in base.meta() {
        out.set_meta(k.clone(), v.clone());
    }
    Ok(out)
}

/// base + sum_i w_i * lambda_i * sign_i, summed per element in ascending task
/// order with f64 accumulators. One-hot weights reproduce `apply_switch`
/// bit for bit.
pub fn apply_auto(
    base: &NamedTensorSet,
    packs: &[TaskSwitchPack],
    w: &RouteWeights,
) -> Result<NamedTensorSet> {
    if packs.is_empty() {
        return Err(Error::EmptyInput {
            what: "switch pack list",
        });
    }
    if packs.len() != w.len() {
        return Err(Error::WeightCount {
            expected: packs.len(),
            actual: w.len(),
        });
    }
    w.check_simplex()?;
    check_fingerprints(base, packs.iter().map(|p| p.fingerprint()), "auto switch")?;

    let mut deltas: Vec<Vec<f64>> = base.iter().map(|(_, t)| vec![0.0f64; t.len()]).collect();
    for (pack, &wi) in packs.iter().zip(w.weights()) {
        for (ti, st) in pack.tensors().iter().enumerate() {
            let coeff = pack.lambda_for(ti) as f64 * wi as f64;
            let acc = &mut deltas[ti];
            let mut j = 0usize;
            for (i, a) in acc.iter_mut().enumerate() {
                if st.activation().get(i) {
                    let sign = if st.polarity().get(j) { 1.0 } else { -1.0 };
                    *a += coeff * sign;
                    j += 1;
                }
            }
        }
    }
    Ok(apply_delta_f64(base, |ti, i| deltas[ti][i]))
}
