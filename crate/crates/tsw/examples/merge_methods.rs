//! Contrast weight averaging, task arithmetic, and norm-preserving direct
//! merging, including the cancellation case where summed task vectors
//! nearly annihilate.
//!
//! ```bash
//! cargo run --example merge_methods
//! ```

use tsw::merge::{direct_merge_with_scale, task_arithmetic, weight_average};
use tsw::tensorstore::{NamedTensorSet, Tensor};

fn set(values: Vec<f32>) -> NamedTensorSet {
    let mut s = NamedTensorSet::new();
    s.insert("w", Tensor::vector(values)).unwrap();
    s
}

fn show(label: &str, s: &NamedTensorSet) {
    println!("{label:<18} {:?}", s.get("w").unwrap().data());
}

fn main() -> tsw::Result<()> {
    let base = set(vec![1.0, 1.0, 1.0, 1.0]);

    // Two orthogonal edits.
    let taus = vec![
        set(vec![0.8, 0.0, -0.6, 0.0]),
        set(vec![0.0, 0.4, 0.0, 0.2]),
    ];
    show("base", &base);
    show("average", &weight_average(&base, &taus)?);
    show("arith c=0.3", &task_arithmetic(&base, &taus, 0.3)?);
    let (merged, scale) = direct_merge_with_scale(&base, &taus)?;
    show("direct", &merged);
    // The rescale stretches the summed delta until its length equals the sum
    // of the input lengths, so orthogonal edits lose nothing to averaging.
    println!("direct scale = {scale:.4}");

    // Opposite edits: the sum is zero, averaging halves nothing into
    // nothing, and the direct merge recognizes total cancellation.
    println!();
    let opposed = vec![
        set(vec![0.5, -0.5, 0.5, -0.5]),
        set(vec![-0.5, 0.5, -0.5, 0.5]),
    ];
    let (merged, scale) = direct_merge_with_scale(&base, &opposed)?;
    show("direct (opposed)", &merged);
    println!("direct scale = {scale} (zero sum leaves the base untouched)");
    assert_eq!(merged, base);

    // Identical edits already point the same way, so no stretch is needed.
    println!();
    let same = vec![
        set(vec![0.3, 0.0, 0.0, -0.3]),
        set(vec![0.3, 0.0, 0.0, -0.3]),
    ];
    let (merged, scale) = direct_merge_with_scale(&base, &same)?;
    show("direct (same)", &merged);
    println!("direct scale = {scale} (aligned vectors sum at full strength)");
    Ok(())
}
