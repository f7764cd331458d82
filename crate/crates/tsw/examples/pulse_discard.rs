//! Compare the three discard operators on one task vector: keeping the
//! largest positives and most-negative negatives, keeping the complement,
//! and random drop with rescale.
//!
//! ```bash
//! cargo run --example pulse_discard
//! ```

use tsw::pulse::{dare_discard, discard_count, discard_high, p_discard, pulse_mask, Scope};
use tsw::tensorstore::{NamedTensorSet, Tensor};

fn summarize(label: &str, set: &NamedTensorSet) {
    let data: Vec<f32> = set.iter().flat_map(|(_, t)| t.data().to_vec()).collect();
    let nonzero = data.iter().filter(|v| **v != 0.0).count();
    let l1: f64 = data.iter().map(|&v| v.abs() as f64).sum();
    println!(
        "{label:<12} nonzero {nonzero:>3} / {:>3}   l1 {l1:>8.3}",
        data.len()
    );
}

fn main() -> tsw::Result<()> {
    // Magnitudes ramp from tiny to large in both signs, so the operators
    // separate cleanly.
    let mut values = Vec::new();
    for i in 1..=50 {
        values.push(i as f32 * 0.01);
        values.push(-(i as f32) * 0.013);
    }
    let mut tau = NamedTensorSet::new();
    tau.insert("w", Tensor::vector(values))?;

    let alpha = 0.4;
    println!(
        "alpha {alpha}: drops {} of 50 positives and {} of 50 negatives\n",
        discard_count(alpha, 50),
        discard_count(alpha, 50)
    );

    summarize("input", &tau);
    summarize("pulse", &p_discard(&tau, alpha, Scope::Global)?);
    summarize("complement", &discard_high(&tau, alpha, Scope::Global)?);
    summarize("random", &dare_discard(&tau, alpha, 7)?);

    // The pulse mask and its complement split every entry between them.
    let mask = pulse_mask(&tau, alpha, Scope::Global)?;
    let kept = mask.keep_masked(&tau)?;
    let dropped = mask.keep_complement(&tau)?;
    let k = kept
        .iter()
        .flat_map(|(_, t)| t.data())
        .filter(|v| **v != 0.0)
        .count();
    let d = dropped
        .iter()
        .flat_map(|(_, t)| t.data())
        .filter(|v| **v != 0.0)
        .count();
    assert_eq!(k + d, 100);
    println!("\nmask splits the vector: {k} kept + {d} dropped = 100");

    // Random drop rescales survivors by 1/(1-alpha); over many entries the
    // l1 mass is roughly preserved while pulse sheds the small entries.
    let survivors = dare_discard(&tau, alpha, 7)?;
    let max_in: f32 = tau
        .get("w")
        .unwrap()
        .data()
        .iter()
        .fold(0.0, |a, &v| a.max(v.abs()));
    let max_out: f32 = survivors
        .get("w")
        .unwrap()
        .data()
        .iter()
        .fold(0.0, |a, &v| a.max(v.abs()));
    println!("random rescale: max |entry| {max_in} -> {max_out}");
    Ok(())
}
