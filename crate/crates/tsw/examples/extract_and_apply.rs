//! Extract a task vector from a base/fine-tuned checkpoint pair, round-trip
//! it through the container format, and re-apply it with task arithmetic.
//!
//! ```bash
//! cargo run --example extract_and_apply
//! ```

use tsw::tensorstore::{compute_task_vector, load_ntc, save_ntc, NamedTensorSet, Tensor};

fn l2(set: &NamedTensorSet) -> f64 {
    set.iter()
        .flat_map(|(_, t)| t.data())
        .map(|&v| v as f64 * v as f64)
        .sum::<f64>()
        .sqrt()
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // A two-layer stand-in checkpoint. Shapes carry through every operation.
    let mut base = NamedTensorSet::new();
    base.insert(
        "W1",
        Tensor::new(vec![2, 3], vec![0.5, -0.2, 0.1, 0.0, 0.3, -0.4])?,
    )?;
    base.insert("b1", Tensor::vector(vec![0.0, 0.0, 0.0]))?;

    let mut finetuned = base.clone();
    for name in ["W1", "b1"] {
        for v in finetuned.get_mut(name).unwrap().data_mut() {
            *v += 0.25;
        }
    }

    let tau = compute_task_vector(&base, &finetuned)?;
    // The fingerprint keys tensor names and shapes; merge operations use it
    // to refuse vectors extracted from a differently shaped base.
    println!("structure fingerprint {}", base.fingerprint().hex());
    println!(
        "tau: {} tensors, {} parameters, l2 {:.4}",
        tau.len(),
        tau.total_elements(),
        l2(&tau)
    );
    for (key, value) in tau.meta() {
        println!("tau meta: {key} = {value}");
    }

    // Round trip to disk. The container is byte-deterministic, so saving the
    // same set twice yields the same file.
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("tau.ntc");
    save_ntc(&tau, &path)?;
    let back = load_ntc(&path)?;
    assert_eq!(back, tau);
    println!(
        "round trip ok: {} bytes on disk",
        std::fs::metadata(&path)?.len()
    );

    // Applying the vector at coefficient 1 recovers the fine-tune up to f32
    // addition rounding.
    let rebuilt = tsw::merge::task_arithmetic(&base, &[back], 1.0)?;
    let mut worst = 0.0f32;
    for ((_, a), (_, b)) in rebuilt.iter().zip(finetuned.iter()) {
        for (x, y) in a.data().iter().zip(b.data()) {
            worst = worst.max((x - y).abs());
        }
    }
    println!("max |rebuilt - finetuned| = {worst:e}");
    Ok(())
}
