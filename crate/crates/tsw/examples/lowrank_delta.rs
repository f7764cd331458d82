//! Materialize a task vector from low-rank adapter factors: per tensor,
//! tau = scale * down x up, accumulated in f64.
//!
//! ```bash
//! cargo run --example lowrank_delta
//! ```

use tsw::tensorstore::{materialize_lowrank, Tensor};

fn main() -> tsw::Result<()> {
    // A rank-2 factorization of a 3x4 update.
    let down = Tensor::new(vec![3, 2], vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0])?;
    let up = Tensor::new(vec![2, 4], vec![0.1, 0.2, 0.3, 0.4, -0.4, -0.3, -0.2, -0.1])?;

    let tau = materialize_lowrank(&down, &up, 2.0)?;
    println!(
        "down {:?} x up {:?} -> tau {:?}",
        down.shape(),
        up.shape(),
        tau.shape()
    );
    for row in tau.data().chunks(4) {
        println!("  {row:?}");
    }

    // 6 + 8 factor values stand in for 12; the saving grows with the
    // outer dimensions.
    let stored = down.len() + up.len();
    println!(
        "stored {stored} factor values for {} materialized",
        tau.len()
    );

    // Mismatched inner dimensions are rejected up front.
    let bad = Tensor::new(vec![3, 4], vec![0.0; 12])?;
    let err = materialize_lowrank(&down, &bad, 1.0).unwrap_err();
    println!("inner dim mismatch: {err}");
    Ok(())
}
