//! Per-input switching: build a query index over task feature clusters,
//! count nearest neighbors to weight each task's switch, and apply the
//! blend. A one-hot vote reproduces plain single-switch application.
//!
//! ```bash
//! cargo run --example auto_switch_routing
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tsw::binarize::bin_discard;
use tsw::merge::{apply_auto, apply_switch};
use tsw::pulse::Scope;
use tsw::router::{build_query_index, route_and_apply};
use tsw::tensorstore::{NamedTensorSet, Tensor};

fn main() -> tsw::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);

    // One shared base and three task edits in different directions.
    let mut base = NamedTensorSet::new();
    let data: Vec<f32> = (0..64).map(|_| rng.random_range(-1.0..1.0)).collect();
    base.insert("w", Tensor::vector(data))?;

    let mut packs = Vec::new();
    for t in 0..3u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + t);
        let delta: Vec<f32> = (0..64).map(|_| rng.random_range(-0.2..0.2)).collect();
        let mut tau = NamedTensorSet::new();
        tau.insert("w", Tensor::vector(delta))?;
        let (pack, _) = bin_discard(&tau, 0.5, Scope::Global)?;
        packs.push(pack);
    }

    // Each task's example inputs cluster around a distinct center.
    let centers = [[4.0f32, 0.0], [-4.0, 0.0], [0.0, 4.0]];
    let features: Vec<Vec<Vec<f32>>> = centers
        .iter()
        .map(|c| {
            (0..20)
                .map(|_| {
                    vec![
                        c[0] + rng.random_range(-0.5..0.5),
                        c[1] + rng.random_range(-0.5..0.5),
                    ]
                })
                .collect()
        })
        .collect();
    let index = build_query_index(&features, None)?;
    println!(
        "index: {} tasks, {} rows, dim {}",
        index.num_tasks(),
        index.len(),
        index.dim()
    );

    // A query deep inside cluster 0 votes unanimously; its blend is exactly
    // single-switch application of pack 0.
    let w = index.knn_weights(&[4.0, 0.0], 5)?;
    println!("query (4,0):    weights {:?}", w.weights());
    let blended = apply_auto(&base, &packs, &w)?;
    assert_eq!(blended, apply_switch(&base, &packs[0])?);

    // A query between clusters splits its neighborhood.
    let w = index.knn_weights(&[1.8, 1.8], 5)?;
    println!("query (1.8,1.8): weights {:?}", w.weights());

    // Batch routing materializes each distinct weight vector once.
    let queries: Vec<Vec<f32>> = (0..30)
        .map(|i| {
            let c = &centers[i % 3];
            vec![
                c[0] + rng.random_range(-0.5..0.5),
                c[1] + rng.random_range(-0.5..0.5),
            ]
        })
        .collect();
    let batch = route_and_apply(&base, &packs, &index, &queries, 5)?;
    let assignments: Vec<usize> = batch.queries.iter().map(|q| q.assignment).collect();
    println!(
        "batch of {}: {} distinct merged models",
        queries.len(),
        batch.distinct_merges()
    );
    println!("assignments: {assignments:?}");
    Ok(())
}
