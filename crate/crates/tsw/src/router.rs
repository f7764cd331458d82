//! Per-input routing over a set of task switches.
//!
//! A query index holds labelled feature vectors, grouped by task. Routing a
//! query counts task labels among its nearest index rows and turns those
//! counts into convex combination weights. Weight vectors are cached by their
//! exact neighbor counts so a batch only materializes each distinct merge
//! once.

use std::collections::HashMap;
use std::path::Path;

use crate::binarize::TaskSwitchPack;
use crate::binio::{atomic_write, put_f32, put_u32, Reader};
use crate::error::{Error, Result};
use crate::tensorstore::NamedTensorSet;

pub const TQI_MAGIC: &[u8; 4] = b"TQI1";

/// One labelled feature vector. Rows are stored grouped by task id.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryRow {
    task_id: u32,
    feature: Vec<f32>,
}

impl QueryRow {
    pub fn task_id(&self) -> u32 {
        self.task_id
    }

    pub fn feature(&self) -> &[f32] {
        &self.feature
    }
}

/// Distance used to rank index rows against a query.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    /// Squared Euclidean distance. The default everywhere.
    SqEuclidean,
    /// 1 - cosine similarity; a zero vector on either side scores 1.
    Cosine,
}

/// Convex combination weights over tasks, kept alongside the integer neighbor
/// counts they came from when known so equality and caching stay exact.
#[derive(Debug, Clone, PartialEq)]
pub struct RouteWeights {
    w: Vec<f32>,
    counts: Option<(Vec<u32>, u32)>,
}

impl RouteWeights {
    /// w_i = counts_i / c. Counts must sum to exactly c.
    pub fn from_counts(counts: Vec<u32>, c: u32) -> Result<Self> {
        if c == 0 {
            return Err(Error::usage("neighbor count must be at least 1"));
        }
        if counts.is_empty() {
            return Err(Error::EmptyInput {
                what: "route weight vector",
            });
        }
        let sum: u64 = counts.iter().map(|&x| x as u64).sum();
        if sum != c as u64 {
            return Err(Error::usage(format!(
                "neighbor counts sum to {sum}, expected {c}"
            )));
        }
        let w = counts
            .iter()
            .map(|&x| (x as f64 / c as f64) as f32)
            .collect();
        Ok(Self {
            w,
            counts: Some((counts, c)),
        })
    }

    /// Explicit weights; must be finite, non-negative, and sum to 1 within 1e-6.
    pub fn from_weights(w: Vec<f32>) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::EmptyInput {
                what: "route weight vector",
            });
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::usage("route weights must be finite"));
        }
        let out = Self { w, counts: None };
        out.check_simplex()?;
        Ok(out)
    }

    pub fn weights(&self) -> &[f32] {
        &self.w
    }

    pub fn counts(&self) -> Option<(&[u32], u32)> {
        self.counts.as_ref().map(|(c, n)| (c.as_slice(), *n))
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    /// Index of the largest weight; ties go to the lowest index. Uses the
    /// integer counts when present.
    pub fn argmax(&self) -> usize {
        if let Some((counts, _)) = &self.counts {
            let mut best = 0;
            for (i, &v) in counts.iter().enumerate() {
                if v > counts[best] {
                    best = i;
                }
            }
            return best;
        }
        let mut best = 0;
        for (i, &v) in self.w.iter().enumerate() {
            if v > self.w[best] {
                best = i;
            }
        }
        best
    }

    /// Deviation from the probability simplex: |sum - 1| and any negativity.
    pub fn check_simplex(&self) -> Result<()> {
        let sum: f64 = self.w.iter().map(|&v| v as f64).sum();
        let neg: f64 = self
            .w
            .iter()
            .map(|&v| (-(v as f64)).max(0.0))
            .fold(0.0, f64::max);
        let deviation = (sum - 1.0).abs().max(neg);
        if deviation > 1e-6 {
            return Err(Error::OffSimplex { deviation });
        }
        Ok(())
    }

    /// Exact cache key: the counts when present, otherwise the weight bits.
    fn cache_key(&self) -> Vec<u32> {
        match &self.counts {
            Some((c, _)) => c.clone(),
            None => self.w.iter().map(|v| v.to_bits()).collect(),
        }
    }
}

/// Labelled feature rows for routing, grouped by task id.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryIndex {
    num_tasks: u32,
    dim: u32,
    rows: Vec<QueryRow>,
}

impl QueryIndex {
    /// Rows must carry finite features of width `dim` and non-decreasing task
    /// ids below `num_tasks`.
    pub fn new(num_tasks: u32, dim: u32, rows: Vec<QueryRow>) -> Result<Self> {
        if num_tasks == 0 {
            return Err(Error::usage("query index needs at least one task"));
        }
        if dim == 0 {
            return Err(Error::usage("query feature width must be at least 1"));
        }
        let mut prev = 0u32;
        for row in &rows {
            if row.task_id >= num_tasks {
                return Err(Error::usage(format!(
                    "row task id {} out of range for {} tasks",
                    row.task_id, num_tasks
                )));
            }
            if row.task_id < prev {
                return Err(Error::usage("query rows must be grouped by task id"));
            }
            prev = row.task_id;
            if row.feature.len() != dim as usize {
                return Err(Error::DimMismatch {
                    what: format!(
                        "query row has {} features, index is {} wide",
                        row.feature.len(),
                        dim
                    ),
                });
            }
            if row.feature.iter().any(|v| !v.is_finite()) {
                return Err(Error::usage("query features must be finite"));
            }
        }
        Ok(Self {
            num_tasks,
            dim,
            rows,
        })
    }

    pub fn num_tasks(&self) -> u32 {
        self.num_tasks
    }

    pub fn dim(&self) -> u32 {
        self.dim
    }

    pub fn rows(&self) -> &[QueryRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    fn distance(&self, a: &[f32], b: &[f32], metric: Metric) -> f64 {
        match metric {
            Metric::SqEuclidean => a
                .iter()
                .zip(b)
                .map(|(&x, &y)| {
                    let d = x as f64 - y as f64;
                    d * d
                })
                .sum(),
            Metric::Cosine => {
                let mut dot = 0.0f64;
                let mut na = 0.0f64;
                let mut nb = 0.0f64;
                for (&x, &y) in a.iter().zip(b) {
                    dot += x as f64 * y as f64;
                    na += x as f64 * x as f64;
                    nb += y as f64 * y as f64;
                }
                if na == 0.0 || nb == 0.0 {
                    return 1.0;
                }
                1.0 - dot / (na.sqrt() * nb.sqrt())
            }
        }
    }

    /// Neighbor-count weights for `query` under squared Euclidean distance.
    pub fn knn_weights(&self, query: &[f32], c: usize) -> Result<RouteWeights> {
        self.knn_weights_with_metric(query, c, Metric::SqEuclidean)
    }

    /// Ranks rows by (distance, row index) so equidistant rows resolve to the
    /// earlier row, then counts task labels among the closest `c`.
    pub fn knn_weights_with_metric(
        &self,
        query: &[f32],
        c: usize,
        metric: Metric,
    ) -> Result<RouteWeights> {
        if query.len() != self.dim as usize {
            return Err(Error::DimMismatch {
                what: format!(
                    "query has {} features, index is {} wide",
                    query.len(),
                    self.dim
                ),
            });
        }
        if c == 0 || c > self.rows.len() {
            return Err(Error::NeighborCount {
                c,
                rows: self.rows.len(),
            });
        }
        let c_u32 = u32::try_from(c)
            .map_err(|_| Error::usage(format!("neighbor count {c} is too large")))?;
        let mut dists: Vec<(f64, usize)> = self
            .rows
            .iter()
            .enumerate()
            .map(|(i, row)| (self.distance(query, &row.feature, metric), i))
            .collect();
        let order = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if c < dists.len() {
            dists.select_nth_unstable_by(c - 1, order);
        }
        let mut counts = vec![0u32; self.num_tasks as usize];
        for &(_, i) in &dists[..c] {
            counts[self.rows[i].task_id as usize] += 1;
        }
        RouteWeights::from_counts(counts, c_u32)
    }
}

/// Builds an index from per-task feature lists, keeping at most `n_per_task`
/// rows of each task (all of them when `None`).
pub fn build_query_index(
    features_by_task: &[Vec<Vec<f32>>],
    n_per_task: Option<usize>,
) -> Result<QueryIndex> {
    if features_by_task.is_empty() {
        return Err(Error::EmptyInput {
            what: "query example tasks",
        });
    }
    if n_per_task == Some(0) {
        return Err(Error::usage("examples per task must be at least 1"));
    }
    let num_tasks = u32::try_from(features_by_task.len())
        .map_err(|_| Error::usage("too many tasks for a query index"))?;
    let dim = features_by_task
        .iter()
        .flatten()
        .next()
        .map(|f| f.len())
        .ok_or(Error::EmptyInput {
            what: "query example features",
        })?;
    let dim = u32::try_from(dim).map_err(|_| Error::usage("query feature width too large"))?;
    let mut rows = Vec::new();
    for (tid, feats) in features_by_task.iter().enumerate() {
        let take = n_per_task.unwrap_or(feats.len()).min(feats.len());
        if take == 0 {
            return Err(Error::EmptyInput {
                what: "query examples for a task",
            });
        }
        for f in &feats[..take] {
            rows.push(QueryRow {
                task_id: tid as u32,
                feature: f.clone(),
            });
        }
    }
    QueryIndex::new(num_tasks, dim, rows)
}

pub fn encode_tqi(index: &QueryIndex, path: &Path) -> Result<()> {
    let rows = u32::try_from(index.rows.len())
        .map_err(|_| Error::usage("too many rows for a query index file"))?;
    let mut buf = Vec::with_capacity(16 + index.rows.len() * (4 + index.dim as usize * 4));
    buf.extend_from_slice(TQI_MAGIC);
    put_u32(&mut buf, index.num_tasks);
    put_u32(&mut buf, index.dim);
    put_u32(&mut buf, rows);
    for row in &index.rows {
        put_u32(&mut buf, row.task_id);
        for &v in &row.feature {
            put_f32(&mut buf, v);
        }
    }
    atomic_write(path, &buf)
}

pub fn decode_tqi(path: &Path) -> Result<QueryIndex> {
    let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut r = Reader::new(&buf, path);
    r.magic(TQI_MAGIC, "query index")?;
    let num_tasks = r.u32("task count")?;
    let dim = r.u32("feature dim")?;
    let n_rows = r.u32("row count")?;
    let mut rows = Vec::with_capacity(n_rows.min(1 << 20) as usize);
    for _ in 0..n_rows {
        let task_id = r.u32("row task id")?;
        let raw = r.bytes(dim as usize * 4, "query features")?;
        let feature = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        rows.push(QueryRow { task_id, feature });
    }
    r.finish()?;
    QueryIndex::new(num_tasks, dim, rows).map_err(|e| Error::Corrupt {
        path: path.to_path_buf(),
        what: e.to_string(),
    })
}

/// One routed query: its weights, its argmax task, and which entry of
/// `RoutedBatch::merged` holds the model it was applied to.
#[derive(Debug, Clone)]
pub struct RoutedQuery {
    pub weights: RouteWeights,
    pub assignment: usize,
    pub merged_idx: usize,
}

#[derive(Debug, Clone)]
pub struct RoutedBatch {
    pub queries: Vec<RoutedQuery>,
    pub merged: Vec<NamedTensorSet>,
}

impl RoutedBatch {
    pub fn distinct_merges(&self) -> usize {
        self.merged.len()
    }
}

/// Routes every query through the index and applies the weighted switches to
/// the base, materializing each distinct weight vector once.
pub fn route_and_apply(
    base: &NamedTensorSet,
    packs: &[TaskSwitchPack],
    index: &QueryIndex,
    queries: &[Vec<f32>],
    c: usize,
) -> Result<RoutedBatch> {
    if packs.len() != index.num_tasks as usize {
        return Err(Error::usage(format!(
            "{} switches for an index over {} tasks",
            packs.len(),
            index.num_tasks
        )));
    }
    let mut cache: HashMap<Vec<u32>, usize> = HashMap::new();
    let mut merged = Vec::new();
    let mut out = Vec::with_capacity(queries.len());
    for q in queries {
        let weights = index.knn_weights(q, c)?;
        let key = weights.cache_key();
        let merged_idx = match cache.get(&key) {
            Some(&i) => i,
            None => {
                let set = crate::merge::apply_auto(base, packs, &weights)?;
                merged.push(set);
                let i = merged.len() - 1;
                cache.insert(key, i);
                i
            }
        };
        out.push(RoutedQuery {
            assignment: weights.argmax(),
            weights,
            merged_idx,
        });
    }
    Ok(RoutedBatch {
        queries: out,
        merged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::binarize::bin_discard;
    use crate::merge::apply_switch;
    use crate::pulse::Scope;
    use crate::tensorstore::Tensor;
    use proptest::prelude::*;

    fn index_1d(rows: &[(u32, f32)]) -> QueryIndex {
        let rows: Vec<QueryRow> = rows
            .iter()
            .map(|&(task_id, x)| QueryRow {
                task_id,
                feature: vec![x],
            })
            .collect();
        let k = rows_max(&rows) + 1;
        QueryIndex::new(k, 1, rows).unwrap()
    }

    fn rows_max(rows: &[QueryRow]) -> u32 {
        rows.iter().map(|r| r.task_id).max().unwrap_or(0)
    }

    #[test]
    fn knn_counts_labels_among_nearest() {
        let idx = index_1d(&[
            (0, 0.1),
            (0, 0.2),
            (0, 0.4),
            (0, 9.0),
            (1, 0.3),
            (1, 8.0),
            (2, 0.5),
            (2, 7.0),
        ]);
        let w = idx.knn_weights(&[0.0], 5).unwrap();
        assert_eq!(w.counts().unwrap(), (&[3u32, 1, 1][..], 5));
        assert_eq!(w.weights(), &[0.6, 0.2, 0.2]);
        assert_eq!(w.argmax(), 0);
    }

    #[test]
    fn knn_ties_resolve_to_earlier_row() {
        let idx = index_1d(&[(0, 1.0), (1, -1.0)]);
        let w = idx.knn_weights(&[0.0], 1).unwrap();
        assert_eq!(w.counts().unwrap(), (&[1u32, 0][..], 1));
        let w2 = idx.knn_weights(&[0.0], 2).unwrap();
        assert_eq!(w2.counts().unwrap(), (&[1u32, 1][..], 2));
        assert_eq!(w2.argmax(), 0);
    }

    #[test]
    fn knn_rejects_bad_arguments() {
        let idx = index_1d(&[(0, 0.0), (1, 1.0)]);
        assert!(matches!(
            idx.knn_weights(&[0.0], 0).unwrap_err(),
            Error::NeighborCount { c: 0, rows: 2 }
        ));
        assert!(matches!(
            idx.knn_weights(&[0.0], 3).unwrap_err(),
            Error::NeighborCount { c: 3, rows: 2 }
        ));
        assert!(matches!(
            idx.knn_weights(&[0.0, 1.0], 1).unwrap_err(),
            Error::DimMismatch { .. }
        ));
    }

    #[test]
    fn cosine_metric_ignores_scale_and_handles_zero() {
        let rows = vec![
            QueryRow {
                task_id: 0,
                feature: vec![10.0, 0.0],
            },
            QueryRow {
                task_id: 1,
                feature: vec![0.0, 0.1],
            },
        ];
        let idx = QueryIndex::new(2, 2, rows).unwrap();
        // Euclidean would pick the small vector; cosine picks the aligned one.
        let e = idx.knn_weights(&[0.2, 0.0], 1).unwrap();
        assert_eq!(e.argmax(), 1);
        let cos = idx
            .knn_weights_with_metric(&[0.2, 0.0], 1, Metric::Cosine)
            .unwrap();
        assert_eq!(cos.argmax(), 0);
        let zero = idx
            .knn_weights_with_metric(&[0.0, 0.0], 2, Metric::Cosine)
            .unwrap();
        assert_eq!(zero.counts().unwrap(), (&[1u32, 1][..], 2));
    }

    #[test]
    fn weights_constructors_validate() {
        let ok = RouteWeights::from_weights(vec![0.5, 0.5]).unwrap();
        assert_eq!(ok.argmax(), 0);
        assert!(ok.counts().is_none());
        assert!(matches!(
            RouteWeights::from_weights(vec![0.6, 0.5]).unwrap_err(),
            Error::OffSimplex { .. }
        ));
        assert!(matches!(
            RouteWeights::from_weights(vec![-0.1, 1.1]).unwrap_err(),
            Error::OffSimplex { .. }
        ));
        assert!(matches!(
            RouteWeights::from_weights(vec![f32::NAN, 1.0]).unwrap_err(),
            Error::Usage { .. }
        ));
        assert!(matches!(
            RouteWeights::from_counts(vec![2, 1], 5).unwrap_err(),
            Error::Usage { .. }
        ));
        let tie = RouteWeights::from_counts(vec![2, 2, 1], 5).unwrap();
        assert_eq!(tie.argmax(), 0);
    }

    #[test]
    fn index_construction_validates_rows() {
        let bad_order = vec![
            QueryRow {
                task_id: 1,
                feature: vec![0.0],
            },
            QueryRow {
                task_id: 0,
                feature: vec![0.0],
            },
        ];
        assert!(QueryIndex::new(2, 1, bad_order).is_err());
        let bad_id = vec![QueryRow {
            task_id: 2,
            feature: vec![0.0],
        }];
        assert!(QueryIndex::new(2, 1, bad_id).is_err());
        let bad_dim = vec![QueryRow {
            task_id: 0,
            feature: vec![0.0, 1.0],
        }];
        assert!(matches!(
            QueryIndex::new(1, 1, bad_dim).unwrap_err(),
            Error::DimMismatch { .. }
        ));
        let bad_val = vec![QueryRow {
            task_id: 0,
            feature: vec![f32::INFINITY],
        }];
        assert!(QueryIndex::new(1, 1, bad_val).is_err());
    }

    #[test]
    fn build_truncates_per_task_and_checks_emptiness() {
        let feats = vec![
            vec![vec![0.0], vec![1.0], vec![2.0]],
            vec![vec![3.0], vec![4.0]],
        ];
        let idx = build_query_index(&feats, Some(2)).unwrap();
        assert_eq!(idx.len(), 4);
        assert_eq!(idx.rows()[1].feature(), &[1.0]);
        assert_eq!(idx.rows()[2].task_id(), 1);
        let all = build_query_index(&feats, None).unwrap();
        assert_eq!(all.len(), 5);
        let holes = vec![vec![vec![0.0]], vec![]];
        assert!(matches!(
            build_query_index(&holes, None).unwrap_err(),
            Error::EmptyInput { .. }
        ));
    }

    #[test]
    fn tqi_round_trip_is_bit_exact() {
        let rows = vec![
            QueryRow {
                task_id: 0,
                feature: vec![0.5, -1.5e-42],
            },
            QueryRow {
                task_id: 0,
                feature: vec![-0.0, 3.25],
            },
            QueryRow {
                task_id: 2,
                feature: vec![1e30, -7.0],
            },
        ];
        let idx = QueryIndex::new(3, 2, rows).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("q.tqi");
        encode_tqi(&idx, &path).unwrap();
        let back = decode_tqi(&path).unwrap();
        assert_eq!(back, idx);
        let raw = std::fs::read(&path).unwrap();
        assert_eq!(raw.len(), 16 + 3 * (4 + 8));
    }

    #[test]
    fn tqi_decoder_rejects_corruption() {
        let idx = index_1d(&[(0, 1.0), (1, 2.0)]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("q.tqi");
        encode_tqi(&idx, &path).unwrap();
        let good = std::fs::read(&path).unwrap();

        let mut bad = good.clone();
        bad[0] = b'X';
        std::fs::write(&path, &bad).unwrap();
        assert!(matches!(
            decode_tqi(&path).unwrap_err(),
            Error::Magic { .. }
        ));

        // First row's task id (offset 16) bumped out of range.
        let mut bad = good.clone();
        bad[16] = 9;
        std::fs::write(&path, &bad).unwrap();
        assert!(matches!(
            decode_tqi(&path).unwrap_err(),
            Error::Corrupt { .. }
        ));

        // Swap the two rows so task ids decrease.
        let mut bad = good.clone();
        let row: Vec<u8> = bad[16..24].to_vec();
        bad.copy_within(24..32, 16);
        bad[24..32].copy_from_slice(&row);
        std::fs::write(&path, &bad).unwrap();
        assert!(matches!(
            decode_tqi(&path).unwrap_err(),
            Error::Corrupt { .. }
        ));

        let mut bad = good.clone();
        bad.truncate(good.len() - 2);
        std::fs::write(&path, &bad).unwrap();
        assert!(matches!(
            decode_tqi(&path).unwrap_err(),
            Error::Truncated { .. }
        ));

        let mut bad = good.clone();
        bad.push(0);
        std::fs::write(&path, &bad).unwrap();
        assert!(matches!(
            decode_tqi(&path).unwrap_err(),
            Error::TrailingData { .. }
        ));
    }

    #[test]
    fn true_task_weight_degrades_as_neighborhood_grows() {
        let mut rows = Vec::new();
        for (tid, center) in [(0u32, 0.0f32), (1, 10.0), (2, 20.0)] {
            for k in 0..10 {
                rows.push(QueryRow {
                    task_id: tid,
                    feature: vec![center + k as f32 * 0.01, 0.0],
                });
            }
        }
        let idx = QueryIndex::new(3, 2, rows).unwrap();
        let query = vec![0.0f32, 0.0];
        let mut prev = f32::INFINITY;
        for c in [1usize, 5, 10, 15, 20, 30] {
            let w = idx.knn_weights(&query, c).unwrap();
            let own = w.weights()[0];
            assert!(own <= prev, "c={c}: {own} > {prev}");
            prev = own;
        }
        let w15 = idx.knn_weights(&query, 15).unwrap();
        assert_eq!(w15.counts().unwrap(), (&[10u32, 5, 0][..], 15));
        assert_eq!(
            idx.knn_weights(&query, 30).unwrap().weights()[0],
            (10.0f64 / 30.0) as f32
        );
    }

    #[test]
    fn routing_caches_by_exact_counts_and_matches_single_switch() {
        let mut base = NamedTensorSet::new();
        base.insert("w", Tensor::vector(vec![0.5, -0.5, 1.0, 0.0]))
            .unwrap();
        let mut t0 = NamedTensorSet::new();
        t0.insert("w", Tensor::vector(vec![1.0, -1.0, 0.5, 0.25]))
            .unwrap();
        let mut t1 = NamedTensorSet::new();
        t1.insert("w", Tensor::vector(vec![-0.5, 0.75, -0.25, 1.5]))
            .unwrap();
        let (p0, _) = bin_discard(&t0, 0.5, Scope::Global).unwrap();
        let (p1, _) = bin_discard(&t1, 0.5, Scope::Global).unwrap();
        let idx = index_1d(&[(0, 0.0), (0, 0.1), (1, 10.0), (1, 10.1)]);

        let queries = vec![vec![0.0f32], vec![0.05], vec![10.0], vec![5.05]];
        let batch = route_and_apply(&base, &[p0.clone(), p1.clone()], &idx, &queries, 2).unwrap();
        assert_eq!(batch.queries.len(), 4);
        // Queries 0 and 1 share counts [2,0]; query 3 sits at the midpoint,
        // so its two nearest rows straddle the clusters: counts [1,1].
        assert_eq!(batch.distinct_merges(), 3);
        assert_eq!(batch.queries[0].merged_idx, batch.queries[1].merged_idx);
        assert_eq!(batch.queries[0].assignment, 0);
        assert_eq!(batch.queries[2].assignment, 1);

        let direct0 = apply_switch(&base, &p0).unwrap();
        let got = &batch.merged[batch.queries[0].merged_idx];
        let bits = |s: &NamedTensorSet| -> Vec<u32> {
            s.iter()
                .flat_map(|(_, t)| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>())
                .collect()
        };
        assert_eq!(bits(got), bits(&direct0));

        let err = route_and_apply(&base, &[p0], &idx, &queries, 2).unwrap_err();
        assert!(matches!(err, Error::Usage { .. }));
    }

    proptest! {
        #[test]
        fn prop_knn_matches_full_sort_oracle(
            sizes in proptest::collection::vec(1usize..8, 1..5),
            dim in 1usize..4,
            seed in 0u64..1000,
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut rows = Vec::new();
            for (tid, &n) in sizes.iter().enumerate() {
                for _ in 0..n {
                    rows.push(QueryRow {
                        task_id: tid as u32,
                        feature: (0..dim).map(|_| rng.random_range(-4.0f32..4.0)).collect(),
                    });
                }
            }
            let total = rows.len();
            let idx = QueryIndex::new(sizes.len() as u32, dim as u32, rows.clone()).unwrap();
            let query: Vec<f32> = (0..dim).map(|_| rng.random_range(-4.0f32..4.0)).collect();
            for c in 1..=total {
                let got = idx.knn_weights(&query, c).unwrap();
                let mut dists: Vec<(f64, usize)> = rows
                    .iter()
                    .enumerate()
                    .map(|(i, r)| {
                        let d = r.feature.iter().zip(&query)
                            .map(|(&x, &y)| { let e = x as f64 - y as f64; e * e })
                            .sum::<f64>();
                        (d, i)
                    })
                    .collect();
                dists.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                let mut counts = vec![0u32; sizes.len()];
                for &(_, i) in &dists[..c] {
                    counts[rows[i].task_id as usize] += 1;
                }
                prop_assert_eq!(got.counts().unwrap(), (&counts[..], c as u32));
            }
        }

        #[test]
        fn prop_tqi_round_trip(
            sizes in proptest::collection::vec(1usize..5, 1..4),
            dim in 1usize..5,
            seed in 0u64..1000,
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut rows = Vec::new();
            for (tid, &n) in sizes.iter().enumerate() {
                for _ in 0..n {
                    rows.push(QueryRow {
                        task_id: tid as u32,
                        feature: (0..dim).map(|_| rng.random_range(-1e6f32..1e6)).collect(),
                    });
                }
            }
            let idx = QueryIndex::new(sizes.len() as u32, dim as u32, rows).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("x.tqi");
            encode_tqi(&idx, &path).unwrap();
            prop_assert_eq!(decode_tqi(&path).unwrap(), idx);
        }
    }
}
