//! Benchmark drivers. `run_controlled` sweeps discard variants over an alpha
//! grid on per-task models; `run_merging_bench` compares merge strategies and
//! per-input routing. Both emit flat report rows suitable for CSV.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::BenchConfig;
use super::model::{argmax, evaluate, train, MlpSpec, TrainOpts};
use super::suite::{gen_suite, TaskSuite};
use crate::binarize::{bin_discard, TaskSwitchPack};
use crate::binio::atomic_write;
use crate::error::{Error, Result};
use crate::merge::{apply_switch, direct_merge, task_arithmetic, weight_average};
use crate::pulse::{dare_discard, discard_high, p_discard, Scope};
use crate::router::{build_query_index, route_and_apply};
use crate::tensorstore::{compute_task_vector, NamedTensorSet};

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent seed per (run seed, purpose) pair.
fn subseed(seed: u64, stream: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ splitmix64(stream ^ 0x5851_F42D_4C95_7F2D))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub experiment: String,
    pub alpha: f64,
    pub method: String,
    pub task: String,
    pub metric: String,
    pub value: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BenchReport {
    pub rows: Vec<ReportRow>,
}

impl BenchReport {
    pub fn to_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in &self.rows {
            w.serialize(row)
                .map_err(|e| Error::internal(format!("csv encoding failed: {e}")))?;
        }
        let buf = w
            .into_inner()
            .map_err(|e| Error::internal(format!("csv encoding failed: {e}")))?;
        atomic_write(path, &buf)
    }

    pub fn mean_where<F: Fn(&ReportRow) -> bool>(&self, pred: F) -> Option<f64> {
        let vals: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| pred(r))
            .map(|r| r.value)
            .collect();
        if vals.is_empty() {
            return None;
        }
        Some(vals.iter().sum::<f64>() / vals.len() as f64)
    }
}

fn push_rows(
    rows: &mut Vec<ReportRow>,
    experiment: &str,
    alpha: f64,
    method: &str,
    metric: &str,
    per_task: &[f64],
    seed: u64,
) {
    for (t, &value) in per_task.iter().enumerate() {
        rows.push(ReportRow {
            experiment: experiment.to_string(),
            alpha,
            method: method.to_string(),
            task: format!("task{t}"),
            metric: metric.to_string(),
            value,
            seed,
        });
    }
    rows.push(ReportRow {
        experiment: experiment.to_string(),
        alpha,
        method: method.to_string(),
        task: "avg".to_string(),
        metric: metric.to_string(),
        value: per_task.iter().sum::<f64>() / per_task.len() as f64,
        seed,
    });
}

/// Everything one seed produces before any discarding: the suite, the shared
/// pretrained base, per-task fine-tunes, and their task vectors.
pub struct SeedRun {
    pub spec: MlpSpec,
    pub suite: TaskSuite,
    pub base: NamedTensorSet,
    pub finetuned: Vec<NamedTensorSet>,
    pub taus: Vec<NamedTensorSet>,
}

pub fn prepare_seed_run(cfg: &BenchConfig, seed: u64) -> Result<SeedRun> {
    cfg.validate()?;
    let suite = gen_suite(&cfg.suite, subseed(seed, 1));
    let spec =
        MlpSpec::from_layer_sizes(cfg.suite.input_dim, &cfg.suite.hidden, cfg.suite.classes)?;
    let mut base = spec.init_params(subseed(seed, 2));
    train(
        &spec,
        &mut base,
        &suite.pretrain,
        &TrainOpts::from(&cfg.pretrain),
        subseed(seed, 3),
    )?;
    let mut finetuned = Vec::with_capacity(cfg.suite.tasks);
    let mut taus = Vec::with_capacity(cfg.suite.tasks);
    for t in 0..cfg.suite.tasks {
        let mut p = base.clone();
        train(
            &spec,
            &mut p,
            &suite.tasks[t].train,
            &TrainOpts::from(&cfg.finetune),
            subseed(seed, 16 + t as u64),
        )?;
        taus.push(compute_task_vector(&base, &p)?);
        finetuned.push(p);
    }
    Ok(SeedRun {
        spec,
        suite,
        base,
        finetuned,
        taus,
    })
}

/// base + tau, bit-identical to plain f32 addition per element.
fn add_delta(base: &NamedTensorSet, tau: &NamedTensorSet) -> Result<NamedTensorSet> {
    task_arithmetic(base, std::slice::from_ref(tau), 1.0)
}

/// Per-task discard sweep: keeps-vs-drops variants of each task vector plus
/// direct merges of the processed vectors, across the configured alpha grid.
pub fn run_controlled(cfg: &BenchConfig) -> Result<BenchReport> {
    cfg.validate()?;
    let mut rows = Vec::new();
    for &seed in &cfg.controlled.seeds {
        let run = prepare_seed_run(cfg, seed)?;
        let ntasks = run.taus.len();
        let eval_on = |params: &NamedTensorSet, t: usize| -> Result<f64> {
            evaluate(&run.spec, params, &run.suite.tasks[t].test)
        };
        let eval_all = |params: &NamedTensorSet| -> Result<Vec<f64>> {
            (0..ntasks).map(|t| eval_on(params, t)).collect()
        };

        let pre: Vec<f64> = eval_all(&run.base)?;
        push_rows(
            &mut rows,
            "controlled",
            0.0,
            "pretrained",
            "accuracy",
            &pre,
            seed,
        );
        let ft: Vec<f64> = (0..ntasks)
            .map(|t| eval_on(&run.finetuned[t], t))
            .collect::<Result<_>>()?;
        push_rows(
            &mut rows,
            "controlled",
            0.0,
            "finetuned",
            "accuracy",
            &ft,
            seed,
        );

        let raw_merge = direct_merge(&run.base, &run.taus)?;
        push_rows(
            &mut rows,
            "controlled",
            0.0,
            "merge_raw",
            "accuracy",
            &eval_all(&raw_merge)?,
            seed,
        );

        for (ai, &alpha) in cfg.controlled.alphas.iter().enumerate() {
            let mut pd_taus = Vec::with_capacity(ntasks);
            let mut dare_taus = Vec::with_capacity(ntasks);
            let mut bd_taus = Vec::with_capacity(ntasks);
            let mut pd = Vec::with_capacity(ntasks);
            let mut dh = Vec::with_capacity(ntasks);
            let mut dare = Vec::with_capacity(ntasks);
            let mut bd = Vec::with_capacity(ntasks);
            for t in 0..ntasks {
                let tau = &run.taus[t];
                let kept = p_discard(tau, alpha, Scope::Global)?;
                pd.push(eval_on(&add_delta(&run.base, &kept)?, t)?);

                let complement = discard_high(tau, alpha, Scope::Global)?;
                dh.push(eval_on(&add_delta(&run.base, &complement)?, t)?);

                let randomized =
                    dare_discard(tau, alpha, subseed(seed, 4096 + (ai * 1024 + t) as u64))?;
                dare.push(eval_on(&add_delta(&run.base, &randomized)?, t)?);

                let (pack, tau_hat) = bin_discard(tau, alpha, Scope::Global)?;
                bd.push(eval_on(&apply_switch(&run.base, &pack)?, t)?);

                pd_taus.push(kept);
                dare_taus.push(randomized);
                bd_taus.push(tau_hat);
            }
            let a = alpha as f64;
            push_rows(
                &mut rows,
                "controlled",
                a,
                "p_discard",
                "accuracy",
                &pd,
                seed,
            );
            push_rows(
                &mut rows,
                "controlled",
                a,
                "discard_high",
                "accuracy",
                &dh,
                seed,
            );
            push_rows(
                &mut rows,
                "controlled",
                a,
                "dare_random",
                "accuracy",
                &dare,
                seed,
            );
            push_rows(
                &mut rows,
                "controlled",
                a,
                "bin_discard",
                "accuracy",
                &bd,
                seed,
            );

            for (method, taus) in [
                ("merge_p_discard", &pd_taus),
                ("merge_dare", &dare_taus),
                ("merge_bin_discard", &bd_taus),
            ] {
                let merged = direct_merge(&run.base, taus)?;
                push_rows(
                    &mut rows,
                    "controlled",
                    a,
                    method,
                    "accuracy",
                    &eval_all(&merged)?,
                    seed,
                );
            }
        }
    }
    Ok(BenchReport { rows })
}

/// Merge-strategy comparison at one alpha: dense merges of raw task vectors,
/// per-task switches, and routed per-input switching.
pub fn run_merging_bench(cfg: &BenchConfig) -> Result<BenchReport> {
    cfg.validate()?;
    if cfg.suite.tasks < 2 {
        return Err(Error::Config {
            what: "the merging benchmark needs at least 2 tasks".to_string(),
        });
    }
    let alpha = cfg.merging.alpha as f64;
    let mut rows = Vec::new();
    for &seed in &cfg.merging.seeds {
        let run = prepare_seed_run(cfg, seed)?;
        let ntasks = run.taus.len();
        let classes = cfg.suite.classes;
        let eval_on = |params: &NamedTensorSet, t: usize| -> Result<f64> {
            evaluate(&run.spec, params, &run.suite.tasks[t].test)
        };
        let eval_all = |params: &NamedTensorSet| -> Result<Vec<f64>> {
            (0..ntasks).map(|t| eval_on(params, t)).collect()
        };

        push_rows(
            &mut rows,
            "merging",
            0.0,
            "pretrained",
            "accuracy",
            &eval_all(&run.base)?,
            seed,
        );
        let ft: Vec<f64> = (0..ntasks)
            .map(|t| eval_on(&run.finetuned[t], t))
            .collect::<Result<_>>()?;
        push_rows(
            &mut rows,
            "merging",
            0.0,
            "finetuned",
            "accuracy",
            &ft,
            seed,
        );

        let wa = weight_average(&run.base, &run.taus)?;
        push_rows(
            &mut rows,
            "merging",
            0.0,
            "weight_average",
            "accuracy",
            &eval_all(&wa)?,
            seed,
        );
        let ta = task_arithmetic(&run.base, &run.taus, cfg.merging.arith_coef)?;
        push_rows(
            &mut rows,
            "merging",
            0.0,
            "task_arithmetic",
            "accuracy",
            &eval_all(&ta)?,
            seed,
        );
        let backbone = direct_merge(&run.base, &run.taus)?;
        push_rows(
            &mut rows,
            "merging",
            0.0,
            "direct_merge",
            "accuracy",
            &eval_all(&backbone)?,
            seed,
        );

        let packs: Vec<TaskSwitchPack> = run
            .taus
            .iter()
            .map(|tau| Ok(bin_discard(tau, cfg.merging.alpha, Scope::Global)?.0))
            .collect::<Result<_>>()?;
        let tsw: Vec<f64> = (0..ntasks)
            .map(|t| eval_on(&apply_switch(&run.base, &packs[t])?, t))
            .collect::<Result<_>>()?;
        push_rows(
            &mut rows, "merging", alpha, "t_switch", "accuracy", &tsw, seed,
        );

        // Index features come from training inputs, class-stratified so every
        // label is represented; queries are the held-out test inputs.
        let bb_view = run.spec.view(&backbone)?;
        let mut feats_by_task = Vec::with_capacity(ntasks);
        for t in 0..ntasks {
            let train_xs = &run.suite.tasks[t].train.xs;
            let per_class = cfg.suite.train_per_class;
            let mut feats = Vec::with_capacity(cfg.merging.queries_per_task);
            for k in 0..cfg.merging.queries_per_task {
                let idx = (k % classes) * per_class + k / classes;
                feats.push(bb_view.feature(&train_xs[idx])?);
            }
            feats_by_task.push(feats);
        }
        let index = build_query_index(&feats_by_task, None)?;

        let mut auto = Vec::with_capacity(ntasks);
        let mut routing = Vec::with_capacity(ntasks);
        let mut distinct = Vec::with_capacity(ntasks);
        for t in 0..ntasks {
            let test = &run.suite.tasks[t].test;
            let qfeats: Vec<Vec<f32>> = test
                .xs
                .iter()
                .map(|x| bb_view.feature(x))
                .collect::<Result<_>>()?;
            let batch = route_and_apply(&run.base, &packs, &index, &qfeats, cfg.merging.neighbors)?;
            let views: Vec<_> = batch
                .merged
                .iter()
                .map(|m| run.spec.view(m))
                .collect::<Result<_>>()?;
            let mut route_hits = 0u64;
            let mut auto_hits = 0u64;
            for (i, q) in batch.queries.iter().enumerate() {
                if q.assignment == t {
                    route_hits += 1;
                }
                let pred = argmax(&views[q.merged_idx].logits(&test.xs[i]));
                if pred == test.ys[i] {
                    auto_hits += 1;
                }
            }
            auto.push(auto_hits as f64 / test.len() as f64);
            routing.push(route_hits as f64 / test.len() as f64);
            distinct.push(batch.distinct_merges() as f64);
        }
        push_rows(
            &mut rows,
            "merging",
            alpha,
            "auto_switch",
            "accuracy",
            &auto,
            seed,
        );
        push_rows(
            &mut rows,
            "merging",
            alpha,
            "routing",
            "argmax_accuracy",
            &routing,
            seed,
        );
        push_rows(
            &mut rows,
            "merging",
            alpha,
            "auto_switch",
            "distinct_merges",
            &distinct,
            seed,
        );
    }
    Ok(BenchReport { rows })
}
