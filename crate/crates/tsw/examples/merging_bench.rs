//! Compare multi-task merging strategies end to end on a synthetic suite:
//! weight averaging, task arithmetic, the rescaled direct merge, one
//! compressed switch per task, and per-input auto switching.
//!
//! ```bash
//! cargo run --example merging_bench
//! ```

use tsw::toybench::{run_merging_bench, BenchConfig, MergingConfig, SuiteConfig};

fn main() -> tsw::Result<()> {
    let cfg = BenchConfig {
        suite: SuiteConfig {
            tasks: 4,
            input_dim: 32,
            classes: 6,
            hidden: vec![48],
            train_per_class: 24,
            test_per_class: 15,
            pretrain_per_task: 60,
            ..SuiteConfig::default()
        },
        merging: MergingConfig {
            queries_per_task: 30,
            seeds: vec![0, 1],
            ..MergingConfig::default()
        },
        ..BenchConfig::default()
    };

    let report = run_merging_bench(&cfg)?;
    let avg = |method: &str, metric: &str| {
        report
            .mean_where(|r| r.method == method && r.metric == metric && r.task == "avg")
            .unwrap_or(f64::NAN)
    };

    println!("per-task accuracy, averaged over tasks and seeds:");
    for method in [
        "pretrained",
        "finetuned",
        "weight_average",
        "task_arithmetic",
        "direct_merge",
        "t_switch",
        "auto_switch",
    ] {
        println!("  {method:<16} {:.4}", avg(method, "accuracy"));
    }
    println!(
        "\nrouting picks the right task {:.2}% of the time",
        100.0 * avg("routing", "argmax_accuracy")
    );
    println!(
        "auto switching materialized {:.1} distinct models per seed for {} queries",
        avg("auto_switch", "distinct_merges"),
        cfg.suite.tasks * cfg.merging.queries_per_task
    );
    Ok(())
}
