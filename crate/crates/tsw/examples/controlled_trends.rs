//! Sweep the discard fraction on a small synthetic suite and print how each
//! operator's accuracy moves: keeping strong entries tracks the fine-tune,
//! keeping only weak ones collapses, random drop sits near the top.
//!
//! ```bash
//! cargo run --example controlled_trends
//! ```

use tsw::toybench::{run_controlled, BenchConfig, ControlledConfig, SuiteConfig};

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
        controlled: ControlledConfig {
            alphas: vec![0.1, 0.3, 0.5, 0.7],
            seeds: vec![0, 1],
        },
        ..BenchConfig::default()
    };

    let report = run_controlled(&cfg)?;
    let avg = |method: &str, alpha: f64| {
        report
            .mean_where(|r| r.method == method && (r.alpha - alpha).abs() < 1e-9 && r.task == "avg")
            .unwrap_or(f64::NAN)
    };

    println!(
        "baselines: pretrained {:.4}, finetuned {:.4}\n",
        avg("pretrained", 0.0),
        avg("finetuned", 0.0)
    );
    println!("alpha   keep-strong  keep-weak  random   merged(strong)  merged(random)");
    for &shown in &cfg.controlled.alphas {
        // Report rows carry the f64 image of the configured f32 alpha.
        let a = shown as f64;
        println!(
            "{shown:<7} {:<12.4} {:<10.4} {:<8.4} {:<15.4} {:.4}",
            avg("p_discard", a),
            avg("discard_high", a),
            avg("dare_random", a),
            avg("merge_p_discard", a),
            avg("merge_dare", a),
        );
    }
    println!(
        "\nrows: {} (also written by the bench subcommand as CSV)",
        report.rows.len()
    );
    Ok(())
}
