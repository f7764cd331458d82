//! Self-contained classification benchmark for exercising discard, binarize,
//! merge, and routing end to end on small MLPs. Everything is seeded and
//! single-threaded where order matters, so reruns are bit-identical.

pub mod bench;
pub mod config;
pub mod model;
pub mod suite;

pub use bench::{
    prepare_seed_run, run_controlled, run_merging_bench, BenchReport, ReportRow, SeedRun,
};
pub use config::{BenchConfig, ControlledConfig, MergingConfig, SuiteConfig, TrainConfig};
pub use model::{evaluate, train, MlpSpec, ModelView, TrainOpts};
pub use suite::{gen_suite, Dataset, TaskData, TaskSuite};
