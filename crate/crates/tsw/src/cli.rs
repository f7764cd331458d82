//! Command-line front end. Every command reads and writes the binary file
//! formats, prints either short human text or a single JSON object, and maps
//! errors to exit codes: 0 success, 1 user error, 2 data error, 3 internal.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use crate::binarize::{bin_discard, decode_tsw, encode_tsw, storage_report, TaskSwitchPack};
use crate::binio::atomic_write;
use crate::error::{Error, Result};
use crate::merge::{
    apply_auto, apply_switch, direct_merge_with_scale, task_arithmetic, weight_average,
};
use crate::pulse::{dare_discard, discard_high, p_discard, Scope};
use crate::router::{build_query_index, decode_tqi, encode_tqi, route_and_apply, RouteWeights};
use crate::tensorstore::{
    compute_task_vector, load_ntc, materialize_lowrank, save_ntc, NamedTensorSet,
};
use crate::toybench::{run_controlled, run_merging_bench, BenchConfig, MlpSpec};

#[derive(Parser, Debug)]
#[command(
    name = "tsw",
    version,
    about = "Task-vector switches: extract, discard, binarize, merge, route, benchmark"
)]
struct Cli {
    /// Seed for randomized operations (random discard).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Compute discard thresholds and knobs per tensor instead of globally.
    #[arg(long, global = true)]
    per_tensor: bool,
    /// Suppress human-readable output.
    #[arg(long, global = true)]
    quiet: bool,
    /// Print a single JSON object to stdout instead of human text.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum DiscardMode {
    /// Keep entries outside the pulse thresholds.
    Pulse,
    /// Keep the complement: the small-magnitude tail.
    High,
    /// Drop each entry with probability alpha, rescale survivors.
    Random,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MergeMethod {
    /// base + mean of the task vectors.
    Average,
    /// base + coef * sum of the task vectors.
    Arith,
    /// base + norm-rescaled sum of the task vectors.
    Direct,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Compute the task vector finetuned - base.
    Extract {
        #[arg(long)]
        base: PathBuf,
        #[arg(long)]
        finetuned: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Materialize a low-rank delta: scale * down x up per tensor name.
    Lowrank {
        #[arg(long)]
        down: PathBuf,
        #[arg(long)]
        up: PathBuf,
        #[arg(long)]
        scale: f32,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Zero a fraction of task-vector entries.
    Discard {
        #[arg(long, value_enum)]
        mode: DiscardMode,
        #[arg(long)]
        alpha: f32,
        #[arg(short, long)]
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Binarize a task vector into a switch pack (.tsw).
    Binarize {
        #[arg(long)]
        alpha: f32,
        #[arg(short, long)]
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Print a switch pack's storage report and per-tensor sparsity.
    Inspect { pack: PathBuf },
    /// Merge task vectors into a base model.
    Merge {
        #[arg(long, value_enum)]
        method: MergeMethod,
        /// Scaling coefficient; only valid with --method arith (default 0.3).
        #[arg(long)]
        coef: Option<f32>,
        #[arg(long)]
        base: PathBuf,
        /// Task-vector files, in task order.
        #[arg(required = true)]
        taus: Vec<PathBuf>,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Apply one switch pack, or a weighted combination of several.
    Apply {
        #[arg(long)]
        base: PathBuf,
        /// Switch pack; repeat the flag for a weighted combination.
        #[arg(long = "switch", required = true)]
        switches: Vec<PathBuf>,
        /// Comma-separated convex weights, one per switch.
        #[arg(short = 'w', long = "weights", value_delimiter = ',', num_args = 1..)]
        weights: Option<Vec<f32>>,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Build or apply a routing query index.
    Route {
        #[command(subcommand)]
        cmd: RouteCmd,
    },
    /// Run the synthetic benchmark suites.
    Bench {
        #[command(subcommand)]
        cmd: BenchCmd,
    },
}

#[derive(Subcommand, Debug)]
enum RouteCmd {
    /// Extract features for per-task example files and write a .tqi index.
    Build {
        /// Merged backbone model used as the feature extractor.
        #[arg(long)]
        backbone: PathBuf,
        /// Directory of per-task .ntc files (sorted name = task id).
        #[arg(long)]
        examples: PathBuf,
        /// Examples per task.
        #[arg(short = 'n', long = "per-task")]
        per_task: usize,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Route inputs through the index and write per-weight merged models.
    Apply {
        #[arg(long)]
        base: PathBuf,
        /// Switch packs, in the index's task order.
        #[arg(long = "switches", required = true, num_args = 1..)]
        switches: Vec<PathBuf>,
        #[arg(long)]
        index: PathBuf,
        /// Neighbor count.
        #[arg(short = 'C', long = "neighbors")]
        neighbors: usize,
        /// Query vectors, one rank-1 tensor each.
        #[arg(long)]
        inputs: PathBuf,
        /// Feature extractor for raw inputs; omit if inputs are already
        /// features in the index's space.
        #[arg(long)]
        backbone: Option<PathBuf>,
        /// Output directory.
        #[arg(short, long)]
        output: PathBuf,
    },
}

#[derive(Subcommand, Debug)]
enum BenchCmd {
    /// Per-task discard sweep over the alpha grid.
    Controlled {
        /// TOML config; stock settings when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Merge-strategy and routing comparison.
    Merge {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(short, long)]
        output: PathBuf,
    },
}

pub fn run_from_env() -> i32 {
    run(std::env::args_os())
}

pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    if let Err(e) = init_threads() {
        eprintln!("tsw: error: {e}");
        return e.exit_code();
    }
    match dispatch(&cli) {
        Ok((value, human)) => {
            if cli.json {
                println!("{value}");
            } else if !cli.quiet {
                for line in human {
                    println!("{line}");
                }
            }
            0
        }
        Err(e) => {
            eprintln!("tsw: error: {e}");
            e.exit_code()
        }
    }
}

/// TSW_THREADS caps the worker pool; 0 or unset means automatic.
fn init_threads() -> Result<()> {
    let n = match std::env::var("TSW_THREADS") {
        Err(std::env::VarError::NotPresent) => 0,
        Err(e) => return Err(Error::usage(format!("TSW_THREADS: {e}"))),
        Ok(s) => s.trim().parse::<usize>().map_err(|_| {
            Error::usage(format!(
                "TSW_THREADS must be a non-negative integer, got {s:?}"
            ))
        })?,
    };
    // A second init in the same process keeps the existing pool.
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global();
    Ok(())
}

/// f32 rendered at its shortest decimal so JSON output stays readable.
fn jnum(x: f32) -> f64 {
    x.to_string().parse().unwrap()
}

fn show(path: &Path) -> String {
    path.display().to_string()
}

type Output = (Value, Vec<String>);

fn dispatch(cli: &Cli) -> Result<Output> {
    let scope = if cli.per_tensor {
        Scope::PerTensor
    } else {
        Scope::Global
    };
    match &cli.cmd {
        Cmd::Extract {
            base,
            finetuned,
            output,
        } => cmd_extract(base, finetuned, output),
        Cmd::Lowrank {
            down,
            up,
            scale,
            output,
        } => cmd_lowrank(down, up, *scale, output),
        Cmd::Discard {
            mode,
            alpha,
            input,
            output,
        } => cmd_discard(*mode, *alpha, scope, cli.seed, input, output),
        Cmd::Binarize {
            alpha,
            input,
            output,
        } => cmd_binarize(*alpha, scope, input, output),
        Cmd::Inspect { pack } => cmd_inspect(pack),
        Cmd::Merge {
            method,
            coef,
            base,
            taus,
            output,
        } => cmd_merge(*method, *coef, base, taus, output),
        Cmd::Apply {
            base,
            switches,
            weights,
            output,
        } => cmd_apply(base, switches, weights.clone(), output),
        Cmd::Route { cmd } => match cmd {
            RouteCmd::Build {
                backbone,
                examples,
                per_task,
                output,
            } => cmd_route_build(backbone, examples, *per_task, output),
            RouteCmd::Apply {
                base,
                switches,
                index,
                neighbors,
                inputs,
                backbone,
                output,
            } => cmd_route_apply(
                base,
                switches,
                index,
                *neighbors,
                inputs,
                backbone.as_deref(),
                output,
            ),
        },
        Cmd::Bench { cmd } => match cmd {
            BenchCmd::Controlled { config, output } => cmd_bench(config.as_deref(), output, false),
            BenchCmd::Merge { config, output } => cmd_bench(config.as_deref(), output, true),
        },
    }
}

fn cmd_extract(base: &Path, finetuned: &Path, output: &Path) -> Result<Output> {
    let base_set = load_ntc(base)?;
    let ft_set = load_ntc(finetuned)?;
    let tau = compute_task_vector(&base_set, &ft_set)?;
    save_ntc(&tau, output)?;
    let value = json!({
        "command": "extract",
        "output": show(output),
        "tensors": tau.len(),
        "parameters": tau.total_elements(),
        "base_fingerprint": base_set.fingerprint().hex(),
    });
    let human = vec![format!(
        "wrote {} ({} tensors, {} parameters)",
        show(output),
        tau.len(),
        tau.total_elements()
    )];
    Ok((value, human))
}

fn cmd_lowrank(down: &Path, up: &Path, scale: f32, output: &Path) -> Result<Output> {
    let down_set = load_ntc(down)?;
    let up_set = load_ntc(up)?;
    for (name, _) in up_set.iter() {
        if down_set.get(name).is_none() {
            return Err(Error::usage(format!(
                "tensor {name:?} is missing from the --down file"
            )));
        }
    }
    let mut tau = NamedTensorSet::new();
    for (name, d) in down_set.iter() {
        let u = up_set.get(name).ok_or_else(|| {
            Error::usage(format!("tensor {name:?} is missing from the --up file"))
        })?;
        tau.insert(name, materialize_lowrank(d, u, scale)?)?;
    }
    tau.set_meta("kind".to_string(), "task_vector".to_string());
    save_ntc(&tau, output)?;
    let value = json!({
        "command": "lowrank",
        "scale": jnum(scale),
        "output": show(output),
        "tensors": tau.len(),
        "parameters": tau.total_elements(),
    });
    let human = vec![format!(
        "wrote {} ({} tensors, {} parameters, scale {scale})",
        show(output),
        tau.len(),
        tau.total_elements()
    )];
    Ok((value, human))
}

fn cmd_discard(
    mode: DiscardMode,
    alpha: f32,
    scope: Scope,
    seed: Option<u64>,
    input: &Path,
    output: &Path,
) -> Result<Output> {
    let tau = load_ntc(input)?;
    let (mode_name, result) = match mode {
        DiscardMode::Pulse => ("pulse", p_discard(&tau, alpha, scope)?),
        DiscardMode::High => ("high", discard_high(&tau, alpha, scope)?),
        DiscardMode::Random => ("random", dare_discard(&tau, alpha, seed.unwrap_or(0))?),
    };
    let nonzero = result
        .iter()
        .flat_map(|(_, t)| t.data())
        .filter(|v| **v != 0.0)
        .count();
    save_ntc(&result, output)?;
    let value = json!({
        "command": "discard",
        "mode": mode_name,
        "alpha": jnum(alpha),
        "scope": scope.name(),
        "seed": seed,
        "output": show(output),
        "tensors": result.len(),
        "parameters": result.total_elements(),
        "nonzero": nonzero,
    });
    let human = vec![format!(
        "wrote {} ({mode_name}, alpha {alpha}, {nonzero} of {} entries nonzero)",
        show(output),
        result.total_elements()
    )];
    Ok((value, human))
}

fn lambdas_of(pack: &TaskSwitchPack) -> Vec<f64> {
    match pack.knob() {
        crate::binarize::Knob::Global(l) => vec![jnum(*l)],
        crate::binarize::Knob::PerTensor(ls) => ls.iter().map(|&l| jnum(l)).collect(),
    }
}

fn cmd_binarize(alpha: f32, scope: Scope, input: &Path, output: &Path) -> Result<Output> {
    let tau = load_ntc(input)?;
    let (pack, _) = bin_discard(&tau, alpha, scope)?;
    encode_tsw(&pack, output)?;
    let report = storage_report(&pack);
    let value = json!({
        "command": "binarize",
        "alpha": jnum(alpha),
        "scope": scope.name(),
        "output": show(output),
        "tensors": pack.tensors().len(),
        "parameters": pack.total_params(),
        "active": pack.total_active(),
        "bytes": report.bytes_serialized,
        "bits_per_parameter": report.bits_per_parameter,
        "ratio_vs_fp32": report.ratio_vs_fp32,
        "lambdas": lambdas_of(&pack),
    });
    let human = vec![format!(
        "wrote {} ({} of {} active, {:.4} bits/parameter)",
        show(output),
        pack.total_active(),
        pack.total_params(),
        report.bits_per_parameter
    )];
    Ok((value, human))
}

fn cmd_inspect(path: &Path) -> Result<Output> {
    let pack = decode_tsw(path)?;
    let report = storage_report(&pack);
    let n = pack.total_params();
    let k = pack.total_active();
    let density = |active: usize, total: usize| {
        if total == 0 {
            0.0
        } else {
            active as f64 / total as f64
        }
    };
    let per_tensor: Vec<Value> = pack
        .tensors()
        .iter()
        .enumerate()
        .map(|(i, t)| {
            json!({
                "name": t.name(),
                "shape": t.shape(),
                "parameters": t.len(),
                "active": t.active(),
                "density": density(t.active(), t.len()),
                "lambda": match pack.scope() {
                    Scope::PerTensor => json!(jnum(pack.lambda_for(i))),
                    Scope::Global => Value::Null,
                },
            })
        })
        .collect();
    let value = json!({
        "command": "inspect",
        "pack": show(path),
        "scope": pack.scope().name(),
        "alpha": jnum(pack.alpha()),
        "fingerprint": pack.fingerprint().hex(),
        "tensors": pack.tensors().len(),
        "parameters": n,
        "active": k,
        "bytes": report.bytes_serialized,
        "bits_per_parameter": report.bits_per_parameter,
        "ratio_vs_fp32": report.ratio_vs_fp32,
        "lambdas": lambdas_of(&pack),
        "per_tensor": per_tensor,
    });
    let mut human = vec![
        format!("pack: {}", show(path)),
        format!("scope: {}, alpha: {}", pack.scope().name(), pack.alpha()),
        format!("fingerprint: {}", pack.fingerprint().hex()),
        format!(
            "parameters: {n}, active: {k} ({:.2}%)",
            100.0 * density(k, n)
        ),
        format!(
            "bytes: {}, bits/parameter: {:.4}, ratio vs fp32: {:.4}",
            report.bytes_serialized, report.bits_per_parameter, report.ratio_vs_fp32
        ),
    ];
    if pack.scope() == Scope::Global {
        human.push(format!("lambda: {}", lambdas_of(&pack)[0]));
    }
    for (i, t) in pack.tensors().iter().enumerate() {
        let mut line = format!(
            "  {}: shape {:?}, {}/{} active ({:.2}%)",
            t.name(),
            t.shape(),
            t.active(),
            t.len(),
            100.0 * density(t.active(), t.len())
        );
        if pack.scope() == Scope::PerTensor {
            line.push_str(&format!(", lambda {}", pack.lambda_for(i)));
        }
        human.push(line);
    }
    Ok((value, human))
}

fn cmd_merge(
    method: MergeMethod,
    coef: Option<f32>,
    base: &Path,
    taus: &[PathBuf],
    output: &Path,
) -> Result<Output> {
    if coef.is_some() && !matches!(method, MergeMethod::Arith) {
        return Err(Error::usage("--coef only applies to --method arith"));
    }
    let base_set = load_ntc(base)?;
    let tau_sets: Vec<NamedTensorSet> = taus.iter().map(|p| load_ntc(p)).collect::<Result<_>>()?;
    let (method_name, merged, scale) = match method {
        MergeMethod::Average => ("average", weight_average(&base_set, &tau_sets)?, None),
        MergeMethod::Arith => {
            let c = coef.unwrap_or(0.3);
            ("arith", task_arithmetic(&base_set, &tau_sets, c)?, None)
        }
        MergeMethod::Direct => {
            let (m, s) = direct_merge_with_scale(&base_set, &tau_sets)?;
            ("direct", m, Some(s))
        }
    };
    save_ntc(&merged, output)?;
    let value = json!({
        "command": "merge",
        "method": method_name,
        "coef": if matches!(method, MergeMethod::Arith) { json!(jnum(coef.unwrap_or(0.3))) } else { Value::Null },
        "scale": scale,
        "inputs": taus.iter().map(|p| show(p)).collect::<Vec<_>>(),
        "output": show(output),
        "tensors": merged.len(),
        "parameters": merged.total_elements(),
    });
    let human = vec![format!(
        "wrote {} ({method_name} merge of {} task vectors)",
        show(output),
        taus.len()
    )];
    Ok((value, human))
}

fn cmd_apply(
    base: &Path,
    switches: &[PathBuf],
    weights: Option<Vec<f32>>,
    output: &Path,
) -> Result<Output> {
    let base_set = load_ntc(base)?;
    let packs: Vec<TaskSwitchPack> = switches
        .iter()
        .map(|p| decode_tsw(p))
        .collect::<Result<_>>()?;
    let merged = match &weights {
        None if packs.len() == 1 => apply_switch(&base_set, &packs[0])?,
        None => {
            return Err(Error::usage(format!(
                "{} switches given; provide -w with one weight per switch",
                packs.len()
            )))
        }
        Some(w) => apply_auto(&base_set, &packs, &RouteWeights::from_weights(w.clone())?)?,
    };
    save_ntc(&merged, output)?;
    let value = json!({
        "command": "apply",
        "switches": switches.iter().map(|p| show(p)).collect::<Vec<_>>(),
        "weights": weights.as_ref().map(|w| w.iter().map(|&x| jnum(x)).collect::<Vec<_>>()),
        "output": show(output),
        "tensors": merged.len(),
        "parameters": merged.total_elements(),
    });
    let human = vec![format!(
        "wrote {} ({} switch{} applied)",
        show(output),
        switches.len(),
        if switches.len() == 1 { "" } else { "es" }
    )];
    Ok((value, human))
}

/// Rank-1 entries of an .ntc file, in stored order.
fn load_vectors(path: &Path, what: &str) -> Result<Vec<(String, Vec<f32>)>> {
    let set = load_ntc(path)?;
    let mut out = Vec::with_capacity(set.len());
    for (name, t) in set.iter() {
        if t.shape().len() != 1 {
            return Err(Error::usage(format!(
                "{what} tensors must be rank 1, {name:?} in {} has rank {}",
                show(path),
                t.shape().len()
            )));
        }
        out.push((name.to_string(), t.data().to_vec()));
    }
    Ok(out)
}

fn feature_extractor(path: &Path) -> Result<(MlpSpec, NamedTensorSet)> {
    let params = load_ntc(path)?;
    let spec = MlpSpec::from_params(&params)?;
    Ok((spec, params))
}

fn cmd_route_build(
    backbone: &Path,
    examples: &Path,
    per_task: usize,
    output: &Path,
) -> Result<Output> {
    if per_task == 0 {
        return Err(Error::usage("examples per task must be at least 1"));
    }
    let (spec, params) = feature_extractor(backbone)?;
    let view = spec.view(&params)?;
    let input_dim = spec.dims()[0];

    let mut files: Vec<PathBuf> = std::fs::read_dir(examples)
        .map_err(|e| Error::io(examples, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "ntc"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::usage(format!(
            "no .ntc example files in {}",
            show(examples)
        )));
    }

    let mut feats_by_task = Vec::with_capacity(files.len());
    for file in &files {
        let vectors = load_vectors(file, "example")?;
        if vectors.len() < per_task {
            return Err(Error::usage(format!(
                "{} has {} examples, need {per_task}",
                show(file),
                vectors.len()
            )));
        }
        let mut feats = Vec::with_capacity(per_task);
        for (name, x) in vectors.into_iter().take(per_task) {
            if x.len() != input_dim {
                return Err(Error::DimMismatch {
                    what: format!(
                        "example {name:?} in {} has {} values, backbone expects {input_dim}",
                        show(file),
                        x.len()
                    ),
                });
            }
            feats.push(view.feature(&x)?);
        }
        feats_by_task.push(feats);
    }
    let index = build_query_index(&feats_by_task, Some(per_task))?;
    encode_tqi(&index, output)?;
    let value = json!({
        "command": "route_build",
        "examples": files
            .iter()
            .map(|p| p.file_name().unwrap_or_default().to_string_lossy().into_owned())
            .collect::<Vec<_>>(),
        "per_task": per_task,
        "tasks": index.num_tasks(),
        "dim": index.dim(),
        "rows": index.len(),
        "output": show(output),
    });
    let human = vec![format!(
        "wrote {} ({} tasks, {} rows, dim {})",
        show(output),
        index.num_tasks(),
        index.len(),
        index.dim()
    )];
    Ok((value, human))
}

fn cmd_route_apply(
    base: &Path,
    switches: &[PathBuf],
    index_path: &Path,
    neighbors: usize,
    inputs: &Path,
    backbone: Option<&Path>,
    outdir: &Path,
) -> Result<Output> {
    let base_set = load_ntc(base)?;
    let packs: Vec<TaskSwitchPack> = switches
        .iter()
        .map(|p| decode_tsw(p))
        .collect::<Result<_>>()?;
    let index = decode_tqi(index_path)?;
    let vectors = load_vectors(inputs, "input")?;
    if vectors.is_empty() {
        return Err(Error::EmptyInput {
            what: "routing inputs",
        });
    }

    let mut names = Vec::with_capacity(vectors.len());
    let mut feats = Vec::with_capacity(vectors.len());
    match backbone {
        Some(bb) => {
            let (spec, params) = feature_extractor(bb)?;
            let view = spec.view(&params)?;
            let input_dim = spec.dims()[0];
            for (name, x) in &vectors {
                if x.len() != input_dim {
                    return Err(Error::DimMismatch {
                        what: format!(
                            "input {name:?} has {} values, backbone expects {input_dim}",
                            x.len()
                        ),
                    });
                }
                feats.push(view.feature(x)?);
                names.push(name.clone());
            }
        }
        None => {
            for (name, x) in vectors {
                feats.push(x);
                names.push(name);
            }
        }
    }

    let batch = route_and_apply(&base_set, &packs, &index, &feats, neighbors)?;
    std::fs::create_dir_all(outdir).map_err(|e| Error::io(outdir, e))?;
    let model_file = |idx: usize| format!("merge_{idx:03}.ntc");
    for (i, merged) in batch.merged.iter().enumerate() {
        save_ntc(merged, &outdir.join(model_file(i)))?;
    }

    let mut csv_w = csv::Writer::from_writer(Vec::new());
    csv_w
        .write_record(["input", "task", "model", "weights"])
        .map_err(|e| Error::internal(format!("csv encoding failed: {e}")))?;
    let mut assignments = Vec::with_capacity(names.len());
    let mut human = Vec::with_capacity(names.len() + 1);
    for (name, q) in names.iter().zip(&batch.queries) {
        let weights: Vec<String> = q.weights.weights().iter().map(|w| w.to_string()).collect();
        csv_w
            .write_record([
                name.as_str(),
                &q.assignment.to_string(),
                &model_file(q.merged_idx),
                &weights.join(";"),
            ])
            .map_err(|e| Error::internal(format!("csv encoding failed: {e}")))?;
        assignments.push(json!({
            "input": name,
            "task": q.assignment,
            "model": model_file(q.merged_idx),
            "weights": q.weights.weights().iter().map(|&w| jnum(w)).collect::<Vec<_>>(),
        }));
        human.push(format!(
            "{name} -> task {} ({})",
            q.assignment,
            model_file(q.merged_idx)
        ));
    }
    let csv_buf = csv_w
        .into_inner()
        .map_err(|e| Error::internal(format!("csv encoding failed: {e}")))?;
    atomic_write(&outdir.join("assignments.csv"), &csv_buf)?;

    let value = json!({
        "command": "route_apply",
        "neighbors": neighbors,
        "inputs": names.len(),
        "distinct_merges": batch.distinct_merges(),
        "output_dir": show(outdir),
        "assignments": assignments,
    });
    human.insert(
        0,
        format!(
            "routed {} inputs into {} distinct models under {}",
            names.len(),
            batch.distinct_merges(),
            show(outdir)
        ),
    );
    Ok((value, human))
}

fn cmd_bench(config: Option<&Path>, output: &Path, merging: bool) -> Result<Output> {
    let cfg = match config {
        Some(p) => BenchConfig::from_path(p)?,
        None => BenchConfig::default(),
    };
    let report = if merging {
        run_merging_bench(&cfg)?
    } else {
        run_controlled(&cfg)?
    };
    report.to_csv(output)?;
    let command = if merging {
        "bench_merge"
    } else {
        "bench_controlled"
    };
    let value = json!({
        "command": command,
        "config": config.map(show),
        "rows": report.rows.len(),
        "output": show(output),
    });
    let human = vec![format!(
        "wrote {} ({} rows)",
        show(output),
        report.rows.len()
    )];
    Ok((value, human))
}
