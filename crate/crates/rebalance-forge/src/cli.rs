//! Command-line interface: every pipeline stage as a subcommand with
//! file-based inputs and outputs.
//!
//! Exit codes: 0 on success, 1 on domain errors, 2 on usage errors.
//! JSON artifacts embed the tool version, the resolved configuration, and
//! the seed, and are written atomically (no partial files on failure).

use std::cell::RefCell;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::Stdio;

use clap::{Parser, Subcommand, ValueEnum};
use indexmap::IndexMap;
use serde::Serialize;
use serde_json::json;

use crate::error::{Error, Result};
use crate::evaluation::{evaluate_predictions, parse_predictions, plan_folds};
use crate::manifest::{compute_label_stats, load_manifest, LabelStats, Source};
use crate::progan::{
    builtin_critic_spec, builtin_generator_spec, validate_network, NetworkSpec, ValidationReport,
};
use crate::rebalance::{
    build_injection_plan, complementary_frequencies, injection_weights, InjectionConfig,
    InjectionPlan,
};
use crate::sma::{optimize, SmaConfig};
use crate::toy::{
    generate_toy_dataset, objective_split, parse_feature_records, run_toy_pipeline,
    write_feature_csv, ClassSpec, Hyperparameters, PipelineObjective, ToyDatasetConfig,
    ToyRunConfig,
};

const SEED_ENV: &str = "REBALANCE_FORGE_SEED";

#[derive(Parser)]
#[command(
    name = "rebalance-forge",
    version,
    about = "Imbalance-aware synthetic-injection planning, SMA hyperparameter search, \
             GAN shape auditing, and cross-validation reporting"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SourceArg {
    Real,
    Synthetic,
    All,
}

impl SourceArg {
    fn filter(self) -> Option<Source> {
        match self {
            SourceArg::Real => Some(Source::Real),
            SourceArg::Synthetic => Some(Source::Synthetic),
            SourceArg::All => None,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BuiltinKind {
    Generator,
    Critic,
}

#[derive(Subcommand)]
enum Command {
    /// Print per-label frequencies and ratios of a manifest
    Stats {
        /// Manifest CSV (header: id,label,source)
        #[arg(long)]
        manifest: PathBuf,
        /// Restrict the census to one source
        #[arg(long, value_enum, default_value = "all")]
        source: SourceArg,
    },
    /// Plan per-label synthetic counts from real-label statistics
    PlanInjection {
        #[arg(long)]
        manifest: PathBuf,
        /// Synthetic-images injection ratio in [0, 1)
        #[arg(long)]
        siir: f64,
        /// Per-label fine-tuning factor, as label=value (repeatable)
        #[arg(long = "tune")]
        tune: Vec<String>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Plan stratified cross-validation folds
    PlanFolds {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value_t = 10)]
        k: usize,
        /// Validation share of the non-test records
        #[arg(long = "val-ratio", default_value_t = 0.15)]
        val_ratio: f64,
        #[arg(long)]
        seed: Option<u64>,
        /// Injection plan JSON to cross-check the synthetic census against
        #[arg(long)]
        plan: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Audit a network spec by replaying shape propagation
    ValidateGan {
        /// Network spec JSON
        #[arg(long, required_unless_present = "builtin", conflicts_with_all = ["builtin", "stage", "verbatim"])]
        spec: Option<PathBuf>,
        /// Use a builtin description instead of a file
        #[arg(long, value_enum, requires = "stage")]
        builtin: Option<BuiltinKind>,
        /// Progression stage, 1..6
        #[arg(long, requires = "builtin")]
        stage: Option<u32>,
        /// Audit the literal published table instead of the repaired chain
        #[arg(long)]
        verbatim: bool,
    },
    /// Minimize an objective with the slime mould algorithm
    Optimize {
        /// Optimizer config JSON (defaults to the shipped classifier box)
        #[arg(long)]
        config: Option<PathBuf>,
        /// `toy` for the builtin pipeline objective, anything else is run
        /// as a shell command (candidate JSON line on stdin, fitness on stdout)
        #[arg(long)]
        objective: String,
        /// Toy pipeline config for `--objective toy`
        #[arg(long = "toy-config")]
        toy_config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Aggregate fold predictions into cross-validated metrics
    Evaluate {
        /// Predictions CSV (header: fold,id,true_label,predicted_label)
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Desk-scale end-to-end pipeline
    Toy {
        #[command(subcommand)]
        command: ToyCommand,
    },
}

#[derive(Subcommand)]
enum ToyCommand {
    /// Generate data, optimize hyperparameters, cross-validate both arms
    Run {
        /// Toy run config JSON
        #[arg(long)]
        config: PathBuf,
        /// Use records from a feature CSV instead of generating
        #[arg(long)]
        features: Option<PathBuf>,
        /// Write the dataset actually used to a feature CSV
        #[arg(long = "dump-features")]
        dump_features: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Parses argv and runs one subcommand, mapping outcomes to exit codes.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn env_seed() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(raw) => raw
            .trim()
            .parse::<u64>()
            .map(Some)
            .map_err(|_| Error::config(format!("{SEED_ENV}=`{raw}` is not a non-negative integer"))),
        Err(_) => Ok(None),
    }
}

/// Seed precedence: explicit flag, then the environment variable, then
/// the fallback (a config-file seed or zero).
fn resolve_seed(explicit: Option<u64>, fallback: u64) -> Result<u64> {
    if let Some(seed) = explicit {
        return Ok(seed);
    }
    Ok(env_seed()?.unwrap_or(fallback))
}

#[derive(Serialize)]
struct Artifact<T: Serialize> {
    tool_version: &'static str,
    config: serde_json::Value,
    seed: u64,
    #[serde(flatten)]
    payload: T,
}

fn artifact<T: Serialize>(config: serde_json::Value, seed: u64, payload: T) -> Artifact<T> {
    Artifact {
        tool_version: env!("CARGO_PKG_VERSION"),
        config,
        seed,
        payload,
    }
}

/// Serializes fully in memory, writes to a temporary file in the target
/// directory, then renames; a failing run never leaves a partial file.
fn write_artifact<T: Serialize>(path: &Path, value: &Artifact<T>) -> Result<()> {
    let json = serde_json::to_string_pretty(value)?;
    write_atomic(path, json.as_bytes(), true)
}

fn write_atomic(path: &Path, bytes: &[u8], trailing_newline: bool) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    if trailing_newline {
        tmp.write_all(b"\n")?;
    }
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Stats { manifest, source } => run_stats(&manifest, source),
        Command::PlanInjection {
            manifest,
            siir,
            tune,
            out,
            seed,
        } => run_plan_injection(&manifest, siir, &tune, &out, seed),
        Command::PlanFolds {
            manifest,
            k,
            val_ratio,
            seed,
            plan,
            out,
        } => run_plan_folds(&manifest, k, val_ratio, seed, plan.as_deref(), &out),
        Command::ValidateGan {
            spec,
            builtin,
            stage,
            verbatim,
        } => run_validate_gan(spec.as_deref(), builtin, stage, verbatim),
        Command::Optimize {
            config,
            objective,
            toy_config,
            seed,
            out,
        } => run_optimize(config.as_deref(), &objective, toy_config.as_deref(), seed, out.as_deref()),
        Command::Evaluate { predictions, out } => run_evaluate(&predictions, &out),
        Command::Toy {
            command:
                ToyCommand::Run {
                    config,
                    features,
                    dump_features,
                    seed,
                    out,
                },
        } => run_toy(&config, features.as_deref(), dump_features.as_deref(), seed, &out),
    }
}

fn print_stats_table(stats: &LabelStats) {
    println!("{:<24} {:>10} {:>9}", "Label", "Frequency", "Ratio");
    for ((label, &count), ratio) in stats
        .labels()
        .iter()
        .zip(stats.counts())
        .zip(stats.ratios())
    {
        println!("{label:<24} {count:>10} {ratio:>9.4}");
    }
    println!("{:<24} {:>10} {:>9.4}", "Total", stats.total(), 1.0);
}

fn run_stats(manifest_path: &Path, source: SourceArg) -> Result<()> {
    let manifest = load_manifest(manifest_path)?;
    let stats = compute_label_stats(&manifest, source.filter())?;
    print_stats_table(&stats);
    Ok(())
}

fn parse_tuning(entries: &[String]) -> Result<Vec<(String, f64)>> {
    entries
        .iter()
        .map(|entry| {
            let (label, value) = entry
                .split_once('=')
                .ok_or_else(|| Error::config(format!("--tune expects label=value, got `{entry}`")))?;
            let value: f64 = value
                .parse()
                .map_err(|_| Error::config(format!("tuning value `{value}` is not a number")))?;
            Ok((label.to_string(), value))
        })
        .collect()
}

#[derive(Serialize)]
struct PlanArtifact {
    siir: f64,
    n_f_total: u64,
    per_label: IndexMap<String, u64>,
    weights: IndexMap<String, f64>,
    cf: IndexMap<String, u64>,
    reference_label: String,
    n_real: u64,
}

fn run_plan_injection(
    manifest_path: &Path,
    siir: f64,
    tune: &[String],
    out: &Path,
    seed: Option<u64>,
) -> Result<()> {
    let seed = resolve_seed(seed, 0)?;
    let manifest = load_manifest(manifest_path)?;
    let stats = compute_label_stats(&manifest, Some(Source::Real))?;
    let mut config = InjectionConfig::new(siir);
    for (label, value) in parse_tuning(tune)? {
        config.tuning.insert(label, value);
    }
    let cf = complementary_frequencies(&stats);
    let weights = injection_weights(&cf, &config)?;
    let plan = build_injection_plan(&weights, siir, stats.total())?;

    println!(
        "{:<24} {:>6} {:>14} {:>9} {:>10}",
        "Label", "Real", "Complementary", "Weight", "Synthetic"
    );
    for (i, label) in plan.labels.iter().enumerate() {
        println!(
            "{label:<24} {:>6} {:>14} {:>9.4} {:>10}",
            stats.counts()[i],
            cf.cf[i],
            weights.weights[i],
            plan.counts[i]
        );
    }
    println!(
        "reference label: {}   N_r: {}   N_f: {}",
        cf.reference_label,
        stats.total(),
        plan.n_f_total
    );

    let payload = PlanArtifact {
        siir: plan.siir,
        n_f_total: plan.n_f_total,
        per_label: plan.labels.iter().cloned().zip(plan.counts.iter().copied()).collect(),
        weights: plan
            .labels
            .iter()
            .cloned()
            .zip(weights.weights.iter().copied())
            .collect(),
        cf: plan.labels.iter().cloned().zip(cf.cf.iter().copied()).collect(),
        reference_label: cf.reference_label.clone(),
        n_real: stats.total(),
    };
    let config_echo = json!({
        "command": "plan-injection",
        "manifest": manifest_path,
        "siir": siir,
        "tune": tune,
    });
    write_artifact(out, &artifact(config_echo, seed, payload))?;
    println!("plan written to {}", out.display());
    Ok(())
}

/// Reads an injection-plan artifact back into its label/count core.
fn load_plan(path: &Path) -> Result<InjectionPlan> {
    #[derive(serde::Deserialize)]
    struct PlanFile {
        siir: f64,
        n_f_total: u64,
        per_label: IndexMap<String, u64>,
    }
    let text = std::fs::read_to_string(path)?;
    let file: PlanFile = serde_json::from_str(&text).map_err(|e| Error::InvalidDocument {
        what: "injection plan",
        message: e.to_string(),
    })?;
    let (labels, counts) = file.per_label.into_iter().unzip();
    Ok(InjectionPlan {
        siir: file.siir,
        n_f_total: file.n_f_total,
        labels,
        counts,
    })
}

fn run_plan_folds(
    manifest_path: &Path,
    k: usize,
    val_ratio: f64,
    seed: Option<u64>,
    plan_path: Option<&Path>,
    out: &Path,
) -> Result<()> {
    let seed = resolve_seed(seed, 0)?;
    let manifest = load_manifest(manifest_path)?;
    let plan = plan_path.map(load_plan).transpose()?;
    let fold_plan = plan_folds(&manifest, k, val_ratio, seed, plan.as_ref())?;

    println!("{:>4} {:>8} {:>8} {:>8}", "Fold", "Test", "Train", "Val");
    for (i, fold) in fold_plan.folds.iter().enumerate() {
        println!(
            "{i:>4} {:>8} {:>8} {:>8}",
            fold.test.len(),
            fold.train.len(),
            fold.val.len()
        );
    }

    let config_echo = json!({
        "command": "plan-folds",
        "manifest": manifest_path,
        "k": k,
        "val_ratio": val_ratio,
        "plan": plan_path,
    });
    write_artifact(out, &artifact(config_echo, seed, &fold_plan))?;
    println!("fold plan written to {}", out.display());
    Ok(())
}

fn print_validation(spec: &NetworkSpec, report: &ValidationReport) {
    println!("network: {} (stage {})", spec.name, spec.stage);
    println!("input:   {}", spec.input_shape);
    println!(
        "{:>3}  {:<20} {:>3} {:>3} {:>3} {:>7}  {:<14} {:<14}",
        "#", "Layer", "K", "P", "S", "OutCh", "Chain", "Declared"
    );
    for (i, layer) in spec.layers.iter().enumerate() {
        let opt = |v: Option<u32>| v.map_or("-".to_string(), |x| x.to_string());
        let declared = layer
            .declared_output
            .map_or("-".to_string(), |s| s.to_string());
        let computed = report
            .trace
            .get(i)
            .map_or("-".to_string(), |s| s.to_string());
        println!(
            "{i:>3}  {:<20} {:>3} {:>3} {:>3} {:>7}  {computed:<14} {declared:<14}",
            layer.kind.to_string(),
            opt(layer.k),
            opt(layer.p),
            opt(layer.s),
            opt(layer.out_channels),
        );
    }
    if report.ok {
        println!("ok: shape chain is consistent");
    } else {
        println!("{} finding(s):", report.findings.len());
        for f in &report.findings {
            println!("  layer {:>2}: {}", f.layer_index, f.note);
        }
    }
}

fn run_validate_gan(
    spec_path: Option<&Path>,
    builtin: Option<BuiltinKind>,
    stage: Option<u32>,
    verbatim: bool,
) -> Result<()> {
    let spec = match (spec_path, builtin) {
        (Some(path), _) => NetworkSpec::from_json(&std::fs::read_to_string(path)?)?,
        (None, Some(kind)) => {
            let stage = stage.expect("clap enforces --stage with --builtin");
            match kind {
                BuiltinKind::Generator => builtin_generator_spec(stage, verbatim)?,
                BuiltinKind::Critic => builtin_critic_spec(stage, verbatim)?,
            }
        }
        (None, None) => unreachable!("clap enforces --spec or --builtin"),
    };
    let report = validate_network(&spec)?;
    print_validation(&spec, &report);
    Ok(())
}

/// Shell-command objective: one process per evaluation, candidate vector
/// as a JSON line on stdin, fitness read from stdout. Failures rank as
/// worst fitness; the first failure is remembered for reporting.
struct CommandObjective {
    program: String,
    first_failure: RefCell<Option<String>>,
}

impl CommandObjective {
    fn new(program: &str) -> CommandObjective {
        CommandObjective {
            program: program.to_string(),
            first_failure: RefCell::new(None),
        }
    }

    fn record(&self, message: String) -> f64 {
        let mut slot = self.first_failure.borrow_mut();
        if slot.is_none() {
            *slot = Some(message);
        }
        f64::INFINITY
    }

    fn eval(&self, x: &[f64]) -> f64 {
        let line = match serde_json::to_string(x) {
            Ok(l) => l,
            Err(e) => return self.record(format!("candidate serialization failed: {e}")),
        };
        let child = std::process::Command::new("sh")
            .arg("-c")
            .arg(&self.program)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn();
        let mut child = match child {
            Ok(c) => c,
            Err(e) => return self.record(format!("failed to spawn objective command: {e}")),
        };
        if let Some(stdin) = child.stdin.take() {
            let mut stdin = stdin;
            if stdin
                .write_all(format!("{line}\n").as_bytes())
                .and_then(|_| stdin.flush())
                .is_err()
            {
                // Command may have exited before reading; fall through to
                // reading its output.
            }
        }
        let output = match child.wait_with_output() {
            Ok(o) => o,
            Err(e) => return self.record(format!("objective command failed: {e}")),
        };
        let text = String::from_utf8_lossy(&output.stdout);
        match text.split_whitespace().next().map(str::parse::<f64>) {
            Some(Ok(v)) => v,
            _ => self.record(format!(
                "objective command produced no numeric output (got `{}`)",
                text.trim()
            )),
        }
    }
}

fn default_toy_dataset(seed: u64) -> ToyDatasetConfig {
    ToyDatasetConfig {
        classes: vec![
            ClassSpec { label: "A".into(), count: 400 },
            ClassSpec { label: "B".into(), count: 120 },
            ClassSpec { label: "C".into(), count: 60 },
            ClassSpec { label: "D".into(), count: 40 },
        ],
        feature_dim: 6,
        separation: 1.2,
        seed,
    }
}

fn run_optimize(
    config_path: Option<&Path>,
    objective: &str,
    toy_config_path: Option<&Path>,
    seed: Option<u64>,
    out: Option<&Path>,
) -> Result<()> {
    let mut sma_config = match config_path {
        Some(path) => SmaConfig::from_json(&std::fs::read_to_string(path)?)?,
        None => SmaConfig::classifier_targets(0),
    };
    sma_config.seed = resolve_seed(seed, sma_config.seed)?;

    let result = if objective == "toy" {
        let toy_config = match toy_config_path {
            Some(path) => ToyRunConfig::from_json(&std::fs::read_to_string(path)?)?,
            None => ToyRunConfig {
                dataset: default_toy_dataset(0),
                folds: 10,
                val_ratio: 0.15,
                cv_epochs: 120,
                cv_batch_size: 128,
                objective_epochs: 15,
                objective_batch_size: 128,
                sma: None,
            },
        };
        let records = generate_toy_dataset(&toy_config.dataset)?;
        let (train_ids, val_ids) =
            objective_split(&records, toy_config.val_ratio, toy_config.dataset.seed);
        let mut pipeline =
            PipelineObjective::new(&records, train_ids, val_ids, toy_config.dataset.seed);
        pipeline.epochs = toy_config.objective_epochs;
        pipeline.batch_size = toy_config.objective_batch_size;
        pipeline.val_ratio = toy_config.val_ratio;
        if sma_config.dimensions() != 3 {
            return Err(Error::config(
                "the toy objective expects a 3-dimensional optimizer config \
                 (learning rate, dropout, SIIR)",
            ));
        }
        optimize(
            |x| match Hyperparameters::from_position(x) {
                Ok(hp) => pipeline.eval(&hp),
                Err(_) => f64::INFINITY,
            },
            &sma_config,
        )?
    } else {
        let command = CommandObjective::new(objective);
        let result = optimize(|x| command.eval(x), &sma_config)?;
        if let Some(message) = command.first_failure.borrow_mut().take() {
            if result.best_fitness.is_finite() {
                eprintln!("warning: {message}");
            } else {
                return Err(Error::config(message));
            }
        }
        result
    };

    println!("best fitness:  {}", result.best_fitness);
    println!("best position: {:?}", result.best_position);
    println!(
        "evaluations:   {} ({} warnings)",
        result.evaluations,
        result.warnings.len()
    );

    if let Some(out) = out {
        let config_echo = json!({
            "command": "optimize",
            "objective": objective,
            "sma": sma_config,
            "toy_config": toy_config_path,
        });
        write_artifact(out, &artifact(config_echo, sma_config.seed, &result))?;
        println!("result written to {}", out.display());
    }
    Ok(())
}

fn run_evaluate(predictions_path: &Path, out: &Path) -> Result<()> {
    let seed = resolve_seed(None, 0)?;
    let rows = parse_predictions(&std::fs::read_to_string(predictions_path)?)?;
    let summary = evaluate_predictions(&rows)?;

    for (name, value) in [
        ("recall", summary.recall),
        ("specificity", summary.specificity),
        ("f1", summary.f1),
        ("precision", summary.precision),
        ("accuracy", summary.accuracy),
    ] {
        println!("{name:<12} {:.4} +- {:.4}", value.mean, value.std);
    }
    println!("labels: {:?}", summary.labels);

    let config_echo = json!({
        "command": "evaluate",
        "predictions": predictions_path,
    });
    write_artifact(out, &artifact(config_echo, seed, &summary))?;
    println!("summary written to {}", out.display());
    Ok(())
}

fn run_toy(
    config_path: &Path,
    features: Option<&Path>,
    dump_features: Option<&Path>,
    seed: Option<u64>,
    out: &Path,
) -> Result<()> {
    let mut config = ToyRunConfig::from_json(&std::fs::read_to_string(config_path)?)?;
    config.dataset.seed = resolve_seed(seed, config.dataset.seed)?;

    let records = match features {
        Some(path) => parse_feature_records(&std::fs::read_to_string(path)?)?,
        None => generate_toy_dataset(&config.dataset)?,
    };
    if let Some(path) = dump_features {
        write_atomic(path, write_feature_csv(&records).as_bytes(), false)?;
        println!("features written to {}", path.display());
    }

    let report = run_toy_pipeline(&config, Some(records))?;

    println!(
        "optimized hp: lr {:.3e}, dropout {:.4}, siir {:.4}",
        report.optimized_hp.learning_rate,
        report.optimized_hp.dropout_rate,
        report.optimized_hp.siir
    );
    if let Some(plan) = &report.plan {
        println!("injection plan: N_f {} over {:?}", plan.n_f_total, plan.counts);
    } else {
        println!("injection plan: none (siir 0 or balanced)");
    }
    println!(
        "optimized arm: macro-F1 {:.4} +- {:.4}, accuracy {:.4} +- {:.4}",
        report.optimized_cv.f1.mean,
        report.optimized_cv.f1.std,
        report.optimized_cv.accuracy.mean,
        report.optimized_cv.accuracy.std
    );
    println!(
        "baseline arm:  macro-F1 {:.4} +- {:.4}, accuracy {:.4} +- {:.4}",
        report.baseline_cv.f1.mean,
        report.baseline_cv.f1.std,
        report.baseline_cv.accuracy.mean,
        report.baseline_cv.accuracy.std
    );

    let config_echo = json!({
        "command": "toy run",
        "config": config,
        "features": features,
    });
    write_artifact(out, &artifact(config_echo, config.dataset.seed, &report))?;
    println!("report written to {}", out.display());
    Ok(())
}
