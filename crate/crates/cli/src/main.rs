use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bikevae::gnn::FusionMode;
use bikevae::io::{generate_synthetic_dataset, load_checkpoint, load_dir, load_graphml, read_json, save_csv, write_json, DatasetBundle, GeneratorConfig};
use bikevae::train::{
    ablation_csv, evaluate_checkpoint, predict_checkpoint, run_arms, run_pipeline, set_dotted, write_run, Arm, TrainConfig,
    CONFIG_FILE,
};
use bikevae::{Error, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

/// Traffic-volume estimation on sparsely labeled road graphs.
#[derive(Parser)]
#[command(name = "bikevae", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset with known ground truth.
    Generate(GenerateArgs),
    /// Cross-validated two-stage training; writes report, metrics and checkpoints.
    Train(TrainArgs),
    /// Score a fold checkpoint on a dataset.
    Evaluate(EvaluateArgs),
    /// Per-segment volume and class predictions from a fold checkpoint.
    Predict(PredictArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// JSON config file; missing keys take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dotted-key override, e.g. `optim.lr=0.005`. Repeatable; applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct DataArgs {
    /// Dataset directory (nodes.csv, edges.csv, labels.csv, ...) or a GraphML file.
    #[arg(long)]
    data: PathBuf,
    /// Count file for GraphML input.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Feature schema for GraphML input; inferred when absent.
    #[arg(long)]
    schema: Option<PathBuf>,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n_nodes: Option<usize>,
    #[arg(long)]
    label_fraction: Option<f64>,
    #[arg(long)]
    noise: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Parallel,
    Sequential,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long)]
    no_gat: bool,
    #[arg(long)]
    no_sage: bool,
    #[arg(long)]
    no_vae: bool,
    /// Regression weight of the joint loss.
    #[arg(long)]
    alpha: Option<f64>,
    /// Cosine threshold for synthetic edges.
    #[arg(long)]
    tau: Option<f64>,
    /// Synthetic nodes requested per fold.
    #[arg(long)]
    synthetic_count: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Run the full, no-gat, no-sage and no-vae arms into subdirectories.
    #[arg(long)]
    sweep: bool,
    /// Worker threads for folds; results do not depend on it.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    /// Output directory for evaluation.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    /// Output directory for predictions.csv.
    #[arg(long)]
    out: PathBuf,
}

fn load_config<T: Default + serde::de::DeserializeOwned>(args: &ConfigArgs) -> Result<T> {
    match &args.config {
        Some(p) => read_json(p),
        None => Ok(T::default()),
    }
}

fn load_data(args: &DataArgs) -> Result<DatasetBundle> {
    if args.data.is_dir() {
        return load_dir(&args.data);
    }
    let graphml = args.data.extension().is_some_and(|e| e.eq_ignore_ascii_case("graphml"));
    if !graphml {
        return Err(Error::Config(format!("{} is neither a dataset directory nor a .graphml file", args.data.display())));
    }
    let labels = args.labels.as_ref().ok_or_else(|| Error::Config("GraphML input needs --labels".into()))?;
    let schema = match &args.schema {
        Some(p) => Some(read_json(p)?),
        None => None,
    };
    load_graphml(&args.data, labels, schema.as_ref())
}

fn generate(args: GenerateArgs) -> Result<()> {
    let mut cfg: GeneratorConfig = load_config(&args.config)?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(n) = args.n_nodes {
        cfg.n_nodes = n;
    }
    if let Some(f) = args.label_fraction {
        cfg.label_fraction = f;
    }
    if let Some(x) = args.noise {
        cfg.noise = x;
    }
    for o in &args.config.overrides {
        set_dotted(&mut cfg, o)?;
    }
    cfg.validate()?;
    let bundle = generate_synthetic_dataset(&cfg)?;
    save_csv(&bundle, &args.out)?;
    write_json(&args.out.join(CONFIG_FILE), &cfg)?;
    log::info!(
        "wrote {} segments, {} labeled, to {}",
        bundle.graph.n_nodes(),
        bundle.labels.len(),
        args.out.display()
    );
    Ok(())
}

fn resolve_train_config(args: &TrainArgs) -> Result<TrainConfig> {
    let mut cfg: TrainConfig = load_config(&args.config)?;
    if let Some(m) = args.mode {
        cfg.model.mode = match m {
            ModeArg::Parallel => FusionMode::Parallel,
            ModeArg::Sequential => FusionMode::Sequential,
        };
    }
    if args.no_gat {
        cfg.model.mask.gat = false;
    }
    if args.no_sage {
        cfg.model.mask.sage = false;
    }
    if args.no_vae {
        cfg.augment.enabled = false;
    }
    if let Some(a) = args.alpha {
        cfg.loss.alpha = a;
    }
    if let Some(t) = args.tau {
        cfg.augment.tau = t;
    }
    if let Some(n) = args.synthetic_count {
        cfg.augment.count = Some(n);
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    for o in &args.config.overrides {
        cfg.set(o)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn train(args: TrainArgs) -> Result<()> {
    let cfg = resolve_train_config(&args)?;
    if args.jobs == 0 {
        return Err(Error::Config("--jobs must be at least 1".into()));
    }
    let bundle = load_data(&args.data)?;
    if args.sweep {
        let results = run_arms(&bundle, &cfg, &Arm::ABLATION, args.jobs)?;
        std::fs::create_dir_all(&args.out)?;
        write_json(&args.out.join(CONFIG_FILE), &cfg)?;
        for (arm, outcome) in &results {
            write_run(&args.out.join(arm.name()), outcome)?;
            log::info!("{}: mean test MAE {:.3}", arm.name(), outcome.report.mean.mae);
        }
        std::fs::write(args.out.join("ablation.csv"), ablation_csv(&results)?)?;
    } else {
        let outcome = run_pipeline(&bundle, &cfg, args.jobs)?;
        write_run(&args.out, &outcome)?;
        let m = &outcome.report.mean;
        log::info!("mean test MAE {:.3}  R² {:.3}  accuracy {:.3}", m.mae, m.r2, m.accuracy);
    }
    Ok(())
}

fn open_checkpoint(path: &Path, bundle: &DatasetBundle) -> Result<bikevae::io::Checkpoint> {
    load_checkpoint(path, Some(&bundle.schema_fingerprint()))
}

fn invocation(checkpoint: &Path, data: &DataArgs, ckpt: &bikevae::io::Checkpoint) -> serde_json::Value {
    json!({
        "checkpoint": checkpoint.display().to_string(),
        "data": data.data.display().to_string(),
        "labels": data.labels.as_ref().map(|p| p.display().to_string()),
        "schema": data.schema.as_ref().map(|p| p.display().to_string()),
        "model": &ckpt.model.config,
        "inference_seed": ckpt.inference_seed,
    })
}

fn evaluate(args: EvaluateArgs) -> Result<()> {
    let bundle = load_data(&args.data)?;
    let ckpt = open_checkpoint(&args.checkpoint, &bundle)?;
    let eval = evaluate_checkpoint(&ckpt, &bundle)?;
    std::fs::create_dir_all(&args.out)?;
    write_json(&args.out.join("evaluation_config.json"), &invocation(&args.checkpoint, &args.data, &ckpt))?;
    write_json(&args.out.join("evaluation.json"), &eval)?;
    if let Some(t) = &eval.test {
        log::info!("test MAE {:.3}  R² {:.3}  accuracy {:.3}", t.mae, t.r2, t.accuracy);
    }
    Ok(())
}

fn predict(args: PredictArgs) -> Result<()> {
    let bundle = load_data(&args.data)?;
    let ckpt = open_checkpoint(&args.checkpoint, &bundle)?;
    let rows = predict_checkpoint(&ckpt, &bundle)?;
    std::fs::create_dir_all(&args.out)?;
    write_json(&args.out.join("prediction_config.json"), &invocation(&args.checkpoint, &args.data, &ckpt))?;
    let mut w = csv::Writer::from_path(args.out.join("predictions.csv"))?;
    w.write_record(["segment_id", "adb", "class"])?;
    for r in &rows {
        w.write_record([r.segment_id.as_str(), &r.adb.to_string(), &r.class.to_string()])?;
    }
    w.flush()?;
    let oracle = match &bundle.ground_truth {
        Some(_) => evaluate_checkpoint(&ckpt, &bundle)?.oracle,
        None => None,
    };
    if let Some(o) = &oracle {
        log::info!("oracle MAE over {} unlabeled segments: {:.3}", o.n, o.mae);
    }
    write_json(&args.out.join("prediction_summary.json"), &json!({ "n_segments": rows.len(), "oracle": oracle }))?;
    Ok(())
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("").trim_start_matches("error:").trim();
            eprintln!("error: usage: {}", one_line(first));
            return ExitCode::from(2);
        }
    };
    let result = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Train(a) => train(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Predict(a) => predict(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}: {}", e.kind(), one_line(&e.to_string()));
            ExitCode::FAILURE
        }
    }
}
