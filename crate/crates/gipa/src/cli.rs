//! Command-line dispatch: train, evaluate, generate, encode, gradcheck
//! and ablate, all driven by one TOML configuration plus a small set of
//! override flags.

use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use crate::config::TrainConfig;
use crate::dataset::{load_dataset, write_atomic, write_dataset};
use crate::error::{GipaError, Result};
use crate::gradcheck::check_params_refined;
use crate::graph::{build_graph, Graph};
use crate::head::loss as head_loss;
use crate::layer::{Ablation, AttentionKind};
use crate::model::{Checkpoint, GipaModel, ModelDims};
use crate::synthetic::{generate, SyntheticSpec};
use crate::tensor::Tape;
use crate::train;

#[derive(Debug, Parser)]
#[command(name = "gipa", version, about = "Edge-aware graph attention training and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a model; writes checkpoint, metrics and effective config
    Train(RunArgs),
    /// Score every split of a dataset under a saved checkpoint
    Evaluate(RunArgs),
    /// Write a synthetic dataset to disk
    Generate(RunArgs),
    /// Fit the feature bucket encoder and save it
    Encode(RunArgs),
    /// Verify analytic gradients against finite differences
    Gradcheck(RunArgs),
    /// Train the four attention variants over the seed list
    Ablate(RunArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    /// TOML configuration file; defaults apply when omitted
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the training and generator seed
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (train, ablate, generate, encode) or checkpoint
    /// location (evaluate)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the ablation: full, no_bitwise, no_featurewise,
    /// no_edge_feature
    #[arg(long)]
    ablation: Option<Ablation>,
    /// Override the stacked layer count (1 through 6)
    #[arg(long)]
    layers: Option<usize>,
    /// Override the attention activation: softplus, softmax, leaky_relu,
    /// relu, tanh, none
    #[arg(long)]
    activation: Option<AttentionKind>,
    /// Print the effective configuration as TOML and exit
    #[arg(long)]
    print_config: bool,
}

impl RunArgs {
    fn effective_config(&self) -> Result<TrainConfig> {
        let mut config = match &self.config {
            Some(path) => TrainConfig::load(path)?,
            None => TrainConfig::default(),
        };
        config.apply_flags(self.seed, self.ablation, self.layers, self.activation);
        config.validate()?;
        Ok(config)
    }

    fn out_or(&self, default: &str) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from(default))
    }
}

/// Parse and dispatch; prints its own diagnostics.
pub fn run<I>(args: I) -> ExitCode
where
    I: IntoIterator<Item = String>,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(err) => {
            let code = if err.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
            let _ = err.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let args = match &cli.command {
        Command::Train(a)
        | Command::Evaluate(a)
        | Command::Generate(a)
        | Command::Encode(a)
        | Command::Gradcheck(a)
        | Command::Ablate(a) => a,
    };
    let config = args.effective_config()?;
    if args.print_config {
        print!("{}", config.to_toml()?);
        return Ok(());
    }
    match &cli.command {
        Command::Train(a) => cmd_train(a, &config),
        Command::Evaluate(a) => cmd_evaluate(a, &config),
        Command::Generate(a) => cmd_generate(a, &config),
        Command::Encode(a) => cmd_encode(a, &config),
        Command::Gradcheck(_) => cmd_gradcheck(&config),
        Command::Ablate(a) => cmd_ablate(a, &config),
    }
}

/// Dataset from `data.path` when configured, otherwise an in-memory
/// synthetic draw from `[synthetic]`.
fn resolve_graph(config: &TrainConfig) -> Result<Graph> {
    match &config.data.path {
        Some(path) => load_dataset(path),
        None => {
            let d = generate(&config.synthetic)?;
            log::info!(
                "no data.path configured; using a synthetic dataset ({} nodes, seed {})",
                d.manifest.n_nodes,
                config.synthetic.seed
            );
            build_graph(&d.edges, &d.edge_feat, d.node_feat, d.labels, d.split, d.manifest.undirected)
        }
    }
}

fn write_json_line_file<T: serde::Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut text = String::new();
    for item in items {
        text.push_str(&serde_json::to_string(item).map_err(|e| GipaError::Serde(e.to_string()))?);
        text.push('\n');
    }
    write_atomic(path, text.as_bytes())
}

#[derive(Debug, serde::Serialize, serde::Deserialize)]
struct TrainSummary {
    best_epoch: usize,
    best_valid_auc: f64,
    test_auc_at_best: f64,
}

fn cmd_train(args: &RunArgs, config: &TrainConfig) -> Result<()> {
    let graph = resolve_graph(config)?;
    let result = train::train(&graph, config)?;
    let out = args.out_or("runs/train");
    std::fs::create_dir_all(&out)?;
    write_atomic(&out.join("config.toml"), config.to_toml()?.as_bytes())?;
    write_json_line_file(&out.join("metrics.jsonl"), &result.records)?;
    result.checkpoint.save(&out.join("checkpoint.json"))?;
    let summary = TrainSummary {
        best_epoch: result.best_epoch,
        best_valid_auc: result.best_valid_auc,
        test_auc_at_best: result.test_auc_at_best,
    };
    let summary_text =
        serde_json::to_string_pretty(&summary).map_err(|e| GipaError::Serde(e.to_string()))?;
    write_atomic(&out.join("summary.json"), summary_text.as_bytes())?;
    println!(
        "trained {} epochs; best epoch {} valid auc {:.4} test auc {:.4}",
        result.records.iter().map(|r| r.epoch).max().unwrap_or(0),
        result.best_epoch,
        result.best_valid_auc,
        result.test_auc_at_best
    );
    println!("artifacts in {}", out.display());
    Ok(())
}

fn checkpoint_path(out: &Path) -> PathBuf {
    if out.extension().is_some_and(|e| e == "json") {
        out.to_path_buf()
    } else {
        out.join("checkpoint.json")
    }
}

fn cmd_evaluate(args: &RunArgs, config: &TrainConfig) -> Result<()> {
    let graph = resolve_graph(config)?;
    let path = checkpoint_path(&args.out_or("runs/train"));
    let checkpoint = Checkpoint::load(&path)?;
    let metrics = train::evaluate(&graph, &checkpoint)?;
    println!("{:<8} {:>10} {:>10} {:>9}", "split", "loss", "mean_auc", "excluded");
    for m in metrics {
        println!(
            "{:<8} {:>10.6} {:>10.4} {:>9}",
            m.split.to_string(),
            m.loss,
            m.auc.mean,
            m.auc.n_excluded
        );
    }
    Ok(())
}

fn cmd_generate(args: &RunArgs, config: &TrainConfig) -> Result<()> {
    let files = generate(&config.synthetic)?;
    let out = args.out_or("data/synthetic");
    write_dataset(&files, &out)?;
    println!(
        "wrote {} nodes, {} edges, {} labels to {}",
        files.manifest.n_nodes,
        files.manifest.n_edges,
        files.manifest.num_labels,
        out.display()
    );
    Ok(())
}

fn cmd_encode(args: &RunArgs, config: &TrainConfig) -> Result<()> {
    let graph = resolve_graph(config)?;
    let encoder = train::fit_encoder(&graph, config)?;
    let out = args.out_or("runs/encoder");
    std::fs::create_dir_all(&out)?;
    let path = out.join("encoder.json");
    encoder.save(&path)?;
    println!(
        "fitted {} features x {} buckets ({}); dense width {}, sparse width {}",
        encoder.num_features(),
        encoder.k_buckets(),
        encoder.method(),
        encoder.num_features(),
        encoder.sparse_width()
    );
    println!("saved {}", path.display());
    Ok(())
}

/// Budget-sized graph and model so full finite differencing stays fast.
fn cmd_gradcheck(config: &TrainConfig) -> Result<()> {
    let spec = SyntheticSpec {
        n_nodes: 24,
        avg_degree: 4.0,
        num_node_features: 3,
        num_edge_features: 2,
        num_labels: 2,
        beta: 0.6,
        noise_fraction: 0.2,
        seed: config.training.seed,
        train_fraction: 0.5,
        valid_fraction: 0.25,
    };
    let d = generate(&spec)?;
    let graph = build_graph(&d.edges, &d.edge_feat, d.node_feat, d.labels, d.split, false)?;
    let dims = ModelDims {
        m_raw: 3,
        k_buckets: 3,
        d_e_raw: 2,
        d_e: 2,
        n: 4,
        hidden: 4,
        n_labels: 2,
        n_layers: config.model.layers,
    };
    let mut rng = rand::SeedableRng::seed_from_u64(config.training.seed);
    let model = GipaModel::init(&mut rng, dims, config.model.ablation, config.model.activation)?;
    let encoder = crate::encode::FeatureEncoder::fit(&graph.node_feat, 3, config.model.bucket_method)?;
    let mask = graph.split_mask(crate::graph::Split::Train);

    let forward = {
        let (model, graph, encoder, mask) = (model.clone(), graph.clone(), encoder.clone(), mask.clone());
        move || {
            let mut tape = Tape::new();
            let logits = model.forward(&mut tape, &graph, &encoder).unwrap();
            let l = head_loss(&mut tape, &logits, &graph.labels, &mask).unwrap();
            (tape, l)
        }
    };
    let (mut tape, l) = forward();
    tape.backward(&l)?;
    let params = model.params();
    let analytic: Vec<Vec<f64>> = params
        .iter()
        .map(|(_, t)| t.grad().unwrap_or_else(|| vec![0.0; t.len()]))
        .collect();
    let loss_fn = move || forward().1.to_vec()[0];
    let checks = check_params_refined(&params, &analytic, 1e-5, 1e-4, &loss_fn);

    println!("{:<20} {:>12} {:>7}", "parameter", "max_rel_err", "status");
    let mut failed = 0usize;
    for c in &checks {
        println!("{:<20} {:>12.3e} {:>7}", c.name, c.max_rel_err, if c.passed { "pass" } else { "FAIL" });
        if !c.passed {
            failed += 1;
        }
    }
    if failed > 0 {
        return Err(GipaError::contract(
            "gradcheck",
            format!("{failed} of {} parameters exceeded 1e-4 relative error", checks.len()),
        ));
    }
    println!("all {} parameters within 1e-4", checks.len());
    Ok(())
}

fn cmd_ablate(args: &RunArgs, config: &TrainConfig) -> Result<()> {
    let graph = resolve_graph(config)?;
    let rows = train::ablate(&graph, config)?;
    let out = args.out_or("runs/ablate");
    std::fs::create_dir_all(&out)?;
    let text = serde_json::to_string_pretty(&rows).map_err(|e| GipaError::Serde(e.to_string()))?;
    write_atomic(&out.join("ablation.json"), text.as_bytes())?;
    println!("{:<16} {:>9} {:>9}  per-seed", "ablation", "mean_auc", "std_auc");
    for row in &rows {
        let seeds: Vec<String> = row.per_seed.iter().map(|a| format!("{a:.4}")).collect();
        println!(
            "{:<16} {:>9.4} {:>9.4}  {}",
            row.ablation.to_string(),
            row.mean_auc,
            row.std_auc,
            seeds.join(" ")
        );
    }
    println!("table saved to {}", out.join("ablation.json").display());
    Ok(())
}
