//! `spikegrad` command line: train, eval, analyze-rates, export-viz.
//!
//! Errors go to stderr as a single `error[<category>]: <message>` line and
//! the process exits with status 1.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{ArgGroup, Args, Parser, Subcommand};
use spikegrad::artifacts::{
    build_bundle, decode_checkpoint, encode_all, execute_train, render_bundle, BundleInput, DataSource, RunConfig,
    BUNDLE_FILE,
};
use spikegrad::data::load_image;
use spikegrad::lif::{linspace_step, sweep_rates, RateGrid, RateRow, Steps};
use spikegrad::network::{ImageDims, Network};
use spikegrad::parallel::Parallelism;
use spikegrad::train::evaluate;
use spikegrad::Scalar;

const SEED_ENV: &str = "SPIKEGRAD_SEED";

#[derive(Parser)]
#[command(name = "spikegrad", version, about = "Train and inspect LIF spiking networks")]
struct Cli {
    /// Process batch items on the calling thread only.
    #[arg(long, global = true)]
    sequential: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a network and write config.txt, metrics.csv, checkpoint.bin and manifest.json.
    Train(TrainArgs),
    /// Evaluate a checkpoint and print accuracy and the confusion matrix.
    Eval(EvalArgs),
    /// Tabulate steps-to-spike from the closed form and from simulation.
    AnalyzeRates(RatesArgs),
    /// Write an explorer bundle for a checkpoint or the built-in demo.
    ExportViz(ExportArgs),
}

#[derive(Args)]
#[command(group(ArgGroup::new("source").required(true).args(["data", "synthetic"])))]
struct TrainArgs {
    /// `key = value` config file; omitted keys keep their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Class-per-subdirectory PNG tree, or a dataset cache file.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Use the generated grating dataset.
    #[arg(long)]
    synthetic: bool,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_name = "1|2")]
    network: Option<String>,
    #[arg(long, value_name = "surrogate|disabled")]
    gradient_mode: Option<String>,
    /// Overrides the config file and SPIKEGRAD_SEED.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_epochs: Option<usize>,
    /// Any other config key, e.g. `--set learning_rate=0.003`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
#[command(group(ArgGroup::new("source").required(true).args(["data", "synthetic"])))]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: Option<PathBuf>,
    /// Regenerate the grating dataset from the checkpoint's config.
    #[arg(long)]
    synthetic: bool,
    #[arg(long, default_value = "test", value_parser = ["train", "test", "all"])]
    split: String,
    /// Expected image dims; must match the checkpoint.
    #[arg(long)]
    dims: Option<ImageDims>,
}

#[derive(Args)]
struct RatesArgs {
    /// START:STOP:STEP
    #[arg(long, default_value = "0.1:1.0:0.1")]
    w_input: String,
    #[arg(long, default_value = "0:0.5:0.05")]
    w_leak: String,
    /// Constant input levels.
    #[arg(long, default_value = "0.1:2.0:0.1")]
    i: String,
    #[arg(long, default_value_t = 1.0)]
    v_thresh: Scalar,
    /// Simulation length for inputs at or below the spiking threshold.
    #[arg(long, default_value_t = 1_000_000)]
    max_steps: u64,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
#[command(group(ArgGroup::new("model").required(true).args(["checkpoint", "demo"])))]
struct ExportArgs {
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Untrained network 2 at desk dims with the default config.
    #[arg(long)]
    demo: bool,
    /// PNG to record; defaults to a synthetic test image.
    #[arg(long)]
    image: Option<PathBuf>,
    /// Label of `--image`.
    #[arg(long, default_value_t = 0)]
    label: usize,
    /// Index into the synthetic test split when no image is given.
    #[arg(long, default_value_t = 0)]
    index: usize,
    #[arg(long)]
    out: PathBuf,
}

fn parallelism(cli: &Cli) -> Parallelism {
    if cli.sequential {
        Parallelism::Sequential
    } else {
        Parallelism::Rayon
    }
}

fn resolve_config(args: &TrainArgs) -> anyhow::Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| spikegrad::Error::Config(format!("cannot read {}: {e}", path.display())))?;
            RunConfig::parse(&text)?
        }
        None => RunConfig::default(),
    };
    if let Ok(seed) = std::env::var(SEED_ENV) {
        cfg.set("seed", seed.trim())
            .map_err(|e| spikegrad::Error::Config(format!("{SEED_ENV}: {e}")))?;
    }
    if let Some(v) = &args.network {
        cfg.set("network", v)?;
    }
    if let Some(v) = &args.gradient_mode {
        cfg.set("gradient_mode", v)?;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.max_epochs {
        cfg.max_epochs = v;
    }
    for pair in &args.overrides {
        let (key, value) = pair
            .split_once('=')
            .ok_or_else(|| spikegrad::Error::Config(format!("--set expects KEY=VALUE, got {pair:?}")))?;
        cfg.set(key.trim(), value.trim())?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn data_source(data: &Option<PathBuf>) -> DataSource {
    data.as_ref().map_or(DataSource::Synthetic, DataSource::from_path)
}

fn cmd_train(args: &TrainArgs, par: Parallelism) -> anyhow::Result<()> {
    let cfg = resolve_config(args)?;
    let source = data_source(&args.data);
    log::info!("config hash {} seed {}", cfg.hash(), cfg.seed);
    let outputs = execute_train(&cfg, &source, par, |m| {
        log::info!(
            "epoch {:>3}  train {:.4}  test {:.4}  loss {:.4}  density {:.4}",
            m.epoch,
            m.train_accuracy,
            m.test_accuracy,
            m.mean_loss,
            m.spike_density
        );
    })?;
    outputs.write_to(&args.out)?;
    let m = &outputs.manifest;
    println!(
        "best epoch {} test accuracy {:.4}, stopped: {}, wrote {}",
        m.best_epoch,
        m.best_test_accuracy,
        m.stop_reason,
        args.out.display()
    );
    Ok(())
}

fn load_checkpoint(path: &Path) -> anyhow::Result<(Network, spikegrad::artifacts::CheckpointMeta, RunConfig)> {
    let bytes = fs::read(path)
        .map_err(|e| spikegrad::Error::Data(format!("cannot read checkpoint {}: {e}", path.display())))?;
    let (net, meta) = decode_checkpoint(&bytes)?;
    let cfg = RunConfig::parse(&meta.config)?;
    Ok((net, meta, cfg))
}

fn cmd_eval(args: &EvalArgs, par: Parallelism) -> anyhow::Result<()> {
    let (net, meta, cfg) = load_checkpoint(&args.checkpoint)?;
    if let Some(dims) = args.dims {
        if dims != meta.dims {
            return Err(spikegrad::Error::Data(format!(
                "checkpoint expects {} images but --dims is {dims}",
                meta.dims
            ))
            .into());
        }
    }
    let data = data_source(&args.data).load(&cfg)?;
    if data.classes() != net.classes() {
        return Err(spikegrad::Error::Data(format!(
            "checkpoint has {} classes but the data has {}",
            net.classes(),
            data.classes()
        ))
        .into());
    }
    let images = match args.split.as_str() {
        "train" => data.train,
        "test" => data.test,
        _ => data.train.into_iter().chain(data.test).collect(),
    };
    let eval = evaluate(&net, &encode_all(&images), par)?;
    let mut out = String::new();
    writeln!(out, "split {} ({} images)", args.split, images.len())?;
    writeln!(out, "accuracy {}", eval.accuracy)?;
    writeln!(out, "mean_loss {}", eval.mean_loss)?;
    writeln!(out, "spike_density {}", eval.spike_density)?;
    writeln!(out, "confusion (rows: true class, columns: predicted)")?;
    for (name, row) in data.class_names.iter().zip(&eval.confusion) {
        let cells: Vec<String> = row.iter().map(usize::to_string).collect();
        writeln!(out, "{name},{}", cells.join(","))?;
    }
    print!("{out}");
    Ok(())
}

fn parse_range(flag: &str, text: &str) -> anyhow::Result<Vec<Scalar>> {
    let parts: Vec<&str> = text.split(':').collect();
    let nums: Vec<Scalar> = parts
        .iter()
        .map(|p| p.trim().parse::<Scalar>())
        .collect::<Result<_, _>>()
        .map_err(|_| spikegrad::Error::InvalidParameter(format!("--{flag}: cannot parse {text:?}")))?;
    match nums[..] {
        [v] => Ok(vec![v]),
        [start, stop, step] => Ok(linspace_step(start, stop, step)?),
        _ => Err(spikegrad::Error::InvalidParameter(format!("--{flag}: expected VALUE or START:STOP:STEP, got {text:?}")).into()),
    }
}

fn steps_cell(steps: Option<u64>) -> String {
    steps.map_or_else(|| "diverges".into(), |n| n.to_string())
}

fn render_rates(rows: &[RateRow], max_steps: u64) -> String {
    let mut s = format!("# spikegrad rates v1 max_steps={max_steps}\nw_input,w_leak,i,n_formula,n_simulated,i_min\n");
    for r in rows {
        let formula = match r.formula {
            Steps::Finite(n) => Some(n),
            Steps::Diverges => None,
        };
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            r.w_input,
            r.w_leak,
            r.i,
            steps_cell(formula),
            steps_cell(r.simulated),
            r.i_min
        );
    }
    s
}

fn cmd_analyze_rates(args: &RatesArgs, par: Parallelism) -> anyhow::Result<()> {
    let grid = RateGrid {
        w_input: parse_range("w-input", &args.w_input)?,
        w_leak: parse_range("w-leak", &args.w_leak)?,
        inputs: parse_range("i", &args.i)?,
        v_thresh: args.v_thresh,
    };
    let rows = sweep_rates(&grid, args.max_steps, par)?;
    let table = render_rates(&rows, args.max_steps);
    match &args.out {
        Some(path) => fs::write(path, &table).with_context(|| format!("writing {}", path.display()))?,
        None => std::io::stdout().write_all(table.as_bytes())?,
    }
    let bad: Vec<&RateRow> = rows.iter().filter(|r| !r.agrees()).collect();
    if let Some(first) = bad.first() {
        bail!(CliError::new(
            "mismatch",
            format!(
                "{} of {} rows disagree, first at w_input={} w_leak={} i={}",
                bad.len(),
                rows.len(),
                first.w_input,
                first.w_leak,
                first.i
            )
        ));
    }
    log::info!("{} rows, formula and simulation agree", rows.len());
    Ok(())
}

fn cmd_export_viz(args: &ExportArgs) -> anyhow::Result<()> {
    let (net, epoch, cfg, hash) = match &args.checkpoint {
        Some(path) => {
            let (net, meta, cfg) = load_checkpoint(path)?;
            (net, meta.epoch, cfg, meta.config_hash)
        }
        None => {
            let cfg = RunConfig::default();
            let mut net = Network::new(cfg.network, cfg.dims, cfg.synthetic_classes, cfg.dropout, cfg.seed)?;
            net.round_to_storage_precision();
            let hash = cfg.hash();
            (net, 0, cfg, hash)
        }
    };
    let mut initial = Network::new(net.architecture, net.dims, net.classes(), net.dropout.rate, cfg.seed)?;
    initial.round_to_storage_precision();
    let image = match &args.image {
        Some(path) => load_image(path, net.dims, args.label)?,
        None => {
            let data = DataSource::Synthetic.load(&cfg)?;
            let n = data.test.len();
            data.test
                .into_iter()
                .nth(args.index)
                .ok_or_else(|| spikegrad::Error::InvalidParameter(format!("--index {} but the test split has {n} images", args.index)))?
        }
    };
    let bundle = build_bundle(BundleInput {
        network: &net,
        initial: &initial,
        image: &image,
        epoch,
        config_hash: hash,
        seed: cfg.seed,
    })?;
    let text = render_bundle(&bundle)?;
    fs::create_dir_all(&args.out)?;
    let path = args.out.join(BUNDLE_FILE);
    fs::write(&path, text)?;
    println!("wrote {}", path.display());
    Ok(())
}

/// Error raised by the CLI itself rather than the library.
#[derive(Debug)]
struct CliError {
    category: &'static str,
    message: String,
}

impl CliError {
    fn new(category: &'static str, message: String) -> Self {
        Self { category, message }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

fn category(err: &anyhow::Error) -> &'static str {
    if let Some(e) = err.downcast_ref::<spikegrad::Error>() {
        e.category()
    } else if let Some(e) = err.downcast_ref::<CliError>() {
        e.category
    } else if err.downcast_ref::<std::io::Error>().is_some() {
        "io"
    } else {
        "internal"
    }
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    let par = parallelism(cli);
    match &cli.command {
        Command::Train(a) => cmd_train(a, par),
        Command::Eval(a) => cmd_eval(a, par),
        Command::AnalyzeRates(a) => cmd_analyze_rates(a, par),
        Command::ExportViz(a) => cmd_export_viz(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let message = format!("{err:#}").replace('\n', " ");
            eprintln!("error[{}]: {message}", category(&err));
            ExitCode::FAILURE
        }
    }
}
