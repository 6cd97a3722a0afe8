//! `progap` command-line interface.
//!
//! Exit codes: 0 on success, 1 on runtime failures (training divergence,
//! unreachable calibration targets, I/O), 2 on usage or configuration errors.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use progap::experiment::{self, RunConfig};
use progap::graph::{generate_sbm, SbmSpec};
use progap::privacy::{self, Noise, PrivacyLevel, PrivacySpec};
use progap::Error;

#[derive(Parser)]
#[command(name = "progap", version, about = "Progressive differentially private GNN training and accounting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model per seed and write metrics, summaries and an aggregate.
    Train(TrainArgs),
    /// Print the privacy accounting report for explicit noise scales.
    Account(AccountArgs),
    /// Find noise scales for a target epsilon.
    Calibrate(CalibrateArgs),
    /// Run the config once per epsilon and print a CSV of accuracies.
    Sweep(SweepArgs),
    /// Write a synthetic stochastic block model graph to files.
    Generate(GenerateArgs),
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides `privacy.epsilon` (a number or `inf`).
    #[arg(long)]
    epsilon: Option<String>,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Comma-separated seed list.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    /// Comma-separated targets, e.g. `0.25,1,4,inf`; overrides `epsilons`.
    #[arg(long, value_delimiter = ',')]
    epsilons: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Level {
    Edge,
    Node,
}

impl From<Level> for PrivacyLevel {
    fn from(level: Level) -> Self {
        match level {
            Level::Edge => PrivacyLevel::Edge,
            Level::Node => PrivacyLevel::Node,
        }
    }
}

#[derive(Args)]
struct Structure {
    #[arg(long, value_enum)]
    level: Level,
    /// Model depth K.
    #[arg(long = "depth", short = 'k')]
    depth: usize,
    #[arg(long)]
    delta: f64,
    /// Node level: out-degree cap D.
    #[arg(long = "degree-cap")]
    degree_cap: Option<usize>,
    /// Node level: DP-SGD iterations per stage T.
    #[arg(long)]
    iterations: Option<usize>,
    /// Node level: expected batch size B.
    #[arg(long = "batch-size")]
    batch_size: Option<usize>,
    /// Node level: number of (training) nodes N sampled from.
    #[arg(long = "num-nodes")]
    num_nodes: Option<usize>,
    /// Node level: clipping norm C.
    #[arg(long, default_value_t = 1.0)]
    clip: f64,
}

impl Structure {
    fn spec(&self, noise: Noise) -> Result<PrivacySpec, Error> {
        let level = PrivacyLevel::from(self.level);
        if level == PrivacyLevel::Edge {
            return Ok(PrivacySpec::edge(self.depth, self.delta, noise));
        }
        let need = |v: Option<usize>, flag: &str| {
            v.ok_or_else(|| Error::Config(format!("node level requires --{flag}")))
        };
        Ok(PrivacySpec {
            level,
            delta: self.delta,
            depth: self.depth,
            degree_cap: need(self.degree_cap, "degree-cap")?,
            clip: self.clip,
            batch_size: need(self.batch_size, "batch-size")?,
            iterations: need(self.iterations, "iterations")?,
            num_nodes: need(self.num_nodes, "num-nodes")?,
            noise,
        })
    }
}

#[derive(Args)]
struct AccountArgs {
    #[command(flatten)]
    structure: Structure,
    /// Aggregation noise std (edge level: the NAP sigma).
    #[arg(long = "sigma-ap", visible_alias = "sigma")]
    sigma_ap: f64,
    /// Gradient noise std (node level).
    #[arg(long = "sigma-gp")]
    sigma_gp: Option<f64>,
}

#[derive(Args)]
struct CalibrateArgs {
    #[command(flatten)]
    structure: Structure,
    /// Target epsilon (a number or `inf`).
    #[arg(long)]
    epsilon: String,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, default_value_t = 5000)]
    nodes: usize,
    #[arg(long, default_value_t = 4)]
    classes: usize,
    #[arg(long = "intra-p", default_value_t = 0.016)]
    intra_p: f64,
    #[arg(long = "inter-p", default_value_t = 0.0013)]
    inter_p: f64,
    #[arg(long = "feature-dim", default_value_t = 16)]
    feature_dim: usize,
    #[arg(long = "feature-signal", default_value_t = 1.0)]
    feature_signal: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory receiving `edges.txt`, `features.csv` and `labels.txt`.
    #[arg(long)]
    out: PathBuf,
}

fn parse_epsilon(text: &str) -> Result<Option<f64>, Error> {
    match text.trim().to_ascii_lowercase().as_str() {
        "inf" | "infinity" => Ok(None),
        t => match t.parse::<f64>() {
            Ok(e) if e > 0.0 => Ok(Some(e).filter(|e| e.is_finite())),
            _ => Err(Error::Config(format!("bad epsilon {text:?}"))),
        },
    }
}

fn load_config(path: &Path) -> Result<RunConfig, Error> {
    if !path.exists() {
        return Err(Error::Config(format!("config file {} not found", path.display())));
    }
    RunConfig::load(path)
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<(), Error> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn cmd_train(args: TrainArgs) -> Result<(), Error> {
    let mut cfg = load_config(&args.config)?;
    if let Some(eps) = &args.epsilon {
        cfg.privacy.epsilon = parse_epsilon(eps)?;
    }
    if let Some(depth) = args.depth {
        cfg.model.depth = depth;
    }
    if let Some(epochs) = args.epochs {
        cfg.train.epochs = epochs;
    }
    if let Some(lr) = args.learning_rate {
        cfg.train.learning_rate = lr;
    }
    if let Some(seeds) = args.seeds {
        cfg.seeds = seeds;
    }
    if args.output_dir.is_some() {
        cfg.output_dir = args.output_dir;
    }
    cfg.validate()?;
    let outcome = experiment::run_all(&cfg)?;
    if let Some(dir) = &cfg.output_dir {
        experiment::write_outcome(dir, &outcome)?;
    }
    print_json(&outcome.aggregate)
}

fn cmd_account(args: AccountArgs) -> Result<(), Error> {
    let level = PrivacyLevel::from(args.structure.level);
    let sigma_gp = match (level, args.sigma_gp) {
        (PrivacyLevel::Node, None) => return Err(Error::Config("node level requires --sigma-gp".into())),
        (_, gp) => gp.unwrap_or(0.0),
    };
    let spec = args.structure.spec(Noise::Explicit {
        sigma_ap: args.sigma_ap,
        sigma_gp,
    })?;
    print_json(&privacy::account(&spec)?)
}

fn cmd_calibrate(args: CalibrateArgs) -> Result<(), Error> {
    let target = parse_epsilon(&args.epsilon)?.unwrap_or(f64::INFINITY);
    let spec = args.structure.spec(Noise::TargetEpsilon(target))?;
    print_json(&privacy::calibrate(&spec)?)
}

fn cmd_sweep(args: SweepArgs) -> Result<(), Error> {
    let mut cfg = load_config(&args.config)?;
    if let Some(list) = &args.epsilons {
        cfg.epsilons = list.iter().map(|e| parse_epsilon(e)).collect::<Result<_, _>>()?;
    }
    if let Some(seeds) = args.seeds {
        cfg.seeds = seeds;
    }
    cfg.validate()?;
    let rows = experiment::sweep(&cfg)?;
    if let Some(dir) = &cfg.output_dir {
        for (row, outcome) in &rows {
            let name = row.epsilon.map_or("eps-inf".to_string(), |e| format!("eps-{e}"));
            experiment::write_outcome(&dir.join(name), outcome)?;
        }
    }
    let csv = experiment::sweep_csv(&rows.into_iter().map(|(r, _)| r).collect::<Vec<_>>());
    match &args.output {
        Some(path) => fs::write(path, csv).map_err(|e| Error::io(path, e)),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

fn cmd_generate(args: GenerateArgs) -> Result<(), Error> {
    let spec = SbmSpec {
        num_nodes: args.nodes,
        num_classes: args.classes,
        intra_p: args.intra_p,
        inter_p: args.inter_p,
        feature_dim: args.feature_dim,
        feature_signal: args.feature_signal,
        seed: args.seed,
    };
    spec.validate().map_err(|e| Error::Config(e.to_string()))?;
    let (graph, _) = generate_sbm(&spec)?;
    fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    graph.write_files(
        &args.out.join("edges.txt"),
        &args.out.join("features.csv"),
        &args.out.join("labels.txt"),
    )?;
    eprintln!(
        "wrote {} nodes, {} edges to {}",
        graph.num_nodes(),
        graph.num_edges(),
        args.out.display()
    );
    Ok(())
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::Validation(_) | Error::Parse { .. } => 2,
        _ => 1,
    }
}

fn configure_threads() {
    let Ok(raw) = std::env::var("PROGAP_THREADS") else {
        return;
    };
    match raw.parse::<usize>() {
        Ok(n) if n > 0 => {
            // Fails only if a pool already exists, which cannot happen here.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
        _ => eprintln!("ignoring PROGAP_THREADS={raw:?}: expected a positive integer"),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    configure_threads();
    let result = match cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Account(args) => cmd_account(args),
        Command::Calibrate(args) => cmd_calibrate(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Generate(args) => cmd_generate(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
