use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand};
use icpvi_cli::analyze::{run_analyze, Analysis, AnalyzeOptions};
use icpvi_cli::config::{ExperimentConfig, Overrides, Split};
use icpvi_cli::score::run_score;
use icpvi_cli::select::run_select;
use icpvi_core::backend::cache::{CachedScorer, ScoreCache};

#[derive(Parser)]
#[command(name = "icpvi", version, about = "In-context PVI scoring and analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score every (seed, shots) cell of an experiment config
    Score(ScoreArgs),
    /// Compute reports over the runs found under a directory
    Analyze(AnalyzeArgs),
    /// Pick the hardest training instances per label from a train-split run
    Select(SelectArgs),
    /// Inspect or clear the score cache
    Cache {
        #[command(subcommand)]
        action: CacheAction,
    },
}

#[derive(Args)]
struct ScoreArgs {
    /// Experiment config (JSON)
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    model_id: Option<String>,
    /// Comma-separated exemplar seeds
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Comma-separated shot counts
    #[arg(long, value_delimiter = ',')]
    shots: Option<Vec<usize>>,
    /// Score only the first N instances of the split
    #[arg(long)]
    head: Option<usize>,
    #[arg(long, value_enum)]
    split: Option<SplitArg>,
    /// Use a fixed exemplar set instead of sampling
    #[arg(long)]
    exemplar_file: Option<PathBuf>,
    #[arg(long)]
    max_in_flight: Option<usize>,
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum SplitArg {
    Test,
    Train,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Directory searched recursively for runs
    run_dir: PathBuf,
    /// Comma-separated analyses
    #[arg(long, value_enum, value_delimiter = ',', default_value = "strata,histogram")]
    analyses: Vec<Analysis>,
    /// Report directory (default: <RUN_DIR>/analysis)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Keep floored instances in correlation and ANOVA inputs
    #[arg(long)]
    include_floored: bool,
    #[arg(long, default_value_t = 20)]
    bins: usize,
    /// Comma-separated strata quantiles in (0, 0.5]
    #[arg(long, value_delimiter = ',', default_value = "0.2,0.5")]
    quantiles: Vec<f64>,
}

#[derive(Args)]
struct SelectArgs {
    /// A single train-split run directory
    run_dir: PathBuf,
    #[arg(long, default_value_t = 1)]
    per_label: usize,
    /// Output directory (default: RUN_DIR)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum CacheAction {
    /// Print entry count and size as JSON
    Inspect(CacheArgs),
    /// Delete every cached entry
    Clear(CacheArgs),
}

#[derive(Args)]
struct CacheArgs {
    #[arg(long, conflicts_with = "config")]
    dir: Option<PathBuf>,
    /// Use the cache directory of this experiment config
    #[arg(long)]
    config: Option<PathBuf>,
}

impl CacheArgs {
    fn open(&self) -> Result<ScoreCache> {
        let dir = match (&self.dir, &self.config) {
            (Some(d), _) => d.clone(),
            (None, Some(c)) => ExperimentConfig::from_file(c)?.cache_dir(),
            (None, None) => bail!("pass --dir or --config"),
        };
        Ok(ScoreCache::open(dir)?)
    }
}

fn score(args: ScoreArgs) -> Result<bool> {
    let mut config = ExperimentConfig::from_file(&args.config)?;
    Overrides {
        model_id: args.model_id,
        seeds: args.seeds,
        shots: args.shots,
        head: args.head,
        split: args.split.map(|s| match s {
            SplitArg::Test => Split::Test,
            SplitArg::Train => Split::Train,
        }),
        exemplar_file: args.exemplar_file,
        max_in_flight: args.max_in_flight,
        cache_dir: args.cache_dir,
        output_dir: args.output_dir,
    }
    .apply(&mut config);
    config.validate()?;
    let dataset = config.dataset.load()?;
    let scorer = CachedScorer::new(config.build_backend(&dataset)?, ScoreCache::open(config.cache_dir())?);
    let report = run_score(&config, &scorer)?;
    for cell in &report.cells {
        match &cell.result {
            Ok(s) => println!(
                "ok     {}  n={} accuracy={} floored={}",
                cell.dir.display(),
                s.n_instances,
                s.accuracy.map(|a| format!("{a:.4}")).unwrap_or_else(|| "-".into()),
                s.n_floored
            ),
            Err(e) => println!("FAILED {}  {e:#}", cell.dir.display()),
        }
    }
    Ok(report.failed() == 0)
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Score(args) => score(args),
        Command::Analyze(args) => {
            let options = AnalyzeOptions {
                analyses: args.analyses,
                out_dir: args.out,
                include_floored: args.include_floored,
                quantiles: args.quantiles,
                bins: args.bins,
            };
            for path in run_analyze(&args.run_dir, &options)?.outputs {
                println!("{}", path.display());
            }
            Ok(true)
        }
        Command::Select(args) => {
            let out = args.out.unwrap_or_else(|| args.run_dir.clone());
            let selected = run_select(&args.run_dir, args.per_label, &out)?;
            println!("{}", selected.exemplar_file.display());
            println!("{}", selected.ranking_file.display());
            Ok(true)
        }
        Command::Cache { action } => {
            match action {
                CacheAction::Inspect(a) => {
                    let cache = a.open()?;
                    let stats = cache.stats()?;
                    println!(
                        "{}",
                        serde_json::json!({
                            "dir": cache.dir(),
                            "entries": stats.entries,
                            "bytes": stats.bytes,
                        })
                    );
                }
                CacheAction::Clear(a) => {
                    let removed = a.open()?.clear()?;
                    println!("removed {removed} entries");
                }
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
