//! Command-line front end: build opponent caches, run simulations, audit
//! match logs, sweep matchmaking temperatures, and estimate judge noise.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use elo_arena::cache::{CacheError, ResponseCache};
use elo_arena::config::{ConfigError, RunConfig};
use elo_arena::noise::{
    render_report, report_from_datasets, AbsoluteRatingDataset, AbsoluteRecord, NoiseError,
    PairRecord, PairwiseDataset,
};
use elo_arena::orchestrator::{self, RunError, RunLogs};

#[derive(Parser)]
#[command(
    name = "elo-arena",
    version,
    about = "Self-play Elo arena: simulate, audit, and analyze judge noise"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a training simulation and write its four logs to a directory.
    Simulate {
        /// Run configuration (TOML).
        #[arg(long)]
        config: PathBuf,
        /// Pre-built response cache (NDJSON).
        #[arg(long)]
        cache: PathBuf,
        /// Output directory for rating.csv, selection.csv, training.csv
        /// and matches.ndjson.
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate judge noise from rating and comparison datasets.
    Noise {
        /// Absolute-rating records: one JSON object per line with
        /// item_id, expert_quality and ratings.
        #[arg(long)]
        absolute: PathBuf,
        /// Pairwise records: one JSON object per line with pair_id, gap,
        /// wins and total.
        #[arg(long)]
        pairwise: PathBuf,
        /// Where the structured report (JSON) is written.
        #[arg(long)]
        out: PathBuf,
    },
    /// Pre-generate the opponent response cache for a prompt set.
    CacheBuild {
        /// Prompt file: one JSON object per line with prompt_id and an
        /// optional text (text is carried along, not used in simulation).
        #[arg(long)]
        prompts: PathBuf,
        /// Run configuration naming the opponents (TOML).
        #[arg(long)]
        opponents: PathBuf,
        /// Cache seed; defaults to the config's run seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output cache path (NDJSON).
        #[arg(long)]
        out: PathBuf,
    },
    /// Recompute the Elo trajectory from a match log.
    Replay {
        /// Match log (matches.ndjson from a simulation).
        #[arg(long)]
        log: PathBuf,
        /// Run configuration the log was produced with (TOML).
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the same simulation once per matchmaking temperature.
    Sweep {
        /// Run configuration (TOML); its temperature field is overridden.
        #[arg(long)]
        config: PathBuf,
        /// Pre-built response cache shared by every run.
        #[arg(long)]
        cache: PathBuf,
        /// Comma-separated temperatures, e.g. 20,200,2000.
        #[arg(long)]
        temperatures: String,
        /// Output directory; gets sweep.csv plus one log directory per T.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug)]
enum CliError {
    Config(ConfigError),
    Cache(CacheError),
    Run(RunError),
    Noise(NoiseError),
    Io { path: PathBuf, source: std::io::Error },
    Invalid(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "{e}"),
            CliError::Cache(e) => write!(f, "{e}"),
            CliError::Run(e) => write!(f, "{e}"),
            CliError::Noise(e) => write!(f, "{e}"),
            CliError::Io { path, source } => write!(f, "{}: {source}", path.display()),
            CliError::Invalid(msg) => write!(f, "{msg}"),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}
impl From<CacheError> for CliError {
    fn from(e: CacheError) -> Self {
        CliError::Cache(e)
    }
}
impl From<RunError> for CliError {
    fn from(e: RunError) -> Self {
        CliError::Run(e)
    }
}
impl From<NoiseError> for CliError {
    fn from(e: NoiseError) -> Self {
        CliError::Noise(e)
    }
}

impl CliError {
    /// 0 success, 2 config error, 3 cache error, 4 judge error, 1 other.
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Run(RunError::Config(_)) => 2,
            CliError::Cache(_) | CliError::Run(RunError::Cache(_)) => 3,
            CliError::Run(RunError::JudgeUnavailable { .. }) => 4,
            _ => 1,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Simulate { config, cache, out } => simulate(&config, &cache, &out),
        Command::Noise {
            absolute,
            pairwise,
            out,
        } => noise(&absolute, &pairwise, &out),
        Command::CacheBuild {
            prompts,
            opponents,
            seed,
            out,
        } => cache_build(&prompts, &opponents, seed, &out),
        Command::Replay { log, config } => replay(&log, &config),
        Command::Sweep {
            config,
            cache,
            temperatures,
            out,
        } => sweep(&config, &cache, &temperatures, &out),
    }
}

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_text(path: &Path, content: &str) -> Result<(), CliError> {
    std::fs::write(path, content).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_logs(dir: &Path, logs: &RunLogs) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|source| CliError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    write_text(&dir.join("rating.csv"), &logs.rating_csv)?;
    write_text(&dir.join("selection.csv"), &logs.selection_csv)?;
    write_text(&dir.join("training.csv"), &logs.training_csv)?;
    write_text(&dir.join("matches.ndjson"), &logs.matches_ndjson)?;
    Ok(())
}

fn read_ndjson<T: serde::de::DeserializeOwned>(
    path: &Path,
    what: &str,
) -> Result<Vec<T>, CliError> {
    let text = read_text(path)?;
    let mut records = Vec::new();
    for (index, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parsed: T = serde_json::from_str(line).map_err(|e| {
            CliError::Invalid(format!(
                "{} line {}: not a valid {what} record: {e}",
                path.display(),
                index + 1
            ))
        })?;
        records.push(parsed);
    }
    Ok(records)
}

fn simulate(config_path: &Path, cache_path: &Path, out: &Path) -> Result<(), CliError> {
    let config = RunConfig::load(config_path)?;
    let cache = ResponseCache::load(cache_path)?;
    let mut logs = RunLogs::default();
    let result = orchestrator::run(&config, &cache, &mut logs);
    // Logs recorded up to a failure still land on disk before the error
    // propagates, so an aborted run leaves an auditable trail.
    write_logs(out, &logs)?;
    let outcome = result?;
    let final_elo = outcome
        .table
        .rating(orchestrator::POLICY_AGENT_ID)
        .map_err(RunError::from)?;
    println!(
        "simulated {} iterations: policy elo {:.2}, policy skill {:.4}, logs in {}",
        outcome.summaries.len(),
        final_elo,
        outcome.policy.skill(),
        out.display()
    );
    Ok(())
}

fn noise(absolute_path: &Path, pairwise_path: &Path, out: &Path) -> Result<(), CliError> {
    let absolute = AbsoluteRatingDataset {
        records: read_ndjson::<AbsoluteRecord>(absolute_path, "absolute-rating")?,
    };
    let pairwise = PairwiseDataset {
        records: read_ndjson::<PairRecord>(pairwise_path, "pairwise")?,
    };
    let report = report_from_datasets(&absolute, &pairwise)?;
    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| CliError::Invalid(format!("cannot serialize report: {e}")))?;
    write_text(out, &json)?;
    print!("{}", render_report(&report));
    Ok(())
}

#[derive(serde::Deserialize)]
struct PromptRecord {
    prompt_id: String,
    #[serde(default)]
    #[allow(dead_code)]
    text: Option<String>,
}

fn cache_build(
    prompts_path: &Path,
    opponents_path: &Path,
    seed: Option<u64>,
    out: &Path,
) -> Result<(), CliError> {
    let config = RunConfig::load(opponents_path)?;
    let prompts: Vec<String> = read_ndjson::<PromptRecord>(prompts_path, "prompt")?
        .into_iter()
        .map(|r| r.prompt_id)
        .collect();
    let seed = seed.unwrap_or(config.seed);
    let cache = ResponseCache::build(seed, &prompts, &config.opponents)?;
    cache.save(out)?;
    println!(
        "cached {} responses ({} prompts x {} opponents, seed {seed}) at {}",
        cache.len(),
        cache.prompts().len(),
        cache.opponents().len(),
        out.display()
    );
    Ok(())
}

fn replay(log_path: &Path, config_path: &Path) -> Result<(), CliError> {
    let config = RunConfig::load(config_path)?;
    let table = orchestrator::initial_rating_table(&config)?;
    let log = read_text(log_path)?;
    let result = orchestrator::replay(&log, table)?;
    println!("iteration,policy_rating");
    for (iteration, rating) in &result.trajectory {
        println!("{iteration},{rating:.6}");
    }
    Ok(())
}

fn sweep(
    config_path: &Path,
    cache_path: &Path,
    temperatures: &str,
    out: &Path,
) -> Result<(), CliError> {
    let config = RunConfig::load(config_path)?;
    let cache = ResponseCache::load(cache_path)?;
    let mut temps = Vec::new();
    for raw in temperatures.split(',') {
        let raw = raw.trim();
        if raw.is_empty() {
            continue;
        }
        let t: f64 = raw
            .parse()
            .map_err(|_| CliError::Invalid(format!("temperature `{raw}` is not a number")))?;
        temps.push(t);
    }
    if temps.is_empty() {
        return Err(CliError::Invalid(
            "at least one temperature is required".to_string(),
        ));
    }

    let entries = orchestrator::temperature_sweep(&config, &temps, &cache)?;
    std::fs::create_dir_all(out).map_err(|source| CliError::Io {
        path: out.to_path_buf(),
        source,
    })?;
    let mut sweep_csv = String::from("temperature,final_elo,windowed_final_elo\n");
    for entry in &entries {
        let dir = out.join(format!("T{}", entry.temperature));
        write_logs(&dir, &entry.logs)?;
        sweep_csv.push_str(&format!(
            "{},{:.6},{:.6}\n",
            entry.temperature, entry.final_elo, entry.windowed_final_elo
        ));
        println!(
            "T={:<8} final elo {:>9.2}   last-window mean {:>9.2}",
            entry.temperature, entry.final_elo, entry.windowed_final_elo
        );
    }
    write_text(&out.join("sweep.csv"), &sweep_csv)?;
    Ok(())
}
