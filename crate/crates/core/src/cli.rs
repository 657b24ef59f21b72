//! Command-line front end.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 unparseable input or bad usage,
//! 3 schema or dimension error, 4 decoder disagrees with the oracle,
//! 5 feasible set exceeds the oracle limit.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use thiserror::Error;

use crate::constraints::count_feasible;
use crate::decoder::{decode, DecodeConfig, DecodeMode, Pruning};
use crate::harness::{render_table, run_bench, BenchRow, GapReport, HarnessError, SweepReport};
use crate::io::{
    read_pools, read_rules, read_scenario, read_scorer_config, write_record, CountRecord,
    FormatError, RerankRecord, VerifyRecord, VerifyStatus, SCHEMA_VERSION,
};
use crate::oracle::{brute_force, OracleConfig, OracleError, DEFAULT_FEASIBLE_LIMIT};
use crate::scorer::{ReferenceScorer, ScoreError};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("{0}")]
    Score(#[from] ScoreError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error("{path}: {source}")]
    Output {
        path: String,
        source: std::io::Error,
    },
    #[error("{0} pool(s) where the decoder disagrees with the oracle")]
    Mismatch(usize),
    #[error("pool {pool_index}: feasible set has {predicted} slates, over the limit of {limit}")]
    FeasibleSetTooLarge {
        pool_index: usize,
        predicted: u64,
        limit: u64,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Format(FormatError::Io { .. }) | CliError::Output { .. } => 1,
            CliError::Format(FormatError::Parse { .. }) => 2,
            CliError::Format(FormatError::Schema { .. }) | CliError::Score(_) => 3,
            CliError::Harness(HarnessError::Oracle(OracleError::FeasibleSetTooLarge {
                ..
            })) => 5,
            CliError::Harness(_) => 3,
            CliError::Mismatch(_) => 4,
            CliError::FeasibleSetTooLarge { .. } => 5,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "slate-rerank",
    version,
    about = "Constrained slate reranking with ad insertion"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Choose the best feasible slate for every pool in a JSONL file.
    Rerank(DecodeArgs),
    /// Decode every pool and compare against the brute-force oracle.
    Verify {
        #[command(flatten)]
        decode: DecodeArgs,
        /// Refuse to run the oracle when the feasible set is larger than this.
        #[arg(long, default_value_t = DEFAULT_FEASIBLE_LIMIT)]
        limit_feasible: u64,
    },
    /// Count feasible slates per pool, split by number of ads.
    Count {
        pools: PathBuf,
        #[arg(long)]
        rules: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare strategies on synthetic pools described by a scenario file.
    Bench {
        scenario: PathBuf,
        /// Overrides the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the scenario trial count.
        #[arg(long)]
        trials: Option<usize>,
        /// Destination for the per-strategy, gap and sweep records (JSONL);
        /// defaults to stdout. The comparison table goes to stderr.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    TwoStage,
    Exhaustive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PruningArg {
    Off,
    Hard,
    Full,
}

#[derive(Debug, Args)]
pub struct DecodeArgs {
    /// Pool file, one JSON object per line.
    pub pools: PathBuf,
    #[arg(long)]
    pub rules: PathBuf,
    /// Reference scorer config (TOML).
    #[arg(long)]
    pub scorer: PathBuf,
    #[arg(long, value_enum, default_value = "exhaustive")]
    pub mode: ModeArg,
    #[arg(long, value_enum, default_value = "full")]
    pub pruning: PruningArg,
    /// Overrides the scorer seed used to draw unspecified weights.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl DecodeArgs {
    fn config(&self) -> DecodeConfig {
        let mode = match self.mode {
            ModeArg::TwoStage => DecodeMode::TwoStage,
            ModeArg::Exhaustive => DecodeMode::ExhaustiveBounded,
        };
        let pruning = match self.pruning {
            PruningArg::Off => Pruning::Off,
            PruningArg::Hard => Pruning::HardFilterOnly,
            PruningArg::Full => Pruning::HardFilterPlusUpperBound,
        };
        DecodeConfig::new(mode, pruning)
    }

    fn scorer(&self) -> Result<ReferenceScorer, CliError> {
        let mut cfg = read_scorer_config(&self.scorer)?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        ReferenceScorer::new(cfg).map_err(|e| {
            FormatError::Schema {
                path: self.scorer.clone(),
                line: None,
                message: e.to_string(),
            }
            .into()
        })
    }
}

struct Output {
    name: String,
    sink: Box<dyn Write>,
}

impl Output {
    fn open(path: Option<&Path>) -> Result<Output, CliError> {
        Ok(match path {
            Some(p) => Output {
                name: p.display().to_string(),
                sink: Box::new(std::io::BufWriter::new(std::fs::File::create(p).map_err(
                    |source| CliError::Output {
                        path: p.display().to_string(),
                        source,
                    },
                )?)),
            },
            None => Output {
                name: "<stdout>".into(),
                sink: Box::new(std::io::stdout().lock()),
            },
        })
    }

    fn record<T: Serialize>(&mut self, record: &T) -> Result<(), CliError> {
        write_record(&mut self.sink, record).map_err(|source| self.err(source))
    }

    fn finish(mut self) -> Result<(), CliError> {
        self.sink.flush().map_err(|source| self.err(source))
    }

    fn err(&self, source: std::io::Error) -> CliError {
        CliError::Output {
            path: self.name.clone(),
            source,
        }
    }
}

/// Relative agreement used when comparing decoder and oracle rewards.
pub const REWARD_TOLERANCE: f64 = 1e-12;

pub fn rewards_agree(a: f64, b: f64) -> bool {
    (a - b).abs() <= REWARD_TOLERANCE * a.abs().max(b.abs()).max(1.0)
}

fn rerank(args: &DecodeArgs) -> Result<(), CliError> {
    let rules = read_rules(&args.rules)?;
    let pools = read_pools(&args.pools)?;
    let scorer = args.scorer()?;
    let config = args.config();
    let mut out = Output::open(args.out.as_deref())?;
    for (i, pool) in pools.iter().enumerate() {
        let report = decode(pool, &rules, &scorer, config)?;
        out.record(&RerankRecord::new(i, pool, config, &report))?;
    }
    out.finish()
}

fn verify(args: &DecodeArgs, limit: u64) -> Result<(), CliError> {
    let rules = read_rules(&args.rules)?;
    let pools = read_pools(&args.pools)?;
    let scorer = args.scorer()?;
    let config = args.config();
    let oracle_cfg = OracleConfig {
        feasible_limit: limit,
    };
    let mut out = Output::open(args.out.as_deref())?;
    let mut mismatches = 0;
    for (i, pool) in pools.iter().enumerate() {
        let oracle = match brute_force(pool, &rules, &scorer, &oracle_cfg) {
            Ok(o) => o,
            Err(OracleError::FeasibleSetTooLarge { predicted, limit }) => {
                out.finish()?;
                return Err(CliError::FeasibleSetTooLarge {
                    pool_index: i,
                    predicted,
                    limit,
                });
            }
            Err(OracleError::Score(e)) => return Err(e.into()),
        };
        let report = decode(pool, &rules, &scorer, config)?;
        let agree =
            report.chosen == oracle.best && rewards_agree(report.reward.total, oracle.reward.total);
        if !agree {
            mismatches += 1;
            eprintln!(
                "pool {i}: decoder chose {:?} (reward {}), oracle chose {:?} (reward {})",
                report.chosen.item_ids(pool),
                report.reward.total,
                oracle.best.item_ids(pool),
                oracle.reward.total
            );
        }
        out.record(&VerifyRecord {
            schema_version: SCHEMA_VERSION,
            pool_index: i,
            status: if agree {
                VerifyStatus::Match
            } else {
                VerifyStatus::Mismatch
            },
            mode: config.mode,
            pruning: config.pruning,
            decoder_slate: report.chosen.item_ids(pool),
            oracle_slate: oracle.best.item_ids(pool),
            decoder_reward: report.reward.total,
            oracle_reward: oracle.reward.total,
            feasible_count: oracle.feasible_count,
            per_k: oracle.per_k,
            evaluations: report.evaluations,
        })?;
    }
    out.finish()?;
    if mismatches > 0 {
        return Err(CliError::Mismatch(mismatches));
    }
    Ok(())
}

fn count(pools: &Path, rules: &Path, out: Option<&Path>) -> Result<(), CliError> {
    let rules = read_rules(rules)?;
    let pools = read_pools(pools)?;
    let mut out = Output::open(out)?;
    for (i, pool) in pools.iter().enumerate() {
        let c = count_feasible(pool, &rules);
        out.record(&CountRecord {
            schema_version: SCHEMA_VERSION,
            pool_index: i,
            total: c.total,
            per_k: c.per_k,
        })?;
    }
    out.finish()
}

#[derive(Serialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum BenchRecord<'a> {
    Strategy(&'a BenchRow),
    Gap(&'a GapReport),
    Sweep(&'a SweepReport),
}

fn bench(
    path: &Path,
    seed: Option<u64>,
    trials: Option<usize>,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let mut scenario = read_scenario(path)?;
    if let Some(seed) = seed {
        scenario.seed = seed;
    }
    if let Some(trials) = trials {
        scenario.trials = trials;
    }
    let report = run_bench(&scenario)?;
    eprint!("{}", render_table(&report));
    let mut out = Output::open(out)?;
    for row in &report.rows {
        out.record(&BenchRecord::Strategy(row))?;
    }
    out.record(&BenchRecord::Gap(&report.gap))?;
    if let Some(sweep) = &report.sweep {
        out.record(&BenchRecord::Sweep(sweep))?;
    }
    out.finish()?;
    Ok(())
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Rerank(args) => rerank(args),
        Command::Verify {
            decode,
            limit_feasible,
        } => verify(decode, *limit_feasible),
        Command::Count { pools, rules, out } => count(pools, rules, out.as_deref()),
        Command::Bench {
            scenario,
            seed,
            trials,
            out,
        } => bench(scenario, *seed, *trials, out.as_deref()),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
