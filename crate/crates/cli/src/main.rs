use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Result};
use clap::{Args, Parser, Subcommand};
use gplearn::predict::Strategy;
use gplearn_cli::commands::{
    cmd_evaluate, cmd_learn, cmd_predict, cmd_report, exit_code, EvaluateArgs, LearnArgs,
    PredictArgs, Source,
};
use gplearn_cli::config::Config;
use gplearn_cli::output::write_json;

#[derive(Parser)]
#[command(
    name = "gplearn",
    version,
    about = "Learn SPARQL graph patterns for source-target pairs and predict targets"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Flat `key = value` configuration file
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set population_size=50`
    #[arg(short = 's', long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Local N-Triples file (optionally .gz) to query
    #[arg(long, conflicts_with = "endpoint")]
    store: Option<PathBuf>,
    /// Remote SPARQL endpoint URL
    #[arg(long)]
    endpoint: Option<String>,
}

impl Common {
    fn config(&self) -> Result<Config> {
        Config::load(self.config.as_deref(), &self.set)
    }

    fn source(&self) -> Source {
        Source {
            store: self.store.clone(),
            endpoint: self.endpoint.clone(),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Learn graph patterns for a ground truth
    Learn {
        #[command(flatten)]
        common: Common,
        /// Ground truth TSV file
        #[arg(long)]
        gt: PathBuf,
        /// Output directory
        #[arg(short, long)]
        out: PathBuf,
        /// Continue an interrupted session in the output directory
        #[arg(long)]
        resume: bool,
    },
    /// Predict ranked targets for sources with learned patterns
    Predict {
        #[command(flatten)]
        common: Common,
        /// patterns.json or a learn output directory
        #[arg(long)]
        patterns: PathBuf,
        /// One source per line
        #[arg(long)]
        sources: PathBuf,
        /// Maximum number of queries per source
        #[arg(short, long, default_value_t = 100)]
        k: usize,
        /// Fusion strategy to report (all when omitted)
        #[arg(long)]
        strategy: Option<String>,
        /// Write JSON here instead of stdout
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Held-out evaluation against graph centrality baselines
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Ground truth TSV file; split into training and test rows
        #[arg(long)]
        gt: PathBuf,
        /// Use these patterns instead of learning on the training split
        #[arg(long)]
        patterns: Option<PathBuf>,
        /// Share of ground truth rows held out for testing
        #[arg(long, default_value_t = 0.1)]
        ratio: f64,
        #[arg(long, default_value_t = 1)]
        split_seed: u64,
        /// Also rank with degree, PageRank and HITS baselines
        #[arg(long)]
        baselines: bool,
        /// Maximum number of queries per source
        #[arg(short, long, default_value_t = 100)]
        k: usize,
        /// Write the JSON report here
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Regenerate report.html and report.json for a learn output directory
    Report {
        /// Output directory of `gplearn learn`
        dir: PathBuf,
        /// Directory for the report files (defaults to DIR)
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Learn {
            common,
            gt,
            out,
            resume,
        } => {
            let summary = cmd_learn(&LearnArgs {
                config: common.config()?,
                gt,
                source: common.source(),
                out: out.clone(),
                resume,
            })?;
            eprintln!(
                "{} runs, {} patterns, remains {:.3}; results in {}",
                summary.runs,
                summary.patterns,
                summary.remains,
                out.display()
            );
        }
        Command::Predict {
            common,
            patterns,
            sources,
            k,
            strategy,
            out,
        } => {
            let strategy = match strategy.as_deref() {
                None | Some("all") => None,
                Some(name) => Some(Strategy::parse(name).ok_or_else(|| {
                    let names: Vec<&str> = Strategy::ALL.iter().map(|s| s.name()).collect();
                    anyhow!(
                        "unknown strategy {name:?}; expected one of {}",
                        names.join(", ")
                    )
                })?),
            };
            let result = cmd_predict(&PredictArgs {
                config: common.config()?,
                patterns,
                sources,
                source: common.source(),
                k,
                strategy,
            })?;
            match out {
                Some(path) => write_json(&path, &result)?,
                None => println!("{}", serde_json::to_string_pretty(&result)?),
            }
        }
        Command::Evaluate {
            common,
            gt,
            patterns,
            ratio,
            split_seed,
            baselines,
            k,
            out,
        } => {
            let result = cmd_evaluate(&EvaluateArgs {
                config: common.config()?,
                gt,
                source: common.source(),
                patterns,
                ratio,
                split_seed,
                baselines,
                k,
            })?;
            print!("{}", result.report.to_text());
            if let Some(path) = out {
                write_json(&path, &result)?;
            }
        }
        Command::Report { dir, out } => {
            let report = cmd_report(&dir, out.as_deref())?;
            eprintln!(
                "{} runs, {} patterns",
                report.runs.len(),
                report.pattern_count()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
