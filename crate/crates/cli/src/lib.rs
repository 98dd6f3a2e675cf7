//! `leitsatz` command line: runs the summarization and evaluation pipeline
//! step by step over a TOML configuration.

pub mod config;
pub mod error;
pub mod manifest;
pub mod pipeline;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use leitsatz_core::summarize::Approach;

use crate::error::CliResult;
use crate::pipeline::Context;

#[derive(Debug, Parser)]
#[command(name = "leitsatz", version, about = "Summarize court judgments and evaluate the summaries")]
pub struct Cli {
    /// Configuration file; `leitsatz.toml` in the working directory by default.
    #[arg(short, long, global = true)]
    pub config: Option<PathBuf>,
    /// Override one configuration key, e.g. `--set split.seed=3`.
    #[arg(long = "set", global = true, value_name = "SECTION.KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Rerun steps even when the manifest says they are up to date.
    #[arg(long, global = true)]
    pub force: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load the corpus, extract reasons texts and gold pairs.
    Ingest,
    /// Partition judgments into train/valid/test.
    Split,
    /// Token-length table per split.
    Stats,
    /// Tag legal entities in the reasons texts.
    Enrich,
    /// Produce candidate summaries with one approach.
    Summarize {
        #[arg(long)]
        approach: Approach,
    },
    /// ROUGE and BERTScore against the gold summaries.
    Score,
    /// Distribute summaries among reviewers.
    Assign,
    /// Run the review service.
    Serve {
        #[arg(long)]
        bind: Option<String>,
    },
    /// Agreement, fulfillment, correlation and entity audit tables.
    Report,
    /// Every offline step in order.
    Run,
}

fn dispatch(cli: Cli, env: Vec<(String, String)>) -> CliResult<()> {
    let loaded = config::load(cli.config.as_deref(), env, &cli.overrides)?;
    let ctx = Context::new(loaded, cli.force);
    match cli.command {
        Command::Ingest => pipeline::ingest_step(&ctx).map(drop),
        Command::Split => pipeline::split_step(&ctx).map(drop),
        Command::Stats => pipeline::stats_step(&ctx).map(drop),
        Command::Enrich => pipeline::enrich_step(&ctx).map(drop),
        Command::Summarize { approach } => pipeline::summarize_step(&ctx, approach).map(drop),
        Command::Score => pipeline::score_step(&ctx).map(drop),
        Command::Assign => pipeline::assign_step(&ctx).map(drop),
        Command::Serve { bind } => pipeline::serve_step(&ctx, bind.as_deref()),
        Command::Report => pipeline::report_step(&ctx).map(drop),
        Command::Run => pipeline::run_all(&ctx),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I, env: Vec<(String, String)>) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli, env) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("leitsatz: {e}");
            e.exit_code()
        }
    }
}
