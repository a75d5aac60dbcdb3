//! `atp`: embed directed graphs, break their cycles, evaluate link
//! prediction, and route questions in Q&A communities.
//!
//! Exit status: 0 on success, 1 when an evaluation finished short of what
//! was asked (warnings on stderr), 2 on errors.

mod commands;
mod config;
mod output;

use std::process::ExitCode;

use clap::{ArgAction, Parser, Subcommand};

use commands::Status;

#[derive(Parser, Debug)]
#[command(name = "atp", version, about = "Directed graph embedding that preserves asymmetric transitivity")]
struct Cli {
    /// Worker threads; defaults to every available core
    #[arg(long, global = true, env = "ATP_THREADS")]
    threads: Option<usize>,
    /// More log output on stderr (repeat for more)
    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,
    /// Errors only
    #[arg(short, long, global = true, conflicts_with = "verbose")]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Full pipeline: break cycles, levels, closure, proximity, factorize
    Embed(commands::EmbedArgs),
    /// Remove hierarchy-violating edges until the graph is acyclic
    BreakCycles(commands::BreakCyclesArgs),
    /// Link-prediction AUC of each proximity variant on a held-out split
    EvalLp(commands::EvalLpArgs),
    /// Community question answering tasks
    #[command(subcommand)]
    Cqa(CqaCommand),
}

#[derive(Subcommand, Debug)]
enum CqaCommand {
    /// Stack Exchange dump to question records
    Ingest(commands::IngestArgs),
    /// Pairwise question difficulty accuracy against bounties
    EvalQde(commands::EvalQdeArgs),
    /// Rank the candidate answerers of cold questions
    Route(commands::RouteArgs),
}

fn init_logging(cli: &Cli) {
    let level = if cli.quiet {
        log::LevelFilter::Error
    } else {
        match cli.verbose {
            0 => log::LevelFilter::Warn,
            1 => log::LevelFilter::Info,
            _ => log::LevelFilter::Debug,
        }
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .format_timestamp(None)
        .init();
}

fn run(cli: &Cli) -> anyhow::Result<Status> {
    if let Some(n) = cli.threads {
        if n == 0 {
            anyhow::bail!("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match &cli.command {
        Command::Embed(a) => commands::embed(a),
        Command::BreakCycles(a) => commands::break_cycles_cmd(a),
        Command::EvalLp(a) => commands::eval_lp(a),
        Command::Cqa(CqaCommand::Ingest(a)) => commands::cqa_ingest(a),
        Command::Cqa(CqaCommand::EvalQde(a)) => commands::cqa_eval_qde(a),
        Command::Cqa(CqaCommand::Route(a)) => commands::cqa_route(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(&cli);
    match run(&cli) {
        Ok(Status::Clean) => ExitCode::SUCCESS,
        Ok(Status::Shortfall) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
