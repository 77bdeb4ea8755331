//! `genderpair`: the full experiment pipeline as subcommands.

mod artifacts;
mod config;
mod error;
mod report;
mod stages;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use genderpair::Scheme;

use crate::artifacts::Run;
use crate::config::PipelineConfig;
use crate::error::CliError;
use crate::stages::Ctx;

#[derive(Parser)]
#[command(name = "genderpair", version, about = "Gender-pair style classification, pivot words and styled generation")]
struct Cli {
    /// TOML pipeline config; defaults are used for absent keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Global seed; every stage derives its own from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Run scheme-specific stages for this scheme only (2way, 3way, 4way).
    #[arg(long, global = true)]
    scheme: Option<Scheme>,
    /// Override a config key, e.g. `--set synth.lambda=0.3`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Print the effective config as TOML and exit.
    #[arg(long, global = true)]
    print_config: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Clone, Copy, Subcommand)]
enum Command {
    /// Synthesise (or load) the corpus and split it.
    Synth,
    /// Train the bag-of-words and n-gram classifiers.
    TrainClf,
    /// Evaluate the classifiers on held-out concatenated samples.
    EvalClf,
    /// Discover pivot words with the bag-of-words classifiers.
    Pivots,
    /// Pivot-free classification of the four-way classifier.
    Attack,
    /// Train one styled generator per scheme.
    TrainGen,
    /// Generate responses for held-out posts.
    Generate,
    /// Score the generated responses.
    EvalGen,
    /// Consolidate all artifacts into report.json, report.txt and CSVs.
    Report,
    /// Run every stage in order.
    All,
    /// Print the effective config as TOML.
    PrintConfig,
}

fn effective_config(cli: &Cli) -> Result<PipelineConfig, CliError> {
    let base = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    let mut config = base.with_overrides(&cli.overrides)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(dir) = &cli.out_dir {
        config.paths.out_dir = dir.clone();
    }
    if let Some(scheme) = cli.scheme {
        config.schemes = vec![scheme];
    }
    config.validate()?;
    Ok(config)
}

type Stage = fn(&Ctx) -> Result<(), CliError>;

fn report_stage(ctx: &Ctx) -> Result<(), CliError> {
    let r = report::build(&ctx.run, ctx.config.seed)?;
    report::write(&ctx.run, &r)?;
    eprintln!("[report] wrote {}", ctx.run.path("report.json").display());
    Ok(())
}

/// Scheme-agnostic stages that only make sense when their scheme is selected.
fn all_stages(config: &PipelineConfig) -> Vec<(&'static str, Stage)> {
    let mut v: Vec<(&'static str, Stage)> = vec![
        ("synth", stages::synth),
        ("train-clf", stages::train_clf),
        ("eval-clf", stages::eval_clf),
        ("pivots", stages::pivots),
    ];
    if config.schemes.contains(&Scheme::FourWay) {
        v.push(("attack", stages::attack));
    }
    v.extend([
        ("train-gen", stages::train_gen as Stage),
        ("generate", stages::generate_stage),
        ("eval-gen", stages::eval_gen),
        ("report", report_stage),
    ]);
    v
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let config = effective_config(cli)?;
    let command = match cli.command {
        _ if cli.print_config => Command::PrintConfig,
        Some(c) => c,
        None => return Err(CliError::Validation("no subcommand given; see --help".into())),
    };
    let ctx = Ctx { config: &config, run: Run::new(&config.paths.out_dir) };
    let chain: Vec<(&'static str, Stage)> = match command {
        Command::PrintConfig => {
            print!("{}", config.to_toml());
            return Ok(());
        }
        Command::Synth => vec![("synth", stages::synth)],
        Command::TrainClf => vec![("train-clf", stages::train_clf)],
        Command::EvalClf => vec![("eval-clf", stages::eval_clf)],
        Command::Pivots => vec![("pivots", stages::pivots)],
        Command::Attack => vec![("attack", stages::attack)],
        Command::TrainGen => vec![("train-gen", stages::train_gen)],
        Command::Generate => vec![("generate", stages::generate_stage)],
        Command::EvalGen => vec![("eval-gen", stages::eval_gen)],
        Command::Report => vec![("report", report_stage)],
        Command::All => all_stages(&config),
    };
    let start = Instant::now();
    for (name, stage) in chain {
        let t = Instant::now();
        stage(&ctx)?;
        eprintln!("[{name}] done in {:.1?}", t.elapsed());
    }
    eprintln!("finished in {:.1?}", start.elapsed());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
