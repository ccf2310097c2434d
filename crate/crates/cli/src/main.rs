use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use regcensus::pipeline::{
    self, render_tables, CountsFixture, RunConfig, RunReport, Stage, StagePlan,
};
use regcensus::synth::{self, ScenarioConfig};
use regcensus::{Error, Result};

/// Register-based census toolkit.
#[derive(Parser)]
#[command(name = "regcensus", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Run directory; every output goes here.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Parse sources and write ingest reports and rejects.
    Ingest(RunArgs),
    /// Ingest, then standardize, validate and de-duplicate.
    Cleanse(RunArgs),
    /// Ingest and cleanse, then save de-identified registers.
    Deident(RunArgs),
    /// Join the de-identified registers of every database.
    Integrate(RunArgs),
    /// Apply the framework list to every integrated database.
    Enumerate(RunArgs),
    /// Score every candidate against the reference census.
    Evaluate(RunArgs),
    /// Rank candidates from a counts fixture or an existing report.
    Rank {
        /// JSON fixture of published membership counts and tallies.
        #[arg(long, conflicts_with = "report", required_unless_present = "report")]
        counts: Option<PathBuf>,
        /// A report.json from an earlier run.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Where to write report.json and tables.txt (with --counts).
        #[arg(long, required_unless_present = "report")]
        out_dir: Option<PathBuf>,
    },
    /// Generate a synthetic scenario and a matching run configuration.
    Synth {
        /// Scenario configuration (TOML); defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out_dir: PathBuf,
        /// Environment variable the generated run config reads the salt from.
        #[arg(long, default_value = "REGCENSUS_SALT")]
        salt_env: String,
    },
    /// Run all stages, or those listed in --stages.
    Run {
        #[command(flatten)]
        args: RunArgs,
        /// Comma-separated subset, e.g. `integrate,enumerate`.
        #[arg(long)]
        stages: Option<String>,
    },
    /// Write tables.txt from the run's report.json.
    Report(RunArgs),
}

fn run_through(args: &RunArgs, plan: StagePlan) -> Result<()> {
    let config = RunConfig::load(&args.config)?;
    let outcome = pipeline::run(&config, &args.out_dir, &plan)?;
    for s in &outcome.reused {
        println!("{s}: up to date");
    }
    for s in &outcome.executed {
        println!("{s}: done");
    }
    if plan.includes(Stage::Report) {
        let tables = args.out_dir.join(pipeline::TABLES_TXT);
        let text = std::fs::read_to_string(&tables).map_err(|e| Error::Io {
            path: tables.clone(),
            source: e,
        })?;
        print!("{text}");
    }
    Ok(())
}

fn synth_command(config: Option<&Path>, seed: Option<u64>, out_dir: &Path, salt_env: &str) -> Result<()> {
    let mut scenario_config = match config {
        Some(path) => ScenarioConfig::load(path)?,
        None => ScenarioConfig::default(),
    };
    if let Some(seed) = seed {
        scenario_config.seed = seed;
    }
    let scenario = synth::generate(&scenario_config)?;
    synth::write_scenario(&scenario, out_dir)?;
    let run_toml = pipeline::scenario_run_config(&scenario, salt_env)?;
    let path = out_dir.join("run.toml");
    std::fs::write(&path, run_toml).map_err(|e| Error::Io { path: path.clone(), source: e })?;
    for r in &scenario.registers {
        println!("{}: {} records", r.register_id, r.records.len());
    }
    println!("reference: {} persons", scenario.reference.persons.len());
    println!("run config: {}", path.display());
    Ok(())
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Ingest(a) => run_through(&a, StagePlan::Through(Stage::Ingest)),
        Command::Cleanse(a) => run_through(&a, StagePlan::Through(Stage::Cleanse)),
        Command::Deident(a) => run_through(&a, StagePlan::Through(Stage::Deident)),
        Command::Integrate(a) => run_through(&a, StagePlan::Through(Stage::Integrate)),
        Command::Enumerate(a) => run_through(&a, StagePlan::Through(Stage::Enumerate)),
        Command::Evaluate(a) => run_through(&a, StagePlan::Through(Stage::Evaluate)),
        Command::Report(a) => run_through(&a, StagePlan::parse_list("report")?),
        Command::Run { args, stages } => {
            let plan = match stages {
                Some(list) => StagePlan::parse_list(&list)?,
                None => StagePlan::all(),
            };
            run_through(&args, plan)
        }
        Command::Rank { counts, report, out_dir } => {
            let report = match (counts, out_dir) {
                (Some(path), Some(dir)) => pipeline::run_fixture(&CountsFixture::load(&path)?, &dir)?,
                _ => RunReport::load(report.as_deref().expect("clap enforces --report"))?,
            };
            match &report.ranking {
                Some(r) => print!("{}", r.to_table()),
                None => print!("{}", render_tables(&report)),
            }
            Ok(())
        }
        Command::Synth { config, seed, out_dir, salt_env } => {
            synth_command(config.as_deref(), seed, &out_dir, &salt_env)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
