use anyhow::Context;
use bonbon_harness::commands::{self, Outcome};
use bonbon_harness::manifest::Run;
use bonbon_harness::reproduce::cmd_reproduce;
use bonbon_harness::spec::{canonical_json, load_spec, Fault, ReproduceSpec, Spec};
use bonbon_harness::{HarnessError, EXIT_CRITERION_FAILED, EXIT_OK};
use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "bonbon", version, about = "Best-of-n alignment experiments")]
struct Cli {
    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON spec file; defaults are used when omitted.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Overrides the spec's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: the spec's output_dir, else runs/<command>).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Win rate vs KL curves for best-of-n and the optimal exponential tilt.
    Curves(Common),
    /// Check discrete-vs-continuous KL and win-rate bounds.
    Bounds(Common),
    /// Generate response spaces and a preference dataset.
    Gen(Common),
    /// Train a tabular policy.
    Train(Common),
    /// Evaluate a policy against best-of-n.
    Eval(Common),
    /// Run the full acceptance suite.
    Reproduce {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        inject_fault: Option<Fault>,
    },
}

fn execute<S: Spec>(
    common: &Common,
    adjust: impl FnOnce(&mut S),
    body: impl FnOnce(&S, &mut Run) -> Result<Outcome, HarnessError>,
) -> Result<bool, HarnessError> {
    let mut spec: S = load_spec(common.spec.as_deref(), common.seed)?;
    adjust(&mut spec);
    let dir = common
        .out
        .clone()
        .or_else(|| spec.output_dir().map(Path::to_path_buf))
        .unwrap_or_else(|| Path::new("runs").join(S::COMMAND));
    let seed = *spec.clone().seed_mut();
    let mut run = Run::begin(&dir, S::COMMAND, &canonical_json(&spec), seed)?;
    if let Some(p) = &common.spec {
        run.record_input(p)?;
    }
    match body(&spec, &mut run) {
        Ok(outcome) => {
            for line in &outcome.lines {
                println!("{line}");
            }
            run.finish(if outcome.passed { "ok" } else { "failed" })?;
            Ok(outcome.passed)
        }
        Err(e) => {
            run.finish("error")?;
            Err(e)
        }
    }
}

fn dispatch(cli: &Cli) -> Result<bool, HarnessError> {
    match &cli.command {
        Command::Curves(c) => execute(c, |_| {}, commands::cmd_curves),
        Command::Bounds(c) => execute(c, |_| {}, commands::cmd_bounds),
        Command::Gen(c) => execute(c, |_| {}, commands::cmd_gen),
        Command::Train(c) => execute(c, |_| {}, commands::cmd_train),
        Command::Eval(c) => execute(c, |_| {}, commands::cmd_eval),
        Command::Reproduce { common, inject_fault } => execute(
            common,
            |s: &mut ReproduceSpec| {
                if inject_fault.is_some() {
                    s.inject_fault = *inject_fault;
                }
            },
            cmd_reproduce,
        ),
    }
}

fn main() -> anyhow::Result<ExitCode> {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let code = match dispatch(&cli) {
        Ok(true) => EXIT_OK,
        Ok(false) => EXIT_CRITERION_FAILED,
        Err(e) => {
            let code = e.exit_code();
            eprintln!("error: {e}");
            code
        }
    };
    Ok(ExitCode::from(code as u8))
}
