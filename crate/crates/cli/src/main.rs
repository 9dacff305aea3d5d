use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ucp_cli::{run, Command, ConfigFile, RunConfig, RunSection};

#[derive(Parser)]
#[command(name = "ucp", version, about = "Hypothesis checks, pseudo-convexity certificates and numerical labs")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Check the structural hypotheses on the sampled surfaces.
    Check(Flags),
    /// Certify pseudo-convexity of ψ₁ − λψ₀² at the base point.
    Certify(Flags),
    /// Trace null rays through the constraint samples.
    Rays(Flags),
    /// Corner identities, layer probe, transfer inequality, mollifier.
    Corner(Flags),
    /// Carleman ratio sweep.
    Carleman(Flags),
    /// Every stage in order, each consuming the previous one's outputs.
    All(Flags),
    /// The command named in the config file.
    Run(Flags),
}

#[derive(Args)]
struct Flags {
    /// Library model (ik2, ik3, ik2-conformal, ctrl-a, ctrl-b, ctrl-c).
    #[arg(long)]
    model: Option<String>,
    /// TOML config with `[run]` and `[geometry]` sections.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    mu: Option<f64>,
    /// Grid intervals per axis.
    #[arg(long)]
    grid: Option<usize>,
    /// Surface samples and sphere seeds.
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    tol_zero: Option<f64>,
    #[arg(long)]
    tol_char: Option<f64>,
    #[arg(long)]
    tol_pos: Option<f64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, f) = match cli.command {
        Sub::Check(f) => (Some(Command::Check), f),
        Sub::Certify(f) => (Some(Command::Certify), f),
        Sub::Rays(f) => (Some(Command::Rays), f),
        Sub::Corner(f) => (Some(Command::Corner), f),
        Sub::Carleman(f) => (Some(Command::Carleman), f),
        Sub::All(f) => (Some(Command::All), f),
        Sub::Run(f) => (None, f),
    };
    let file = match &f.config {
        Some(p) => match ConfigFile::load(p) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(2);
            }
        },
        None => ConfigFile::default(),
    };
    let flags = RunSection {
        command,
        model: f.model,
        lambda: f.lambda,
        mu: f.mu,
        grid: f.grid,
        samples: f.samples,
        seed: f.seed,
        out: f.out,
        tol_zero: f.tol_zero,
        tol_char: f.tol_char,
        tol_pos: f.tol_pos,
    };
    let cfg = match RunConfig::resolve(file, flags) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match run(&cfg) {
        Ok(o) => {
            let status = if o.passed { "pass" } else { "FAIL" };
            println!("{} {}: {status}", cfg.command.name(), o.report.model);
            if let Some(e) = &o.report.body.error {
                println!("  error: {e}");
            }
            for p in &o.files {
                println!("  wrote {}", p.display());
            }
            if o.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
