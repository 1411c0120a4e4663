use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use kdecay::harness::{self, Experiment, Preset, RunResult};

#[derive(Parser)]
#[command(name = "kdecay", version, about = "Decay-rate experiments for linearized kinetic equations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    Desk,
}

#[derive(Args)]
struct RunArgs {
    /// JSON run configuration (overlaid on the preset when one is given).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; overrides the config's `output`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    preset: Option<PresetArg>,
}

#[derive(Subcommand)]
enum Command {
    /// Small-frequency eigenvalue branches and projections.
    Spectrum(RunArgs),
    /// Large-time decay of a low-frequency field.
    Decay(RunArgs),
    /// Besov inequality suite.
    Besov(RunArgs),
    /// Decay-rate calculus.
    Rates(RunArgs),
    /// Structural validation of an operator file.
    Validate(RunArgs),
    /// Write the model operator of a configuration as an operator file.
    ExportOperator {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        preset: Option<PresetArg>,
        /// Destination file.
        #[arg(long)]
        out: PathBuf,
    },
}

fn load(experiment: Experiment, config: Option<&Path>, preset: Option<PresetArg>) -> kdecay::Result<harness::RunConfig> {
    let text = config.map(std::fs::read_to_string).transpose()?;
    harness::load_config(experiment, text.as_deref(), preset.map(|_| Preset::Desk))
}

fn summary(r: &RunResult) {
    for c in &r.checks {
        let mark = if c.pass { "PASS" } else { "FAIL" };
        println!("{mark} {:<34} value {:.4e} tol {:.4e} {}", c.name, c.value, c.tol, c.note);
    }
    for i in &r.inconclusive {
        println!("INCONCLUSIVE {i}");
    }
    println!("status {:?} in {:.1} s", r.status, r.elapsed_seconds);
}

fn execute(cli: Cli) -> kdecay::Result<i32> {
    let (experiment, args) = match cli.command {
        Command::Spectrum(a) => (Experiment::Spectrum, a),
        Command::Decay(a) => (Experiment::Decay, a),
        Command::Besov(a) => (Experiment::Besov, a),
        Command::Rates(a) => (Experiment::Rates, a),
        Command::Validate(a) => (Experiment::Validate, a),
        Command::ExportOperator { config, preset, out } => {
            let cfg = load(Experiment::Validate, config.as_deref(), preset)?;
            harness::export_operator(&cfg, &out)?;
            println!("wrote {}", out.display());
            return Ok(0);
        }
    };
    let mut cfg = load(experiment, args.config.as_deref(), args.preset)?;
    if let Some(out) = args.out {
        cfg.output = Some(out);
    }
    let result = harness::run(&cfg)?;
    summary(&result);
    if let Some(dir) = &cfg.output {
        result.save(dir)?;
        println!("results in {}", dir.display());
    }
    Ok(result.status.exit_code())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
