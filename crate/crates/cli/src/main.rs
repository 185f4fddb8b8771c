use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fracdesign::ScoringMode;
use fracdesign_cli::report::{render_design, render_evaluate, render_measure, render_oracle};
use fracdesign_cli::{cmd_design, cmd_evaluate, cmd_optimize_measure, cmd_oracle, CliError, Format, Overrides};
use fracdesign_cli::{ProblemSpec, RunOptions, SpecFile};

#[derive(Parser)]
#[command(name = "fracdesign", version, about = "A-optimal exact designs for mixed-level factorial experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute the A-optimal design measure.
    OptimizeMeasure(Common),
    /// Build exact designs with procedures A, B1 and B2.
    Design(Common),
    /// Score a design file.
    Evaluate {
        /// One run per line, as a label or comma-separated levels.
        #[arg(long)]
        design: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Compare the procedures with a complete enumeration of binary designs.
    Oracle {
        /// Largest number of designs to enumerate per run size.
        #[arg(long, default_value_t = fracdesign::search::DEFAULT_ORACLE_BUDGET)]
        budget: u128,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// TOML problem spec; flags override its keys.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Levels per factor, e.g. 2,2,2,2,2,3.
    #[arg(long)]
    levels: Option<String>,
    /// Requirement set, e.g. "1;2;3;1x3".
    #[arg(long)]
    effects: Option<String>,
    /// Run sizes: 16, 13..20 or 13,15,20.
    #[arg(long)]
    runs: Option<String>,
    /// Comma-separated ρ = δ²/σ² values.
    #[arg(long)]
    rho: Option<String>,
    /// A, B1, B2 or all.
    #[arg(long)]
    procedure: Option<String>,
    /// Stopping tolerance of the multiplicative algorithm.
    #[arg(long)]
    t: Option<f64>,
    /// Procedure A: smallest eff_lb accepted for the rounded start design
    #[arg(long)]
    init_threshold: Option<f64>,
    /// Procedure A: switch from delete-one to delete-two-add-one below this eff_lb
    #[arg(long)]
    keep_threshold: Option<f64>,
    /// First N₁ tried when rounding the measure (procedure A).
    #[arg(long)]
    n1_hint: Option<usize>,
    /// Start procedure B1 from the B2 design with this many runs.
    #[arg(long)]
    b1_start: Option<usize>,
    /// table, csv or json.
    #[arg(long, default_value = "table")]
    format: String,
    /// Score candidates by updating moment sums instead of rebuilding them.
    #[arg(long)]
    incremental: bool,
}

impl Common {
    fn resolve(&self) -> Result<(ProblemSpec, Format, ScoringMode), CliError> {
        let file = self.spec.as_deref().map(SpecFile::load).transpose()?;
        let flags = Overrides {
            levels: self.levels.clone(),
            effects: self.effects.clone(),
            runs: self.runs.clone(),
            rho: self.rho.clone(),
            procedure: self.procedure.clone(),
            t: self.t,
            init_threshold: self.init_threshold,
            keep_threshold: self.keep_threshold,
            n1_hint: self.n1_hint,
            b1_start: self.b1_start,
        };
        let scoring = if self.incremental { ScoringMode::Incremental } else { ScoringMode::Direct };
        Ok((ProblemSpec::resolve(file, &flags)?, self.format.parse()?, scoring))
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::OptimizeMeasure(common) => {
            let (spec, format, _) = common.resolve()?;
            print!("{}", render_measure(&cmd_optimize_measure(&spec, &RunOptions::default())?, format));
        }
        Command::Design(common) => {
            let (spec, format, scoring) = common.resolve()?;
            let report = cmd_design(&spec, &RunOptions { scoring, ..Default::default() })?;
            print!("{}", render_design(&report, format));
            let failed = report.failed_cells();
            if failed > 0 {
                return Err(CliError::Numerical(format!("{failed} of {} cells failed", report.cells.len())));
            }
        }
        Command::Evaluate { design, common } => {
            let (spec, format, _) = common.resolve()?;
            let text = std::fs::read_to_string(&design)
                .map_err(|e| CliError::Parse(format!("cannot read {}: {e}", design.display())))?;
            print!("{}", render_evaluate(&cmd_evaluate(&text, &spec, &RunOptions::default())?, format));
        }
        Command::Oracle { budget, common } => {
            let (spec, format, scoring) = common.resolve()?;
            let report = cmd_oracle(&spec, &RunOptions { scoring, oracle_budget: budget, ..Default::default() })?;
            print!("{}", render_oracle(&report, format));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
