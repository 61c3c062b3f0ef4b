use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use optomech_cli::{
    load_config, run, CliError, Command, FileConfig, PointSpec, RunConfig, SpectraArgs, SweepArgs,
    WorkingPoint,
};
use optomech_core::fluctuations::SolverKind;
use optomech_core::steady_state::Branch;

/// Steady states and intensity-noise spectra of a multimode optomechanical cavity.
#[derive(Parser, Debug)]
#[command(name = "optomech", version)]
struct Cli {
    /// Parameter file of `key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,

    /// Modes run over -N..=N in each direction (overrides config)
    #[arg(long, global = true)]
    half_extent: Option<usize>,

    /// Quantization box side in scaled units (overrides config)
    #[arg(long, global = true)]
    box_side: Option<f64>,

    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args, Debug)]
struct PointArgs {
    /// Input power (default: pump_amplitude²).
    #[arg(long)]
    pin: Option<f64>,

    /// Root of the steady-state equation to use at --pin.
    #[arg(long, default_value = "lower", value_parser = parse_branch)]
    branch: Branch,

    /// Use the steady state with this intracavity power instead.
    #[arg(long, conflicts_with = "pin")]
    power: Option<f64>,

    /// Permit working points on the slope-unstable branch.
    #[arg(long)]
    allow_unstable: bool,
}

#[derive(Args, Debug)]
struct SpectrumArgs {
    #[command(flatten)]
    point: PointArgs,

    /// Thermal occupations, comma separated (default: from config).
    #[arg(long, value_delimiter = ',')]
    nt: Vec<f64>,

    /// Also write the full S_nm matrix.
    #[arg(long)]
    full_matrix: bool,

    #[arg(long, value_enum, default_value = "auto")]
    solver: Solver,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Input power against intracavity power, with stability flags.
    Bistability {
        #[arg(long)]
        pmax: Option<f64>,
        #[arg(long, default_value_t = 2000)]
        steps: usize,
    },
    /// Mode amplitudes and radial field profiles of one working point.
    Steady {
        #[command(flatten)]
        point: PointArgs,
    },
    /// Intensity-noise spectra at one analysis frequency.
    Spectra {
        #[command(flatten)]
        spectrum: SpectrumArgs,
        /// Analysis frequency in units of the cavity linewidth.
        #[arg(long, default_value_t = 0.1)]
        omega: f64,
        /// Write the fluctuation matrices at +omega as CSV.
        #[arg(long)]
        dump_matrices: bool,
    },
    /// Spectra over a grid of detunings and analysis frequencies.
    Sweep {
        #[command(flatten)]
        spectrum: SpectrumArgs,
        /// Analysis frequencies, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        omega: Vec<f64>,
        /// Fundamental detunings (default: from config).
        #[arg(long, value_delimiter = ',')]
        detuning0: Vec<f64>,
        /// Worker threads (default: available cores).
        #[arg(long)]
        jobs: Option<usize>,
        /// Skip points whose output is already complete.
        #[arg(long)]
        resume: bool,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Solver {
    Auto,
    Fast,
    Dense,
}

fn parse_branch(s: &str) -> Result<Branch, String> {
    s.parse().map_err(|e: optomech_core::Error| e.to_string())
}

impl PointArgs {
    fn spec(&self) -> PointSpec {
        let point = match self.power {
            Some(power) => WorkingPoint::Power(power),
            None => WorkingPoint::Input {
                input_power: self.pin,
                branch: self.branch,
            },
        };
        PointSpec {
            point,
            allow_unstable: self.allow_unstable,
        }
    }
}

impl SpectrumArgs {
    fn args(&self, dump_matrices: bool) -> SpectraArgs {
        SpectraArgs {
            point: self.point.spec(),
            occupations: self.nt.clone(),
            full_matrix: self.full_matrix,
            solver: match self.solver {
                Solver::Auto => SolverKind::Auto,
                Solver::Fast => SolverKind::Fast,
                Solver::Dense => SolverKind::Dense,
            },
            dump_matrices,
        }
    }
}

fn build(cli: Cli) -> Result<RunConfig, CliError> {
    let mut file = match &cli.config {
        Some(path) => load_config(path)?,
        None => FileConfig::default(),
    };
    if let Some(h) = cli.half_extent {
        file.half_extent = h;
    }
    if let Some(side) = cli.box_side {
        file.box_side = side;
    }
    let command = match cli.command {
        Cmd::Bistability { pmax, steps } => Command::Bistability { p_max: pmax, steps },
        Cmd::Steady { point } => Command::Steady(point.spec()),
        Cmd::Spectra {
            spectrum,
            omega,
            dump_matrices,
        } => Command::Spectra {
            args: spectrum.args(dump_matrices),
            omega,
        },
        Cmd::Sweep {
            spectrum,
            omega,
            detuning0,
            jobs,
            resume,
        } => {
            let jobs =
                jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
            if jobs == 0 {
                return Err(CliError::Usage("--jobs must be at least 1".into()));
            }
            Command::Sweep(SweepArgs {
                spectra: spectrum.args(false),
                detunings: detuning0,
                omegas: omega,
                jobs,
                resume,
            })
        }
    };
    Ok(RunConfig {
        file,
        command,
        output_dir: cli.out,
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match build(cli).and_then(|config| run(&config)) {
        Ok(lines) => {
            for line in lines {
                println!("{line}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
