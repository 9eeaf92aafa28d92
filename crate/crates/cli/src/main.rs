use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use uavmac::acceptance::{all_passed, run_all, Settings};
use uavmac::config::RunConfig;
use uavmac::experiments::{run_sweep, Axis, SweepSpec};
use uavmac::model::solve_fixed_point;
use uavmac::plot::write_plots;
use uavmac::report::{
    model_table, read_sweep_csv, replication_table, sweep_summary, write_sweep_csv,
};
use uavmac::sim::replicate;
use uavmac::Error;

const EXIT_USAGE: u8 = 1;
const EXIT_SOLVER: u8 = 2;
const EXIT_ACCEPTANCE: u8 = 3;

#[derive(Parser)]
#[command(
    name = "uavmac",
    version,
    about = "Saturation throughput of CSMA/CA under a moving UAV footprint"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the analytical model and print the per-cluster table.
    Model { config: PathBuf },
    /// Run independent simulated flights and print their aggregate.
    Simulate {
        config: PathBuf,
        /// Number of seeds; defaults to `sim.seeds` of the config.
        #[arg(long)]
        seeds: Option<u32>,
    },
    /// Sweep one parameter, model against simulation, and emit CSV.
    Sweep {
        config: PathBuf,
        /// Axis to sweep over its default grid when the config has no `[sweep]`.
        #[arg(long)]
        axis: Option<Axis>,
        /// CSV destination; overrides `output.csv`, `-` for stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render one SVG chart per (axis, mode) from a sweep CSV.
    Plot {
        csv: PathBuf,
        #[arg(long, default_value = "plots")]
        out: PathBuf,
    },
    /// Run the acceptance checks and print one line per check.
    Validate { config: PathBuf },
}

enum Failure {
    Usage(String),
    Solver(String),
    Acceptance,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::FreezeDivergence(_)
            | Error::UndefinedMixture(_)
            | Error::OutOfCoverage { .. }
            | Error::Infeasible(_)
            | Error::NonConvergence { .. } => Failure::Solver(e.to_string()),
            other => Failure::Usage(other.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Solver(msg)) => {
            eprintln!("solver failure: {msg}");
            ExitCode::from(EXIT_SOLVER)
        }
        Err(Failure::Acceptance) => ExitCode::from(EXIT_ACCEPTANCE),
    }
}

fn run(command: Command) -> Result<(), Failure> {
    let mut stdout = io::stdout().lock();
    match command {
        Command::Model { config } => {
            let cfg = RunConfig::load(&config)?;
            let scenario = cfg.scenario()?;
            let solution = solve_fixed_point(&scenario, &cfg.solver_options())?;
            write!(stdout, "{}", model_table(&scenario, &solution))?;
        }
        Command::Simulate { config, seeds } => {
            let cfg = RunConfig::load(&config)?;
            let scenario = cfg.scenario()?;
            let settings = cfg.sim_settings();
            let seeds = seeds.unwrap_or(settings.n_seeds);
            if seeds == 0 {
                return Err(Failure::Usage("--seeds must be at least 1".into()));
            }
            let rep = replicate(&settings.config(scenario.clone()), seeds)?;
            write!(stdout, "{}", replication_table(&scenario, &rep))?;
        }
        Command::Sweep { config, axis, out } => {
            let cfg = RunConfig::load(&config)?;
            let spec = match (axis, cfg.sweep_spec()?) {
                (Some(axis), _) => {
                    let mut spec = SweepSpec::new(axis, axis.default_values(), cfg.scenario()?);
                    spec.sim = cfg.sim_settings();
                    spec.solver = cfg.solver_options();
                    spec.validate()?;
                    spec
                }
                (None, Some(spec)) => spec,
                (None, None) => {
                    return Err(Failure::Usage(
                        "no [sweep] section in the config; pass --axis".into(),
                    ))
                }
            };
            let rows = run_sweep(&spec)?;
            match out.or(cfg.output.csv.clone()) {
                Some(path) if path != Path::new("-") => {
                    let mut file = BufWriter::new(File::create(&path)?);
                    write_sweep_csv(&rows, &mut file)?;
                    file.flush()?;
                    eprintln!("wrote {}", path.display());
                }
                _ => write_sweep_csv(&rows, &mut stdout)?,
            }
            eprint!("{}", sweep_summary(&rows));
            if let Some(dir) = &cfg.output.plot_dir {
                let records = read_sweep_csv(uavmac::report::sweep_csv(&rows).as_bytes())?;
                for path in write_plots(&records, dir)? {
                    eprintln!("wrote {}", path.display());
                }
            }
        }
        Command::Plot { csv, out } => {
            let records = read_sweep_csv(File::open(&csv)?)?;
            for path in write_plots(&records, &out)? {
                writeln!(stdout, "{}", path.display())?;
            }
        }
        Command::Validate { config } => {
            let cfg = RunConfig::load(&config)?;
            let sim = cfg.sim_settings();
            let settings = Settings {
                seeds: sim.n_seeds,
                measured_time: sim.measured_time,
                seed: sim.seed,
            };
            let outcomes = run_all(&settings);
            for o in &outcomes {
                writeln!(stdout, "{o}")?;
            }
            let passed = outcomes.iter().filter(|o| o.passed).count();
            writeln!(stdout, "{passed}/{} checks passed", outcomes.len())?;
            if !all_passed(&outcomes) {
                return Err(Failure::Acceptance);
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solver_errors_map_to_solver_status() {
        assert!(matches!(
            Failure::from(Error::Infeasible("x".into())),
            Failure::Solver(_)
        ));
        assert!(matches!(
            Failure::from(Error::Config("x".into())),
            Failure::Usage(_)
        ));
        assert!(matches!(
            Failure::from(Error::Csv("x".into())),
            Failure::Usage(_)
        ));
    }

    #[test]
    fn command_line_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
