use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dpm_solver::harness::{
    order_suites, parse_grid, parse_oracle, run_convergence, run_equivalence, run_sde_stats,
    write_records_to_path, EquivalenceConfig, SdeOptions, StudySpec, SuiteResult,
};
use dpm_solver::ode::Method;
use dpm_solver::{NoiseSchedule, Result};

#[derive(Parser)]
#[command(name = "dpm-harness", about = "Convergence, equivalence and SDE-moment studies on a Gaussian oracle")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Endpoint error against the reference ODE solution and fitted order.
    Convergence {
        #[arg(long, default_value = "mu=1,s0=0.5")]
        oracle: String,
        #[arg(long, default_value = "linear")]
        schedule: String,
        #[arg(long, value_delimiter = ',', required = true)]
        methods: Vec<String>,
        #[arg(long, value_delimiter = ',', required = true)]
        steps: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "0")]
        seeds: Vec<u64>,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long)]
        out: PathBuf,
        /// Dimension when the oracle spec omits `dim=`.
        #[arg(long, default_value_t = 4)]
        dim: usize,
        /// uniform_t, uniform_lambda or kappa=<f>.
        #[arg(long, default_value = "uniform_lambda")]
        grid: String,
        #[arg(long, default_value_t = dpm_solver::harness::DEFAULT_DRAWS)]
        draws: usize,
        /// Write wall_ms as 0 so reruns are byte-identical.
        #[arg(long)]
        no_timing: bool,
    },
    /// Algebraic equivalence suites over randomized configurations.
    Equivalence {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = EquivalenceConfig::default().seed)]
        seed: u64,
    },
    /// Sample moments at t_min against the analytic marginal.
    SdeStats {
        #[arg(long)]
        method: String,
        #[arg(long)]
        steps: usize,
        #[arg(long)]
        trajectories: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "mu=1,s0=0.5")]
        oracle: String,
        #[arg(long, default_value = "linear")]
        schedule: String,
        #[arg(long, default_value_t = 1)]
        dim: usize,
        #[arg(long, value_delimiter = ',', default_value = "0")]
        seeds: Vec<u64>,
        #[arg(long)]
        no_timing: bool,
    },
}

fn methods(names: &[String]) -> Result<Vec<Method>> {
    names.iter().map(|n| Method::from_name(n.trim())).collect()
}

fn run(cli: Cli) -> Result<Vec<SuiteResult>> {
    match cli.command {
        Command::Convergence {
            oracle,
            schedule,
            methods: names,
            steps,
            seeds,
            tol,
            out,
            dim,
            grid,
            draws,
            no_timing,
        } => {
            let mut study = StudySpec::new(methods(&names)?, steps);
            study.oracle = parse_oracle(&oracle, dim)?;
            study.schedule = NoiseSchedule::from_name(&schedule)?;
            study.seeds = seeds;
            study.tol = tol;
            study.grid = parse_grid(&grid)?;
            study.draws = draws;
            study.timing = !no_timing;
            let records = run_convergence(&study)?;
            write_records_to_path(&out, &records)?;
            Ok(order_suites(&records))
        }
        Command::Equivalence { out, seed } => {
            let suites = run_equivalence(&EquivalenceConfig {
                seed,
                ..EquivalenceConfig::default()
            })?;
            let text: String = suites.iter().map(|s| format!("{s}\n")).collect();
            std::fs::write(&out, text)?;
            Ok(suites)
        }
        Command::SdeStats {
            method,
            steps,
            trajectories,
            out,
            oracle,
            schedule,
            dim,
            seeds,
            no_timing,
        } => {
            let mut study = StudySpec::new(vec![Method::from_name(&method)?], vec![steps]);
            study.oracle = parse_oracle(&oracle, dim)?;
            study.schedule = NoiseSchedule::from_name(&schedule)?;
            study.seeds = seeds;
            study.draws = trajectories;
            study.timing = !no_timing;
            let result = run_sde_stats(&study, SdeOptions::default())?;
            write_records_to_path(&out, &result.records)?;
            Ok(result.moments.iter().flat_map(|m| m.suites()).collect())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(suites) => {
            for s in &suites {
                println!("{s}");
            }
            if suites.iter().all(|s| s.pass) {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
