use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{ArgGroup, Parser, Subcommand};

use harq_qac_cli::{
    compare_lambda, derive_example1_schedule, run_scenario, run_sweep, ScenarioConfig, SweepConfig,
};

#[derive(Parser)]
#[command(
    name = "harq-qac",
    version,
    about = "Quantized average consensus over lossy directed links"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and export states.csv, events.csv and metrics.csv.
    #[command(group(ArgGroup::new("source").required(true).args(["preset", "config"])))]
    Run {
        #[arg(long, value_parser = ["sc1", "sc2", "sc3", "example1"])]
        preset: Option<String>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        max_rounds: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo sweep over error rates and lambdas; writes sweep.csv.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Derive the worked-example replay schedule and write it as CSV.
    DeriveSchedule {
        #[arg(long)]
        out: PathBuf,
    },
    /// Paired comparison of iterations to convergence under two lambdas.
    CompareLambda {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', num_args = 2)]
        lambdas: Vec<f64>,
        #[arg(long)]
        replicas: usize,
    },
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x}"))
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run {
            preset,
            config,
            seed,
            max_rounds,
            out,
        } => {
            let mut cfg = match (preset, config) {
                (Some(name), _) => ScenarioConfig::preset(&name)?,
                (None, Some(path)) => ScenarioConfig::from_toml(&read(&path)?)?,
                (None, None) => bail!("one of --preset or --config is required"),
            };
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            if let Some(max_rounds) = max_rounds {
                cfg.halt.max_rounds = max_rounds;
            }
            if out.is_some() {
                cfg.out = out;
            }
            cfg.validate()?;
            let outcome = run_scenario(&cfg)?;
            let last = outcome.trace.rounds().last().expect("trace has round 0");
            println!("initial values: {:?}", outcome.initial_values);
            println!("rounds executed: {}", outcome.trace.rounds_executed());
            println!("final consensus error: {}", last.consensus_error);
            match outcome.iterations() {
                Some(k) => println!("converged at round {k}"),
                None => println!("not converged"),
            }
            if let Some(dir) = &cfg.out {
                println!(
                    "wrote states.csv, events.csv, metrics.csv to {}",
                    dir.display()
                );
            }
            Ok(if outcome.converged() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            })
        }
        Command::Sweep { config, out } => {
            let mut cfg = SweepConfig::from_toml(&read(&config)?)?;
            if out.is_some() {
                cfg.out = out;
            }
            if cfg.out.is_none() {
                cfg.out = Some(PathBuf::from("."));
            }
            let result = run_sweep(&cfg)?;
            println!("error_rate lambda median mean min max failures");
            for row in result.rows() {
                println!(
                    "{} {} {} {} {} {} {}",
                    row.error_rate,
                    row.lambda,
                    fmt_opt(row.median_iters),
                    fmt_opt(row.mean_iters),
                    row.min_iters.map_or("-".into(), |v| v.to_string()),
                    row.max_iters.map_or("-".into(), |v| v.to_string()),
                    row.failures
                );
            }
            let failures = result.total_failures();
            if failures > 0 {
                eprintln!("warning: {failures} runs hit max_rounds without converging");
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::DeriveSchedule { out } => {
            let derivation = derive_example1_schedule();
            derivation.schedule.save(&out)?;
            println!(
                "wrote {} entries to {}",
                derivation.schedule.len(),
                out.display()
            );
            for a in &derivation.satisfied {
                println!("anchor met: {a}");
            }
            for a in &derivation.unsatisfied {
                eprintln!("anchor unsatisfiable: {a}");
            }
            if let Some(k) = derivation.first_converged {
                println!("replay converges at round {k}");
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::CompareLambda {
            config,
            lambdas,
            replicas,
        } => {
            let cfg = ScenarioConfig::from_toml(&read(&config)?)?;
            let res = compare_lambda(&cfg, (lambdas[0], lambdas[1]), replicas)?;
            println!(
                "seed,iters_lambda_{},iters_lambda_{}",
                lambdas[0], lambdas[1]
            );
            for (i, (a, b)) in res.pairs.iter().enumerate() {
                let show = |v: &Option<u64>| v.map_or(String::new(), |x| x.to_string());
                println!(
                    "{},{},{}",
                    cfg.seed.wrapping_add(i as u64),
                    show(a),
                    show(b)
                );
            }
            println!(
                "median lambda={}: {}",
                lambdas[0],
                fmt_opt(res.median_first())
            );
            println!(
                "median lambda={}: {}",
                lambdas[1],
                fmt_opt(res.median_second())
            );
            println!(
                "median paired difference: {}",
                fmt_opt(res.median_difference())
            );
            Ok(ExitCode::SUCCESS)
        }
    }
}
