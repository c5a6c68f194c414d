use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use coadapt::certificate::{deviation_term, validate_tail_bound};
use coadapt::config::load_config;
use coadapt::error::Error;
use coadapt::experiment::{
    bound_csv, eps_csv, mixing_csv, run_experiment, run_trial, sweep, sweep_csv, trials_csv,
    SweepParameter,
};
use coadapt::mixing::{mixing_profile, MixingMethod};

/// Closed-loop co-adaptation simulator: episodes, mixing coefficients, and
/// outperformance certificates over finite alphabets.
#[derive(Debug, Parser)]
#[command(name = "coadapt", version, about)]
struct Cli {
    /// Experiment definition file (TOML).
    #[arg(
        long,
        global = true,
        env = "COADAPT_CONFIG",
        default_value = "experiment.toml"
    )]
    config: PathBuf,

    /// Override the config's base seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Write the command's CSV report here.
    #[arg(long, global = true)]
    csv: Option<PathBuf>,

    /// Suppress stdout reporting (files are still written).
    #[arg(long, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MethodArg {
    Exact,
    Brute,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run seeded trials and report regret statistics and the certificate.
    Run {
        /// Override the config's trial count.
        #[arg(long)]
        trials: Option<usize>,
        /// Restrict the hindsight comparator to a single fixed encoder.
        #[arg(long)]
        static_comparator: bool,
    },
    /// Print the eta matrix and the dependence factor M.
    Mixing {
        #[arg(long, value_enum, default_value_t = MethodArg::Exact)]
        method: MethodArg,
    },
    /// Evaluate the certificate on trial 0 and write a report.
    Certify {
        /// Write the plain-text report here (in addition to stdout).
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Monte Carlo check of the tail bound for the fixed comparator.
    ValidateBound {
        /// Number of sampled intention sequences.
        #[arg(long)]
        trials: Option<usize>,
        /// Comma-separated positive thresholds.
        #[arg(long, value_delimiter = ',', required = true)]
        eps_grid: Vec<f64>,
    },
    /// Re-run the experiment for each value of one parameter.
    Sweep {
        /// One of: T, delta, learning-rate, transition-flip-p.
        #[arg(long)]
        parameter: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            if err.use_stderr() {
                eprint!("{err}");
                return ExitCode::from(1);
            }
            // --help / --version
            print!("{err}");
            return ExitCode::SUCCESS;
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    let mut cfg = load_config(&cli.config)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }

    match cli.command {
        Command::Run {
            trials,
            static_comparator,
        } => {
            if let Some(t) = trials {
                if t == 0 {
                    return Err(Error::InvalidArgument {
                        what: "trials",
                        reason: "must be at least 1".to_string(),
                    });
                }
                cfg.trials = t;
            }
            if static_comparator {
                cfg.static_comparator = true;
            }
            let report = run_experiment(&cfg)?;
            if let Some(path) = &cli.csv {
                std::fs::write(path, trials_csv(&report))?;
            }
            if !cli.quiet {
                print!("{}", report.summary_text());
            }
        }
        Command::Mixing { method } => {
            let method = match method {
                MethodArg::Exact => MixingMethod::ExactMarkov,
                MethodArg::Brute => MixingMethod::BruteForce,
            };
            let profile = mixing_profile(&cfg.process, cfg.horizon, method)?;
            if let Some(path) = &cli.csv {
                std::fs::write(path, mixing_csv(&profile))?;
            }
            if !cli.quiet {
                for t in 1..=profile.horizon() {
                    let row: Vec<String> = (t + 1..=profile.horizon())
                        .map(|j| format!("{}", profile.eta(t, j).unwrap()))
                        .collect();
                    println!("eta({t}, .): [{}]", row.join(", "));
                }
                println!("m_t: {}", profile.m());
            }
        }
        Command::Certify { report } => {
            let profile = mixing_profile(&cfg.process, cfg.horizon, MixingMethod::ExactMarkov)?;
            let deviation = deviation_term(cfg.lipschitz, profile.m(), cfg.horizon, cfg.delta)?;
            let outcome = run_trial(&cfg, 0, deviation)?;
            let cert = outcome.record.certificate;
            let text = format!(
                "horizon: {}\ndelta: {}\nlipschitz: {}\nm_t: {}\nempirical_loss: {}\n\
                 deviation: {}\neps_sum: {}\nmargin: {}\ncertificate: {}\n\
                 comparator_min: {}\nregret: {}\n",
                cfg.horizon,
                cfg.delta,
                cfg.lipschitz,
                profile.m(),
                cert.empirical_loss,
                cert.deviation,
                cert.eps_sum,
                cert.margin,
                if cert.holds { "HOLDS" } else { "DOES NOT HOLD" },
                outcome.record.comparator_min,
                outcome.record.regret,
            );
            if let Some(path) = &report {
                std::fs::write(path, &text)?;
            }
            if let Some(path) = &cli.csv {
                std::fs::write(path, eps_csv(&outcome.schedule))?;
            }
            if !cli.quiet {
                print!("{text}");
            }
        }
        Command::ValidateBound { trials, eps_grid } => {
            let trials = trials.unwrap_or(cfg.trials);
            let comparator = cfg.decoders.table(cfg.comparator_decoder)?;
            let sequence = vec![cfg.comparator_encoder; cfg.horizon];
            let report = validate_tail_bound(
                &cfg.process,
                &cfg.loss,
                &cfg.encoders,
                comparator,
                &sequence,
                cfg.comparator_initial,
                trials,
                &eps_grid,
                cfg.seed,
            )?;
            if let Some(path) = &cli.csv {
                std::fs::write(path, bound_csv(&report))?;
            }
            if !cli.quiet {
                println!(
                    "expected_psi: {}  lipschitz: {}  m_t: {}  trials: {}",
                    report.expected_psi, report.lipschitz, report.m, trials
                );
                println!("eps,empirical_frequency,theoretical_bound,std_error");
                for row in &report.rows {
                    println!(
                        "{},{},{},{}",
                        row.eps, row.empirical_frequency, row.theoretical_bound, row.std_error
                    );
                }
            }
        }
        Command::Sweep { parameter, values } => {
            let parameter = SweepParameter::parse(&parameter)?;
            let report = sweep(&cfg, parameter, &values)?;
            if let Some(path) = &cli.csv {
                std::fs::write(path, sweep_csv(&report))?;
            }
            if !cli.quiet {
                print!("{}", sweep_csv(&report));
            }
        }
    }
    Ok(())
}
