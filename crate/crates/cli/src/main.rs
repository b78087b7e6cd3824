//! Command-line front end: Monte-Carlo campaigns, dataset smoothing, fixture
//! export and the numerical self-check battery.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
//! failure.


use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use irts_core::batch::{self, BatchProblem, GnFlavor};
use irts_core::estimators::{run_smoother, SmootherFlavor, SmootherProblem};
use irts_core::group::GroupElement;
use irts_core::models::ErrorConvention;
use irts_core::sim::{
    self, run_campaign, simulate_trial_data, EstimatorKind, STATE_NAMES,
};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use irts_cli::config::{self, config_digest, CampaignOptions};
use irts_cli::error::{CliError, Result};
use irts_cli::export::{export_fixture, export_results, export_trajectory, RunManifest};

#[derive(Parser)]
#[command(
    name = "irts",
    version,
    about = "Invariant and multiplicative RTS smoothing benchmarks on SE(3) with sensor biases"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte-Carlo campaign from a configuration file and export
    /// RMSE statistics as CSV.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Override the configured campaign seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the configured trial count.
        #[arg(long)]
        trials: Option<usize>,
        /// Override the configured iteration count.
        #[arg(long)]
        iterations: Option<usize>,
        /// Comma-separated subset of irts,mrts,ign,mgn.
        #[arg(long)]
        estimators: Option<String>,
        #[arg(long, default_value = "results")]
        out: PathBuf,
    },
    /// Smooth one ingested CSV dataset and export the estimated trajectories.
    Smooth {
        /// Dataset directory (intero.csv plus optional gps/landmark/truth files).
        #[arg(long)]
        data: PathBuf,
        /// Configuration supplying noise levels, the initial-error spec and
        /// estimator defaults.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        estimators: Option<String>,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long, default_value = "results")]
        out: PathBuf,
    },
    /// Write one trial's synthetic dataset to CSV files.
    ExportFixture {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "fixture")]
        out: PathBuf,
    },
    /// Run the numerical self-check battery and report each check.
    Verify,
}

fn parse_estimator_flag(flag: &Option<String>) -> Result<Option<Vec<EstimatorKind>>> {
    let Some(list) = flag else { return Ok(None) };
    let mut out = Vec::new();
    for token in list.split(',') {
        let kind = EstimatorKind::parse(token).ok_or_else(|| {
            CliError::config(0, "estimators", format!("unknown estimator `{}`", token.trim()))
        })?;
        if !out.contains(&kind) {
            out.push(kind);
        }
    }
    if out.is_empty() {
        return Err(CliError::config(0, "estimators", "empty estimator list"));
    }
    Ok(Some(out))
}

fn cmd_simulate(
    config_path: &Path,
    seed: Option<u64>,
    trials: Option<usize>,
    iterations: Option<usize>,
    estimators: &Option<String>,
    out: &Path,
) -> Result<()> {
    let text = std::fs::read_to_string(config_path)?;
    let (mut scenario, spec, options) = config::parse_config_text(&text)?;
    if let Some(seed) = seed {
        scenario.seed = seed;
    }
    let options = CampaignOptions {
        trials: trials.unwrap_or(options.trials),
        iterations: iterations.unwrap_or(options.iterations),
        estimators: parse_estimator_flag(estimators)?.unwrap_or(options.estimators),
    };
    let started = Instant::now();
    let stats = run_campaign(
        &scenario,
        &spec,
        &options.estimators,
        options.trials,
        options.iterations,
    )?;
    let elapsed = started.elapsed();
    let manifest = RunManifest {
        artifact_version: env!("CARGO_PKG_VERSION"),
        config_digest: config_digest(&text),
        seed: scenario.seed,
        trials: options.trials,
        iterations: options.iterations,
        estimators: options.estimators.iter().map(|e| e.name()).collect(),
        failed_trials: stats.failures.len(),
        wall_clock_seconds: elapsed.as_secs_f64(),
    };
    export_results(&stats, &manifest, out)?;
    println!(
        "campaign: {} trials x {} iterations in {:.1} s ({} failures)",
        options.trials,
        options.iterations,
        elapsed.as_secs_f64(),
        stats.failures.len()
    );
    for (trial, message) in &stats.failures {
        eprintln!("  trial {trial} failed: {message}");
    }
    for row in &stats.summary {
        if row.iteration + 1 == options.iterations {
            println!(
                "  {:<4} {:<9} iter {} mean {:.5}  [{:.5}, {:.5}]",
                row.estimator.name(),
                STATE_NAMES[row.state],
                row.iteration + 1,
                row.mean,
                row.p2_5,
                row.p97_5
            );
        }
    }
    println!("results written to {}", out.display());
    Ok(())
}

fn cmd_smooth(
    data: &Path,
    config_path: &Path,
    estimators: &Option<String>,
    iterations: Option<usize>,
    out: &Path,
) -> Result<()> {
    let text = std::fs::read_to_string(config_path)?;
    let (scenario, spec, options) = config::parse_config_text(&text)?;
    let dataset = irts_cli::ingest::ingest_dataset(data)?;
    for warning in &dataset.warnings {
        eprintln!(
            "warning: {} has a timestamp gap {} -> {}",
            warning.file, warning.t_prev, warning.t_next
        );
    }
    let estimators = parse_estimator_flag(estimators)?.unwrap_or(options.estimators);
    let iterations = iterations.unwrap_or(options.iterations);
    std::fs::create_dir_all(out)?;

    // The state grid has one more entry than the interoceptive stream.
    let (times, _) = irts_core::estimators::step_times(&dataset.intero);
    // Initial belief: around the true initial state when truth is available
    // (error drawn from the configured spec), otherwise the identity pose.
    let truth_states: Option<Vec<GroupElement>> = dataset
        .truth
        .as_ref()
        .map(|rows| rows.iter().map(|(_, s)| s.clone()).collect());
    let mut rng = ChaCha12Rng::seed_from_u64(scenario.seed);
    let base_state = truth_states
        .as_ref()
        .map(|t| t[0].clone())
        .unwrap_or_else(GroupElement::identity);
    let mut report = String::new();
    for kind in estimators {
        let states: Vec<GroupElement> = match kind {
            EstimatorKind::Irts | EstimatorKind::Mrts => {
                let (flavor, convention) = match kind {
                    EstimatorKind::Irts => (SmootherFlavor::Lirts, ErrorConvention::LeftInvariant),
                    _ => (SmootherFlavor::Mrts, ErrorConvention::Multiplicative),
                };
                let init = sim::sample_initial_belief(&base_state, &spec, convention, &mut rng);
                let problem = SmootherProblem {
                    intero: &dataset.intero,
                    extero: &dataset.extero,
                    map: &dataset.map,
                    noise: &scenario.noise,
                };
                let run = run_smoother(&init, &problem, flavor, iterations)?;
                run.smoothed.iter().map(|b| b.state.clone()).collect()
            }
            EstimatorKind::Ign | EstimatorKind::Mgn => {
                let (flavor, convention) = match kind {
                    EstimatorKind::Ign => (GnFlavor::Invariant, ErrorConvention::LeftInvariant),
                    _ => (GnFlavor::Multiplicative, ErrorConvention::Multiplicative),
                };
                let init = sim::sample_initial_belief(&base_state, &spec, convention, &mut rng);
                let problem = BatchProblem {
                    prior: &init,
                    intero: &dataset.intero,
                    extero: &dataset.extero,
                    map: &dataset.map,
                    noise: &scenario.noise,
                };
                batch::solve(&problem, flavor, iterations)?.states
            }
        };
        let path = out.join(format!("smoothed_{}.csv", kind.name()));
        export_trajectory(&times, &states, &path)?;
        println!("{}: wrote {}", kind.name(), path.display());
        if let Some(truth) = &truth_states {
            if truth.len() == states.len() {
                let rmse = sim::rmse(&states, truth)?;
                for (state, value) in rmse.iter().enumerate() {
                    let line = format!("{} {} rmse {}", kind.name(), STATE_NAMES[state], value);
                    println!("  {line}");
                    report.push_str(&line);
                    report.push('\n');
                }
            } else {
                eprintln!(
                    "warning: truth has {} states but the stream implies {}; skipping RMSE",
                    truth.len(),
                    states.len()
                );
            }
        }
    }
    if !report.is_empty() {
        std::fs::write(out.join("rmse_report.txt"), report)?;
    }
    Ok(())
}

fn cmd_export_fixture(config_path: &Path, seed: Option<u64>, out: &Path) -> Result<()> {
    let text = std::fs::read_to_string(config_path)?;
    let (mut scenario, _, _) = config::parse_config_text(&text)?;
    if let Some(seed) = seed {
        scenario.seed = seed;
    }
    let data = simulate_trial_data(&scenario, 0)?;
    export_fixture(&data, &scenario.landmarks, out)?;
    println!(
        "fixture with {} interoceptive samples, {} measurements, {} landmarks written to {}",
        data.intero.len(),
        data.extero.len(),
        scenario.landmarks.len(),
        out.display()
    );
    Ok(())
}

fn cmd_verify() -> Result<()> {
    let mut all_passed = true;
    for check in irts_core::diagnostics::run_battery() {
        let verdict = if check.passed { "PASS" } else { "FAIL" };
        println!("{verdict}  {}: {}", check.name, check.detail);
        all_passed &= check.passed;
    }
    if !all_passed {
        return Err(CliError::Numerical(irts_core::Error::InvalidScenario(
            "self-check battery reported failures".into(),
        )));
    }
    Ok(())
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Simulate {
            config,
            seed,
            trials,
            iterations,
            estimators,
            out,
        } => cmd_simulate(config, *seed, *trials, *iterations, estimators, out),
        Command::Smooth {
            data,
            config,
            estimators,
            iterations,
            out,
        } => cmd_smooth(data, config, estimators, *iterations, out),
        Command::ExportFixture { config, seed, out } => cmd_export_fixture(config, *seed, out),
        Command::Verify => cmd_verify(),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
