//! `nsope` command-line front end.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use nsope::envs::{restore, snapshot, DomainId};
use nsope::estimators::Dataset;
use nsope::forecast::{predict, Algorithm, Forecast, Provenance};
use nsope::harness::{
    ablation_sweep, collect, ground_truth, read_results_csv, run_demo, run_sweep, write_results_csv, write_summary_csv,
    AblationParam, ExperimentConfig, Profile, SweepResult,
};
use nsope::plot;
use nsope::seed::{derive, tag};

#[derive(Debug, Parser)]
#[command(name = "nsope", version, about = "Off-policy performance forecasting under non-stationarity")]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Scale preset.
    #[arg(long, global = true, default_value = "desk")]
    profile: Profile,
    /// Base seed; overrides the configured one.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Dotted `key=value` override (repeatable).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Worker threads for sweeps.
    #[arg(long, global = true, env = "OPEN_NS_JOBS")]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Log behavior-policy episodes and the final environment state.
    Collect {
        #[arg(long, default_value = "robotoy_active")]
        domain: DomainId,
        #[arg(long, default_value_t = 1.0)]
        speed: f64,
        #[arg(long, default_value_t = 0)]
        trial: usize,
    },
    /// Forecast the evaluation policy's next episodes from a logged dataset.
    Evaluate {
        /// Dataset CSV written by `collect`.
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "robotoy_active")]
        domain: DomainId,
        /// Restrict to one algorithm (default: all configured).
        #[arg(long)]
        algorithm: Option<Algorithm>,
        /// Environment snapshot; when given, the true future performance is estimated too.
        #[arg(long)]
        state: Option<PathBuf>,
    },
    /// Speed sweep over every configured domain, algorithm and trial.
    Sweep,
    /// Sweep repeated for several values of one hyper-parameter.
    Ablate {
        #[arg(long)]
        param: AblationParam,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<usize>,
    },
    /// Illustration of the denoising and forecasting stages.
    Demo {
        #[arg(long, default_value = "robotoy_active")]
        domain: DomainId,
        #[arg(long, default_value_t = 1.0)]
        speed: f64,
        #[arg(long, default_value_t = 0)]
        trial: usize,
    },
    /// Render bias and MSE panels from a results CSV.
    Plot {
        #[arg(long)]
        results: PathBuf,
    },
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let text = match &cli.config {
        Some(path) => Some(fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?),
        None => None,
    };
    let mut config = ExperimentConfig::load(cli.profile, text.as_deref(), &cli.overrides)?;
    if let Some(seed) = cli.seed {
        config.base_seed = seed;
    }
    Ok(config)
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
}

fn save_sweep(dir: &Path, config: &ExperimentConfig, result: &SweepResult) -> Result<usize> {
    fs::create_dir_all(dir)?;
    write_text(dir, "config.toml", &config.to_toml()?)?;
    write_results_csv(&result.rows, create(dir, "results.csv")?)?;
    write_summary_csv(&result.summary, create(dir, "summary.csv")?)?;
    for s in &result.summary {
        println!(
            "{:<16} speed {:>5} {:<8} |bias| {:>12.4} (se {:>10.4})  mse {:>14.4}  ok {:>3} failed {:>3}",
            s.domain.as_str(),
            s.speed,
            s.algorithm.as_str(),
            s.abs_bias,
            s.se_bias,
            s.mse,
            s.n_ok,
            s.n_failed
        );
    }
    Ok(result.rows.iter().filter(|r| r.failed()).count())
}

/// Returns the number of fatal failures.
fn run(cli: &Cli) -> Result<usize> {
    let out = &cli.out;
    if let Command::Plot { results } = &cli.command {
        let file = File::open(results).with_context(|| format!("opening {}", results.display()))?;
        let rows = read_results_csv(file)?;
        let result = SweepResult::from_rows(rows);
        fs::create_dir_all(out)?;
        write_text(out, "sweep.svg", &plot::sweep_figure(&result.summary))?;
        println!("wrote {}", out.join("sweep.svg").display());
        return Ok(0);
    }

    let config = load_config(cli)?;
    fs::create_dir_all(out)?;
    match &cli.command {
        Command::Collect { domain, speed, trial } => {
            let (_, beta) = config.policies(*domain)?;
            let env = config.env_config(*domain, *speed, config.trial_seed(*trial));
            let (data, state) = collect(&env, &beta, config.n_episodes)?;
            data.write_csv(create(out, "dataset.csv")?)?;
            fs::write(out.join("state.bin"), snapshot(&state))?;
            write_text(out, "config.toml", &config.to_toml()?)?;
            println!("collected {} episodes of {domain} at speed {speed}", data.len());
            Ok(0)
        }
        Command::Evaluate { data, domain, algorithm, state } => {
            let file = File::open(data).with_context(|| format!("opening {}", data.display()))?;
            let dataset = Dataset::read_csv(*domain, file)?;
            let (pi, _) = config.policies(*domain)?;
            let provenance = Provenance { config_hash: config.hash(), seed: config.base_seed };
            let algorithms = algorithm.map_or_else(|| config.algorithms.clone(), |a| vec![a]);
            let mut forecasts: Vec<Forecast> = Vec::new();
            let mut failures = 0;
            for alg in algorithms {
                match predict(alg, &dataset, &pi, &config.params, config.horizon) {
                    Ok(f) => {
                        let f = f.with_provenance(provenance.clone());
                        f.write_csv(create(out, &format!("forecast_{alg}.csv"))?, dataset.len() as u64 + 1)?;
                        if f.flags.iter().any(|x| nsope::harness::FATAL_FLAGS.contains(&x.as_str())) {
                            failures += 1;
                        }
                        println!("{alg:<8} total {:>14.4} flags [{}]", f.total, f.flags.join(";"));
                        forecasts.push(f);
                    }
                    Err(e) => {
                        failures += 1;
                        println!("{alg:<8} failed: {} ({e})", e.kind());
                    }
                }
            }
            serde_json::to_writer_pretty(create(out, "forecasts.json")?, &forecasts)?;
            if let Some(path) = state {
                let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
                restore(&bytes)?;
                let seed = derive(config.base_seed, tag::ORACLE, 0);
                let truth = ground_truth(&bytes, &pi, config.horizon, config.n_future_clones, seed)?;
                println!("truth    total {:>14.4} (se {:.4})", truth.mean, truth.se);
            }
            Ok(failures)
        }
        Command::Sweep => {
            let result = run_sweep(&config, cli.jobs)?;
            save_sweep(out, &config, &result)
        }
        Command::Ablate { param, values } => {
            let mut failures = 0;
            for (value, result) in ablation_sweep(&config, *param, values, cli.jobs)? {
                println!("== {} = {value}", param.as_str());
                failures += save_sweep(&out.join(format!("{}_{value}", param.as_str())), &config, &result)?;
            }
            Ok(failures)
        }
        Command::Demo { domain, speed, trial } => {
            let demo = run_demo(&config, *domain, *speed, *trial)?;
            demo.write_true_csv(create(out, "demo_true.csv")?)?;
            demo.write_estimates_csv(create(out, "demo_estimates.csv")?)?;
            demo.write_forecast_csv(create(out, "demo_forecast.csv")?)?;
            let [truth, estimates, forecast] = plot::demo_figures(&demo);
            write_text(out, "demo_true.svg", &truth)?;
            write_text(out, "demo_estimates.svg", &estimates)?;
            write_text(out, "demo_forecast.svg", &forecast)?;
            println!("residual sd: raw {:.4}, denoised {:.4}", demo.raw_residual_sd, demo.denoised_residual_sd);
            println!("slope: past {:.6}, forecast {:.6}", demo.past_slope, demo.forecast_slope);
            Ok(usize::from(!demo.forecast_flags.is_empty()))
        }
        Command::Plot { .. } => unreachable!(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(0) => ExitCode::SUCCESS,
        Ok(n) => {
            eprintln!("{n} fatal failure(s) recorded");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
