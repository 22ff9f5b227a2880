use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lowrank_phases::harness::{self, ExperimentConfig, PresetKind};
use lowrank_phases::Error;

#[derive(Parser)]
#[command(name = "lowrank-phases", version, about = "Gradient descent phases in low-rank matrix sensing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Single trajectory: CSV, summary and monitor records.
    Run(Common),
    /// One run per alpha and repetition; fits the log-log slope.
    SweepAlpha(Common),
    /// One run per width r and repetition; iterations to alignment and to the error threshold.
    SweepR(Common),
    /// Gradient descent against the power-method surrogate.
    CompareSpectral(Common),
    /// Small and large initialization under the same budget.
    LazyVsRich(Common),
    /// Sampled restricted-isometry constant of the operator.
    RipEstimate(Common),
}

#[derive(Args)]
struct Common {
    /// JSON experiment configuration.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Shipped configuration, e.g. fig2-desk.
    #[arg(long)]
    preset: Option<String>,
    /// Output root; defaults to the config's output_dir or ./out.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for sweeps (0 = one per core).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_DIVERGED: u8 = 3;

fn load(common: &Common, expected: Option<PresetKind>) -> Result<ExperimentConfig, Error> {
    match (&common.config, &common.preset) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            ExperimentConfig::from_json(&text)
        }
        (None, Some(name)) => {
            let (cfg, kind) = harness::preset(name)?;
            if expected.is_some_and(|e| e != kind) {
                log::warn!("preset '{name}' is meant for a different subcommand ({kind:?})");
            }
            Ok(cfg)
        }
        (None, None) => Err(Error::Config("one of --config or --preset is required".into())),
    }
}

fn out_dir(common: &Common, cfg: &ExperimentConfig) -> PathBuf {
    common.out.clone().or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| PathBuf::from("out"))
}

fn report(dir: &Path, diverged: bool) -> u8 {
    println!("{}", dir.display());
    if diverged {
        eprintln!("error: at least one run diverged");
        EXIT_DIVERGED
    } else {
        0
    }
}

fn dispatch(command: Command) -> Result<u8, Error> {
    let code = match command {
        Command::Run(c) => {
            let cfg = load(&c, Some(PresetKind::Run))?;
            let (dir, art) = harness::cmd_run(&cfg, &out_dir(&c, &cfg))?;
            let s = &art.summary;
            eprintln!(
                "iterations {} | loss {:.3e} | relative test error {:.3e} | phases {:?}",
                s.iterations, s.final_loss, s.final_test_error_rel, s.phases.phase_lengths
            );
            if let Some(v) = s.monitor_violations {
                eprintln!("monitor violations: {v}");
            }
            report(&dir, s.diverged)
        }
        Command::SweepAlpha(c) => {
            let cfg = load(&c, Some(PresetKind::SweepAlpha))?;
            let (dir, sweep) = harness::cmd_sweep_alpha(&cfg, &out_dir(&c, &cfg), c.jobs)?;
            for p in &sweep.table {
                eprintln!("alpha {:.3e}: mean relative test error {:.4e}", p.alpha, p.mean_test_error_rel);
            }
            match sweep.slope {
                Some(s) => eprintln!("log-log slope {s:.4}"),
                None => eprintln!("log-log slope: undefined"),
            }
            report(&dir, sweep.runs.iter().any(|r| r.diverged))
        }
        Command::SweepR(c) => {
            let cfg = load(&c, Some(PresetKind::SweepR))?;
            let (dir, sweep) = harness::cmd_sweep_r(&cfg, &out_dir(&c, &cfg), c.jobs)?;
            for p in &sweep.table {
                eprintln!(
                    "r {:>4}: alignment {:?} | threshold {:?}",
                    p.r, p.alignment.mean, p.threshold.mean
                );
            }
            report(&dir, sweep.runs.iter().any(|r| r.diverged))
        }
        Command::CompareSpectral(c) => {
            let cfg = load(&c, Some(PresetKind::CompareSpectral))?;
            let (dir, rep) = harness::cmd_compare_spectral(&cfg, &out_dir(&c, &cfg))?;
            eprintln!(
                "t* empirical {:?} | t* lower bound {} | early angle gap {:?}",
                rep.bounds.t_star_empirical, rep.bounds.t_star_lower, rep.max_angle_gap_early
            );
            report(&dir, false)
        }
        Command::LazyVsRich(c) => {
            let cfg = load(&c, Some(PresetKind::LazyVsRich))?;
            let (dir, res) = harness::cmd_lazy_vs_rich(&cfg, &out_dir(&c, &cfg), c.jobs)?;
            for arm in [&res.small, &res.large] {
                eprintln!(
                    "alpha {:.3e}: loss decades {:.2} | relative test error {:.3e} -> {:.3e}",
                    arm.alpha, arm.loss_decades, arm.initial_test_error_rel, arm.final_test_error_rel
                );
            }
            report(&dir, res.small.diverged || res.large.diverged)
        }
        Command::RipEstimate(c) => {
            let cfg = load(&c, None)?;
            let (dir, rep) = harness::cmd_rip_estimate(&cfg, &out_dir(&c, &cfg))?;
            eprintln!("rank {} delta lower bound {:.4}", rep.estimate.rank, rep.estimate.delta_lower);
            report(&dir, false)
        }
    };
    Ok(code)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Config(_) | Error::InvalidArgument(_) | Error::Json(_) => EXIT_CONFIG,
                Error::Diverged { .. } => EXIT_DIVERGED,
                _ => EXIT_FAILURE,
            })
        }
    }
}
