//! Experiment runner behind the command-line tool: single runs, parameter
//! sweeps, the gradient-descent/power-method comparison, the lazy-vs-rich
//! pair and operator audits.
//!
//! Every command writes into `<out>/<hash>/`, where `hash` identifies the
//! command and configuration. Sweeps put each run under `runs/<run id>/`
//! and assemble `index.json` once all runs have finished.

pub mod config;
pub mod output;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use config::{
    preset, AlphaUnits, ExperimentConfig, LazyRichSettings, MonitorSettings, OneOrMany, PhaseSettings, PresetKind,
    RipSettings, RunSpec, Seeds, SpectralSettings, Stopping, PRESET_NAMES,
};

use crate::diagnostics::{detect_phases, PhaseReport};
use crate::error::{Error, Result};
use crate::model::{GroundTruth, InstanceMetadata, ProblemInstance};
use crate::monitors::{Lemma, LemmaSummary, MonitorObserver, MonitorReport};
use crate::rng::derive_seed;
use crate::sensing::{RipEstimate, SensingOperator};
use crate::solver::{run_gd, run_gd_observed, StopReason, TrajectoryRecord};
use crate::spectral::{compare_gd_power, spectral_phase_bounds, SpectralPhaseBound};
use crate::SCHEMA;

pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const MONITOR_FILE: &str = "monitors.jsonl";
pub const INDEX_FILE: &str = "index.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub schema: String,
    pub run_id: String,
    pub config: RunSpec,
    pub alpha_absolute: f64,
    pub instance: InstanceMetadata,
    pub final_loss: f64,
    pub final_test_error: f64,
    pub final_test_error_rel: f64,
    pub iterations: usize,
    pub stop_reason: StopReason,
    pub diverged: bool,
    pub phases: PhaseReport,
    pub wall_time_s: f64,
    /// Total violated inequalities; absent when monitors were off.
    pub monitor_violations: Option<usize>,
    /// Checks whose preconditions held; absent when monitors were off.
    pub monitor_applicable: Option<usize>,
    pub monitor_summary: Option<BTreeMap<Lemma, LemmaSummary>>,
}

/// Everything produced by one trajectory.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub summary: RunSummary,
    pub record: TrajectoryRecord,
    pub monitors: Option<MonitorReport>,
}

impl RunArtifacts {
    pub fn csv(&self) -> Result<Vec<u8>> {
        output::trajectory_csv(&self.record.rows)
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        output::write_bytes(&dir.join(TRAJECTORY_FILE), &self.csv()?)?;
        output::write_json(&dir.join(SUMMARY_FILE), &self.summary)?;
        if let Some(report) = &self.monitors {
            if !report.records.is_empty() {
                output::write_bytes(&dir.join(MONITOR_FILE), report.to_jsonl()?.as_bytes())?;
            }
        }
        Ok(())
    }
}

pub fn build_instance(spec: &RunSpec) -> Result<ProblemInstance> {
    let truth = GroundTruth::generate(spec.n, spec.r_star, spec.truth, spec.truth_seed)?;
    let op = SensingOperator::with_ensemble(spec.n, spec.m, spec.operator_seed, spec.ensemble)?;
    ProblemInstance::new(truth, op)
}

/// Runs one trajectory. Monitor records are kept only when
/// `keep_monitor_records` is set; the summary counts are always kept.
pub fn execute_run(spec: &RunSpec, keep_monitor_records: bool) -> Result<RunArtifacts> {
    let inst = build_instance(spec)?;
    execute_on(&inst, spec, keep_monitor_records)
}

pub fn execute_on(inst: &ProblemInstance, spec: &RunSpec, keep_monitor_records: bool) -> Result<RunArtifacts> {
    let x_norm = inst.truth().sigma_max();
    let solver = spec.solver_config(x_norm);
    let start = Instant::now();
    let (outcome, monitors) = match &spec.monitors {
        Some(mcfg) => {
            let mut obs = MonitorObserver::new(inst, solver.mu, solver.alpha, mcfg.clone())?;
            if !keep_monitor_records {
                obs = obs.summary_only();
            }
            let outcome = run_gd_observed(inst, &solver, &mut obs)?;
            (outcome, Some(obs.into_report()))
        }
        None => (run_gd(inst, &solver)?, None),
    };
    let wall_time_s = start.elapsed().as_secs_f64();
    let record = outcome.record;
    let last = record.last();
    let phases = detect_phases(&record, inst.truth(), spec.phases.angle_threshold, spec.phases.final_threshold);
    let summary = RunSummary {
        schema: SCHEMA.into(),
        run_id: spec.id(),
        config: spec.clone(),
        alpha_absolute: solver.alpha,
        instance: inst.metadata(),
        final_loss: last.loss,
        final_test_error: last.test_error,
        final_test_error_rel: last.test_error_rel,
        iterations: record.iterations,
        stop_reason: record.stop_reason,
        diverged: record.diverged,
        phases,
        wall_time_s,
        monitor_violations: monitors.as_ref().map(|m| m.total_violations()),
        monitor_applicable: monitors.as_ref().map(|m| m.total_applicable()),
        monitor_summary: monitors.as_ref().map(|m| m.summary.clone()),
    };
    Ok(RunArtifacts { summary, record, monitors })
}

/// Directory of a command's outputs.
pub fn command_dir(out: &Path, command: &str, cfg: &ExperimentConfig) -> PathBuf {
    let mut keyed = cfg.clone();
    keyed.output_dir = None;
    out.join(config::short_hash(&(command, keyed)))
}

/// Runs `specs` on a pool of `jobs` workers (0 = one per core); results
/// come back in input order.
fn run_pool<T, F>(jobs: usize, specs: &[RunSpec], f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&RunSpec) -> Result<T> + Sync,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?;
    pool.install(|| specs.par_iter().map(&f).collect())
}

fn sweep_run(spec: &RunSpec, dir: &Path) -> Result<RunArtifacts> {
    let art = execute_run(spec, false)?;
    art.write(&dir.join("runs").join(spec.id()))?;
    Ok(RunArtifacts { record: TrajectoryRecord { rows: Vec::new(), ..art.record }, ..art })
}

/// Output of `run`.
pub fn cmd_run(cfg: &ExperimentConfig, out: &Path) -> Result<(PathBuf, RunArtifacts)> {
    let dir = command_dir(out, "run", cfg);
    let spec = cfg.run_spec(cfg.r.values()[0], cfg.alpha.values()[0], 0);
    let art = execute_run(&spec, true)?;
    art.write(&dir)?;
    Ok((dir, art))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaRun {
    pub alpha: f64,
    pub alpha_absolute: f64,
    pub repetition: usize,
    pub run_id: String,
    pub final_loss: f64,
    pub final_test_error_rel: f64,
    pub iterations: usize,
    pub stop_reason: StopReason,
    pub diverged: bool,
    pub monitor_violations: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaPoint {
    pub alpha: f64,
    pub runs: usize,
    pub mean_test_error_rel: f64,
    pub min_test_error_rel: f64,
    pub max_test_error_rel: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaSweep {
    pub schema: String,
    pub command: String,
    pub config: ExperimentConfig,
    pub runs: Vec<AlphaRun>,
    /// One row per alpha, in ascending alpha.
    pub table: Vec<AlphaPoint>,
    /// Least-squares slope of `ln(mean error)` against `ln(alpha)`; absent
    /// with fewer than two distinct alphas.
    pub slope: Option<f64>,
    /// Mean errors strictly increase with alpha.
    pub strictly_monotone: bool,
}

/// Least-squares slope of `y` against `x`; `None` when `x` is constant.
pub fn fit_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn cmd_sweep_alpha(cfg: &ExperimentConfig, out: &Path, jobs: usize) -> Result<(PathBuf, AlphaSweep)> {
    let dir = command_dir(out, "sweep-alpha", cfg);
    let r = cfg.r.values()[0];
    let mut alphas = cfg.alpha.values();
    alphas.sort_by(f64::total_cmp);
    alphas.dedup();
    let specs: Vec<RunSpec> = alphas
        .iter()
        .flat_map(|&a| (0..cfg.seeds.repetitions).map(move |rep| (a, rep)))
        .map(|(a, rep)| cfg.run_spec(r, a, rep))
        .collect();
    let arts = run_pool(jobs, &specs, |s| sweep_run(s, &dir))?;
    let runs: Vec<AlphaRun> = specs
        .iter()
        .zip(&arts)
        .map(|(s, a)| AlphaRun {
            alpha: s.alpha,
            alpha_absolute: a.summary.alpha_absolute,
            repetition: s.repetition,
            run_id: s.id(),
            final_loss: a.summary.final_loss,
            final_test_error_rel: a.summary.final_test_error_rel,
            iterations: a.summary.iterations,
            stop_reason: a.summary.stop_reason,
            diverged: a.summary.diverged,
            monitor_violations: a.summary.monitor_violations,
        })
        .collect();
    let table: Vec<AlphaPoint> = alphas
        .iter()
        .map(|&alpha| {
            let errs: Vec<f64> =
                runs.iter().filter(|r| r.alpha == alpha).map(|r| r.final_test_error_rel).collect();
            AlphaPoint {
                alpha,
                runs: errs.len(),
                mean_test_error_rel: mean(&errs),
                min_test_error_rel: errs.iter().copied().fold(f64::INFINITY, f64::min),
                max_test_error_rel: errs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            }
        })
        .collect();
    let lx: Vec<f64> = table.iter().map(|p| p.alpha.ln()).collect();
    let ly: Vec<f64> = table.iter().map(|p| p.mean_test_error_rel.ln()).collect();
    let slope = fit_slope(&lx, &ly);
    let strictly_monotone = table.windows(2).all(|w| w[0].mean_test_error_rel < w[1].mean_test_error_rel);
    let sweep = AlphaSweep {
        schema: SCHEMA.into(),
        command: "sweep-alpha".into(),
        config: cfg.clone(),
        runs,
        table,
        slope,
        strictly_monotone,
    };
    let rows: Vec<Vec<f64>> = sweep
        .table
        .iter()
        .map(|p| vec![p.alpha, p.mean_test_error_rel, p.min_test_error_rel, p.max_test_error_rel])
        .collect();
    output::write_bytes(
        &dir.join("alpha_sweep.csv"),
        &output::table_csv(&["alpha", "mean_test_error_rel", "min_test_error_rel", "max_test_error_rel"], &rows)?,
    )?;
    output::write_json(&dir.join(INDEX_FILE), &sweep)?;
    Ok((dir, sweep))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RRun {
    pub r: usize,
    pub repetition: usize,
    pub run_id: String,
    /// First `t` with `angle_L_Lt <= angle_threshold`.
    pub iterations_to_alignment: Option<usize>,
    /// First `t` with relative test error at most the sweep threshold.
    pub iterations_to_threshold: Option<usize>,
    pub final_test_error_rel: f64,
    pub iterations: usize,
    pub diverged: bool,
    pub monitor_violations: Option<usize>,
}

/// Mean, min and max over the repetitions that reached the event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountStats {
    pub reached: usize,
    pub mean: Option<f64>,
    pub min: Option<usize>,
    pub max: Option<usize>,
}

impl CountStats {
    fn of(values: impl Iterator<Item = Option<usize>>) -> Self {
        let hits: Vec<usize> = values.flatten().collect();
        Self {
            reached: hits.len(),
            mean: (!hits.is_empty()).then(|| hits.iter().sum::<usize>() as f64 / hits.len() as f64),
            min: hits.iter().copied().min(),
            max: hits.iter().copied().max(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RPoint {
    pub r: usize,
    pub runs: usize,
    pub alignment: CountStats,
    pub threshold: CountStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RSweep {
    pub schema: String,
    pub command: String,
    pub config: ExperimentConfig,
    pub angle_threshold: f64,
    pub test_error_threshold: f64,
    pub runs: Vec<RRun>,
    pub table: Vec<RPoint>,
}

pub fn cmd_sweep_r(cfg: &ExperimentConfig, out: &Path, jobs: usize) -> Result<(PathBuf, RSweep)> {
    let dir = command_dir(out, "sweep-r", cfg);
    let alpha = cfg.alpha.values()[0];
    let rs = cfg.r.values();
    let angle_threshold = cfg.phases.angle_threshold;
    let test_error_threshold = cfg.stopping.test_error.unwrap_or(cfg.phases.final_threshold);
    let specs: Vec<RunSpec> = rs
        .iter()
        .flat_map(|&r| (0..cfg.seeds.repetitions).map(move |rep| (r, rep)))
        .map(|(r, rep)| cfg.run_spec(r, alpha, rep))
        .collect();
    let runs = run_pool(jobs, &specs, |s| {
        let art = execute_run(s, false)?;
        art.write(&dir.join("runs").join(s.id()))?;
        let rows = &art.record.rows;
        Ok(RRun {
            r: s.r,
            repetition: s.repetition,
            run_id: s.id(),
            iterations_to_alignment: rows.iter().find(|row| row.angle_l_lt <= angle_threshold).map(|row| row.t),
            iterations_to_threshold: rows
                .iter()
                .find(|row| row.test_error_rel <= test_error_threshold)
                .map(|row| row.t),
            final_test_error_rel: art.summary.final_test_error_rel,
            iterations: art.summary.iterations,
            diverged: art.summary.diverged,
            monitor_violations: art.summary.monitor_violations,
        })
    })?;
    let mut distinct = rs.clone();
    distinct.dedup();
    let table: Vec<RPoint> = distinct
        .iter()
        .map(|&r| {
            let sel: Vec<&RRun> = runs.iter().filter(|x| x.r == r).collect();
            RPoint {
                r,
                runs: sel.len(),
                alignment: CountStats::of(sel.iter().map(|x| x.iterations_to_alignment)),
                threshold: CountStats::of(sel.iter().map(|x| x.iterations_to_threshold)),
            }
        })
        .collect();
    let sweep = RSweep {
        schema: SCHEMA.into(),
        command: "sweep-r".into(),
        config: cfg.clone(),
        angle_threshold,
        test_error_threshold,
        runs,
        table,
    };
    let opt = |v: Option<f64>| v.unwrap_or(f64::NAN);
    let rows: Vec<Vec<f64>> = sweep
        .table
        .iter()
        .map(|p| {
            vec![
                p.r as f64,
                opt(p.alignment.mean),
                opt(p.alignment.min.map(|v| v as f64)),
                opt(p.alignment.max.map(|v| v as f64)),
                opt(p.threshold.mean),
                opt(p.threshold.min.map(|v| v as f64)),
                opt(p.threshold.max.map(|v| v as f64)),
            ]
        })
        .collect();
    output::write_bytes(
        &dir.join("r_sweep.csv"),
        &output::table_csv(
            &[
                "r",
                "mean_iters_alignment",
                "min_iters_alignment",
                "max_iters_alignment",
                "mean_iters_threshold",
                "min_iters_threshold",
                "max_iters_threshold",
            ],
            &rows,
        )?,
    )?;
    output::write_json(&dir.join(INDEX_FILE), &sweep)?;
    Ok((dir, sweep))
}

pub const COMPARISON_COLUMNS: [&str; 5] = ["t", "theta_gd", "theta_p", "err_norm", "err_bound"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralReport {
    pub schema: String,
    pub run_id: String,
    pub config: RunSpec,
    pub alpha_absolute: f64,
    pub instance: InstanceMetadata,
    /// Rank-2 estimate used when no `delta1_hat` is configured.
    pub rip: Option<RipEstimate>,
    /// The constant entering the bound: safety factor times the base value.
    pub delta1_used: f64,
    pub bounds: SpectralPhaseBound,
    /// `max |theta_gd - theta_p|` over `t <= t*_empirical / 2`.
    pub max_angle_gap_early: Option<f64>,
    /// `||U_t - U~_t|| <= bound` for every `t <= t*_empirical`.
    pub bound_holds: Option<bool>,
}

/// One row per compared step: `t, theta_gd, theta_p, err_norm, err_bound`.
pub type ComparisonRows = Vec<[f64; 5]>;

pub fn compare_spectral(cfg: &ExperimentConfig) -> Result<(SpectralReport, ComparisonRows)> {
    let spec = cfg.run_spec(cfg.r.values()[0], cfg.alpha.values()[0], 0);
    let inst = build_instance(&spec)?;
    let solver = spec.solver_config(inst.truth().sigma_max());
    let settings = cfg.spectral.clone().unwrap_or(SpectralSettings {
        t_max: cfg.max_iters,
        delta1_hat: None,
        safety_factor: 2.0,
        rip_trials: 200,
    });
    let (base, rip) = match settings.delta1_hat {
        Some(d) => (d, None),
        None => {
            let est = inst.operator().estimate_rip(2.min(cfg.n), settings.rip_trials, derive_seed(spec.operator_seed, 99))?;
            (est.delta_lower, Some(est))
        }
    };
    let delta1_used = settings.safety_factor * base;
    let comparison = compare_gd_power(&inst, &solver, settings.t_max)?;
    let bounds = spectral_phase_bounds(&inst, &solver, delta1_used, &comparison)?;
    let rows: ComparisonRows = (0..comparison.err_norm.len())
        .map(|t| [t as f64, comparison.theta_gd[t], comparison.theta_p[t], comparison.err_norm[t], bounds.e_bound[t]])
        .collect();
    let t_star = bounds.t_star_empirical;
    let max_angle_gap_early = t_star.map(|ts| {
        rows.iter().take_while(|row| 2.0 * row[0] <= ts as f64).map(|row| (row[1] - row[2]).abs()).fold(0.0, f64::max)
    });
    let bound_holds = t_star.map(|ts| rows.iter().take(ts + 1).all(|row| row[3] <= row[4]));
    let report = SpectralReport {
        schema: SCHEMA.into(),
        run_id: spec.id(),
        alpha_absolute: solver.alpha,
        instance: inst.metadata(),
        config: spec,
        rip,
        delta1_used,
        bounds,
        max_angle_gap_early,
        bound_holds,
    };
    Ok((report, rows))
}

pub fn cmd_compare_spectral(cfg: &ExperimentConfig, out: &Path) -> Result<(PathBuf, SpectralReport)> {
    let dir = command_dir(out, "compare-spectral", cfg);
    let (report, rows) = compare_spectral(cfg)?;
    let table: Vec<Vec<f64>> = rows.iter().map(|r| r.to_vec()).collect();
    output::write_bytes(&dir.join("comparison.csv"), &output::table_csv(&COMPARISON_COLUMNS, &table)?)?;
    output::write_json(&dir.join("spectral_bounds.json"), &report)?;
    Ok((dir, report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LazyRichArm {
    pub alpha: f64,
    pub alpha_absolute: f64,
    pub run_id: String,
    pub initial_loss: f64,
    pub final_loss: f64,
    /// `log10(initial_loss / final_loss)`.
    pub loss_decades: f64,
    pub initial_test_error_rel: f64,
    pub final_test_error_rel: f64,
    /// `|final - initial| / initial` for the relative test error.
    pub test_error_rel_change: f64,
    pub iterations: usize,
    pub diverged: bool,
    pub monitor_violations: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LazyVsRich {
    pub schema: String,
    pub command: String,
    pub config: ExperimentConfig,
    pub small: LazyRichArm,
    pub large: LazyRichArm,
}

fn arm(art: &RunArtifacts) -> LazyRichArm {
    let first = &art.record.rows[0];
    let last = art.record.last();
    LazyRichArm {
        alpha: art.summary.config.alpha,
        alpha_absolute: art.summary.alpha_absolute,
        run_id: art.summary.run_id.clone(),
        initial_loss: first.loss,
        final_loss: last.loss,
        loss_decades: (first.loss / last.loss).log10(),
        initial_test_error_rel: first.test_error_rel,
        final_test_error_rel: last.test_error_rel,
        test_error_rel_change: (last.test_error_rel - first.test_error_rel).abs() / first.test_error_rel,
        iterations: art.summary.iterations,
        diverged: art.summary.diverged,
        monitor_violations: art.summary.monitor_violations,
    }
}

/// Two runs with a fixed budget and no early stopping; each arm is written
/// to `small/` and `large/`.
pub fn cmd_lazy_vs_rich(cfg: &ExperimentConfig, out: &Path, jobs: usize) -> Result<(PathBuf, LazyVsRich)> {
    let dir = command_dir(out, "lazy-vs-rich", cfg);
    let settings = cfg
        .lazy_vs_rich
        .clone()
        .ok_or_else(|| Error::Config("lazy-vs-rich needs a 'lazy_vs_rich' section".into()))?;
    let r = cfg.r.values()[0];
    let specs: Vec<RunSpec> = [settings.alpha_small, settings.alpha_large]
        .iter()
        .map(|&a| {
            let mut s = cfg.run_spec(r, a, 0);
            s.stopping = Stopping::default();
            s
        })
        .collect();
    let arts = run_pool(jobs, &specs, |s| execute_run(s, true))?;
    arts[0].write(&dir.join("small"))?;
    arts[1].write(&dir.join("large"))?;
    let result = LazyVsRich {
        schema: SCHEMA.into(),
        command: "lazy-vs-rich".into(),
        config: cfg.clone(),
        small: arm(&arts[0]),
        large: arm(&arts[1]),
    };
    output::write_json(&dir.join(INDEX_FILE), &result)?;
    Ok((dir, result))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RipReport {
    pub schema: String,
    pub n: usize,
    pub m: usize,
    pub operator_seed: u64,
    pub estimate: RipEstimate,
}

pub fn cmd_rip_estimate(cfg: &ExperimentConfig, out: &Path) -> Result<(PathBuf, RipReport)> {
    let dir = command_dir(out, "rip-estimate", cfg);
    let spec = cfg.run_spec(cfg.r.values()[0], cfg.alpha.values()[0], 0);
    let settings = cfg.rip.clone().unwrap_or(RipSettings {
        rank: (2 * cfg.r_star + 1).min(cfg.n),
        trials: 200,
        seed: derive_seed(spec.operator_seed, 99),
    });
    let op = SensingOperator::with_ensemble(spec.n, spec.m, spec.operator_seed, spec.ensemble)?;
    let estimate = op.estimate_rip(settings.rank, settings.trials, settings.seed)?;
    let report = RipReport { schema: SCHEMA.into(), n: spec.n, m: spec.m, operator_seed: spec.operator_seed, estimate };
    output::write_json(&dir.join("rip.json"), &report)?;
    Ok((dir, report))
}
