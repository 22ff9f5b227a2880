//! Experiment configuration documents and the shipped presets.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::TruthKind;
use crate::monitors::MonitorConfig;
use crate::rng::derive_seed;
use crate::sensing::Ensemble;
use crate::solver::{InitKind, SolverConfig};

/// A scalar or a list of scalars; sweeps iterate the list, single runs take
/// the first entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn values(&self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaUnits {
    #[default]
    Absolute,
    /// Multiples of `||X||`.
    XNorm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    pub instance: u64,
    pub init: u64,
    #[serde(default = "one")]
    pub repetitions: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stopping {
    #[serde(default)]
    pub loss: Option<f64>,
    /// Threshold on the relative test error.
    #[serde(default)]
    pub test_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorSettings {
    #[serde(default = "yes")]
    pub enabled: bool,
    /// Write one JSONL record per check; otherwise only the summary counts.
    #[serde(default = "yes")]
    pub write_records: bool,
    #[serde(default, flatten)]
    pub config: MonitorConfig,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseSettings {
    #[serde(default = "default_angle")]
    pub angle_threshold: f64,
    #[serde(default = "default_final")]
    pub final_threshold: f64,
}

fn default_angle() -> f64 {
    crate::diagnostics::DEFAULT_ANGLE_THRESHOLD
}

fn default_final() -> f64 {
    crate::diagnostics::DEFAULT_FINAL_THRESHOLD
}

impl Default for PhaseSettings {
    fn default() -> Self {
        Self { angle_threshold: default_angle(), final_threshold: default_final() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectralSettings {
    /// Number of surrogate/GD steps compared.
    pub t_max: usize,
    /// Restricted isometry constant used in the error bound; estimated at
    /// rank 2 when absent.
    #[serde(default)]
    pub delta1_hat: Option<f64>,
    #[serde(default = "default_safety")]
    pub safety_factor: f64,
    #[serde(default = "default_rip_trials")]
    pub rip_trials: usize,
}

fn default_safety() -> f64 {
    2.0
}

fn default_rip_trials() -> usize {
    200
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LazyRichSettings {
    pub alpha_small: f64,
    pub alpha_large: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RipSettings {
    pub rank: usize,
    pub trials: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n: usize,
    pub r_star: usize,
    #[serde(default)]
    pub truth: TruthKind,
    #[serde(default)]
    pub ensemble: Ensemble,
    pub r: OneOrMany<usize>,
    /// Defaults to `10 n r_star`.
    #[serde(default)]
    pub m: Option<usize>,
    #[serde(default = "default_mu")]
    pub mu: f64,
    pub alpha: OneOrMany<f64>,
    #[serde(default)]
    pub alpha_units: AlphaUnits,
    #[serde(default)]
    pub init_kind: InitKind,
    pub seeds: Seeds,
    pub max_iters: usize,
    #[serde(default = "one")]
    pub record_stride: usize,
    #[serde(default)]
    pub stopping: Stopping,
    #[serde(default)]
    pub monitors: Option<MonitorSettings>,
    #[serde(default)]
    pub phases: PhaseSettings,
    #[serde(default)]
    pub spectral: Option<SpectralSettings>,
    #[serde(default)]
    pub lazy_vs_rich: Option<LazyRichSettings>,
    #[serde(default)]
    pub rip: Option<RipSettings>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn default_mu() -> f64 {
    0.25
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be positive and finite (got {v})")))
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn measurements(&self) -> usize {
        self.m.unwrap_or(10 * self.n * self.r_star)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.r_star == 0 || self.r_star > self.n {
            return Err(Error::Config(format!("need 1 <= r_star <= n (got n = {}, r_star = {})", self.n, self.r_star)));
        }
        if self.measurements() == 0 {
            return Err(Error::Config("m must be >= 1".into()));
        }
        let rs = self.r.values();
        if rs.is_empty() || rs.contains(&0) {
            return Err(Error::Config("r values must be a non-empty list of positive integers".into()));
        }
        let alphas = self.alpha.values();
        if alphas.is_empty() {
            return Err(Error::Config("alpha list is empty".into()));
        }
        for a in alphas {
            positive("alpha", a)?;
        }
        if !(self.mu >= 0.0) || !self.mu.is_finite() {
            return Err(Error::Config(format!("mu must be finite and >= 0 (got {})", self.mu)));
        }
        if self.seeds.repetitions == 0 {
            return Err(Error::Config("repetition count must be >= 1".into()));
        }
        if self.record_stride == 0 {
            return Err(Error::Config("record_stride must be >= 1".into()));
        }
        if let Some(l) = self.stopping.loss {
            positive("stopping.loss", l)?;
        }
        if let Some(l) = self.stopping.test_error {
            positive("stopping.test_error", l)?;
        }
        if self.init_kind == InitKind::Orthonormal && rs.iter().any(|&r| r != self.n) {
            return Err(Error::Config("orthonormal initialization needs r = n".into()));
        }
        if let Some(s) = &self.spectral {
            if let Some(d) = s.delta1_hat {
                if !(d >= 0.0) {
                    return Err(Error::Config(format!("spectral.delta1_hat must be >= 0 (got {d})")));
                }
            }
            positive("spectral.safety_factor", s.safety_factor)?;
        }
        if let Some(l) = &self.lazy_vs_rich {
            positive("lazy_vs_rich.alpha_small", l.alpha_small)?;
            positive("lazy_vs_rich.alpha_large", l.alpha_large)?;
        }
        if let Some(m) = &self.monitors {
            m.config.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(())
    }

    /// Fully resolved settings for one run.
    pub fn run_spec(&self, r: usize, alpha: f64, repetition: usize) -> RunSpec {
        let instance_seed = derive_seed(self.seeds.instance, repetition as u64);
        RunSpec {
            n: self.n,
            r_star: self.r_star,
            truth: self.truth,
            ensemble: self.ensemble,
            m: self.measurements(),
            mu: self.mu,
            r,
            alpha,
            alpha_units: self.alpha_units,
            init_kind: self.init_kind,
            repetition,
            instance_seed,
            truth_seed: derive_seed(instance_seed, 1),
            operator_seed: derive_seed(instance_seed, 2),
            init_seed: derive_seed(self.seeds.init, repetition as u64),
            max_iters: self.max_iters,
            record_stride: self.record_stride,
            stopping: self.stopping.clone(),
            phases: self.phases.clone(),
            monitors: self.monitors.as_ref().filter(|m| m.enabled).map(|m| m.config.clone()),
        }
    }

    /// Stable 12-hex-digit identifier of the document.
    pub fn hash(&self) -> String {
        short_hash(self)
    }
}

pub(crate) fn short_hash<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("configs serialize");
    hex::encode(Sha256::digest(&bytes))[..12].to_string()
}

/// One trajectory: every seed and setting needed to reproduce it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub n: usize,
    pub r_star: usize,
    pub truth: TruthKind,
    pub ensemble: Ensemble,
    pub m: usize,
    pub mu: f64,
    pub r: usize,
    /// As configured, in `alpha_units`.
    pub alpha: f64,
    pub alpha_units: AlphaUnits,
    pub init_kind: InitKind,
    pub repetition: usize,
    pub instance_seed: u64,
    pub truth_seed: u64,
    pub operator_seed: u64,
    pub init_seed: u64,
    pub max_iters: usize,
    pub record_stride: usize,
    pub stopping: Stopping,
    pub phases: PhaseSettings,
    pub monitors: Option<MonitorConfig>,
}

impl RunSpec {
    pub fn id(&self) -> String {
        short_hash(self)
    }

    pub fn absolute_alpha(&self, x_norm: f64) -> f64 {
        match self.alpha_units {
            AlphaUnits::Absolute => self.alpha,
            AlphaUnits::XNorm => self.alpha * x_norm,
        }
    }

    pub fn solver_config(&self, x_norm: f64) -> SolverConfig {
        SolverConfig {
            r: self.r,
            mu: self.mu,
            alpha: self.absolute_alpha(x_norm),
            init_kind: self.init_kind,
            max_iters: self.max_iters,
            record_stride: self.record_stride,
            stop_loss: self.stopping.loss,
            stop_test_error: self.stopping.test_error,
            seed: self.init_seed,
        }
    }
}

/// Which subcommand a preset is meant for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PresetKind {
    Run,
    SweepAlpha,
    SweepR,
    CompareSpectral,
    LazyVsRich,
}

pub const PRESET_NAMES: [&str; 12] = [
    "fig1", "fig1-desk", "fig2", "fig2-desk", "fig4", "fig4-desk", "fig5", "fig5-desk", "fig6", "fig6-desk", "fig7",
    "fig7-desk",
];

fn base(n: usize, r_star: usize, r: OneOrMany<usize>, alpha: OneOrMany<f64>, max_iters: usize) -> ExperimentConfig {
    ExperimentConfig {
        n,
        r_star,
        truth: TruthKind::Orthonormal,
        ensemble: Ensemble::default(),
        r,
        m: Some(10 * n * r_star),
        mu: 0.25,
        alpha,
        alpha_units: AlphaUnits::Absolute,
        init_kind: InitKind::GaussianIid,
        seeds: Seeds { instance: 20_220_101, init: 7, repetitions: 1 },
        max_iters,
        record_stride: 1,
        stopping: Stopping::default(),
        monitors: None,
        phases: PhaseSettings::default(),
        spectral: None,
        lazy_vs_rich: None,
        rip: None,
        output_dir: None,
    }
}

/// Initialization scale of the overparameterization experiments at `n = 200`.
pub const FULL_ALPHA: f64 = 1.0 / (70.0 * 200.0 * 200.0);

/// Named configuration for each figure at full (`figN`) and desk
/// (`figN-desk`) scale. Desk presets use `n = 60`, `r_star = 3` and keep
/// the full-scale `ln(||X|| / alpha)`.
pub fn preset(name: &str) -> Result<(ExperimentConfig, PresetKind)> {
    use OneOrMany::{Many, One};
    let (cfg, kind) = match name {
        "fig1" => {
            let mut c = base(200, 1, One(1), One(FULL_ALPHA), 400);
            c.spectral = Some(SpectralSettings { t_max: 400, delta1_hat: None, safety_factor: 2.0, rip_trials: 200 });
            (c, PresetKind::CompareSpectral)
        }
        "fig1-desk" => {
            let mut c = base(60, 3, One(6), One(1e-6), 300);
            c.alpha_units = AlphaUnits::XNorm;
            c.spectral = Some(SpectralSettings { t_max: 300, delta1_hat: None, safety_factor: 2.0, rip_trials: 200 });
            (c, PresetKind::CompareSpectral)
        }
        "fig2" => (base(200, 5, One(60), One(FULL_ALPHA), 3000), PresetKind::Run),
        "fig2-desk" => {
            let mut c = base(60, 3, One(6), One(1e-6), 1500);
            c.alpha_units = AlphaUnits::XNorm;
            (c, PresetKind::Run)
        }
        "fig4" => (base(200, 5, Many(vec![5, 10, 20, 50, 100, 200, 250]), One(FULL_ALPHA), 2000), PresetKind::SweepR),
        "fig4-desk" => (base(60, 3, Many(vec![3, 6, 12, 24, 60]), One(FULL_ALPHA), 1500), PresetKind::SweepR),
        "fig5" => {
            let mut c = base(200, 5, One(180), Many(vec![1e-2, 1e-3, 1e-4, 1e-5, 1e-6]), 100_000);
            c.stopping.loss = Some(0.5e-9);
            (c, PresetKind::SweepAlpha)
        }
        "fig5-desk" => {
            let mut c = base(60, 3, One(54), Many(vec![1e-3, 1e-4, 1e-5, 1e-6]), 20_000);
            c.alpha_units = AlphaUnits::XNorm;
            c.stopping.loss = Some(0.5e-9);
            c.seeds.repetitions = 5;
            c.record_stride = 10;
            (c, PresetKind::SweepAlpha)
        }
        "fig6" => {
            let mut c = base(200, 5, One(180), One(1e-3), 400_000);
            c.record_stride = 100;
            c.lazy_vs_rich = Some(LazyRichSettings { alpha_small: 1e-3, alpha_large: 0.5 });
            (c, PresetKind::LazyVsRich)
        }
        "fig6-desk" => {
            let mut c = base(60, 3, One(54), One(1e-3), 3000);
            c.alpha_units = AlphaUnits::XNorm;
            c.lazy_vs_rich = Some(LazyRichSettings { alpha_small: 1e-3, alpha_large: 0.5 });
            (c, PresetKind::LazyVsRich)
        }
        "fig7" => {
            let mut c = base(200, 5, Many(vec![5, 10, 15, 20, 25, 30]), One(1e-3), 5000);
            c.seeds.repetitions = 10;
            // A squared Frobenius error of 1e-4, relative to ||X X^T||_F = sqrt(r_star).
            c.stopping.test_error = Some(1e-2 / 5f64.sqrt());
            (c, PresetKind::SweepR)
        }
        "fig7-desk" => {
            let mut c = base(60, 3, Many(vec![3, 6, 9, 12, 15, 18]), One(1e-3), 3000);
            c.seeds.repetitions = 5;
            c.stopping.test_error = Some(1e-2 / 3f64.sqrt());
            (c, PresetKind::SweepR)
        }
        other => {
            return Err(Error::Config(format!("unknown preset '{other}'; known: {}", PRESET_NAMES.join(", "))));
        }
    };
    cfg.validate()?;
    Ok((cfg, kind))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_is_valid() {
        for name in PRESET_NAMES {
            preset(name).unwrap();
        }
        assert!(matches!(preset("fig3"), Err(Error::Config(_))));
    }

    #[test]
    fn full_scale_alpha_is_exact() {
        let (c, _) = preset("fig4").unwrap();
        assert_eq!(c.alpha.values(), vec![1.0 / 2_800_000.0]);
        assert_eq!(c.measurements(), 50 * 200);
    }

    #[test]
    fn json_round_trip_and_defaults() {
        let text = r#"{"n": 10, "r_star": 2, "r": [2, 4], "alpha": 0.001,
                       "seeds": {"instance": 1, "init": 2}, "max_iters": 5}"#;
        let c = ExperimentConfig::from_json(text).unwrap();
        assert_eq!(c.measurements(), 200);
        assert_eq!(c.mu, 0.25);
        assert_eq!(c.r.values(), vec![2, 4]);
        assert_eq!(c.seeds.repetitions, 1);
        let back = ExperimentConfig::from_json(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn invalid_documents_are_config_errors() {
        let bad = [
            r#"{"n": 10, "r_star": 2, "r": 2, "alpha": -1, "seeds": {"instance": 1, "init": 2}, "max_iters": 5}"#,
            r#"{"n": 10, "r_star": 2, "r": 2, "alpha": 1, "seeds": {"instance": 1, "init": 2, "repetitions": 0}, "max_iters": 5}"#,
            r#"{"n": 10, "r_star": 2, "r": 2, "alpha": 1, "m": 0, "seeds": {"instance": 1, "init": 2}, "max_iters": 5}"#,
            r#"{"n": 10, "r_star": 2, "r": 2, "alpha": 1, "seeds": {"instance": 1, "init": 2}, "max_iters": 5, "bogus": 1}"#,
            r#"{"n": 10"#,
        ];
        for text in bad {
            assert!(matches!(ExperimentConfig::from_json(text), Err(Error::Config(_))), "{text}");
        }
    }

    #[test]
    fn run_ids_depend_on_every_seed() {
        let (c, _) = preset("fig7-desk").unwrap();
        let a = c.run_spec(3, 1e-3, 0);
        let b = c.run_spec(3, 1e-3, 1);
        assert_ne!(a.id(), b.id());
        assert_ne!(a.init_seed, b.init_seed);
        assert_eq!(a.id(), c.run_spec(3, 1e-3, 0).id());
    }
}
