//! Experiment configuration files.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::process::DriftConvention;
use crate::sampler::{uniform_times, BoundSpec, DEFAULT_MAX_ATTEMPTS, DEFAULT_SUPPORT_MARGIN};
use crate::solver1d::SpatialScheme;
use crate::verify::Problem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProcessKind {
    Ou,
    Wf1d,
    Wf2d,
    #[serde(rename = "custom-1d")]
    Custom1d,
}

impl ProcessKind {
    pub fn section(self) -> &'static str {
        match self {
            ProcessKind::Ou => "ou",
            ProcessKind::Wf1d => "wf1d",
            ProcessKind::Wf2d => "wf2d",
            ProcessKind::Custom1d => "custom-1d",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub process: ProcessKind,
    #[serde(default)]
    pub seed: u64,
    pub time: TimeConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ou: Option<OuParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wf1d: Option<Wf1dParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wf2d: Option<Wf2dParams>,
    #[serde(default, rename = "custom-1d", skip_serializing_if = "Option::is_none")]
    pub custom_1d: Option<Custom1dParams>,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub bound: BoundConfig,
    #[serde(default)]
    pub sample: SampleConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validate: Option<ValidateConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub convergence: Option<ConvergenceConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc: Option<McConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    #[serde(default)]
    pub t0: f64,
    pub t_end: f64,
    /// Number of evenly spaced path times after `t0`.
    pub points: usize,
}

impl TimeConfig {
    pub fn times(&self) -> Vec<f64> {
        uniform_times(self.t0, self.t_end, self.points)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OuParams {
    pub beta: f64,
    pub sigma: f64,
    pub x0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Wf1dParams {
    pub gamma: f64,
    pub x0: f64,
    #[serde(default)]
    pub convention: DriftConvention,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Wf2dParams {
    pub h: f64,
    pub x0: [f64; 2],
    #[serde(default)]
    pub rho: f64,
    #[serde(default)]
    pub convention: DriftConvention,
}

/// `dX = (c0 + c1 X + c2 X² + …) dt + σ dW` against `σ dW`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Custom1dParams {
    pub drift: Vec<f64>,
    pub sigma: f64,
    pub x0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridLayout {
    /// One solve over a fixed window.
    Window,
    /// One solve per proposal path over its range plus padding.
    Padded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// Spatial subintervals (per axis in 2D).
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_layout")]
    pub layout: GridLayout,
    /// Explicit 1D window; defaults to `x0 ± 6σ√T` for O-U-type problems.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<[f64; 2]>,
    /// Padding for the per-path layout.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pad: Option<f64>,
    #[serde(default)]
    pub scheme: SpatialScheme,
    #[serde(default = "default_beta_cap")]
    pub beta_cap: f64,
    /// Distance kept from ±π/2 in angle and logit coordinates.
    #[serde(default = "default_margin")]
    pub margin: f64,
    /// 2D time levels written to `field.csv`; all levels when empty.
    #[serde(default)]
    pub snapshots: Vec<usize>,
}

fn default_m() -> usize {
    300
}
fn default_n() -> usize {
    200
}
fn default_layout() -> GridLayout {
    GridLayout::Window
}
fn default_beta_cap() -> f64 {
    6.0
}
fn default_margin() -> f64 {
    DEFAULT_SUPPORT_MARGIN
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            m: default_m(),
            n: default_n(),
            layout: default_layout(),
            window: None,
            pad: None,
            scheme: SpatialScheme::default(),
            beta_cap: default_beta_cap(),
            margin: default_margin(),
            snapshots: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundKind {
    Analytic,
    Empirical,
    User,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundConfig {
    pub kind: BoundKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_max: Option<f64>,
    #[serde(default = "default_safety")]
    pub safety: f64,
}

fn default_safety() -> f64 {
    1.05
}

impl Default for BoundConfig {
    fn default() -> Self {
        BoundConfig {
            kind: BoundKind::Empirical,
            value: None,
            x_max: None,
            safety: default_safety(),
        }
    }
}

impl BoundConfig {
    pub fn spec(&self) -> Result<BoundSpec> {
        Ok(match self.kind {
            BoundKind::Analytic => BoundSpec::Analytic { x_max: self.x_max },
            BoundKind::Empirical => BoundSpec::Empirical { safety: self.safety },
            BoundKind::User => BoundSpec::User {
                value: self.value.ok_or_else(|| Error::MissingKey("bound.value".into()))?,
            },
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RatioKind {
    /// Closed-form ratio (O-U only).
    Exact,
    Pde,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleConfig {
    #[serde(default = "default_paths")]
    pub paths: usize,
    #[serde(default = "default_attempts")]
    pub max_attempts: u32,
    #[serde(default = "default_ratio")]
    pub ratio: RatioKind,
    #[serde(default)]
    pub force_identity: bool,
    /// Per-path CSVs written; the summary covers all paths.
    #[serde(default = "default_write_paths")]
    pub write_paths: usize,
}

fn default_paths() -> usize {
    100
}
fn default_attempts() -> u32 {
    DEFAULT_MAX_ATTEMPTS
}
fn default_ratio() -> RatioKind {
    RatioKind::Pde
}
fn default_write_paths() -> usize {
    10
}

impl Default for SampleConfig {
    fn default() -> Self {
        SampleConfig {
            paths: default_paths(),
            max_attempts: default_attempts(),
            ratio: default_ratio(),
            force_identity: false,
            write_paths: default_write_paths(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidateConfig {
    pub betas: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceConfig {
    pub problems: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    /// Path time at which accepted samples are pooled.
    pub at: f64,
    /// Accepted samples to collect before stopping.
    #[serde(default = "default_target")]
    pub target_accepted: usize,
    /// Cap on proposal paths drawn while pooling.
    #[serde(default = "default_max_paths")]
    pub max_paths: usize,
    #[serde(default = "default_em_dt")]
    pub em_dt: f64,
    #[serde(default = "default_em_paths")]
    pub em_paths: usize,
    pub threshold: f64,
}

fn default_target() -> usize {
    20_000
}
fn default_max_paths() -> usize {
    1_000_000
}
fn default_em_dt() -> f64 {
    1e-4
}
fn default_em_paths() -> usize {
    100_000
}

impl Config {
    pub fn from_toml_str(s: &str) -> Result<Config> {
        let value: toml::Table = s.parse().map_err(|e: toml::de::Error| Error::Config {
            key: None,
            message: e.message().to_string(),
        })?;
        let cfg: Config = serde_path_to_error::deserialize(value).map_err(|e| {
            let path = e.path().to_string();
            let message = e.inner().message().trim().to_string();
            Error::Config {
                key: Some(offending_key(&path, &message)),
                message,
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Config> {
        let s = std::fs::read_to_string(path)?;
        Config::from_toml_str(&s)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// Re-checks every parameter constraint of the modules the config
    /// feeds.
    pub fn validate(&self) -> Result<()> {
        let t = &self.time;
        if !(t.t0.is_finite() && t.t_end > t.t0 && t.t_end.is_finite()) {
            return Err(invalid("time.t_end", format!("must exceed t0 = {}", t.t0)));
        }
        if t.points == 0 {
            return Err(invalid("time.points", "must be at least 1"));
        }
        let g = &self.grid;
        if g.m < 4 || g.n < 1 {
            return Err(invalid("grid.m", "need m >= 4 and n >= 1"));
        }
        if let Some([lo, hi]) = g.window {
            if !(hi > lo) {
                return Err(invalid("grid.window", "upper end must exceed lower end"));
            }
        }
        if let Some(p) = g.pad {
            if !(p >= 0.0) {
                return Err(invalid("grid.pad", "must be >= 0"));
            }
        }
        if !(g.margin > 0.0 && g.margin < std::f64::consts::FRAC_PI_2) {
            return Err(invalid("grid.margin", "must lie in (0, π/2)"));
        }
        if !(g.beta_cap > 0.0) {
            return Err(invalid("grid.beta_cap", "must be positive"));
        }
        self.bound.spec()?;
        if self.sample.paths == 0 {
            return Err(invalid("sample.paths", "must be at least 1"));
        }
        match self.process {
            ProcessKind::Ou => {
                let p = self.ou()?;
                crate::process::ou_model(p.beta, p.sigma)?;
                if !p.x0.is_finite() {
                    return Err(invalid("ou.x0", "must be finite"));
                }
            }
            ProcessKind::Wf1d => {
                let p = self.wf1d()?;
                crate::process::wf1d_model(p.gamma)?;
                check_unit("wf1d.x0", p.x0)?;
            }
            ProcessKind::Wf2d => {
                let p = self.wf2d()?;
                crate::process::wf2d_model(p.h)?;
                check_unit("wf2d.x0", p.x0[0])?;
                check_unit("wf2d.x0", p.x0[1])?;
                if !(p.rho.abs() < 1.0) {
                    return Err(invalid("wf2d.rho", "|rho| must be < 1"));
                }
            }
            ProcessKind::Custom1d => {
                let p = self.custom_1d()?;
                crate::process::brownian_model(p.sigma)?;
                if p.drift.is_empty() || !p.drift.iter().all(|c| c.is_finite()) {
                    return Err(invalid("custom-1d.drift", "need at least one finite coefficient"));
                }
                if !p.x0.is_finite() {
                    return Err(invalid("custom-1d.x0", "must be finite"));
                }
            }
        }
        if let Some(v) = &self.validate {
            if v.betas.is_empty() {
                return Err(invalid("validate.betas", "sweep is empty"));
            }
            if v.betas.iter().any(|b| !(b.is_finite() && *b >= 0.0)) {
                return Err(invalid("validate.betas", "entries must be >= 0"));
            }
        }
        if let Some(c) = &self.convergence {
            for p in &c.problems {
                p.parse::<Problem>()?;
            }
        }
        if let Some(mc) = &self.mc {
            if !(mc.at > t.t0 && mc.at <= t.t_end) {
                return Err(invalid("mc.at", "must lie in (t0, t_end]"));
            }
            if !(mc.em_dt > 0.0) || mc.em_paths == 0 || mc.target_accepted < 10 {
                return Err(invalid("mc", "need em_dt > 0, em_paths >= 1, target_accepted >= 10"));
            }
            if !(mc.threshold > 0.0 && mc.threshold <= 1.0) {
                return Err(invalid("mc.threshold", "must lie in (0, 1]"));
            }
        }
        Ok(())
    }

    pub fn ou(&self) -> Result<&OuParams> {
        self.ou.as_ref().ok_or_else(|| Error::MissingKey("ou".into()))
    }

    pub fn wf1d(&self) -> Result<&Wf1dParams> {
        self.wf1d.as_ref().ok_or_else(|| Error::MissingKey("wf1d".into()))
    }

    pub fn wf2d(&self) -> Result<&Wf2dParams> {
        self.wf2d.as_ref().ok_or_else(|| Error::MissingKey("wf2d".into()))
    }

    pub fn custom_1d(&self) -> Result<&Custom1dParams> {
        self.custom_1d.as_ref().ok_or_else(|| Error::MissingKey("custom-1d".into()))
    }
}

fn check_unit(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(invalid(name, format!("must lie in (0, 1), got {v}")))
    }
}

/// Dotted key for a deserialisation error at `path`.
fn offending_key(path: &str, message: &str) -> String {
    let quoted = message
        .split('`')
        .nth(1)
        .filter(|_| message.starts_with("missing field") || message.starts_with("unknown field"));
    match (path, quoted) {
        (".", Some(k)) => k.to_string(),
        (p, Some(k)) if p == k || p.ends_with(&format!(".{k}")) => p.to_string(),
        (p, Some(k)) => format!("{p}.{k}"),
        (p, None) => p.to_string(),
    }
}
