//! Command runners behind the CLI: each writes its artifacts and a
//! manifest into an output directory.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{Config, GridLayout, ProcessKind, RatioKind};
use crate::error::{Error, Result};
use crate::oracle::{
    euler_maruyama, ks_statistic_cdf, ks_statistic_two_sample, normal_cdf, ou_exact_ratio, BoundaryPolicy, EmConfig,
    EmpiricalDistribution,
};
use crate::process::{ou_mean_var, polynomial_drift_model, wf1d_model};
use crate::ratio::ou_ratio_coefficients;
use crate::rng::{stream, Role};
use crate::sampler::{
    custom1d_coefficients, custom1d_pipeline, ou_default_half_width, ou_pipeline, pool_until, time_index,
    wf1d_pipeline, wf1d_window_field, wf2d_pipeline, wf2d_window_field, wf_window_in_frequency, Custom1dSetup,
    GridPolicy, OuSetup, PdeGrid1D, Pipeline, RatioMode, ResolvedBound, SamplingSummary, Wf1dSetup, Wf2dSetup,
};
use crate::solver1d::{solve_ratio_1d_with, Grid1D, RatioField, SolveOptions};
use crate::verify::{self, Problem};

/// Manifest format version.
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    SolveRatio,
    Sample,
    ValidateOu,
    Convergence,
    McCompare,
}

/// Everything a command needs besides the output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Invocation {
    pub command: Command,
    /// Resolved config, seed included.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<Config>,
    #[serde(default)]
    pub normalized: bool,
    /// Convergence problem ids; all problems when empty.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub problems: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub tool: String,
    pub invocation: Invocation,
    /// Relative path to SHA-256 of every artifact written.
    pub files: BTreeMap<String, String>,
    /// Relative path (or pattern) to CSV header.
    pub columns: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound: Option<ResolvedBound>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub notes: BTreeMap<String, String>,
    pub timings_ms: BTreeMap<String, f64>,
}

struct Out {
    dir: PathBuf,
    files: BTreeMap<String, String>,
    columns: BTreeMap<String, String>,
    notes: BTreeMap<String, String>,
    timings: BTreeMap<String, f64>,
}

impl Out {
    fn new(dir: &Path) -> Result<Out> {
        fs::create_dir_all(dir)?;
        Ok(Out {
            dir: dir.to_path_buf(),
            files: BTreeMap::new(),
            columns: BTreeMap::new(),
            notes: BTreeMap::new(),
            timings: BTreeMap::new(),
        })
    }

    fn write(&mut self, rel: &str, f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
        let mut buf = Vec::new();
        f(&mut buf)?;
        let path = self.dir.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, &buf)?;
        self.files.insert(rel.to_string(), sha256_hex(&buf));
        Ok(())
    }

    fn json<T: Serialize>(&mut self, rel: &str, v: &T) -> Result<()> {
        self.write(rel, |w| {
            serde_json::to_writer_pretty(&mut *w, v).map_err(|e| Error::Io(e.to_string()))?;
            w.push(b'\n');
            Ok(())
        })
    }

    fn timed<T>(&mut self, label: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let r = f();
        self.timings.insert(label.to_string(), start.elapsed().as_secs_f64() * 1e3);
        r
    }

    fn finish(self, invocation: &Invocation, bound: Option<ResolvedBound>) -> Result<Manifest> {
        let m = Manifest {
            version: MANIFEST_VERSION,
            tool: format!("fpratio {}", env!("CARGO_PKG_VERSION")),
            invocation: invocation.clone(),
            files: self.files,
            columns: self.columns,
            bound,
            notes: self.notes,
            timings_ms: self.timings,
        };
        let f = File::create(self.dir.join("manifest.json"))?;
        let mut w = BufWriter::new(f);
        serde_json::to_writer_pretty(&mut w, &m).map_err(|e| Error::Io(e.to_string()))?;
        writeln!(w)?;
        Ok(m)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Runs `inv`, writing artifacts and `manifest.json` under `out`.
pub fn run(inv: &Invocation, out: &Path) -> Result<Manifest> {
    let cfg = || inv.config.as_ref().ok_or_else(|| Error::MissingKey("config".into()));
    let mut o = Out::new(out)?;
    let bound = match inv.command {
        Command::SolveRatio => solve_ratio(cfg()?, inv.normalized, &mut o)?,
        Command::Sample => sample(cfg()?, &mut o)?,
        Command::ValidateOu => validate_ou(cfg()?, &mut o)?,
        Command::Convergence => convergence(inv, &mut o)?,
        Command::McCompare => mc_compare(cfg()?, &mut o)?,
    };
    o.finish(inv, bound)
}

/// Re-runs the invocation recorded in a manifest into `out` and checks
/// every output hash against the recorded one.
pub fn replay(manifest: &Path, out: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(manifest)?;
    let m: Manifest = serde_json::from_str(&text).map_err(|e| Error::Config {
        key: None,
        message: format!("manifest: {e}"),
    })?;
    if m.version != MANIFEST_VERSION {
        return Err(Error::Config {
            key: Some("version".into()),
            message: format!("unsupported manifest version {}", m.version),
        });
    }
    let again = run(&m.invocation, out)?;
    let mut differ: Vec<String> = m
        .files
        .iter()
        .filter(|(name, hash)| again.files.get(*name) != Some(*hash))
        .map(|(name, _)| name.clone())
        .collect();
    differ.extend(again.files.keys().filter(|k| !m.files.contains_key(*k)).cloned());
    if differ.is_empty() {
        Ok(again)
    } else {
        Err(Error::ReplayMismatch(differ))
    }
}

fn window_1d(cfg: &Config, x0: f64, sigma: f64) -> (f64, f64) {
    cfg.grid.window.map(|[a, b]| (a, b)).unwrap_or_else(|| {
        let h = ou_default_half_width(sigma, cfg.time.t0, cfg.time.t_end);
        (x0 - h, x0 + h)
    })
}

fn pde_grid(cfg: &Config, x0: f64, sigma: f64) -> PdeGrid1D {
    let (lo, hi) = window_1d(cfg, x0, sigma);
    PdeGrid1D {
        m: cfg.grid.m,
        n: cfg.grid.n,
        policy: match cfg.grid.layout {
            GridLayout::Window => GridPolicy::Window { lo, hi, fallback: true },
            GridLayout::Padded => GridPolicy::PathPadded { pad: cfg.grid.pad },
        },
        scheme: cfg.grid.scheme,
    }
}

pub fn ou_setup(cfg: &Config) -> Result<OuSetup> {
    let p = cfg.ou()?;
    Ok(OuSetup {
        beta: p.beta,
        sigma: p.sigma,
        x0: p.x0,
        t0: cfg.time.t0,
        times: cfg.time.times(),
        mode: match cfg.sample.ratio {
            RatioKind::Exact => RatioMode::Exact,
            RatioKind::Pde => RatioMode::Pde(pde_grid(cfg, p.x0, p.sigma)),
        },
        bound: cfg.bound.spec()?,
        seed: cfg.seed,
        max_attempts: cfg.sample.max_attempts,
        force_identity: cfg.sample.force_identity,
    })
}

pub fn wf1d_setup(cfg: &Config) -> Result<Wf1dSetup> {
    let p = cfg.wf1d()?;
    Ok(Wf1dSetup {
        gamma: p.gamma,
        x0: p.x0,
        t0: cfg.time.t0,
        times: cfg.time.times(),
        m: cfg.grid.m,
        n: cfg.grid.n,
        scheme: cfg.grid.scheme,
        margin: cfg.grid.margin,
        convention: p.convention,
        bound: cfg.bound.spec()?,
        seed: cfg.seed,
        max_attempts: cfg.sample.max_attempts,
        force_identity: cfg.sample.force_identity,
    })
}

pub fn wf2d_setup(cfg: &Config) -> Result<Wf2dSetup> {
    let p = cfg.wf2d()?;
    Ok(Wf2dSetup {
        h: p.h,
        x0: p.x0,
        rho: p.rho,
        t0: cfg.time.t0,
        times: cfg.time.times(),
        m: cfg.grid.m,
        n: cfg.grid.n,
        beta_cap: cfg.grid.beta_cap,
        margin: cfg.grid.margin,
        convention: p.convention,
        bound: cfg.bound.spec()?,
        seed: cfg.seed,
        max_attempts: cfg.sample.max_attempts,
    })
}

pub fn custom1d_setup(cfg: &Config) -> Result<Custom1dSetup> {
    let p = cfg.custom_1d()?;
    Ok(Custom1dSetup {
        drift: p.drift.clone(),
        sigma: p.sigma,
        x0: p.x0,
        t0: cfg.time.t0,
        times: cfg.time.times(),
        grid: pde_grid(cfg, p.x0, p.sigma),
        bound: cfg.bound.spec()?,
        seed: cfg.seed,
        max_attempts: cfg.sample.max_attempts,
    })
}

/// Pipeline for a 1D or 2D config, with the resolved bound.
pub fn pipeline(cfg: &Config) -> Result<Pipeline> {
    match cfg.process {
        ProcessKind::Ou => ou_pipeline(&ou_setup(cfg)?),
        ProcessKind::Wf1d => Ok(wf1d_pipeline(&wf1d_setup(cfg)?)?.0),
        ProcessKind::Wf2d => Ok(wf2d_pipeline(&wf2d_setup(cfg)?)?.0),
        ProcessKind::Custom1d => custom1d_pipeline(&custom1d_setup(cfg)?),
    }
}

/// Ratio field the solve-ratio command writes for 1D processes.
pub fn solve_field_1d(cfg: &Config) -> Result<RatioField> {
    let solve = |coeffs, x0: f64, sigma: f64| -> Result<RatioField> {
        let (lo, hi) = window_1d(cfg, x0, sigma);
        let g = Grid1D::new(lo, hi, cfg.grid.m, cfg.time.t0, cfg.time.t_end, cfg.grid.n)?;
        solve_ratio_1d_with(
            &coeffs,
            &g,
            SolveOptions {
                boundary_value: 1.0,
                scheme: cfg.grid.scheme,
            },
        )
    };
    match cfg.process {
        ProcessKind::Ou => {
            let p = cfg.ou()?;
            solve(ou_ratio_coefficients(p.beta, p.sigma, cfg.time.t0, p.x0)?, p.x0, p.sigma)
        }
        ProcessKind::Custom1d => {
            let p = cfg.custom_1d()?;
            solve(custom1d_coefficients(&p.drift, p.sigma, cfg.time.t0, p.x0)?, p.x0, p.sigma)
        }
        ProcessKind::Wf1d => wf1d_window_field(&wf1d_setup(cfg)?),
        ProcessKind::Wf2d => Err(Error::InvalidInput("wf2d is two-dimensional".into())),
    }
}

fn field_summary(values: &[f64]) -> BTreeMap<String, String> {
    let mx = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mn = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let above = values.iter().filter(|&&v| v > 1.0).count() as f64 / values.len() as f64;
    BTreeMap::from([
        ("field_max".to_string(), mx.to_string()),
        ("field_min".to_string(), mn.to_string()),
        ("field_fraction_above_one".to_string(), above.to_string()),
    ])
}

fn solve_ratio(cfg: &Config, normalized: bool, o: &mut Out) -> Result<Option<ResolvedBound>> {
    if cfg.process == ProcessKind::Wf2d {
        let s = wf2d_setup(cfg)?;
        let f = o.timed("solve", || wf2d_window_field(&s))?;
        let levels: Vec<usize> = if cfg.grid.snapshots.is_empty() {
            (0..=f.grid.n).collect()
        } else {
            cfg.grid.snapshots.clone()
        };
        if let Some(&bad) = levels.iter().find(|&&l| l > f.grid.n) {
            return Err(Error::InvalidParameter {
                name: "grid.snapshots",
                reason: format!("level {bad} exceeds the {} time steps", f.grid.n),
            });
        }
        o.write("field.csv", |w| f.write_csv(w, Some(&levels)))?;
        o.columns.insert("field.csv".into(), "t,x,y,V".into());
        if normalized {
            let nf = f.normalized();
            o.write("field_norm.csv", |w| nf.write_csv(w, Some(&levels)))?;
            o.columns.insert("field_norm.csv".into(), "t,x,y,V".into());
        }
        o.notes.extend(field_summary(&f.values));
        o.notes.insert("coordinates".into(), "x, y are logits of the transformed frequencies".into());
        o.notes.insert("time_steps".into(), f.grid.n.to_string());
        return Ok(None);
    }
    let f = o.timed("solve", || solve_field_1d(cfg))?;
    o.write("field.csv", |w| f.write_csv(w))?;
    o.columns.insert("field.csv".into(), "t,x,V".into());
    if normalized {
        let nf = f.normalized();
        o.write("field_norm.csv", |w| nf.write_csv(w))?;
        o.columns.insert("field_norm.csv".into(), "t,x,V".into());
    }
    o.notes.extend(field_summary(&f.values));
    if cfg.process == ProcessKind::Wf1d {
        o.notes.insert("coordinates".into(), "x is the angle asin(2p - 1) of the allele frequency p".into());
    }
    Ok(None)
}

fn sample(cfg: &Config, o: &mut Out) -> Result<Option<ResolvedBound>> {
    let p = o.timed("setup", || pipeline(cfg))?;
    let results = o.timed("sample", || Ok(p.run(cfg.sample.paths)))?;
    let summary = SamplingSummary::from_results(&results, &p.bound);
    let header = if p.proposal.dim() == 1 {
        "t,proposal,ratio,uniform,decision,output"
    } else {
        "t,proposal_1,proposal_2,ratio,uniform,decision,output_1,output_2"
    };
    for (i, r) in results.iter().enumerate().take(cfg.sample.write_paths) {
        if let Ok(s) = r {
            o.write(&format!("paths/path_{i:05}.csv"), |w| s.write_csv(w))?;
        }
    }
    o.columns.insert("paths/path_*.csv".into(), header.into());
    o.json("summary.json", &summary)?;
    Ok(Some(p.bound.clone()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuErrorRow {
    pub beta: f64,
    pub max_abs_error: f64,
    pub mean_abs_error: f64,
    pub points: usize,
}

/// PDE against closed-form ratio along proposal path 0 of `cfg.seed`, for
/// every β of the sweep.
pub fn ou_error_table(cfg: &Config, betas: &[f64]) -> Result<Vec<OuErrorRow>> {
    if betas.is_empty() {
        return Err(Error::InvalidParameter {
            name: "validate.betas",
            reason: "sweep is empty".into(),
        });
    }
    let base = ou_setup(cfg)?;
    let p = cfg.ou()?;
    let times = cfg.time.times();
    let mut rows = Vec::new();
    for &beta in betas {
        let setup = OuSetup {
            beta,
            mode: RatioMode::Pde(pde_grid(cfg, p.x0, p.sigma)),
            bound: crate::sampler::BoundSpec::User { value: 1.0 },
            force_identity: false,
            ..base.clone()
        };
        let pipe = ou_pipeline(&setup)?;
        let path = pipe
            .proposal
            .sample_path(&pipe.x0, pipe.t0, &times, &mut stream(cfg.seed, 0, 0, Role::Path))?;
        let src = (pipe.provider)(&times, &path)?;
        let mut errs = Vec::with_capacity(times.len());
        for (i, &t) in times.iter().enumerate() {
            let x = path[0][i];
            let v = src.ratio(&[x], t)?;
            errs.push((v - ou_exact_ratio(beta, p.sigma, p.x0, x, t - cfg.time.t0)?).abs());
        }
        rows.push(OuErrorRow {
            beta,
            max_abs_error: errs.iter().cloned().fold(0.0, f64::max),
            mean_abs_error: errs.iter().sum::<f64>() / errs.len() as f64,
            points: errs.len(),
        });
    }
    Ok(rows)
}

fn validate_ou(cfg: &Config, o: &mut Out) -> Result<Option<ResolvedBound>> {
    if cfg.process != ProcessKind::Ou {
        return Err(Error::InvalidInput("validate-ou needs process = \"ou\"".into()));
    }
    let betas = &cfg.validate.as_ref().ok_or_else(|| Error::MissingKey("validate".into()))?.betas;
    let rows = o.timed("sweep", || ou_error_table(cfg, betas))?;
    o.write("errors.csv", |w| {
        writeln!(w, "beta,max_abs_error,mean_abs_error,points")?;
        for r in &rows {
            writeln!(w, "{},{},{},{}", r.beta, r.max_abs_error, r.mean_abs_error, r.points)?;
        }
        Ok(())
    })?;
    o.columns.insert("errors.csv".into(), "beta,max_abs_error,mean_abs_error,points".into());
    Ok(None)
}

fn convergence(inv: &Invocation, o: &mut Out) -> Result<Option<ResolvedBound>> {
    let ids: Vec<String> = if !inv.problems.is_empty() {
        inv.problems.clone()
    } else if let Some(c) = inv.config.as_ref().and_then(|c| c.convergence.as_ref()) {
        c.problems.clone()
    } else {
        Problem::ALL.iter().map(|p| p.id().to_string()).collect()
    };
    let problems = ids.iter().map(|s| s.parse::<Problem>()).collect::<Result<Vec<_>>>()?;
    let studies = o.timed("studies", || problems.iter().map(|&p| verify::run(p)).collect::<Result<Vec<_>>>())?;
    o.write("convergence.csv", |w| {
        for (i, s) in studies.iter().enumerate() {
            s.write_csv(&mut *w, i == 0)?;
        }
        Ok(())
    })?;
    o.columns.insert("convergence.csv".into(), "problem,refined,h,k,error,order".into());
    Ok(None)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KsReport {
    pub process: ProcessKind,
    pub at: f64,
    pub reference: String,
    pub ks: f64,
    pub threshold: f64,
    pub pass: bool,
    pub accepted: usize,
    pub reference_samples: Option<usize>,
    pub paths_used: usize,
    pub failed_paths: usize,
    pub bound: f64,
}

/// Pools accepted samples at `mc.at` and compares them with the process's
/// reference distribution.
pub fn mc_compare_report(
    cfg: &Config,
) -> Result<(KsReport, EmpiricalDistribution, Option<EmpiricalDistribution>)> {
    let mc = cfg.mc.as_ref().ok_or_else(|| Error::MissingKey("mc".into()))?;
    let p = pipeline(cfg)?;
    let i = time_index(&p.times, mc.at)?;
    let pooled = pool_until(&p, i, 0, mc.target_accepted, mc.max_paths)?;
    let accepted = EmpiricalDistribution::new(pooled.values)?;
    let tau = mc.at - cfg.time.t0;
    let em = |model: &crate::process::SdeModel, x0: f64| {
        euler_maruyama(
            model,
            x0,
            EmConfig {
                t_end: tau,
                dt: mc.em_dt,
                n_paths: mc.em_paths,
                seed: cfg.seed,
                policy: BoundaryPolicy::default_for(model),
            },
        )
    };
    let (reference, ks, em_ref) = match cfg.process {
        ProcessKind::Ou => {
            let q = cfg.ou()?;
            let (m, v) = ou_mean_var(q.beta, q.sigma, q.x0, tau);
            let ks = ks_statistic_cdf(&accepted, |x| normal_cdf(x, m, v.sqrt()))?;
            (format!("normal(mean = {m}, variance = {v})"), ks, None)
        }
        ProcessKind::Custom1d => {
            let q = cfg.custom_1d()?;
            let r = em(&polynomial_drift_model(&q.drift, q.sigma)?, q.x0)?;
            let ks = ks_statistic_two_sample(&accepted, &r)?;
            (format!("euler-maruyama(dt = {})", mc.em_dt), ks, Some(r))
        }
        ProcessKind::Wf1d => {
            let q = cfg.wf1d()?;
            let (lo, hi) = wf_window_in_frequency(cfg.grid.margin);
            let r = em(&wf1d_model(q.gamma)?, q.x0)?.restrict(lo, hi)?;
            let ks = ks_statistic_two_sample(&accepted, &r)?;
            (format!("euler-maruyama(dt = {}) restricted to [{lo}, {hi}]", mc.em_dt), ks, Some(r))
        }
        ProcessKind::Wf2d => {
            return Err(Error::InvalidInput("mc-compare supports one-dimensional processes".into()))
        }
    };
    let report = KsReport {
        process: cfg.process,
        at: mc.at,
        reference,
        ks,
        threshold: mc.threshold,
        pass: ks <= mc.threshold,
        accepted: accepted.len(),
        reference_samples: em_ref.as_ref().map(|r| r.len()),
        paths_used: pooled.paths,
        failed_paths: pooled.failed_paths,
        bound: p.bound.value,
    };
    Ok((report, accepted, em_ref))
}

fn mc_compare(cfg: &Config, o: &mut Out) -> Result<Option<ResolvedBound>> {
    let (report, accepted, reference) = o.timed("compare", || mc_compare_report(cfg))?;
    o.write("accepted.csv", |w| accepted.write_csv(w))?;
    o.columns.insert("accepted.csv".into(), "value".into());
    if let Some(r) = &reference {
        o.write("reference.csv", |w| r.write_csv(w))?;
        o.columns.insert("reference.csv".into(), "value".into());
    }
    o.json("ks.json", &report)?;
    Ok(None)
}
