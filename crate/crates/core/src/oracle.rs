//! Ground truth used to validate the solvers and the sampler: the closed-form
//! O-U ratio, an Euler–Maruyama simulator and Kolmogorov–Smirnov distances.

use std::io::{BufRead, Write};

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::process::{ou_mean_var, SdeModel};
use crate::rng::{stream, Role};

/// Standard normal CDF.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

pub fn normal_cdf(x: f64, mean: f64, sd: f64) -> f64 {
    std_normal_cdf((x - mean) / sd)
}

/// Exact `P2 / P1` for the O-U target `dX = -βX dt + σ dW` against the
/// Brownian proposal `dX = σ dW`, both from `x0` at time 0.
pub fn ou_exact_ratio(beta: f64, sigma: f64, x0: f64, x: f64, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::Domain {
            x,
            t,
            domain: "t > 0".into(),
        });
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(invalid("sigma", format!("must be positive, got {sigma}")));
    }
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(invalid("beta", format!("must be >= 0, got {beta}")));
    }
    if beta == 0.0 {
        return Ok(1.0);
    }
    let v1 = sigma * sigma * t;
    let (m2, v2) = ou_mean_var(beta, sigma, x0, t);
    let e = (x - m2).powi(2) / v2 - (x - x0).powi(2) / v1;
    Ok((v1 / v2).sqrt() * (-0.5 * e).exp())
}

/// Upper bound `C(β) = exp((β/2)(x_max² - x0² + T))` on the O-U ratio over
/// `|x| ≤ x_max`, `t ≤ T` (unit diffusion).
pub fn ou_ratio_bound(beta: f64, x0: f64, x_max: f64, t_end: f64) -> f64 {
    (0.5 * beta * (x_max * x_max - x0 * x0 + t_end)).exp()
}

/// Sorted sample.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalDistribution {
    sorted: Vec<f64>,
}

impl EmpiricalDistribution {
    pub fn new(mut samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Degenerate("empty sample".into()));
        }
        if let Some(bad) = samples.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite sample {bad}")));
        }
        samples.sort_by(f64::total_cmp);
        Ok(EmpiricalDistribution { sorted: samples })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn samples(&self) -> &[f64] {
        &self.sorted
    }

    pub fn mean(&self) -> f64 {
        self.sorted.iter().sum::<f64>() / self.len() as f64
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        let n = self.len();
        if n < 2 {
            return 0.0;
        }
        let m = self.mean();
        self.sorted.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64
    }

    /// Standard error of the mean.
    pub fn std_err(&self) -> f64 {
        (self.variance() / self.len() as f64).sqrt()
    }

    pub fn min(&self) -> f64 {
        self.sorted[0]
    }

    pub fn max(&self) -> f64 {
        self.sorted[self.len() - 1]
    }

    /// Fraction of samples `≤ x`.
    pub fn cdf(&self, x: f64) -> f64 {
        self.sorted.partition_point(|&v| v <= x) as f64 / self.len() as f64
    }

    /// Samples falling in the closed interval `[lo, hi]`.
    pub fn restrict(&self, lo: f64, hi: f64) -> Result<Self> {
        let a = self.sorted.partition_point(|&v| v < lo);
        let b = self.sorted.partition_point(|&v| v <= hi);
        EmpiricalDistribution::new(self.sorted[a..b].to_vec())
    }

    /// One value per line under a `value` header.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "value")?;
        for v in &self.sorted {
            writeln!(w, "{v}")?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut out = Vec::new();
        for (n, line) in r.lines().enumerate() {
            let line = line?;
            let s = line.trim();
            if s.is_empty() || (n == 0 && s == "value") {
                continue;
            }
            out.push(
                s.parse::<f64>()
                    .map_err(|e| Error::InvalidInput(format!("line {}: {e}", n + 1)))?,
            );
        }
        Self::new(out)
    }
}

fn check_ks_size(n: usize) -> Result<()> {
    if n < 10 {
        return Err(Error::Degenerate(format!(
            "Kolmogorov-Smirnov needs at least 10 samples, got {n}"
        )));
    }
    Ok(())
}

/// One-sample Kolmogorov–Smirnov distance to a continuous CDF.
pub fn ks_statistic_cdf(a: &EmpiricalDistribution, cdf: impl Fn(f64) -> f64) -> Result<f64> {
    check_ks_size(a.len())?;
    let n = a.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in a.sorted.iter().enumerate() {
        let f = cdf(x);
        if !f.is_finite() {
            return Err(Error::InvalidInput(format!("reference CDF is {f} at {x}")));
        }
        d = d.max((i + 1) as f64 / n - f).max(f - i as f64 / n);
    }
    Ok(d.clamp(0.0, 1.0))
}

/// Two-sample Kolmogorov–Smirnov distance.
pub fn ks_statistic_two_sample(a: &EmpiricalDistribution, b: &EmpiricalDistribution) -> Result<f64> {
    check_ks_size(a.len())?;
    check_ks_size(b.len())?;
    let (x, y) = (&a.sorted, &b.sorted);
    let (n, m) = (x.len() as f64, y.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d = 0.0f64;
    while i < x.len() && j < y.len() {
        let v = x[i].min(y[j]);
        while i < x.len() && x[i] <= v {
            i += 1;
        }
        while j < y.len() && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    Ok(d)
}

/// What a Kolmogorov–Smirnov distance is measured against.
pub enum KsReference<'a> {
    Sample(&'a EmpiricalDistribution),
    Cdf(&'a dyn Fn(f64) -> f64),
}

pub fn ks_statistic(a: &EmpiricalDistribution, b: KsReference<'_>) -> Result<f64> {
    match b {
        KsReference::Sample(s) => ks_statistic_two_sample(a, s),
        KsReference::Cdf(f) => ks_statistic_cdf(a, f),
    }
}

/// Handling of states leaving a bounded state space during simulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundaryPolicy {
    /// No correction; leaving the state space is an error.
    None,
    /// Clip into `[lo + eps, hi - eps]` after each step.
    Clip(f64),
}

impl BoundaryPolicy {
    /// `Clip(1e-9)` for bounded state spaces, `None` otherwise.
    pub fn default_for(model: &SdeModel) -> Self {
        if model.state_space().iter().any(|iv| iv.lo.is_finite() || iv.hi.is_finite()) {
            BoundaryPolicy::Clip(1e-9)
        } else {
            BoundaryPolicy::None
        }
    }
}

/// Simulation parameters for [`euler_maruyama`].
#[derive(Debug, Clone, Copy)]
pub struct EmConfig {
    pub t_end: f64,
    pub dt: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub policy: BoundaryPolicy,
}

fn em_path(model: &SdeModel, x0: &[f64], cfg: &EmConfig, path: usize) -> Result<Vec<f64>> {
    let steps = (cfg.t_end / cfg.dt).round().max(1.0) as usize;
    let dt = cfg.t_end / steps as f64;
    let sq = dt.sqrt();
    let mut rng = stream(cfg.seed, path as u64, 0, Role::Oracle);
    let mut x = x0.to_vec();
    let space = model.state_space();
    for s in 0..steps {
        let t = s as f64 * dt;
        let drift = model.drift(&x, t).map_err(|_| Error::SimulationBlowup { path, t })?;
        let diff = model.sq_diffusion(&x).map_err(|_| Error::SimulationBlowup { path, t })?;
        let d = x.len();
        for k in 0..d {
            let z: f64 = rng.sample(StandardNormal);
            x[k] += drift[k] * dt + diff[k * d + k].max(0.0).sqrt() * sq * z;
            if !x[k].is_finite() {
                return Err(Error::SimulationBlowup { path, t: t + dt });
            }
            if let BoundaryPolicy::Clip(eps) = cfg.policy {
                let iv = space[k];
                x[k] = x[k].clamp(iv.lo + eps, iv.hi - eps);
            }
        }
    }
    Ok(x)
}

/// Terminal states of `n_paths` Euler–Maruyama paths from `x0`; deterministic
/// under `seed` regardless of thread count.
pub fn euler_maruyama_states(model: &SdeModel, x0: &[f64], cfg: EmConfig) -> Result<Vec<Vec<f64>>> {
    if !(cfg.dt > 0.0 && cfg.dt.is_finite()) {
        return Err(invalid("dt", format!("must be positive, got {}", cfg.dt)));
    }
    if !(cfg.t_end > 0.0) {
        return Err(invalid("t_end", format!("must be positive, got {}", cfg.t_end)));
    }
    if cfg.n_paths == 0 {
        return Err(invalid("n_paths", "must be at least 1"));
    }
    (0..cfg.n_paths)
        .into_par_iter()
        .map(|p| em_path(model, x0, &cfg, p))
        .collect()
}

/// Empirical marginal at `t_end` of a scalar model.
pub fn euler_maruyama(model: &SdeModel, x0: f64, cfg: EmConfig) -> Result<EmpiricalDistribution> {
    if model.dim() != 1 {
        return Err(Error::InvalidInput("use euler_maruyama_states for planar models".into()));
    }
    let states = euler_maruyama_states(model, &[x0], cfg)?;
    EmpiricalDistribution::new(states.into_iter().map(|s| s[0]).collect())
}
