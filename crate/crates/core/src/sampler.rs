//! Pointwise rejection sampling along exact proposal paths.
//!
//! A path is drawn exactly from the proposal, the ratio `V = P2 / P1` is
//! evaluated at each of its points, every point is accepted with
//! probability `V / c`, and rejected points are refilled with proposal
//! bridges between their accepted neighbours.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::io::Write;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::oracle::{ou_exact_ratio, ou_ratio_bound};
use crate::process::{
    brownian_model, logit, ou_transition_density, polynomial_drift_model, sigmoid, wf1d_logit_model, DriftConvention,
    Interval,
};
use crate::ratio::{build_ratio_pde_1d, ou_ratio_coefficients, wf2d_ratio_coefficients, RatioCoefficients1D};
use crate::rng::{stream, Role, MAX_ATTEMPTS};
use crate::solver1d::{solve_ratio_1d_with, Grid1D, RatioField, SolveOptions, SpatialScheme};
use crate::solver2d::{solve_ratio_2d, Grid2D, RatioField2D};

/// Proposal processes with exact transition sampling and exact bridges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Proposal {
    /// `dX = σ dW`.
    Brownian { sigma: f64 },
    /// Sigmoid of a standard Brownian motion.
    LogisticBrownian,
    /// Componentwise sigmoid of a planar Brownian motion with unit variances
    /// and correlation `rho`.
    LogisticBrownian2D { rho: f64 },
}

impl Proposal {
    /// Looks a proposal up by name.
    pub fn from_id(id: &str, sigma: f64, rho: f64) -> Result<Self> {
        let p = match id {
            "brownian" => Proposal::Brownian { sigma },
            "logistic-brownian" => Proposal::LogisticBrownian,
            "logistic-brownian-2d" => Proposal::LogisticBrownian2D { rho },
            other => return Err(Error::UnknownProcess(other.to_string())),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Proposal::Brownian { sigma } if !(sigma > 0.0 && sigma.is_finite()) => {
                Err(invalid("sigma", format!("must be positive, got {sigma}")))
            }
            Proposal::LogisticBrownian2D { rho } if !(rho.abs() < 1.0) => {
                Err(invalid("rho", format!("|rho| must be < 1, got {rho}")))
            }
            _ => Ok(()),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Proposal::LogisticBrownian2D { .. } => 2,
            _ => 1,
        }
    }

    /// Coordinates in which the proposal is a Brownian motion.
    fn to_latent(&self, v: f64) -> f64 {
        match self {
            Proposal::Brownian { .. } => v,
            _ => logit(v),
        }
    }

    fn from_latent(&self, z: f64) -> f64 {
        match self {
            Proposal::Brownian { .. } => z,
            _ => sigmoid(z),
        }
    }

    fn sd(&self) -> f64 {
        match *self {
            Proposal::Brownian { sigma } => sigma,
            _ => 1.0,
        }
    }

    /// Correlated standard normals, one per dimension.
    fn normals<R: Rng + ?Sized>(&self, rng: &mut R) -> [f64; 2] {
        let z1: f64 = rng.sample(StandardNormal);
        match *self {
            Proposal::LogisticBrownian2D { rho } => {
                let z2: f64 = rng.sample(StandardNormal);
                [z1, rho * z1 + (1.0 - rho * rho).sqrt() * z2]
            }
            _ => [z1, 0.0],
        }
    }

    fn check_start(&self, x0: &[f64]) -> Result<()> {
        if x0.len() != self.dim() {
            return Err(Error::InvalidInput(format!(
                "start has {} coordinates, proposal has dimension {}",
                x0.len(),
                self.dim()
            )));
        }
        for &v in x0 {
            let ok = match self {
                Proposal::Brownian { .. } => v.is_finite(),
                _ => Interval::UNIT.contains(v),
            };
            if !ok {
                return Err(invalid("x0", format!("{v} is outside the proposal state space")));
            }
        }
        Ok(())
    }

    /// Exact draws at `times` (strictly after `t0`), one column per dimension.
    pub fn sample_path<R: Rng + ?Sized>(
        &self,
        x0: &[f64],
        t0: f64,
        times: &[f64],
        rng: &mut R,
    ) -> Result<Vec<Vec<f64>>> {
        self.validate()?;
        self.check_start(x0)?;
        check_times(t0, times)?;
        let d = self.dim();
        let mut z: Vec<f64> = x0.iter().map(|&v| self.to_latent(v)).collect();
        let mut cols = vec![Vec::with_capacity(times.len()); d];
        let mut prev = t0;
        for &t in times {
            let s = self.sd() * (t - prev).sqrt();
            let n = self.normals(rng);
            for k in 0..d {
                z[k] += s * n[k];
                cols[k].push(self.from_latent(z[k]));
            }
            prev = t;
        }
        Ok(cols)
    }

    /// One exact bridge draw at `t` between `(ta, a)` and `(tb, b)`.
    pub fn bridge_point<R: Rng + ?Sized>(
        &self,
        ta: f64,
        a: &[f64],
        tb: f64,
        b: &[f64],
        t: f64,
        rng: &mut R,
    ) -> Vec<f64> {
        let w = (t - ta) / (tb - ta);
        let sd = self.sd() * ((t - ta) * (tb - t) / (tb - ta)).max(0.0).sqrt();
        let n = self.normals(rng);
        (0..self.dim())
            .map(|k| {
                let (za, zb) = (self.to_latent(a[k]), self.to_latent(b[k]));
                self.from_latent(za + w * (zb - za) + sd * n[k])
            })
            .collect()
    }
}

fn check_times(t0: f64, times: &[f64]) -> Result<()> {
    if times.is_empty() {
        return Err(Error::InvalidInput("no path times".into()));
    }
    let mut prev = t0;
    for &t in times {
        if !(t > prev) || !t.is_finite() {
            return Err(Error::InvalidInput(format!(
                "path times must increase strictly from t0 = {t0}; got {t} after {prev}"
            )));
        }
        prev = t;
    }
    Ok(())
}

/// Draws a proposal path from the `Path` stream of `seed`.
pub fn sample_proposal_path(
    proposal: &Proposal,
    x0: &[f64],
    t0: f64,
    times: &[f64],
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    proposal.sample_path(x0, t0, times, &mut stream(seed, 0, 0, Role::Path))
}

/// Outcome at one path point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Decision {
    Accepted,
    Rejected,
    /// The ratio was negative (or not a number) and counted as zero.
    ClampedRejected,
}

impl Decision {
    pub fn is_accepted(self) -> bool {
        self == Decision::Accepted
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Decision::Accepted => "accepted",
            Decision::Rejected => "rejected",
            Decision::ClampedRejected => "clamped-rejected",
        }
    }
}

/// Accept iff `u ≤ max(V, 0) / c`.
pub fn decide(ratio: f64, uniform: f64, bound_c: f64) -> Decision {
    if !(ratio >= 0.0) {
        Decision::ClampedRejected
    } else if uniform <= ratio / bound_c {
        Decision::Accepted
    } else {
        Decision::Rejected
    }
}

/// Anything that yields `V(x, t)` at a proposal point.
pub trait RatioSource: Send + Sync {
    fn ratio(&self, x: &[f64], t: f64) -> Result<f64>;
}

/// `V ≡ value`.
#[derive(Debug, Clone, Copy)]
pub struct ConstantRatio(pub f64);

impl RatioSource for ConstantRatio {
    fn ratio(&self, _: &[f64], _: f64) -> Result<f64> {
        Ok(self.0)
    }
}

/// Closed-form O-U ratio, time measured from `t0`.
#[derive(Debug, Clone, Copy)]
pub struct ExactOuRatio {
    pub beta: f64,
    pub sigma: f64,
    pub x0: f64,
    pub t0: f64,
}

impl RatioSource for ExactOuRatio {
    fn ratio(&self, x: &[f64], t: f64) -> Result<f64> {
        ou_exact_ratio(self.beta, self.sigma, self.x0, x[0], t - self.t0)
    }
}

/// Coordinates in which a field is stored, relative to proposal values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FieldCoords {
    Identity,
    Logit,
}

impl FieldCoords {
    fn map(self, v: f64) -> f64 {
        match self {
            FieldCoords::Identity => v,
            FieldCoords::Logit => logit(v),
        }
    }
}

/// Treatment of proposal points outside the solved window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outside {
    Error,
    /// Count as `V = 0`: correct outside the target's support, and a
    /// restriction of the target to the window inside it.
    Zero,
}

pub struct FieldRatio1D {
    pub field: Arc<RatioField>,
    pub coords: FieldCoords,
    pub outside: Outside,
}

impl RatioSource for FieldRatio1D {
    fn ratio(&self, x: &[f64], t: f64) -> Result<f64> {
        let z = self.coords.map(x[0]);
        let g = &self.field.grid;
        if self.outside == Outside::Zero && !(z >= g.x_min && z <= g.x_max) {
            return Ok(0.0);
        }
        self.field.eval(z, t)
    }
}

pub struct FieldRatio2D {
    pub field: Arc<RatioField2D>,
    pub coords: FieldCoords,
    pub outside: Outside,
}

impl RatioSource for FieldRatio2D {
    fn ratio(&self, x: &[f64], t: f64) -> Result<f64> {
        let (a, b) = (self.coords.map(x[0]), self.coords.map(x[1]));
        let g = &self.field.grid;
        let inside = a >= g.x_min && a <= g.x_max && b >= g.y_min && b <= g.y_max;
        if self.outside == Outside::Zero && !inside {
            return Ok(0.0);
        }
        self.field.eval(a, b, t)
    }
}

/// Ratios, uniforms and decisions for one path.
#[derive(Debug, Clone, PartialEq)]
pub struct Rejection {
    pub ratio: Vec<f64>,
    pub uniforms: Vec<f64>,
    pub decisions: Vec<Decision>,
    /// Points with `V > c`.
    pub bound_violations: usize,
}

/// Evaluates the ratio at every path point and decides each one.
pub fn rejection_pass<R: Rng + ?Sized>(
    times: &[f64],
    values: &[Vec<f64>],
    source: &dyn RatioSource,
    bound_c: f64,
    rng: &mut R,
) -> Result<Rejection> {
    if !(bound_c > 0.0 && bound_c.is_finite()) {
        return Err(invalid("bound_c", format!("must be positive and finite, got {bound_c}")));
    }
    let n = times.len();
    let mut ratio = Vec::with_capacity(n);
    let mut point = vec![0.0; values.len()];
    for (i, &t) in times.iter().enumerate() {
        for (k, col) in values.iter().enumerate() {
            point[k] = col[i];
        }
        ratio.push(source.ratio(&point, t)?);
    }
    let uniforms: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let decisions = ratio
        .iter()
        .zip(&uniforms)
        .map(|(&v, &u)| decide(v, u, bound_c))
        .collect();
    let bound_violations = ratio.iter().filter(|&&v| v > bound_c).count();
    Ok(Rejection {
        ratio,
        uniforms,
        decisions,
        bound_violations,
    })
}

/// Replaces rejected points by proposal-bridge draws between the flanking
/// accepted points; `(t0, x0)` anchors a rejected prefix and points after
/// the last acceptance become NaN.
pub fn bridge_infill<R: Rng + ?Sized>(
    proposal: &Proposal,
    t0: f64,
    x0: &[f64],
    times: &[f64],
    values: &[Vec<f64>],
    decisions: &[Decision],
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    let last = decisions
        .iter()
        .rposition(|d| d.is_accepted())
        .ok_or(Error::WholePathRejected)?;
    let d = values.len();
    let mut out = vec![vec![f64::NAN; times.len()]; d];
    let mut anchor_t = t0;
    let mut anchor: Vec<f64> = x0.to_vec();
    let mut next = 0usize;
    for i in 0..=last {
        if decisions[i].is_accepted() {
            for k in 0..d {
                out[k][i] = values[k][i];
            }
            anchor_t = times[i];
            anchor = (0..d).map(|k| values[k][i]).collect();
            continue;
        }
        if next <= i {
            next = (i + 1..=last).find(|&j| decisions[j].is_accepted()).unwrap_or(last);
        }
        let target: Vec<f64> = (0..d).map(|k| values[k][next]).collect();
        let v = proposal.bridge_point(anchor_t, &anchor, times[next], &target, times[i], rng);
        for k in 0..d {
            out[k][i] = v[k];
        }
        anchor_t = times[i];
        anchor = v;
    }
    Ok(out)
}

/// Map from proposal coordinates to the coordinates reported as output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum OutputMap {
    Identity,
    /// `x = (1 + sin(logit y)) / 2` with the angle clamped to
    /// `±(π/2 - margin)`, keeping outputs inside (0, 1).
    ArcsineLogitInverse { margin: f64 },
}

impl OutputMap {
    pub fn apply(&self, v: f64) -> f64 {
        match *self {
            OutputMap::Identity => v,
            OutputMap::ArcsineLogitInverse { margin } => {
                if v.is_nan() {
                    return v;
                }
                let lim = FRAC_PI_2 - margin;
                0.5 * (1.0 + logit(v).clamp(-lim, lim).sin())
            }
        }
    }
}

/// Bound on `V` used by the accept test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BoundSpec {
    /// O-U only: `exp((β/2)((x_max² - x0²)/σ² + T))`. `x_max` defaults to
    /// `|x0| + 6σ√T`.
    Analytic { x_max: Option<f64> },
    /// `max(1, max V over the reference field) · safety`.
    Empirical { safety: f64 },
    User { value: f64 },
}

impl Default for BoundSpec {
    fn default() -> Self {
        BoundSpec::Empirical { safety: 1.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedBound {
    pub spec: BoundSpec,
    pub value: f64,
    pub note: String,
    /// Fraction of reference-field nodes with `V > 1`, when a field exists.
    pub field_mass_above_one: Option<f64>,
}

/// One sampled path with everything that decided it.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSample {
    pub times: Vec<f64>,
    /// Proposal draws, one column per dimension.
    pub proposal: Vec<Vec<f64>>,
    pub ratio: Vec<f64>,
    pub uniforms: Vec<f64>,
    pub decisions: Vec<Decision>,
    /// Proposal coordinates after bridge infill; NaN after the last
    /// acceptance.
    pub bridged: Vec<Vec<f64>>,
    /// `bridged` mapped to target coordinates.
    pub output: Vec<Vec<f64>>,
    pub seed: u64,
    pub index: u64,
    pub attempt: u32,
    pub bound_c: f64,
    pub bound_violations: usize,
    /// Points evaluated by earlier, fully rejected attempts.
    pub discarded_points: usize,
}

impl PathSample {
    pub fn whole_path_rejected(&self) -> bool {
        !self.decisions.iter().any(|d| d.is_accepted())
    }

    pub fn accepted_count(&self) -> usize {
        self.decisions.iter().filter(|d| d.is_accepted()).count()
    }

    /// `t,proposal,ratio,uniform,decision,output`, suffixed `_1`, `_2` in
    /// two dimensions. Truncated outputs are left empty.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let d = self.proposal.len();
        let names = |base: &str| -> Vec<String> {
            if d == 1 {
                vec![base.to_string()]
            } else {
                (1..=d).map(|k| format!("{base}_{k}")).collect()
            }
        };
        let mut header = vec!["t".to_string()];
        header.extend(names("proposal"));
        header.extend(["ratio", "uniform", "decision"].map(String::from));
        header.extend(names("output"));
        writeln!(w, "{}", header.join(","))?;
        for i in 0..self.times.len() {
            let mut row = vec![self.times[i].to_string()];
            row.extend(self.proposal.iter().map(|c| c[i].to_string()));
            row.push(self.ratio[i].to_string());
            row.push(self.uniforms[i].to_string());
            row.push(self.decisions[i].as_str().to_string());
            row.extend(self.output.iter().map(|c| {
                if c[i].is_nan() {
                    String::new()
                } else {
                    c[i].to_string()
                }
            }));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Builds the ratio source for one proposal path.
pub type RatioProvider =
    Arc<dyn Fn(&[f64], &[Vec<f64>]) -> Result<Arc<dyn RatioSource>> + Send + Sync>;

/// Everything needed to sample paths independently and reproducibly.
#[derive(Clone)]
pub struct Pipeline {
    pub proposal: Proposal,
    /// Start in proposal coordinates.
    pub x0: Vec<f64>,
    pub t0: f64,
    pub times: Vec<f64>,
    pub provider: RatioProvider,
    pub bound: ResolvedBound,
    pub output_map: OutputMap,
    pub max_attempts: u32,
    pub seed: u64,
}

impl fmt::Debug for Pipeline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Pipeline")
            .field("proposal", &self.proposal)
            .field("x0", &self.x0)
            .field("t0", &self.t0)
            .field("times", &self.times.len())
            .field("bound", &self.bound)
            .field("max_attempts", &self.max_attempts)
            .field("seed", &self.seed)
            .finish()
    }
}

/// Default number of fresh proposals tried for a fully rejected path.
pub const DEFAULT_MAX_ATTEMPTS: u32 = 50;

impl Pipeline {
    /// One attempt: fully rejected paths come back with NaN outputs rather
    /// than an error.
    pub fn attempt(&self, index: u64, attempt: u32) -> Result<PathSample> {
        let values = self.proposal.sample_path(
            &self.x0,
            self.t0,
            &self.times,
            &mut stream(self.seed, index, attempt, Role::Path),
        )?;
        let source = (self.provider)(&self.times, &values)?;
        // uniforms are drawn after the ratio is known
        let rej = rejection_pass(
            &self.times,
            &values,
            source.as_ref(),
            self.bound.value,
            &mut stream(self.seed, index, attempt, Role::Uniforms),
        )?;
        let bridged = match bridge_infill(
            &self.proposal,
            self.t0,
            &self.x0,
            &self.times,
            &values,
            &rej.decisions,
            &mut stream(self.seed, index, attempt, Role::Bridge),
        ) {
            Ok(b) => b,
            Err(Error::WholePathRejected) => vec![vec![f64::NAN; self.times.len()]; values.len()],
            Err(e) => return Err(e),
        };
        let output = bridged
            .iter()
            .map(|c| c.iter().map(|&v| self.output_map.apply(v)).collect())
            .collect();
        Ok(PathSample {
            times: self.times.clone(),
            proposal: values,
            ratio: rej.ratio,
            uniforms: rej.uniforms,
            decisions: rej.decisions,
            bridged,
            output,
            seed: self.seed,
            index,
            attempt,
            bound_c: self.bound.value,
            bound_violations: rej.bound_violations,
            discarded_points: 0,
        })
    }

    /// Samples path `index`, re-proposing fully rejected paths up to
    /// `max_attempts` times.
    pub fn sample_path(&self, index: u64) -> Result<PathSample> {
        let mut discarded = 0;
        let mut best_ratio = f64::NEG_INFINITY;
        let attempts = self.max_attempts.clamp(1, MAX_ATTEMPTS);
        for a in 0..attempts {
            let mut s = self.attempt(index, a)?;
            if !s.whole_path_rejected() {
                s.discarded_points = discarded;
                return Ok(s);
            }
            discarded += s.times.len();
            best_ratio = s.ratio.iter().cloned().fold(best_ratio, f64::max);
        }
        Err(Error::SamplingFailure {
            attempts: attempts as usize,
            diagnostics: format!(
                "path {index}: every point rejected in each attempt; largest ratio seen {best_ratio:e}, bound {}",
                self.bound.value
            ),
        })
    }

    /// Samples paths `0..n` in parallel.
    pub fn run(&self, n: usize) -> Vec<Result<PathSample>> {
        (0..n as u64).into_par_iter().map(|i| self.sample_path(i)).collect()
    }

    /// First attempts only, without retries.
    pub fn run_first_attempts(&self, n: usize) -> Result<Vec<PathSample>> {
        (0..n as u64).into_par_iter().map(|i| self.attempt(i, 0)).collect()
    }
}

/// Aggregate statistics over a batch of sampled paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingSummary {
    pub paths_requested: usize,
    pub paths_sampled: usize,
    pub paths_failed: usize,
    pub retries: usize,
    pub points_evaluated: usize,
    pub points_accepted: usize,
    pub points_clamped: usize,
    pub acceptance_rate: f64,
    pub rejection_rate: f64,
    pub bound: ResolvedBound,
    pub bound_violations: usize,
    pub failures: Vec<String>,
}

impl SamplingSummary {
    pub fn from_results(results: &[Result<PathSample>], bound: &ResolvedBound) -> Self {
        let mut s = SamplingSummary {
            paths_requested: results.len(),
            paths_sampled: 0,
            paths_failed: 0,
            retries: 0,
            points_evaluated: 0,
            points_accepted: 0,
            points_clamped: 0,
            acceptance_rate: 0.0,
            rejection_rate: 0.0,
            bound: bound.clone(),
            bound_violations: 0,
            failures: Vec::new(),
        };
        for r in results {
            match r {
                Ok(p) => {
                    s.paths_sampled += 1;
                    s.retries += p.attempt as usize;
                    s.points_evaluated += p.times.len() + p.discarded_points;
                    s.points_accepted += p.accepted_count();
                    s.points_clamped += p
                        .decisions
                        .iter()
                        .filter(|d| **d == Decision::ClampedRejected)
                        .count();
                    s.bound_violations += p.bound_violations;
                }
                Err(e) => {
                    s.paths_failed += 1;
                    if let Error::SamplingFailure { attempts, .. } = e {
                        s.retries += attempts.saturating_sub(1);
                    }
                    s.failures.push(e.to_string());
                }
            }
        }
        if s.points_evaluated > 0 {
            s.acceptance_rate = s.points_accepted as f64 / s.points_evaluated as f64;
            s.rejection_rate = 1.0 - s.acceptance_rate;
        }
        s
    }
}

/// Accepted output values at time index `i`, coordinate `k`, pooled over
/// paths.
pub fn pool_accepted(samples: &[PathSample], i: usize, k: usize) -> Vec<f64> {
    samples
        .iter()
        .filter(|s| s.decisions[i].is_accepted())
        .map(|s| s.output[k][i])
        .collect()
}

/// How 1D fields are laid out relative to the proposal paths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GridPolicy {
    /// One grid per path over `[min, max]` of the path extended by `pad` on
    /// both sides. `pad = None` uses `max(3·sd·√T, 10% of the range)`;
    /// `pad = Some(0.0)` is the unpadded layout.
    PathPadded { pad: Option<f64> },
    /// One shared grid over `[lo, hi]`; paths leaving it get their own
    /// padded grid when `fallback` is set.
    Window { lo: f64, hi: f64, fallback: bool },
}

/// Grid resolution and layout for a 1D PDE ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PdeGrid1D {
    pub m: usize,
    pub n: usize,
    pub policy: GridPolicy,
    #[serde(default)]
    pub scheme: SpatialScheme,
}

/// 1D PDE ratio provider; returns the provider and the reference field
/// over the policy window (or the default padded window).
fn pde_provider_1d(
    coeffs: RatioCoefficients1D,
    grid: PdeGrid1D,
    t0: f64,
    t_end: f64,
    coords: FieldCoords,
    outside: Outside,
    sd: f64,
    reference_window: (f64, f64),
) -> Result<(RatioProvider, Arc<RatioField>)> {
    let opts = SolveOptions {
        boundary_value: 1.0,
        scheme: grid.scheme,
    };
    let solve = {
        let coeffs = coeffs.clone();
        move |lo: f64, hi: f64| -> Result<Arc<RatioField>> {
            let g = Grid1D::new(lo, hi, grid.m, t0, t_end, grid.n)?;
            Ok(Arc::new(solve_ratio_1d_with(&coeffs, &g, opts)?))
        }
    };
    let default_pad = move |lo: f64, hi: f64| (3.0 * sd * (t_end - t0).sqrt()).max(0.1 * (hi - lo));
    let padded = {
        let solve = solve.clone();
        move |z: &[f64], pad: Option<f64>| -> Result<Arc<RatioField>> {
            let lo = z.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let p = pad.unwrap_or_else(|| default_pad(lo, hi));
            let (lo, hi) = if hi - lo + 2.0 * p > 0.0 { (lo - p, hi + p) } else { (lo - 0.5, hi + 0.5) };
            solve(lo, hi)
        }
    };
    let latent = move |values: &[Vec<f64>]| -> Vec<f64> { values[0].iter().map(|&v| coords.map(v)).collect() };
    match grid.policy {
        GridPolicy::Window { lo, hi, fallback } => {
            let field = solve(lo, hi)?;
            let shared: Arc<dyn RatioSource> = Arc::new(FieldRatio1D {
                field: field.clone(),
                coords,
                outside,
            });
            let provider: RatioProvider = Arc::new(move |_, values| {
                let z = latent(values);
                if !fallback || z.iter().all(|&v| v >= lo && v <= hi) {
                    return Ok(shared.clone());
                }
                Ok(Arc::new(FieldRatio1D {
                    field: padded(&z, None)?,
                    coords,
                    outside,
                }))
            });
            Ok((provider, field))
        }
        GridPolicy::PathPadded { pad } => {
            let reference = solve(reference_window.0, reference_window.1)?;
            let provider: RatioProvider = Arc::new(move |_, values| {
                Ok(Arc::new(FieldRatio1D {
                    field: padded(&latent(values), pad)?,
                    coords,
                    outside,
                }))
            });
            Ok((provider, reference))
        }
    }
}

fn empirical_bound(spec: BoundSpec, safety: f64, values: &[f64], label: &str) -> Result<ResolvedBound> {
    if !(safety >= 1.0 && safety.is_finite()) {
        return Err(invalid("safety", format!("must be >= 1, got {safety}")));
    }
    let mx = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let above = values.iter().filter(|&&v| v > 1.0).count() as f64 / values.len().max(1) as f64;
    Ok(ResolvedBound {
        spec,
        value: mx.max(1.0) * safety,
        note: format!("empirical: max(1, max V = {mx}) x {safety} over the {label}"),
        field_mass_above_one: Some(above),
    })
}

fn user_bound(spec: BoundSpec, value: f64) -> Result<ResolvedBound> {
    if !(value > 0.0 && value.is_finite()) {
        return Err(invalid("bound", format!("must be positive, got {value}")));
    }
    Ok(ResolvedBound {
        spec,
        value,
        note: "user supplied".into(),
        field_mass_above_one: None,
    })
}

/// Where the ratio comes from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RatioMode {
    /// Closed form (O-U only).
    Exact,
    Pde(PdeGrid1D),
}

/// O-U target against a Brownian proposal with the same `σ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuSetup {
    pub beta: f64,
    pub sigma: f64,
    pub x0: f64,
    pub t0: f64,
    pub times: Vec<f64>,
    pub mode: RatioMode,
    pub bound: BoundSpec,
    pub seed: u64,
    pub max_attempts: u32,
    /// Replace the target by the proposal (`V ≡ 1`, `c = 1`).
    #[serde(default)]
    pub force_identity: bool,
}

/// Half-width of the default O-U window around `x0`.
pub fn ou_default_half_width(sigma: f64, t0: f64, t_end: f64) -> f64 {
    6.0 * sigma * (t_end - t0).sqrt()
}

pub fn ou_pipeline(s: &OuSetup) -> Result<Pipeline> {
    let proposal = Proposal::Brownian { sigma: s.sigma };
    proposal.validate()?;
    check_times(s.t0, &s.times)?;
    let t_end = *s.times.last().unwrap();
    let half = ou_default_half_width(s.sigma, s.t0, t_end);
    let base = |provider: RatioProvider, bound: ResolvedBound| Pipeline {
        proposal,
        x0: vec![s.x0],
        t0: s.t0,
        times: s.times.clone(),
        provider,
        bound,
        output_map: OutputMap::Identity,
        max_attempts: s.max_attempts,
        seed: s.seed,
    };
    if s.force_identity {
        let one: Arc<dyn RatioSource> = Arc::new(ConstantRatio(1.0));
        return Ok(base(Arc::new(move |_, _| Ok(one.clone())), user_bound(BoundSpec::User { value: 1.0 }, 1.0)?));
    }
    // β = 0 is allowed and makes target and proposal identical
    let coeffs = ou_ratio_coefficients(s.beta, s.sigma, s.t0, s.x0)?;
    let (provider, reference): (RatioProvider, Option<Arc<RatioField>>) = match s.mode {
        RatioMode::Exact => {
            let src: Arc<dyn RatioSource> = Arc::new(ExactOuRatio {
                beta: s.beta,
                sigma: s.sigma,
                x0: s.x0,
                t0: s.t0,
            });
            (Arc::new(move |_, _| Ok(src.clone())), None)
        }
        RatioMode::Pde(grid) => {
            let (p, f) = pde_provider_1d(
                coeffs,
                grid,
                s.t0,
                t_end,
                FieldCoords::Identity,
                Outside::Error,
                s.sigma,
                (s.x0 - half, s.x0 + half),
            )?;
            (p, Some(f))
        }
    };
    let bound = match s.bound {
        BoundSpec::Analytic { x_max } => {
            let xm = x_max.unwrap_or(s.x0.abs() + half);
            let value = (0.5 * s.beta * ((xm * xm - s.x0 * s.x0) / (s.sigma * s.sigma) + (t_end - s.t0))).exp();
            debug_assert!(s.sigma != 1.0 || value == ou_ratio_bound(s.beta, s.x0, xm, t_end - s.t0));
            ResolvedBound {
                spec: s.bound,
                value,
                note: format!("analytic O-U bound with x_max = {xm}, T = {}", t_end - s.t0),
                field_mass_above_one: reference.as_ref().map(|f| {
                    f.values.iter().filter(|&&v| v > 1.0).count() as f64 / f.values.len() as f64
                }),
            }
        }
        BoundSpec::Empirical { safety } => match &reference {
            Some(f) => empirical_bound(s.bound, safety, &f.values, "reference field")?,
            None => {
                let mut vals = Vec::new();
                for i in 0..=200 {
                    let x = s.x0 - half + 2.0 * half * i as f64 / 200.0;
                    for &t in &s.times {
                        vals.push(ou_exact_ratio(s.beta, s.sigma, s.x0, x, t - s.t0)?);
                    }
                }
                empirical_bound(s.bound, safety, &vals, "closed-form ratio on the window")?
            }
        },
        BoundSpec::User { value } => user_bound(s.bound, value)?,
    };
    Ok(base(provider, bound))
}

/// One-locus Wright–Fisher with selection `gamma`, sampled through the
/// logistic-Brownian proposal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Wf1dSetup {
    pub gamma: f64,
    /// Start in allele-frequency coordinates.
    pub x0: f64,
    pub t0: f64,
    pub times: Vec<f64>,
    /// Resolution in the angle coordinate; the policy window is ignored
    /// in favour of the support window.
    pub m: usize,
    pub n: usize,
    #[serde(default)]
    pub scheme: SpatialScheme,
    /// Distance kept from the singular angles ±π/2.
    pub margin: f64,
    #[serde(default)]
    pub convention: DriftConvention,
    pub bound: BoundSpec,
    pub seed: u64,
    pub max_attempts: u32,
    #[serde(default)]
    pub force_identity: bool,
}

/// Default distance from ±π/2 for Wright–Fisher windows.
pub const DEFAULT_SUPPORT_MARGIN: f64 = 0.05;

/// Interval of allele frequencies reachable inside the support window.
pub fn wf_window_in_frequency(margin: f64) -> (f64, f64) {
    let lim = FRAC_PI_2 - margin;
    (0.5 * (1.0 - lim.sin()), 0.5 * (1.0 + lim.sin()))
}

fn check_margin(margin: f64) -> Result<()> {
    if !(margin > 0.0 && margin < FRAC_PI_2) {
        return Err(invalid("margin", format!("must lie in (0, π/2), got {margin}")));
    }
    Ok(())
}

/// Solves the Wright–Fisher ratio once in the angle coordinate over the
/// support window `|θ| ≤ π/2 - margin`.
pub fn wf1d_window_field(s: &Wf1dSetup) -> Result<RatioField> {
    check_margin(s.margin)?;
    check_times(s.t0, &s.times)?;
    let theta0 = (2.0 * s.x0 - 1.0).asin();
    let target = wf1d_logit_model(s.gamma, s.convention)?;
    let proposal = brownian_model(1.0)?;
    let dens = ou_transition_density(0.0, 1.0, s.t0, theta0)?;
    let coeffs = build_ratio_pde_1d(&target, &proposal, &dens)?;
    let lim = FRAC_PI_2 - s.margin;
    let g = Grid1D::new(-lim, lim, s.m, s.t0, *s.times.last().unwrap(), s.n)?;
    solve_ratio_1d_with(
        &coeffs,
        &g,
        SolveOptions {
            boundary_value: 1.0,
            scheme: s.scheme,
        },
    )
}

pub fn wf1d_pipeline(s: &Wf1dSetup) -> Result<(Pipeline, Option<Arc<RatioField>>)> {
    if !Interval::UNIT.contains(s.x0) {
        return Err(invalid("x0", format!("must lie in (0, 1), got {}", s.x0)));
    }
    check_margin(s.margin)?;
    check_times(s.t0, &s.times)?;
    let y0 = sigmoid((2.0 * s.x0 - 1.0).asin());
    let mk = |provider: RatioProvider, bound: ResolvedBound| Pipeline {
        proposal: Proposal::LogisticBrownian,
        x0: vec![y0],
        t0: s.t0,
        times: s.times.clone(),
        provider,
        bound,
        output_map: OutputMap::ArcsineLogitInverse { margin: s.margin },
        max_attempts: s.max_attempts,
        seed: s.seed,
    };
    if s.force_identity {
        let one: Arc<dyn RatioSource> = Arc::new(ConstantRatio(1.0));
        let p = mk(Arc::new(move |_, _| Ok(one.clone())), user_bound(BoundSpec::User { value: 1.0 }, 1.0)?);
        return Ok((Pipeline { output_map: OutputMap::Identity, ..p }, None));
    }
    let field = Arc::new(wf1d_window_field(s)?);
    let src: Arc<dyn RatioSource> = Arc::new(FieldRatio1D {
        field: field.clone(),
        coords: FieldCoords::Logit,
        outside: Outside::Zero,
    });
    let bound = match s.bound {
        BoundSpec::Empirical { safety } => empirical_bound(s.bound, safety, &field.values, "support window")?,
        BoundSpec::User { value } => user_bound(s.bound, value)?,
        BoundSpec::Analytic { .. } => {
            return Err(invalid("bound", "no analytic bound is available for Wright-Fisher"))
        }
    };
    Ok((mk(Arc::new(move |_, _| Ok(src.clone())), bound), Some(field)))
}

/// Two-locus Wright–Fisher sampled through the planar logistic-Brownian
/// proposal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Wf2dSetup {
    pub h: f64,
    /// Start in allele-frequency coordinates.
    pub x0: [f64; 2],
    pub rho: f64,
    pub t0: f64,
    pub times: Vec<f64>,
    pub m: usize,
    pub n: usize,
    pub beta_cap: f64,
    pub margin: f64,
    #[serde(default)]
    pub convention: DriftConvention,
    pub bound: BoundSpec,
    pub seed: u64,
    pub max_attempts: u32,
}

/// Half-width of the logit window: `min(beta_cap, π/2 - margin)`.
pub fn wf2d_half_width(beta_cap: f64, margin: f64) -> f64 {
    beta_cap.min(FRAC_PI_2 - margin)
}

/// Solves the planar ratio over the logit window. `n` is raised when
/// needed so that `Δt ≤ min(Δx, Δy)`.
pub fn wf2d_window_field(s: &Wf2dSetup) -> Result<RatioField2D> {
    check_margin(s.margin)?;
    check_times(s.t0, &s.times)?;
    if !(s.beta_cap > 0.0) {
        return Err(invalid("beta_cap", "must be positive"));
    }
    for v in s.x0 {
        if !Interval::UNIT.contains(v) {
            return Err(invalid("x0", format!("components must lie in (0, 1), got {v}")));
        }
    }
    let b0 = [(2.0 * s.x0[0] - 1.0).asin(), (2.0 * s.x0[1] - 1.0).asin()];
    let coeffs = wf2d_ratio_coefficients(s.h, b0, s.rho, s.t0, s.convention)?;
    let l = wf2d_half_width(s.beta_cap, s.margin);
    let t_end = *s.times.last().unwrap();
    let dx = 2.0 * l / s.m as f64;
    let n = s.n.max(((t_end - s.t0) / dx).ceil() as usize);
    let g = Grid2D::logit_window(l, s.m, s.t0, t_end, n)?;
    solve_ratio_2d(&coeffs, &g)
}

pub fn wf2d_pipeline(s: &Wf2dSetup) -> Result<(Pipeline, Arc<RatioField2D>)> {
    if s.rho != 0.0 {
        return Err(Error::IncompatibleModels(format!(
            "a correlated proposal (rho = {}) does not share the target's diagonal diffusion",
            s.rho
        )));
    }
    let field = Arc::new(wf2d_window_field(s)?);
    let src: Arc<dyn RatioSource> = Arc::new(FieldRatio2D {
        field: field.clone(),
        coords: FieldCoords::Logit,
        outside: Outside::Zero,
    });
    let bound = match s.bound {
        BoundSpec::Empirical { safety } => empirical_bound(s.bound, safety, &field.values, "logit window")?,
        BoundSpec::User { value } => user_bound(s.bound, value)?,
        BoundSpec::Analytic { .. } => {
            return Err(invalid("bound", "no analytic bound is available for Wright-Fisher"))
        }
    };
    let y0: Vec<f64> = s.x0.iter().map(|&x| sigmoid((2.0 * x - 1.0).asin())).collect();
    let p = Pipeline {
        proposal: Proposal::LogisticBrownian2D { rho: 0.0 },
        x0: y0,
        t0: s.t0,
        times: s.times.clone(),
        provider: Arc::new(move |_, _| Ok(src.clone())),
        bound,
        output_map: OutputMap::ArcsineLogitInverse { margin: s.margin },
        max_attempts: s.max_attempts,
        seed: s.seed,
    };
    Ok((p, field))
}

/// Polynomial-drift target against a Brownian proposal with the same `σ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Custom1dSetup {
    pub drift: Vec<f64>,
    pub sigma: f64,
    pub x0: f64,
    pub t0: f64,
    pub times: Vec<f64>,
    pub grid: PdeGrid1D,
    pub bound: BoundSpec,
    pub seed: u64,
    pub max_attempts: u32,
}

pub fn custom1d_coefficients(drift: &[f64], sigma: f64, t0: f64, x0: f64) -> Result<RatioCoefficients1D> {
    let target = polynomial_drift_model(drift, sigma)?;
    let proposal = brownian_model(sigma)?;
    build_ratio_pde_1d(&target, &proposal, &ou_transition_density(0.0, sigma, t0, x0)?)
}

pub fn custom1d_pipeline(s: &Custom1dSetup) -> Result<Pipeline> {
    check_times(s.t0, &s.times)?;
    let t_end = *s.times.last().unwrap();
    let coeffs = custom1d_coefficients(&s.drift, s.sigma, s.t0, s.x0)?;
    let half = ou_default_half_width(s.sigma, s.t0, t_end);
    let (provider, reference) = pde_provider_1d(
        coeffs,
        s.grid,
        s.t0,
        t_end,
        FieldCoords::Identity,
        Outside::Error,
        s.sigma,
        (s.x0 - half, s.x0 + half),
    )?;
    let bound = match s.bound {
        BoundSpec::Empirical { safety } => empirical_bound(s.bound, safety, &reference.values, "reference field")?,
        BoundSpec::User { value } => user_bound(s.bound, value)?,
        BoundSpec::Analytic { .. } => {
            return Err(invalid("bound", "no analytic bound is available for a custom drift"))
        }
    };
    Ok(Pipeline {
        proposal: Proposal::Brownian { sigma: s.sigma },
        x0: vec![s.x0],
        t0: s.t0,
        times: s.times.clone(),
        provider,
        bound,
        output_map: OutputMap::Identity,
        max_attempts: s.max_attempts,
        seed: s.seed,
    })
}

/// Accepted values pooled at one time index.
#[derive(Debug, Clone, PartialEq)]
pub struct Pooled {
    pub values: Vec<f64>,
    pub paths: usize,
    pub failed_paths: usize,
}

/// Samples paths `0, 1, 2, …` in parallel batches until at least `target`
/// accepted values at time index `i` (coordinate `k`) are pooled or
/// `max_paths` paths have been drawn. Paths that fail every attempt
/// contribute nothing.
pub fn pool_until(p: &Pipeline, i: usize, k: usize, target: usize, max_paths: usize) -> Result<Pooled> {
    if i >= p.times.len() || k >= p.x0.len() {
        return Err(Error::InvalidInput(format!("no time index {i} / coordinate {k} on this pipeline")));
    }
    const BATCH: usize = 4096;
    let mut out = Pooled {
        values: Vec::with_capacity(target),
        paths: 0,
        failed_paths: 0,
    };
    while out.values.len() < target && out.paths < max_paths {
        let end = (out.paths + BATCH).min(max_paths);
        let batch: Vec<Result<PathSample>> =
            (out.paths as u64..end as u64).into_par_iter().map(|n| p.sample_path(n)).collect();
        for r in batch {
            match r {
                Ok(s) if s.decisions[i].is_accepted() => out.values.push(s.output[k][i]),
                Ok(_) => {}
                Err(Error::SamplingFailure { .. }) => out.failed_paths += 1,
                Err(e) => return Err(e),
            }
        }
        out.paths = end;
    }
    Ok(out)
}

/// Index of `t` among `times`, to within `1e-9`.
pub fn time_index(times: &[f64], t: f64) -> Result<usize> {
    times
        .iter()
        .position(|&s| (s - t).abs() <= 1e-9 * (1.0 + t.abs()))
        .ok_or_else(|| Error::InvalidInput(format!("{t} is not one of the path times")))
}

/// Evenly spaced path times `t0 + (T - t0)·k/n`, `k = 1..=n`.
pub fn uniform_times(t0: f64, t_end: f64, n: usize) -> Vec<f64> {
    (1..=n)
        .map(|k| if k == n { t_end } else { t0 + (t_end - t0) * k as f64 / n as f64 })
        .collect()
}
