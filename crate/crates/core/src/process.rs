//! Diffusion models, closed-form proposal densities and the componentwise
//! state maps that put a target and a proposal on a common diffusion
//! coefficient.
//!
//! Every model stores its *squared* diffusion, i.e. the coefficient that
//! multiplies the second-order term of the forward Kolmogorov equation
//! (`½ ∂²(σ P)`). An SDE `dX = S dt + b dW` is therefore stored with
//! `sq_diffusion = b²`.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::sync::Arc;

use crate::error::{invalid, Error, Result};

/// `(x, t) -> value` for scalar models.
pub type ScalarFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
/// `(x, t) -> value` for planar models.
pub type PlanarFn = Arc<dyn Fn([f64; 2], f64) -> [f64; 2] + Send + Sync>;

/// Step used for central differences when a model carries no analytic
/// derivative. The truncation error is O(step²).
pub const FD_STEP: f64 = 1e-6;

/// Open interval, possibly unbounded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const REAL: Interval = Interval {
        lo: f64::NEG_INFINITY,
        hi: f64::INFINITY,
    };
    pub const UNIT: Interval = Interval { lo: 0.0, hi: 1.0 };

    pub fn new(lo: f64, hi: f64) -> Self {
        Interval { lo, hi }
    }

    pub fn contains(&self, x: f64) -> bool {
        x > self.lo && x < self.hi
    }

    pub fn is_bounded(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite()
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.lo, self.hi)
    }
}

/// Logit map `log(y / (1 - y))`.
#[inline]
pub fn logit(y: f64) -> f64 {
    (y / (1.0 - y)).ln()
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Sign of the `tan β` term in the Wright–Fisher drift after the
/// arcsine-logit change of variables.
///
/// Itô's lemma applied to `y = sigmoid(asin(2x - 1))` gives
/// `½ y(1-y)(1 - 2y + tan β + γ cos β)`. `Derived` uses that sign and
/// reproduces the Wright–Fisher law after mapping back; `Printed` flips the
/// `tan β` term and is kept only for cross-checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DriftConvention {
    #[default]
    Derived,
    Printed,
}

impl DriftConvention {
    pub fn tan_sign(self) -> f64 {
        match self {
            DriftConvention::Derived => 1.0,
            DriftConvention::Printed => -1.0,
        }
    }
}

#[derive(Clone)]
pub(crate) struct ScalarDynamics {
    drift: ScalarFn,
    drift_dx: Option<ScalarFn>,
    sq_diffusion: ScalarFn,
    sq_diffusion_dx: Option<ScalarFn>,
}

#[derive(Clone)]
pub(crate) struct PlanarDynamics {
    drift: PlanarFn,
    /// Diagonal of the squared diffusion matrix.
    sq_diffusion: PlanarFn,
}

#[derive(Clone)]
pub(crate) enum Dynamics {
    Scalar(ScalarDynamics),
    Planar(PlanarDynamics),
}

/// A time-homogeneous-diffusion SDE `dX = S(X, t) dt + √σ(X) dW`.
#[derive(Clone)]
pub struct SdeModel {
    label: String,
    state_space: Vec<Interval>,
    dynamics: Dynamics,
}

impl fmt::Debug for SdeModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SdeModel")
            .field("label", &self.label)
            .field("dim", &self.dim())
            .field("state_space", &self.state_space)
            .finish()
    }
}

impl SdeModel {
    /// Scalar model from closures. Missing derivatives fall back to central
    /// differences with step [`FD_STEP`].
    pub fn scalar(
        label: impl Into<String>,
        state_space: Interval,
        drift: ScalarFn,
        drift_dx: Option<ScalarFn>,
        sq_diffusion: ScalarFn,
        sq_diffusion_dx: Option<ScalarFn>,
    ) -> Self {
        SdeModel {
            label: label.into(),
            state_space: vec![state_space],
            dynamics: Dynamics::Scalar(ScalarDynamics {
                drift,
                drift_dx,
                sq_diffusion,
                sq_diffusion_dx,
            }),
        }
    }

    /// Planar model with a diagonal squared diffusion.
    pub fn planar(
        label: impl Into<String>,
        state_space: [Interval; 2],
        drift: PlanarFn,
        sq_diffusion_diag: PlanarFn,
    ) -> Self {
        SdeModel {
            label: label.into(),
            state_space: state_space.to_vec(),
            dynamics: Dynamics::Planar(PlanarDynamics {
                drift,
                sq_diffusion: sq_diffusion_diag,
            }),
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn dim(&self) -> usize {
        self.state_space.len()
    }

    pub fn state_space(&self) -> &[Interval] {
        &self.state_space
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::InvalidInput(format!(
                "state has {} coordinates, model `{}` has dimension {}",
                x.len(),
                self.label,
                self.dim()
            )));
        }
        for (&xi, iv) in x.iter().zip(&self.state_space) {
            if !iv.contains(xi) {
                return Err(Error::BoundaryEvaluation(xi));
            }
        }
        Ok(())
    }

    fn scalar_dyn(&self) -> Result<&ScalarDynamics> {
        match &self.dynamics {
            Dynamics::Scalar(d) => Ok(d),
            Dynamics::Planar(_) => Err(Error::InvalidInput(format!(
                "model `{}` is two-dimensional",
                self.label
            ))),
        }
    }

    fn planar_dyn(&self) -> Result<&PlanarDynamics> {
        match &self.dynamics {
            Dynamics::Planar(d) => Ok(d),
            Dynamics::Scalar(_) => Err(Error::InvalidInput(format!(
                "model `{}` is one-dimensional",
                self.label
            ))),
        }
    }

    /// Drift vector at `(x, t)`.
    pub fn drift(&self, x: &[f64], t: f64) -> Result<Vec<f64>> {
        self.check_point(x)?;
        Ok(match &self.dynamics {
            Dynamics::Scalar(d) => vec![(d.drift)(x[0], t)],
            Dynamics::Planar(d) => (d.drift)([x[0], x[1]], t).to_vec(),
        })
    }

    /// Squared diffusion matrix at `x`, row-major `dim × dim`.
    pub fn sq_diffusion(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_point(x)?;
        Ok(match &self.dynamics {
            Dynamics::Scalar(d) => vec![(d.sq_diffusion)(x[0], 0.0)],
            Dynamics::Planar(d) => {
                let s = (d.sq_diffusion)([x[0], x[1]], 0.0);
                vec![s[0], 0.0, 0.0, s[1]]
            }
        })
    }

    pub fn drift_1d(&self, x: f64, t: f64) -> Result<f64> {
        let d = self.scalar_dyn()?;
        self.check_point(&[x])?;
        Ok((d.drift)(x, t))
    }

    pub fn sq_diffusion_1d(&self, x: f64) -> Result<f64> {
        let d = self.scalar_dyn()?;
        self.check_point(&[x])?;
        Ok((d.sq_diffusion)(x, 0.0))
    }

    /// `∂x S(x, t)`, analytic when registered.
    pub fn drift_dx_1d(&self, x: f64, t: f64) -> Result<f64> {
        let d = self.scalar_dyn()?;
        self.check_point(&[x])?;
        Ok(match &d.drift_dx {
            Some(f) => f(x, t),
            None => central_diff(|z| (d.drift)(z, t), x),
        })
    }

    /// `∂x σ(x)`, analytic when registered.
    pub fn sq_diffusion_dx_1d(&self, x: f64) -> Result<f64> {
        let d = self.scalar_dyn()?;
        self.check_point(&[x])?;
        Ok(match &d.sq_diffusion_dx {
            Some(f) => f(x, 0.0),
            None => central_diff(|z| (d.sq_diffusion)(z, 0.0), x),
        })
    }

    pub fn has_analytic_derivatives(&self) -> bool {
        match &self.dynamics {
            Dynamics::Scalar(d) => d.drift_dx.is_some() && d.sq_diffusion_dx.is_some(),
            Dynamics::Planar(_) => false,
        }
    }

    pub fn drift_2d(&self, x: [f64; 2], t: f64) -> Result<[f64; 2]> {
        let d = self.planar_dyn()?;
        self.check_point(&x)?;
        Ok((d.drift)(x, t))
    }

    /// Diagonal of the squared diffusion.
    pub fn sq_diffusion_2d(&self, x: [f64; 2]) -> Result<[f64; 2]> {
        let d = self.planar_dyn()?;
        self.check_point(&x)?;
        Ok((d.sq_diffusion)(x, 0.0))
    }
}

#[inline]
pub(crate) fn central_diff(f: impl Fn(f64) -> f64, x: f64) -> f64 {
    (f(x + FD_STEP) - f(x - FD_STEP)) / (2.0 * FD_STEP)
}

fn positive(name: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(name, format!("must be positive and finite, got {v}")))
    }
}

fn finite(name: &'static str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(invalid(name, format!("must be finite, got {v}")))
    }
}

/// `dX = σ dW`.
pub fn brownian_model(sigma: f64) -> Result<SdeModel> {
    positive("sigma", sigma)?;
    let s2 = sigma * sigma;
    Ok(SdeModel::scalar(
        format!("brownian(sigma={sigma})"),
        Interval::REAL,
        Arc::new(|_, _| 0.0),
        Some(Arc::new(|_, _| 0.0)),
        Arc::new(move |_, _| s2),
        Some(Arc::new(|_, _| 0.0)),
    ))
}

/// Ornstein–Uhlenbeck `dX = -βX dt + σ dW`.
pub fn ou_model(beta: f64, sigma: f64) -> Result<SdeModel> {
    positive("sigma", sigma)?;
    if !(beta.is_finite() && beta >= 0.0) {
        return Err(invalid("beta", format!("must be >= 0, got {beta}")));
    }
    let s2 = sigma * sigma;
    Ok(SdeModel::scalar(
        format!("ou(beta={beta},sigma={sigma})"),
        Interval::REAL,
        Arc::new(move |x, _| -beta * x),
        Some(Arc::new(move |_, _| -beta)),
        Arc::new(move |_, _| s2),
        Some(Arc::new(|_, _| 0.0)),
    ))
}

/// Sigmoid image of a standard Brownian motion:
/// `dy = ½ y(1-y)(1-2y) dt + y(1-y) dW` on (0, 1).
pub fn logistic_brownian_model() -> SdeModel {
    SdeModel::scalar(
        "logistic-brownian",
        Interval::UNIT,
        Arc::new(|y, _| 0.5 * y * (1.0 - y) * (1.0 - 2.0 * y)),
        Some(Arc::new(|y, _| 0.5 * (1.0 - 6.0 * y + 6.0 * y * y))),
        Arc::new(|y, _| {
            let u = y * (1.0 - y);
            u * u
        }),
        Some(Arc::new(|y, _| 2.0 * y * (1.0 - y) * (1.0 - 2.0 * y))),
    )
}


/// `dX = (c0 + c1 X + c2 X² + …) dt + σ dW`.
pub fn polynomial_drift_model(coeffs: &[f64], sigma: f64) -> Result<SdeModel> {
    positive("sigma", sigma)?;
    if coeffs.is_empty() || !coeffs.iter().all(|c| c.is_finite()) {
        return Err(invalid("drift", "need at least one finite coefficient"));
    }
    let c: Arc<[f64]> = coeffs.into();
    let d = c.clone();
    let s2 = sigma * sigma;
    Ok(SdeModel::scalar(
        format!("polynomial-drift({coeffs:?},sigma={sigma})"),
        Interval::REAL,
        Arc::new(move |x, _| c.iter().rev().fold(0.0, |acc, &k| acc * x + k)),
        Some(Arc::new(move |x, _| {
            d.iter().enumerate().skip(1).rev().fold(0.0, |acc, (n, &k)| acc * x + n as f64 * k)
        })),
        Arc::new(move |_, _| s2),
        Some(Arc::new(|_, _| 0.0)),
    ))
}
/// Wright–Fisher with selection, `dx = γx(1-x) dt + √(x(1-x)) dW`.
pub fn wf1d_model(gamma: f64) -> Result<SdeModel> {
    finite("gamma", gamma)?;
    Ok(SdeModel::scalar(
        format!("wright-fisher(gamma={gamma})"),
        Interval::UNIT,
        Arc::new(move |x, _| gamma * x * (1.0 - x)),
        Some(Arc::new(move |x, _| gamma * (1.0 - 2.0 * x))),
        Arc::new(|x, _| x * (1.0 - x)),
        Some(Arc::new(|x, _| 1.0 - 2.0 * x)),
    ))
}

/// Image of the arcsine-logit map `y = sigmoid(asin(2x - 1))`: the interval
/// `(sigmoid(-π/2), sigmoid(π/2))`.
pub fn arcsine_logit_image() -> Interval {
    Interval::new(sigmoid(-FRAC_PI_2), sigmoid(FRAC_PI_2))
}

/// Wright–Fisher diffusion after the arcsine-logit map. It shares the
/// squared diffusion `(y(1-y))²` with [`logistic_brownian_model`].
///
/// The process lives on [`arcsine_logit_image`]; the state space is kept as
/// (0, 1) so that both models of a ratio pair are defined on the same set,
/// but the drift diverges at the edges of the image.
pub fn wf1d_transformed_model(gamma: f64, convention: DriftConvention) -> Result<SdeModel> {
    finite("gamma", gamma)?;
    let s = convention.tan_sign();
    Ok(SdeModel::scalar(
        format!("wright-fisher-transformed(gamma={gamma},{convention:?})"),
        Interval::UNIT,
        Arc::new(move |y, _| {
            let b = logit(y);
            0.5 * y * (1.0 - y) * (1.0 - 2.0 * y + s * b.tan() + gamma * b.cos())
        }),
        Some(Arc::new(move |y, _| {
            let b = logit(y);
            let u = y * (1.0 - y);
            let w = 1.0 - 2.0 * y;
            let sec2 = 1.0 / (b.cos() * b.cos());
            0.5 * w * w - u + 0.5 * w * (s * b.tan() + gamma * b.cos())
                + 0.5 * (s * sec2 - gamma * b.sin())
        })),
        Arc::new(|y, _| {
            let u = y * (1.0 - y);
            u * u
        }),
        Some(Arc::new(|y, _| 2.0 * y * (1.0 - y) * (1.0 - 2.0 * y))),
    ))
}

/// Wright–Fisher in the angle coordinate `θ = asin(2x - 1)`, which is the
/// logit of the arcsine-logit image: `dθ = (½γ cos θ + ½ tan θ) dt + dW` on
/// (-π/2, π/2). Pairs with a unit Brownian proposal.
pub fn wf1d_logit_model(gamma: f64, convention: DriftConvention) -> Result<SdeModel> {
    finite("gamma", gamma)?;
    let s = convention.tan_sign();
    Ok(SdeModel::scalar(
        format!("wright-fisher-angle(gamma={gamma},{convention:?})"),
        Interval::new(-FRAC_PI_2, FRAC_PI_2),
        Arc::new(move |b, _| 0.5 * gamma * b.cos() + 0.5 * s * b.tan()),
        Some(Arc::new(move |b, _| -0.5 * gamma * b.sin() + 0.5 * s / (b.cos() * b.cos()))),
        Arc::new(|_, _| 1.0),
        Some(Arc::new(|_, _| 0.0)),
    ))
}

/// Two-locus Wright–Fisher with pairwise selection `h`, original coordinates.
pub fn wf2d_model(h: f64) -> Result<SdeModel> {
    finite("h", h)?;
    Ok(SdeModel::planar(
        format!("wright-fisher-2d(h={h})"),
        [Interval::UNIT, Interval::UNIT],
        Arc::new(move |x, _| {
            [
                h * x[0] * (1.0 - x[0]) * x[1],
                h * x[1] * (1.0 - x[1]) * x[0],
            ]
        }),
        Arc::new(|x, _| [x[0] * (1.0 - x[0]), x[1] * (1.0 - x[1])]),
    ))
}

/// Returns `(target, proposal)`: the two-locus Wright–Fisher model after the
/// componentwise arcsine-logit map, and the componentwise sigmoid image of a
/// planar Brownian motion.
pub fn wf2d_models(h: f64, convention: DriftConvention) -> Result<(SdeModel, SdeModel)> {
    finite("h", h)?;
    let s = convention.tan_sign();
    let sq: PlanarFn = Arc::new(|y, _| {
        let u = y[0] * (1.0 - y[0]);
        let v = y[1] * (1.0 - y[1]);
        [u * u, v * v]
    });
    let target = SdeModel::planar(
        format!("wright-fisher-2d-transformed(h={h},{convention:?})"),
        [Interval::UNIT, Interval::UNIT],
        Arc::new(move |y, _| {
            let b = [logit(y[0]), logit(y[1])];
            let comp = |i: usize, j: usize| {
                0.5 * y[i]
                    * (1.0 - y[i])
                    * (1.0 - 2.0 * y[i] + s * b[i].tan()
                        + 0.5 * h * (1.0 + b[j].sin()) * b[i].cos())
            };
            [comp(0, 1), comp(1, 0)]
        }),
        sq.clone(),
    );
    let proposal = SdeModel::planar(
        "logistic-brownian-2d",
        [Interval::UNIT, Interval::UNIT],
        Arc::new(|y, _| {
            [
                0.5 * y[0] * (1.0 - y[0]) * (1.0 - 2.0 * y[0]),
                0.5 * y[1] * (1.0 - y[1]) * (1.0 - 2.0 * y[1]),
            ]
        }),
        sq,
    );
    Ok((target, proposal))
}

type DensityFn = Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>;
type GradFn = Arc<dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync>;

/// Transition density `P(t, x | t0, x0)` of a proposal process from a fixed
/// origin, together with `∂x log P`.
#[derive(Clone)]
pub struct ClosedFormDensity {
    label: String,
    t0: f64,
    x0: Vec<f64>,
    eval: DensityFn,
    log_grad: GradFn,
}

impl fmt::Debug for ClosedFormDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ClosedFormDensity")
            .field("label", &self.label)
            .field("t0", &self.t0)
            .field("x0", &self.x0)
            .finish()
    }
}

impl ClosedFormDensity {
    pub fn new(
        label: impl Into<String>,
        t0: f64,
        x0: Vec<f64>,
        eval: DensityFn,
        log_grad: GradFn,
    ) -> Self {
        ClosedFormDensity {
            label: label.into(),
            t0,
            x0,
            eval,
            log_grad,
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn dim(&self) -> usize {
        self.x0.len()
    }

    pub fn origin(&self) -> (f64, &[f64]) {
        (self.t0, &self.x0)
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if t > self.t0 {
            Ok(())
        } else {
            Err(Error::InvalidTime { t0: self.t0, t })
        }
    }

    pub fn eval(&self, t: f64, x: &[f64]) -> Result<f64> {
        self.check_time(t)?;
        Ok((self.eval)(t, x))
    }

    pub fn log_grad(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        self.check_time(t)?;
        let mut g = vec![0.0; x.len()];
        (self.log_grad)(t, x, &mut g);
        Ok(g)
    }

    /// Scalar fast path; the caller guarantees `t > t0`.
    #[inline]
    pub(crate) fn log_grad_1d_unchecked(&self, t: f64, x: f64) -> f64 {
        let mut g = [0.0];
        (self.log_grad)(t, &[x], &mut g);
        g[0]
    }
}

fn ou_moments(beta: f64, sigma: f64, x0: f64, tau: f64) -> (f64, f64) {
    if beta == 0.0 {
        (x0, sigma * sigma * tau)
    } else {
        let mean = x0 * (-beta * tau).exp();
        // -expm1 keeps the variance accurate for vanishing beta
        let var = sigma * sigma * -(-2.0 * beta * tau).exp_m1() / (2.0 * beta);
        (mean, var)
    }
}

/// Mean and variance of the O-U transition law after elapsed time `tau`.
pub fn ou_mean_var(beta: f64, sigma: f64, x0: f64, tau: f64) -> (f64, f64) {
    ou_moments(beta, sigma, x0, tau)
}

/// Gaussian O-U transition density from `(t0, x0)`; `beta = 0` is the
/// Brownian case with variance `σ²(t - t0)`.
pub fn ou_transition_density(beta: f64, sigma: f64, t0: f64, x0: f64) -> Result<ClosedFormDensity> {
    positive("sigma", sigma)?;
    if !(beta.is_finite() && beta >= 0.0) {
        return Err(invalid("beta", format!("must be >= 0, got {beta}")));
    }
    finite("x0", x0)?;
    Ok(ClosedFormDensity::new(
        format!("ou-density(beta={beta},sigma={sigma},x0={x0})"),
        t0,
        vec![x0],
        Arc::new(move |t, x| {
            let (m, v) = ou_moments(beta, sigma, x0, t - t0);
            let z = x[0] - m;
            (-0.5 * z * z / v).exp() / (2.0 * PI * v).sqrt()
        }),
        Arc::new(move |t, x, g| {
            let (m, v) = ou_moments(beta, sigma, x0, t - t0);
            g[0] = -(x[0] - m) / v;
        }),
    ))
}

/// Transition density of [`logistic_brownian_model`] from `(t0, y0)`.
pub fn logistic_brownian_density(t0: f64, y0: f64) -> Result<ClosedFormDensity> {
    if !Interval::UNIT.contains(y0) {
        return Err(invalid("y0", format!("must lie in (0, 1), got {y0}")));
    }
    let b0 = logit(y0);
    Ok(ClosedFormDensity::new(
        format!("logistic-brownian-density(y0={y0})"),
        t0,
        vec![y0],
        Arc::new(move |t, y| {
            let y = y[0];
            if !Interval::UNIT.contains(y) {
                return 0.0;
            }
            let tau = t - t0;
            let d = logit(y) - b0;
            (-0.5 * d * d / tau).exp() / ((2.0 * PI * tau).sqrt() * y * (1.0 - y))
        }),
        Arc::new(move |t, y, g| {
            let y = y[0];
            if !Interval::UNIT.contains(y) {
                g[0] = 0.0;
                return;
            }
            let u = y * (1.0 - y);
            g[0] = -(logit(y) - b0) / ((t - t0) * u) - (1.0 - 2.0 * y) / u;
        }),
    ))
}

/// Density of the componentwise sigmoid image of a planar Brownian motion
/// with unit variances and correlation `rho`, started at `y0`.
pub fn bivariate_logistic_density(t0: f64, y0: [f64; 2], rho: f64) -> Result<ClosedFormDensity> {
    for &y in &y0 {
        if !Interval::UNIT.contains(y) {
            return Err(invalid("y0", format!("components must lie in (0, 1), got {y}")));
        }
    }
    if !(rho.is_finite() && rho.abs() < 1.0) {
        return Err(invalid("rho", format!("|rho| must be < 1, got {rho}")));
    }
    let b0 = [logit(y0[0]), logit(y0[1])];
    let one_m = 1.0 - rho * rho;
    Ok(ClosedFormDensity::new(
        format!("bivariate-logistic-density(y0={y0:?},rho={rho})"),
        t0,
        y0.to_vec(),
        Arc::new(move |t, y| {
            if !(Interval::UNIT.contains(y[0]) && Interval::UNIT.contains(y[1])) {
                return 0.0;
            }
            let tau = t - t0;
            let u = logit(y[0]) - b0[0];
            let v = logit(y[1]) - b0[1];
            let q = u * u + v * v - 2.0 * rho * u * v;
            let jac = y[0] * (1.0 - y[0]) * y[1] * (1.0 - y[1]);
            (-q / (2.0 * tau * one_m)).exp() / (2.0 * PI * tau * one_m.sqrt() * jac)
        }),
        Arc::new(move |t, y, g| {
            if !(Interval::UNIT.contains(y[0]) && Interval::UNIT.contains(y[1])) {
                g[0] = 0.0;
                g[1] = 0.0;
                return;
            }
            let tau = t - t0;
            let d = [logit(y[0]) - b0[0], logit(y[1]) - b0[1]];
            for i in 0..2 {
                let j = 1 - i;
                let ui = y[i] * (1.0 - y[i]);
                g[i] = -(d[i] - rho * d[j]) / (tau * one_m * ui) - (1.0 - 2.0 * y[i]) / ui;
            }
        }),
    ))
}

type MapFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Strictly monotone bijection of one coordinate.
#[derive(Clone)]
pub struct ScalarMap {
    forward: MapFn,
    inverse: MapFn,
    /// `|d inverse / dy|`
    inverse_jacobian: MapFn,
    /// `d/dy log |d inverse / dy|`
    inverse_jacobian_log_grad: MapFn,
    domain: Interval,
    codomain: Interval,
}

/// Componentwise state transform `y = g(x)`.
#[derive(Clone)]
pub struct StateTransform {
    label: String,
    maps: Vec<ScalarMap>,
}

impl fmt::Debug for StateTransform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("StateTransform")
            .field("label", &self.label)
            .field("dim", &self.maps.len())
            .finish()
    }
}

impl ScalarMap {
    fn identity() -> Self {
        ScalarMap {
            forward: Arc::new(|x| x),
            inverse: Arc::new(|y| y),
            inverse_jacobian: Arc::new(|_| 1.0),
            inverse_jacobian_log_grad: Arc::new(|_| 0.0),
            domain: Interval::REAL,
            codomain: Interval::REAL,
        }
    }

    fn sigmoid() -> Self {
        ScalarMap {
            forward: Arc::new(sigmoid),
            inverse: Arc::new(logit),
            inverse_jacobian: Arc::new(|y| 1.0 / (y * (1.0 - y))),
            inverse_jacobian_log_grad: Arc::new(|y| -(1.0 - 2.0 * y) / (y * (1.0 - y))),
            domain: Interval::REAL,
            codomain: Interval::UNIT,
        }
    }

    fn arcsine_logit() -> Self {
        ScalarMap {
            forward: Arc::new(|x| sigmoid((2.0 * x - 1.0).clamp(-1.0, 1.0).asin())),
            inverse: Arc::new(|y| 0.5 * (1.0 + logit(y).sin())),
            inverse_jacobian: Arc::new(|y| 0.5 * logit(y).cos() / (y * (1.0 - y))),
            inverse_jacobian_log_grad: Arc::new(|y| {
                let u = y * (1.0 - y);
                -logit(y).tan() / u - (1.0 - 2.0 * y) / u
            }),
            domain: Interval::UNIT,
            codomain: arcsine_logit_image(),
        }
    }
}

impl StateTransform {
    pub fn identity(dim: usize) -> Self {
        StateTransform {
            label: "identity".into(),
            maps: vec![ScalarMap::identity(); dim],
        }
    }

    /// `g(x) = 1 / (1 + e^{-x})` per coordinate.
    pub fn sigmoid(dim: usize) -> Self {
        StateTransform {
            label: "sigmoid".into(),
            maps: vec![ScalarMap::sigmoid(); dim],
        }
    }

    /// `f(x) = 1 / (1 + e^{-asin(2x - 1)})` per coordinate.
    pub fn arcsine_logit(dim: usize) -> Self {
        StateTransform {
            label: "arcsine-logit".into(),
            maps: vec![ScalarMap::arcsine_logit(); dim],
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn dim(&self) -> usize {
        self.maps.len()
    }

    pub fn domain(&self) -> Vec<Interval> {
        self.maps.iter().map(|m| m.domain).collect()
    }

    pub fn codomain(&self) -> Vec<Interval> {
        self.maps.iter().map(|m| m.codomain).collect()
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.maps).map(|(&v, m)| (m.forward)(v)).collect()
    }

    pub fn inverse(&self, y: &[f64]) -> Vec<f64> {
        y.iter().zip(&self.maps).map(|(&v, m)| (m.inverse)(v)).collect()
    }

    pub fn forward_scalar(&self, x: f64) -> f64 {
        (self.maps[0].forward)(x)
    }

    pub fn inverse_scalar(&self, y: f64) -> f64 {
        (self.maps[0].inverse)(y)
    }

    fn in_codomain(&self, y: &[f64]) -> bool {
        y.iter().zip(&self.maps).all(|(&v, m)| m.codomain.contains(v))
    }
}

/// Density of `Y = g(X)` for `X ~ base`: `f_X(g⁻¹(y)) |J|` on the codomain
/// of `map`, zero elsewhere.
pub fn transform_density(base: &ClosedFormDensity, map: &StateTransform) -> Result<ClosedFormDensity> {
    if base.dim() != map.dim() {
        return Err(Error::InvalidInput(format!(
            "density dimension {} does not match transform dimension {}",
            base.dim(),
            map.dim()
        )));
    }
    let (t0, x0) = base.origin();
    let y0 = map.forward(x0);
    let b_eval = base.eval.clone();
    let b_grad = base.log_grad.clone();
    let m1 = map.clone();
    let m2 = map.clone();
    Ok(ClosedFormDensity::new(
        format!("{}∘{}", base.label(), map.label()),
        t0,
        y0,
        Arc::new(move |t, y| {
            if !m1.in_codomain(y) {
                return 0.0;
            }
            let x = m1.inverse(y);
            let jac: f64 = y
                .iter()
                .zip(&m1.maps)
                .map(|(&v, m)| (m.inverse_jacobian)(v).abs())
                .product();
            b_eval(t, &x) * jac
        }),
        Arc::new(move |t, y, g| {
            if !m2.in_codomain(y) {
                g.iter_mut().for_each(|v| *v = 0.0);
                return;
            }
            let x = m2.inverse(y);
            b_grad(t, &x, g);
            for ((gi, &yi), m) in g.iter_mut().zip(y).zip(&m2.maps) {
                *gi = *gi * (m.inverse_jacobian)(yi) + (m.inverse_jacobian_log_grad)(yi);
            }
        }),
    ))
}

/// Thresholds for [`check_aronson_preconditions`].
#[derive(Debug, Clone, Copy)]
pub struct AronsonOptions {
    /// Smallest admissible eigenvalue of the squared diffusion.
    pub eig_floor: f64,
    /// Largest admissible `|S(x)|` over the grid.
    pub drift_cap: f64,
    /// Time at which the drift is evaluated.
    pub t: f64,
}

impl Default for AronsonOptions {
    fn default() -> Self {
        AronsonOptions {
            eig_floor: 1e-8,
            drift_cap: 1e6,
            t: 0.0,
        }
    }
}

/// Diagnostic report on bounded drift and uniform ellipticity over a grid.
#[derive(Debug, Clone, serde::Serialize)]
pub struct AronsonReport {
    pub sup_drift: f64,
    /// `|S|` still increasing at the outermost grid points, the finite-grid
    /// signature of an unbounded drift.
    pub drift_grows_at_edge: bool,
    pub drift_bounded: bool,
    pub min_eig: f64,
    pub max_eig: f64,
    /// Smallest λ with `λ⁻¹ ≤ eig ≤ λ` over the grid.
    pub lambda: f64,
    pub diffusion_nondegenerate: bool,
    pub degenerate_points: Vec<Vec<f64>>,
}

/// Checks the hypotheses of Aronson's two-sided Gaussian bound on a finite
/// point set. Purely diagnostic.
pub fn check_aronson_preconditions(
    model: &SdeModel,
    grid: &[Vec<f64>],
    opts: AronsonOptions,
) -> Result<AronsonReport> {
    if grid.is_empty() {
        return Err(Error::InvalidInput("empty grid".into()));
    }
    let mut norms = Vec::with_capacity(grid.len());
    let mut drifts = Vec::with_capacity(grid.len());
    let mut min_eig = f64::INFINITY;
    let mut max_eig = 0.0f64;
    let mut degenerate_points = Vec::new();
    for p in grid {
        let s = model.drift(p, opts.t)?;
        let sig = model.sq_diffusion(p)?;
        let d = model.dim();
        // diagonal squared diffusion: eigenvalues are the diagonal entries
        let (lo, hi) = (0..d).map(|i| sig[i * d + i]).fold((f64::INFINITY, 0.0f64), |(l, h), e| {
            (l.min(e), h.max(e))
        });
        if lo < opts.eig_floor {
            degenerate_points.push(p.clone());
        }
        min_eig = min_eig.min(lo);
        max_eig = max_eig.max(hi);
        drifts.push(s.iter().map(|v| v * v).sum::<f64>().sqrt());
        norms.push(p.iter().map(|v| v * v).sum::<f64>().sqrt());
    }
    let sup_drift = drifts.iter().cloned().fold(0.0, f64::max);

    let mut order: Vec<usize> = (0..grid.len()).collect();
    order.sort_by(|&a, &b| norms[a].total_cmp(&norms[b]));
    let split = ((grid.len() as f64) * 0.9).floor() as usize;
    let drift_grows_at_edge = if split == 0 || split >= grid.len() {
        false
    } else {
        let inner = order[..split].iter().map(|&i| drifts[i]).fold(0.0, f64::max);
        let outer = order[split..].iter().map(|&i| drifts[i]).fold(0.0, f64::max);
        outer > inner * (1.0 + 1e-3) && outer > 0.0
    };
    let lambda = if min_eig > 0.0 {
        max_eig.max(1.0 / min_eig)
    } else {
        f64::INFINITY
    };
    Ok(AronsonReport {
        sup_drift,
        drift_grows_at_edge,
        drift_bounded: sup_drift <= opts.drift_cap && !drift_grows_at_edge,
        min_eig,
        max_eig,
        lambda,
        diffusion_nondegenerate: degenerate_points.is_empty(),
        degenerate_points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let n = n + n % 2;
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(a + i as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn brownian_coefficients() {
        let m = brownian_model(1.0).unwrap();
        assert_eq!(m.drift_1d(3.7, 2.0).unwrap(), 0.0);
        let m = brownian_model(2.0).unwrap();
        assert_eq!(m.sq_diffusion_1d(-11.0).unwrap(), 4.0);
        assert!(matches!(brownian_model(0.0), Err(Error::InvalidParameter { .. })));
    }

    #[test]
    fn ou_coefficients() {
        assert_eq!(ou_model(1.0, 1.0).unwrap().drift_1d(2.0, 0.0).unwrap(), -2.0);
        assert_relative_eq!(ou_model(25.0, 1.0).unwrap().drift_1d(0.1, 0.0).unwrap(), -2.5, epsilon = 1e-15);
        let flat = ou_model(0.0, 1.3).unwrap();
        let bm = brownian_model(1.3).unwrap();
        for x in [-3.0, 0.0, 2.5] {
            assert_eq!(flat.drift_1d(x, 0.0).unwrap(), bm.drift_1d(x, 0.0).unwrap());
            assert_eq!(flat.sq_diffusion_1d(x).unwrap(), bm.sq_diffusion_1d(x).unwrap());
        }
        assert!(ou_model(1.0, -1.0).is_err());
    }

    #[test]
    fn ou_density_at_mode_and_stationary_limit() {
        let d = ou_transition_density(0.0, 1.0, 0.0, 0.0).unwrap();
        assert_relative_eq!(d.eval(1.0, &[0.0]).unwrap(), 1.0 / (2.0 * PI).sqrt(), epsilon = 1e-15);
        let (m, v) = ou_mean_var(1.0, 1.0, 1.0, 60.0);
        assert!(m.abs() < 1e-20);
        assert_relative_eq!(v, 0.5, epsilon = 1e-15);
        assert!(matches!(d.eval(0.0, &[0.0]), Err(Error::InvalidTime { .. })));
    }

    #[test]
    fn ou_variance_survives_tiny_beta() {
        let (_, v) = ou_mean_var(5e-20, 1.0, 0.0, 1.0);
        assert_relative_eq!(v, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn logistic_brownian_coefficients() {
        let m = logistic_brownian_model();
        assert_eq!(m.drift_1d(0.5, 0.0).unwrap(), 0.0);
        assert_relative_eq!(m.sq_diffusion_1d(0.5).unwrap(), 0.0625, epsilon = 1e-16);
        assert_relative_eq!(m.drift_1d(0.25, 0.0).unwrap(), 0.046875, epsilon = 1e-16);
        assert!(matches!(m.drift_1d(0.0, 0.0), Err(Error::BoundaryEvaluation(_))));
    }

    #[test]
    fn logistic_brownian_density_values() {
        let d = logistic_brownian_density(0.0, 0.5).unwrap();
        assert_relative_eq!(d.eval(1.0, &[0.5]).unwrap(), 4.0 / (2.0 * PI).sqrt(), epsilon = 1e-14);
        assert_eq!(d.eval(1.0, &[1.2]).unwrap(), 0.0);
        assert_eq!(d.eval(1.0, &[-0.1]).unwrap(), 0.0);
        // mass sits near the edges after the change of variables; integrate in logit space
        let total = simpson(|b| d.eval(0.3, &[sigmoid(b)]).unwrap() * sigmoid(b) * (1.0 - sigmoid(b)), -12.0, 12.0, 4000);
        assert_relative_eq!(total, 1.0, epsilon = 1e-6);
    }

    #[test]
    fn wf_models() {
        let t = wf1d_transformed_model(0.0, DriftConvention::Derived).unwrap();
        assert_relative_eq!(t.drift_1d(0.5, 0.0).unwrap(), 0.0, epsilon = 1e-16);
        let wf = wf1d_model(2.0).unwrap();
        assert_relative_eq!(wf.drift_1d(0.5, 0.0).unwrap(), 0.5, epsilon = 1e-16);
        let lb = logistic_brownian_model();
        let t1 = wf1d_transformed_model(1.3, DriftConvention::Derived).unwrap();
        for i in 1..=100 {
            let y = i as f64 / 101.0;
            assert_eq!(t1.sq_diffusion_1d(y).unwrap(), lb.sq_diffusion_1d(y).unwrap());
        }
        assert!(matches!(t1.drift_1d(1.0, 0.0), Err(Error::BoundaryEvaluation(_))));
    }

    #[test]
    fn transformed_drift_derivative_matches_finite_difference() {
        for conv in [DriftConvention::Derived, DriftConvention::Printed] {
            let m = wf1d_transformed_model(1.7, conv).unwrap();
            for i in 1..40 {
                let y = 0.2 + 0.6 * i as f64 / 40.0;
                let fd = central_diff(|z| m.drift_1d(z, 0.0).unwrap(), y);
                assert_relative_eq!(m.drift_dx_1d(y, 0.0).unwrap(), fd, epsilon = 1e-6, max_relative = 1e-6);
            }
        }
    }

    /// Simulating θ = asin(2x - 1) for the Wright–Fisher SDE must give the
    /// drift ½γ cos θ + ½ tan θ; checked here by Itô's formula written out
    /// through the inverse map x = (1 + sin θ)/2.
    #[test]
    fn derived_convention_inverts_to_wright_fisher() {
        let gamma = 1.4;
        let m = wf1d_transformed_model(gamma, DriftConvention::Derived).unwrap();
        let map = StateTransform::arcsine_logit(1);
        for i in 1..30 {
            let y = 0.19 + 0.62 * i as f64 / 30.0;
            // x = h(y); dx = h' dy + ½ h'' (dy)²
            let h1 = central_diff(|z| map.inverse_scalar(z), y);
            let h2 = (map.inverse_scalar(y + 1e-4) - 2.0 * map.inverse_scalar(y) + map.inverse_scalar(y - 1e-4)) / 1e-8;
            let drift_x = h1 * m.drift_1d(y, 0.0).unwrap() + 0.5 * h2 * m.sq_diffusion_1d(y).unwrap();
            let x = map.inverse_scalar(y);
            assert_relative_eq!(drift_x, gamma * x * (1.0 - x), epsilon = 1e-5);
            let diff_x = h1 * h1 * m.sq_diffusion_1d(y).unwrap();
            assert_relative_eq!(diff_x, x * (1.0 - x), epsilon = 1e-8);
        }
    }

    #[test]
    fn angle_model_is_image_of_transformed_model() {
        let gamma = 0.8;
        let ym = wf1d_transformed_model(gamma, DriftConvention::Derived).unwrap();
        let bm = wf1d_logit_model(gamma, DriftConvention::Derived).unwrap();
        for i in 1..30 {
            let y = 0.2 + 0.6 * i as f64 / 30.0;
            let u = y * (1.0 - y);
            // d logit = dy/u + ½ (2y - 1)/u² (dy)²
            let via_ito = ym.drift_1d(y, 0.0).unwrap() / u + 0.5 * (2.0 * y - 1.0) / (u * u) * ym.sq_diffusion_1d(y).unwrap();
            assert_relative_eq!(bm.drift_1d(logit(y), 0.0).unwrap(), via_ito, epsilon = 1e-12);
        }
    }

    #[test]
    fn planar_models() {
        let (target, proposal) = wf2d_models(0.0, DriftConvention::Derived).unwrap();
        let s = target.drift_2d([0.5, 0.5], 0.0).unwrap();
        assert!(s[0].abs() < 1e-16 && s[1].abs() < 1e-16);
        assert_eq!(target.sq_diffusion_2d([0.3, 0.6]).unwrap(), proposal.sq_diffusion_2d([0.3, 0.6]).unwrap());
        assert!(bivariate_logistic_density(0.0, [0.5, 0.5], 1.0).is_err());
    }

    #[test]
    fn bivariate_factorizes_at_zero_correlation() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let y0 = [0.4, 0.65];
        let joint = bivariate_logistic_density(0.0, y0, 0.0).unwrap();
        let a = logistic_brownian_density(0.0, y0[0]).unwrap();
        let b = logistic_brownian_density(0.0, y0[1]).unwrap();
        for _ in 0..100 {
            let y = [rng.random_range(0.01..0.99), rng.random_range(0.01..0.99)];
            let t = rng.random_range(0.05..2.0);
            let p = joint.eval(t, &y).unwrap();
            let q = a.eval(t, &[y[0]]).unwrap() * b.eval(t, &[y[1]]).unwrap();
            assert_relative_eq!(p, q, epsilon = 1e-10, max_relative = 1e-10);
        }
    }

    #[test]
    fn bivariate_normalizes() {
        let d = bivariate_logistic_density(0.0, [0.5, 0.5], 0.0).unwrap();
        // tensor Simpson in logit coordinates
        let n = 400;
        let (a, b) = (-8.0, 8.0);
        let h = (b - a) / n as f64;
        let w = |i: usize| if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
        let mut total = 0.0;
        for i in 0..=n {
            for j in 0..=n {
                let (u, v) = (a + i as f64 * h, a + j as f64 * h);
                let y = [sigmoid(u), sigmoid(v)];
                let jac = y[0] * (1.0 - y[0]) * y[1] * (1.0 - y[1]);
                total += w(i) * w(j) * d.eval(0.5, &y).unwrap() * jac;
            }
        }
        total *= h * h / 9.0;
        assert_relative_eq!(total, 1.0, epsilon = 1e-4);
    }

    #[test]
    fn log_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let ou = ou_transition_density(0.7, 1.2, 0.0, 0.4).unwrap();
        let lb = logistic_brownian_density(0.0, 0.35).unwrap();
        let bl = bivariate_logistic_density(0.0, [0.3, 0.6], 0.4).unwrap();
        let fd = |d: &ClosedFormDensity, t: f64, x: &[f64], i: usize| {
            let h = 1e-6 * (1.0 + x[i].abs());
            let mut p = x.to_vec();
            let mut m = x.to_vec();
            p[i] += h;
            m[i] -= h;
            (d.eval(t, &p).unwrap().ln() - d.eval(t, &m).unwrap().ln()) / (2.0 * h)
        };
        for _ in 0..200 {
            let t = rng.random_range(0.1..2.0);
            let x = rng.random_range(-2.0..2.0);
            let g = ou.log_grad(t, &[x]).unwrap()[0];
            assert_relative_eq!(g, fd(&ou, t, &[x], 0), epsilon = 1e-5, max_relative = 1e-5);
            let y = rng.random_range(0.05..0.95);
            let g = lb.log_grad(t, &[y]).unwrap()[0];
            assert_relative_eq!(g, fd(&lb, t, &[y], 0), epsilon = 1e-5, max_relative = 1e-5);
            let y2 = [rng.random_range(0.05..0.95), rng.random_range(0.05..0.95)];
            let g = bl.log_grad(t, &y2).unwrap();
            for i in 0..2 {
                assert_relative_eq!(g[i], fd(&bl, t, &y2, i), epsilon = 1e-5, max_relative = 1e-5);
            }
        }
    }

    #[test]
    fn transforms_round_trip_and_are_monotone() {
        let cases = [
            (StateTransform::sigmoid(1), -12.0, 12.0),
            (StateTransform::arcsine_logit(1), 0.0, 1.0),
            (StateTransform::identity(1), -50.0, 50.0),
        ];
        for (map, lo, hi) in cases {
            let mut prev = f64::NEG_INFINITY;
            for i in 1..=1000 {
                let x = lo + (hi - lo) * i as f64 / 1001.0;
                let y = map.forward_scalar(x);
                assert!(y > prev, "{} not increasing at {x}", map.label());
                prev = y;
                let back = map.inverse_scalar(y);
                assert!((back - x).abs() <= 1e-9 * (1.0 + x.abs()), "{}: {x} -> {back}", map.label());
            }
        }
    }

    #[test]
    fn transform_density_identity_and_sigmoid() {
        let base = ou_transition_density(0.0, 1.0, 0.0, 0.0).unwrap();
        let same = transform_density(&base, &StateTransform::identity(1)).unwrap();
        let lb = logistic_brownian_density(0.0, 0.5).unwrap();
        let pushed = transform_density(&base, &StateTransform::sigmoid(1)).unwrap();
        for i in 0..100 {
            let x = -4.0 + 8.0 * i as f64 / 99.0;
            assert_eq!(same.eval(1.0, &[x]).unwrap(), base.eval(1.0, &[x]).unwrap());
            let y = 0.005 + 0.99 * i as f64 / 99.0;
            assert_relative_eq!(pushed.eval(1.0, &[y]).unwrap(), lb.eval(1.0, &[y]).unwrap(), epsilon = 1e-12, max_relative = 1e-12);
            assert_relative_eq!(
                pushed.log_grad(1.0, &[y]).unwrap()[0],
                lb.log_grad(1.0, &[y]).unwrap()[0],
                epsilon = 1e-9,
                max_relative = 1e-9
            );
        }
        let total = simpson(|b| pushed.eval(1.0, &[sigmoid(b)]).unwrap() * sigmoid(b) * (1.0 - sigmoid(b)), -14.0, 14.0, 4000);
        assert_relative_eq!(total, 1.0, epsilon = 1e-6);
    }

    #[test]
    fn aronson_report_cases() {
        let grid = |a: f64, b: f64, n: usize| -> Vec<Vec<f64>> {
            (0..=n).map(|i| vec![a + (b - a) * i as f64 / n as f64]).collect()
        };
        let ou = check_aronson_preconditions(&ou_model(1.0, 1.0).unwrap(), &grid(-10.0, 10.0, 200), AronsonOptions::default()).unwrap();
        assert!(!ou.drift_bounded);
        assert!(ou.diffusion_nondegenerate);

        let bm = check_aronson_preconditions(&brownian_model(1.0).unwrap(), &grid(-5.0, 5.0, 100), AronsonOptions::default()).unwrap();
        assert!(bm.drift_bounded && bm.diffusion_nondegenerate);
        assert_eq!(bm.lambda, 1.0);

        let wf = wf1d_transformed_model(1.0, DriftConvention::Derived).unwrap();
        let opts = AronsonOptions { eig_floor: 1e-3, ..Default::default() };
        let rep = check_aronson_preconditions(&wf, &grid(0.01, 0.99, 98), opts).unwrap();
        assert!(!rep.diffusion_nondegenerate);
        assert!(rep.degenerate_points.iter().all(|p| p[0] < 0.1 || p[0] > 0.9));
        let inner = check_aronson_preconditions(&wf, &grid(0.3, 0.7, 40), opts).unwrap();
        assert!(inner.diffusion_nondegenerate);

        assert!(matches!(
            check_aronson_preconditions(&wf, &[], opts),
            Err(Error::InvalidInput(_))
        ));
    }
    #[test]
    fn polynomial_drift_and_derivative() {
        let m = polynomial_drift_model(&[1.0, -2.0, 0.5], 0.7).unwrap();
        let x = 1.3;
        assert_relative_eq!(m.drift_1d(x, 0.0).unwrap(), 1.0 - 2.0 * x + 0.5 * x * x, epsilon = 1e-14);
        assert_relative_eq!(m.drift_dx_1d(x, 0.0).unwrap(), -2.0 + x, epsilon = 1e-14);
        assert_relative_eq!(m.sq_diffusion_1d(x).unwrap(), 0.49, epsilon = 1e-15);
        assert!(polynomial_drift_model(&[], 1.0).is_err());
    }

}
