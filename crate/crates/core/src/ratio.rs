//! Coefficients of the linear parabolic equation satisfied by the ratio
//! `V = P2 / P1` of a target transition density `P2` and a proposal density
//! `P1` sharing the same diffusion:
//!
//! ```text
//! V_t = a V + b V_x + c V_xx
//! a = ∂x(S1 - S2) + (S1 - S2) ∂x log P1
//! b = σ ∂x log P1 + ∂x σ - S2
//! c = σ / 2
//! ```

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::sync::Arc;

use crate::error::{invalid, Error, Result};
use crate::process::{logit, ClosedFormDensity, DriftConvention, Interval, SdeModel};

type CoefFn = Arc<dyn Fn(f64, f64) -> Result<[f64; 3]> + Send + Sync>;

/// Zeroth, first and second order coefficients of a 1D ratio equation.
#[derive(Clone)]
pub struct RatioCoefficients1D {
    label: String,
    t_origin: f64,
    f: CoefFn,
}

impl fmt::Debug for RatioCoefficients1D {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RatioCoefficients1D")
            .field("label", &self.label)
            .field("t_origin", &self.t_origin)
            .finish()
    }
}

impl RatioCoefficients1D {
    /// Wraps a closure `(x, t) -> [a, b, c]`. Times at or before `t_origin`
    /// are rejected as singular.
    pub fn new(
        label: impl Into<String>,
        t_origin: f64,
        f: impl Fn(f64, f64) -> Result<[f64; 3]> + Send + Sync + 'static,
    ) -> Self {
        RatioCoefficients1D {
            label: label.into(),
            t_origin,
            f: Arc::new(f),
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn t_origin(&self) -> f64 {
        self.t_origin
    }

    pub fn eval(&self, x: f64, t: f64) -> Result<[f64; 3]> {
        if !(t > self.t_origin) {
            return Err(Error::SingularTime {
                t,
                origin: self.t_origin,
            });
        }
        (self.f)(x, t)
    }

    pub fn a(&self, x: f64, t: f64) -> Result<f64> {
        Ok(self.eval(x, t)?[0])
    }

    pub fn b(&self, x: f64, t: f64) -> Result<f64> {
        Ok(self.eval(x, t)?[1])
    }

    pub fn c(&self, x: f64, t: f64) -> Result<f64> {
        Ok(self.eval(x, t)?[2])
    }
}

fn common_interval(a: &Interval, b: &Interval) -> Interval {
    Interval::new(a.lo.max(b.lo), a.hi.min(b.hi))
}

fn probe_points(iv: &Interval, n: usize) -> Vec<f64> {
    let (lo, hi) = (iv.lo.max(-10.0), iv.hi.min(10.0));
    (1..=n).map(|i| lo + (hi - lo) * i as f64 / (n + 1) as f64).collect()
}

/// Builds the ratio equation for a pair of scalar models.
pub fn build_ratio_pde_1d(
    target: &SdeModel,
    proposal: &SdeModel,
    proposal_density: &ClosedFormDensity,
) -> Result<RatioCoefficients1D> {
    if target.dim() != 1 || proposal.dim() != 1 || proposal_density.dim() != 1 {
        return Err(Error::InvalidInput(
            "the generic ratio builder is one-dimensional".into(),
        ));
    }
    let dom = common_interval(&target.state_space()[0], &proposal.state_space()[0]);
    if !(dom.hi > dom.lo) {
        return Err(Error::IncompatibleModels("state spaces do not overlap".into()));
    }
    for x in probe_points(&dom, 100) {
        let s2 = target.sq_diffusion_1d(x)?;
        let s1 = proposal.sq_diffusion_1d(x)?;
        if (s1 - s2).abs() > 1e-10 * s1.abs().max(1.0) {
            return Err(Error::IncompatibleModels(format!(
                "`{}` has σ = {s2} but `{}` has σ = {s1} at x = {x}",
                target.label(),
                proposal.label()
            )));
        }
    }
    let (t_origin, _) = proposal_density.origin();
    let (tg, pr, dens) = (target.clone(), proposal.clone(), proposal_density.clone());
    Ok(RatioCoefficients1D::new(
        format!("ratio[{} / {}]", target.label(), proposal.label()),
        t_origin,
        move |x, t| {
            let ell = dens.log_grad_1d_unchecked(t, x);
            let s1 = pr.drift_1d(x, t)?;
            let s2 = tg.drift_1d(x, t)?;
            let ds = pr.drift_dx_1d(x, t)? - tg.drift_dx_1d(x, t)?;
            let sig = pr.sq_diffusion_1d(x)?;
            let dsig = pr.sq_diffusion_dx_1d(x)?;
            Ok([ds + (s1 - s2) * ell, sig * ell + dsig - s2, 0.5 * sig])
        },
    ))
}

/// O-U target `dX = -βX dt + σ dW` against a Brownian proposal with the same
/// `σ`, both started at `(t0, x0)`.
pub fn ou_ratio_coefficients(beta: f64, sigma: f64, t0: f64, x0: f64) -> Result<RatioCoefficients1D> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(invalid("sigma", format!("must be positive, got {sigma}")));
    }
    if !(beta.is_finite() && beta >= 0.0) {
        return Err(invalid("beta", format!("must be >= 0, got {beta}")));
    }
    let s2 = sigma * sigma;
    Ok(RatioCoefficients1D::new(
        format!("ou-ratio(beta={beta},sigma={sigma},x0={x0})"),
        t0,
        move |x, t| {
            let v1 = s2 * (t - t0);
            let a = beta / v1 * (v1 - x * (x - x0));
            let b = (beta - s2 / v1) * x + s2 * x0 / v1;
            Ok([a, b, 0.5 * s2])
        },
    ))
}

/// Wright–Fisher target (after the arcsine-logit map) against the
/// logistic-Brownian proposal, both from `(t0, y0)`, in `y` coordinates.
pub fn wf1d_ratio_coefficients(
    gamma: f64,
    y0: f64,
    t0: f64,
    convention: DriftConvention,
) -> Result<RatioCoefficients1D> {
    if !Interval::UNIT.contains(y0) {
        return Err(invalid("y0", format!("must lie in (0, 1), got {y0}")));
    }
    if !gamma.is_finite() {
        return Err(invalid("gamma", "must be finite"));
    }
    let b0 = logit(y0);
    let s = convention.tan_sign();
    Ok(RatioCoefficients1D::new(
        format!("wf1d-ratio(gamma={gamma},y0={y0},{convention:?})"),
        t0,
        move |y, t| {
            if !Interval::UNIT.contains(y) {
                return Err(Error::BoundaryEvaluation(y));
            }
            let tau = t - t0;
            let b = logit(y);
            let (sn, cs, tn) = (b.sin(), b.cos(), b.tan());
            let u = y * (1.0 - y);
            let a = 0.5 * (gamma * sn - s / (cs * cs) + (b - b0) * (s * tn + gamma * cs) / tau);
            let first = 0.5 * u * (1.0 - 2.0 * y + 2.0 * (b0 - b) / tau - s * tn - gamma * cs);
            Ok([a, first, 0.5 * u * u])
        },
    ))
}

type Coef2Fn = Arc<dyn Fn(f64, f64, f64) -> Result<[f64; 3]> + Send + Sync>;

/// Coefficients of `V_t = 2ε V + c V_x + d V_y + α (V_xx + V_yy)` in logit
/// coordinates.
#[derive(Clone)]
pub struct RatioCoefficients2D {
    label: String,
    pub alpha: f64,
    pub t_origin: f64,
    pub initial_logits: [f64; 2],
    pub rho: f64,
    pub h_sel: f64,
    pub convention: DriftConvention,
    f: Coef2Fn,
}

impl fmt::Debug for RatioCoefficients2D {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RatioCoefficients2D")
            .field("label", &self.label)
            .field("alpha", &self.alpha)
            .field("t_origin", &self.t_origin)
            .field("initial_logits", &self.initial_logits)
            .field("rho", &self.rho)
            .field("h_sel", &self.h_sel)
            .finish()
    }
}

/// Distance below which a coordinate is treated as sitting on an odd
/// multiple of π/2.
const TRIG_GUARD: f64 = 1e-9;

pub(crate) fn near_odd_half_pi(x: f64) -> bool {
    let k = ((x - FRAC_PI_2) / std::f64::consts::PI).round();
    (x - (FRAC_PI_2 + k * std::f64::consts::PI)).abs() < TRIG_GUARD
}

impl RatioCoefficients2D {
    /// Arbitrary coefficients; used for manufactured solutions and the
    /// degenerate identical-process configuration.
    pub fn new(
        label: impl Into<String>,
        t_origin: f64,
        f: impl Fn(f64, f64, f64) -> Result<[f64; 3]> + Send + Sync + 'static,
    ) -> Self {
        RatioCoefficients2D {
            label: label.into(),
            alpha: 0.5,
            t_origin,
            initial_logits: [0.0, 0.0],
            rho: 0.0,
            h_sel: 0.0,
            convention: DriftConvention::Derived,
            f: Arc::new(f),
        }
    }

    /// ε = c = d = 0.
    pub fn zero(t_origin: f64) -> Self {
        Self::new("zero", t_origin, |_, _, _| Ok([0.0; 3]))
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// `[ε, c, d]` at `(x, y, t)`.
    pub fn eval(&self, x: f64, y: f64, t: f64) -> Result<[f64; 3]> {
        if !(t > self.t_origin) {
            return Err(Error::SingularTime {
                t,
                origin: self.t_origin,
            });
        }
        (self.f)(x, y, t)
    }

    pub fn eps(&self, x: f64, y: f64, t: f64) -> Result<f64> {
        Ok(self.eval(x, y, t)?[0])
    }

    pub fn cx(&self, x: f64, y: f64, t: f64) -> Result<f64> {
        Ok(self.eval(x, y, t)?[1])
    }

    pub fn dy(&self, x: f64, y: f64, t: f64) -> Result<f64> {
        Ok(self.eval(x, y, t)?[2])
    }
}

/// Two-locus Wright–Fisher target against the sigmoid image of a planar
/// Brownian motion with correlation `rho`, in logit coordinates `(x, y)`.
///
/// `Derived` uses `∂ log P1 = -Σ⁻¹ (β - β0) / t`; `Printed` reproduces the
/// historical closed form, which flips the `tan` sign and doubles the
/// correlation cross term.
pub fn wf2d_ratio_coefficients(
    h_sel: f64,
    beta0: [f64; 2],
    rho: f64,
    t0: f64,
    convention: DriftConvention,
) -> Result<RatioCoefficients2D> {
    if !(rho.is_finite() && rho.abs() < 1.0) {
        return Err(invalid("rho", format!("|rho| must be < 1, got {rho}")));
    }
    if !h_sel.is_finite() || !beta0.iter().all(|b| b.is_finite()) {
        return Err(invalid("h_sel", "selection and initial logits must be finite"));
    }
    let s = convention.tan_sign();
    let cross = match convention {
        DriftConvention::Derived => rho,
        DriftConvention::Printed => 2.0 * rho,
    };
    let one_m = 1.0 - rho * rho;
    let f = move |x: f64, y: f64, t: f64| -> Result<[f64; 3]> {
        for v in [x, y] {
            if near_odd_half_pi(v) {
                return Err(Error::TrigSingularity(format!(
                    "logit coordinate {v} sits on an odd multiple of π/2"
                )));
            }
        }
        let tau = t - t0;
        let (u, v) = (x - beta0[0], y - beta0[1]);
        let gx = (u - cross * v) / (tau * one_m);
        let gy = (v - cross * u) / (tau * one_m);
        let (sx, cx_, tx) = (x.sin(), x.cos(), x.tan());
        let (sy, cy, ty) = (y.sin(), y.cos(), y.tan());
        let sel_x = 0.5 * h_sel * (1.0 + sy) * cx_;
        let sel_y = 0.5 * h_sel * (1.0 + sx) * cy;
        let eps = 0.25
            * (-s * (1.0 / (cx_ * cx_) + 1.0 / (cy * cy))
                + 0.5 * h_sel * (sx + sy + 2.0 * sx * sy)
                + gx * (sel_x + s * tx)
                + gy * (sel_y + s * ty));
        let c = -gx - 0.5 * sel_x - 0.5 * s * tx;
        let d = -gy - 0.5 * sel_y - 0.5 * s * ty;
        Ok([eps, c, d])
    };
    Ok(RatioCoefficients2D {
        label: format!("wf2d-ratio(h={h_sel},beta0={beta0:?},rho={rho},{convention:?})"),
        alpha: 0.5,
        t_origin: t0,
        initial_logits: beta0,
        rho,
        h_sel,
        convention,
        f: Arc::new(f),
    })
}
