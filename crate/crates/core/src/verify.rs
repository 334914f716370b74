//! Convergence studies against problems with known solutions.

use std::f64::consts::PI;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ratio::{RatioCoefficients1D, RatioCoefficients2D};
use crate::solver1d::{solve_parabolic_1d, Grid1D, SpatialScheme};
use crate::solver2d::{solve_parabolic_2d, Grid2D};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Problem {
    /// 1D variable-coefficient manufactured solution, `h` and `k` halved
    /// together.
    Mms1d,
    /// Same problem, `h` refined at a tiny fixed `k`.
    Mms1dSpace,
    /// Same problem, `k` refined on a fine fixed mesh.
    Mms1dTime,
    /// Same problem with the compact spatial stencil.
    Mms1dCompact,
    /// 2D heat mode `e^{-π² t} sin πx sin πy`, space refined.
    Heat2dSpace,
    /// 2D heat mode, time refined.
    Heat2dTime,
    /// 2D manufactured solution with all coefficients non-zero.
    Mms2d,
}

impl Problem {
    pub const ALL: [Problem; 7] = [
        Problem::Mms1d,
        Problem::Mms1dSpace,
        Problem::Mms1dTime,
        Problem::Mms1dCompact,
        Problem::Heat2dSpace,
        Problem::Heat2dTime,
        Problem::Mms2d,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Problem::Mms1d => "mms-1d",
            Problem::Mms1dSpace => "mms-1d-space",
            Problem::Mms1dTime => "mms-1d-time",
            Problem::Mms1dCompact => "mms-1d-compact",
            Problem::Heat2dSpace => "heat-2d-space",
            Problem::Heat2dTime => "heat-2d-time",
            Problem::Mms2d => "mms-2d",
        }
    }
}

impl FromStr for Problem {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Problem::ALL
            .into_iter()
            .find(|p| p.id() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown convergence problem '{s}'")))
    }
}

/// One refinement level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Level {
    pub h: f64,
    pub k: f64,
    pub error: f64,
    /// `log2(e_prev / e)`, from the second level on.
    pub order: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Study {
    pub problem: Problem,
    /// Which step size is refined: `"h"`, `"k"` or `"h,k"`.
    pub refined: String,
    pub levels: Vec<Level>,
    /// Least-squares slope of log error against log step.
    pub fitted_order: f64,
}

impl Study {
    fn new(problem: Problem, refined: &str, raw: Vec<(f64, f64, f64)>) -> Study {
        let step = |l: &(f64, f64, f64)| if refined == "k" { l.1 } else { l.0 };
        let pts: Vec<(f64, f64)> = raw.iter().map(|l| (step(l).ln(), l.2.ln())).collect();
        let levels = raw
            .iter()
            .enumerate()
            .map(|(i, &(h, k, error))| Level {
                h,
                k,
                error,
                order: (i > 0).then(|| (raw[i - 1].2 / error).log2()),
            })
            .collect();
        Study {
            problem,
            refined: refined.to_string(),
            levels,
            fitted_order: slope(&pts),
        }
    }

    /// Columns `problem,refined,h,k,error,order`; the last line holds the
    /// fitted order.
    pub fn write_csv<W: Write>(&self, mut w: W, header: bool) -> Result<()> {
        if header {
            writeln!(w, "problem,refined,h,k,error,order")?;
        }
        for l in &self.levels {
            let o = l.order.map(|o| o.to_string()).unwrap_or_default();
            writeln!(w, "{},{},{},{},{},{}", self.problem.id(), self.refined, l.h, l.k, l.error, o)?;
        }
        writeln!(w, "{},{},,,,{}", self.problem.id(), "fit", self.fitted_order)?;
        Ok(())
    }
}

fn slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// `V_t = a V + b V_x + c V_xx` on [0, 1] with exact solution
/// `e^{-t} sin πx`.
pub fn mms_1d_coefficients() -> RatioCoefficients1D {
    let beta = 0.8;
    RatioCoefficients1D::new("mms-1d", f64::NEG_INFINITY, move |x, _| {
        let c = 0.5 + 0.25 * x;
        Ok([-1.0 + c * PI * PI - beta * PI * (PI * x).cos(), beta * (PI * x).sin(), c])
    })
}

/// Max-norm error of the 1D problem at `t = 1`.
pub fn mms_1d_error(m: usize, n: usize, scheme: SpatialScheme) -> Result<f64> {
    let g = Grid1D::new(0.0, 1.0, m, 0.0, 1.0, n)?;
    let rows = solve_parabolic_1d(&mms_1d_coefficients(), &g, &|x| (PI * x).sin(), &|_| [0.0, 0.0], scheme)?;
    let last = &rows[g.n * (m + 1)..];
    Ok((0..=m)
        .map(|j| (last[j] - (-1.0f64).exp() * (PI * g.x(j)).sin()).abs())
        .fold(0.0, f64::max))
}

/// Max-norm error of the 2D heat mode at `t_end`.
pub fn heat_2d_error(m: usize, n: usize, t_end: f64) -> Result<f64> {
    let g = Grid2D::new(0.0, 1.0, m, 0.0, 1.0, m, 0.0, t_end, n)?;
    let f = solve_parabolic_2d(
        &RatioCoefficients2D::zero(-1.0),
        &g,
        &|x, y| (PI * x).sin() * (PI * y).sin(),
        &|_, _, _| 0.0,
    )?;
    let decay = (-PI * PI * t_end).exp();
    let mut err: f64 = 0.0;
    for i in 0..=m {
        for j in 0..=m {
            err = err.max((f.value(n, i, j) - decay * (PI * g.x(i)).sin() * (PI * g.y(j)).sin()).abs());
        }
    }
    Ok(err)
}

/// `V_t = 2εV + cV_x + dV_y + ½ΔV` with smooth non-zero coefficients and
/// exact solution `1 + e^{-t} sin πx sin πy` on the unit square.
pub fn mms_2d_coefficients() -> RatioCoefficients2D {
    RatioCoefficients2D::new("mms-2d", f64::NEG_INFINITY, |x, y, t| {
        let c = 0.3 * (PI * y).cos();
        let d = -0.2 * x;
        let s = (PI * x).sin() * (PI * y).sin();
        let e = (-t).exp();
        let u = 1.0 + e * s;
        // u_t - c u_x - d u_y - ½Δu, solved for the zeroth-order term
        let ut = -e * s;
        let ux = e * PI * (PI * x).cos() * (PI * y).sin();
        let uy = e * PI * (PI * x).sin() * (PI * y).cos();
        let lap = -2.0 * PI * PI * e * s;
        let two_eps = (ut - c * ux - d * uy - 0.5 * lap) / u;
        Ok([0.5 * two_eps, c, d])
    })
}

pub fn mms_2d_error(m: usize, n: usize) -> Result<f64> {
    let t_end = 0.5;
    let exact = |x: f64, y: f64, t: f64| 1.0 + (-t).exp() * (PI * x).sin() * (PI * y).sin();
    let g = Grid2D::new(0.0, 1.0, m, 0.0, 1.0, m, 0.0, t_end, n)?;
    let f = solve_parabolic_2d(&mms_2d_coefficients(), &g, &|x, y| exact(x, y, 0.0), &exact)?;
    let mut err: f64 = 0.0;
    for i in 0..=m {
        for j in 0..=m {
            err = err.max((f.value(n, i, j) - exact(g.x(i), g.y(j), t_end)).abs());
        }
    }
    Ok(err)
}

pub fn run(problem: Problem) -> Result<Study> {
    let mut raw = Vec::new();
    let refined = match problem {
        Problem::Mms1d => {
            for m in [20, 40, 80, 160] {
                raw.push((1.0 / m as f64, 1.0 / m as f64, mms_1d_error(m, m, SpatialScheme::Central)?));
            }
            "h,k"
        }
        Problem::Mms1dSpace => {
            let n = 4000;
            for m in [10, 20, 40, 80] {
                raw.push((1.0 / m as f64, 1.0 / n as f64, mms_1d_error(m, n, SpatialScheme::Central)?));
            }
            "h"
        }
        Problem::Mms1dTime => {
            let m = 1000;
            for n in [5, 10, 20, 40] {
                raw.push((1.0 / m as f64, 1.0 / n as f64, mms_1d_error(m, n, SpatialScheme::Compact)?));
            }
            "k"
        }
        Problem::Mms1dCompact => {
            let n = 4000;
            for m in [10, 20, 40] {
                raw.push((1.0 / m as f64, 1.0 / n as f64, mms_1d_error(m, n, SpatialScheme::Compact)?));
            }
            "h"
        }
        Problem::Heat2dSpace => {
            let (t, n) = (0.1, 400);
            for m in [4, 8, 16] {
                raw.push((1.0 / m as f64, t / n as f64, heat_2d_error(m, n, t)?));
            }
            "h"
        }
        Problem::Heat2dTime => {
            let (t, m) = (0.2, 64);
            for n in [16, 32, 64] {
                raw.push((1.0 / m as f64, t / n as f64, heat_2d_error(m, n, t)?));
            }
            "k"
        }
        Problem::Mms2d => {
            for m in [10, 20, 40] {
                raw.push((1.0 / m as f64, 0.5 / m as f64, mms_2d_error(m, m)?));
            }
            "h,k"
        }
    };
    Ok(Study::new(problem, refined, raw))
}

/// Max difference between the 2D solver on separable heat data and the
/// product of two 1D compact solves.
pub fn separable_agreement(m: usize) -> Result<f64> {
    let (t, n) = (0.2, 10);
    let g = Grid2D::new(0.0, 1.0, m, 0.0, 1.0, m, 0.0, t, n)?;
    let fx = |x: f64| x * (1.0 - x) * (1.0 + x);
    let fy = |y: f64| (PI * y).sin() + 0.3 * (2.0 * PI * y).sin();
    let two = solve_parabolic_2d(&RatioCoefficients2D::zero(-1.0), &g, &|x, y| fx(x) * fy(y), &|_, _, _| 0.0)?;
    let heat = RatioCoefficients1D::new("heat", f64::NEG_INFINITY, |_, _| Ok([0.0, 0.0, 0.5]));
    let g1 = Grid1D::new(0.0, 1.0, m, 0.0, t, n)?;
    let ux = solve_parabolic_1d(&heat, &g1, &fx, &|_| [0.0, 0.0], SpatialScheme::Compact)?;
    let uy = solve_parabolic_1d(&heat, &g1, &fy, &|_| [0.0, 0.0], SpatialScheme::Compact)?;
    let w = m + 1;
    let mut diff: f64 = 0.0;
    for i in 0..=m {
        for j in 0..=m {
            diff = diff.max((two.value(n, i, j) - ux[n * w + i] * uy[n * w + j]).abs());
        }
    }
    Ok(diff)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn problem_ids_round_trip() {
        for p in Problem::ALL {
            assert_eq!(p.id().parse::<Problem>().unwrap(), p);
        }
        assert!("nope".parse::<Problem>().is_err());
    }

    #[test]
    fn slope_of_exact_power_law() {
        let pts: Vec<(f64, f64)> = [0.1f64, 0.05, 0.025].iter().map(|h| (h.ln(), (3.0 * h * h).ln())).collect();
        assert!((slope(&pts) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn studies_reach_expected_orders() {
        for (p, min) in [
            (Problem::Mms1d, 1.9),
            (Problem::Mms1dSpace, 1.9),
            (Problem::Mms1dTime, 1.9),
            (Problem::Heat2dSpace, 2.0),
            (Problem::Heat2dTime, 1.9),
            (Problem::Mms2d, 1.9),
        ] {
            let s = run(p).unwrap();
            assert!(s.fitted_order >= min, "{}: {:?}", p.id(), s);
        }
    }
}
