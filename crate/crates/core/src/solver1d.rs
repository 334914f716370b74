//! Crank–Nicolson solver for `V_t = a V + b V_x + c V_xx` on a uniform grid
//! with Dirichlet data.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ratio::RatioCoefficients1D;
use crate::tridiag::Tridiag;

/// Relative residual accepted from a tridiagonal solve.
const RESIDUAL_TOL: f64 = 1e-10;
/// Fractional-index distance treated as sitting on a node.
const SNAP: f64 = 1e-9;

/// Uniform space-time mesh: `x_j = x_min + j h`, `t_i = t0 + i k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    pub x_min: f64,
    pub x_max: f64,
    pub m: usize,
    pub t0: f64,
    pub t_end: f64,
    pub n: usize,
}

impl Grid1D {
    pub fn new(x_min: f64, x_max: f64, m: usize, t0: f64, t_end: f64, n: usize) -> Result<Self> {
        if m < 4 {
            return Err(Error::InvalidParameter {
                name: "m",
                reason: format!("need at least 4 spatial subintervals, got {m}"),
            });
        }
        if n < 1 {
            return Err(Error::InvalidParameter {
                name: "n",
                reason: "need at least one time step".into(),
            });
        }
        if !(x_min.is_finite() && x_max.is_finite() && x_max > x_min) {
            return Err(Error::InvalidParameter {
                name: "x_max",
                reason: format!("need finite x_min < x_max, got [{x_min}, {x_max}]"),
            });
        }
        if !(t0.is_finite() && t_end.is_finite() && t_end > t0) {
            return Err(Error::InvalidParameter {
                name: "t_end",
                reason: format!("need finite t0 < T, got [{t0}, {t_end}]"),
            });
        }
        Ok(Grid1D {
            x_min,
            x_max,
            m,
            t0,
            t_end,
            n,
        })
    }

    pub fn h(&self) -> f64 {
        (self.x_max - self.x_min) / self.m as f64
    }

    pub fn k(&self) -> f64 {
        (self.t_end - self.t0) / self.n as f64
    }

    pub fn x(&self, j: usize) -> f64 {
        if j == self.m {
            self.x_max
        } else {
            self.x_min + j as f64 * self.h()
        }
    }

    pub fn t(&self, i: usize) -> f64 {
        if i == self.n {
            self.t_end
        } else {
            self.t0 + i as f64 * self.k()
        }
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..=self.m).map(|j| self.x(j)).collect()
    }

    pub fn ts(&self) -> Vec<f64> {
        (0..=self.n).map(|i| self.t(i)).collect()
    }

    pub fn contains(&self, x: f64, t: f64) -> bool {
        x >= self.x_min && x <= self.x_max && t >= self.t0 && t <= self.t_end
    }
}

/// Spatial discretisation used inside each Crank–Nicolson step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpatialScheme {
    /// Second-order central differences, coefficients at both time levels.
    #[default]
    Central,
    /// Fourth-order compact stencil, coefficients frozen at the half step.
    Compact,
}

/// Solution of a ratio equation on a [`Grid1D`].
#[derive(Debug, Clone, PartialEq)]
pub struct RatioField {
    pub grid: Grid1D,
    /// Row-major `(n + 1) × (m + 1)`.
    pub values: Vec<f64>,
    pub boundary_value: f64,
    /// Time at which the unit initial condition is imposed.
    pub effective_t0: f64,
}

impl RatioField {
    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i * (self.grid.m + 1) + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.grid.m + 1;
        &self.values[i * w..(i + 1) * w]
    }

    /// Largest interior value at time index `i`.
    pub fn max_interior(&self, i: usize) -> f64 {
        let r = self.row(i);
        r[1..r.len() - 1].iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Bilinear interpolation in `(x, t)`; exact at nodes.
    pub fn eval(&self, x: f64, t: f64) -> Result<f64> {
        eval_field(self, x, t)
    }

    /// Writes `t,x,V` rows, time-major.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,x,V")?;
        let xs = self.grid.xs();
        for i in 0..=self.grid.n {
            let t = self.grid.t(i);
            for (j, x) in xs.iter().enumerate() {
                writeln!(w, "{t},{x},{}", self.value(i, j))?;
            }
        }
        Ok(())
    }

    /// Copy divided by the global maximum, for display.
    pub fn normalized(&self) -> RatioField {
        let mx = self.max_value();
        let mut out = self.clone();
        if mx > 0.0 && mx.is_finite() {
            out.values.iter_mut().for_each(|v| *v /= mx);
        }
        out
    }
}

/// Locates `s` in `[0, n]` as `(cell, weight)`, snapping onto nodes.
pub(crate) fn locate(s: f64, n: usize) -> (usize, f64) {
    let r = s.round();
    if (s - r).abs() < SNAP {
        let r = r as usize;
        return if r == n { (n - 1, 1.0) } else { (r, 0.0) };
    }
    let j = (s.floor() as usize).min(n - 1);
    (j, s - j as f64)
}

#[inline]
pub(crate) fn lerp(a: f64, b: f64, w: f64) -> f64 {
    if w == 0.0 {
        a
    } else if w == 1.0 {
        b
    } else {
        a + (b - a) * w
    }
}

/// Bilinear interpolation of a field; queries outside the grid are errors.
pub fn eval_field(field: &RatioField, x: f64, t: f64) -> Result<f64> {
    let g = &field.grid;
    if !g.contains(x, t) {
        return Err(Error::Domain {
            x,
            t,
            domain: format!("[{}, {}] x [{}, {}]", g.x_min, g.x_max, g.t0, g.t_end),
        });
    }
    let (j, wx) = locate((x - g.x_min) / g.h(), g.m);
    let (i, wt) = locate((t - g.t0) / g.k(), g.n);
    let lo = lerp(field.value(i, j), field.value(i, j + 1), wx);
    if wt == 0.0 {
        return Ok(lo);
    }
    let hi = lerp(field.value(i + 1, j), field.value(i + 1, j + 1), wx);
    Ok(lerp(lo, hi, wt))
}

fn sample(coeffs: &RatioCoefficients1D, x: f64, t: f64) -> Result<[f64; 3]> {
    let v = coeffs.eval(x, t)?;
    if !v.iter().all(|c| c.is_finite()) {
        return Err(Error::Assembly {
            location: format!("x = {x}, t = {t}"),
            reason: format!("non-finite coefficients {v:?}"),
        });
    }
    if !(v[2] > 0.0) {
        return Err(Error::Assembly {
            location: format!("x = {x}, t = {t}"),
            reason: format!("second-order coefficient {} is not positive", v[2]),
        });
    }
    Ok(v)
}

/// Central-difference spatial operator rows at time `t`:
/// `(Op u)_j = a u_j + b δu_j + c δ²u_j` for interior `j`.
fn central_operator(coeffs: &RatioCoefficients1D, grid: &Grid1D, t: f64) -> Result<Tridiag> {
    let h = grid.h();
    let mut op = Tridiag::zeros(grid.m + 1);
    for j in 1..grid.m {
        let [a, b, c] = sample(coeffs, grid.x(j), t)?;
        op.lower[j] = c / (h * h) - b / (2.0 * h);
        op.diag[j] = a - 2.0 * c / (h * h);
        op.upper[j] = c / (h * h) + b / (2.0 * h);
    }
    Ok(op)
}

/// Compact-stencil pieces for `-α u'' + p u' + q u = f` with nodal `p`, `q`
/// and constant `α`: returns `(L, A)` such that `L f ≈ A u` to O(h⁴) at
/// interior rows.
pub(crate) fn compact_rows(p: &[f64], q: &[f64], alpha: f64, h: f64) -> (Tridiag, Tridiag) {
    let n = p.len();
    let mut l = Tridiag::zeros(n);
    let mut a = Tridiag::zeros(n);
    let h2 = h * h;
    for j in 1..n - 1 {
        let dp = (p[j + 1] - p[j - 1]) / (2.0 * h);
        let d2p = (p[j + 1] - 2.0 * p[j] + p[j - 1]) / h2;
        let dq = (q[j + 1] - q[j - 1]) / (2.0 * h);
        let d2q = (q[j + 1] - 2.0 * q[j] + q[j - 1]) / h2;
        let (pj, qj) = (p[j], q[j]);
        let at = alpha + h2 / 12.0 * (pj * pj / alpha - qj - 2.0 * dp);
        let pt = pj + h2 / 12.0 * (d2p + 2.0 * dq - pj * dp / alpha - pj * qj / alpha);
        let qt = qj + h2 / 12.0 * (d2q - pj * dq / alpha);
        l.lower[j] = 1.0 / 12.0 + h * pj / (24.0 * alpha);
        l.diag[j] = 5.0 / 6.0;
        l.upper[j] = 1.0 / 12.0 - h * pj / (24.0 * alpha);
        a.lower[j] = -at / h2 - pt / (2.0 * h);
        a.diag[j] = 2.0 * at / h2 + qt;
        a.upper[j] = -at / h2 + pt / (2.0 * h);
    }
    (l, a)
}

fn solve_checked(lhs: &Tridiag, rhs: &[f64]) -> Result<Vec<f64>> {
    let x = lhs.solve(rhs)?;
    let r = lhs.relative_residual(&x, rhs);
    if !(r <= RESIDUAL_TOL) {
        return Err(Error::SolverBreakdown {
            row: 0,
            reason: format!("relative residual {r:e} exceeds {RESIDUAL_TOL:e}"),
        });
    }
    Ok(x)
}

/// One step from `t_now` to `t_next` with end values `bc` at `t_next`.
pub fn cn_step_with(
    coeffs: &RatioCoefficients1D,
    grid: &Grid1D,
    v_now: &[f64],
    t_now: f64,
    t_next: f64,
    bc: [f64; 2],
    scheme: SpatialScheme,
) -> Result<Vec<f64>> {
    let n = grid.m + 1;
    if v_now.len() != n {
        return Err(Error::InvalidInput(format!(
            "row has {} entries, grid has {n} nodes",
            v_now.len()
        )));
    }
    let k = t_next - t_now;
    let (mut lhs, mut rhs) = match scheme {
        SpatialScheme::Central => {
            let op_now = central_operator(coeffs, grid, t_now)?;
            let op_next = central_operator(coeffs, grid, t_next)?;
            let mut lhs = Tridiag::identity(n);
            let mut explicit = Tridiag::identity(n);
            for j in 1..grid.m {
                lhs.lower[j] = -0.5 * k * op_next.lower[j];
                lhs.diag[j] = 1.0 - 0.5 * k * op_next.diag[j];
                lhs.upper[j] = -0.5 * k * op_next.upper[j];
                explicit.lower[j] = 0.5 * k * op_now.lower[j];
                explicit.diag[j] = 1.0 + 0.5 * k * op_now.diag[j];
                explicit.upper[j] = 0.5 * k * op_now.upper[j];
            }
            (lhs, explicit.apply(v_now))
        }
        SpatialScheme::Compact => {
            // c u'' + b u' + a u = u_t, divided by c: α = 1, p = -b/c, q = -a/c
            let tm = 0.5 * (t_now + t_next);
            let mut p = vec![0.0; n];
            let mut q = vec![0.0; n];
            let mut inv_c = vec![0.0; n];
            for j in 0..n {
                let [a, b, c] = sample(coeffs, grid.x(j), tm)?;
                p[j] = -b / c;
                q[j] = -a / c;
                inv_c[j] = 1.0 / c;
            }
            let (l, a) = compact_rows(&p, &q, 1.0, grid.h());
            let mut lhs = Tridiag::identity(n);
            let mut explicit = Tridiag::identity(n);
            for j in 1..grid.m {
                let bl = l.lower[j] * inv_c[j - 1];
                let bd = l.diag[j] * inv_c[j];
                let bu = l.upper[j] * inv_c[j + 1];
                lhs.lower[j] = bl + 0.5 * k * a.lower[j];
                lhs.diag[j] = bd + 0.5 * k * a.diag[j];
                lhs.upper[j] = bu + 0.5 * k * a.upper[j];
                explicit.lower[j] = bl - 0.5 * k * a.lower[j];
                explicit.diag[j] = bd - 0.5 * k * a.diag[j];
                explicit.upper[j] = bu - 0.5 * k * a.upper[j];
            }
            (lhs, explicit.apply(v_now))
        }
    };
    lhs.set_identity_row(0);
    lhs.set_identity_row(grid.m);
    rhs[0] = bc[0];
    rhs[grid.m] = bc[1];
    solve_checked(&lhs, &rhs)
}

/// One Crank–Nicolson step with both ends pinned to `boundary_value`.
pub fn cn_step(
    coeffs: &RatioCoefficients1D,
    grid: &Grid1D,
    v_now: &[f64],
    t_now: f64,
    t_next: f64,
    boundary_value: f64,
) -> Result<Vec<f64>> {
    cn_step_with(
        coeffs,
        grid,
        v_now,
        t_now,
        t_next,
        [boundary_value, boundary_value],
        SpatialScheme::Central,
    )
}

/// Solves a general Dirichlet problem from `initial` at `grid.t0`; rows are
/// returned time-major.
pub fn solve_parabolic_1d(
    coeffs: &RatioCoefficients1D,
    grid: &Grid1D,
    initial: &dyn Fn(f64) -> f64,
    boundary: &dyn Fn(f64) -> [f64; 2],
    scheme: SpatialScheme,
) -> Result<Vec<f64>> {
    let w = grid.m + 1;
    let mut values = Vec::with_capacity(w * (grid.n + 1));
    let mut row: Vec<f64> = grid.xs().into_iter().map(initial).collect();
    values.extend_from_slice(&row);
    for i in 0..grid.n {
        let (t0, t1) = (grid.t(i), grid.t(i + 1));
        row = cn_step_with(coeffs, grid, &row, t0, t1, boundary(t1), scheme)
            .map_err(|e| Error::StepFailed {
                step: i + 1,
                source: Box::new(e),
            })?;
        values.extend_from_slice(&row);
    }
    Ok(values)
}

/// Options for [`solve_ratio_1d_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub boundary_value: f64,
    pub scheme: SpatialScheme,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            boundary_value: 1.0,
            scheme: SpatialScheme::Central,
        }
    }
}

/// Solves the ratio equation with `V = 1` initially and on both ends.
///
/// The coefficients are singular at the origin, so the unit initial
/// condition is imposed one step later: rows 0 and 1 are both 1 and the
/// time stepping starts from `t0 + k`.
pub fn solve_ratio_1d(
    coeffs: &RatioCoefficients1D,
    grid: &Grid1D,
    boundary_value: f64,
) -> Result<RatioField> {
    solve_ratio_1d_with(
        coeffs,
        grid,
        SolveOptions {
            boundary_value,
            ..Default::default()
        },
    )
}

pub fn solve_ratio_1d_with(
    coeffs: &RatioCoefficients1D,
    grid: &Grid1D,
    opts: SolveOptions,
) -> Result<RatioField> {
    if grid.t0 < coeffs.t_origin() {
        return Err(Error::InvalidTime {
            t0: coeffs.t_origin(),
            t: grid.t0,
        });
    }
    let w = grid.m + 1;
    let bv = opts.boundary_value;
    let mut values = Vec::with_capacity(w * (grid.n + 1));
    let mut row = vec![1.0; w];
    row[0] = bv;
    row[grid.m] = bv;
    values.extend_from_slice(&row);
    let start = if grid.t0 > coeffs.t_origin() { 0 } else { 1 };
    if start == 1 {
        values.extend_from_slice(&row);
    }
    for i in start..grid.n {
        let (t0, t1) = (grid.t(i), grid.t(i + 1));
        row = cn_step_with(coeffs, grid, &row, t0, t1, [bv, bv], opts.scheme).map_err(|e| {
            Error::StepFailed {
                step: i + 1,
                source: Box::new(e),
            }
        })?;
        values.extend_from_slice(&row);
    }
    Ok(RatioField {
        grid: *grid,
        values,
        boundary_value: bv,
        effective_t0: grid.t(start),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ratio::ou_ratio_coefficients;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn heat() -> RatioCoefficients1D {
        RatioCoefficients1D::new("heat", f64::NEG_INFINITY, |_, _| Ok([0.0, 0.0, 0.5]))
    }

    #[test]
    fn grid_validation() {
        assert!(Grid1D::new(0.0, 1.0, 3, 0.0, 1.0, 1).is_err());
        assert!(Grid1D::new(0.0, 1.0, 4, 0.0, 1.0, 0).is_err());
        assert!(Grid1D::new(1.0, 1.0, 4, 0.0, 1.0, 1).is_err());
        assert!(Grid1D::new(0.0, 1.0, 4, 1.0, 1.0, 1).is_err());
        let g = Grid1D::new(-1.0, 1.0, 8, 0.0, 2.0, 4).unwrap();
        assert_eq!(g.h(), 0.25);
        assert_eq!(g.k(), 0.5);
        assert_eq!(g.x(8), 1.0);
    }

    #[test]
    fn constant_preserved_by_heat_step() {
        let g = Grid1D::new(0.0, 1.0, 20, 0.0, 1.0, 10).unwrap();
        let v = cn_step(&heat(), &g, &vec![1.0; 21], 0.0, 0.1, 1.0).unwrap();
        for x in v {
            assert!((x - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn heat_max_principle_for_large_ratios() {
        for ratio in [0.1, 1.0, 10.0, 100.0] {
            let m = 40;
            let h = 1.0 / m as f64;
            let k = ratio * h * h;
            let g = Grid1D::new(0.0, 1.0, m, 0.0, 50.0 * k, 50).unwrap();
            let rows = solve_parabolic_1d(&heat(), &g, &|x| if (0.3..0.6).contains(&x) { 1.0 } else { 0.0 }, &|_| [0.0, 0.0], SpatialScheme::Central).unwrap();
            let mx = rows.iter().cloned().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(mx <= 1.0 + 1e-12, "k/h² = {ratio}: max {mx}");
        }
    }

    #[test]
    fn identical_processes_stay_at_one() {
        use crate::process::*;
        use crate::ratio::build_ratio_pde_1d;
        let m = ou_model(0.7, 1.0).unwrap();
        let d = ou_transition_density(0.7, 1.0, 0.0, 0.0).unwrap();
        let c = build_ratio_pde_1d(&m, &m, &d).unwrap();
        let g = Grid1D::new(-4.0, 4.0, 80, 0.0, 1.0, 50).unwrap();
        let f = solve_ratio_1d(&c, &g, 1.0).unwrap();
        for v in &f.values {
            assert!((v - 1.0).abs() < 1e-10);
        }
        assert_eq!(f.effective_t0, g.t(1));
    }

    #[test]
    fn invariants_of_ratio_field() {
        let c = ou_ratio_coefficients(1.0, 1.0, 0.0, 0.0).unwrap();
        let g = Grid1D::new(-3.0, 3.0, 30, 0.0, 1.0, 20).unwrap();
        let f = solve_ratio_1d(&c, &g, 1.0).unwrap();
        for j in 0..=g.m {
            assert_eq!(f.value(0, j), 1.0);
        }
        for i in 0..=g.n {
            assert_eq!(f.value(i, 0), 1.0);
            assert_eq!(f.value(i, g.m), 1.0);
            for j in 0..=g.m {
                assert_eq!(f.eval(g.x(j), g.t(i)).unwrap().to_bits(), f.value(i, j).to_bits());
            }
        }
    }

    #[test]
    fn interpolation() {
        let g = Grid1D::new(0.0, 1.0, 4, 0.0, 1.0, 2).unwrap();
        let mut values = vec![0.0; 15];
        for i in 0..3 {
            for j in 0..5 {
                values[i * 5 + j] = 3.0 * g.x(j) + 1.0;
            }
        }
        let f = RatioField { grid: g, values, boundary_value: 1.0, effective_t0: 0.0 };
        assert_relative_eq!(f.eval(0.125, 0.3).unwrap(), 0.5 * (f.value(0, 0) + f.value(0, 1)), epsilon = 1e-15);
        let ones = RatioField { grid: g, values: vec![1.0; 15], boundary_value: 1.0, effective_t0: 0.0 };
        assert_eq!(ones.eval(0.37, 0.61).unwrap(), 1.0);
        assert!(matches!(ones.eval(1.01, 0.5), Err(Error::Domain { .. })));
        assert!(matches!(ones.eval(0.5, -0.1), Err(Error::Domain { .. })));
    }

    #[test]
    fn breakdown_reports_step() {
        let bad = RatioCoefficients1D::new("bad", f64::NEG_INFINITY, |x, _| Ok([0.0, 0.0, if x > 0.5 { -1.0 } else { 0.5 }]));
        let g = Grid1D::new(0.0, 1.0, 10, 0.0, 1.0, 4).unwrap();
        let r = solve_parabolic_1d(&bad, &g, &|_| 1.0, &|_| [1.0, 1.0], SpatialScheme::Central);
        assert!(matches!(r, Err(Error::StepFailed { step: 1, .. })));
    }

    /// V* = e^{-t} sin(πx) solves the equation with b = β sin(πx),
    /// a = -1 + cπ² - βπ cos(πx) for any c.
    fn mms(beta: f64) -> RatioCoefficients1D {
        RatioCoefficients1D::new("mms", f64::NEG_INFINITY, move |x, _| {
            let c = 0.5 + 0.25 * x;
            Ok([-1.0 + c * PI * PI - beta * PI * (PI * x).cos(), beta * (PI * x).sin(), c])
        })
    }

    fn mms_error(m: usize, n: usize, scheme: SpatialScheme) -> f64 {
        let g = Grid1D::new(0.0, 1.0, m, 0.0, 1.0, n).unwrap();
        let rows = solve_parabolic_1d(&mms(0.8), &g, &|x| (PI * x).sin(), &|_| [0.0, 0.0], scheme).unwrap();
        let last = &rows[g.n * (m + 1)..];
        (0..=m).map(|j| (last[j] - (-1.0f64).exp() * (PI * g.x(j)).sin()).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn central_second_order_joint_refinement() {
        let e: Vec<f64> = [40, 80, 160].iter().map(|&m| mms_error(m, m, SpatialScheme::Central)).collect();
        for w in e.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!(order >= 1.9, "order {order}, errors {e:?}");
        }
    }

    #[test]
    fn compact_scheme_converges_faster_in_space() {
        let e: Vec<f64> = [10, 20, 40].iter().map(|&m| mms_error(m, 2000, SpatialScheme::Compact)).collect();
        let order = (e[1] / e[2]).log2();
        assert!(order >= 3.5, "order {order}, errors {e:?}");
    }
}
