//! High-order compact ADI solver for
//! `V_t = 2ε V + c V_x + d V_y + α (V_xx + V_yy)` on a rectangle with
//! Dirichlet data.
//!
//! Each direction carries the operator `-α ∂² - c ∂ - ε`, discretised with a
//! fourth-order compact stencil `L f = A u`; the scheme is
//! `(L_x + Δt/2 A_x)(L_y + Δt/2 A_y) Vⁿ⁺¹ = (L_x - Δt/2 A_x)(L_y - Δt/2 A_y) Vⁿ`
//! split into an x sweep and a y sweep.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ratio::{near_odd_half_pi, RatioCoefficients2D};
use crate::solver1d::{compact_rows, lerp, locate};
use crate::tridiag::Tridiag;

/// Uniform mesh on `[x_min, x_max] × [y_min, y_max] × [t0, t_end]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid2D {
    pub x_min: f64,
    pub x_max: f64,
    pub mx: usize,
    pub y_min: f64,
    pub y_max: f64,
    pub my: usize,
    pub t0: f64,
    pub t_end: f64,
    pub n: usize,
}

impl Grid2D {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        x_min: f64,
        x_max: f64,
        mx: usize,
        y_min: f64,
        y_max: f64,
        my: usize,
        t0: f64,
        t_end: f64,
        n: usize,
    ) -> Result<Self> {
        if mx < 4 || my < 4 {
            return Err(Error::InvalidParameter {
                name: "mx",
                reason: format!("need at least 4 subintervals per direction, got {mx} x {my}"),
            });
        }
        if n < 1 {
            return Err(Error::InvalidParameter {
                name: "n",
                reason: "need at least one time step".into(),
            });
        }
        for (lo, hi) in [(x_min, x_max), (y_min, y_max)] {
            if !(lo.is_finite() && hi.is_finite() && hi > lo) {
                return Err(Error::InvalidParameter {
                    name: "x_max",
                    reason: format!("need a finite nonempty range, got [{lo}, {hi}]"),
                });
            }
        }
        if !(t0.is_finite() && t_end.is_finite() && t_end > t0) {
            return Err(Error::InvalidParameter {
                name: "t_end",
                reason: format!("need finite t0 < T, got [{t0}, {t_end}]"),
            });
        }
        let g = Grid2D {
            x_min,
            x_max,
            mx,
            y_min,
            y_max,
            my,
            t0,
            t_end,
            n,
        };
        if g.dt() > g.dx().min(g.dy()) * (1.0 + 1e-12) {
            return Err(Error::InvalidParameter {
                name: "n",
                reason: format!(
                    "time step {} exceeds min(dx, dy) = {}",
                    g.dt(),
                    g.dx().min(g.dy())
                ),
            });
        }
        Ok(g)
    }

    /// Square logit window `[-half_width, half_width]²`; rejects windows
    /// reaching ±π/2 where the transformed drift is singular.
    pub fn logit_window(half_width: f64, m: usize, t0: f64, t_end: f64, n: usize) -> Result<Self> {
        let g = Grid2D::new(-half_width, half_width, m, -half_width, half_width, m, t0, t_end, n)?;
        g.ensure_trig_free()?;
        Ok(g)
    }

    /// Fails when either coordinate range touches an odd multiple of π/2.
    pub fn ensure_trig_free(&self) -> Result<()> {
        use std::f64::consts::{FRAC_PI_2, PI};
        for (lo, hi) in [(self.x_min, self.x_max), (self.y_min, self.y_max)] {
            let k_lo = ((lo - FRAC_PI_2) / PI).ceil();
            let first = FRAC_PI_2 + k_lo * PI;
            if first <= hi || near_odd_half_pi(lo) || near_odd_half_pi(hi) {
                return Err(Error::TrigSingularity(format!(
                    "range [{lo}, {hi}] contains the singular point {first}"
                )));
            }
        }
        Ok(())
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / self.mx as f64
    }

    pub fn dy(&self) -> f64 {
        (self.y_max - self.y_min) / self.my as f64
    }

    pub fn dt(&self) -> f64 {
        (self.t_end - self.t0) / self.n as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        if i == self.mx {
            self.x_max
        } else {
            self.x_min + i as f64 * self.dx()
        }
    }

    pub fn y(&self, j: usize) -> f64 {
        if j == self.my {
            self.y_max
        } else {
            self.y_min + j as f64 * self.dy()
        }
    }

    pub fn t(&self, n: usize) -> f64 {
        if n == self.n {
            self.t_end
        } else {
            self.t0 + n as f64 * self.dt()
        }
    }

    /// Nodes per mesh function.
    pub fn size(&self) -> usize {
        (self.mx + 1) * (self.my + 1)
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        i * (self.my + 1) + j
    }
}

/// Compact operators at one time level: x-direction operators per y-row `j`
/// and y-direction operators per x-column `i`.
#[derive(Debug, Clone)]
pub struct CompactOperators {
    pub lx: Vec<Tridiag>,
    pub ax: Vec<Tridiag>,
    pub ly: Vec<Tridiag>,
    pub ay: Vec<Tridiag>,
}

/// Samples `ε, c, d` on every node at time `t` and builds the compact
/// operators of both directions.
pub fn assemble_operators(
    coeffs: &RatioCoefficients2D,
    grid: &Grid2D,
    t: f64,
) -> Result<CompactOperators> {
    let (nx, ny) = (grid.mx + 1, grid.my + 1);
    let mut eps = vec![0.0; grid.size()];
    let mut cc = vec![0.0; grid.size()];
    let mut dd = vec![0.0; grid.size()];
    for i in 0..nx {
        for j in 0..ny {
            let (x, y) = (grid.x(i), grid.y(j));
            let v = coeffs.eval(x, y, t).map_err(|e| Error::Assembly {
                location: format!("(x, y, t) = ({x}, {y}, {t})"),
                reason: e.to_string(),
            })?;
            if !v.iter().all(|c| c.is_finite()) {
                return Err(Error::Assembly {
                    location: format!("(x, y, t) = ({x}, {y}, {t})"),
                    reason: format!("non-finite coefficients {v:?}"),
                });
            }
            let k = grid.idx(i, j);
            eps[k] = v[0];
            cc[k] = v[1];
            dd[k] = v[2];
        }
    }
    let alpha = coeffs.alpha;
    let (mut lx, mut ax) = (Vec::with_capacity(ny), Vec::with_capacity(ny));
    for j in 0..ny {
        let p: Vec<f64> = (0..nx).map(|i| -cc[grid.idx(i, j)]).collect();
        let q: Vec<f64> = (0..nx).map(|i| -eps[grid.idx(i, j)]).collect();
        let (l, a) = compact_rows(&p, &q, alpha, grid.dx());
        lx.push(l);
        ax.push(a);
    }
    let (mut ly, mut ay) = (Vec::with_capacity(nx), Vec::with_capacity(nx));
    for i in 0..nx {
        let p: Vec<f64> = (0..ny).map(|j| -dd[grid.idx(i, j)]).collect();
        let q: Vec<f64> = (0..ny).map(|j| -eps[grid.idx(i, j)]).collect();
        let (l, a) = compact_rows(&p, &q, alpha, grid.dy());
        ly.push(l);
        ay.push(a);
    }
    Ok(CompactOperators { lx, ax, ly, ay })
}

/// `(L + s A)` restricted to interior rows; boundary rows become identity.
fn combine(l: &Tridiag, a: &Tridiag, s: f64) -> Tridiag {
    let n = l.len();
    let mut m = Tridiag::identity(n);
    for r in 1..n - 1 {
        m.lower[r] = l.lower[r] + s * a.lower[r];
        m.diag[r] = l.diag[r] + s * a.diag[r];
        m.upper[r] = l.upper[r] + s * a.upper[r];
    }
    m
}

fn line_error(dir: &str, line: usize, e: Error) -> Error {
    match e {
        Error::SolverBreakdown { row, reason } => Error::SolverBreakdown {
            row,
            reason: format!("{dir}-line {line}: {reason}"),
        },
        other => other,
    }
}

/// One ADI step with operators frozen at the half step. `g_next` holds the
/// Dirichlet data at the new time level (only its boundary ring is read).
pub fn adi_step(
    ops: &CompactOperators,
    grid: &Grid2D,
    v_now: &[f64],
    dt: f64,
    g_next: &[f64],
) -> Result<Vec<f64>> {
    let (nx, ny) = (grid.mx + 1, grid.my + 1);
    if v_now.len() != grid.size() || g_next.len() != grid.size() {
        return Err(Error::InvalidInput(format!(
            "mesh functions must have {} entries",
            grid.size()
        )));
    }
    let h = 0.5 * dt;
    // W = (L_y - Δt/2 A_y) Vⁿ along every x-column, interior j
    let w_cols: Vec<Vec<f64>> = (0..nx)
        .into_par_iter()
        .map(|i| {
            let col = &v_now[i * ny..(i + 1) * ny];
            let m = combine(&ops.ly[i], &ops.ay[i], -h);
            m.apply(col)
        })
        .collect();
    // V* boundary values at i = 0, mx: (L_y + Δt/2 A_y) g along those columns
    let star_bdy: Vec<Vec<f64>> = [0, nx - 1]
        .iter()
        .map(|&i| {
            let col = &g_next[i * ny..(i + 1) * ny];
            combine(&ops.ly[i], &ops.ay[i], h).apply(col)
        })
        .collect();
    // x sweep: (L_x + Δt/2 A_x) V* = (L_x - Δt/2 A_x) W for interior j
    let star_rows: Vec<Vec<f64>> = (1..ny - 1)
        .into_par_iter()
        .map(|j| -> Result<Vec<f64>> {
            let w_row: Vec<f64> = (0..nx).map(|i| w_cols[i][j]).collect();
            let mut rhs = combine(&ops.lx[j], &ops.ax[j], -h).apply(&w_row);
            rhs[0] = star_bdy[0][j];
            rhs[nx - 1] = star_bdy[1][j];
            combine(&ops.lx[j], &ops.ax[j], h)
                .solve(&rhs)
                .map_err(|e| line_error("x", j, e))
        })
        .collect::<Result<_>>()?;
    // y sweep: (L_y + Δt/2 A_y) Vⁿ⁺¹ = V* for interior i
    let cols: Vec<Vec<f64>> = (1..nx - 1)
        .into_par_iter()
        .map(|i| -> Result<Vec<f64>> {
            let mut rhs = vec![0.0; ny];
            for j in 1..ny - 1 {
                rhs[j] = star_rows[j - 1][i];
            }
            rhs[0] = g_next[grid.idx(i, 0)];
            rhs[ny - 1] = g_next[grid.idx(i, ny - 1)];
            combine(&ops.ly[i], &ops.ay[i], h)
                .solve(&rhs)
                .map_err(|e| line_error("y", i, e))
        })
        .collect::<Result<_>>()?;
    let mut out = g_next.to_vec();
    for (c, col) in cols.iter().enumerate() {
        let i = c + 1;
        out[i * ny + 1..(i + 1) * ny - 1].copy_from_slice(&col[1..ny - 1]);
    }
    Ok(out)
}

/// Time-stamped stack of mesh functions.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioField2D {
    pub grid: Grid2D,
    /// `[n][i][j]`, `n` over time levels.
    pub values: Vec<f64>,
    pub effective_t0: f64,
}

impl RatioField2D {
    pub fn level(&self, n: usize) -> &[f64] {
        let s = self.grid.size();
        &self.values[n * s..(n + 1) * s]
    }

    pub fn value(&self, n: usize, i: usize, j: usize) -> f64 {
        self.values[n * self.grid.size() + self.grid.idx(i, j)]
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Copy divided by the global maximum, for display only.
    pub fn normalized(&self) -> RatioField2D {
        let mx = self.max_value();
        let mut out = self.clone();
        if mx > 0.0 && mx.is_finite() {
            out.values.iter_mut().for_each(|v| *v /= mx);
        }
        out
    }

    /// Trilinear interpolation; exact at nodes.
    pub fn eval(&self, x: f64, y: f64, t: f64) -> Result<f64> {
        let g = &self.grid;
        if !(x >= g.x_min && x <= g.x_max && y >= g.y_min && y <= g.y_max && t >= g.t0 && t <= g.t_end) {
            return Err(Error::Domain {
                x,
                t,
                domain: format!(
                    "[{}, {}] x [{}, {}] x [{}, {}] (y = {y})",
                    g.x_min, g.x_max, g.y_min, g.y_max, g.t0, g.t_end
                ),
            });
        }
        let (i, wx) = locate((x - g.x_min) / g.dx(), g.mx);
        let (j, wy) = locate((y - g.y_min) / g.dy(), g.my);
        let (n, wt) = locate((t - g.t0) / g.dt(), g.n);
        let plane = |n: usize| {
            let a = lerp(self.value(n, i, j), self.value(n, i + 1, j), wx);
            if wy == 0.0 {
                return a;
            }
            let b = lerp(self.value(n, i, j + 1), self.value(n, i + 1, j + 1), wx);
            lerp(a, b, wy)
        };
        let lo = plane(n);
        if wt == 0.0 {
            return Ok(lo);
        }
        Ok(lerp(lo, plane(n + 1), wt))
    }

    /// `t,x,y,V` rows for the requested time levels (all when `None`).
    pub fn write_csv<W: Write>(&self, mut w: W, levels: Option<&[usize]>) -> Result<()> {
        writeln!(w, "t,x,y,V")?;
        let g = &self.grid;
        let all: Vec<usize> = (0..=g.n).collect();
        for &n in levels.unwrap_or(&all) {
            if n > g.n {
                return Err(Error::InvalidInput(format!("time level {n} exceeds {}", g.n)));
            }
            let t = g.t(n);
            for i in 0..=g.mx {
                for j in 0..=g.my {
                    writeln!(w, "{t},{},{},{}", g.x(i), g.y(j), self.value(n, i, j))?;
                }
            }
        }
        Ok(())
    }

    /// Binary dump: 32-byte little-endian header (`FPR2`, node counts in x,
    /// y, t as u32, ranges as f32), then times, x nodes, y nodes and values
    /// as f64.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        let g = &self.grid;
        w.write_all(b"FPR2")?;
        for v in [g.mx + 1, g.my + 1, g.n + 1] {
            w.write_all(&(v as u32).to_le_bytes())?;
        }
        for v in [g.x_min, g.x_max, g.y_min, g.y_max] {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
        for n in 0..=g.n {
            w.write_all(&g.t(n).to_le_bytes())?;
        }
        for i in 0..=g.mx {
            w.write_all(&g.x(i).to_le_bytes())?;
        }
        for j in 0..=g.my {
            w.write_all(&g.y(j).to_le_bytes())?;
        }
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    /// Reads a dump produced by [`write_binary`](Self::write_binary).
    pub fn read_binary(bytes: &[u8]) -> Result<RatioField2D> {
        let bad = |m: &str| Error::InvalidInput(format!("malformed field dump: {m}"));
        if bytes.len() < 32 || &bytes[..4] != b"FPR2" {
            return Err(bad("missing header"));
        }
        let u = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
        let (nx, ny, nt) = (u(4), u(8), u(12));
        let mut off = 32;
        let mut f64s = |count: usize| -> Result<Vec<f64>> {
            let end = off + 8 * count;
            if end > bytes.len() {
                return Err(bad("truncated body"));
            }
            let v = bytes[off..end]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            off = end;
            Ok(v)
        };
        let ts = f64s(nt)?;
        let xs = f64s(nx)?;
        let ys = f64s(ny)?;
        let values = f64s(nx * ny * nt)?;
        if nx < 5 || ny < 5 || nt < 2 {
            return Err(bad("grid too small"));
        }
        let grid = Grid2D {
            x_min: xs[0],
            x_max: xs[nx - 1],
            mx: nx - 1,
            y_min: ys[0],
            y_max: ys[ny - 1],
            my: ny - 1,
            t0: ts[0],
            t_end: ts[nt - 1],
            n: nt - 1,
        };
        Ok(RatioField2D {
            grid,
            values,
            effective_t0: ts[1.min(nt - 1)],
        })
    }
}

/// Solves a general Dirichlet problem with data `g(x, y, t)` from
/// `initial` at `grid.t0`. Coefficients are frozen at each half step.
pub fn solve_parabolic_2d(
    coeffs: &RatioCoefficients2D,
    grid: &Grid2D,
    initial: &(dyn Fn(f64, f64) -> f64 + Sync),
    boundary: &(dyn Fn(f64, f64, f64) -> f64 + Sync),
) -> Result<RatioField2D> {
    let mut v: Vec<f64> = mesh(grid, |x, y| initial(x, y));
    march(coeffs, grid, &mut v, 0, boundary)
}

fn mesh(grid: &Grid2D, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    let mut v = Vec::with_capacity(grid.size());
    for i in 0..=grid.mx {
        for j in 0..=grid.my {
            v.push(f(grid.x(i), grid.y(j)));
        }
    }
    v
}

fn march(
    coeffs: &RatioCoefficients2D,
    grid: &Grid2D,
    v: &mut Vec<f64>,
    start: usize,
    boundary: &(dyn Fn(f64, f64, f64) -> f64 + Sync),
) -> Result<RatioField2D> {
    let mut values = Vec::with_capacity(grid.size() * (grid.n + 1));
    for _ in 0..=start {
        values.extend_from_slice(v);
    }
    for n in start..grid.n {
        let (t0, t1) = (grid.t(n), grid.t(n + 1));
        let step = |e: Error| Error::StepFailed {
            step: n + 1,
            source: Box::new(e),
        };
        let ops = assemble_operators(coeffs, grid, 0.5 * (t0 + t1)).map_err(step)?;
        let g = mesh(grid, |x, y| boundary(x, y, t1));
        *v = adi_step(&ops, grid, v, t1 - t0, &g).map_err(step)?;
        values.extend_from_slice(v);
    }
    Ok(RatioField2D {
        grid: *grid,
        values,
        effective_t0: grid.t(start),
    })
}

/// Solves the ratio equation with `V = 1` initially and on the boundary;
/// the unit initial condition is imposed at `t0 + Δt`.
pub fn solve_ratio_2d(coeffs: &RatioCoefficients2D, grid: &Grid2D) -> Result<RatioField2D> {
    if grid.t0 < coeffs.t_origin {
        return Err(Error::InvalidTime {
            t0: coeffs.t_origin,
            t: grid.t0,
        });
    }
    let start = if grid.t0 > coeffs.t_origin { 0 } else { 1 };
    let mut v = vec![1.0; grid.size()];
    march(coeffs, grid, &mut v, start, &|_, _, _| 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::process::DriftConvention;
    use crate::ratio::wf2d_ratio_coefficients;
    use crate::solver1d::{solve_parabolic_1d, Grid1D, SpatialScheme};
    use crate::ratio::RatioCoefficients1D;
    use rand::{Rng, SeedableRng};
    use std::f64::consts::PI;

    #[test]
    fn grid_checks() {
        assert!(Grid2D::new(0.0, 1.0, 10, 0.0, 1.0, 10, 0.0, 1.0, 5).is_err());
        assert!(Grid2D::new(0.0, 1.0, 10, 0.0, 1.0, 10, 0.0, 1.0, 10).is_ok());
        assert!(matches!(Grid2D::logit_window(1.6, 20, 0.0, 1.0, 20), Err(Error::TrigSingularity(_))));
        assert!(Grid2D::logit_window(1.5, 20, 0.0, 1.0, 20).is_ok());
        let g = Grid2D::new(2.0, 5.0, 10, 0.0, 1.0, 10, 0.0, 0.1, 1).unwrap();
        assert!(g.ensure_trig_free().is_err());
    }

    #[test]
    fn zero_coefficient_operators_reduce_to_plain_stencils() {
        let g = Grid2D::new(0.0, 1.0, 20, 0.0, 1.0, 20, 0.0, 1.0, 20).unwrap();
        let ops = assemble_operators(&RatioCoefficients2D::zero(-1.0), &g, 0.5).unwrap();
        let h2 = g.dx() * g.dx();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let v: Vec<f64> = (0..21).map(|_| rng.random_range(-1.0..1.0)).collect();
        let av = ops.ax[3].apply(&v);
        let lv = ops.lx[3].apply(&v);
        for i in 1..20 {
            let d2 = (v[i + 1] - 2.0 * v[i] + v[i - 1]) / h2;
            assert!((av[i] - (-0.5 * d2)).abs() < 1e-10);
            assert!((lv[i] - (v[i] + h2 / 12.0 * d2)).abs() < 1e-12);
        }
        let ones = ops.ly[5].apply(&[1.0; 21]);
        for i in 1..20 {
            assert!((ones[i] - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn compact_operator_is_fourth_order_on_sine() {
        // A_x u ≈ L_x (½π² u) for u = sin(πx) at O(h⁴)
        let err = |m: usize| {
            let g = Grid2D::new(0.0, 1.0, m, 0.0, 1.0, m, 0.0, 1.0 / m as f64, 1).unwrap();
            let ops = assemble_operators(&RatioCoefficients2D::zero(-1.0), &g, 0.5).unwrap();
            let u: Vec<f64> = (0..=m).map(|i| (PI * g.x(i)).sin()).collect();
            let f: Vec<f64> = u.iter().map(|v| 0.5 * PI * PI * v).collect();
            let au = ops.ax[0].apply(&u);
            let lf = ops.lx[0].apply(&f);
            (1..m).map(|i| (au[i] - lf[i]).abs()).fold(0.0, f64::max)
        };
        let order = (err(20) / err(40)).log2();
        assert!(order > 3.8, "order {order}");
    }

    #[test]
    fn wf_assembly_is_finite() {
        let c = wf2d_ratio_coefficients(1.0, [0.0, 0.0], 0.0, 0.0, DriftConvention::Derived).unwrap();
        let g = Grid2D::logit_window(1.5, 40, 0.0, 1.0, 40).unwrap();
        let ops = assemble_operators(&c, &g, 1.0).unwrap();
        for m in ops.lx.iter().chain(&ops.ax).chain(&ops.ly).chain(&ops.ay) {
            assert!(m.lower.iter().chain(&m.diag).chain(&m.upper).all(|v| v.is_finite()));
        }
        for m in &ops.lx {
            for r in 1..40 {
                assert!((m.lower[r] + m.diag[r] + m.upper[r] - 1.0).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn constant_preserved() {
        let g = Grid2D::new(0.0, 1.0, 16, 0.0, 1.0, 16, 0.0, 0.5, 20).unwrap();
        let f = solve_ratio_2d(&RatioCoefficients2D::zero(0.0), &g).unwrap();
        assert!(f.values.iter().all(|v| (v - 1.0).abs() < 1e-13));
    }

    #[test]
    fn heat_mode_decay() {
        let m = 60;
        let dt = 0.5 / m as f64;
        let g = Grid2D::new(0.0, 1.0, m, 0.0, 1.0, m, 0.0, 20.0 * dt, 20).unwrap();
        let f = solve_parabolic_2d(&RatioCoefficients2D::zero(-1.0), &g, &|x, y| (PI * x).sin() * (PI * y).sin(), &|_, _, _| 0.0).unwrap();
        let expect = (-PI * PI * 0.5 * 2.0 * dt * 20.0).exp();
        let got = f.value(20, m / 2, m / 2);
        assert!((got / expect - 1.0).abs() < 0.01, "{got} vs {expect}");
        for n in 0..=20 {
            for i in 0..=m {
                assert_eq!(f.value(n, i, 0), 0.0);
            }
        }
    }

    #[test]
    fn separable_heat_matches_one_dimensional_solves() {
        let m = 40;
        let g = Grid2D::new(0.0, 1.0, m, 0.0, 1.0, m, 0.0, 0.2, 10).unwrap();
        let fx = |x: f64| x * (1.0 - x) * (1.0 + x);
        let fy = |y: f64| (PI * y).sin() + 0.3 * (2.0 * PI * y).sin();
        let two = solve_parabolic_2d(&RatioCoefficients2D::zero(-1.0), &g, &|x, y| fx(x) * fy(y), &|_, _, _| 0.0).unwrap();
        let heat = RatioCoefficients1D::new("heat", f64::NEG_INFINITY, |_, _| Ok([0.0, 0.0, 0.5]));
        let g1 = Grid1D::new(0.0, 1.0, m, 0.0, 0.2, 10).unwrap();
        let ux = solve_parabolic_1d(&heat, &g1, &fx, &|_| [0.0, 0.0], SpatialScheme::Compact).unwrap();
        let uy = solve_parabolic_1d(&heat, &g1, &fy, &|_| [0.0, 0.0], SpatialScheme::Compact).unwrap();
        let w = m + 1;
        for i in 0..=m {
            for j in 0..=m {
                let p = ux[10 * w + i] * uy[10 * w + j];
                assert!((two.value(10, i, j) - p).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn binary_round_trip() {
        let g = Grid2D::new(-1.0, 1.0, 6, -1.0, 1.0, 6, 0.0, 0.3, 3).unwrap();
        let c = wf2d_ratio_coefficients(1.0, [0.0, 0.0], 0.0, 0.0, DriftConvention::Derived).unwrap();
        let f = solve_ratio_2d(&c, &g).unwrap();
        let mut buf = Vec::new();
        f.write_binary(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"FPR2");
        assert_eq!(buf.len(), 32 + 8 * (4 + 7 + 7 + 7 * 7 * 4));
        let back = RatioField2D::read_binary(&buf).unwrap();
        assert_eq!(back.values, f.values);
        assert_eq!(back.grid.mx, 6);
    }

    #[test]
    fn nodes_evaluate_exactly() {
        let g = Grid2D::new(-1.0, 1.0, 8, -1.0, 1.0, 8, 0.0, 0.4, 4).unwrap();
        let c = wf2d_ratio_coefficients(2.0, [0.1, 0.0], 0.0, 0.0, DriftConvention::Derived).unwrap();
        let f = solve_ratio_2d(&c, &g).unwrap();
        for n in 0..=4 {
            for i in 0..=8 {
                for j in 0..=8 {
                    assert_eq!(f.eval(g.x(i), g.y(j), g.t(n)).unwrap().to_bits(), f.value(n, i, j).to_bits());
                }
            }
        }
        assert!(f.eval(1.5, 0.0, 0.2).is_err());
    }
}
