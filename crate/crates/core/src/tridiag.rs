//! Tridiagonal systems: Thomas elimination with a partial-pivoting fallback.

use crate::error::{Error, Result};

/// Relative pivot size below which elimination is declared broken.
const PIVOT_TOL: f64 = 1e-14;

/// `lower[i] x[i-1] + diag[i] x[i] + upper[i] x[i+1]`; `lower[0]` and
/// `upper[n-1]` are ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiag {
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Tridiag {
    pub fn zeros(n: usize) -> Self {
        Tridiag {
            lower: vec![0.0; n],
            diag: vec![0.0; n],
            upper: vec![0.0; n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(n);
        t.diag.iter_mut().for_each(|d| *d = 1.0);
        t
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// Pins row `i` to the identity (Dirichlet row).
    pub fn set_identity_row(&mut self, i: usize) {
        self.lower[i] = 0.0;
        self.diag[i] = 1.0;
        self.upper[i] = 0.0;
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; x.len()];
        self.apply_into(x, &mut y);
        y
    }

    pub fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        let n = self.len();
        for i in 0..n {
            let mut s = self.diag[i] * x[i];
            if i > 0 {
                s += self.lower[i] * x[i - 1];
            }
            if i + 1 < n {
                s += self.upper[i] * x[i + 1];
            }
            y[i] = s;
        }
    }

    pub fn is_diagonally_dominant(&self) -> bool {
        let n = self.len();
        (0..n).all(|i| {
            let off = if i > 0 { self.lower[i].abs() } else { 0.0 }
                + if i + 1 < n { self.upper[i].abs() } else { 0.0 };
            self.diag[i].abs() >= off && self.diag[i] != 0.0
        })
    }

    fn scale(&self) -> f64 {
        self.diag
            .iter()
            .chain(&self.lower)
            .chain(&self.upper)
            .fold(0.0f64, |m, v| m.max(v.abs()))
            .max(f64::MIN_POSITIVE)
    }

    /// Solves `self · x = rhs`. Uses the Thomas algorithm when the matrix is
    /// diagonally dominant, partial pivoting otherwise.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        if rhs.len() != self.len() {
            return Err(Error::InvalidInput(format!(
                "rhs length {} does not match system size {}",
                rhs.len(),
                self.len()
            )));
        }
        if self.is_diagonally_dominant() {
            self.thomas(rhs)
        } else {
            self.pivoting(rhs)
        }
    }

    /// Thomas elimination without pivoting.
    pub fn thomas(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let n = self.len();
        let tol = PIVOT_TOL * self.scale();
        let mut c = vec![0.0; n];
        let mut x = vec![0.0; n];
        let mut piv = self.diag[0];
        if !(piv.abs() > tol) {
            return Err(breakdown(0, piv));
        }
        c[0] = if n > 1 { self.upper[0] / piv } else { 0.0 };
        x[0] = rhs[0] / piv;
        for i in 1..n {
            piv = self.diag[i] - self.lower[i] * c[i - 1];
            if !(piv.abs() > tol) {
                return Err(breakdown(i, piv));
            }
            if i + 1 < n {
                c[i] = self.upper[i] / piv;
            }
            x[i] = (rhs[i] - self.lower[i] * x[i - 1]) / piv;
        }
        for i in (0..n.saturating_sub(1)).rev() {
            x[i] -= c[i] * x[i + 1];
        }
        Ok(x)
    }

    /// Gaussian elimination with partial pivoting on the band; fill-in is
    /// confined to a second superdiagonal.
    pub fn pivoting(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let n = self.len();
        let tol = PIVOT_TOL * self.scale();
        // rows stored as (d, u1, u2) relative to the pivot column
        let mut d = self.diag.clone();
        let mut u1: Vec<f64> = (0..n).map(|i| if i + 1 < n { self.upper[i] } else { 0.0 }).collect();
        let mut u2 = vec![0.0; n];
        let mut l: Vec<f64> = self.lower.clone();
        let mut b = rhs.to_vec();
        for i in 0..n {
            if i + 1 < n && l[i + 1].abs() > d[i].abs() {
                // swap rows i and i+1 in the active band
                let (ni_d, ni_u1, ni_u2) = (l[i + 1], d[i + 1], u1[i + 1]);
                let (oi_d, oi_u1, oi_u2) = (d[i], u1[i], u2[i]);
                d[i] = ni_d;
                u1[i] = ni_u1;
                u2[i] = ni_u2;
                l[i + 1] = oi_d;
                d[i + 1] = oi_u1;
                u1[i + 1] = oi_u2;
                b.swap(i, i + 1);
            }
            if !(d[i].abs() > tol) {
                return Err(breakdown(i, d[i]));
            }
            if i + 1 < n {
                let m = l[i + 1] / d[i];
                d[i + 1] -= m * u1[i];
                u1[i + 1] -= m * u2[i];
                b[i + 1] -= m * b[i];
                l[i + 1] = 0.0;
            }
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let mut s = b[i];
            if i + 1 < n {
                s -= u1[i] * x[i + 1];
            }
            if i + 2 < n {
                s -= u2[i] * x[i + 2];
            }
            x[i] = s / d[i];
        }
        Ok(x)
    }

    /// `‖self · x - rhs‖∞ / max(‖rhs‖∞, ‖self‖·‖x‖∞)`.
    pub fn relative_residual(&self, x: &[f64], rhs: &[f64]) -> f64 {
        let ax = self.apply(x);
        let r = ax.iter().zip(rhs).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        let xn = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let bn = rhs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let denom = bn.max(self.scale() * xn);
        if denom == 0.0 {
            r
        } else {
            r / denom
        }
    }
}

fn breakdown(row: usize, piv: f64) -> Error {
    Error::SolverBreakdown {
        row,
        reason: format!("pivot {piv:e} is numerically zero"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn random_system(n: usize, seed: u64, dominant: bool) -> Tridiag {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut t = Tridiag::zeros(n);
        for i in 0..n {
            t.lower[i] = rng.random_range(-1.0..1.0);
            t.upper[i] = rng.random_range(-1.0..1.0);
            t.diag[i] = if dominant {
                2.5 + rng.random_range(0.0..1.0)
            } else {
                rng.random_range(-0.3..0.3)
            };
        }
        t
    }

    #[test]
    fn thomas_solves_dominant_system() {
        let t = random_system(50, 1, true);
        let x: Vec<f64> = (0..50).map(|i| (i as f64).sin()).collect();
        let b = t.apply(&x);
        let y = t.solve(&b).unwrap();
        for (a, e) in y.iter().zip(&x) {
            assert!((a - e).abs() < 1e-13);
        }
    }

    #[test]
    fn pivoting_handles_zero_diagonal() {
        // [[0,1],[1,0]] has a zero leading pivot
        let t = Tridiag {
            lower: vec![0.0, 1.0],
            diag: vec![0.0, 0.0],
            upper: vec![1.0, 0.0],
        };
        assert!(matches!(t.thomas(&[1.0, 2.0]), Err(Error::SolverBreakdown { row: 0, .. })));
        let x = t.solve(&[1.0, 2.0]).unwrap();
        assert_eq!(x, vec![2.0, 1.0]);
    }

    #[test]
    fn singular_system_reports_row() {
        let t = Tridiag {
            lower: vec![0.0, 1.0, 1.0],
            diag: vec![1.0, 1.0, 1.0],
            upper: vec![1.0, 1.0, 0.0],
        };
        // rows: [1 1 0], [1 1 1], [0 1 1] -> determinant -1, nonsingular; make it singular
        let mut s = t.clone();
        s.diag[2] = 1.0;
        s.lower[2] = 0.0;
        s.upper[1] = 0.0;
        // rows [1 1 0], [1 1 0], [0 0 1]: singular
        assert!(matches!(s.solve(&[1.0, 1.0, 1.0]), Err(Error::SolverBreakdown { row: 1, .. })));
    }

    proptest! {
        #[test]
        fn solve_then_apply_is_identity(n in 2usize..40, seed in 0u64..1000, dominant in any::<bool>()) {
            let t = random_system(n, seed, dominant);
            let x: Vec<f64> = (0..n).map(|i| ((i * 7 + seed as usize) as f64).cos()).collect();
            let b = t.apply(&x);
            if let Ok(y) = t.solve(&b) {
                prop_assert!(t.relative_residual(&y, &b) < 1e-9);
            }
        }
    }
}
