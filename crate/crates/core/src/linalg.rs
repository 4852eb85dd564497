//! Tiny fixed-size normal-equation solver used in the inner IRLS loop.

pub const MAX_DIM: usize = 3;

/// Relative Cholesky pivot below which the system is declared singular.
const PIVOT_TOL: f64 = 1e-10;

/// Accumulates `XᵀWX` and `XᵀWy` for up to `MAX_DIM` columns.
#[derive(Debug, Clone)]
pub(crate) struct NormalEquations {
    dim: usize,
    xtx: [[f64; MAX_DIM]; MAX_DIM],
    xty: [f64; MAX_DIM],
}

impl NormalEquations {
    pub(crate) fn new(dim: usize) -> Self {
        debug_assert!((1..=MAX_DIM).contains(&dim));
        Self {
            dim,
            xtx: [[0.0; MAX_DIM]; MAX_DIM],
            xty: [0.0; MAX_DIM],
        }
    }

    #[inline]
    pub(crate) fn add(&mut self, row: &[f64; MAX_DIM], weight: f64, y: f64) {
        for i in 0..self.dim {
            let wi = weight * row[i];
            self.xty[i] += wi * y;
            for j in 0..=i {
                self.xtx[i][j] += wi * row[j];
            }
        }
    }

    /// Cholesky solve; `None` when the weighted design is rank deficient.
    pub(crate) fn solve(&self) -> Option<[f64; MAX_DIM]> {
        self.solve_damped(0.0)
    }

    /// Solves with `lambda` times the diagonal added to `XᵀWX`.
    pub(crate) fn solve_damped(&self, lambda: f64) -> Option<[f64; MAX_DIM]> {
        let d = self.dim;
        let mut a = self.xtx;
        for i in 0..d {
            a[i][i] *= 1.0 + lambda;
        }
        let mut l = [[0.0; MAX_DIM]; MAX_DIM];
        for i in 0..d {
            for j in 0..=i {
                let mut s = a[i][j];
                for k in 0..j {
                    s -= l[i][k] * l[j][k];
                }
                if i == j {
                    let diag = a[i][i];
                    if !(diag > 0.0) || !(s > PIVOT_TOL * diag) {
                        return None;
                    }
                    l[i][i] = s.sqrt();
                } else {
                    l[i][j] = s / l[j][j];
                }
            }
        }
        let mut z = [0.0; MAX_DIM];
        for i in 0..d {
            let mut s = self.xty[i];
            for k in 0..i {
                s -= l[i][k] * z[k];
            }
            z[i] = s / l[i][i];
        }
        let mut beta = [0.0; MAX_DIM];
        for i in (0..d).rev() {
            let mut s = z[i];
            for k in i + 1..d {
                s -= l[k][i] * beta[k];
            }
            beta[i] = s / l[i][i];
        }
        if beta[..d].iter().all(|b| b.is_finite()) {
            Some(beta)
        } else {
            None
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_exact_line() {
        let mut ne = NormalEquations::new(2);
        for i in 0..5 {
            let x = i as f64;
            ne.add(&[1.0, x, 0.0], 1.0 + x, 2.0 - 3.0 * x);
        }
        let b = ne.solve().unwrap();
        assert!((b[0] - 2.0).abs() < 1e-12 && (b[1] + 3.0).abs() < 1e-12);
    }

    #[test]
    fn detects_collinear_columns() {
        let mut ne = NormalEquations::new(2);
        for _ in 0..4 {
            ne.add(&[1.0, 0.5, 0.0], 1.0, 1.0);
        }
        assert!(ne.solve().is_none());
    }
}
