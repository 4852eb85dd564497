//! Weighted Lp-norm minimization.
//!
//! Minimizes `Σ wᵢ |yᵢ − xᵢᵀβ|^p` over `β ∈ ℝᵈ`, `d ≤ 3`, `p ≥ 1`, by
//! iteratively reweighted least squares. Each iteration solves a weighted LS
//! problem with weights `wᵢ·max(|rᵢ|, δ)^(p−2)` and moves along the resulting
//! direction with step halving until the objective decreases. For `p ≤ 2` the
//! full IRLS step is a majorize-minimize step; for `p > 2` the step starts at
//! `1/(p−1)`, which makes it exactly the Newton step of the smooth objective.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{domain, invalid, Result};
pub use crate::linalg::MAX_DIM;
use crate::linalg::NormalEquations;

const MAX_HALVINGS: usize = 30;

const SVD_RANK_TOL: f64 = 1e-13;

const DAMPING_LADDER: [f64; 5] = [1e-8, 1e-6, 1e-4, 1e-2, 1.0];

/// A design row padded to `MAX_DIM` columns.
pub type DesignRow = [f64; MAX_DIM];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Relative objective change that ends the iteration.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionFlag {
    Ok,
    /// Some residual sat below the clamp `δ` at the returned iterate.
    ClampedResiduals,
    /// Too few positively weighted rows or a rank-deficient weighted design;
    /// the coefficients are a least-squares fallback.
    Degenerate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpSolution {
    pub coefficients: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub condition: ConditionFlag,
}

/// A weighted Lp regression problem.
#[derive(Debug, Clone)]
pub struct LpProblem {
    responses: Vec<f64>,
    design: Vec<DesignRow>,
    dim: usize,
    weights: Vec<f64>,
    exponent: f64,
    start: Option<DesignRow>,
}

impl LpProblem {
    /// `design` holds one row of `d` columns per response.
    pub fn new(
        responses: Vec<f64>,
        design: &[Vec<f64>],
        weights: Vec<f64>,
        exponent: f64,
    ) -> Result<Self> {
        let dim = design.first().map_or(0, Vec::len);
        if !(1..=MAX_DIM).contains(&dim) {
            return Err(invalid(format!("design must have 1..={MAX_DIM} columns")));
        }
        let mut rows = Vec::with_capacity(design.len());
        for row in design {
            if row.len() != dim {
                return Err(invalid("design rows have unequal lengths"));
            }
            let mut r = [0.0; MAX_DIM];
            r[..dim].copy_from_slice(row);
            rows.push(r);
        }
        Self::from_rows(responses, rows, dim, weights, exponent)
    }

    /// Intercept-only problem: weighted Lp location estimate.
    pub fn location(responses: Vec<f64>, weights: Vec<f64>, exponent: f64) -> Result<Self> {
        let rows = vec![[1.0, 0.0, 0.0]; responses.len()];
        Self::from_rows(responses, rows, 1, weights, exponent)
    }

    pub(crate) fn from_rows(
        responses: Vec<f64>,
        design: Vec<DesignRow>,
        dim: usize,
        weights: Vec<f64>,
        exponent: f64,
    ) -> Result<Self> {
        if !(exponent >= 1.0 && exponent.is_finite()) {
            return Err(domain(format!("norm exponent must satisfy p >= 1, got {exponent}")));
        }
        let n = responses.len();
        if design.len() != n || weights.len() != n {
            return Err(invalid("responses, design and weights differ in length"));
        }
        if n < dim {
            return Err(invalid(format!("need at least {dim} rows, got {n}")));
        }
        if responses.iter().any(|v| !v.is_finite())
            || design.iter().any(|r| r.iter().any(|v| !v.is_finite()))
        {
            return Err(invalid("non-finite response or design value"));
        }
        if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(invalid("weights must be finite and nonnegative"));
        }
        Ok(Self {
            responses,
            design,
            dim,
            weights,
            exponent,
            start: None,
        })
    }

    pub fn with_start(mut self, start: &[f64]) -> Result<Self> {
        if start.len() != self.dim {
            return Err(invalid("start vector has the wrong dimension"));
        }
        let mut s = [0.0; MAX_DIM];
        s[..self.dim].copy_from_slice(start);
        self.start = Some(s);
        Ok(self)
    }

    pub(crate) fn set_start(&mut self, start: DesignRow) {
        self.start = Some(start);
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    /// `Σ wᵢ |yᵢ − xᵢᵀβ|^p`.
    pub fn objective(&self, beta: &[f64]) -> f64 {
        let mut b = [0.0; MAX_DIM];
        b[..self.dim].copy_from_slice(&beta[..self.dim]);
        self.objective_fixed(&b, AbsPow::new(self.exponent))
    }

    #[inline]
    fn residual(&self, i: usize, beta: &DesignRow) -> f64 {
        let row = &self.design[i];
        let mut fit = 0.0;
        for j in 0..self.dim {
            fit += row[j] * beta[j];
        }
        self.responses[i] - fit
    }

    fn objective_fixed(&self, beta: &DesignRow, pow: AbsPow) -> f64 {
        (0..self.responses.len())
            .filter(|&i| self.weights[i] > 0.0)
            .map(|i| self.weights[i] * pow.eval(self.residual(i, beta).abs()))
            .sum()
    }

    /// Weighted least squares with the problem weights scaled by `extra`.
    fn weighted_ls(&self, extra: impl Fn(usize) -> f64) -> Option<DesignRow> {
        let mut ne = NormalEquations::new(self.dim);
        for i in 0..self.responses.len() {
            let w = self.weights[i];
            if w > 0.0 {
                ne.add(&self.design[i], w * extra(i), self.responses[i]);
            }
        }
        ne.solve()
    }

    /// IRLS step `Δ` solving `XᵀVX Δ = XᵀV r(β)` with `V = W·extra`. When
    /// the normal equations are too ill conditioned the step comes from an SVD
    /// of `V^{1/2}X`, then from Marquardt-damped normal equations.
    fn irls_step(&self, beta: &DesignRow, extra: impl Fn(usize) -> f64) -> Option<DesignRow> {
        let d = self.dim;
        let mut ne = NormalEquations::new(d);
        let mut rows = Vec::new();
        for i in 0..self.responses.len() {
            let w = self.weights[i];
            if w > 0.0 {
                let v = w * extra(i);
                let r = self.residual(i, beta);
                ne.add(&self.design[i], v, r);
                rows.push((i, v.sqrt(), r));
            }
        }
        if let Some(step) = ne.solve() {
            return Some(step);
        }
        let a = DMatrix::from_fn(rows.len(), d, |k, j| rows[k].1 * self.design[rows[k].0][j]);
        let b = DVector::from_fn(rows.len(), |k, _| rows[k].1 * rows[k].2);
        let svd = a.svd(true, true);
        let smax = svd.singular_values.max();
        if smax > 0.0 && svd.singular_values.min() > SVD_RANK_TOL * smax {
            if let Ok(x) = svd.solve(&b, 0.0) {
                let mut step = [0.0; MAX_DIM];
                step[..d].copy_from_slice(x.as_slice());
                if step.iter().all(|v| v.is_finite()) {
                    return Some(step);
                }
            }
        }
        DAMPING_LADDER.iter().find_map(|&lambda| ne.solve_damped(lambda))
    }

    fn positive_rows(&self) -> usize {
        self.weights.iter().filter(|w| **w > 0.0).count()
    }

    // Least-squares coefficients used when the problem is degenerate: the
    // weighted mean as intercept (plain mean without weights), zero slopes.
    fn fallback(&self) -> DesignRow {
        let wsum: f64 = self.weights.iter().sum();
        let mean = if wsum > 0.0 {
            self.weights
                .iter()
                .zip(&self.responses)
                .map(|(w, y)| w * y)
                .sum::<f64>()
                / wsum
        } else {
            self.responses.iter().sum::<f64>() / self.responses.len() as f64
        };
        [mean, 0.0, 0.0]
    }

    fn clamp_level(&self) -> f64 {
        let mut abs: Vec<f64> = self
            .responses
            .iter()
            .zip(&self.weights)
            .filter(|(_, w)| **w > 0.0)
            .map(|(y, _)| y.abs())
            .collect();
        let median = if abs.is_empty() {
            0.0
        } else {
            let mid = abs.len() / 2;
            let (_, m, _) = abs.select_nth_unstable_by(mid, f64::total_cmp);
            *m
        };
        1e-8 * (1.0 + median)
    }
}

/// `|r|^p` with cheaper paths for integer and quarter-integer exponents.
#[derive(Debug, Clone, Copy)]
pub(crate) enum AbsPow {
    Int(i32),
    Quarter(i32),
    General(f64),
}

impl AbsPow {
    pub(crate) fn new(p: f64) -> Self {
        let q = p * 4.0;
        if p.abs() <= 64.0 && p.fract() == 0.0 {
            AbsPow::Int(p as i32)
        } else if p.abs() <= 64.0 && q.fract() == 0.0 {
            AbsPow::Quarter(q as i32)
        } else {
            AbsPow::General(p)
        }
    }

    /// `a^p` for `a ≥ 0`.
    #[inline]
    pub(crate) fn eval(self, a: f64) -> f64 {
        match self {
            AbsPow::Int(k) => a.powi(k),
            AbsPow::Quarter(k) => a.sqrt().sqrt().powi(k),
            AbsPow::General(p) => a.powf(p),
        }
    }
}

/// Minimizes the weighted Lp objective of `problem`.
///
/// `p = 2` returns the weighted least-squares solution directly. For `p = 1`
/// the minimizer need not be unique and any minimizer may be returned. A
/// degenerate problem is not an error: it comes back flagged
/// [`ConditionFlag::Degenerate`] with fallback coefficients.
pub fn lp_minimize(problem: &LpProblem, options: &SolverOptions) -> LpSolution {
    let d = problem.dim;
    let p = problem.exponent;
    let pow = AbsPow::new(p);
    let finish = |beta: DesignRow, iterations, converged, condition| LpSolution {
        coefficients: beta[..d].to_vec(),
        objective: problem.objective_fixed(&beta, pow),
        iterations,
        converged,
        condition,
    };

    let wls = if problem.positive_rows() >= d {
        problem.weighted_ls(|_| 1.0)
    } else {
        None
    };
    let Some(wls) = wls else {
        return finish(problem.fallback(), 0, false, ConditionFlag::Degenerate);
    };
    if p == 2.0 {
        return finish(wls, 0, true, ConditionFlag::Ok);
    }

    let mut beta = match problem.start {
        Some(s) if s.iter().all(|v| v.is_finite()) => s,
        _ => wls,
    };
    let mut obj = problem.objective_fixed(&beta, pow);
    if problem.objective_fixed(&wls, pow) < obj {
        beta = wls;
        obj = problem.objective_fixed(&wls, pow);
    }

    let delta = problem.clamp_level();
    let weight_pow = AbsPow::new(p - 2.0);
    let first_step = if p > 2.0 { 1.0 / (p - 1.0) } else { 1.0 };
    let mut converged = false;
    let mut iterations = 0;

    while iterations < options.max_iter {
        if obj == 0.0 {
            converged = true;
            break;
        }
        iterations += 1;
        let irls = problem.irls_step(&beta, |i| {
            weight_pow.eval(problem.residual(i, &beta).abs().max(delta))
        });
        let Some(dir) = irls else {
            break;
        };
        let mut step = first_step;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let mut cand = beta;
            for j in 0..d {
                cand[j] = beta[j] + step * dir[j];
            }
            let cobj = problem.objective_fixed(&cand, pow);
            if cobj < obj {
                accepted = Some((cand, cobj));
                break;
            }
            step *= 0.5;
        }
        let Some((cand, cobj)) = accepted else {
            // no descent left at working precision
            converged = true;
            break;
        };
        let rel = (obj - cobj) / obj;
        beta = cand;
        obj = cobj;
        if rel < options.tol {
            converged = true;
            break;
        }
    }

    let clamped = p != 2.0
        && (0..problem.responses.len())
            .any(|i| problem.weights[i] > 0.0 && problem.residual(i, &beta).abs() < delta);
    let condition = if clamped {
        ConditionFlag::ClampedResiduals
    } else {
        ConditionFlag::Ok
    };
    finish(beta, iterations, converged, condition)
}
