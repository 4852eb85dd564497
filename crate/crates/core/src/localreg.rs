//! Local constant and local linear Lp regression.
//!
//! At an evaluation point `x` the local linear fit minimizes
//! `Σ |yᵢ − β₀ − β₁(xᵢ − x)|^p K_h(xᵢ − x)`; `β₀` estimates `m(x)` and `β₁`
//! estimates `m′(x)`. The local constant fit drops the slope. In 2D the
//! weight is the product kernel `K_h(x1ᵢ − x)·K_h(x2ᵢ − z)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, invalid, Result};
use crate::kernels::{Kernel, KernelConstants};
use crate::lpsolve::{lp_minimize, ConditionFlag, DesignRow, LpProblem, LpSolution, SolverOptions};

/// Number of points in the default evaluation grid.
pub const DEFAULT_GRID_SIZE: usize = 101;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset1D {
    x: Vec<f64>,
    y: Vec<f64>,
}

impl Dataset1D {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.len() != y.len() {
            return Err(invalid(format!(
                "x and y lengths differ ({} vs {})",
                x.len(),
                y.len()
            )));
        }
        if x.len() < 2 {
            return Err(invalid("need at least two observations"));
        }
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(invalid("observations must be finite"));
        }
        let first = x[0];
        if x.iter().all(|&v| v == first) {
            return Err(invalid("predictor values are all identical"));
        }
        Ok(Self { x, y })
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// `(min x, max x)`.
    pub fn range(&self) -> (f64, f64) {
        self.x
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    /// Same design, new responses.
    pub fn with_responses(&self, y: Vec<f64>) -> Result<Self> {
        Self::new(self.x.clone(), y)
    }

    /// `size` equally spaced points over `[min x, max x]`.
    pub fn default_grid(&self, size: usize) -> Vec<f64> {
        let (lo, hi) = self.range();
        linspace(lo, hi, size)
    }
}

pub fn linspace(lo: f64, hi: f64, size: usize) -> Vec<f64> {
    match size {
        0 => Vec::new(),
        1 => vec![0.5 * (lo + hi)],
        _ => (0..size)
            .map(|i| lo + (hi - lo) * i as f64 / (size - 1) as f64)
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset2D {
    x1: Vec<f64>,
    x2: Vec<f64>,
    y: Vec<f64>,
}

impl Dataset2D {
    pub fn new(x1: Vec<f64>, x2: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let n = y.len();
        if x1.len() != n || x2.len() != n {
            return Err(invalid("x1, x2 and y lengths differ"));
        }
        if n < 3 {
            return Err(invalid("need at least three observations"));
        }
        if x1.iter().chain(&x2).chain(&y).any(|v| !v.is_finite()) {
            return Err(invalid("observations must be finite"));
        }
        // (x1, x2, 1) must have rank 3
        let mut ne = crate::linalg::NormalEquations::new(3);
        for i in 0..n {
            ne.add(&[1.0, x1[i], x2[i]], 1.0, 0.0);
        }
        if ne.solve().is_none() {
            return Err(invalid("2D design points are collinear"));
        }
        Ok(Self { x1, x2, y })
    }

    pub fn x1(&self) -> &[f64] {
        &self.x1
    }

    pub fn x2(&self) -> &[f64] {
        &self.x2
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Degree {
    Constant,
    Linear,
}

impl Degree {
    fn columns(self) -> usize {
        match self {
            Degree::Constant => 1,
            Degree::Linear => 2,
        }
    }
}

/// What to fit and where (1D).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSpec {
    pub degree: Degree,
    pub exponent: f64,
    pub bandwidth: f64,
    pub kernel: Kernel,
    pub grid: Vec<f64>,
    #[serde(default)]
    pub solver: SolverOptions,
}

impl FitSpec {
    pub fn new(degree: Degree, exponent: f64, bandwidth: f64, grid: Vec<f64>) -> Result<Self> {
        let spec = Self {
            degree,
            exponent,
            bandwidth,
            kernel: Kernel::Gaussian,
            grid,
            solver: SolverOptions::default(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_kernel(mut self, kernel: Kernel) -> Self {
        self.kernel = kernel;
        self
    }

    pub fn with_solver(mut self, solver: SolverOptions) -> Self {
        self.solver = solver;
        self
    }

    /// Copy with a different exponent and bandwidth, same grid.
    pub fn retuned(&self, exponent: f64, bandwidth: f64) -> Result<Self> {
        let mut s = self.clone();
        s.exponent = exponent;
        s.bandwidth = bandwidth;
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth > 0.0 && self.bandwidth.is_finite()) {
            return Err(domain(format!("bandwidth must be positive, got {}", self.bandwidth)));
        }
        if !(self.exponent >= 1.0 && self.exponent.is_finite()) {
            return Err(domain(format!("norm exponent must satisfy p >= 1, got {}", self.exponent)));
        }
        if self.grid.iter().any(|g| !g.is_finite()) {
            return Err(invalid("evaluation grid must be finite"));
        }
        if self.grid.windows(2).any(|w| w[1] < w[0]) {
            return Err(invalid("evaluation grid must be sorted"));
        }
        Ok(())
    }

    /// Local fit at a single point `x0`.
    pub fn fit_at(&self, data: &Dataset1D, x0: f64) -> LpSolution {
        fit_point_1d(data, self, x0)
    }

    /// Local fits at arbitrary (unsorted) points, in the given order.
    pub fn fit_points(&self, data: &Dataset1D, points: &[f64]) -> Vec<LpSolution> {
        points.par_iter().map(|&x0| fit_point_1d(data, self, x0)).collect()
    }

    /// `m̂` at each design point, in data order.
    pub fn fitted_values(&self, data: &Dataset1D) -> Vec<f64> {
        self.fit_points(data, data.x())
            .into_iter()
            .map(|s| s.coefficients[0])
            .collect()
    }
}

/// Per-point solver summary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointDiagnostics {
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub condition: ConditionFlag,
}

impl From<&LpSolution> for PointDiagnostics {
    fn from(s: &LpSolution) -> Self {
        Self {
            objective: s.objective,
            iterations: s.iterations,
            converged: s.converged,
            condition: s.condition,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub grid: Vec<f64>,
    pub m_hat: Vec<f64>,
    /// Slope estimates; present only for local linear fits.
    pub m1_hat: Option<Vec<f64>>,
    /// `true` where the grid point lies in `(min x + h, max x − h)`.
    pub interior_mask: Vec<bool>,
    pub diagnostics: Vec<PointDiagnostics>,
}

impl FitResult {
    pub fn degenerate_count(&self) -> usize {
        self.diagnostics
            .iter()
            .filter(|d| d.condition == ConditionFlag::Degenerate)
            .count()
    }
}

fn fit_point_1d(data: &Dataset1D, spec: &FitSpec, x0: f64) -> LpSolution {
    let h = spec.bandwidth;
    let dim = spec.degree.columns();
    let n = data.len();
    let mut ys = Vec::with_capacity(n);
    let mut rows: Vec<DesignRow> = Vec::with_capacity(n);
    let mut ws = Vec::with_capacity(n);
    for (&xi, &yi) in data.x().iter().zip(data.y()) {
        let u = (xi - x0) / h;
        let w = spec.kernel.evaluate(u) / h;
        if w > 0.0 {
            ys.push(yi);
            rows.push([1.0, u, 0.0]);
            ws.push(w);
        }
    }

    if ys.len() < dim {
        return sparse_fallback(data.x(), data.y(), &ys, &ws, x0, dim);
    }

    let start = if spec.degree == Degree::Constant {
        let window: Vec<f64> = data
            .x()
            .iter()
            .zip(data.y())
            .filter(|(xi, _)| (*xi - x0).abs() < 2.0 * h)
            .map(|(_, yi)| *yi)
            .collect();
        let mean = if window.is_empty() {
            weighted_mean(&ys, &ws)
        } else {
            window.iter().sum::<f64>() / window.len() as f64
        };
        Some([mean, 0.0, 0.0])
    } else {
        // local weighted LS, computed inside the solver
        None
    };

    let mut problem = LpProblem::from_rows(ys, rows, dim, ws, spec.exponent)
        .expect("validated local problem");
    if let Some(s) = start {
        problem.set_start(s);
    }
    let mut sol = lp_minimize(&problem, &spec.solver);
    if dim == 2 {
        // the slope column was (xᵢ − x)/h
        sol.coefficients[1] /= h;
    }
    sol
}

fn weighted_mean(ys: &[f64], ws: &[f64]) -> f64 {
    let wsum: f64 = ws.iter().sum();
    ys.iter().zip(ws).map(|(y, w)| y * w).sum::<f64>() / wsum
}

// Fewer effectively weighted observations than coefficients: weighted mean
// of what is there, or the nearest observation if nothing is.
fn sparse_fallback(x: &[f64], y: &[f64], ys: &[f64], ws: &[f64], x0: f64, dim: usize) -> LpSolution {
    let value = if ys.is_empty() {
        let nearest = x
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - x0).abs().total_cmp(&(b.1 - x0).abs()))
            .map(|(i, _)| i)
            .unwrap_or(0);
        y[nearest]
    } else {
        weighted_mean(ys, ws)
    };
    let mut coefficients = vec![0.0; dim];
    coefficients[0] = value;
    LpSolution {
        coefficients,
        objective: 0.0,
        iterations: 0,
        converged: false,
        condition: ConditionFlag::Degenerate,
    }
}

/// Fits `spec` on `spec.grid`.
pub fn fit_local_1d(data: &Dataset1D, spec: &FitSpec) -> Result<FitResult> {
    spec.validate()?;
    let sols = spec.fit_points(data, &spec.grid);
    let (lo, hi) = data.range();
    let h = spec.bandwidth;
    let interior_mask = spec.grid.iter().map(|&g| g > lo + h && g < hi - h).collect();
    let m_hat = sols.iter().map(|s| s.coefficients[0]).collect();
    let m1_hat = match spec.degree {
        Degree::Linear => Some(sols.iter().map(|s| s.coefficients[1]).collect()),
        Degree::Constant => None,
    };
    Ok(FitResult {
        grid: spec.grid.clone(),
        m_hat,
        m1_hat,
        interior_mask,
        diagnostics: sols.iter().map(PointDiagnostics::from).collect(),
    })
}

/// Local linear 2D fit specification; one bandwidth shared by both axes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSpec2D {
    pub exponent: f64,
    pub bandwidth: f64,
    pub kernel: Kernel,
    pub grid: Vec<[f64; 2]>,
    #[serde(default)]
    pub solver: SolverOptions,
}

impl FitSpec2D {
    pub fn new(exponent: f64, bandwidth: f64, grid: Vec<[f64; 2]>) -> Result<Self> {
        let spec = Self {
            exponent,
            bandwidth,
            kernel: Kernel::Gaussian,
            grid,
            solver: SolverOptions::default(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth > 0.0 && self.bandwidth.is_finite()) {
            return Err(domain(format!("bandwidth must be positive, got {}", self.bandwidth)));
        }
        if !(self.exponent >= 1.0 && self.exponent.is_finite()) {
            return Err(domain(format!("norm exponent must satisfy p >= 1, got {}", self.exponent)));
        }
        if self.grid.iter().flatten().any(|g| !g.is_finite()) {
            return Err(invalid("evaluation grid must be finite"));
        }
        Ok(())
    }
}

/// Cartesian product grid, `x1` varying slowest.
pub fn product_grid(x1: &[f64], x2: &[f64]) -> Vec<[f64; 2]> {
    x1.iter()
        .flat_map(|&a| x2.iter().map(move |&b| [a, b]))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult2D {
    pub grid: Vec<[f64; 2]>,
    pub m_hat: Vec<f64>,
    pub diagnostics: Vec<PointDiagnostics>,
}

fn fit_point_2d(data: &Dataset2D, spec: &FitSpec2D, at: [f64; 2]) -> LpSolution {
    let h = spec.bandwidth;
    let n = data.len();
    let mut ys = Vec::with_capacity(n);
    let mut rows: Vec<DesignRow> = Vec::with_capacity(n);
    let mut ws = Vec::with_capacity(n);
    for i in 0..n {
        let u1 = (data.x1[i] - at[0]) / h;
        let u2 = (data.x2[i] - at[1]) / h;
        let w = spec.kernel.evaluate(u1) * spec.kernel.evaluate(u2) / (h * h);
        if w > 0.0 {
            ys.push(data.y[i]);
            rows.push([1.0, u1, u2]);
            ws.push(w);
        }
    }
    if ys.len() < 3 {
        let value = if ys.is_empty() {
            let d2 = |i: usize| (data.x1[i] - at[0]).powi(2) + (data.x2[i] - at[1]).powi(2);
            let nearest = (0..n).min_by(|&a, &b| d2(a).total_cmp(&d2(b))).unwrap_or(0);
            data.y[nearest]
        } else {
            weighted_mean(&ys, &ws)
        };
        return LpSolution {
            coefficients: vec![value, 0.0, 0.0],
            objective: 0.0,
            iterations: 0,
            converged: false,
            condition: ConditionFlag::Degenerate,
        };
    }
    let problem =
        LpProblem::from_rows(ys, rows, 3, ws, spec.exponent).expect("validated local problem");
    let mut sol = lp_minimize(&problem, &spec.solver);
    sol.coefficients[1] /= h;
    sol.coefficients[2] /= h;
    sol
}

/// Local linear Lp fit of a surface on `spec.grid`.
pub fn fit_local_2d(data: &Dataset2D, spec: &FitSpec2D) -> Result<FitResult2D> {
    spec.validate()?;
    let sols: Vec<LpSolution> = spec
        .grid
        .par_iter()
        .map(|&g| fit_point_2d(data, spec, g))
        .collect();
    Ok(FitResult2D {
        grid: spec.grid.clone(),
        m_hat: sols.iter().map(|s| s.coefficients[0]).collect(),
        diagnostics: sols.iter().map(PointDiagnostics::from).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    /// `m̂(x)`
    Estimate,
    /// `m̂′(x)` (local linear only)
    Derivative,
}

/// Everything the leading-order bias and variance terms depend on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticInputs {
    pub x: f64,
    /// `m′(x)`, `m″(x)`, `m‴(x)`
    pub m1: f64,
    pub m2: f64,
    pub m3: f64,
    /// Design density `f(x)` and its derivative.
    pub density: f64,
    pub density_deriv: f64,
    /// `E|ε|²`
    pub abs_moment_2: f64,
    /// `E|ε|^(p−2)`
    pub abs_moment_p_minus_2: f64,
    /// `E|ε|^(2p−2)`
    pub abs_moment_2p_minus_2: f64,
    pub kernel: KernelConstants,
    pub n: usize,
    pub bandwidth: f64,
    pub exponent: f64,
    pub degree: Degree,
    pub target: Target,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticMoments {
    /// Leading bias term (mean minus truth).
    pub bias: f64,
    pub variance: f64,
    pub inputs: AsymptoticInputs,
}

/// Leading asymptotic bias and variance of the local Lp estimator at an
/// interior point.
///
/// With `V = E|ε|^(2p−2) / ((p−1)² E²|ε|^(p−2))`:
///
/// - local constant: bias `μ₂h²(m′f′/f + m″/2)`, variance `R(K)·V/(nhf)`;
/// - local linear: bias `μ₂h²m″/2`, same variance;
/// - slope: bias `μ₄h²m‴/(6μ₂)`, variance `μ₂(K²)·V/(nh³f μ₂²)`.
pub fn asymptotic_moments(inputs: &AsymptoticInputs) -> Result<AsymptoticMoments> {
    let p = inputs.exponent;
    if !(p > 1.0 && p.is_finite()) {
        return Err(domain(format!("asymptotic moments need p > 1, got {p}")));
    }
    if !(inputs.bandwidth > 0.0) || inputs.n == 0 || !(inputs.density > 0.0) {
        return Err(domain("need h > 0, n > 0 and f(x) > 0"));
    }
    if inputs.target == Target::Derivative && inputs.degree != Degree::Linear {
        return Err(domain("derivative moments require a local linear fit"));
    }
    let k = &inputs.kernel;
    let h = inputs.bandwidth;
    let n = inputs.n as f64;
    let f = inputs.density;
    let variance_factor = inputs.abs_moment_2p_minus_2
        / ((p - 1.0).powi(2) * inputs.abs_moment_p_minus_2.powi(2));

    let (bias, variance) = match (inputs.degree, inputs.target) {
        (Degree::Constant, _) => (
            k.mu2 * h * h * (inputs.m1 * inputs.density_deriv / f + 0.5 * inputs.m2),
            k.r * variance_factor / (n * h * f),
        ),
        (Degree::Linear, Target::Estimate) => (
            0.5 * k.mu2 * h * h * inputs.m2,
            k.r * variance_factor / (n * h * f),
        ),
        (Degree::Linear, Target::Derivative) => (
            k.mu4 * h * h * inputs.m3 / (6.0 * k.mu2),
            k.mu2_k2 * variance_factor / (n * h.powi(3) * f * k.mu2 * k.mu2),
        ),
    };
    Ok(AsymptoticMoments {
        bias,
        variance,
        inputs: *inputs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand::Rng;

    fn random_data(n: usize, seed: u64) -> Dataset1D {
        let mut rng = rng_from_seed(seed);
        let x: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let y = x
            .iter()
            .map(|&v| (6.0 * v).sin() + rng.random::<f64>() - 0.5)
            .collect();
        Dataset1D::new(x, y).unwrap()
    }

    #[test]
    fn dataset_validation() {
        assert!(Dataset1D::new(vec![1.0], vec![1.0]).is_err());
        assert!(Dataset1D::new(vec![1.0, 2.0], vec![1.0]).is_err());
        assert!(Dataset1D::new(vec![1.0, 1.0], vec![1.0, 2.0]).is_err());
        assert!(Dataset1D::new(vec![1.0, f64::NAN], vec![1.0, 2.0]).is_err());
        assert!(Dataset2D::new(
            vec![0.0, 1.0, 2.0],
            vec![0.0, 1.0, 2.0],
            vec![1.0, 2.0, 3.0]
        )
        .is_err());
    }

    #[test]
    fn spec_validation() {
        assert!(FitSpec::new(Degree::Linear, 2.0, 0.0, vec![0.0]).is_err());
        assert!(FitSpec::new(Degree::Linear, 0.9, 0.1, vec![0.0]).is_err());
        assert!(FitSpec::new(Degree::Linear, 2.0, 0.1, vec![0.5, 0.2]).is_err());
    }

    #[test]
    fn recovers_lines_exactly() {
        let x: Vec<f64> = (0..40).map(|i| (i as f64 * 0.37).sin() * 2.0).collect();
        let y: Vec<f64> = x.iter().map(|v| 1.5 - 0.75 * v).collect();
        let data = Dataset1D::new(x, y).unwrap();
        for &p in &[1.5, 2.0, 6.0] {
            let spec = FitSpec::new(Degree::Linear, p, 0.3, data.default_grid(25)).unwrap();
            let fit = fit_local_1d(&data, &spec).unwrap();
            let slopes = fit.m1_hat.as_ref().unwrap();
            for (i, &g) in fit.grid.iter().enumerate() {
                assert!((fit.m_hat[i] - (1.5 - 0.75 * g)).abs() < 1e-8);
                assert!((slopes[i] + 0.75).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn least_squares_path_matches_direct_formula() {
        let data = random_data(100, 3);
        let h = 0.08;
        let spec = FitSpec::new(Degree::Linear, 2.0, h, data.default_grid(31)).unwrap();
        let fit = fit_local_1d(&data, &spec).unwrap();
        for (i, &g) in fit.grid.iter().enumerate() {
            // closed-form local linear smoother
            let (mut s0, mut s1, mut s2, mut t0, mut t1) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for (&xi, &yi) in data.x().iter().zip(data.y()) {
                let d = xi - g;
                let w = (-0.5 * (d / h).powi(2)).exp();
                s0 += w;
                s1 += w * d;
                s2 += w * d * d;
                t0 += w * yi;
                t1 += w * d * yi;
            }
            let direct = (s2 * t0 - s1 * t1) / (s0 * s2 - s1 * s1);
            assert!((fit.m_hat[i] - direct).abs() < 1e-8);
        }
    }

    #[test]
    fn constant_fit_has_no_slopes_and_masks_boundary() {
        let data = random_data(60, 9);
        let spec = FitSpec::new(Degree::Constant, 3.0, 0.1, linspace(0.0, 1.0, 11)).unwrap();
        let fit = fit_local_1d(&data, &spec).unwrap();
        assert!(fit.m1_hat.is_none());
        assert_eq!(fit.m_hat.len(), 11);
        let (lo, hi) = data.range();
        for (g, m) in fit.grid.iter().zip(&fit.interior_mask) {
            assert_eq!(*m, *g > lo + 0.1 && *g < hi - 0.1);
        }
    }

    #[test]
    fn grid_points_are_independent() {
        let data = random_data(80, 5);
        let grid = linspace(0.0, 1.0, 21);
        let sub: Vec<f64> = grid.iter().copied().step_by(4).collect();
        let a = fit_local_1d(&data, &FitSpec::new(Degree::Linear, 4.5, 0.09, grid).unwrap()).unwrap();
        let b = fit_local_1d(&data, &FitSpec::new(Degree::Linear, 4.5, 0.09, sub).unwrap()).unwrap();
        for (j, v) in b.m_hat.iter().enumerate() {
            assert_eq!(*v, a.m_hat[4 * j]);
        }
    }

    #[test]
    fn far_grid_point_is_flagged_not_fatal() {
        let data = random_data(30, 1);
        let spec = FitSpec::new(Degree::Linear, 3.0, 0.01, vec![0.5, 50.0]).unwrap();
        let fit = fit_local_1d(&data, &spec).unwrap();
        assert_eq!(fit.diagnostics[1].condition, ConditionFlag::Degenerate);
        assert!(fit.m_hat[1].is_finite());
    }

    #[test]
    fn plane_recovery_in_2d() {
        let mut rng = rng_from_seed(17);
        let n = 150;
        let x1: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let x2: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let y: Vec<f64> = (0..n).map(|i| 0.5 + 2.0 * x1[i] - 1.0 * x2[i]).collect();
        let data = Dataset2D::new(x1, x2, y).unwrap();
        let g = linspace(0.1, 0.9, 5);
        for &p in &[2.0, 5.0] {
            let spec = FitSpec2D::new(p, 0.15, product_grid(&g, &g)).unwrap();
            let fit = fit_local_2d(&data, &spec).unwrap();
            for (pt, m) in fit.grid.iter().zip(&fit.m_hat) {
                assert!((m - (0.5 + 2.0 * pt[0] - pt[1])).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn asymptotic_examples() {
        let k = Kernel::Gaussian.constants().unwrap();
        let base = AsymptoticInputs {
            x: 0.5,
            m1: 0.7,
            m2: 0.0,
            m3: 0.0,
            density: 1.0,
            density_deriv: 0.0,
            abs_moment_2: 0.09,
            abs_moment_p_minus_2: 1.0,
            abs_moment_2p_minus_2: 0.09,
            kernel: k,
            n: 200,
            bandwidth: 0.1,
            exponent: 2.0,
            degree: Degree::Linear,
            target: Target::Estimate,
        };
        let lin = asymptotic_moments(&base).unwrap();
        assert_eq!(lin.bias, 0.0);
        // p = 2, E|ε|⁰ = 1: classical R(K)σ²/(nhf)
        assert!((lin.variance - k.r * 0.09 / (200.0 * 0.1)).abs() < 1e-15);

        let curved = AsymptoticInputs { m2: -1.3, ..base };
        let a = asymptotic_moments(&curved).unwrap();
        let c = asymptotic_moments(&AsymptoticInputs {
            degree: Degree::Constant,
            ..curved
        })
        .unwrap();
        assert_eq!(a.bias, c.bias);

        assert!(asymptotic_moments(&AsymptoticInputs { exponent: 1.0, ..base }).is_err());
        assert!(asymptotic_moments(&AsymptoticInputs {
            degree: Degree::Constant,
            target: Target::Derivative,
            ..base
        })
        .is_err());
    }
}
