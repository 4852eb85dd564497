//! Tuning-parameter selection: the shape `p` and the bandwidth.
//!
//! The full procedure ([`tune`]) runs in a fixed order: a pilot local
//! least-squares bandwidth `h₂`, the shape `p̂` from the residuals of that
//! pilot fit, the conversion `h₂ → h_p`, and finally the local Lp fit at
//! `(p̂, h_p)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{domain, invalid, Error, Result};
use crate::ged::Ged;
use crate::kernels::Kernel;
use crate::localreg::{fit_local_1d, linspace, Dataset1D, Degree, FitResult, FitSpec, DEFAULT_GRID_SIZE};
use crate::special::ln_gamma;

/// Candidate shape parameters, strictly increasing inside `[1, 20]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PGrid {
    candidates: Vec<f64>,
}

pub const P_MIN: f64 = 1.0;
pub const P_MAX: f64 = 20.0;

impl PGrid {
    /// `min, min + step, …` up to `max` (inclusive, within rounding).
    pub fn new(min: f64, max: f64, step: f64) -> Result<Self> {
        if !(step > 0.0) {
            return Err(invalid("p-grid step must be positive"));
        }
        let count = ((max - min) / step + 1e-9).floor() as usize + 1;
        Self::from_candidates((0..count).map(|i| min + step * i as f64).collect())
    }

    pub fn from_candidates(candidates: Vec<f64>) -> Result<Self> {
        if candidates.is_empty() {
            return Err(invalid("p-grid is empty"));
        }
        if candidates.iter().any(|&p| !(P_MIN..=P_MAX).contains(&p)) {
            return Err(invalid(format!("p-grid values must lie in [{P_MIN}, {P_MAX}]")));
        }
        if candidates.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("p-grid must be strictly increasing"));
        }
        Ok(Self { candidates })
    }

    pub fn candidates(&self) -> &[f64] {
        &self.candidates
    }
}

impl Default for PGrid {
    fn default() -> Self {
        Self::new(1.0, 20.0, 0.25).expect("default grid is valid")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QEstimate {
    pub p_hat: f64,
    /// Orthogonal-residual norm per candidate, aligned with the grid.
    pub scores: Vec<f64>,
}

/// Precomputed standard GED quantiles at the plotting positions
/// `(i − 0.5)/n` for every candidate in a grid, for one sample size.
#[derive(Debug, Clone)]
pub struct QScorer {
    grid: PGrid,
    n: usize,
    quantiles: Vec<Vec<f64>>,
    norms2: Vec<f64>,
}

impl QScorer {
    pub fn new(grid: PGrid, n: usize) -> Result<Self> {
        if n < 10 {
            return Err(invalid(format!("Q method needs at least 10 residuals, got {n}")));
        }
        let quantiles: Vec<Vec<f64>> = grid
            .candidates()
            .iter()
            .map(|&p| standard_quantiles(p, n))
            .collect::<Result<_>>()?;
        let norms2 = quantiles
            .iter()
            .map(|q| q.iter().map(|v| v * v).sum())
            .collect();
        Ok(Self {
            grid,
            n,
            quantiles,
            norms2,
        })
    }

    pub fn sample_size(&self) -> usize {
        self.n
    }

    pub fn grid(&self) -> &PGrid {
        &self.grid
    }

    /// Scores every candidate against `residuals` and returns the best one;
    /// ties go to the smaller `p`.
    pub fn estimate(&self, residuals: &[f64]) -> Result<QEstimate> {
        if residuals.len() != self.n {
            return Err(invalid(format!(
                "scorer built for n = {}, got {} residuals",
                self.n,
                residuals.len()
            )));
        }
        if residuals.iter().any(|r| !r.is_finite()) {
            return Err(invalid("residuals must be finite"));
        }
        let mut sorted = residuals.to_vec();
        sorted.sort_by(f64::total_cmp);
        if sorted[0] == sorted[self.n - 1] {
            return Err(Error::Degenerate("residuals have zero spread".into()));
        }
        let median = median_sorted(&sorted);
        for v in &mut sorted {
            *v -= median;
        }

        let scores: Vec<f64> = self
            .quantiles
            .iter()
            .zip(&self.norms2)
            .map(|(q, &qq)| {
                let beta = q.iter().zip(&sorted).map(|(a, b)| a * b).sum::<f64>() / qq;
                q.iter()
                    .zip(&sorted)
                    .map(|(a, b)| (b - beta * a).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .collect();
        let mut best = 0;
        for (i, s) in scores.iter().enumerate() {
            if *s < scores[best] {
                best = i;
            }
        }
        Ok(QEstimate {
            p_hat: self.grid.candidates()[best],
            scores,
        })
    }
}

fn standard_quantiles(p: f64, n: usize) -> Result<Vec<f64>> {
    let g = Ged::standard(p)?;
    let mut q = vec![0.0; n];
    // symmetric plotting positions: q[n-1-i] = -q[i]
    for i in 0..n / 2 {
        let u = (i as f64 + 0.5) / n as f64;
        let v = g.quantile(u)?;
        q[i] = v;
        q[n - 1 - i] = -v;
    }
    Ok(q)
}

fn median_sorted(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Quantile-matching shape estimate from residuals.
///
/// Residuals are sorted and centred at their median; each candidate is scored
/// by the norm of the residual of the no-intercept regression of the sorted
/// residuals on the candidate's GED quantiles.
pub fn estimate_p_q(residuals: &[f64], grid: &PGrid) -> Result<QEstimate> {
    QScorer::new(grid.clone(), residuals.len())?.estimate(residuals)
}

/// Sample kurtosis `m₄ / m₂²` from central moments.
pub fn sample_kurtosis(residuals: &[f64]) -> Result<f64> {
    let n = residuals.len();
    if n < 4 {
        return Err(invalid(format!("kurtosis needs at least 4 values, got {n}")));
    }
    let mean = residuals.iter().sum::<f64>() / n as f64;
    let (m2, m4) = residuals.iter().fold((0.0, 0.0), |(a, b), r| {
        let d = (r - mean) * (r - mean);
        (a + d, b + d * d)
    });
    let (m2, m4) = (m2 / n as f64, m4 / n as f64);
    if !(m2 > 0.0) {
        return Err(Error::Degenerate("residuals have zero variance".into()));
    }
    Ok(m4 / (m2 * m2))
}

/// Kurtosis-based shape estimate `9/κ² + 1`, floored at 1.
pub fn estimate_p_k(residuals: &[f64]) -> Result<f64> {
    let k = sample_kurtosis(residuals)?;
    Ok(p_from_kurtosis(k))
}

pub fn p_from_kurtosis(kurtosis: f64) -> f64 {
    (9.0 / (kurtosis * kurtosis) + 1.0).max(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum H2Mode {
    /// Global-quartic plug-in rule.
    #[default]
    Plugin,
    /// Leave-one-out cross-validation over a logarithmic bandwidth grid.
    Cv,
}

impl std::str::FromStr for H2Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plugin" => Ok(H2Mode::Plugin),
            "cv" => Ok(H2Mode::Cv),
            other => Err(invalid(format!("unknown h2 mode '{other}'"))),
        }
    }
}

const CV_GRID_SIZE: usize = 30;

/// Pilot bandwidth for local linear least squares.
///
/// The plug-in rule fits a global quartic to estimate `σ²` and
/// `θ₂₂ = n⁻¹ Σ m̂″(xⱼ)²`, then sets
/// `h₂ = [R(K) σ̂² (b − a) / (n μ₂(K)² θ̂₂₂)]^(1/5)`, clamped to
/// `[(b − a)/n, (b − a)/2]`; a vanishing curvature estimate yields the upper
/// cap. A rank-deficient quartic fit falls back to cross-validation.
pub fn select_h2(data: &Dataset1D, mode: H2Mode) -> Result<f64> {
    if data.len() < 10 {
        return Err(invalid(format!(
            "bandwidth selection needs at least 10 observations, got {}",
            data.len()
        )));
    }
    match mode {
        H2Mode::Plugin => match plugin_h2(data)? {
            Some(h) => Ok(h),
            None => cv_h2(data),
        },
        H2Mode::Cv => cv_h2(data),
    }
}

fn plugin_h2(data: &Dataset1D) -> Result<Option<f64>> {
    let n = data.len();
    let (a, b) = data.range();
    let width = b - a;
    let t: Vec<f64> = data.x().iter().map(|x| (x - a) / width).collect();
    let design = DMatrix::from_fn(n, 5, |i, j| t[i].powi(j as i32));
    let y = DVector::from_column_slice(data.y());
    let svd = design.clone().svd(true, true);
    let smax = svd.singular_values.max();
    if svd.singular_values.min() <= 1e-10 * smax {
        return Ok(None);
    }
    let coef = svd
        .solve(&y, 0.0)
        .map_err(|e| Error::Degenerate(format!("quartic fit failed: {e}")))?;
    let resid = &y - &design * &coef;
    let sigma2 = resid.norm_squared() / (n - 5) as f64;
    let c = |k: usize| coef[k];
    let theta22 = t
        .iter()
        .map(|&s| {
            let d2 = (2.0 * c(2) + 6.0 * c(3) * s + 12.0 * c(4) * s * s) / (width * width);
            d2 * d2
        })
        .sum::<f64>()
        / n as f64;

    let k = Kernel::Gaussian.constants()?;
    let cap = 0.5 * width;
    let floor = width / n as f64;
    let mean_y = data.y().iter().sum::<f64>() / n as f64;
    let var_y = data.y().iter().map(|v| (v - mean_y).powi(2)).sum::<f64>() / n as f64;
    let max_y = data.y().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    // curvature at roundoff level relative to the responses
    if theta22 * width.powi(4) <= 1e-20 * (var_y + max_y * max_y) {
        return Ok(Some(cap));
    }
    let h = (k.r * sigma2 * width / (n as f64 * k.mu2 * k.mu2 * theta22)).powf(0.2);
    Ok(Some(if h.is_finite() { h.clamp(floor, cap) } else { cap }))
}

fn cv_h2(data: &Dataset1D) -> Result<f64> {
    let n = data.len();
    let (a, b) = data.range();
    let width = b - a;
    let lo = width * (2.0 / n as f64).max(0.01);
    let hi = 0.5 * width;
    let grid: Vec<f64> = linspace(lo.ln(), hi.ln(), CV_GRID_SIZE)
        .into_iter()
        .map(f64::exp)
        .collect();
    let mut best = (f64::INFINITY, hi);
    for &h in &grid {
        let score = loo_cv_score(data, h);
        if score < best.0 {
            best = (score, h);
        }
    }
    Ok(best.1)
}

/// Leave-one-out CV score of the local linear LS smoother at bandwidth `h`.
pub fn loo_cv_score(data: &Dataset1D, h: f64) -> f64 {
    let (x, y) = (data.x(), data.y());
    let kernel = Kernel::Gaussian;
    let k0 = kernel.evaluate(0.0);
    let mut total = 0.0;
    for i in 0..x.len() {
        let (mut s0, mut s1, mut s2, mut t0, mut t1) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for j in 0..x.len() {
            let d = x[j] - x[i];
            let w = kernel.evaluate(d / h);
            if w > 0.0 {
                s0 += w;
                s1 += w * d;
                s2 += w * d * d;
                t0 += w * y[j];
                t1 += w * d * y[j];
            }
        }
        let det = s0 * s2 - s1 * s1;
        if !(det > 1e-12 * s0 * s2) {
            return f64::INFINITY;
        }
        let fit = (s2 * t0 - s1 * t1) / det;
        let leverage = k0 * s2 / det;
        if leverage >= 1.0 - 1e-8 {
            return f64::INFINITY;
        }
        total += ((y[i] - fit) / (1.0 - leverage)).powi(2);
    }
    total / x.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimates {
    /// `mean |res|^(2p−2)`
    pub abs_2p_minus_2: f64,
    /// `mean |res|^(p−2)`
    pub abs_p_minus_2: f64,
    /// `mean res²`
    pub second: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandwidthResult {
    pub h2: f64,
    pub hp: f64,
    pub p_used: f64,
    pub moment_estimates: MomentEstimates,
}

/// Converts the least-squares bandwidth to the Lp-optimal one using sample
/// moments of pilot residuals:
/// `h_p⁵ = mean|r|^(2p−2) / ((p−1)² (mean|r|^(p−2))² mean r²) · h₂⁵`.
///
/// For `p < 2` the residual magnitudes are clamped below at `1e-8` times
/// their root mean square before the negative power.
pub fn convert_bandwidth(residuals: &[f64], h2: f64, p: f64) -> Result<BandwidthResult> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(domain(format!("bandwidth conversion needs p > 1, got {p}")));
    }
    if !(h2 > 0.0 && h2.is_finite()) {
        return Err(domain(format!("pilot bandwidth must be positive, got {h2}")));
    }
    if residuals.is_empty() || residuals.iter().any(|r| !r.is_finite()) {
        return Err(invalid("residuals must be non-empty and finite"));
    }
    let n = residuals.len() as f64;
    let second = residuals.iter().map(|r| r * r).sum::<f64>() / n;
    if !(second > 0.0) {
        return Err(Error::Degenerate("residuals are identically zero".into()));
    }
    let floor = if p < 2.0 { 1e-8 * second.sqrt() } else { 0.0 };
    let mean_pow = |k: f64, clamp: f64| {
        residuals
            .iter()
            .map(|r| r.abs().max(clamp).powf(k))
            .sum::<f64>()
            / n
    };
    let moments = MomentEstimates {
        abs_2p_minus_2: mean_pow(2.0 * p - 2.0, 0.0),
        abs_p_minus_2: mean_pow(p - 2.0, floor),
        second,
    };
    let hp = if p == 2.0 {
        h2
    } else {
        let ratio = moments.abs_2p_minus_2
            / ((p - 1.0).powi(2) * moments.abs_p_minus_2.powi(2) * moments.second);
        h2 * ratio.powf(0.2)
    };
    Ok(BandwidthResult {
        h2,
        hp,
        p_used: p,
        moment_estimates: moments,
    })
}

/// Ratio `(h_p / h₂)⁵` when the errors are GED with shape `p`:
/// `Γ(1/p)² Γ((2p−1)/p) / (Γ((p−1)/p)² Γ(3/p) (p−1)²)`.
pub fn ged_bandwidth_ratio5(p: f64) -> Result<f64> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(domain(format!("bandwidth conversion needs p > 1, got {p}")));
    }
    let ln = 2.0 * ln_gamma(1.0 / p) + ln_gamma((2.0 * p - 1.0) / p)
        - 2.0 * ln_gamma((p - 1.0) / p)
        - ln_gamma(3.0 / p)
        - 2.0 * (p - 1.0).ln();
    Ok(ln.exp())
}

/// Closed-form `h_p` under GED errors.
pub fn convert_bandwidth_ged(p: f64, h2: f64) -> Result<f64> {
    if !(h2 > 0.0 && h2.is_finite()) {
        return Err(domain(format!("pilot bandwidth must be positive, got {h2}")));
    }
    if p == 2.0 {
        return Ok(h2);
    }
    Ok(h2 * ged_bandwidth_ratio5(p)?.powf(0.2))
}

/// Smallest shape used in the bandwidth conversion; `p̂` on the lower edge of
/// the grid (where the conversion is undefined) is converted at this value.
pub const CONVERSION_P_FLOOR: f64 = 1.1;

/// Pilot residuals below this multiple of `max(1, max|y|)` count as an exact fit.
const EXACT_FIT_TOL: f64 = 1e-12;

/// Options for the full tuning-and-fit procedure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneOptions {
    pub degree: Degree,
    pub kernel: Kernel,
    pub h2_mode: H2Mode,
    pub p_grid: PGrid,
    /// Skip shape estimation and use this `p`.
    pub p_override: Option<f64>,
    /// Skip bandwidth conversion and use this bandwidth for the Lp fit.
    pub h_override: Option<f64>,
    /// Use only residuals at design points in `(a + h₂, b − h₂)` for `p̂`.
    pub interior_residuals_only: bool,
    /// Evaluation grid; defaults to 101 points over the design range.
    pub grid: Option<Vec<f64>>,
}

impl Default for TuneOptions {
    fn default() -> Self {
        Self {
            degree: Degree::Linear,
            kernel: Kernel::Gaussian,
            h2_mode: H2Mode::Plugin,
            p_grid: PGrid::default(),
            p_override: None,
            h_override: None,
            interior_residuals_only: false,
            grid: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PSource {
    /// Quantile method.
    QMethod,
    /// Supplied by the caller.
    Override,
    /// Residuals carried no shape information; least squares was kept.
    DegenerateFallback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tuned {
    pub h2: f64,
    pub p_hat: f64,
    pub p_source: PSource,
    pub bandwidth: BandwidthResult,
    pub q_scores: Option<Vec<f64>>,
    /// Pilot residuals `yᵢ − m̂₂(xᵢ)` in data order.
    pub pilot_residuals: Vec<f64>,
    /// Local least-squares fit at `h₂`.
    pub lls: FitResult,
    /// Local Lp fit at `(p̂, h_p)`.
    pub llp: FitResult,
    pub llp_spec: FitSpec,
}

/// Runs the full tuning procedure and both final fits.
///
/// `scorer` may carry precomputed Q-method quantiles for `data.len()`
/// residuals; it is ignored when its sample size does not match.
pub fn tune(data: &Dataset1D, options: &TuneOptions, scorer: Option<&QScorer>) -> Result<Tuned> {
    let grid = options
        .grid
        .clone()
        .unwrap_or_else(|| data.default_grid(DEFAULT_GRID_SIZE));
    let h2 = select_h2(data, options.h2_mode)?;
    let lls_spec = FitSpec::new(options.degree, 2.0, h2, grid)?.with_kernel(options.kernel);
    let fitted = lls_spec.fitted_values(data);
    let mut pilot_residuals: Vec<f64> = data.y().iter().zip(&fitted).map(|(y, m)| y - m).collect();
    // an exact pilot fit leaves only roundoff, which carries no shape information
    let y_scale = data.y().iter().fold(1.0_f64, |a, y| a.max(y.abs()));
    if pilot_residuals.iter().all(|r| r.abs() <= EXACT_FIT_TOL * y_scale) {
        pilot_residuals.iter_mut().for_each(|r| *r = 0.0);
    }

    let (p_hat, p_source, q_scores) = match options.p_override {
        Some(p) => (p, PSource::Override, None),
        None => {
            let (lo, hi) = data.range();
            let res: Vec<f64> = if options.interior_residuals_only {
                data.x()
                    .iter()
                    .zip(&pilot_residuals)
                    .filter(|(x, _)| **x > lo + h2 && **x < hi - h2)
                    .map(|(_, r)| *r)
                    .collect()
            } else {
                pilot_residuals.clone()
            };
            let estimate = match scorer {
                Some(s) if s.sample_size() == res.len() && s.grid() == &options.p_grid => {
                    s.estimate(&res)
                }
                _ => estimate_p_q(&res, &options.p_grid),
            };
            match estimate {
                Ok(q) => (q.p_hat, PSource::QMethod, Some(q.scores)),
                Err(Error::Degenerate(_)) => (2.0, PSource::DegenerateFallback, None),
                Err(e) => return Err(e),
            }
        }
    };

    let p_conv = p_hat.max(CONVERSION_P_FLOOR);
    let bandwidth = match convert_bandwidth(&pilot_residuals, h2, p_conv) {
        Ok(b) => b,
        Err(Error::Degenerate(_)) => BandwidthResult {
            h2,
            hp: h2,
            p_used: p_conv,
            moment_estimates: MomentEstimates {
                abs_2p_minus_2: 0.0,
                abs_p_minus_2: 0.0,
                second: 0.0,
            },
        },
        Err(e) => return Err(e),
    };
    let hp = options.h_override.unwrap_or(bandwidth.hp);
    let llp_spec = lls_spec.retuned(p_hat, hp)?;
    let lls = fit_local_1d(data, &lls_spec)?;
    let llp = if p_hat == 2.0 && hp == h2 {
        lls.clone()
    } else {
        fit_local_1d(data, &llp_spec)?
    };
    Ok(Tuned {
        h2,
        p_hat,
        p_source,
        bandwidth,
        q_scores,
        pilot_residuals,
        lls,
        llp,
        llp_spec,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand::Rng;

    #[test]
    fn grid_construction() {
        let g = PGrid::default();
        assert_eq!(g.candidates().len(), 77);
        assert_eq!(g.candidates()[0], 1.0);
        assert!((g.candidates()[76] - 20.0).abs() < 1e-12);
        assert!(PGrid::from_candidates(vec![0.5, 2.0]).is_err());
        assert!(PGrid::from_candidates(vec![2.0, 2.0]).is_err());
        assert!(PGrid::new(1.0, 25.0, 1.0).is_err());
    }

    #[test]
    fn exact_quantiles_are_recovered() {
        let n = 60;
        let grid = PGrid::default();
        let res: Vec<f64> = standard_quantiles(5.0, n).unwrap().iter().map(|q| 0.3 * q).collect();
        let est = estimate_p_q(&res, &grid).unwrap();
        assert_eq!(est.p_hat, 5.0);
        let idx = grid.candidates().iter().position(|&p| p == 5.0).unwrap();
        assert!(est.scores[idx] < 1e-12);
    }

    #[test]
    fn q_method_location_scale_invariance() {
        let mut rng = rng_from_seed(8);
        let res: Vec<f64> = (0..80).map(|_| rng.random::<f64>() - 0.5).collect();
        let grid = PGrid::default();
        let base = estimate_p_q(&res, &grid).unwrap();
        let moved: Vec<f64> = res.iter().map(|r| 3.0 + 2.5 * r).collect();
        let other = estimate_p_q(&moved, &grid).unwrap();
        assert_eq!(base.p_hat, other.p_hat);
        for (a, b) in base.scores.iter().zip(&other.scores) {
            assert!((b - 2.5 * a).abs() < 1e-9 * (1.0 + a));
        }
    }

    #[test]
    fn q_method_error_paths() {
        let grid = PGrid::default();
        assert!(matches!(
            estimate_p_q(&[1.0; 20], &grid),
            Err(Error::Degenerate(_))
        ));
        assert!(estimate_p_q(&[1.0, 2.0, 3.0], &grid).is_err());
    }

    #[test]
    fn kurtosis_method_examples() {
        assert_eq!(p_from_kurtosis(3.0), 2.0);
        assert_eq!(p_from_kurtosis(6.0), 1.25);
        assert!((p_from_kurtosis(1.8) - (9.0 / 3.24 + 1.0)).abs() < 1e-15);
        assert!((p_from_kurtosis(1.8) - 3.78).abs() < 0.01);
        assert!(matches!(estimate_p_k(&[2.0; 8]), Err(Error::Degenerate(_))));
        assert!(estimate_p_k(&[1.0, 2.0]).is_err());
        // two-point distribution: kurtosis 1
        assert_eq!(estimate_p_k(&[-1.0, 1.0, -1.0, 1.0]).unwrap(), 10.0);
    }

    #[test]
    fn conversion_identities() {
        let mut rng = rng_from_seed(4);
        let res: Vec<f64> = (0..500).map(|_| rng.random::<f64>() - 0.5).collect();
        let b = convert_bandwidth(&res, 0.1, 2.0).unwrap();
        assert_eq!(b.hp, 0.1);
        assert_eq!(convert_bandwidth_ged(2.0, 0.1).unwrap(), 0.1);
        for &p in &[1.5, 3.0, 7.5] {
            let base = convert_bandwidth(&res, 0.1, p).unwrap().hp;
            let scaled: Vec<f64> = res.iter().map(|r| -4.0 * r).collect();
            let other = convert_bandwidth(&scaled, 0.1, p).unwrap().hp;
            assert!((base - other).abs() < 1e-12);
        }
        assert!(convert_bandwidth(&res, 0.1, 1.0).is_err());
        assert!(convert_bandwidth_ged(0.9, 0.1).is_err());
    }

    #[test]
    fn ged_conversion_at_four() {
        // Γ(1/4)² Γ(7/4) / (Γ(3/4)² Γ(3/4) · 9), tabulated values
        let g14 = 3.625_609_908_221_908;
        let g34: f64 = 1.225_416_702_465_178;
        let g74 = 0.919_062_526_848_883;
        let ratio5: f64 = g14 * g14 * g74 / (g34.powi(3) * 9.0);
        let h = convert_bandwidth_ged(4.0, 0.10).unwrap();
        assert!((h - 0.10 * ratio5.powf(0.2)).abs() < 1e-12);
        assert!((h - 0.094).abs() < 0.001);
    }

    #[test]
    fn plugin_bandwidth_scales_with_design() {
        let mut rng = rng_from_seed(21);
        let x: Vec<f64> = (0..100).map(|_| rng.random()).collect();
        let y: Vec<f64> = x.iter().map(|v| v.sin() + rng.random::<f64>() - 0.5).collect();
        let d1 = Dataset1D::new(x.clone(), y.clone()).unwrap();
        let d2 = Dataset1D::new(x.iter().map(|v| 2.0 * v).collect(), y).unwrap();
        let h1 = select_h2(&d1, H2Mode::Plugin).unwrap();
        let h2 = select_h2(&d2, H2Mode::Plugin).unwrap();
        assert!((h2 - 2.0 * h1).abs() < 1e-9 * h1);
    }

    #[test]
    fn flat_data_hits_the_cap() {
        let x: Vec<f64> = (0..30).map(|i| i as f64 / 29.0).collect();
        let data = Dataset1D::new(x, vec![1.25; 30]).unwrap();
        assert_eq!(select_h2(&data, H2Mode::Plugin).unwrap(), 0.5);

        let mut rng = rng_from_seed(5);
        let x: Vec<f64> = (0..50).map(|_| rng.random()).collect();
        let y: Vec<f64> = (0..50).map(|_| rng.random()).collect();
        let data = Dataset1D::new(x, y).unwrap();
        let (a, b) = data.range();
        assert!(select_h2(&data, H2Mode::Plugin).unwrap() <= 0.5 * (b - a));
    }

    #[test]
    fn cv_mode_returns_a_grid_bandwidth() {
        let mut rng = rng_from_seed(6);
        let x: Vec<f64> = (0..80).map(|_| rng.random()).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|v| (8.0 * v).sin() + 0.2 * (rng.random::<f64>() - 0.5))
            .collect();
        let data = Dataset1D::new(x, y).unwrap();
        let h = select_h2(&data, H2Mode::Cv).unwrap();
        let (a, b) = data.range();
        assert!(h > 0.0 && h <= 0.5 * (b - a));
        // a wiggly signal should not be smoothed at the cap
        assert!(h < 0.2);
    }

    #[test]
    fn too_few_points_is_an_error() {
        let data = Dataset1D::new(vec![0.0, 1.0, 2.0], vec![0.0, 1.0, 0.0]).unwrap();
        assert!(select_h2(&data, H2Mode::Plugin).is_err());
    }
}
