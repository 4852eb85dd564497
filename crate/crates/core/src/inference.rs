//! Pointwise residual-bootstrap confidence bands.
//!
//! Residuals come from a bias-reduced pilot: at each design point the local
//! fit is repeated over a log-spaced set of bandwidths in `[h/2, 2h]`, and the
//! intercept of the least-squares line of `m̂(xᵢ; h)` against `h²` is used in
//! place of `m̂(xᵢ)`. Bootstrap responses are `m̂(xᵢ) + e*ᵢ` with `e*`
//! resampled from the centred pilot residuals, and the band is the basic
//! interval `(2m̂ − Q₁₋α, 2m̂ − Qα)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::localreg::{fit_local_1d, linspace, Dataset1D, FitSpec};
use crate::lpsolve::ConditionFlag;
use crate::rng::child_rng;
use rand::Rng;

/// Largest fraction of bootstrap refits allowed to fail.
pub const MAX_DROPPED_FRACTION: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandSpec {
    /// Each tail; the band has level `1 − 2α`.
    pub alpha: f64,
    pub replicates: usize,
    pub bandwidth_grid_size: usize,
    pub seed: u64,
}

impl BandSpec {
    pub fn new(alpha: f64, replicates: usize, seed: u64) -> Result<Self> {
        let spec = Self {
            alpha,
            replicates,
            bandwidth_grid_size: 10,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_bandwidth_grid_size(mut self, size: usize) -> Result<Self> {
        self.bandwidth_grid_size = size;
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 0.5) {
            return Err(invalid(format!("alpha must lie in (0, 0.5), got {}", self.alpha)));
        }
        if self.replicates < 100 {
            return Err(invalid(format!(
                "need at least 100 bootstrap replicates, got {}",
                self.replicates
            )));
        }
        if self.bandwidth_grid_size < 4 {
            return Err(invalid("pilot bandwidth grid needs at least 4 bandwidths"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandResult {
    pub grid: Vec<f64>,
    pub m_hat: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Bias-reduced estimates at the design points, in data order.
    pub pilot: Vec<f64>,
    /// Centred pilot residuals that were resampled.
    pub residuals_used: Vec<f64>,
    pub dropped_replicates: usize,
}

/// Bandwidths `h/2 … 2h`, equally spaced on the log scale.
pub fn pilot_bandwidths(h: f64, size: usize) -> Vec<f64> {
    linspace((0.5 * h).ln(), (2.0 * h).ln(), size)
        .into_iter()
        .map(f64::exp)
        .collect()
}

/// Bias-reduced estimates `m̃(xᵢ)` at every design point.
///
/// Degenerate per-bandwidth fits are dropped at that point; fewer than four
/// surviving bandwidths anywhere is an error.
pub fn bias_reduced_pilot(
    data: &Dataset1D,
    spec: &FitSpec,
    bandwidth_grid_size: usize,
) -> Result<Vec<f64>> {
    spec.validate()?;
    let bandwidths = pilot_bandwidths(spec.bandwidth, bandwidth_grid_size);
    // fits[j][i] = (m̂(xᵢ; hⱼ), usable)
    let fits: Vec<Vec<(f64, bool)>> = bandwidths
        .iter()
        .map(|&h| {
            let s = spec.retuned(spec.exponent, h)?;
            Ok(s.fit_points(data, data.x())
                .into_iter()
                .map(|sol| {
                    let v = sol.coefficients[0];
                    (v, v.is_finite() && sol.condition != ConditionFlag::Degenerate)
                })
                .collect())
        })
        .collect::<Result<_>>()?;

    (0..data.len())
        .map(|i| {
            let (mut hs, mut ms) = (Vec::new(), Vec::new());
            for (j, &h) in bandwidths.iter().enumerate() {
                let (v, ok) = fits[j][i];
                if ok {
                    hs.push(h * h);
                    ms.push(v);
                }
            }
            if hs.len() < 4 {
                return Err(Error::Degenerate(format!(
                    "only {} usable pilot bandwidths at x = {}",
                    hs.len(),
                    data.x()[i]
                )));
            }
            Ok(ls_intercept(&hs, &ms))
        })
        .collect()
}

/// Intercept of the least-squares line through `(t, v)`.
fn ls_intercept(t: &[f64], v: &[f64]) -> f64 {
    let n = t.len() as f64;
    let tm = t.iter().sum::<f64>() / n;
    let vm = v.iter().sum::<f64>() / n;
    let sxx: f64 = t.iter().map(|a| (a - tm).powi(2)).sum();
    if sxx == 0.0 {
        return vm;
    }
    let sxy: f64 = t.iter().zip(v).map(|(a, b)| (a - tm) * (b - vm)).sum();
    vm - sxy / sxx * tm
}

/// Order-statistic quantile: the `⌈B·q⌉`-th smallest of `sorted`.
fn order_quantile(sorted: &[f64], q: f64) -> f64 {
    let b = sorted.len();
    let k = ((b as f64 * q).ceil() as usize).clamp(1, b);
    sorted[k - 1]
}

/// Basic bootstrap pointwise bands for the fit `spec` on `spec.grid`.
pub fn bootstrap_bands(data: &Dataset1D, spec: &FitSpec, band: &BandSpec) -> Result<BandResult> {
    band.validate()?;
    let point = fit_local_1d(data, spec)?;
    let at_data = spec.fitted_values(data);
    let pilot = bias_reduced_pilot(data, spec, band.bandwidth_grid_size)?;

    let mut residuals: Vec<f64> = data.y().iter().zip(&pilot).map(|(y, m)| y - m).collect();
    let mean = residuals.iter().sum::<f64>() / residuals.len() as f64;
    for r in &mut residuals {
        *r -= mean;
    }

    let n = data.len();
    let replicates: Vec<Option<Vec<f64>>> = (0..band.replicates)
        .into_par_iter()
        .map(|b| {
            let mut rng = child_rng(band.seed, b as u64);
            let y_star: Vec<f64> = at_data
                .iter()
                .map(|m| m + residuals[rng.random_range(0..n)])
                .collect();
            let boot = data.with_responses(y_star).ok()?;
            let fit = fit_local_1d(&boot, spec).ok()?;
            fit.m_hat.iter().all(|v| v.is_finite()).then_some(fit.m_hat)
        })
        .collect();

    let ok: Vec<&Vec<f64>> = replicates.iter().flatten().collect();
    let dropped = band.replicates - ok.len();
    if dropped as f64 > MAX_DROPPED_FRACTION * band.replicates as f64 {
        return Err(Error::ReplicateFailures {
            failed: dropped,
            total: band.replicates,
        });
    }

    let g = point.grid.len();
    let mut lower = Vec::with_capacity(g);
    let mut upper = Vec::with_capacity(g);
    let mut column = Vec::with_capacity(ok.len());
    for k in 0..g {
        column.clear();
        column.extend(ok.iter().map(|r| r[k]));
        column.sort_by(f64::total_cmp);
        let q_lo = order_quantile(&column, band.alpha);
        let q_hi = order_quantile(&column, 1.0 - band.alpha);
        lower.push(2.0 * point.m_hat[k] - q_hi);
        upper.push(2.0 * point.m_hat[k] - q_lo);
    }

    Ok(BandResult {
        grid: point.grid,
        m_hat: point.m_hat,
        lower,
        upper,
        pilot,
        residuals_used: residuals,
        dropped_replicates: dropped,
    })
}
