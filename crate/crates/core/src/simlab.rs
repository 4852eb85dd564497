//! Monte-Carlo harness comparing local least squares with the tuned local Lp
//! estimator.
//!
//! Replicate `r` of an experiment with master seed `s` draws all of its data
//! from `child_rng(s, r)`, so results do not depend on the thread count.
//! Aggregation runs in replicate order.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::ged::Ged;
use crate::localreg::{
    fit_local_2d, linspace, product_grid, Dataset1D, Dataset2D, FitSpec2D, DEFAULT_GRID_SIZE,
};
use crate::rng::{child_rng, rng_from_seed, SimRng};
use crate::tuning::{tune, H2Mode, PGrid, QScorer, TuneOptions};

/// Largest fraction of failed replicates an experiment tolerates.
pub const MAX_FAILED_FRACTION: f64 = 0.02;

/// Bimodal shape range.
pub const BIMODAL_ALPHA_RANGE: (f64, f64) = (0.4, 1.8);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum ErrorModel {
    Ged { scale: f64, shape: f64 },
    /// `U(−0.5, 0.5)`.
    Uniform,
    /// Sum of two independent `U(−0.25, 0.25)`.
    Triangular,
    /// `S·|Z|^{1/α}` with a Rademacher sign `S` and standard normal `Z`.
    Bimodal { alpha: f64 },
}

impl ErrorModel {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ErrorModel::Ged { scale, shape } => Ged::new(0.0, scale, shape).map(|_| ()),
            ErrorModel::Bimodal { alpha } => {
                let (lo, hi) = BIMODAL_ALPHA_RANGE;
                if (lo..=hi).contains(&alpha) {
                    Ok(())
                } else {
                    Err(invalid(format!("bimodal alpha must lie in [{lo}, {hi}], got {alpha}")))
                }
            }
            ErrorModel::Uniform | ErrorModel::Triangular => Ok(()),
        }
    }

    /// GED shape of the model, if it has one.
    pub fn shape(&self) -> Option<f64> {
        match *self {
            ErrorModel::Ged { shape, .. } => Some(shape),
            _ => None,
        }
    }

    /// Draws `n` errors from `rng`. The model must be valid.
    pub fn draw(&self, n: usize, rng: &mut SimRng) -> Vec<f64> {
        match *self {
            ErrorModel::Ged { scale, shape } => Ged::new(0.0, scale, shape)
                .expect("validated model")
                .sample_n(n, rng),
            ErrorModel::Uniform => (0..n).map(|_| rng.random::<f64>() - 0.5).collect(),
            ErrorModel::Triangular => (0..n)
                .map(|_| 0.5 * (rng.random::<f64>() + rng.random::<f64>()) - 0.5)
                .collect(),
            ErrorModel::Bimodal { alpha } => (0..n)
                .map(|_| {
                    let z: f64 = rng.sample(StandardNormal);
                    let m = z.abs().powf(1.0 / alpha);
                    if rng.random::<bool>() {
                        m
                    } else {
                        -m
                    }
                })
                .collect(),
        }
    }
}

impl fmt::Display for ErrorModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ErrorModel::Ged { scale, shape } => write!(f, "ged:{scale}:{shape}"),
            ErrorModel::Uniform => f.write_str("uniform"),
            ErrorModel::Triangular => f.write_str("triangular"),
            ErrorModel::Bimodal { alpha } => write!(f, "bimodal:{alpha}"),
        }
    }
}

/// Parses `uniform`, `triangular`, `bimodal:<alpha>` or `ged:<scale>:<shape>`.
impl FromStr for ErrorModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        let num = |t: &str| {
            t.parse::<f64>()
                .map_err(|_| invalid(format!("bad number '{t}' in error model '{s}'")))
        };
        let model = match parts.as_slice() {
            ["uniform"] => ErrorModel::Uniform,
            ["triangular"] => ErrorModel::Triangular,
            ["bimodal", a] => ErrorModel::Bimodal { alpha: num(a)? },
            ["ged", sc, sh] => ErrorModel::Ged {
                scale: num(sc)?,
                shape: num(sh)?,
            },
            _ => return Err(invalid(format!("unknown error model '{s}'"))),
        };
        model.validate()?;
        Ok(model)
    }
}

/// Draws `n` errors from a generator seeded with `seed`.
pub fn draw_errors(model: &ErrorModel, n: usize, seed: u64) -> Result<Vec<f64>> {
    model.validate()?;
    Ok(model.draw(n, &mut rng_from_seed(seed)))
}

/// One-dimensional test regression functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TargetFunction {
    /// `sin x`
    F1,
    /// `x + 2^{−16x²}`
    F2,
    /// `sin 2x + 2^{−16x²}`
    F3,
    /// `0.3e^{−4(x+1)²} + 0.7e^{−16(x−1)²}`
    F4,
}

impl TargetFunction {
    pub const ALL: [TargetFunction; 4] = [Self::F1, Self::F2, Self::F3, Self::F4];

    pub fn from_id(id: u8) -> Result<Self> {
        match id {
            1 => Ok(Self::F1),
            2 => Ok(Self::F2),
            3 => Ok(Self::F3),
            4 => Ok(Self::F4),
            _ => Err(invalid(format!("unknown target function {id}"))),
        }
    }

    pub fn id(&self) -> u8 {
        match self {
            Self::F1 => 1,
            Self::F2 => 2,
            Self::F3 => 3,
            Self::F4 => 4,
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let bump = || 2f64.powf(-16.0 * x * x);
        match self {
            Self::F1 => x.sin(),
            Self::F2 => x + bump(),
            Self::F3 => (2.0 * x).sin() + bump(),
            Self::F4 => {
                0.3 * (-4.0 * (x + 1.0).powi(2)).exp() + 0.7 * (-16.0 * (x - 1.0).powi(2)).exp()
            }
        }
    }
}

/// Two-dimensional test function `sin(3x₁x₂)`.
pub fn target_2d(x1: f64, x2: f64) -> f64 {
    (3.0 * x1 * x2).sin()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub h2_mode: H2Mode,
    pub p_grid: PGrid,
    pub grid_size: usize,
    /// MSE is averaged over grid points inside this interval.
    pub eval_range: (f64, f64),
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            h2_mode: H2Mode::Plugin,
            p_grid: PGrid::default(),
            grid_size: DEFAULT_GRID_SIZE,
            eval_range: (0.05, 0.95),
        }
    }
}

impl ExperimentConfig {
    /// Evaluation grid on `[0, 1]`.
    pub fn grid(&self) -> Vec<f64> {
        linspace(0.0, 1.0, self.grid_size)
    }

    /// Indices of grid points inside `eval_range`.
    pub fn eval_indices(&self) -> Vec<usize> {
        let (lo, hi) = self.eval_range;
        self.grid()
            .iter()
            .enumerate()
            .filter(|(_, g)| **g >= lo - 1e-12 && **g <= hi + 1e-12)
            .map(|(i, _)| i)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicateOutcome {
    pub p_hat: f64,
    pub h2: f64,
    pub hp: f64,
    pub mse_lls: f64,
    pub mse_llp: f64,
}

/// Runs one replicate: draws data, tunes, fits and scores both estimators.
pub fn run_replicate(
    function: TargetFunction,
    model: &ErrorModel,
    n: usize,
    rng: &mut SimRng,
    config: &ExperimentConfig,
    scorer: Option<&QScorer>,
) -> Result<ReplicateOutcome> {
    let x: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let e = model.draw(n, rng);
    let y: Vec<f64> = x.iter().zip(&e).map(|(x, e)| function.eval(*x) + e).collect();
    let data = Dataset1D::new(x, y)?;
    let options = TuneOptions {
        h2_mode: config.h2_mode,
        p_grid: config.p_grid.clone(),
        grid: Some(config.grid()),
        ..TuneOptions::default()
    };
    let tuned = tune(&data, &options, scorer)?;
    let idx = config.eval_indices();
    let mse = |m: &[f64]| {
        idx.iter()
            .map(|&i| (m[i] - function.eval(tuned.lls.grid[i])).powi(2))
            .sum::<f64>()
            / idx.len() as f64
    };
    let out = ReplicateOutcome {
        p_hat: tuned.p_hat,
        h2: tuned.h2,
        hp: tuned.llp_spec.bandwidth,
        mse_lls: mse(&tuned.lls.m_hat),
        mse_llp: mse(&tuned.llp.m_hat),
    };
    if out.mse_lls.is_finite() && out.mse_llp.is_finite() {
        Ok(out)
    } else {
        Err(Error::Degenerate("non-finite replicate MSE".into()))
    }
}

/// Mean and sample standard deviation; the deviation is absent for one value.
fn mean_std(v: &[f64]) -> (f64, Option<f64>) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, None);
    }
    let var = v.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, Some(var.sqrt()))
}

fn check_failures(failed: usize, total: usize) -> Result<()> {
    if failed as f64 > MAX_FAILED_FRACTION * total as f64 || failed == total {
        Err(Error::ReplicateFailures { failed, total })
    } else {
        Ok(())
    }
}

/// One configuration of a one-dimensional experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimRow {
    pub function: u8,
    pub error_model: String,
    pub n: usize,
    pub p_hat: f64,
    pub h2: f64,
    pub mse_lls: f64,
    pub h_p: f64,
    pub mse_llp: f64,
    pub std_mse_lls: Option<f64>,
    pub std_mse_llp: Option<f64>,
    pub replicates: usize,
    pub failures: usize,
    pub seed: u64,
}

/// Runs `replicates` replicates and aggregates the successful ones.
pub fn run_experiment(
    function: TargetFunction,
    model: &ErrorModel,
    n: usize,
    replicates: usize,
    seed: u64,
    config: &ExperimentConfig,
) -> Result<SimRow> {
    model.validate()?;
    if replicates == 0 {
        return Err(invalid("need at least one replicate"));
    }
    let scorer = QScorer::new(config.p_grid.clone(), n)?;
    let outcomes: Vec<Option<ReplicateOutcome>> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = child_rng(seed, r as u64);
            run_replicate(function, model, n, &mut rng, config, Some(&scorer)).ok()
        })
        .collect();
    let ok: Vec<ReplicateOutcome> = outcomes.into_iter().flatten().collect();
    let failures = replicates - ok.len();
    check_failures(failures, replicates)?;
    let col = |f: fn(&ReplicateOutcome) -> f64| ok.iter().map(f).collect::<Vec<_>>();
    let (mse_lls, std_mse_lls) = mean_std(&col(|o| o.mse_lls));
    let (mse_llp, std_mse_llp) = mean_std(&col(|o| o.mse_llp));
    Ok(SimRow {
        function: function.id(),
        error_model: model.to_string(),
        n,
        p_hat: mean_std(&col(|o| o.p_hat)).0,
        h2: mean_std(&col(|o| o.h2)).0,
        mse_lls,
        h_p: mean_std(&col(|o| o.hp)).0,
        mse_llp,
        std_mse_lls,
        std_mse_llp,
        replicates,
        failures,
        seed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Experiment2DConfig {
    /// Shared bandwidth of the product kernel.
    pub bandwidth: f64,
    /// Points per axis of the evaluation grid over `eval_range²`.
    pub grid_per_axis: usize,
    pub eval_range: (f64, f64),
}

impl Default for Experiment2DConfig {
    fn default() -> Self {
        Self {
            bandwidth: 0.12,
            grid_per_axis: 19,
            eval_range: (0.05, 0.95),
        }
    }
}

/// One shape of a two-dimensional experiment. MSE columns are raw values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimRow2D {
    pub p: f64,
    pub scale: f64,
    pub n: usize,
    pub bandwidth: f64,
    pub mse_lls: f64,
    pub std_mse_lls: Option<f64>,
    pub mse_llp: f64,
    pub std_mse_llp: Option<f64>,
    pub replicates: usize,
    pub failures: usize,
    pub seed: u64,
}

/// Compares `p = 2` with the true `p` for GED errors of each shape in `shapes`.
///
/// Shape `k` uses master seed `child_seed(seed, k)` so rows are independent of
/// which other shapes are requested.
pub fn run_experiment_2d(
    scale: f64,
    shapes: &[f64],
    n: usize,
    replicates: usize,
    seed: u64,
    config: &Experiment2DConfig,
) -> Result<Vec<SimRow2D>> {
    if replicates == 0 {
        return Err(invalid("need at least one replicate"));
    }
    let (lo, hi) = config.eval_range;
    let axis = linspace(lo, hi, config.grid_per_axis);
    let grid = product_grid(&axis, &axis);
    let truth: Vec<f64> = grid.iter().map(|g| target_2d(g[0], g[1])).collect();
    shapes
        .iter()
        .map(|&p| {
            let model = ErrorModel::Ged { scale, shape: p };
            model.validate()?;
            let lls_spec = FitSpec2D::new(2.0, config.bandwidth, grid.clone())?;
            let llp_spec = FitSpec2D::new(p, config.bandwidth, grid.clone())?;
            let row_seed = crate::rng::split_seed(seed, p.to_bits());
            let outcomes: Vec<Option<(f64, f64)>> = (0..replicates)
                .into_par_iter()
                .map(|r| {
                    let mut rng = child_rng(row_seed, r as u64);
                    let x1: Vec<f64> = (0..n).map(|_| rng.random()).collect();
                    let x2: Vec<f64> = (0..n).map(|_| rng.random()).collect();
                    let e = model.draw(n, &mut rng);
                    let y = (0..n).map(|i| target_2d(x1[i], x2[i]) + e[i]).collect();
                    let data = Dataset2D::new(x1, x2, y).ok()?;
                    let mse = |m: &[f64]| {
                        m.iter().zip(&truth).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
                            / truth.len() as f64
                    };
                    let lls = mse(&fit_local_2d(&data, &lls_spec).ok()?.m_hat);
                    let llp = if p == 2.0 {
                        lls
                    } else {
                        mse(&fit_local_2d(&data, &llp_spec).ok()?.m_hat)
                    };
                    (lls.is_finite() && llp.is_finite()).then_some((lls, llp))
                })
                .collect();
            let ok: Vec<(f64, f64)> = outcomes.into_iter().flatten().collect();
            let failures = replicates - ok.len();
            check_failures(failures, replicates)?;
            let (mse_lls, std_mse_lls) = mean_std(&ok.iter().map(|o| o.0).collect::<Vec<_>>());
            let (mse_llp, std_mse_llp) = mean_std(&ok.iter().map(|o| o.1).collect::<Vec<_>>());
            Ok(SimRow2D {
                p,
                scale,
                n,
                bandwidth: config.bandwidth,
                mse_lls,
                std_mse_lls,
                mse_llp,
                std_mse_llp,
                replicates,
                failures,
                seed: row_seed,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub version: String,
    pub seed: u64,
    /// Resolved configuration of the run.
    pub config: serde_json::Value,
}

/// Collected experiment rows plus run metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub metadata: ReportMetadata,
    pub rows: Vec<SimRow>,
    pub rows_2d: Vec<SimRow2D>,
}

const CSV_HEADER: &str =
    "function,error_model,n,p_hat,h2,mse_lls,h_p,mse_llp,std_mse_lls,std_mse_llp,replicates,failures,seed";
/// Two-dimensional rows report MSE and Std multiplied by 10⁴.
const CSV_HEADER_2D: &str =
    "p,mse_lls,std_mse_lls,mse_llp,std_mse_llp,scale,n,bandwidth,replicates,failures,seed";

fn opt(v: Option<f64>, factor: f64) -> String {
    v.map(|s| (s * factor).to_string()).unwrap_or_default()
}

impl SimReport {
    pub fn new(seed: u64, config: serde_json::Value) -> Self {
        Self {
            metadata: ReportMetadata {
                version: env!("CARGO_PKG_VERSION").to_string(),
                seed,
                config,
            },
            rows: Vec::new(),
            rows_2d: Vec::new(),
        }
    }

    /// One-dimensional rows as CSV; missing standard deviations are empty.
    pub fn to_csv(&self) -> String {
        let mut s = String::from(CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                r.function,
                r.error_model,
                r.n,
                r.p_hat,
                r.h2,
                r.mse_lls,
                r.h_p,
                r.mse_llp,
                opt(r.std_mse_lls, 1.0),
                opt(r.std_mse_llp, 1.0),
                r.replicates,
                r.failures,
                r.seed
            ));
        }
        s
    }

    pub fn to_csv_2d(&self) -> String {
        let mut s = String::from(CSV_HEADER_2D);
        s.push('\n');
        for r in &self.rows_2d {
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{}\n",
                r.p,
                r.mse_lls * 1e4,
                opt(r.std_mse_lls, 1e4),
                r.mse_llp * 1e4,
                opt(r.std_mse_llp, 1e4),
                r.scale,
                r.n,
                r.bandwidth,
                r.replicates,
                r.failures,
                r.seed
            ));
        }
        s
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Writes `<stem>.csv` (and `<stem>_2d.csv` when present) plus `<stem>.json`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        if !self.rows.is_empty() || self.rows_2d.is_empty() {
            std::fs::File::create(dir.join(format!("{stem}.csv")))?
                .write_all(self.to_csv().as_bytes())?;
        }
        if !self.rows_2d.is_empty() {
            std::fs::File::create(dir.join(format!("{stem}_2d.csv")))?
                .write_all(self.to_csv_2d().as_bytes())?;
        }
        std::fs::File::create(dir.join(format!("{stem}.json")))?
            .write_all(self.to_json()?.as_bytes())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kurtosis(v: &[f64]) -> f64 {
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        let m2 = v.iter().map(|a| (a - m).powi(2)).sum::<f64>() / n;
        let m4 = v.iter().map(|a| (a - m).powi(4)).sum::<f64>() / n;
        m4 / (m2 * m2)
    }

    fn histogram(v: &[f64], lo: f64, hi: f64, bins: usize) -> Vec<usize> {
        let mut h = vec![0; bins];
        for &a in v {
            if a >= lo && a < hi {
                h[((a - lo) / (hi - lo) * bins as f64) as usize] += 1;
            }
        }
        h
    }

    #[test]
    fn parse_and_display_models() {
        for s in ["uniform", "triangular", "bimodal:1.2", "ged:0.2:4"] {
            let m: ErrorModel = s.parse().unwrap();
            assert_eq!(m.to_string(), s);
        }
        assert!("bimodal:2.5".parse::<ErrorModel>().is_err());
        assert!("ged:0:4".parse::<ErrorModel>().is_err());
        assert!("cauchy".parse::<ErrorModel>().is_err());
    }

    #[test]
    fn uniform_kurtosis() {
        let e = draw_errors(&ErrorModel::Uniform, 100_000, 1).unwrap();
        assert!(e.iter().all(|v| v.abs() < 0.5));
        // standard error of sample kurtosis for the uniform is about 0.0024 at this n
        assert!((kurtosis(&e) - 1.8).abs() < 3.0 * 0.0024);
    }

    #[test]
    fn triangular_support_and_peak() {
        let e = draw_errors(&ErrorModel::Triangular, 100_000, 2).unwrap();
        assert!(e.iter().all(|v| v.abs() < 0.5));
        let h = histogram(&e, -0.5, 0.5, 10);
        let peak = (0..10).max_by_key(|&i| h[i]).unwrap();
        assert!(peak == 4 || peak == 5);
    }

    #[test]
    fn bimodal_has_two_modes() {
        let e = draw_errors(&ErrorModel::Bimodal { alpha: 1.8 }, 100_000, 3).unwrap();
        let h = histogram(&e, -2.0, 2.0, 20);
        let centre = h[9] + h[10];
        let left = *h[..9].iter().max().unwrap();
        let right = *h[11..].iter().max().unwrap();
        assert!(centre < left + left && centre < right + right);
        assert!(h[9] < left && h[10] < right);
    }

    #[test]
    fn target_functions() {
        assert_eq!(TargetFunction::F1.eval(0.3), 0.3f64.sin());
        assert!((TargetFunction::F2.eval(0.0) - 1.0).abs() < 1e-15);
        assert!((TargetFunction::F3.eval(0.5) - (1f64.sin() + 2f64.powi(-4))).abs() < 1e-15);
        assert!((TargetFunction::F4.eval(1.0) - (0.3 * (-16f64).exp() + 0.7)).abs() < 1e-15);
        assert!(TargetFunction::from_id(5).is_err());
        for f in TargetFunction::ALL {
            assert_eq!(TargetFunction::from_id(f.id()).unwrap(), f);
        }
    }

    #[test]
    fn evaluation_indices() {
        let idx = ExperimentConfig::default().eval_indices();
        assert_eq!(idx.len(), 91);
        assert_eq!((idx[0], idx[90]), (5, 95));
    }

    #[test]
    fn zero_noise_gives_tiny_mse() {
        let model = ErrorModel::Ged {
            scale: 1e-9,
            shape: 2.0,
        };
        let cfg = ExperimentConfig::default();
        let row = run_experiment(TargetFunction::F1, &model, 200, 2, 5, &cfg).unwrap();
        assert!(row.mse_lls < 1e-6 && row.mse_llp < 1e-6);
    }

    #[test]
    fn single_replicate_report() {
        let cfg = ExperimentConfig::default();
        let row = run_experiment(TargetFunction::F2, &ErrorModel::Uniform, 50, 1, 9, &cfg).unwrap();
        assert!(row.std_mse_lls.is_none());
        assert!(row.mse_lls >= 0.0 && row.mse_llp >= 0.0);
        let mut report = SimReport::new(9, serde_json::json!({}));
        report.rows.push(row.clone());
        let csv = report.to_csv();
        let line = csv.lines().nth(1).unwrap();
        assert!(line.contains(",,"));
        let again = run_experiment(TargetFunction::F2, &ErrorModel::Uniform, 50, 1, 9, &cfg).unwrap();
        assert_eq!(row, again);
    }

    #[test]
    fn two_d_identical_at_p2() {
        let rows = run_experiment_2d(0.2, &[2.0], 100, 2, 4, &Experiment2DConfig::default()).unwrap();
        assert_eq!(rows[0].mse_lls, rows[0].mse_llp);
    }
}
