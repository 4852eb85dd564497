//! Generalized error distribution (exponential power family).
//!
//! Density
//!
//! ```text
//! f(z) = exp(-|z - M|^p / (p s^p)) / (2 p^(1/p) s Γ(1 + 1/p))
//! ```
//!
//! with location `M`, scale `s` and shape `p > 0`. The scale follows the
//! convention `s = (E|z - M|^p)^(1/p)`, the one under which the normalizing
//! constant above is correct. `p = 2, s = 1` is the standard normal and `p = 1`
//! the Laplace family.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::special::{gamma_p, gamma_q, inv_gamma_q, ln_gamma};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ged {
    location: f64,
    scale: f64,
    shape: f64,
}

impl Ged {
    pub fn new(location: f64, scale: f64, shape: f64) -> Result<Self> {
        if !location.is_finite() {
            return Err(domain("GED location must be finite"));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(domain(format!("GED scale must be positive, got {scale}")));
        }
        if !(shape > 0.0 && shape.is_finite()) {
            return Err(domain(format!("GED shape must be positive, got {shape}")));
        }
        Ok(Self {
            location,
            scale,
            shape,
        })
    }

    /// Zero location, unit scale.
    pub fn standard(shape: f64) -> Result<Self> {
        Self::new(0.0, 1.0, shape)
    }

    pub fn location(&self) -> f64 {
        self.location
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn shape(&self) -> f64 {
        self.shape
    }

    fn ln_norm_const(&self) -> f64 {
        let p = self.shape;
        (2.0_f64).ln() + p.ln() / p + self.scale.ln() + ln_gamma(1.0 + 1.0 / p)
    }

    /// `|z - M|^p / (p s^p)`, the Gamma(1/p, 1) variate associated with `z`.
    fn gamma_arg(&self, z: f64) -> f64 {
        let p = self.shape;
        ((z - self.location).abs() / self.scale).powf(p) / p
    }

    pub fn pdf(&self, z: f64) -> Result<f64> {
        if !z.is_finite() {
            return Err(domain("GED density needs a finite argument"));
        }
        Ok((-self.gamma_arg(z) - self.ln_norm_const()).exp())
    }

    pub fn cdf(&self, z: f64) -> Result<f64> {
        if z.is_nan() {
            return Err(domain("GED CDF of NaN"));
        }
        if z == f64::INFINITY {
            return Ok(1.0);
        }
        if z == f64::NEG_INFINITY {
            return Ok(0.0);
        }
        let a = 1.0 / self.shape;
        let t = self.gamma_arg(z);
        // Each tail is computed from the upper function to keep its precision.
        Ok(if z < self.location {
            0.5 * gamma_q(a, t)
        } else {
            0.5 + 0.5 * gamma_p(a, t)
        })
    }

    /// Inverse CDF through the inverse regularized incomplete gamma function.
    pub fn quantile(&self, u: f64) -> Result<f64> {
        if !(u > 0.0 && u < 1.0) {
            return Err(domain(format!("quantile level must lie in (0,1), got {u}")));
        }
        let offset = self.quantile_offset(u);
        Ok(self.location + offset)
    }

    // Signed distance from the location; exact zero at u = 0.5.
    fn quantile_offset(&self, u: f64) -> f64 {
        let p = self.shape;
        let (tail, sign) = if u < 0.5 {
            (2.0 * u, -1.0)
        } else {
            (2.0 * (1.0 - u), 1.0)
        };
        let t = inv_gamma_q(1.0 / p, tail);
        sign * self.scale * (p * t).powf(1.0 / p)
    }

    /// One draw via `M + s * S * G^(1/p)`, `G ~ Gamma(shape 1/p, scale p)`,
    /// `S` a uniform random sign.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let p = self.shape;
        let gamma = Gamma::new(1.0 / p, p).expect("valid gamma parameters");
        self.draw(&gamma, rng)
    }

    fn draw<R: Rng + ?Sized>(&self, gamma: &Gamma<f64>, rng: &mut R) -> f64 {
        let g: f64 = gamma.sample(rng);
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        self.location + self.scale * sign * g.powf(1.0 / self.shape)
    }

    /// `n` i.i.d. draws.
    pub fn sample_n<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        let p = self.shape;
        let gamma = Gamma::new(1.0 / p, p).expect("valid gamma parameters");
        (0..n).map(|_| self.draw(&gamma, rng)).collect()
    }

    /// `E|z - M|^r = (p^(1/p) s)^r Γ((r+1)/p) / Γ(1/p)`.
    pub fn abs_moment(&self, r: f64) -> Result<f64> {
        if !(r >= 0.0 && r.is_finite()) {
            return Err(domain(format!("moment order must be nonnegative, got {r}")));
        }
        if r == 0.0 {
            return Ok(1.0);
        }
        let p = self.shape;
        let ln_scale = p.ln() / p + self.scale.ln();
        Ok((r * ln_scale + ln_gamma((r + 1.0) / p) - ln_gamma(1.0 / p)).exp())
    }

    /// `Γ(5/p) Γ(1/p) / Γ(3/p)^2`; independent of location and scale.
    pub fn kurtosis(&self) -> f64 {
        let p = self.shape;
        (ln_gamma(5.0 / p) + ln_gamma(1.0 / p) - 2.0 * ln_gamma(3.0 / p)).exp()
    }

    pub fn variance(&self) -> f64 {
        self.abs_moment(2.0).expect("order 2 is valid")
    }
}
