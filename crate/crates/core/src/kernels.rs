use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// Standardized kernel weights below this value are treated as exactly zero.
pub const WEIGHT_FLOOR: f64 = 1e-12;

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Symmetric, nonnegative smoothing kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    /// Standard normal density; the bandwidth is its standard deviation.
    #[default]
    Gaussian,
}

/// Moment integrals of a kernel `K`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConstants {
    /// `∫ u² K(u) du`
    pub mu2: f64,
    /// `∫ K(u)² du`
    pub r: f64,
    /// `∫ u² K(u)² du`
    pub mu2_k2: f64,
    /// `∫ u⁴ K(u) du`
    pub mu4: f64,
}

impl Kernel {
    /// `K(u)` at standardized distance `u`, with the weight floor applied.
    #[inline]
    pub fn evaluate(self, u: f64) -> f64 {
        match self {
            Kernel::Gaussian => {
                let k = FRAC_1_SQRT_2PI * (-0.5 * u * u).exp();
                if k < WEIGHT_FLOOR {
                    0.0
                } else {
                    k
                }
            }
        }
    }

    /// Scaled weight `K_h(d) = K(d / h) / h`.
    pub fn weight(self, distance: f64, bandwidth: f64) -> Result<f64> {
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(domain(format!("bandwidth must be positive, got {bandwidth}")));
        }
        Ok(self.evaluate(distance / bandwidth) / bandwidth)
    }

    /// Standardized distance beyond which every weight is zero.
    pub fn support_radius(self) -> f64 {
        match self {
            // solve φ(u) = WEIGHT_FLOOR
            Kernel::Gaussian => (-2.0 * (WEIGHT_FLOOR / FRAC_1_SQRT_2PI).ln()).sqrt(),
        }
    }

    pub fn constants(self) -> Result<KernelConstants> {
        match self {
            Kernel::Gaussian => {
                let sqrt_pi = std::f64::consts::PI.sqrt();
                Ok(KernelConstants {
                    mu2: 1.0,
                    r: 1.0 / (2.0 * sqrt_pi),
                    mu2_k2: 1.0 / (4.0 * sqrt_pi),
                    mu4: 3.0,
                })
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Kernel::Gaussian => "gaussian",
        }
    }
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Kernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" | "normal" => Ok(Kernel::Gaussian),
            other => Err(Error::NotImplemented(format!("kernel family '{other}'"))),
        }
    }
}
