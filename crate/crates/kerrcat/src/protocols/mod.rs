//! End-to-end emulations of the characterization experiments.

mod bitflip;
mod control;
mod leakage;
mod levels;
mod readout;

pub use bitflip::*;
pub use control::*;
pub use leakage::*;
pub use levels::*;
pub use readout::*;

use serde::{Deserialize, Serialize};

use crate::error::{KerrcatError, Result};
use crate::spectrum::TWO_PI;

/// Inter-manifold relaxation, pure dephasing and excitation rates (1/s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecoherenceRates {
    pub k1_01: f64,
    pub k1_12: f64,
    pub kphi_01: f64,
    pub kphi_12: f64,
    pub kup_01: f64,
    pub kup_12: f64,
}

impl DecoherenceRates {
    pub fn new(k1_01: f64, k1_12: f64, kphi_01: f64, kphi_12: f64) -> Self {
        Self { k1_01, k1_12, kphi_01, kphi_12, kup_01: 0.0, kup_12: 0.0 }
    }

    /// Measured device rates (over 2π): 3.18, 15.92, 10.61 and 31.83 kHz.
    pub fn device() -> Self {
        Self::new(TWO_PI * 3.18e3, TWO_PI * 15.92e3, TWO_PI * 10.61e3, TWO_PI * 31.83e3)
    }

    /// Excitation on each transition at `fraction` of its relaxation rate.
    pub fn with_heating_fraction(mut self, fraction: f64) -> Self {
        self.kup_01 = fraction * self.k1_01;
        self.kup_12 = fraction * self.k1_12;
        self
    }

    pub fn without_heating(mut self) -> Self {
        self.kup_01 = 0.0;
        self.kup_12 = 0.0;
        self
    }

    /// `Γ₀₁ = κ₁⁰¹/2 + κφ⁰¹`
    pub fn gamma_01(&self) -> f64 {
        self.k1_01 / 2.0 + self.kphi_01
    }

    pub fn gamma_12(&self) -> f64 {
        self.k1_12 / 2.0 + self.kphi_12
    }

    pub fn as_array(&self) -> [f64; 6] {
        [self.k1_01, self.k1_12, self.kphi_01, self.kphi_12, self.kup_01, self.kup_12]
    }

    pub fn validate(&self) -> Result<()> {
        let names = ["k1_01", "k1_12", "kphi_01", "kphi_12", "kup_01", "kup_12"];
        for (n, v) in names.iter().zip(self.as_array()) {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(KerrcatError::param(n, "rate must be finite and non-negative"));
            }
        }
        Ok(())
    }
}

/// Readout value associated with each manifold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReadoutContrasts {
    pub m0: f64,
    pub m1: f64,
    pub m2: f64,
    pub m3: f64,
}

impl ReadoutContrasts {
    pub fn new(m0: f64, m1: f64, m2: f64, m3: f64) -> Self {
        Self { m0, m1, m2, m3 }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.m0, self.m1, self.m2, self.m3]
    }

    pub fn get(&self, i: usize) -> f64 {
        self.as_array()[i]
    }

    /// `η_ij = (M_j − M_i)/(M₁ − M₀)`
    pub fn eta(&self, i: usize, j: usize) -> f64 {
        (self.get(j) - self.get(i)) / (self.m1 - self.m0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.as_array().iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(KerrcatError::param("contrasts", "must be finite"))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PopulationEstimate {
    pub p0: f64,
    pub p1: f64,
    pub p2: f64,
    pub sigma0: f64,
    pub sigma1: f64,
    pub sigma2: f64,
}

impl PopulationEstimate {
    /// Exact populations; `p₀` is whatever `p₁, p₂` leave.
    pub fn exact(p1: f64, p2: f64) -> Self {
        Self { p0: 1.0 - p1 - p2, p1, p2, sigma0: 0.0, sigma1: 0.0, sigma2: 0.0 }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.p0, self.p1, self.p2]
    }

    pub fn validate(&self) -> Result<()> {
        let sum = self.p0 + self.p1 + self.p2;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(KerrcatError::InvalidState(format!("populations sum to {sum}")));
        }
        for (i, (p, s)) in [(self.p0, self.sigma0), (self.p1, self.sigma1), (self.p2, self.sigma2)].into_iter().enumerate() {
            if !(p >= -s - 1e-12 && p <= 1.0 + s + 1e-12) {
                return Err(KerrcatError::InversionOutOfRange { index: i, value: p, sigma: s });
            }
        }
        Ok(())
    }
}
