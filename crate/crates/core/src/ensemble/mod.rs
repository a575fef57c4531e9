//! Per-ion static parameters and the stochastic spin bath.
//!
//! # Seed splitting
//!
//! Ion `j` draws its static parameters from `ChaCha8Rng` seeded with the
//! master seed and switched to stream `j`, in the fixed order optical
//! detuning, spin detuning, rf scale, optical scale, noise seed. The noise
//! seed feeds a second `ChaCha8Rng` whose stream is the shot index. No value
//! depends on how ions are scheduled across threads.

mod calibrate;
pub mod filter;
mod ou;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Cauchy, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use calibrate::{calibrate_bath, BathCalibration, CalibrationOptions};
pub use ou::{ou_moments, ou_phase_step, ou_stationary, ou_step, OUParams, OuMoments, OuPhaseKernel};

/// Gaussian FWHM over standard deviation, `2·sqrt(2 ln 2)`.
pub const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949_3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnsembleError {
    #[error("invalid distribution: {0}")]
    InvalidSpec(String),
    #[error("invalid bath: {0}")]
    InvalidBath(String),
    #[error("bath calibration did not converge after {iterations} evaluations (best T2eff {best_t2_us} us at sigma {best_sigma} rad/ms)")]
    NonConvergence {
        iterations: usize,
        best_sigma: f64,
        best_t2_us: f64,
    },
    #[error("bath calibration measurement failed: {0}")]
    Measurement(String),
}

/// Static parameters of one ion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IonRealization {
    /// Offset from the `(i)-(e)` line center, MHz.
    pub optical_detuning_mhz: f64,
    /// Offset from the `(i)-(t)` line center, kHz.
    pub spin_detuning_khz: f64,
    /// Multiplies every RF Rabi frequency.
    pub rf_scale: f64,
    /// Multiplies every optical Rabi frequency.
    pub optical_scale: f64,
    pub noise_seed: u64,
}

impl IonRealization {
    /// An ion at both line centers with exact drive amplitudes.
    pub fn centered(noise_seed: u64) -> Self {
        Self {
            optical_detuning_mhz: 0.0,
            spin_detuning_khz: 0.0,
            rf_scale: 1.0,
            optical_scale: 1.0,
            noise_seed,
        }
    }

    /// Bath generator for one shot.
    pub fn bath_rng(&self, shot: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.noise_seed);
        rng.set_stream(shot);
        rng
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpticalProfile {
    Gaussian,
    Lorentzian,
}

/// Ensemble widths and size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistributionSpec {
    #[serde(default = "default_profile")]
    pub optical_profile: OpticalProfile,
    #[serde(default = "default_optical_fwhm")]
    pub optical_fwhm_mhz: f64,
    #[serde(default = "default_spin_fwhm")]
    pub spin_fwhm_khz: f64,
    /// Relative rms of the RF amplitude.
    #[serde(default = "default_rf_sigma")]
    pub rf_sigma: f64,
    /// Relative rms of the optical amplitude.
    #[serde(default)]
    pub optical_sigma: f64,
    #[serde(default = "default_n")]
    pub n: usize,
}

fn default_profile() -> OpticalProfile {
    OpticalProfile::Gaussian
}
fn default_optical_fwhm() -> f64 {
    1.5
}
fn default_spin_fwhm() -> f64 {
    45.0
}
fn default_rf_sigma() -> f64 {
    0.02
}
fn default_n() -> usize {
    4000
}

impl Default for DistributionSpec {
    fn default() -> Self {
        Self {
            optical_profile: default_profile(),
            optical_fwhm_mhz: default_optical_fwhm(),
            spin_fwhm_khz: default_spin_fwhm(),
            rf_sigma: default_rf_sigma(),
            optical_sigma: 0.0,
            n: default_n(),
        }
    }
}

impl DistributionSpec {
    pub fn validate(&self) -> Result<(), EnsembleError> {
        let mut bad = Vec::new();
        if !(self.optical_fwhm_mhz > 0.0 && self.optical_fwhm_mhz.is_finite()) {
            bad.push("optical FWHM must be positive");
        }
        if !(self.spin_fwhm_khz > 0.0 && self.spin_fwhm_khz.is_finite()) {
            bad.push("spin FWHM must be positive");
        }
        if !(self.rf_sigma >= 0.0 && self.rf_sigma.is_finite()) {
            bad.push("rf amplitude sigma must be non-negative");
        }
        if !(self.optical_sigma >= 0.0 && self.optical_sigma.is_finite()) {
            bad.push("optical amplitude sigma must be non-negative");
        }
        if self.n < 1 {
            bad.push("ion count must be at least 1");
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(EnsembleError::InvalidSpec(bad.join("; ")))
        }
    }
}

/// `1 + σ·ξ`, redrawn until positive.
fn amplitude_scale(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    loop {
        let xi: f64 = rng.sample(StandardNormal);
        let s = 1.0 + sigma * xi;
        if s > 0.0 {
            return s;
        }
    }
}

/// Static parameters of ion `index`; see the module docs for the rule.
pub fn sample_ion(spec: &DistributionSpec, master_seed: u64, index: u64) -> IonRealization {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    let optical_detuning_mhz = match spec.optical_profile {
        OpticalProfile::Gaussian => {
            let xi: f64 = rng.sample(StandardNormal);
            xi * spec.optical_fwhm_mhz / FWHM_PER_SIGMA
        }
        OpticalProfile::Lorentzian => Cauchy::new(0.0, 0.5 * spec.optical_fwhm_mhz)
            .expect("validated width")
            .sample(&mut rng),
    };
    let xi: f64 = rng.sample(StandardNormal);
    let spin_detuning_khz = xi * spec.spin_fwhm_khz / FWHM_PER_SIGMA;
    let rf_scale = amplitude_scale(&mut rng, spec.rf_sigma);
    let optical_scale = amplitude_scale(&mut rng, spec.optical_sigma);
    let noise_seed = rng.next_u64();
    IonRealization {
        optical_detuning_mhz,
        spin_detuning_khz,
        rf_scale,
        optical_scale,
        noise_seed,
    }
}

pub fn sample_ensemble(
    spec: &DistributionSpec,
    master_seed: u64,
) -> Result<Vec<IonRealization>, EnsembleError> {
    spec.validate()?;
    Ok((0..spec.n as u64)
        .map(|j| sample_ion(spec, master_seed, j))
        .collect())
}
