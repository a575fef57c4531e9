use std::f64::consts::{LN_2, PI, TAU};

use serde::{Deserialize, Serialize};

use super::SequenceError;

/// Number of FWHM on each side of the center kept for smooth envelopes.
pub const SUPPORT_FWHM: f64 = 3.0;

/// Temporal shape of a drive pulse. Times in µs, sweep in MHz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Envelope {
    Gaussian { fwhm: f64 },
    SechChirp { fwhm: f64, sweep: f64 },
    Rectangular { duration: f64 },
}

/// Instantaneous drive: Rabi frequency (rad/µs) and frequency offset (MHz).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopeSample {
    pub rabi: f64,
    pub detuning_mhz: f64,
}

/// `ln cosh x` without overflow.
pub fn ln_cosh(x: f64) -> f64 {
    let a = x.abs();
    a + (-2.0 * a).exp().ln_1p() - LN_2
}

/// `sech` rate constant for a given intensity-free amplitude FWHM.
pub fn sech_beta(fwhm: f64) -> f64 {
    2.0 * 2.0_f64.acosh() / fwhm
}

impl Envelope {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Envelope::Gaussian { .. } => "gaussian",
            Envelope::SechChirp { .. } => "sech_chirp",
            Envelope::Rectangular { .. } => "rectangular",
        }
    }

    /// FWHM for smooth shapes, duration for rectangular.
    pub fn width(&self) -> f64 {
        match *self {
            Envelope::Gaussian { fwhm } | Envelope::SechChirp { fwhm, .. } => fwhm,
            Envelope::Rectangular { duration } => duration,
        }
    }

    /// Half-length of the support around the center.
    pub fn half_support(&self) -> f64 {
        match *self {
            Envelope::Gaussian { fwhm } | Envelope::SechChirp { fwhm, .. } => SUPPORT_FWHM * fwhm,
            Envelope::Rectangular { duration } => 0.5 * duration,
        }
    }

    pub fn validate(&self) -> Result<(), SequenceError> {
        let ok = match *self {
            Envelope::Gaussian { fwhm } => fwhm > 0.0 && fwhm.is_finite(),
            Envelope::SechChirp { fwhm, sweep } => {
                fwhm > 0.0 && fwhm.is_finite() && sweep >= 0.0 && sweep.is_finite()
            }
            Envelope::Rectangular { duration } => duration > 0.0 && duration.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(SequenceError::InvalidEnvelope(format!("{self:?}")))
        }
    }

    /// Chirp contribution to the carrier phase, radians.
    pub fn chirp_phase(&self, t_rel: f64) -> f64 {
        match *self {
            Envelope::SechChirp { fwhm, sweep } if sweep > 0.0 => {
                let beta = sech_beta(fwhm);
                TAU * 0.5 * sweep * ln_cosh(beta * t_rel) / beta
            }
            _ => 0.0,
        }
    }
}

/// Untruncated envelope value at `t_rel` from the center.
pub fn envelope_value(env: &Envelope, peak: f64, t_rel: f64) -> EnvelopeSample {
    match *env {
        Envelope::Gaussian { fwhm } => EnvelopeSample {
            rabi: peak * (-4.0 * LN_2 * t_rel * t_rel / (fwhm * fwhm)).exp(),
            detuning_mhz: 0.0,
        },
        Envelope::SechChirp { fwhm, sweep } => {
            let x = sech_beta(fwhm) * t_rel;
            EnvelopeSample {
                rabi: peak / x.cosh(),
                detuning_mhz: 0.5 * sweep * x.tanh(),
            }
        }
        Envelope::Rectangular { duration } => EnvelopeSample {
            rabi: if t_rel.abs() <= 0.5 * duration { peak } else { 0.0 },
            detuning_mhz: 0.0,
        },
    }
}

/// Peak Rabi frequency giving pulse area `area` over the infinite domain.
pub fn calibrate_peak_for_area(env: &Envelope, area: f64) -> Result<f64, SequenceError> {
    env.validate()?;
    if !(area > 0.0 && area.is_finite()) {
        return Err(SequenceError::Precondition(format!(
            "pulse area must be positive, got {area}"
        )));
    }
    Ok(match *env {
        Envelope::Rectangular { duration } => area / duration,
        Envelope::Gaussian { fwhm } => area * 2.0 * (LN_2 / PI).sqrt() / fwhm,
        Envelope::SechChirp { fwhm, .. } => area * sech_beta(fwhm) / PI,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let n = n + n % 2;
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for k in 1..n {
            let w = if k % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(a + k as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn gaussian_peak_and_half_max() {
        let env = Envelope::Gaussian { fwhm: 0.2 };
        assert_eq!(envelope_value(&env, 3.0, 0.0).rabi, 3.0);
        assert_relative_eq!(envelope_value(&env, 3.0, 0.1).rabi, 1.5, epsilon = 1e-14);
        assert_relative_eq!(envelope_value(&env, 3.0, -0.1).rabi, 1.5, epsilon = 1e-14);
    }

    #[test]
    fn sech_half_max_and_sweep_limits() {
        let env = Envelope::SechChirp { fwhm: 2.25, sweep: 2.0 };
        assert_relative_eq!(envelope_value(&env, 1.0, 1.125).rabi, 0.5, epsilon = 1e-14);
        assert_relative_eq!(envelope_value(&env, 1.0, 1e3).detuning_mhz, 1.0, epsilon = 1e-12);
        assert_relative_eq!(envelope_value(&env, 1.0, -1e3).detuning_mhz, -1.0, epsilon = 1e-12);
    }

    #[test]
    fn rectangular_edges() {
        let env = Envelope::Rectangular { duration: 5.0 };
        assert_eq!(envelope_value(&env, 2.0, 2.5).rabi, 2.0);
        assert_eq!(envelope_value(&env, 2.0, 2.5001).rabi, 0.0);
    }

    #[test]
    fn rect_pi_calibration() {
        let env = Envelope::Rectangular { duration: 5.0 };
        let p = calibrate_peak_for_area(&env, PI).unwrap();
        assert_relative_eq!(p, PI / 5.0, epsilon = 1e-15);
        assert_relative_eq!(p / TAU, 0.1, epsilon = 1e-15);
        let area = simpson(|t| envelope_value(&env, p, t).rabi, -2.5, 2.5, 10);
        assert!((area - PI).abs() < 1e-12);
    }

    #[test]
    fn sech_pi_calibration_is_beta() {
        let env = Envelope::SechChirp { fwhm: 2.25, sweep: 2.0 };
        let p = calibrate_peak_for_area(&env, PI).unwrap();
        let beta = 2.0 * 2.0_f64.acosh() / 2.25;
        assert_relative_eq!(p, beta, epsilon = 1e-15);
    }

    #[test]
    fn calibrated_areas_by_quadrature() {
        for env in [
            Envelope::Gaussian { fwhm: 0.2 },
            Envelope::Gaussian { fwhm: 0.425 },
            Envelope::SechChirp { fwhm: 2.25, sweep: 2.0 },
            Envelope::Rectangular { duration: 5.0 },
        ] {
            let p = calibrate_peak_for_area(&env, PI).unwrap();
            let h = match env {
                Envelope::Rectangular { duration } => 0.5 * duration,
                _ => 40.0 * env.width(),
            };
            let area = simpson(|t| envelope_value(&env, p, t).rabi, -h, h, 400_000);
            assert!((area - PI).abs() < 1e-9, "{env:?}: {area}");
        }
    }

    #[test]
    fn nonpositive_area_rejected() {
        let env = Envelope::Gaussian { fwhm: 0.2 };
        assert!(calibrate_peak_for_area(&env, 0.0).is_err());
        assert!(calibrate_peak_for_area(&env, -1.0).is_err());
    }

    #[test]
    fn chirp_phase_derivative_is_detuning() {
        let env = Envelope::SechChirp { fwhm: 2.25, sweep: 2.0 };
        for &t in &[-5.0, -1.0, 0.0, 0.3, 4.0] {
            let h = 1e-5;
            let d = (env.chirp_phase(t + h) - env.chirp_phase(t - h)) / (2.0 * h);
            let want = TAU * envelope_value(&env, 1.0, t).detuning_mhz;
            assert_relative_eq!(d, want, epsilon = 1e-6);
        }
    }

    #[test]
    fn ln_cosh_matches_naive() {
        for &x in &[-3.0, -0.1, 0.0, 0.5, 2.0, 10.0] {
            assert_relative_eq!(ln_cosh(x), f64::cosh(x).ln(), epsilon = 1e-13);
        }
        assert!(ln_cosh(1e4).is_finite());
    }

    #[test]
    fn invalid_envelopes() {
        assert!(Envelope::Gaussian { fwhm: 0.0 }.validate().is_err());
        assert!(Envelope::SechChirp { fwhm: 1.0, sweep: -1.0 }.validate().is_err());
        assert!(Envelope::Rectangular { duration: -1.0 }.validate().is_err());
    }
}
