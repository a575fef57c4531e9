use serde::{Deserialize, Serialize};

use super::{EnsembleError, OUParams};

/// Search settings for [`calibrate_bath`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationOptions {
    /// Accepted relative error of the measured `T₂,eff`.
    #[serde(default = "default_tol")]
    pub tolerance: f64,
    /// Maximum number of measurements.
    #[serde(default = "default_iter")]
    pub max_evaluations: usize,
    /// Below this value of `σ_b·τ_c` (rad) the analytic estimate is used.
    #[serde(default = "default_weak")]
    pub weak_bath_threshold: f64,
}

fn default_tol() -> f64 {
    0.02
}
fn default_iter() -> usize {
    24
}
fn default_weak() -> f64 {
    0.01
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self {
            tolerance: default_tol(),
            max_evaluations: default_iter(),
            weak_bath_threshold: default_weak(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BathCalibration {
    pub params: OUParams,
    /// Measured `T₂,eff` at the returned bath, µs (`None` when not measured).
    pub measured_t2_us: Option<f64>,
    /// `(σ_b, T₂,eff)` pairs visited, rad/ms and µs.
    pub history: Vec<(f64, f64)>,
    /// `σ_b·τ_c` below the threshold; the motional-narrowing estimate was
    /// returned without simulation.
    pub weak_bath: bool,
}

/// Finds `σ_b` whose measured two-pulse `T₂,eff` equals `target_us`.
///
/// `measure` runs the two-pulse protocol for a candidate bath and returns
/// the fitted `T₂,eff` in µs. The search starts from the motional-narrowing
/// estimate `σ = 1/sqrt(T·τ_c)`, brackets the root by factors of two and
/// refines with Illinois regula falsi in `(ln σ, ln T₂)`.
pub fn calibrate_bath<E: std::fmt::Display>(
    target_us: f64,
    tau_c_us: f64,
    opts: &CalibrationOptions,
    mut measure: impl FnMut(&OUParams) -> Result<f64, E>,
) -> Result<BathCalibration, EnsembleError> {
    if !(target_us > 0.0) {
        return Err(EnsembleError::InvalidBath(format!(
            "calibration target must be positive, got {target_us}"
        )));
    }
    if !(tau_c_us > 0.0 && tau_c_us.is_finite()) {
        return Err(EnsembleError::InvalidBath(format!(
            "tau_c must be positive, got {tau_c_us}"
        )));
    }
    let sigma0 = 1e3 / (target_us * tau_c_us).sqrt();
    if sigma0 * 1e-3 * tau_c_us < opts.weak_bath_threshold {
        return Ok(BathCalibration {
            params: OUParams::new(tau_c_us, sigma0),
            measured_t2_us: None,
            history: Vec::new(),
            weak_bath: true,
        });
    }

    let mut history = Vec::new();
    let tol = (1.0 + opts.tolerance).ln();
    let mut eval = |u: f64, history: &mut Vec<(f64, f64)>| -> Result<f64, EnsembleError> {
        let sigma = u.exp();
        let t2 = measure(&OUParams::new(tau_c_us, sigma))
            .map_err(|e| EnsembleError::Measurement(e.to_string()))?;
        history.push((sigma, t2));
        // no measurable decay counts as a very long lifetime
        let t2 = if t2.is_finite() && t2 > 0.0 { t2 } else { 1e12 };
        Ok((t2 / target_us).ln())
    };
    let done = |u: f64, history: Vec<(f64, f64)>| {
        let t2 = history.last().map(|h| h.1);
        Ok(BathCalibration {
            params: OUParams::new(tau_c_us, u.exp()),
            measured_t2_us: t2,
            history,
            weak_bath: false,
        })
    };

    let mut a = sigma0.ln();
    let mut fa = eval(a, &mut history)?;
    if fa.abs() <= tol {
        return done(a, history);
    }
    // g decreases with σ: too long a lifetime means more noise is needed
    let step = if fa > 0.0 { 2f64.ln() } else { -(2f64.ln()) };
    let mut b = a + step;
    let mut fb = eval(b, &mut history)?;
    while fb.signum() == fa.signum() {
        if fb.abs() <= tol {
            return done(b, history);
        }
        if history.len() >= opts.max_evaluations {
            return Err(non_convergence(&history, target_us));
        }
        a = b;
        fa = fb;
        b += step;
        fb = eval(b, &mut history)?;
    }
    if fb.abs() <= tol {
        return done(b, history);
    }

    let mut side = 0;
    while history.len() < opts.max_evaluations {
        let c = (a * fb - b * fa) / (fb - fa);
        let fc = eval(c, &mut history)?;
        if fc.abs() <= tol {
            return done(c, history);
        }
        if fc.signum() == fb.signum() {
            b = c;
            fb = fc;
            if side == -1 {
                fa *= 0.5;
            }
            side = -1;
        } else {
            a = c;
            fa = fc;
            if side == 1 {
                fb *= 0.5;
            }
            side = 1;
        }
        if (a - b).abs() < 1e-6 {
            break;
        }
    }
    Err(non_convergence(&history, target_us))
}

fn non_convergence(history: &[(f64, f64)], target: f64) -> EnsembleError {
    let best = history
        .iter()
        .min_by(|x, y| {
            let ex = (x.1 / target).ln().abs();
            let ey = (y.1 / target).ln().abs();
            ex.total_cmp(&ey)
        })
        .copied()
        .unwrap_or((f64::NAN, f64::NAN));
    EnsembleError::NonConvergence {
        iterations: history.len(),
        best_sigma: best.0,
        best_t2_us: best.1,
    }
}
