use std::f64::consts::{LN_2, PI, TAU};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::lsq;
use super::ObservableError;

/// Retrieval efficiency against storage time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayCurve {
    /// Storage times, ms, strictly increasing.
    pub t_ms: Vec<f64>,
    pub eta: Vec<f64>,
    /// Standard errors of `eta`, when known.
    pub stderr: Option<Vec<f64>>,
}

impl DecayCurve {
    pub fn new(t_ms: Vec<f64>, eta: Vec<f64>, stderr: Option<Vec<f64>>) -> Result<Self, ObservableError> {
        if t_ms.len() != eta.len() || stderr.as_ref().is_some_and(|s| s.len() != eta.len()) {
            return Err(ObservableError::GridMismatch("curve columns differ in length".into()));
        }
        if t_ms.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(ObservableError::Degenerate("storage times must increase strictly".into()));
        }
        if let Some(e) = eta.iter().find(|e| !(**e >= 0.0)) {
            return Err(ObservableError::NonPositiveData(format!("efficiency {e}")));
        }
        Ok(Self { t_ms, eta, stderr })
    }

    pub fn len(&self) -> usize {
        self.t_ms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t_ms.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    /// `T2,eff` in ms; infinite when the curve does not decay.
    pub t2eff_ms: f64,
    /// Standard error of `t2eff_ms`.
    pub t2eff_stderr_ms: f64,
    pub i0: f64,
    /// RMS of the (weighted) residuals.
    pub residual_norm: f64,
    pub converged: bool,
}

/// Fits `η = I0 exp(−2T/T2,eff)`.
///
/// A weighted regression of `ln η` gives the start point, which is then
/// refined by nonlinear least squares on `η` itself.
pub fn fit_t2eff(curve: &DecayCurve) -> Result<FitResult, ObservableError> {
    let n = curve.len();
    if n < 3 {
        return Err(ObservableError::TooFewPoints { need: 3, got: n });
    }
    if let Some(e) = curve.eta.iter().find(|e| !(**e > 0.0)) {
        return Err(ObservableError::NonPositiveData(format!("efficiency {e}")));
    }
    let sigma: Vec<f64> = match &curve.stderr {
        Some(s) => {
            let floor = 1e-6 * curve.eta.iter().cloned().fold(0.0, f64::max);
            s.iter().map(|v| v.max(floor)).collect()
        }
        None => curve.eta.clone(),
    };
    // ln η has standard error σ/η
    let w: Vec<f64> = curve.eta.iter().zip(&sigma).map(|(e, s)| (e / s).powi(2)).collect();
    let y: Vec<f64> = curve.eta.iter().map(|e| e.ln()).collect();
    let sw: f64 = w.iter().sum();
    let tm = w.iter().zip(&curve.t_ms).map(|(w, t)| w * t).sum::<f64>() / sw;
    let ym = w.iter().zip(&y).map(|(w, y)| w * y).sum::<f64>() / sw;
    let sxx: f64 = w.iter().zip(&curve.t_ms).map(|(w, t)| w * (t - tm).powi(2)).sum();
    let sxy: f64 = (0..n).map(|i| w[i] * (curve.t_ms[i] - tm) * (y[i] - ym)).sum();
    if !(sxx > 0.0) {
        return Err(ObservableError::Degenerate("storage times do not spread".into()));
    }
    let k0 = -sxy / sxx;
    let ln_i0 = ym + k0 * tm;

    let t = curve.t_ms.clone();
    let eta = curve.eta.clone();
    let sig = sigma.clone();
    let residual = move |p: &DVector<f64>| {
        DVector::from_iterator(n, (0..n).map(|i| ((p[0] - p[1] * t[i]).exp() - eta[i]) / sig[i]))
    };
    let sol = lsq::minimize(DVector::from_vec(vec![ln_i0, k0]), &residual);
    let (ln_i0, k) = (sol.params[0], sol.params[1]);
    let rms = (2.0 * sol.cost / n as f64).sqrt();
    if !sol.converged {
        return Err(ObservableError::NonConvergence(format!(
            "decay fit stopped at k = {k} 1/ms"
        )));
    }
    let jac = lsq::jacobian(&residual, &sol.params);
    let scale = if curve.stderr.is_some() || n <= 2 {
        1.0
    } else {
        2.0 * sol.cost / (n - 2) as f64
    };
    let k_err = (jac.transpose() * &jac)
        .try_inverse()
        .map(|c| (scale * c[(1, 1)]).sqrt())
        .unwrap_or(f64::NAN);
    let decays = k > 1e-12 * (1.0 + k0.abs());
    Ok(FitResult {
        t2eff_ms: if decays { 2.0 / k } else { f64::INFINITY },
        t2eff_stderr_ms: if decays { 2.0 * k_err / (k * k) } else { f64::NAN },
        i0: ln_i0.exp(),
        residual_norm: rms,
        converged: decays,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisibilityFit {
    pub v: f64,
    pub i_max: f64,
    /// Phase offset `φ0`, radians in `(−π, π]`.
    pub phase_offset: f64,
    /// RMS residual.
    pub residual_norm: f64,
    /// Unclamped visibility when the fit exceeded 1.
    pub raw_v: f64,
    pub clamped: bool,
}

impl VisibilityFit {
    pub fn intensity_at(&self, phi: f64) -> f64 {
        0.5 * self.i_max * (1.0 + self.v * (phi + self.phase_offset).sin())
    }
}

/// Fits `I(φ) = (I_max/2)(1 + V sin(φ + φ0))` by linear least squares.
pub fn fit_visibility(points: &[(f64, f64)]) -> Result<VisibilityFit, ObservableError> {
    if points.len() < 4 {
        return Err(ObservableError::TooFewPoints { need: 4, got: points.len() });
    }
    let mut ph: Vec<f64> = points.iter().map(|(p, _)| p.rem_euclid(TAU)).collect();
    ph.sort_by(f64::total_cmp);
    let mut gap = ph[0] + TAU - ph[ph.len() - 1];
    for w in ph.windows(2) {
        gap = gap.max(w[1] - w[0]);
    }
    if TAU - gap < PI - 1e-9 {
        return Err(ObservableError::Degenerate(format!(
            "phases span {:.1} deg, need at least 180",
            (TAU - gap).to_degrees()
        )));
    }
    let m = points.len();
    let a = DMatrix::from_fn(m, 3, |r, c| match c {
        0 => 1.0,
        1 => points[r].0.sin(),
        _ => points[r].0.cos(),
    });
    let b = DVector::from_iterator(m, points.iter().map(|p| p.1));
    let x = a
        .clone()
        .svd(true, true)
        .solve(&b, 1e-12)
        .map_err(|e| ObservableError::Degenerate(e.to_string()))?;
    let (c0, s, c) = (x[0], x[1], x[2]);
    if !(c0 > 0.0) {
        return Err(ObservableError::NonPositiveData(format!("mean intensity {c0}")));
    }
    let amp = s.hypot(c);
    let raw_v = amp / c0;
    let resid = &a * &x - &b;
    Ok(VisibilityFit {
        v: raw_v.min(1.0),
        i_max: 2.0 * c0,
        phase_offset: if amp > 0.0 { c.atan2(s) } else { 0.0 },
        residual_norm: (resid.norm_squared() / m as f64).sqrt(),
        raw_v,
        clamped: raw_v > 1.0,
    })
}

/// One coherent Gaussian amplitude component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussComponent {
    /// Peak field amplitude (square root of the peak intensity).
    pub amplitude: f64,
    pub center: f64,
    /// Intensity FWHM.
    pub fwhm: f64,
}

impl GaussComponent {
    fn field(&self, t: f64) -> f64 {
        self.amplitude * (-2.0 * LN_2 * ((t - self.center) / self.fwhm).powi(2)).exp()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoubleGaussian {
    /// Components ordered by center; the second has zero amplitude when a
    /// single pulse describes the data.
    pub components: [GaussComponent; 2],
    /// Relative phase in `[0, π]`.
    pub relative_phase: f64,
    /// RMS residual in intensity units.
    pub residual_norm: f64,
    pub converged: bool,
}

impl DoubleGaussian {
    pub fn intensity_at(&self, t: f64) -> f64 {
        let [a, b] = self.components;
        let (fa, fb) = (a.field(t), b.field(t));
        fa * fa + fb * fb + 2.0 * fa * fb * self.relative_phase.cos()
    }
}

fn model(p: &[f64], t: f64) -> f64 {
    let g = |a: f64, c: f64, lw: f64| a * (-2.0 * LN_2 * ((t - c) / lw.exp()).powi(2)).exp();
    let f1 = g(p[0], p[1], p[2]);
    if p.len() == 3 {
        return f1 * f1;
    }
    let f2 = g(p[3], p[4], p[5]);
    f1 * f1 + f2 * f2 + 2.0 * f1 * f2 * p[6].cos()
}

/// Fits two coherent Gaussian pulses to an intensity profile.
///
/// A single Gaussian is fitted first; the pair is then refined from several
/// start points. The single component is kept when the pair does not
/// lower the residual appreciably.
pub fn fit_double_gaussian(times: &[f64], intensity: &[f64]) -> Result<DoubleGaussian, ObservableError> {
    let m = times.len();
    if m != intensity.len() {
        return Err(ObservableError::GridMismatch("times and intensity differ in length".into()));
    }
    if m < 8 {
        return Err(ObservableError::TooFewPoints { need: 8, got: m });
    }
    let peak = intensity.iter().cloned().fold(0.0, f64::max);
    if !(peak > 0.0) {
        return Err(ObservableError::NonPositiveData("intensity profile is empty".into()));
    }
    let y: Vec<f64> = intensity.iter().map(|v| v / peak).collect();
    let residual = |p: &DVector<f64>| {
        DVector::from_iterator(m, (0..m).map(|i| model(p.as_slice(), times[i]) - y[i]))
    };

    let mass: f64 = y.iter().map(|v| v.max(0.0)).sum();
    let mean = times.iter().zip(&y).map(|(t, v)| t * v.max(0.0)).sum::<f64>() / mass;
    let var = times.iter().zip(&y).map(|(t, v)| (t - mean).powi(2) * v.max(0.0)).sum::<f64>() / mass;
    let width = (8.0 * LN_2 * var).sqrt().max(times[1] - times[0]);
    let single = lsq::minimize(DVector::from_vec(vec![1.0, mean, width.ln()]), residual);

    // local maxima as candidate centers
    let mut maxima: Vec<(f64, f64)> = (1..m - 1)
        .filter(|&i| y[i] >= y[i - 1] && y[i] > y[i + 1] && y[i] > 0.05)
        .map(|i| (y[i], times[i]))
        .collect();
    maxima.sort_by(|a, b| b.0.total_cmp(&a.0));
    let (sc, sw) = (single.params[1], single.params[2].exp());
    let mut centers = vec![(sc - 0.5 * sw, sc + 0.5 * sw), (sc - sw, sc + sw)];
    if maxima.len() >= 2 {
        let (a, b) = (maxima[0].1.min(maxima[1].1), maxima[0].1.max(maxima[1].1));
        centers.insert(0, (a, b));
    }
    let mut best: Option<lsq::Solution> = None;
    for &(c1, c2) in &centers {
        let w0 = (0.6 * sw).min((c2 - c1).abs().max(times[1] - times[0]));
        for psi in [0.0, 0.5 * PI, PI, 1.5 * PI] {
            let a1 = model(single.params.as_slice(), c1).sqrt().max(0.1);
            let a2 = model(single.params.as_slice(), c2).sqrt().max(0.1);
            let start = DVector::from_vec(vec![a1, c1, w0.ln(), a2, c2, w0.ln(), psi]);
            let sol = lsq::minimize(start, residual);
            if sol.cost.is_finite() && best.as_ref().is_none_or(|b| sol.cost < b.cost) {
                best = Some(sol);
            }
        }
    }
    let scale = peak.sqrt();
    let rms = |cost: f64| peak * (2.0 * cost / m as f64).sqrt();
    let single_result = || {
        let p = &single.params;
        DoubleGaussian {
            components: [
                GaussComponent {
                    amplitude: p[0].abs() * scale,
                    center: p[1],
                    fwhm: p[2].exp(),
                },
                GaussComponent {
                    amplitude: 0.0,
                    center: p[1],
                    fwhm: p[2].exp(),
                },
            ],
            relative_phase: 0.0,
            residual_norm: rms(single.cost),
            converged: single.converged,
        }
    };
    let pair = match best {
        Some(b) if b.converged && b.cost < 0.5 * single.cost => b,
        _ => {
            return if single.converged {
                Ok(single_result())
            } else {
                Err(ObservableError::NonConvergence("gaussian fit did not converge".into()))
            }
        }
    };
    let p = &pair.params;
    let mut psi = p[6];
    let mut comp = [(p[0], p[1], p[2].exp()), (p[3], p[4], p[5].exp())];
    for c in comp.iter_mut() {
        if c.0 < 0.0 {
            c.0 = -c.0;
            psi += PI;
        }
    }
    if comp[0].1 > comp[1].1 {
        comp.swap(0, 1);
    }
    let to = |c: (f64, f64, f64)| GaussComponent {
        amplitude: c.0 * scale,
        center: c.1,
        fwhm: c.2,
    };
    Ok(DoubleGaussian {
        components: [to(comp[0]), to(comp[1])],
        relative_phase: psi.cos().clamp(-1.0, 1.0).acos(),
        residual_norm: rms(pair.cost),
        converged: true,
    })
}
