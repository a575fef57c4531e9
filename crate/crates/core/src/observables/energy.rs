use serde::{Deserialize, Serialize};

use super::{EchoTrace, ObservableError};

/// Integration window, µs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub start: f64,
    pub end: f64,
}

impl Window {
    pub fn new(start: f64, end: f64) -> Self {
        Self { start, end }
    }

    pub fn centered(center: f64, half: f64) -> Self {
        Self::new(center - half, center + half)
    }

    pub fn width(&self) -> f64 {
        self.end - self.start
    }

    fn check(&self, trace: &EchoTrace) -> Result<(), ObservableError> {
        if !(self.end > self.start) || trace.is_empty() {
            return Err(ObservableError::EmptyWindow(self.start, self.end));
        }
        let slack = 1e-9 * trace.dt().abs().max(1e-12);
        if self.start < trace.t0() - slack || self.end > trace.t_end() + slack {
            return Err(ObservableError::WindowOutside {
                start: self.start,
                end: self.end,
                t0: trace.t0(),
                t1: trace.t_end(),
            });
        }
        Ok(())
    }
}

/// Exact integral of the linear interpolant of `values` over the window.
pub fn energy_of(trace: &EchoTrace, values: &[f64], window: Window) -> Result<f64, ObservableError> {
    window.check(trace)?;
    if values.len() != trace.len() {
        return Err(ObservableError::GridMismatch(format!(
            "{} values for a trace of {} samples",
            values.len(),
            trace.len()
        )));
    }
    if trace.len() == 1 {
        return Ok(0.0);
    }
    let (a, b) = (window.start, window.end);
    let first = (((a - trace.t0()) / trace.dt()).floor().max(0.0) as usize).min(trace.len() - 2);
    let mut total = 0.0;
    for k in first..trace.len() - 1 {
        let (t0, t1) = (trace.time(k), trace.time(k + 1));
        if t0 >= b {
            break;
        }
        let lo = t0.max(a);
        let hi = t1.min(b);
        if hi <= lo {
            continue;
        }
        let at = |t: f64| values[k] + (values[k + 1] - values[k]) * (t - t0) / (t1 - t0);
        total += 0.5 * (at(lo) + at(hi)) * (hi - lo);
    }
    Ok(total)
}

/// Trapezoidal integral of the intensity over the window.
pub fn echo_energy(trace: &EchoTrace, window: Window) -> Result<f64, ObservableError> {
    energy_of(trace, trace.intensity(), window)
}

/// Largest intensity sample inside the window.
pub fn peak_intensity(trace: &EchoTrace, window: Window) -> Result<f64, ObservableError> {
    window.check(trace)?;
    let peak = trace
        .times()
        .iter()
        .zip(trace.intensity())
        .filter(|(t, _)| **t >= window.start && **t <= window.end)
        .map(|(_, v)| *v)
        .fold(0.0, f64::max);
    Ok(peak.max(trace.interpolate(trace.intensity(), window.start))
        .max(trace.interpolate(trace.intensity(), window.end)))
}

/// Mean intensity over the window.
pub fn mean_intensity(trace: &EchoTrace, window: Window) -> Result<f64, ObservableError> {
    Ok(echo_energy(trace, window)? / window.width())
}

/// Energy of the bias-corrected intensity and its block jackknife error.
///
/// The error is `NaN` when the trace has fewer than two blocks.
pub fn energy_jackknife(trace: &EchoTrace, window: Window) -> Result<(f64, f64), ObservableError> {
    let e = energy_of(trace, &trace.debiased_intensity(), window)?;
    let b = trace.blocks().len();
    if b < 2 {
        return Ok((e, f64::NAN));
    }
    let loo = (0..b)
        .map(|k| energy_of(trace, &trace.debiased_without_block(k), window))
        .collect::<Result<Vec<_>, _>>()?;
    let mean = loo.iter().sum::<f64>() / b as f64;
    let var = loo.iter().map(|x| (x - mean).powi(2)).sum::<f64>() * (b as f64 - 1.0) / b as f64;
    Ok((e, var.sqrt()))
}

/// `echo_energy / reference_energy`.
pub fn retrieval_efficiency(
    trace: &EchoTrace,
    window: Window,
    reference_energy: f64,
) -> Result<f64, ObservableError> {
    if !(reference_energy > 0.0) {
        return Err(ObservableError::NonPositiveReference(reference_energy));
    }
    Ok(echo_energy(trace, window)? / reference_energy)
}

/// Intensity FWHM of the echo for an inhomogeneous line of the given FWHM.
///
/// A Gaussian line of FWHM `Γ` gives a field envelope of duration
/// `4 ln2/(πΓ)` and an intensity FWHM smaller by `√2`.
pub fn echo_fwhm_us(line_fwhm_mhz: f64, lorentzian: bool) -> f64 {
    let ln2 = std::f64::consts::LN_2;
    let pi = std::f64::consts::PI;
    if lorentzian {
        ln2 / (pi * line_fwhm_mhz)
    } else {
        2.0 * std::f64::consts::SQRT_2 * ln2 / (pi * line_fwhm_mhz)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64 as C64;

    fn from_intensity(t0: f64, dt: f64, i: &[f64]) -> EchoTrace {
        EchoTrace::new(t0, dt, i.iter().map(|v| C64::new(v.sqrt(), 0.0)).collect())
    }

    #[test]
    fn zero_and_constant() {
        let z = from_intensity(0.0, 0.1, &[0.0; 21]);
        assert_eq!(echo_energy(&z, Window::new(0.3, 1.7)).unwrap(), 0.0);
        let c = from_intensity(0.0, 0.1, &[2.5; 21]);
        let e = echo_energy(&c, Window::new(0.33, 1.71)).unwrap();
        assert!((e - 2.5 * 1.38).abs() < 1e-12);
    }

    #[test]
    fn gaussian_integral() {
        let fwhm = 0.4;
        let dt = fwhm / 64.0;
        let s = fwhm / (8.0 * std::f64::consts::LN_2).sqrt();
        let n = (6.0 / dt) as usize;
        let i: Vec<f64> = (0..=n)
            .map(|k| (-(k as f64 * dt - 3.0).powi(2) / (2.0 * s * s)).exp())
            .collect();
        let t = from_intensity(0.0, dt, &i);
        let e = echo_energy(&t, Window::new(0.0, 6.0)).unwrap();
        let exact = s * (2.0 * std::f64::consts::PI).sqrt();
        assert!((e / exact - 1.0).abs() < 1e-3);
    }

    #[test]
    fn linear_and_additive() {
        let i: Vec<f64> = (0..50).map(|k| ((k as f64) * 0.37).sin().powi(2)).collect();
        let t = from_intensity(1.0, 0.05, &i);
        let j: Vec<f64> = i.iter().map(|v| 3.0 * v).collect();
        let t3 = from_intensity(1.0, 0.05, &j);
        let w = Window::new(1.12, 3.31);
        let e = echo_energy(&t, w).unwrap();
        assert!((echo_energy(&t3, w).unwrap() - 3.0 * e).abs() < 1e-12);
        let a = echo_energy(&t, Window::new(1.12, 2.077)).unwrap();
        let b = echo_energy(&t, Window::new(2.077, 3.31)).unwrap();
        assert!((a + b - e).abs() < 1e-12);
    }

    #[test]
    fn window_errors() {
        let t = from_intensity(0.0, 0.1, &[1.0; 11]);
        assert!(matches!(echo_energy(&t, Window::new(0.5, 0.5)), Err(ObservableError::EmptyWindow(..))));
        assert!(matches!(
            echo_energy(&t, Window::new(-0.5, 0.5)),
            Err(ObservableError::WindowOutside { .. })
        ));
        assert!(echo_energy(&t, Window::new(0.0, 1.0)).is_ok());
    }

    #[test]
    fn efficiency() {
        let t = from_intensity(0.0, 0.1, &[0.0, 1.0, 4.0, 1.0, 0.0]);
        let w = Window::new(0.0, 0.4);
        let r = echo_energy(&t, w).unwrap();
        assert_eq!(retrieval_efficiency(&t, w, r).unwrap(), 1.0);
        let z = from_intensity(0.0, 0.1, &[0.0; 5]);
        assert_eq!(retrieval_efficiency(&z, w, r).unwrap(), 0.0);
        assert!(retrieval_efficiency(&t, w, 0.0).is_err());
        assert!((peak_intensity(&t, w).unwrap() - 4.0).abs() < 1e-15);
    }

    #[test]
    fn echo_width() {
        assert!((echo_fwhm_us(1.5, false) - 0.416).abs() < 1e-3);
        assert!(echo_fwhm_us(1.5, true) < echo_fwhm_us(1.5, false));
    }
}
