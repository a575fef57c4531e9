//! Exact discretization of the Ornstein–Uhlenbeck bath.
//!
//! Bath values are in rad/ms and times in µs, so the integral of the bath
//! over a step is reported after the `1e-3` conversion to radians.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Bath parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OUParams {
    /// Correlation time, µs.
    pub tau_c_us: f64,
    /// Stationary rms, rad/ms.
    pub sigma_rad_per_ms: f64,
    pub enabled: bool,
}

impl OUParams {
    pub fn new(tau_c_us: f64, sigma_rad_per_ms: f64) -> Self {
        Self {
            tau_c_us,
            sigma_rad_per_ms,
            enabled: true,
        }
    }

    pub fn disabled() -> Self {
        Self {
            tau_c_us: 1.0,
            sigma_rad_per_ms: 0.0,
            enabled: false,
        }
    }

    pub fn is_active(&self) -> bool {
        self.enabled && self.sigma_rad_per_ms > 0.0
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.tau_c_us > 0.0 && self.tau_c_us.is_finite()) {
            return Err(format!("tau_c must be positive, got {}", self.tau_c_us));
        }
        if !(self.sigma_rad_per_ms >= 0.0 && self.sigma_rad_per_ms.is_finite()) {
            return Err(format!("sigma_b must be non-negative, got {}", self.sigma_rad_per_ms));
        }
        Ok(())
    }
}

/// Conditional moments of `(b(t+Δt), ∫ b)` given `b(t)`.
///
/// The integral is in (rad/ms)·µs, i.e. before the radian conversion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OuMoments {
    /// `e^{−Δt/τ_c}`.
    pub decay: f64,
    /// Mean of the integral per unit of the current value, `τ_c(1 − a)`.
    pub mean_integral: f64,
    pub var_value: f64,
    pub var_integral: f64,
    pub covariance: f64,
}

/// `2x − 3 + 4e^{−x} − e^{−2x}` without cancellation at small `x`.
fn integral_shape(x: f64) -> f64 {
    if x < 0.05 {
        let x2 = x * x;
        let x3 = x2 * x;
        x3 * (2.0 / 3.0 - x / 2.0 + 7.0 * x2 / 30.0 - x3 / 12.0 + 31.0 * x2 * x2 / 1260.0
            - x2 * x3 / 160.0)
    } else {
        2.0 * x - 3.0 + 4.0 * (-x).exp() - (-2.0 * x).exp()
    }
}

pub fn ou_moments(params: &OUParams, dt: f64) -> OuMoments {
    let tau = params.tau_c_us;
    let s2 = params.sigma_rad_per_ms * params.sigma_rad_per_ms;
    let x = dt / tau;
    let a = (-x).exp();
    let one_minus_a = -(-x).exp_m1();
    OuMoments {
        decay: a,
        mean_integral: tau * one_minus_a,
        var_value: s2 * one_minus_a * (1.0 + a),
        var_integral: s2 * tau * tau * integral_shape(x),
        covariance: s2 * tau * one_minus_a * one_minus_a,
    }
}

/// One exact OU update over `dt` µs. Consumes one normal draw.
pub fn ou_step<R: Rng + ?Sized>(params: &OUParams, current: f64, dt: f64, rng: &mut R) -> f64 {
    let x = dt / params.tau_c_us;
    let a = (-x).exp();
    let sd = params.sigma_rad_per_ms * (-(-2.0 * x).exp_m1()).sqrt();
    let xi: f64 = rng.sample(StandardNormal);
    current * a + sd * xi
}

/// Joint exact draw of the next value (rad/ms) and the accumulated phase
/// (rad). Consumes two normal draws.
pub fn ou_phase_step<R: Rng + ?Sized>(
    params: &OUParams,
    current: f64,
    dt: f64,
    rng: &mut R,
) -> (f64, f64) {
    OuPhaseKernel::new(params, dt).draw(current, rng)
}

/// Cholesky factors of the joint value/integral update for a fixed `dt`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OuPhaseKernel {
    pub dt: f64,
    decay: f64,
    mean_integral: f64,
    l11: f64,
    l21: f64,
    l22: f64,
}

impl OuPhaseKernel {
    pub fn new(params: &OUParams, dt: f64) -> Self {
        let m = ou_moments(params, dt);
        let l11 = m.var_value.sqrt();
        let (l21, l22) = if l11 > 0.0 {
            let l21 = m.covariance / l11;
            (l21, (m.var_integral - l21 * l21).max(0.0).sqrt())
        } else {
            (0.0, m.var_integral.max(0.0).sqrt())
        };
        Self {
            dt,
            decay: m.decay,
            mean_integral: m.mean_integral,
            l11,
            l21,
            l22,
        }
    }

    /// Same as [`ou_phase_step`] with the factors precomputed.
    pub fn draw<R: Rng + ?Sized>(&self, current: f64, rng: &mut R) -> (f64, f64) {
        let xi1: f64 = rng.sample(StandardNormal);
        let xi2: f64 = rng.sample(StandardNormal);
        let next = self.decay * current + self.l11 * xi1;
        let integral = current * self.mean_integral + self.l21 * xi1 + self.l22 * xi2;
        (next, 1e-3 * integral)
    }
}

/// Stationary draw `N(0, σ_b²)`.
pub fn ou_stationary<R: Rng + ?Sized>(params: &OUParams, rng: &mut R) -> f64 {
    let xi: f64 = rng.sample(StandardNormal);
    params.sigma_rad_per_ms * xi
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn mean_var(x: &[f64]) -> (f64, f64) {
        let n = x.len() as f64;
        let m = x.iter().sum::<f64>() / n;
        let v = x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0);
        (m, v)
    }

    #[test]
    fn noiseless_contraction() {
        let p = OUParams::new(10.0, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let next = ou_step(&p, 3.0, 5.0, &mut rng);
        assert_eq!(next, 3.0 * (-0.5f64).exp());
        let (b, phase) = ou_phase_step(&p, 3.0, 5.0, &mut rng);
        assert_eq!(b, 3.0 * (-0.5f64).exp());
        let want = 1e-3 * 3.0 * 10.0 * -(-0.5f64).exp_m1();
        assert!((phase - want).abs() <= 1e-15 * want.abs());
    }

    #[test]
    fn small_step_phase_is_value_times_dt() {
        let p = OUParams::new(10.0, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for dt in [1e-2, 1e-3, 1e-4] {
            let (_, phase) = ou_phase_step(&p, 2.0, dt, &mut rng);
            let err = (phase - 1e-3 * 2.0 * dt).abs();
            assert!(err <= 1e-3 * 2.0 * dt * dt / 10.0);
        }
    }

    #[test]
    fn long_step_forgets_initial_value() {
        let p = OUParams::new(10.0, 4.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let xs: Vec<f64> = (0..100_000).map(|_| ou_step(&p, 50.0, 1e4, &mut rng)).collect();
        let (m, v) = mean_var(&xs);
        assert!(m.abs() < 0.05);
        assert!((v / 16.0 - 1.0).abs() < 0.02);
    }

    #[test]
    fn lag_one_autocorrelation() {
        let p = OUParams::new(10.0, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut b = ou_stationary(&p, &mut rng);
        let mut xs = Vec::with_capacity(1_000_000);
        for _ in 0..1_000_000 {
            b = ou_step(&p, b, 1.0, &mut rng);
            xs.push(b);
        }
        let (m, v) = mean_var(&xs);
        let c: f64 = xs.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum::<f64>()
            / (xs.len() - 1) as f64;
        let rho = c / v;
        assert!((rho / (-0.1f64).exp() - 1.0).abs() < 0.01, "rho = {rho}");
    }

    #[test]
    fn step_partition_is_exact() {
        let p = OUParams::new(10.0, 2.0);
        let mut r1 = ChaCha8Rng::seed_from_u64(4);
        let mut r2 = ChaCha8Rng::seed_from_u64(5);
        let n = 100_000;
        let whole: Vec<f64> = (0..n).map(|_| ou_step(&p, 1.5, 7.0, &mut r1)).collect();
        let parts: Vec<f64> = (0..n)
            .map(|_| {
                let mut b = 1.5;
                for _ in 0..7 {
                    b = ou_step(&p, b, 1.0, &mut r2);
                }
                b
            })
            .collect();
        let (m1, v1) = mean_var(&whole);
        let (m2, v2) = mean_var(&parts);
        assert!((m1 - m2).abs() < 0.02 * m1.abs().max(v1.sqrt()));
        assert!((v1 / v2 - 1.0).abs() < 0.02);
    }

    #[test]
    fn series_matches_direct_formula() {
        for x in [0.049_f64, 0.03, 0.01] {
            let direct = 2.0 * x - 3.0 + 4.0 * (-x).exp() - (-2.0 * x).exp();
            assert!((integral_shape(x) / direct - 1.0).abs() < 1e-8);
        }
        let x: f64 = 0.05;
        let direct = 2.0 * x - 3.0 + 4.0 * (-x).exp() - (-2.0 * x).exp();
        let below = integral_shape(x - 1e-12);
        assert!((below / direct - 1.0).abs() < 1e-8);
    }

    #[test]
    fn joint_law_matches_euler_maruyama() {
        // brute force: fine Euler–Maruyama integration of the same SDE
        let p = OUParams::new(10.0, 3.0);
        let dt = 6.0;
        let b0 = 2.0;
        let n = 100_000;
        let mut r1 = ChaCha8Rng::seed_from_u64(6);
        let mut r2 = ChaCha8Rng::seed_from_u64(7);
        let mut exact_b = Vec::with_capacity(n);
        let mut exact_i = Vec::with_capacity(n);
        for _ in 0..n {
            let (b, i) = ou_phase_step(&p, b0, dt, &mut r1);
            exact_b.push(b);
            exact_i.push(i);
        }
        let h = p.tau_c_us / 200.0;
        let steps = (dt / h).round() as usize;
        let diff = p.sigma_rad_per_ms * (2.0 * h / p.tau_c_us).sqrt();
        let mut em_b = Vec::with_capacity(n);
        let mut em_i = Vec::with_capacity(n);
        for _ in 0..n {
            let mut b = b0;
            let mut i = 0.0;
            for _ in 0..steps {
                let xi: f64 = r2.sample(StandardNormal);
                let nb = b - b * h / p.tau_c_us + diff * xi;
                i += 0.5 * (b + nb) * h;
                b = nb;
            }
            em_b.push(b);
            em_i.push(1e-3 * i);
        }
        let (mb1, vb1) = mean_var(&exact_b);
        let (mb2, vb2) = mean_var(&em_b);
        let (mi1, vi1) = mean_var(&exact_i);
        let (mi2, vi2) = mean_var(&em_i);
        assert!((mb1 / mb2 - 1.0).abs() < 0.02, "{mb1} {mb2}");
        assert!((vb1 / vb2 - 1.0).abs() < 0.02, "{vb1} {vb2}");
        assert!((mi1 / mi2 - 1.0).abs() < 0.02, "{mi1} {mi2}");
        assert!((vi1 / vi2 - 1.0).abs() < 0.02, "{vi1} {vi2}");
        let m = ou_moments(&p, dt);
        assert!((mi1 / (1e-3 * b0 * m.mean_integral) - 1.0).abs() < 0.02);
    }
}
