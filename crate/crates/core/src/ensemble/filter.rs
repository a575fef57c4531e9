//! Closed-form phase variance of a ±1 switching function under OU noise.
//!
//! Pulses are treated as instantaneous sign flips. Used to predict decay
//! rates, to seed the simulation-based calibration and to pick `τ_c`.

/// `∫∫ y(t) y(s) e^{−|t−s|/τ_c} dt ds` over `[0, total]`, times `σ²`.
///
/// `flips` are the sign-change times; `sigma` is in rad/µs, the result in
/// rad².
pub fn phase_variance(flips: &[f64], total: f64, tau_c: f64, sigma: f64) -> f64 {
    let mut edges = Vec::with_capacity(flips.len() + 2);
    edges.push(0.0);
    edges.extend_from_slice(flips);
    edges.push(total);
    let segs: Vec<(f64, f64, f64)> = edges
        .windows(2)
        .enumerate()
        .map(|(k, w)| (w[0], w[1], if k % 2 == 0 { 1.0 } else { -1.0 }))
        .collect();

    let tc = tau_c;
    let mut v = 0.0;
    for (j, &(a, b, ya)) in segs.iter().enumerate() {
        let l = b - a;
        v += 2.0 * tc * (l + tc * (-l / tc).exp_m1());
        for &(c, d, yc) in &segs[j + 1..] {
            // c >= b for later segments
            let g = tc
                * tc
                * ((-(c - b) / tc).exp() - (-(d - b) / tc).exp() - (-(c - a) / tc).exp()
                    + (-(d - a) / tc).exp());
            v += 2.0 * ya * yc * g;
        }
    }
    sigma * sigma * v
}

/// Echo-intensity decay `e^{−Var}` for each storage length.
pub fn intensity_decay(
    flips_for: impl Fn(f64) -> Vec<f64>,
    storage: &[f64],
    tau_c: f64,
    sigma: f64,
) -> Vec<f64> {
    storage
        .iter()
        .map(|&d| (-phase_variance(&flips_for(d), d, tau_c, sigma)).exp())
        .collect()
}

/// `T₂,eff` (µs) from a log-linear fit of `ln I = c − 2T/T₂,eff`.
pub fn t2eff_from_variances(storage: &[f64], variances: &[f64]) -> f64 {
    let n = storage.len() as f64;
    let mx = storage.iter().sum::<f64>() / n;
    let my = variances.iter().sum::<f64>() / n;
    let sxy: f64 = storage
        .iter()
        .zip(variances)
        .map(|(x, y)| (x - mx) * (y - my))
        .sum();
    let sxx: f64 = storage.iter().map(|x| (x - mx) * (x - mx)).sum();
    // ln I = −Var, so the slope of Var is 2/T₂,eff
    2.0 * sxx / sxy
}

/// Flip times of a Hahn pair over spin time `d`.
pub fn two_pulse_flips(d: f64) -> Vec<f64> {
    vec![0.25 * d, 0.75 * d]
}

/// Flip times of CPMG (and of KDD, which shares the spacing) over `d`.
pub fn equally_spaced_flips(d: f64, tau: f64) -> Vec<f64> {
    let n = (d / tau).round() as usize;
    (0..n).map(|k| (k as f64 + 0.5) * tau).collect()
}

/// Analytic `T₂,eff` (µs) of a sequence for a given bath.
pub fn analytic_t2eff(
    flips_for: impl Fn(f64) -> Vec<f64>,
    storage: &[f64],
    tau_c: f64,
    sigma: f64,
) -> f64 {
    let v: Vec<f64> = storage
        .iter()
        .map(|&d| phase_variance(&flips_for(d), d, tau_c, sigma))
        .collect();
    t2eff_from_variances(storage, &v)
}

/// Bath rms (rad/µs) that gives the two-pulse grid a `T₂,eff` of `target`.
pub fn sigma_for_two_pulse_t2(target: f64, storage: &[f64], tau_c: f64) -> f64 {
    let unit = analytic_t2eff(two_pulse_flips, storage, tau_c, 1.0);
    (unit / target).sqrt()
}

/// `T₂,eff(CPMG) / T₂,eff(two-pulse)`, independent of `σ`.
pub fn cpmg_gain(two_grid: &[f64], cpmg_grid: &[f64], tau: f64, tau_c: f64) -> f64 {
    let two = analytic_t2eff(two_pulse_flips, two_grid, tau_c, 1.0);
    let cpmg = analytic_t2eff(|d| equally_spaced_flips(d, tau), cpmg_grid, tau_c, 1.0);
    cpmg / two
}

/// Correlation time whose CPMG gain equals `ratio`, by bisection in `ln τ_c`.
pub fn tau_c_for_gain(
    ratio: f64,
    two_grid: &[f64],
    cpmg_grid: &[f64],
    tau: f64,
    bounds: (f64, f64),
) -> Option<f64> {
    let f = |tc: f64| cpmg_gain(two_grid, cpmg_grid, tau, tc).ln() - ratio.ln();
    let (mut lo, mut hi) = (bounds.0.ln(), bounds.1.ln());
    let (flo, fhi) = (f(lo.exp()), f(hi.exp()));
    if flo.signum() == fhi.signum() {
        return None;
    }
    let rising = fhi > flo;
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid.exp());
        if (fm > 0.0) == rising {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some((0.5 * (lo + hi)).exp())
}
