//! Propagator and dissipator building blocks.

use std::f64::consts::TAU;

use super::state::{DensityState, Mat3, C64};
use crate::ensemble::IonRealization;
use crate::model::MaterialParams;
use crate::sequence::{Channel, Sequence};

/// Level pairs indexed like [`Channel::index`].
pub(crate) const PAIRS: [(usize, usize); 3] = [(0, 2), (1, 2), (0, 1)];

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Optical detuning of an ion, rad/µs.
pub(crate) fn optical_detuning(ion: &IonRealization) -> f64 {
    TAU * ion.optical_detuning_mhz
}

/// Spin detuning of an ion, rad/µs.
pub(crate) fn spin_detuning(ion: &IonRealization) -> f64 {
    TAU * 1e-3 * ion.spin_detuning_khz
}

pub(crate) fn channel_scale(ion: &IonRealization, ch: Channel) -> f64 {
    if ch.is_optical() {
        ion.optical_scale
    } else {
        ion.rf_scale
    }
}

/// Rotating-frame Hamiltonian at time `t`, rad/µs.
///
/// `bath` is the instantaneous spin-bath offset in rad/ms. Pulse chirps and
/// static carrier offsets enter through the time-dependent coupling phase.
pub fn hamiltonian_at(t: f64, ion: &IonRealization, seq: &Sequence, bath: f64) -> Mat3 {
    let mut h = Mat3::zeros();
    h[(1, 1)] = C64::new(spin_detuning(ion) + 1e-3 * bath, 0.0);
    h[(2, 2)] = C64::new(optical_detuning(ion), 0.0);
    for p in seq.pulses() {
        let rabi = p.rabi_at(t);
        if rabi == 0.0 {
            continue;
        }
        let (l, u) = p.channel.levels();
        let c = C64::from_polar(0.5 * rabi * channel_scale(ion, p.channel), p.phase_at(t));
        h[(l, u)] += c;
        h[(u, l)] += c.conj();
    }
    h
}

/// `exp(−iHΔt)` for a diagonal `H` plus the couplings `c[pair]`.
pub(crate) fn propagator(diag: [f64; 3], c: [C64; 3], dt: f64) -> Mat3 {
    let mut count = 0;
    let mut last = 0;
    for (k, ck) in c.iter().enumerate() {
        if *ck != ZERO {
            count += 1;
            last = k;
        }
    }
    match count {
        0 => {
            let mut u = Mat3::zeros();
            for k in 0..3 {
                u[(k, k)] = C64::from_polar(1.0, -diag[k] * dt);
            }
            u
        }
        1 => {
            let (p, q) = PAIRS[last];
            two_level(diag, p, q, 3 - p - q, c[last], dt)
        }
        _ => {
            let u = expm_taylor(diag, c, dt);
            let g = C64::from_polar(1.0, -dt * (diag[0] + diag[1] + diag[2]) / 3.0);
            Mat3::from_fn(|j, k| g * u[j][k])
        }
    }
}

type Arr3 = [[C64; 3]; 3];

fn mul3(a: &Arr3, b: &Arr3) -> Arr3 {
    std::array::from_fn(|i| {
        std::array::from_fn(|j| a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j])
    })
}

/// Traceless part of `exp(−iHΔt)` by a degree-12 Taylor polynomial with
/// scaling and squaring.
fn expm_taylor(diag: [f64; 3], c: [C64; 3], dt: f64) -> Arr3 {
    let mu = (diag[0] + diag[1] + diag[2]) / 3.0;
    let mut a = [[ZERO; 3]; 3];
    for k in 0..3 {
        a[k][k] = C64::new(0.0, -(diag[k] - mu) * dt);
    }
    for (k, &(p, q)) in PAIRS.iter().enumerate() {
        a[p][q] = C64::new(0.0, -dt) * c[k];
        a[q][p] = C64::new(0.0, -dt) * c[k].conj();
    }
    let norm = a
        .iter()
        .map(|row| row.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max);
    let squarings = if norm > 0.25 { (norm / 0.25).log2().ceil() as i32 } else { 0 };
    let scale = 0.5f64.powi(squarings);
    for row in a.iter_mut() {
        for z in row.iter_mut() {
            *z *= scale;
        }
    }
    let a2 = mul3(&a, &a);
    let a3 = mul3(&a2, &a);
    let a4 = mul3(&a2, &a2);
    let mut fact = [1.0; 13];
    for k in 1..13 {
        fact[k] = fact[k - 1] / k as f64;
    }
    let combo = |k: usize, top: f64| -> Arr3 {
        std::array::from_fn(|i| {
            std::array::from_fn(|j| {
                let mut z = fact[k + 1] * a[i][j] + fact[k + 2] * a2[i][j] + fact[k + 3] * a3[i][j]
                    + top * a4[i][j];
                if i == j {
                    z += fact[k];
                }
                z
            })
        })
    };
    let b2 = combo(8, fact[12]);
    let mut p = mul3(&a4, &b2);
    let b1 = combo(4, 0.0);
    for i in 0..3 {
        for j in 0..3 {
            p[i][j] += b1[i][j];
        }
    }
    p = mul3(&a4, &p);
    let b0 = combo(0, 0.0);
    for i in 0..3 {
        for j in 0..3 {
            p[i][j] += b0[i][j];
        }
    }
    for _ in 0..squarings {
        p = mul3(&p, &p);
    }
    p
}

/// Closed-form propagator with a single coupled pair `(p, q)`.
fn two_level(diag: [f64; 3], p: usize, q: usize, r: usize, c: C64, dt: f64) -> Mat3 {
    let m = 0.5 * (diag[p] + diag[q]);
    let d = 0.5 * (diag[p] - diag[q]);
    let w = (d * d + c.norm_sqr()).sqrt();
    let (sw, cw) = (w * dt).sin_cos();
    let s = if w * dt > 1e-300 { sw / w } else { dt };
    let g = C64::from_polar(1.0, -m * dt);
    let mi = C64::new(0.0, -1.0);
    let mut u = Mat3::zeros();
    u[(p, p)] = g * C64::new(cw, -s * d);
    u[(q, q)] = g * C64::new(cw, s * d);
    u[(p, q)] = g * mi * s * c;
    u[(q, p)] = g * mi * s * c.conj();
    u[(r, r)] = C64::from_polar(1.0, -diag[r] * dt);
    u
}

/// `ρ ← UρU†` with `U` from [`propagator`], exploiting a single coupled pair.
pub(crate) fn evolve_in_place(rho: &mut Mat3, diag: [f64; 3], c: [C64; 3], dt: f64) {
    let mut count = 0;
    let mut last = 0;
    for (k, ck) in c.iter().enumerate() {
        if *ck != ZERO {
            count += 1;
            last = k;
        }
    }
    match count {
        0 => {
            let ph = diag.map(|x| -x * dt);
            for j in 0..3 {
                for k in j + 1..3 {
                    let z = rho[(j, k)] * C64::from_polar(1.0, ph[j] - ph[k]);
                    rho[(j, k)] = z;
                    rho[(k, j)] = z.conj();
                }
            }
        }
        1 => {
            let (p, q) = PAIRS[last];
            let r = 3 - p - q;
            let m = 0.5 * (diag[p] + diag[q]);
            let d = 0.5 * (diag[p] - diag[q]);
            let w = (d * d + c[last].norm_sqr()).sqrt();
            let (sw, cw) = (w * dt).sin_cos();
            let s = if w * dt > 1e-300 { sw / w } else { dt };
            let mi = C64::new(0.0, -1.0);
            // block without the common phase e^{−imΔt}, which cancels inside it
            let b = [
                [C64::new(cw, -s * d), mi * s * c[last]],
                [mi * s * c[last].conj(), C64::new(cw, s * d)],
            ];
            let idx = [p, q];
            let x = [[rho[(p, p)], rho[(p, q)]], [rho[(q, p)], rho[(q, q)]]];
            let mut bx = [[ZERO; 2]; 2];
            for i in 0..2 {
                for j in 0..2 {
                    bx[i][j] = b[i][0] * x[0][j] + b[i][1] * x[1][j];
                }
            }
            for i in 0..2 {
                for j in i..2 {
                    let z = bx[i][0] * b[j][0].conj() + bx[i][1] * b[j][1].conj();
                    rho[(idx[i], idx[j])] = z;
                    rho[(idx[j], idx[i])] = z.conj();
                }
            }
            let rel = C64::from_polar(1.0, (diag[r] - m) * dt);
            let col = [rho[(p, r)], rho[(q, r)]];
            for i in 0..2 {
                let z = (b[i][0] * col[0] + b[i][1] * col[1]) * rel;
                rho[(idx[i], r)] = z;
                rho[(r, idx[i])] = z.conj();
            }
            let rr = rho[(r, r)].re;
            rho[(r, r)] = C64::new(rr, 0.0);
            for k in 0..3 {
                rho[(k, k)].im = 0.0;
            }
        }
        _ => {
            // the global phase of the propagator cancels
            let u = expm_taylor(diag, c, dt);
            let x: Arr3 = std::array::from_fn(|i| std::array::from_fn(|j| rho[(i, j)]));
            let ux = mul3(&u, &x);
            for i in 0..3 {
                for j in i..3 {
                    let z = ux[i][0] * u[j][0].conj()
                        + ux[i][1] * u[j][1].conj()
                        + ux[i][2] * u[j][2].conj();
                    rho[(i, j)] = z;
                    rho[(j, i)] = z.conj();
                }
                rho[(i, i)].im = 0.0;
            }
        }
    }
}

/// `ρ_jk ← ρ_jk·d_j·conj(d_k)`, i.e. `ρ ← DρD†` for diagonal `D`.
pub(crate) fn rotate_diagonal(rho: &mut Mat3, d: &[C64; 3]) {
    for j in 0..3 {
        for k in j + 1..3 {
            let z = rho[(j, k)] * d[j] * d[k].conj();
            rho[(j, k)] = z;
            rho[(k, j)] = z.conj();
        }
    }
}

/// Dispatches a Hermitian matrix to the matching propagator.
pub(crate) fn unitary(h: &Mat3, dt: f64) -> Mat3 {
    let diag = [h[(0, 0)].re, h[(1, 1)].re, h[(2, 2)].re];
    let c = [h[(0, 2)], h[(1, 2)], h[(0, 1)]];
    propagator(diag, c, dt)
}

/// `ρ ← UρU†`.
pub(crate) fn conjugate(rho: &mut Mat3, u: &Mat3) {
    *rho = u * *rho * u.adjoint();
}

/// `ρ ← exp(−iHΔt) ρ exp(iHΔt)`.
pub fn step_unitary(state: &DensityState, h: &Mat3, dt: f64) -> DensityState {
    let u = unitary(h, dt);
    let mut s = *state;
    conjugate(s.matrix_mut(), &u);
    s.hermitize();
    s
}

/// Non-unitary channels acting between and during pulses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Dissipation {
    /// Optical coherence decay rate, 1/µs.
    pub optical_rate: f64,
    /// Excited population decay rate, 1/µs.
    pub population_rate: f64,
    /// Spin-floor dephasing rate, 1/µs.
    pub spin_rate: f64,
}

impl Dissipation {
    pub fn new(mat: &MaterialParams, optical: bool, spin_floor_us: Option<f64>) -> Self {
        Self {
            optical_rate: if optical { 1.0 / mat.t2_opt_us } else { 0.0 },
            population_rate: mat.t1_us.map_or(0.0, |t1| 1.0 / t1),
            spin_rate: spin_floor_us.map_or(0.0, |t| 1.0 / t),
        }
    }

    pub fn is_none(&self) -> bool {
        self.optical_rate == 0.0 && self.population_rate == 0.0 && self.spin_rate == 0.0
    }

    /// Exact action over `dt` of the combined channel.
    pub fn apply(&self, rho: &mut Mat3, dt: f64) {
        if self.is_none() || dt == 0.0 {
            return;
        }
        self.factors(dt).apply(rho);
    }

    pub fn factors(&self, dt: f64) -> DissFactors {
        DissFactors {
            dt,
            opt: (-(self.optical_rate + 0.5 * self.population_rate) * dt).exp(),
            spin: (-self.spin_rate * dt).exp(),
            keep: (self.population_rate > 0.0).then(|| (-self.population_rate * dt).exp()),
        }
    }
}

/// Decay factors of [`Dissipation`] for one `dt`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct DissFactors {
    pub dt: f64,
    opt: f64,
    spin: f64,
    keep: Option<f64>,
}

impl DissFactors {
    pub fn apply(&self, rho: &mut Mat3) {
        let (opt, spin) = (self.opt, self.spin);
        if let Some(keep) = self.keep {
            let lost = rho[(2, 2)].re * (1.0 - keep);
            rho[(2, 2)] *= keep;
            rho[(0, 0)] += C64::new(0.5 * lost, 0.0);
            rho[(1, 1)] += C64::new(0.5 * lost, 0.0);
        }
        let f02 = opt;
        let f12 = opt * spin;
        let f01 = spin;
        rho[(0, 2)] *= f02;
        rho[(2, 0)] *= f02;
        rho[(1, 2)] *= f12;
        rho[(2, 1)] *= f12;
        rho[(0, 1)] *= f01;
        rho[(1, 0)] *= f01;
    }
}

/// Optical dephasing (and excited-state decay when enabled) over `dt`.
///
/// The spin coherence `ρ_it` is left untouched.
pub fn apply_dephasing(state: &DensityState, dt: f64, mat: &MaterialParams) -> DensityState {
    let mut s = *state;
    Dissipation::new(mat, true, None).apply(s.matrix_mut(), dt);
    s
}

/// Free evolution over `dt` with detunings `(δ + b, Δ)` and bath phase
/// `phi` (rad) already integrated.
pub(crate) fn free_phase(rho: &mut Mat3, spin_phase: f64, optical_phase: f64) {
    // U = diag(1, e^{-iφ_t}, e^{-iφ_e}); ρ_jk picks e^{-i(φ_j − φ_k)}
    let ph = [0.0, spin_phase, optical_phase];
    for j in 0..3 {
        for k in 0..3 {
            if j != k {
                rho[(j, k)] *= C64::from_polar(1.0, ph[k] - ph[j]);
            }
        }
    }
}
