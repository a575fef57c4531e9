use nalgebra::{Matrix3, SymmetricEigen};
use num_complex::Complex64;

use super::EngineError;

pub type C64 = Complex64;
pub type Mat3 = Matrix3<C64>;

/// Tolerances on the density-matrix invariants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub hermiticity: f64,
    pub trace: f64,
    /// Smallest eigenvalue allowed (negative slack).
    pub positivity: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            hermiticity: 1e-12,
            trace: 1e-10,
            positivity: -1e-9,
        }
    }
}

/// 3×3 density matrix over `{|i⟩, |t⟩, |e⟩}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityState {
    rho: Mat3,
}

impl DensityState {
    /// `|i⟩⟨i|`, the prepared state.
    pub fn ground() -> Self {
        let mut rho = Mat3::zeros();
        rho[(0, 0)] = C64::new(1.0, 0.0);
        Self { rho }
    }

    /// `|ψ⟩⟨ψ|` for a normalized amplitude vector.
    pub fn pure(psi: [C64; 3]) -> Self {
        let norm: f64 = psi.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        let v: Vec<C64> = psi.iter().map(|c| c / norm).collect();
        let rho = Mat3::from_fn(|j, k| v[j] * v[k].conj());
        Self { rho }
    }

    /// Equal superposition of two levels with relative phase `phase`:
    /// `(|a⟩ + e^{−iφ}|b⟩)/√2`, so that `ρ_ab = e^{iφ}/2`.
    pub fn superposition(a: usize, b: usize, phase: f64) -> Self {
        let mut psi = [C64::new(0.0, 0.0); 3];
        psi[a] = C64::new(1.0, 0.0);
        psi[b] += C64::from_polar(1.0, -phase);
        Self::pure(psi)
    }

    /// Wraps a matrix without checking it.
    pub fn from_matrix(rho: Mat3) -> Self {
        Self { rho }
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.rho
    }

    pub(crate) fn matrix_mut(&mut self) -> &mut Mat3 {
        &mut self.rho
    }

    pub fn get(&self, j: usize, k: usize) -> C64 {
        self.rho[(j, k)]
    }

    /// Optical coherence `ρ_ie`.
    pub fn optical(&self) -> C64 {
        self.rho[(0, 2)]
    }

    /// Spin coherence `ρ_it`.
    pub fn spin(&self) -> C64 {
        self.rho[(0, 1)]
    }

    pub fn trace(&self) -> C64 {
        self.rho.trace()
    }

    pub fn purity(&self) -> f64 {
        (self.rho * self.rho).trace().re
    }

    /// Replaces ρ by `(ρ + ρ†)/2`.
    pub fn hermitize(&mut self) {
        let a = self.rho.adjoint();
        self.rho = (self.rho + a) * C64::new(0.5, 0.0);
    }

    pub fn eigenvalues(&self) -> [f64; 3] {
        let e = SymmetricEigen::new(self.rho).eigenvalues;
        [e[0], e[1], e[2]]
    }

    /// Checks Hermiticity, unit trace and positivity.
    pub fn check(&self, tol: &Tolerances, t: f64) -> Result<(), EngineError> {
        let herm = (self.rho - self.rho.adjoint()).iter().map(|c| c.norm()).fold(0.0, f64::max);
        if !(herm <= tol.hermiticity) {
            return Err(EngineError::Invariant {
                what: format!("hermiticity defect {herm:e}"),
                t,
            });
        }
        let tr = self.trace();
        if !((tr.re - 1.0).abs() <= tol.trace && tr.im.abs() <= tol.trace) {
            return Err(EngineError::Invariant {
                what: format!("trace {tr}"),
                t,
            });
        }
        let min = self.eigenvalues().into_iter().fold(f64::INFINITY, f64::min);
        if !(min >= tol.positivity) {
            return Err(EngineError::Invariant {
                what: format!("eigenvalue {min:e}"),
                t,
            });
        }
        Ok(())
    }
}
