//! Density-matrix propagation of single ions and of the ensemble.
//!
//! Everything is expressed in one rotating frame: the `(i)-(e)` reference
//! is the laser, the `(t)-(e)` reference is the laser plus the ground
//! splitting and the `(i)-(t)` reference is the RF carrier at the
//! splitting. Chirps and static carrier offsets live in the pulse phases.
//!
//! During a pulse each step moves into a frame that co-rotates with the
//! drive phases and applies the exponential of the fourth-order Magnus
//! Hamiltonian built from the two Gauss points of the step. Optical
//! dephasing is split symmetrically around the unitary. Gaps between
//! pulses are solved in closed form.

mod kernel;
mod plan;
mod run;
mod state;
mod transfer;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ensemble::OUParams;
use crate::model::LevelScheme;
use crate::sequence::SequenceError;

pub use kernel::{apply_dephasing, hamiltonian_at, step_unitary};
pub use run::{
    evolve_gap, evolve_pulse, run_ensemble, run_ion, BathStream, Simulation, BLOCK_SIZE,
};
pub use state::{DensityState, Mat3, Tolerances, C64};
pub use transfer::{calibrate_transfer, transfer_efficiency, TransferCalibration};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("state invariant violated at t = {t} us: {what}")]
    Invariant { what: String, t: f64 },
    #[error("time step {step} us exceeds {limit} us for the pulse at {center} us")]
    StepTooLarge { step: f64, limit: f64, center: f64 },
    #[error("record window [{start}, {end}] us lies outside the sequence (duration {duration} us)")]
    WindowOutside { start: f64, end: f64, duration: f64 },
    #[error("invalid propagation config: {0}")]
    Config(String),
    #[error("rotating frame is not closed: {0}")]
    Frame(String),
    #[error("ensemble is empty")]
    EmptyEnsemble,
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error(transparent)]
    Sequence(#[from] SequenceError),
}

/// Carrier references of the three transitions, MHz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameConvention {
    pub ie_mhz: f64,
    pub te_mhz: f64,
    pub it_mhz: f64,
}

impl FrameConvention {
    /// Laser on the `(i)-(e)` line, laser plus splitting on `(t)-(e)`.
    pub fn from_scheme(scheme: &LevelScheme) -> Self {
        Self {
            ie_mhz: scheme.ie_offset_mhz,
            te_mhz: scheme.ie_offset_mhz + scheme.splitting_mhz,
            it_mhz: scheme.splitting_mhz,
        }
    }

    /// Loop closure up to floating-point rounding of the sum.
    pub fn is_closed(&self) -> bool {
        let scale = self.te_mhz.abs().max(self.ie_mhz.abs()).max(self.it_mhz.abs());
        (self.te_mhz - self.ie_mhz - self.it_mhz).abs() <= 4.0 * f64::EPSILON * scale
    }

    pub fn check(&self) -> Result<(), EngineError> {
        if self.is_closed() {
            Ok(())
        } else {
            Err(EngineError::Frame(format!(
                "f(t-e) - f(i-e) = {} MHz but f(i-t) = {} MHz",
                self.te_mhz - self.ie_mhz,
                self.it_mhz
            )))
        }
    }
}

/// Time step used inside pulses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum StepPolicy {
    /// Pulse width divided by this number.
    Fraction(f64),
    /// Fixed step in ns.
    FixedNs(f64),
}

impl StepPolicy {
    /// Step for a pulse of the given width, µs.
    pub fn step_for(&self, width: f64) -> f64 {
        match *self {
            StepPolicy::Fraction(f) => width / f,
            StepPolicy::FixedNs(ns) => 1e-3 * ns,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum GapMode {
    /// Closed-form phases with the exact joint bath draw.
    Analytic,
    /// Repeated diagonal steps of the given length, µs.
    Stepped { step_us: f64 },
}

/// Uniformly sampled record window, µs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordWindow {
    pub start: f64,
    pub end: f64,
    pub dt: f64,
}

impl RecordWindow {
    pub fn new(start: f64, end: f64, dt: f64) -> Self {
        Self { start, end, dt }
    }

    /// Window of half-width `half` around `center`.
    pub fn around(center: f64, half: f64, dt: f64) -> Self {
        let n = (half / dt).ceil();
        Self::new(center - n * dt, center + n * dt, dt)
    }

    pub fn len(&self) -> usize {
        ((self.end - self.start) / self.dt + 1e-9).floor() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(move |k| self.start + k as f64 * self.dt)
    }
}

/// Numerical settings of a propagation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropagationConfig {
    #[serde(default = "default_step")]
    pub step: StepPolicy,
    #[serde(default = "default_gap")]
    pub gap: GapMode,
    #[serde(default)]
    pub windows: Vec<RecordWindow>,
    /// Check the state invariants after every operation.
    #[serde(default)]
    pub check_invariants: bool,
    #[serde(default = "yes")]
    pub optical_dephasing: bool,
    /// Optional exponential spin dephasing, µs.
    #[serde(default)]
    pub spin_t2_floor_us: Option<f64>,
    #[serde(default = "OUParams::disabled")]
    pub bath: OUParams,
    #[serde(skip)]
    pub tolerances: Tolerances,
}

fn default_step() -> StepPolicy {
    StepPolicy::Fraction(40.0)
}
fn default_gap() -> GapMode {
    GapMode::Analytic
}
fn yes() -> bool {
    true
}

impl Default for PropagationConfig {
    fn default() -> Self {
        Self {
            step: default_step(),
            gap: default_gap(),
            windows: Vec::new(),
            check_invariants: false,
            optical_dephasing: true,
            spin_t2_floor_us: None,
            bath: OUParams::disabled(),
            tolerances: Tolerances::default(),
        }
    }
}

impl PropagationConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |m: String| Err(EngineError::Config(m));
        match self.step {
            StepPolicy::Fraction(f) if !(f >= 20.0 && f.is_finite()) => {
                return bad(format!("step fraction must be at least 20, got {f}"))
            }
            StepPolicy::FixedNs(ns) if !(ns > 0.0 && ns.is_finite()) => {
                return bad(format!("step must be positive, got {ns} ns"))
            }
            _ => {}
        }
        if let GapMode::Stepped { step_us } = self.gap {
            if !(step_us > 0.0 && step_us.is_finite()) {
                return bad(format!("gap step must be positive, got {step_us}"));
            }
        }
        for w in &self.windows {
            if !(w.dt > 0.0 && w.end >= w.start && w.start.is_finite() && w.end.is_finite()) {
                return bad(format!("malformed record window {w:?}"));
            }
        }
        if let Some(t) = self.spin_t2_floor_us {
            if !(t > 0.0) {
                return bad(format!("spin T2 floor must be positive, got {t}"));
            }
        }
        self.bath.validate().map_err(EngineError::Config)
    }

    /// Total number of recorded samples.
    pub fn record_count(&self) -> usize {
        self.windows.iter().map(RecordWindow::len).sum()
    }
}
