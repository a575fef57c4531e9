//! Experiment descriptions, the sweep pipelines and their output files.
//!
//! A run is a pure function of the resolved [`ExperimentConfig`]: the same
//! config and seed give identical `data`, `fits` and `loss_budget` for any
//! number of worker threads. Only `meta` (wall time, throughput) varies.

mod config;
mod output;
mod run;

use serde::Serialize;
use thiserror::Error;

pub use config::{
    load_config, parse_config, two_pulse_grid, BathConfig, DdConfig, ExperimentConfig,
    ExperimentKind, GridConfig, InputConfig, OpticalPiConfig, OutputConfig, TimingConfig,
    TransferConfig,
};
pub use output::{decay_csv, phase_csv, trace_csv, write_outputs};
pub use run::{
    build_protocol, reference_energy, run_bath_calibration, run_experiment, run_phase_sweep,
    run_storage_sweep, Experiment, SnappedStorage,
};

use crate::engine::EngineError;
use crate::ensemble::{BathCalibration, EnsembleError};
use crate::observables::{EchoTrace, FitResult, ObservableError, VisibilityFit};
use crate::sequence::SequenceError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{0}")]
    Io(String),
    #[error("config parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid config:\n  {}", .0.join("\n  "))]
    Validation(Vec<String>),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Sequence(#[from] SequenceError),
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
    #[error(transparent)]
    Observable(#[from] ObservableError),
}

impl HarnessError {
    /// 1 for bad input, 2 for failures during the run.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Parse { .. } | HarnessError::Validation(_) => 1,
            _ => 2,
        }
    }
}

/// One point of a storage sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayPoint {
    /// Requested spin-storage duration, ms.
    pub requested_ms: f64,
    /// Spin-storage duration actually built, ms.
    pub spin_ms: f64,
    /// Storage time `t_e − t₁`, ms.
    pub t_ms: f64,
    pub rf_pulses: usize,
    pub eta: f64,
    pub stderr: f64,
}

/// One point of a phase sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhasePoint {
    pub phi_deg: f64,
    /// Mean intensity at the interference midpoint over the reference peak.
    pub i_n: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunData {
    Decay(Vec<DecayPoint>),
    Phase(Vec<PhasePoint>),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Fits {
    pub t2eff: Option<FitResult>,
    pub visibility: Option<VisibilityFit>,
    pub bath: Option<BathCalibration>,
}

/// Factors separating the recalled energy from the input energy.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossBudget {
    /// Coherence transfer of one sech pulse at line center.
    pub transfer_efficiency: f64,
    /// Intensity factor of the two transfers, `η_t⁴`.
    pub transfer_intensity_factor: f64,
    /// `exp(−2(t₁₂ + t₃₄)/T₂,opt)`.
    pub optical_dephasing_factor: f64,
    /// Echo energy of the zero-delay reference run.
    pub reference_energy: f64,
    /// Spin-storage duration of the reference run, µs.
    pub reference_spin_us: f64,
    /// Full width of the echo integration window, µs.
    pub echo_window_us: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Meta {
    pub version: String,
    pub workers: usize,
    pub wall_s: f64,
    pub ion_runs: u64,
    pub steps: u64,
    pub ion_runs_per_s: f64,
    pub steps_per_s: f64,
}

/// Everything a run produces.
#[derive(Debug, Clone, Serialize)]
pub struct RunResult {
    pub kind: ExperimentKind,
    /// The resolved config; loading it reproduces the run.
    pub config: ExperimentConfig,
    pub data: RunData,
    pub fits: Fits,
    pub loss_budget: LossBudget,
    pub warnings: Vec<String>,
    pub meta: Meta,
    #[serde(skip)]
    pub traces: Vec<(String, EchoTrace)>,
}
