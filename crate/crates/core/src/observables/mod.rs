//! Reductions of echo traces to efficiencies, lifetimes and visibilities.

mod energy;
mod fit;
mod lsq;
mod trace;

use thiserror::Error;

pub use energy::{
    echo_energy, echo_fwhm_us, energy_jackknife, energy_of, mean_intensity, peak_intensity,
    retrieval_efficiency, Window,
};
pub use fit::{
    fit_double_gaussian, fit_t2eff, fit_visibility, DecayCurve, DoubleGaussian, FitResult,
    GaussComponent, VisibilityFit,
};
pub use trace::{BlockSums, EchoTrace};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObservableError {
    #[error("empty window [{0}, {1}] us")]
    EmptyWindow(f64, f64),
    #[error("window [{start}, {end}] us is not inside the trace [{t0}, {t1}] us")]
    WindowOutside { start: f64, end: f64, t0: f64, t1: f64 },
    #[error("reference energy must be positive, got {0}")]
    NonPositiveReference(f64),
    #[error("need at least {need} points, got {got}")]
    TooFewPoints { need: usize, got: usize },
    #[error("data must be positive: {0}")]
    NonPositiveData(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("fit did not converge: {0}")]
    NonConvergence(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
}
