use std::path::Path;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::engine::PropagationConfig;
use crate::ensemble::{CalibrationOptions, DistributionSpec, OUParams};
use crate::model::MaterialParams;
use crate::sequence::DDKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    StorageSweep,
    PhaseSweep,
    BathCalibration,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::StorageSweep => "storage_sweep",
            ExperimentKind::PhaseSweep => "phase_sweep",
            ExperimentKind::BathCalibration => "bath_calibration",
        }
    }
}

/// Spin bath: either a fixed `σ_b` or a two-pulse `T₂,eff` to calibrate to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BathConfig {
    #[serde(default = "yes")]
    pub enabled: bool,
    #[serde(default = "default_tau_c")]
    pub tau_c_us: f64,
    /// Stationary rms, rad/ms. Filled in by calibration when absent.
    #[serde(default)]
    pub sigma_rad_per_ms: Option<f64>,
    #[serde(default = "default_target")]
    pub target_t2_two_pulse_us: f64,
    #[serde(default)]
    pub calibration: CalibrationOptions,
    /// Ions per calibration measurement.
    #[serde(default = "default_cal_ions")]
    pub calibration_ions: usize,
    /// Bath realizations averaged per calibration measurement.
    #[serde(default = "default_cal_shots")]
    pub calibration_shots: usize,
    /// Two-pulse spin-storage grid of a calibration measurement, ms.
    #[serde(default = "two_pulse_grid")]
    pub calibration_grid_ms: Vec<f64>,
}

impl Default for BathConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            tau_c_us: default_tau_c(),
            sigma_rad_per_ms: None,
            target_t2_two_pulse_us: default_target(),
            calibration: CalibrationOptions::default(),
            calibration_ions: default_cal_ions(),
            calibration_shots: default_cal_shots(),
            calibration_grid_ms: two_pulse_grid(),
        }
    }
}

impl BathConfig {
    /// Bath parameters once `σ_b` is known.
    pub fn params(&self) -> OUParams {
        match (self.enabled, self.sigma_rad_per_ms) {
            (true, Some(s)) => OUParams::new(self.tau_c_us, s),
            _ => OUParams::disabled(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DdConfig {
    /// Defaults to `two_pulse` for storage sweeps and `kdd` for phase sweeps.
    #[serde(default)]
    pub kind: Option<DDKind>,
    /// RF pulse separation, µs.
    #[serde(default = "default_tau")]
    pub tau_us: f64,
    #[serde(default = "default_rf_duration")]
    pub rf_duration_us: f64,
    #[serde(default)]
    pub rf_phase_deg: f64,
    /// RF pulse area in units of π.
    #[serde(default = "one")]
    pub rf_area_pi: f64,
}

impl Default for DdConfig {
    fn default() -> Self {
        Self {
            kind: None,
            tau_us: default_tau(),
            rf_duration_us: default_rf_duration(),
            rf_phase_deg: 0.0,
            rf_area_pi: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimingConfig {
    #[serde(default = "two")]
    pub t12_us: f64,
    #[serde(default = "two")]
    pub t34_us: f64,
    /// Delay of the earlier input `1'` before input `1`.
    #[serde(default = "one")]
    pub t1p1_us: f64,
    /// Sampling step of the recorded traces.
    #[serde(default = "default_record_dt")]
    pub record_dt_us: f64,
    /// Width of the intensity average at the interference midpoint.
    #[serde(default = "default_average")]
    pub average_us: f64,
}

impl Default for TimingConfig {
    fn default() -> Self {
        Self {
            t12_us: 2.0,
            t34_us: 2.0,
            t1p1_us: 1.0,
            record_dt_us: default_record_dt(),
            average_us: default_average(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputConfig {
    /// Pulse area in units of π.
    #[serde(default = "default_input_area")]
    pub area_pi: f64,
    #[serde(default)]
    pub phase_deg: f64,
    #[serde(default = "default_input_fwhm")]
    pub fwhm_us: f64,
    /// Center relative to the latest input, µs (≤ 0).
    #[serde(default)]
    pub offset_us: f64,
}

impl Default for InputConfig {
    fn default() -> Self {
        Self {
            area_pi: default_input_area(),
            phase_deg: 0.0,
            fwhm_us: default_input_fwhm(),
            offset_us: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransferConfig {
    #[serde(default = "default_transfer_fwhm")]
    pub fwhm_us: f64,
    #[serde(default = "two")]
    pub sweep_mhz: f64,
    /// Peak Rabi frequency, rad/µs. Calibrated to the material's transfer
    /// efficiency when absent.
    #[serde(default)]
    pub peak_rabi: Option<f64>,
}

impl Default for TransferConfig {
    fn default() -> Self {
        Self {
            fwhm_us: default_transfer_fwhm(),
            sweep_mhz: 2.0,
            peak_rabi: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpticalPiConfig {
    #[serde(default = "default_pi_fwhm")]
    pub fwhm_us: f64,
    #[serde(default = "one")]
    pub area_pi: f64,
}

impl Default for OpticalPiConfig {
    fn default() -> Self {
        Self {
            fwhm_us: default_pi_fwhm(),
            area_pi: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// Requested spin-storage durations, ms.
    #[serde(default)]
    pub storage_ms: Option<Vec<f64>>,
    /// Relative phases of input `1'`, degrees.
    #[serde(default)]
    pub phase_deg: Option<Vec<f64>>,
    /// Spin-storage duration of a phase sweep, ms.
    #[serde(default = "default_fixed_storage")]
    pub fixed_storage_ms: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            storage_ms: None,
            phase_deg: None,
            fixed_storage_ms: default_fixed_storage(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub dir: Option<String>,
    /// Export echo traces.
    #[serde(default)]
    pub trace: bool,
}

/// A complete experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub material: MaterialParams,
    #[serde(default)]
    pub distribution: DistributionSpec,
    #[serde(default)]
    pub bath: BathConfig,
    #[serde(default)]
    pub dd: DdConfig,
    #[serde(default)]
    pub timing: TimingConfig,
    #[serde(default)]
    pub inputs: Option<Vec<InputConfig>>,
    #[serde(default)]
    pub transfer: TransferConfig,
    #[serde(default)]
    pub optical_pi: OpticalPiConfig,
    #[serde(default)]
    pub grid: GridConfig,
    /// Repetitions with independent bath trajectories.
    #[serde(default = "one_usize")]
    pub shots: usize,
    /// Draw a fresh optical phase common to all inputs for every shot.
    /// Defaults to `shots > 1`.
    #[serde(default)]
    pub random_input_phase: Option<bool>,
    #[serde(default = "yes")]
    pub phase_cycling: bool,
    #[serde(default)]
    pub propagation: PropagationConfig,
    #[serde(default)]
    pub output: OutputConfig,
    /// Worker threads; not part of the experiment definition.
    #[serde(skip)]
    pub workers: Option<usize>,
}

fn yes() -> bool {
    true
}
fn one() -> f64 {
    1.0
}
fn two() -> f64 {
    2.0
}
fn one_usize() -> usize {
    1
}
fn default_tau_c() -> f64 {
    10.0
}
fn default_target() -> f64 {
    230.0
}
fn default_cal_ions() -> usize {
    2000
}
fn default_cal_shots() -> usize {
    4
}
fn default_tau() -> f64 {
    30.0
}
fn default_rf_duration() -> f64 {
    5.0
}
fn default_record_dt() -> f64 {
    0.01
}
fn default_average() -> f64 {
    0.05
}
fn default_input_area() -> f64 {
    0.1
}
fn default_input_fwhm() -> f64 {
    0.2
}
fn default_transfer_fwhm() -> f64 {
    2.25
}
fn default_pi_fwhm() -> f64 {
    0.425
}
fn default_fixed_storage() -> f64 {
    3.0
}

/// Twelve points from 0.05 to 0.6 ms.
pub fn two_pulse_grid() -> Vec<f64> {
    (1..=12).map(|k| 5.0 * k as f64 / 100.0).collect()
}

impl ExperimentConfig {
    /// Default parameters for a kind.
    pub fn new(kind: ExperimentKind, seed: u64) -> Self {
        Self {
            kind,
            seed,
            material: MaterialParams::default(),
            distribution: DistributionSpec::default(),
            bath: BathConfig::default(),
            dd: DdConfig::default(),
            timing: TimingConfig::default(),
            inputs: None,
            transfer: TransferConfig::default(),
            optical_pi: OpticalPiConfig::default(),
            grid: GridConfig::default(),
            shots: 1,
            random_input_phase: None,
            phase_cycling: true,
            propagation: PropagationConfig::default(),
            output: OutputConfig::default(),
            workers: None,
        }
    }

    pub fn dd_kind(&self) -> DDKind {
        self.dd.kind.unwrap_or(match self.kind {
            ExperimentKind::PhaseSweep => DDKind::Kdd,
            _ => DDKind::TwoPulse,
        })
    }

    /// Fills every kind-dependent default that is still open.
    pub fn resolve(&mut self) {
        self.dd.kind = Some(self.dd_kind());
        self.random_input_phase.get_or_insert(self.shots > 1);
        if self.inputs.is_none() {
            self.inputs = Some(match self.kind {
                ExperimentKind::PhaseSweep => vec![
                    InputConfig {
                        offset_us: -self.timing.t1p1_us,
                        ..Default::default()
                    },
                    InputConfig::default(),
                ],
                _ => vec![InputConfig::default()],
            });
        }
        match self.kind {
            ExperimentKind::StorageSweep => {
                if self.grid.storage_ms.is_none() && self.grid.phase_deg.is_none() {
                    let tau_ms = 1e-3 * self.dd.tau_us;
                    self.grid.storage_ms = Some(match self.dd_kind() {
                        DDKind::TwoPulse => two_pulse_grid(),
                        DDKind::Cpmg => (1..=10).map(|k| 20.0 * k as f64 * tau_ms).collect::<Vec<_>>(),
                        DDKind::Kdd => (1..=8).map(|k| 20.0 * k as f64 * tau_ms).collect(),
                    });
                }
            }
            ExperimentKind::PhaseSweep => {
                if self.grid.phase_deg.is_none() && self.grid.storage_ms.is_none() {
                    self.grid.phase_deg = Some((0..8).map(|k| (-45 * k) as f64).collect());
                }
            }
            ExperimentKind::BathCalibration => {}
        }
    }

    /// Every violation, one message each.
    pub fn validate(&self) -> Vec<String> {
        let mut bad = Vec::new();
        for d in self.material.validate() {
            bad.push(format!("material.{}: {}", d.field, d.message));
        }
        if let Err(e) = self.distribution.validate() {
            bad.push(format!("distribution: {e}"));
        }
        if self.distribution.n == 0 {
            bad.push("distribution.n must be at least 1".into());
        }
        let b = &self.bath;
        if !(b.tau_c_us > 0.0 && b.tau_c_us.is_finite()) {
            bad.push(format!("bath.tau_c_us must be positive, got {}", b.tau_c_us));
        }
        if let Some(s) = b.sigma_rad_per_ms {
            if !(s >= 0.0 && s.is_finite()) {
                bad.push(format!("bath.sigma_rad_per_ms must be non-negative, got {s}"));
            }
        }
        if !(b.target_t2_two_pulse_us > 0.0) {
            bad.push(format!(
                "bath.target_t2_two_pulse_us must be positive, got {}",
                b.target_t2_two_pulse_us
            ));
        }
        if b.calibration_ions == 0 {
            bad.push("bath.calibration_ions must be at least 1".into());
        }
        if b.calibration_shots == 0 {
            bad.push("bath.calibration_shots must be at least 1".into());
        }
        if b.calibration_grid_ms.len() < 3 || b.calibration_grid_ms.iter().any(|t| !(*t > 0.0)) {
            bad.push("bath.calibration_grid_ms needs at least 3 positive values".into());
        }
        let dd = &self.dd;
        if !(dd.rf_duration_us > 0.0) {
            bad.push(format!("dd.rf_duration_us must be positive, got {}", dd.rf_duration_us));
        }
        if !(dd.rf_area_pi > 0.0) {
            bad.push(format!("dd.rf_area_pi must be positive, got {}", dd.rf_area_pi));
        }
        if self.dd_kind() != DDKind::TwoPulse && !(dd.tau_us > dd.rf_duration_us) {
            bad.push(format!(
                "dd.tau_us: τ must exceed pulse duration ({} us <= {} us)",
                dd.tau_us, dd.rf_duration_us
            ));
        }
        let t = &self.timing;
        for (name, v) in [
            ("t12_us", t.t12_us),
            ("t34_us", t.t34_us),
            ("t1p1_us", t.t1p1_us),
            ("record_dt_us", t.record_dt_us),
            ("average_us", t.average_us),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                bad.push(format!("timing.{name} must be positive, got {v}"));
            }
        }
        match &self.inputs {
            Some(list) if list.is_empty() => bad.push("inputs must not be empty".into()),
            Some(list) => {
                for (k, i) in list.iter().enumerate() {
                    if !(i.area_pi >= 0.0 && i.fwhm_us > 0.0 && i.offset_us <= 0.0) {
                        bad.push(format!(
                            "inputs[{k}]: area must be non-negative, fwhm positive and offset not positive"
                        ));
                    }
                }
            }
            None => {}
        }
        if !(self.transfer.fwhm_us > 0.0 && self.transfer.sweep_mhz >= 0.0) {
            bad.push("transfer: fwhm must be positive and sweep non-negative".into());
        }
        if let Some(p) = self.transfer.peak_rabi {
            if !(p > 0.0) {
                bad.push(format!("transfer.peak_rabi must be positive, got {p}"));
            }
        }
        if !(self.optical_pi.fwhm_us > 0.0 && self.optical_pi.area_pi > 0.0) {
            bad.push("optical_pi: fwhm and area must be positive".into());
        }
        if self.shots == 0 {
            bad.push("shots must be at least 1".into());
        }
        if !self.propagation.windows.is_empty() {
            bad.push("propagation.windows are set by the experiment and must be empty".into());
        }
        if let Err(e) = self.propagation.validate() {
            bad.push(format!("propagation: {e}"));
        }
        let (st, ph) = (&self.grid.storage_ms, &self.grid.phase_deg);
        match self.kind {
            ExperimentKind::StorageSweep => {
                if ph.is_some() {
                    bad.push("grid.phase_deg is not allowed for a storage sweep".into());
                }
                match st {
                    Some(g) if g.is_empty() => bad.push("grid.storage_ms must not be empty".into()),
                    Some(g) if g.iter().any(|t| !(*t > 0.0 && t.is_finite())) => {
                        bad.push("grid.storage_ms values must be positive".into())
                    }
                    _ => {}
                }
            }
            ExperimentKind::PhaseSweep => {
                if !(self.grid.fixed_storage_ms > 0.0 && self.grid.fixed_storage_ms.is_finite()) {
                    bad.push("grid.fixed_storage_ms must be positive".into());
                }
                if st.is_some() {
                    bad.push("grid.storage_ms is not allowed for a phase sweep".into());
                }
                if let Some(g) = ph {
                    if g.len() < 4 {
                        bad.push(format!("grid.phase_deg needs at least 4 phases, got {}", g.len()));
                    }
                }
                if let Some(list) = &self.inputs {
                    if list.len() != 2 {
                        bad.push(format!("a phase sweep needs exactly 2 inputs, got {}", list.len()));
                    }
                }
            }
            ExperimentKind::BathCalibration => {
                if st.is_some() || ph.is_some() {
                    bad.push("a bath calibration takes no grid".into());
                }
            }
        }
        bad
    }
}

/// Reads, defaults and validates a config file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig, HarnessError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
    parse_config(&text)
}

/// Parses, defaults and validates a config document.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, HarnessError> {
    let mut cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| HarnessError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    cfg.resolve();
    let bad = cfg.validate();
    if bad.is_empty() {
        Ok(cfg)
    } else {
        Err(HarnessError::Validation(bad))
    }
}
