//! Level scheme and material constants.
//!
//! The three active levels are the two ground hyperfine states `i` and `t`
//! and the excited state `e`. Frequencies are in MHz (kHz for the spin
//! linewidth), times in µs.

use serde::{Deserialize, Serialize};

/// Index of a level in the `{i, t, e}` basis.
pub type Level = usize;

pub const I: Level = 0;
pub const T: Level = 1;
pub const E: Level = 2;

/// Default tolerance on the optical line-offset consistency check, MHz.
pub const DEFAULT_OFFSET_TOLERANCE_MHZ: f64 = 0.1;

/// The Λ system: labels, ground splitting and the prepared optical lines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelScheme {
    #[serde(default = "default_labels")]
    pub labels: [String; 3],
    /// Ground hyperfine splitting Δ_hf between `i` and `t`, MHz.
    #[serde(default = "default_splitting")]
    pub splitting_mhz: f64,
    /// Offset of the `(i)-(e)` line inside the spectral pit, MHz.
    #[serde(default = "default_ie_offset")]
    pub ie_offset_mhz: f64,
    /// Offset of the `(t)-(e)` line inside the spectral pit, MHz.
    #[serde(default = "default_te_offset")]
    pub te_offset_mhz: f64,
}

fn default_labels() -> [String; 3] {
    ["i".into(), "t".into(), "e".into()]
}
fn default_splitting() -> f64 {
    14.87
}
fn default_ie_offset() -> f64 {
    12.2
}
fn default_te_offset() -> f64 {
    27.0
}

impl Default for LevelScheme {
    fn default() -> Self {
        Self {
            labels: default_labels(),
            splitting_mhz: default_splitting(),
            ie_offset_mhz: default_ie_offset(),
            te_offset_mhz: default_te_offset(),
        }
    }
}

/// Material constants of the doped crystal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialParams {
    #[serde(default)]
    pub scheme: LevelScheme,
    /// Optical homogeneous coherence time, µs.
    #[serde(default = "default_t2")]
    pub t2_opt_us: f64,
    /// FWHM of the prepared optical absorption peak, MHz.
    #[serde(default = "default_peak_fwhm")]
    pub peak_fwhm_mhz: f64,
    /// Inhomogeneous FWHM of the `(i)-(t)` transition, kHz.
    #[serde(default = "default_spin_fwhm")]
    pub spin_fwhm_khz: f64,
    /// Excited-state lifetime, µs. `None` disables population decay.
    #[serde(default)]
    pub t1_us: Option<f64>,
    /// Target coherence transfer efficiency of one transfer pulse.
    #[serde(default = "default_transfer")]
    pub transfer_efficiency: f64,
    /// Tolerance used when checking that the line offsets differ by Δ_hf.
    #[serde(default = "default_tol")]
    pub offset_tolerance_mhz: f64,
}

fn default_t2() -> f64 {
    11.5
}
fn default_peak_fwhm() -> f64 {
    1.5
}
fn default_spin_fwhm() -> f64 {
    45.0
}
fn default_transfer() -> f64 {
    0.87
}
fn default_tol() -> f64 {
    DEFAULT_OFFSET_TOLERANCE_MHZ
}

impl Default for MaterialParams {
    fn default() -> Self {
        default_material()
    }
}

/// The Pr:La₂(WO₄)₃ parameter set.
pub fn default_material() -> MaterialParams {
    MaterialParams {
        scheme: LevelScheme::default(),
        t2_opt_us: default_t2(),
        peak_fwhm_mhz: default_peak_fwhm(),
        spin_fwhm_khz: default_spin_fwhm(),
        t1_us: None,
        transfer_efficiency: default_transfer(),
        offset_tolerance_mhz: default_tol(),
    }
}

/// A violated invariant of the scheme or the material.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub field: &'static str,
    pub message: String,
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

/// Returns every violated invariant; an empty list means valid.
pub fn validate(scheme: &LevelScheme, mat: &MaterialParams) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut push = |field, message: &str| {
        out.push(Diagnostic {
            field,
            message: message.to_string(),
        })
    };

    let [a, b, c] = &scheme.labels;
    if a == b || b == c || a == c {
        push("labels", "level labels must be distinct");
    }
    if !(scheme.splitting_mhz > 0.0) {
        push("splitting_mhz", "splitting must be positive");
    }
    let diff = scheme.te_offset_mhz - scheme.ie_offset_mhz;
    let tol = mat.offset_tolerance_mhz;
    if !(tol >= 0.0) {
        push("offset_tolerance_mhz", "tolerance must be non-negative");
    } else if !((diff - scheme.splitting_mhz).abs() <= tol) {
        push(
            "te_offset_mhz",
            &format!(
                "offset mismatch: lines differ by {diff:.4} MHz, splitting is {:.4} MHz",
                scheme.splitting_mhz
            ),
        );
    }

    if !(mat.t2_opt_us > 0.0) {
        push("t2_opt_us", "optical T2 must be positive");
    }
    if !(mat.peak_fwhm_mhz > 0.0) {
        push("peak_fwhm_mhz", "peak linewidth must be positive");
    }
    if !(mat.spin_fwhm_khz > 0.0) {
        push("spin_fwhm_khz", "spin linewidth must be positive");
    }
    if let Some(t1) = mat.t1_us {
        if !(t1 > 0.0) {
            push("t1_us", "excited-state lifetime must be positive");
        }
    }
    if !(mat.transfer_efficiency > 0.0 && mat.transfer_efficiency <= 1.0) {
        push("transfer_efficiency", "transfer efficiency must lie in (0, 1]");
    }
    out
}

impl MaterialParams {
    /// Validates against the embedded scheme.
    pub fn validate(&self) -> Vec<Diagnostic> {
        validate(&self.scheme, self)
    }
}
