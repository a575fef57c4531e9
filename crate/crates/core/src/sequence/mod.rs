//! Pulse envelopes, decoupling blocks and the storage protocol timeline.

mod dd;
mod envelope;
mod protocol;

use std::f64::consts::TAU;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Level, E, I, T};

pub use dd::{build_cpmg, build_kdd, build_two_pulse, DDKind, DDSpec, Fragment, KDD_PHASES};
pub use envelope::{
    calibrate_peak_for_area, envelope_value, ln_cosh, sech_beta, Envelope, EnvelopeSample,
    SUPPORT_FWHM,
};
pub use protocol::{assemble_protocol, Storage};

/// Slack used when comparing pulse supports, µs.
pub const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SequenceError {
    #[error("invalid envelope {0}")]
    InvalidEnvelope(String),
    #[error("pulses on channel {channel} overlap: centers {a} us and {b} us")]
    Overlap { channel: Channel, a: f64, b: f64 },
    #[error("{0}")]
    Precondition(String),
    #[error("decoupling fragment is empty for kind {0:?}")]
    EmptyFragment(DDKind),
}

/// Transition driven by a pulse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    /// Optical `(i)-(e)`.
    Ie,
    /// Optical `(t)-(e)`.
    Te,
    /// Radio-frequency `(i)-(t)`.
    It,
}

impl Channel {
    pub const ALL: [Channel; 3] = [Channel::Ie, Channel::Te, Channel::It];

    /// `(lower, upper)` levels.
    pub fn levels(self) -> (Level, Level) {
        match self {
            Channel::Ie => (I, E),
            Channel::Te => (T, E),
            Channel::It => (I, T),
        }
    }

    pub fn is_optical(self) -> bool {
        !matches!(self, Channel::It)
    }

    pub fn name(self) -> &'static str {
        match self {
            Channel::Ie => "i-e",
            Channel::Te => "t-e",
            Channel::It => "i-t",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl std::fmt::Display for Channel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// What a pulse does in the protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Input,
    Transfer,
    Rephase,
    Rf,
    Other,
}

/// One drive event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pulse {
    pub channel: Channel,
    pub role: Role,
    /// Center time, µs.
    pub center: f64,
    pub envelope: Envelope,
    /// Peak Rabi frequency, rad/µs.
    pub peak_rabi: f64,
    /// Carrier phase at the pulse center, rad.
    pub phase: f64,
    /// Static carrier offset, MHz.
    pub detuning_mhz: f64,
}

impl Pulse {
    pub fn new(channel: Channel, role: Role, envelope: Envelope, peak_rabi: f64) -> Self {
        Self {
            channel,
            role,
            center: 0.0,
            envelope,
            peak_rabi,
            phase: 0.0,
            detuning_mhz: 0.0,
        }
    }

    pub fn at(mut self, center: f64) -> Self {
        self.center = center;
        self
    }

    pub fn with_phase(mut self, phase: f64) -> Self {
        self.phase = phase;
        self
    }

    pub fn support(&self) -> (f64, f64) {
        let h = self.envelope.half_support();
        (self.center - h, self.center + h)
    }

    /// Truncated Rabi frequency at absolute time `t`.
    pub fn rabi_at(&self, t: f64) -> f64 {
        let (lo, hi) = self.support();
        if t < lo || t > hi {
            return 0.0;
        }
        envelope_value(&self.envelope, self.peak_rabi, t - self.center).rabi
    }

    /// Carrier phase including the static offset and the chirp, rad.
    pub fn phase_at(&self, t: f64) -> f64 {
        let dt = t - self.center;
        self.phase + TAU * self.detuning_mhz * dt + self.envelope.chirp_phase(dt)
    }

    /// Time derivative of [`Pulse::phase_at`], rad/µs.
    pub fn phase_rate_at(&self, t: f64) -> f64 {
        let s = envelope_value(&self.envelope, 0.0, t - self.center);
        TAU * (self.detuning_mhz + s.detuning_mhz)
    }

    pub fn validate(&self) -> Result<(), SequenceError> {
        self.envelope.validate()?;
        if !(self.peak_rabi >= 0.0 && self.peak_rabi.is_finite()) {
            return Err(SequenceError::Precondition(format!(
                "peak Rabi frequency must be non-negative, got {}",
                self.peak_rabi
            )));
        }
        if !(self.center >= 0.0 && self.center.is_finite()) {
            return Err(SequenceError::Precondition(format!(
                "pulse center must be non-negative, got {}",
                self.center
            )));
        }
        if !self.phase.is_finite() || !self.detuning_mhz.is_finite() {
            return Err(SequenceError::Precondition("non-finite pulse phase or detuning".into()));
        }
        Ok(())
    }
}

/// Named protocol times, µs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Markers {
    /// Input pulse centers, in the order the inputs were given.
    pub inputs: Vec<f64>,
    /// Index into `inputs` of the reference input `t₁`.
    pub reference_input: usize,
    pub t2: f64,
    pub t3: f64,
    pub t4: f64,
    /// Expected echo time for each input.
    pub echoes: Vec<f64>,
    /// Storage time `t_e − t₁`.
    pub storage_time: f64,
}

impl Markers {
    pub fn t1(&self) -> f64 {
        self.inputs[self.reference_input]
    }

    pub fn echo(&self) -> f64 {
        self.echoes[self.reference_input]
    }
}

/// Validated, time-ordered list of pulses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sequence {
    pulses: Vec<Pulse>,
    duration: f64,
    markers: Option<Markers>,
}

impl Sequence {
    /// Sorts by center and checks every invariant.
    pub fn new(
        mut pulses: Vec<Pulse>,
        duration: f64,
        markers: Option<Markers>,
    ) -> Result<Self, SequenceError> {
        for p in &pulses {
            p.validate()?;
        }
        pulses.sort_by(|a, b| a.center.total_cmp(&b.center));
        check_overlaps(&pulses)?;
        if !(duration >= 0.0 && duration.is_finite()) {
            return Err(SequenceError::Precondition(format!(
                "duration must be non-negative, got {duration}"
            )));
        }
        if let Some(m) = &markers {
            let want = m.t4 + (m.t2 - m.t1()) + (m.t4 - m.t3);
            if (m.echo() - want).abs() > TIME_EPS {
                return Err(SequenceError::Precondition(
                    "echo marker must equal t4 + t12 + t34".into(),
                ));
            }
        }
        Ok(Self {
            pulses,
            duration,
            markers,
        })
    }

    pub fn empty() -> Self {
        Self {
            pulses: Vec::new(),
            duration: 0.0,
            markers: None,
        }
    }

    pub fn pulses(&self) -> &[Pulse] {
        &self.pulses
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn markers(&self) -> Option<&Markers> {
        self.markers.as_ref()
    }

    /// Same timeline with `f` applied to every pulse.
    pub fn map_pulses(&self, mut f: impl FnMut(&mut Pulse)) -> Result<Self, SequenceError> {
        let mut pulses = self.pulses.clone();
        pulses.iter_mut().for_each(&mut f);
        Self::new(pulses, self.duration, self.markers.clone())
    }
}

fn check_overlaps(pulses: &[Pulse]) -> Result<(), SequenceError> {
    for ch in Channel::ALL {
        let mut on: Vec<&Pulse> = pulses.iter().filter(|p| p.channel == ch).collect();
        on.sort_by(|a, b| a.support().0.total_cmp(&b.support().0));
        for (k, a) in on.iter().enumerate() {
            let (_, ahi) = a.support();
            for b in &on[k + 1..] {
                if b.support().0 >= ahi - TIME_EPS {
                    break;
                }
                if a.role == Role::Input && b.role == Role::Input {
                    continue;
                }
                let (x, y) = if a.center <= b.center { (a, b) } else { (b, a) };
                return Err(SequenceError::Overlap {
                    channel: ch,
                    a: x.center,
                    b: y.center,
                });
            }
        }
    }
    Ok(())
}

/// Tab-separated table of the sequence, one row per pulse.
///
/// Header lines start with `#` and carry the duration and markers; the
/// column order is `center_us, channel, envelope, width_us, peak_rabi,
/// phase_deg, detuning_mhz`.
pub fn dump_sequence(seq: &Sequence) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# duration_us\t{}", seq.duration);
    if let Some(m) = &seq.markers {
        for (k, t) in m.inputs.iter().enumerate() {
            let _ = writeln!(s, "# t1_{k}_us\t{t}");
        }
        let _ = writeln!(s, "# t2_us\t{}", m.t2);
        let _ = writeln!(s, "# t3_us\t{}", m.t3);
        let _ = writeln!(s, "# t4_us\t{}", m.t4);
        for (k, t) in m.echoes.iter().enumerate() {
            let _ = writeln!(s, "# te_{k}_us\t{t}");
        }
        let _ = writeln!(s, "# storage_time_us\t{}", m.storage_time);
    }
    s.push_str("center_us\tchannel\tenvelope\twidth_us\tpeak_rabi\tphase_deg\tdetuning_mhz\n");
    for p in &seq.pulses {
        let _ = writeln!(
            s,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            p.center,
            p.channel,
            p.envelope.kind_name(),
            p.envelope.width(),
            p.peak_rabi,
            p.phase.to_degrees(),
            p.detuning_mhz
        );
    }
    s
}
