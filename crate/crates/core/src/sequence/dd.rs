use std::f64::consts::{FRAC_PI_2, FRAC_PI_6};

use serde::{Deserialize, Serialize};

use super::{Channel, Envelope, Pulse, Role, SequenceError, TIME_EPS};

/// Phase offsets of the five pulses of one KDD(φ) sub-block.
pub const KDD_PHASES: [f64; 5] = [FRAC_PI_6, 0.0, FRAC_PI_2, 0.0, FRAC_PI_6];

/// Pulses with centers relative to the fragment start, plus its length.
#[derive(Debug, Clone, PartialEq)]
pub struct Fragment {
    pub pulses: Vec<Pulse>,
    pub duration: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DDKind {
    TwoPulse,
    Cpmg,
    Kdd,
}

/// A decoupling sequence request.
///
/// For [`DDKind::TwoPulse`] `tau` is the separation of the two π pulses, so
/// the fragment lasts `2τ`; `n` is ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct DDSpec {
    pub kind: DDKind,
    pub n: usize,
    pub tau: f64,
    pub template: Pulse,
}

impl DDSpec {
    pub fn validate(&self) -> Result<(), SequenceError> {
        self.template.envelope.validate()?;
        if self.template.channel != Channel::It
            || !matches!(self.template.envelope, Envelope::Rectangular { .. })
        {
            return Err(SequenceError::Precondition(
                "rf template must be a rectangular (i)-(t) pulse".into(),
            ));
        }
        if self.kind != DDKind::TwoPulse && self.n < 1 {
            return Err(SequenceError::Precondition("N must be at least 1".into()));
        }
        check_tau(self.tau, &self.template)
    }

    /// Spin-storage length covered by the fragment.
    pub fn duration(&self) -> f64 {
        match self.kind {
            DDKind::TwoPulse => 2.0 * self.tau,
            DDKind::Cpmg => 2.0 * self.n as f64 * self.tau,
            DDKind::Kdd => 20.0 * self.n as f64 * self.tau,
        }
    }

    pub fn build(&self) -> Result<Fragment, SequenceError> {
        self.validate()?;
        match self.kind {
            DDKind::TwoPulse => build_two_pulse(2.0 * self.tau, &self.template),
            DDKind::Cpmg => build_cpmg(self.n, self.tau, &self.template),
            DDKind::Kdd => build_kdd(self.n, self.tau, &self.template),
        }
    }
}

fn check_tau(tau: f64, template: &Pulse) -> Result<(), SequenceError> {
    if !(tau > template.envelope.width() + TIME_EPS) {
        return Err(SequenceError::Precondition(format!(
            "tau must exceed pulse duration ({} us <= {} us)",
            tau,
            template.envelope.width()
        )));
    }
    Ok(())
}

fn rf_at(template: &Pulse, center: f64, phase: f64) -> Pulse {
    let mut p = template.clone();
    p.role = Role::Rf;
    p.center = center;
    p.phase = phase;
    p
}

fn check_fragment(pulses: &[Pulse]) -> Result<(), SequenceError> {
    for w in pulses.windows(2) {
        let (_, ahi) = w[0].support();
        let (blo, _) = w[1].support();
        if blo < ahi - TIME_EPS {
            return Err(SequenceError::Overlap {
                channel: w[0].channel,
                a: w[0].center,
                b: w[1].center,
            });
        }
    }
    Ok(())
}

/// Hahn pair: π pulses at `total/4` and `3·total/4`.
pub fn build_two_pulse(total: f64, template: &Pulse) -> Result<Fragment, SequenceError> {
    let d = template.envelope.width();
    if !(total > 2.0 * d) {
        return Err(SequenceError::Precondition(format!(
            "total spin time {total} us must exceed two pulse durations"
        )));
    }
    let pulses = vec![
        rf_at(template, 0.25 * total, template.phase),
        rf_at(template, 0.75 * total, template.phase),
    ];
    check_fragment(&pulses)?;
    Ok(Fragment {
        pulses,
        duration: total,
    })
}

/// `[τ/2 − π(X) − τ − π(X) − τ/2]` repeated `n` times.
pub fn build_cpmg(n: usize, tau: f64, template: &Pulse) -> Result<Fragment, SequenceError> {
    if n < 1 {
        return Err(SequenceError::Precondition("N must be at least 1".into()));
    }
    check_tau(tau, template)?;
    let pulses: Vec<Pulse> = (0..2 * n)
        .map(|k| rf_at(template, (k as f64 + 0.5) * tau, template.phase))
        .collect();
    check_fragment(&pulses)?;
    Ok(Fragment {
        pulses,
        duration: 2.0 * n as f64 * tau,
    })
}

/// `KDD(X) KDD(Y) KDD(X) KDD(Y)` repeated `n` times; 20 pulses per block.
pub fn build_kdd(n: usize, tau: f64, template: &Pulse) -> Result<Fragment, SequenceError> {
    if n < 1 {
        return Err(SequenceError::Precondition("N must be at least 1".into()));
    }
    check_tau(tau, template)?;
    let axes = [0.0, FRAC_PI_2, 0.0, FRAC_PI_2];
    let mut pulses = Vec::with_capacity(20 * n);
    for _ in 0..n {
        for axis in axes {
            for offset in KDD_PHASES {
                let k = pulses.len();
                let phase = template.phase + axis + offset;
                pulses.push(rf_at(template, (k as f64 + 0.5) * tau, phase));
            }
        }
    }
    check_fragment(&pulses)?;
    Ok(Fragment {
        pulses,
        duration: 20.0 * n as f64 * tau,
    })
}
