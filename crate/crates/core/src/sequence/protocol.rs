use super::{Channel, DDKind, DDSpec, Markers, Pulse, Role, Sequence, SequenceError};

/// What happens between the two transfer pulses.
#[derive(Debug, Clone, PartialEq)]
pub enum Storage {
    /// A decoupling fragment filling the whole spin-storage interval.
    Dd(DDSpec),
    /// Free spin evolution for the given time, µs, with no RF pulses.
    Free(f64),
}

/// Lays out inputs, transfers, decoupling and the optical π pulse.
///
/// Input centers are read relative to each other; the latest input is the
/// reference `t₁`. The spin-storage interval runs from the center of
/// transfer pulse 2 to the center of transfer pulse 3. The result is
/// shifted so that the earliest pulse support starts at zero.
pub fn assemble_protocol(
    inputs: &[Pulse],
    t12: f64,
    t34: f64,
    storage: &Storage,
    transfer: &Pulse,
    optical_pi: &Pulse,
) -> Result<Sequence, SequenceError> {
    if inputs.is_empty() {
        return Err(SequenceError::Precondition("at least one input pulse is required".into()));
    }
    if !(t12 > 0.0 && t34 > 0.0) {
        return Err(SequenceError::Precondition("t12 and t34 must be positive".into()));
    }
    if inputs.iter().any(|p| p.channel != Channel::Ie) {
        return Err(SequenceError::Precondition("inputs must drive the (i)-(e) line".into()));
    }
    if transfer.channel != Channel::Te || optical_pi.channel != Channel::Ie {
        return Err(SequenceError::Precondition(
            "transfers drive (t)-(e) and the optical pi pulse drives (i)-(e)".into(),
        ));
    }

    let (fragment, spin_time) = match storage {
        Storage::Dd(spec) => {
            let f = spec.build()?;
            if f.pulses.is_empty() && spec.kind != DDKind::TwoPulse {
                return Err(SequenceError::EmptyFragment(spec.kind));
            }
            let d = f.duration;
            (f.pulses, d)
        }
        Storage::Free(d) => {
            if !(*d > 0.0) {
                return Err(SequenceError::Precondition("storage delay must be positive".into()));
            }
            (Vec::new(), *d)
        }
    };

    let reference = inputs
        .iter()
        .enumerate()
        .fold(0, |best, (k, p)| if p.center >= inputs[best].center { k } else { best });
    let t1 = inputs[reference].center;
    let in_times: Vec<f64> = inputs.iter().map(|p| p.center - t1).collect();

    let t2 = t12;
    let t3 = t2 + spin_time;
    let t4 = t3 + t34;
    let echoes: Vec<f64> = in_times.iter().map(|&t| t4 + (t2 - t) + t34).collect();

    let mut pulses = Vec::with_capacity(inputs.len() + fragment.len() + 3);
    for (p, &t) in inputs.iter().zip(&in_times) {
        let mut q = p.clone();
        q.role = Role::Input;
        q.center = t;
        pulses.push(q);
    }
    for (role, t) in [(Role::Transfer, t2), (Role::Transfer, t3)] {
        let mut q = transfer.clone();
        q.role = role;
        q.center = t;
        pulses.push(q);
    }
    for p in fragment {
        let mut q = p;
        q.center += t2;
        pulses.push(q);
    }
    let mut q = optical_pi.clone();
    q.role = Role::Rephase;
    q.center = t4;
    pulses.push(q);

    let start = pulses
        .iter()
        .map(|p| p.support().0)
        .fold(f64::INFINITY, f64::min);
    let shift = -start;
    for p in &mut pulses {
        p.center += shift;
    }
    let end = pulses
        .iter()
        .map(|p| p.support().1)
        .fold(f64::NEG_INFINITY, f64::max);
    let last_echo = echoes.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + shift;
    let duration = end.max(last_echo + t12.max(t34));

    let markers = Markers {
        inputs: in_times.iter().map(|t| t + shift).collect(),
        reference_input: reference,
        t2: t2 + shift,
        t3: t3 + shift,
        t4: t4 + shift,
        storage_time: echoes[reference] - in_times[reference],
        echoes: echoes.iter().map(|t| t + shift).collect(),
    };
    Sequence::new(pulses, duration, Some(markers))
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;
    use crate::sequence::{calibrate_peak_for_area, dump_sequence, Envelope};

    fn input() -> Pulse {
        let env = Envelope::Gaussian { fwhm: 0.2 };
        Pulse::new(Channel::Ie, Role::Input, env, calibrate_peak_for_area(&env, 0.1 * PI).unwrap())
    }

    fn transfer() -> Pulse {
        let env = Envelope::SechChirp { fwhm: 2.25, sweep: 2.0 };
        Pulse::new(Channel::Te, Role::Transfer, env, 3.0)
    }

    fn pi4() -> Pulse {
        let env = Envelope::Gaussian { fwhm: 0.425 };
        Pulse::new(Channel::Ie, Role::Rephase, env, calibrate_peak_for_area(&env, PI).unwrap())
    }

    fn rf() -> Pulse {
        let env = Envelope::Rectangular { duration: 5.0 };
        Pulse::new(Channel::It, Role::Rf, env, PI / 5.0)
    }

    fn dd(kind: DDKind, n: usize, tau: f64) -> Storage {
        Storage::Dd(DDSpec {
            kind,
            n,
            tau,
            template: rf(),
        })
    }

    #[test]
    fn cpmg_echo_marker() {
        let s = assemble_protocol(&[input()], 2.0, 2.0, &dd(DDKind::Cpmg, 1, 30.0), &transfer(), &pi4())
            .unwrap();
        let m = s.markers().unwrap();
        assert!((m.echo() - (m.t4 + 4.0)).abs() < 1e-12);
        assert!((m.t3 - m.t2 - 60.0).abs() < 1e-12);
        assert!((m.storage_time - (60.0 + 8.0)).abs() < 1e-12);
        let first = s.pulses().iter().map(|p| p.support().0).fold(f64::INFINITY, f64::min);
        assert!(first.abs() < 1e-12);
        let table = dump_sequence(&s);
        let rows = table.lines().filter(|l| !l.starts_with('#')).count() - 1;
        assert_eq!(rows, 2 + 4);
        assert_eq!(table.matches("\ti-t\t").count(), 2);
    }

    #[test]
    fn kdd_dump_has_twenty_rf_rows() {
        let s = assemble_protocol(&[input()], 2.0, 2.0, &dd(DDKind::Kdd, 1, 30.0), &transfer(), &pi4())
            .unwrap();
        assert_eq!(dump_sequence(&s).matches("\ti-t\t").count(), 20);
    }

    #[test]
    fn two_inputs_reverse_echo_order() {
        let a = input().at(10.0);
        let b = input().at(9.0).with_phase(1.0);
        let s = assemble_protocol(&[a, b], 2.0, 2.0, &dd(DDKind::Cpmg, 1, 30.0), &transfer(), &pi4())
            .unwrap();
        let m = s.markers().unwrap();
        assert_eq!(m.reference_input, 0);
        assert!((m.inputs[0] - m.inputs[1] - 1.0).abs() < 1e-12);
        assert!((m.echoes[1] - m.echoes[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_pulse_protocol_duration() {
        let s = assemble_protocol(
            &[input()],
            2.0,
            2.0,
            &dd(DDKind::TwoPulse, 0, 60.0),
            &transfer(),
            &pi4(),
        )
        .unwrap();
        let m = s.markers().unwrap();
        // transfer 2 reaches further back than the input
        let lead = (3.0 * 0.2_f64).max(3.0 * 2.25 - 2.0);
        let want = lead + 2.0 + 120.0 + 2.0 + 4.0 + 2.0;
        assert!((s.duration() - want).abs() < 1e-9);
        let rf: Vec<f64> = s.pulses().iter().filter(|p| p.role == Role::Rf).map(|p| p.center - m.t2).collect();
        assert_eq!(rf.len(), 2);
        assert!((rf[0] - 30.0).abs() < 1e-9 && (rf[1] - 90.0).abs() < 1e-9);
    }

    #[test]
    fn transfers_too_close_overlap() {
        let e = assemble_protocol(&[input()], 2.0, 2.0, &Storage::Free(10.0), &transfer(), &pi4());
        assert!(matches!(e, Err(SequenceError::Overlap { .. })));
        assert!(assemble_protocol(&[input()], 2.0, 2.0, &Storage::Free(13.5), &transfer(), &pi4()).is_ok());
    }

    #[test]
    fn bad_timing() {
        assert!(assemble_protocol(&[input()], 0.0, 2.0, &Storage::Free(20.0), &transfer(), &pi4()).is_err());
        assert!(assemble_protocol(&[], 2.0, 2.0, &Storage::Free(20.0), &transfer(), &pi4()).is_err());
    }
}
