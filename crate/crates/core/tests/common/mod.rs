#![allow(dead_code)]

use std::f64::consts::PI;

use echomem::engine::{calibrate_transfer, PropagationConfig};
use echomem::sequence::{
    assemble_protocol, calibrate_peak_for_area, Channel, DDKind, DDSpec, Envelope, Pulse, Role,
    Sequence, Storage,
};

pub fn transfer() -> Pulse {
    let env = Envelope::SechChirp {
        fwhm: 2.25,
        sweep: 2.0,
    };
    let template = Pulse::new(Channel::Te, Role::Transfer, env, 0.0);
    let cal = calibrate_transfer(&template, 0.87, &PropagationConfig::default()).unwrap();
    Pulse::new(Channel::Te, Role::Transfer, env, cal.peak_rabi)
}

pub fn gaussian(role: Role, fwhm: f64, area: f64) -> Pulse {
    let env = Envelope::Gaussian { fwhm };
    Pulse::new(Channel::Ie, role, env, calibrate_peak_for_area(&env, area).unwrap())
}

pub fn input() -> Pulse {
    gaussian(Role::Input, 0.2, 0.1 * PI)
}

pub fn optical_pi() -> Pulse {
    gaussian(Role::Rephase, 0.425, PI)
}

/// Rectangular RF π pulse of the given length.
pub fn rf(duration: f64) -> Pulse {
    Pulse::new(
        Channel::It,
        Role::Rf,
        Envelope::Rectangular { duration },
        PI / duration,
    )
}

pub fn cpmg(n: usize, tau: f64, rf_len: f64) -> Storage {
    Storage::Dd(DDSpec {
        kind: DDKind::Cpmg,
        n,
        tau,
        template: rf(rf_len),
    })
}

pub fn protocol(input: &Pulse, storage: &Storage, transfer: &Pulse) -> Sequence {
    assemble_protocol(std::slice::from_ref(input), 2.0, 2.0, storage, transfer, &optical_pi()).unwrap()
}
