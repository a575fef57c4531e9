//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on failure.

use std::f64::consts::PI;
use std::time::Instant;

use echomem::engine::{
    calibrate_transfer, transfer_efficiency, DensityState, GapMode,
    PropagationConfig, RecordWindow, Simulation, StepPolicy,
};
use echomem::ensemble::filter::{cpmg_gain, tau_c_for_gain};
use echomem::ensemble::{sample_ensemble, DistributionSpec, IonRealization, OUParams};
use echomem::harness::{
    build_protocol, decay_csv, parse_config, run_experiment, two_pulse_grid, ExperimentConfig,
    RunData, RunResult,
};
use echomem::model::default_material;
use echomem::observables::{fit_t2eff, fit_visibility, DecayCurve};
use echomem::sequence::{Channel, DDKind, DDSpec, Envelope, Pulse, Role, Sequence};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Report {
    failed: usize,
}

impl Report {
    fn check(&mut self, name: &str, pass: bool, detail: String) {
        if !pass {
            self.failed += 1;
        }
        println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    }

    fn error(&mut self, name: &str, e: impl std::fmt::Display) {
        self.check(name, false, format!("error: {e}"));
    }
}

fn info(msg: String) {
    println!("INFO {msg}");
}

fn cores() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn config(json: &str) -> ExperimentConfig {
    parse_config(json).expect("acceptance config")
}

fn decay(result: &RunResult) -> &[echomem::harness::DecayPoint] {
    match &result.data {
        RunData::Decay(p) => p,
        RunData::Phase(_) => panic!("decay data expected"),
    }
}

fn t2_us(result: &RunResult) -> Option<f64> {
    result.fits.t2eff.as_ref().filter(|f| f.converged).map(|f| 1e3 * f.t2eff_ms)
}

/// Echo peak of the default protocol against `t₄ + t₁₂ + t₃₄`.
fn echo_timing(r: &mut Report) {
    let start = Instant::now();
    let cfg = config(r#"{"kind": "storage_sweep", "seed": 1, "distribution": {"n": 1000}, "bath": {"enabled": false}}"#);
    let (seq, _) = build_protocol(&cfg).unwrap();
    let m = seq.markers().unwrap().clone();
    let dt = 0.01;
    let prop = PropagationConfig {
        windows: vec![RecordWindow::around(m.echo(), 1.25, dt)],
        ..Default::default()
    };
    let sim = Simulation::phase_cycled(&seq, &prop, &cfg.material).unwrap();
    let ions = sample_ensemble(&cfg.distribution, cfg.seed).unwrap();
    let trace = sim.run_ensemble(&ions, 0).unwrap().remove(0);
    let peak = trace.peak_time();
    let want = m.t4 + 4.0;
    let secs = start.elapsed().as_secs_f64();
    r.check(
        "AC1 echo timing",
        (peak - want).abs() <= dt + 1e-9 && dt <= 0.01,
        format!(
            "peak at t4 + {:.3} us, expected t4 + 4 us within {dt} us grid; 1000 ions in {secs:.1} s (budget 5 s)",
            peak - m.t4
        ),
    );
}

fn transfer(r: &mut Report) {
    let start = Instant::now();
    let env = Envelope::SechChirp { fwhm: 2.25, sweep: 2.0 };
    let template = Pulse::new(Channel::Te, Role::Transfer, env, 0.0);
    let prop = PropagationConfig::default();
    let cal = calibrate_transfer(&template, 0.87, &prop).unwrap();
    let mut p = Pulse::new(Channel::Te, Role::Transfer, env, cal.peak_rabi);
    p.center = env.half_support();
    let at = |mhz: f64| {
        let ion = IonRealization {
            optical_detuning_mhz: mhz,
            ..IonRealization::centered(0)
        };
        transfer_efficiency(&p, &ion, &prop).unwrap()
    };
    let center = at(0.0);
    let edge = at(-0.75).min(at(0.75));
    let band = (-15..=15).map(|k| at(0.05 * k as f64)).fold(f64::INFINITY, f64::min);
    let secs = start.elapsed().as_secs_f64();
    r.check(
        "AC2 transfer efficiency",
        center >= 0.87 && edge >= 0.80,
        format!(
            "center {center:.4} (>= 0.87), band edges {edge:.4} (>= 0.80), band minimum {band:.4}; {secs:.1} s (budget 10 s)"
        ),
    );
}

/// Returns the calibrated `σ_b` (rad/ms) and the verified two-pulse `T₂,eff` (µs).
fn bath_closure(r: &mut Report) -> (f64, Option<f64>) {
    let start = Instant::now();
    let cfg = config(
        r#"{"kind": "bath_calibration", "seed": 230,
            "distribution": {"n": 4000}, "shots": 4,
            "bath": {"target_t2_two_pulse_us": 230.0, "tau_c_us": 10.0}}"#,
    );
    match run_experiment(&cfg) {
        Ok(res) => {
            let sigma = res.config.bath.sigma_rad_per_ms.unwrap();
            let t2 = t2_us(&res);
            let secs = start.elapsed().as_secs_f64();
            let evals = res.fits.bath.as_ref().map_or(0, |b| b.history.len());
            r.check(
                "AC3 bath calibration closure",
                decay(&res).len() == 12 && t2.is_some_and(|t| (218.5..=241.5).contains(&t)),
                format!(
                    "sigma_b {sigma:.3} rad/ms after {evals} measurements; fresh 12-point sweep of 4000 ions x 4 bath shots fits T2eff {} us (window [218.5, 241.5]); {secs:.0} s on {} cores (budget 300 s)",
                    t2.map_or("none".into(), |t| format!("{t:.1}")),
                    cores()
                ),
            );
            (sigma, t2)
        }
        Err(e) => {
            r.error("AC3 bath calibration closure", &e);
            let grid: Vec<f64> = two_pulse_grid().iter().map(|t| 1e3 * t).collect();
            let s = echomem::ensemble::filter::sigma_for_two_pulse_t2(230.0, &grid, 10.0);
            (1e3 * s, None)
        }
    }
}

fn dd_extension(r: &mut Report, sigma: f64, two: Option<f64>) {
    let start = Instant::now();
    let run = |kind: &str, grid: &str| {
        run_experiment(&config(&format!(
            r#"{{"kind": "storage_sweep", "seed": 31,
                "distribution": {{"n": 4000}},
                "bath": {{"tau_c_us": 10.0, "sigma_rad_per_ms": {sigma}}},
                "dd": {{"kind": "{kind}", "tau_us": 30.0}},
                "grid": {{"storage_ms": {grid}}}}}"#
        )))
    };
    let cpmg = run("cpmg", "[0.12, 0.24, 0.36, 0.48, 0.6, 0.72, 0.84, 0.96, 1.08, 1.2]");
    let kdd = run("kdd", "[0.6, 1.2, 1.8, 2.4]");
    let secs = start.elapsed().as_secs_f64();
    match (cpmg, kdd, two) {
        (Ok(c), Ok(k), Some(two)) => {
            let (tc, tk) = (t2_us(&c), t2_us(&k));
            let gain = |t: Option<f64>| t.map_or(0.0, |t| t / two);
            r.check(
                "AC4 DD extension",
                gain(tc) >= 5.0 && gain(tk) >= 5.0,
                format!(
                    "two-pulse {two:.1} us; CPMG {} us ({:.2}x), KDD {} us ({:.2}x), required >= 5x; {secs:.0} s",
                    tc.map_or("none".into(), |t| format!("{t:.1}")),
                    gain(tc),
                    tk.map_or("none".into(), |t| format!("{t:.1}")),
                    gain(tk)
                ),
            );
            info(format!("AC4 CPMG decay:\n{}", decay_csv(decay(&c)).trim_end()));
            info(format!("AC4 KDD decay:\n{}", decay_csv(decay(&k)).trim_end()));
        }
        (c, k, two) => {
            let why = [c.err().map(|e| e.to_string()), k.err().map(|e| e.to_string())]
                .into_iter()
                .flatten()
                .chain(two.is_none().then(|| "no two-pulse T2eff from the calibration".into()))
                .collect::<Vec<_>>()
                .join("; ");
            r.error("AC4 DD extension", why);
        }
    }
    let two_grid: Vec<f64> = two_pulse_grid().iter().map(|t| 1e3 * t).collect();
    let cpmg_grid: Vec<f64> = (1..=10).map(|k| 120.0 * k as f64).collect();
    let at10 = cpmg_gain(&two_grid, &cpmg_grid, 30.0, 10.0);
    let wide: Vec<f64> = (1..=10).map(|k| 1200.0 * k as f64).collect();
    let tc = tau_c_for_gain(36.5, &two_grid, &wide, 30.0, (10.0, 1e4));
    info(format!(
        "AC4 analytic OU filter: CPMG gain at tau_c = 10 us is {at10:.2}; a gain of 36.5 needs tau_c = {}",
        tc.map_or("none in [10, 1e4] us".into(), |t| format!("{t:.1} us"))
    ));
}

/// Mean spin coherence after a decoupling fragment, starting along the RF X axis.
fn spin_coherence(kind: DDKind, n: usize, tau: f64, spec: &DistributionSpec) -> f64 {
    let template = Pulse::new(Channel::It, Role::Rf, Envelope::Rectangular { duration: 5.0 }, PI / 5.0);
    let f = DDSpec { kind, n, tau, template }.build().unwrap();
    let sim = Simulation::over(&f.pulses, 0.0, f.duration, &PropagationConfig::default(), &default_material())
        .unwrap()
        .with_initial(DensityState::superposition(0, 1, 0.0));
    let ions = sample_ensemble(spec, 5).unwrap();
    let states = sim.final_states(&ions, 0).unwrap();
    let sum: echomem::engine::C64 = states.iter().map(|s| s.spin()).sum();
    2.0 * sum.norm() / ions.len() as f64
}

fn asymmetry(r: &mut Report, sigma: f64) {
    let start = Instant::now();
    let run = |kind: &str, n: usize| {
        run_experiment(&config(&format!(
            r#"{{"kind": "storage_sweep", "seed": 300, "shots": 4,
                "distribution": {{"n": 2000, "rf_sigma": 0.02}},
                "bath": {{"tau_c_us": 10.0, "sigma_rad_per_ms": {sigma}}},
                "dd": {{"kind": "{kind}", "tau_us": 15.0}},
                "grid": {{"storage_ms": [0.3]}}}}"#
        )))
        .map(|res| {
            let p = &decay(&res)[0];
            assert_eq!(p.rf_pulses, 2 * n * if kind == "kdd" { 10 } else { 1 });
            (p.eta, p.stderr)
        })
    };
    let (c, k) = (run("cpmg", 10), run("kdd", 1));
    let spec = DistributionSpec { n: 2000, rf_sigma: 0.0, ..Default::default() };
    let cx = spin_coherence(DDKind::Cpmg, 10, 15.0, &spec);
    let kx = spin_coherence(DDKind::Kdd, 1, 15.0, &spec);
    let aligned = (kx / cx).powi(2);
    let secs = start.elapsed().as_secs_f64();
    match (c, k) {
        (Ok((ec, sc)), Ok((ek, sk))) => {
            let ratio = ek / ec;
            r.check(
                "AC5 CPMG/KDD asymmetry",
                ratio >= 1.5 && (aligned - 1.0).abs() <= 0.05,
                format!(
                    "300 us, tau 15 us, rf sigma 2%, 4 random-phase shots: eta KDD {ek:.4}+-{sk:.4}, CPMG {ec:.4}+-{sc:.4}, ratio {ratio:.3} (>= 1.5); rf sigma 0, spin coherence along X: ratio {aligned:.4} (1 +- 0.05); {secs:.0} s"
                ),
            );
        }
        (c, k) => {
            let e = c.err().or(k.err()).unwrap();
            r.error("AC5 CPMG/KDD asymmetry", e);
        }
    }
}

fn visibility(r: &mut Report) {
    let start = Instant::now();
    let cfg = config(
        r#"{"kind": "phase_sweep", "seed": 4,
            "distribution": {"n": 2000},
            "bath": {"enabled": false},
            "dd": {"kind": "kdd", "tau_us": 30.0},
            "grid": {"phase_deg": [0, -45, -90, -135, -180, -225, -270, -315], "fixed_storage_ms": 3.0}}"#,
    );
    let res = match run_experiment(&cfg) {
        Ok(res) => res,
        Err(e) => return r.error("AC6 visibility", e),
    };
    let RunData::Phase(points) = &res.data else { unreachable!() };
    let secs = start.elapsed().as_secs_f64();
    let Some(v) = res.fits.visibility.clone() else {
        return r.error("AC6 visibility", "no visibility fit");
    };
    let at = |deg: f64| points.iter().find(|p| p.phi_deg == deg).unwrap();
    let (a, b) = (at(0.0), at(-180.0));
    let tol = 2.0 * a.stderr.hypot(b.stderr);
    let best = points.iter().max_by(|x, y| x.i_n.total_cmp(&y.i_n)).unwrap();
    let rel = v.residual_norm / v.i_max;
    r.check(
        "AC6 visibility",
        v.v >= 0.98 && rel <= 0.02 && (a.i_n - b.i_n).abs() <= tol,
        format!(
            "V {:.4} (raw {:.4}, >= 0.98), residual {:.4} of I_max (<= 0.02), I(0) {:.4} vs I(-180) {:.4} (|diff| {:.4}, 2 stderr {tol:.4}); grid maximum at {} deg; {secs:.0} s",
            v.v,
            v.raw_v,
            rel,
            a.i_n,
            b.i_n,
            (a.i_n - b.i_n).abs(),
            best.phi_deg
        ),
    );
    let fringe: Vec<String> = points.iter().map(|p| format!("{}:{:.4}", p.phi_deg, p.i_n)).collect();
    info(format!("AC6 fringe I_n {}", fringe.join(" ")));
}

/// A thousand random pulses on all three channels.
fn fuzz_sequence(seed: u64) -> (Sequence, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pulses = Vec::new();
    let mut t = 0.5;
    let mut free = [0.0f64; 3];
    for _ in 0..1000 {
        let ch = Channel::ALL[rng.random_range(0..3)];
        let env = match rng.random_range(0..3) {
            0 => Envelope::Gaussian { fwhm: rng.random_range(0.05..0.6) },
            1 => Envelope::Rectangular { duration: rng.random_range(0.05..1.5) },
            _ => Envelope::SechChirp { fwhm: rng.random_range(0.1..0.6), sweep: rng.random_range(0.0..3.0) },
        };
        let p = Pulse::new(ch, Role::Other, env, rng.random_range(0.0..25.0))
            .with_phase(rng.random_range(0.0..2.0 * PI));
        let h = p.envelope.half_support();
        // pulses on different channels may overlap
        let start = (t - rng.random_range(0.0..0.5f64).min(t)).max(free[ch.index()] + 1e-6);
        pulses.push(p.at(start + h));
        free[ch.index()] = start + 2.0 * h;
        t = t.max(start + 2.0 * h) + rng.random_range(0.0..0.3);
    }
    (Sequence::new(pulses, t + 0.5, None).unwrap(), t + 0.5)
}

fn integrity(r: &mut Report) {
    let start = Instant::now();
    // invariants after every operation
    let (seq, end) = fuzz_sequence(7);
    let mut mat = default_material();
    mat.t1_us = Some(40.0);
    let cfg = PropagationConfig {
        check_invariants: true,
        bath: OUParams::new(10.0, 40.0),
        spin_t2_floor_us: Some(300.0),
        windows: vec![RecordWindow::new(0.0, end, 0.25)],
        ..Default::default()
    };
    let spec = DistributionSpec { n: 16, rf_sigma: 0.05, optical_sigma: 0.05, ..Default::default() };
    let ions = sample_ensemble(&spec, 77).unwrap();
    let fuzz = Simulation::new(&seq, &cfg, &mat)
        .and_then(|sim| sim.final_states(&ions, 0).map(|s| (s.len(), sim.step_count())));

    // step halving on the default protocol
    let proto = config(r#"{"kind": "storage_sweep", "seed": 1, "bath": {"enabled": false}}"#);
    let (pseq, _) = build_protocol(&proto).unwrap();
    let echo = pseq.markers().unwrap().echo();
    let amp = |f: f64| {
        let cfg = PropagationConfig {
            step: StepPolicy::Fraction(f),
            windows: vec![RecordWindow::new(echo, echo, 0.01)],
            ..Default::default()
        };
        let sim = Simulation::phase_cycled(&pseq, &cfg, &proto.material).unwrap();
        let ions = sample_ensemble(&DistributionSpec { n: 64, ..Default::default() }, 3).unwrap();
        sim.run_ensemble(&ions, 0).unwrap()[0].polarization()[0].norm()
    };
    let (a40, a80) = (amp(40.0), amp(80.0));
    let halving = ((a40 - a80) / a80).abs();

    // analytic against stepped gaps: 10^5 seeds through a spin Hahn sequence
    let bath = OUParams::new(10.0, 25.0);
    let stats = |gap: GapMode| {
        let cfg = PropagationConfig { bath, gap, ..Default::default() };
        let rf = Pulse::new(Channel::It, Role::Rf, Envelope::Rectangular { duration: 1e-4 }, PI / 1e-4);
        let seq = Sequence::new(vec![rf.at(60.0)], 120.0, None).unwrap();
        let sim = Simulation::new(&seq, &cfg, &mat)
            .unwrap()
            .with_initial(DensityState::superposition(0, 1, 0.0));
        let n = 100_000u64;
        let ions: Vec<IonRealization> = (0..n).map(IonRealization::centered).collect();
        let states = sim.final_states(&ions, 0).unwrap();
        let ph: Vec<f64> = states.iter().map(|s| s.spin().arg()).collect();
        let k = n as f64;
        let coh = ph.iter().map(|p| p.cos()).sum::<f64>() / k;
        let var = ph.iter().map(|p| p * p).sum::<f64>() / k - (ph.iter().sum::<f64>() / k).powi(2);
        (coh, var)
    };
    let (ca, va) = stats(GapMode::Analytic);
    let (cs, vs) = stats(GapMode::Stepped { step_us: 0.05 });
    let (dc, dv) = ((ca / cs - 1.0).abs(), (va / vs - 1.0).abs());
    let secs = start.elapsed().as_secs_f64();
    match fuzz {
        Ok((count, steps)) => r.check(
            "AC7 numerical integrity",
            seq.pulses().len() >= 1000 && halving < 1e-5 && dc <= 0.02 && dv <= 0.02,
            format!(
                "invariants held on every step of a {}-pulse fuzz run ({steps} steps, {count} ions); step halving changes the echo by {halving:.2e} (< 1e-5); analytic vs stepped gaps over 1e5 seeds: coherence {ca:.4} vs {cs:.4} ({:.2}%), phase variance {va:.4} vs {vs:.4} ({:.2}%), within 2%; {secs:.0} s",
                seq.pulses().len(),
                100.0 * dc,
                100.0 * dv
            ),
        ),
        Err(e) => r.error("AC7 numerical integrity", format!("fuzz run: {e}")),
    }
}

fn determinism(r: &mut Report, sigma: f64) {
    let start = Instant::now();
    let mut cfg = config(&format!(
        r#"{{"kind": "storage_sweep", "seed": 8,
            "distribution": {{"n": 160}},
            "bath": {{"tau_c_us": 10.0, "sigma_rad_per_ms": {sigma}}},
            "dd": {{"kind": "cpmg", "tau_us": 30.0}},
            "grid": {{"storage_ms": [0.12, 0.6]}}}}"#
    ));
    let max = cores();
    let mut outputs = Vec::new();
    for w in [1, 4, max] {
        cfg.workers = Some(w);
        let res = run_experiment(&cfg).unwrap();
        outputs.push((decay_csv(decay(&res)), serde_json::to_string(&res.fits).unwrap()));
    }
    let same = outputs.windows(2).all(|w| w[0] == w[1]);

    let workers = max.min(4);
    let mut big = config(&format!(
        r#"{{"kind": "storage_sweep", "seed": 9,
            "distribution": {{"n": 10000}},
            "bath": {{"tau_c_us": 10.0, "sigma_rad_per_ms": {sigma}}},
            "dd": {{"kind": "cpmg", "tau_us": 30.0}},
            "grid": {{"storage_ms": [3.0]}}}}"#
    ));
    big.workers = Some(workers);
    match run_experiment(&big) {
        Ok(res) => {
            let m = &res.meta;
            let p = &decay(&res)[0];
            r.check(
                "AC8 determinism and scaling",
                same && m.wall_s < 60.0,
                format!(
                    "outputs identical for workers 1, 4, {max}: {same}; 10^4-ion CPMG run at 3 ms ({} RF pulses, phase cycled) took {:.1} s on {workers} workers (< 60 s), throughput {:.0} ion runs/s, {:.2e} steps/s; total {:.0} s",
                    p.rf_pulses,
                    m.wall_s,
                    m.ion_runs_per_s,
                    m.steps_per_s,
                    start.elapsed().as_secs_f64()
                ),
            )
        }
        Err(e) => r.error("AC8 determinism and scaling", e),
    }
}

fn fit_round_trips(r: &mut Report) {
    let mut worst: f64 = 0.0;
    let mut ok = true;
    for t2 in [0.23, 1.9, 8.4] {
        let t: Vec<f64> = (1..=12).map(|k| t2 * 0.15 * k as f64).collect();
        let eta: Vec<f64> = t.iter().map(|t| 0.3 * (-2.0 * t / t2).exp()).collect();
        match DecayCurve::new(t, eta, None).and_then(|c| fit_t2eff(&c)) {
            Ok(f) => worst = worst.max((f.t2eff_ms / t2 - 1.0).abs()),
            Err(_) => ok = false,
        }
    }
    let pts: Vec<(f64, f64)> = (0..8)
        .map(|k| {
            let phi = -PI / 4.0 * k as f64;
            (phi, 0.5 * 0.8 * (1.0 + 0.99 * (phi + 0.3).sin()))
        })
        .collect();
    let dv = fit_visibility(&pts).map(|v| (v.v - 0.99).abs()).unwrap_or(f64::INFINITY);
    r.check(
        "AC9 fit round trips",
        ok && worst <= 1e-3 && dv <= 1e-6,
        format!("T2eff {{0.23, 1.9, 8.4}} ms worst relative error {worst:.2e} (<= 1e-3); V = 0.99 recovered within {dv:.1e} (<= 1e-6)"),
    );
}

fn main() {
    let mut r = Report { failed: 0 };
    info(format!("{} cores available", cores()));
    echo_timing(&mut r);
    transfer(&mut r);
    let (sigma, two) = bath_closure(&mut r);
    dd_extension(&mut r, sigma, two);
    asymmetry(&mut r, sigma);
    visibility(&mut r);
    integrity(&mut r);
    determinism(&mut r, sigma);
    fit_round_trips(&mut r);
    println!("{} of 9 criteria failed", r.failed);
    if r.failed > 0 {
        std::process::exit(1);
    }
}
