use std::f64::consts::{PI, TAU};
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    DecayPoint, ExperimentConfig, ExperimentKind, Fits, HarnessError, LossBudget, Meta,
    PhasePoint, RunData, RunResult,
};
use crate::engine::{
    calibrate_transfer, transfer_efficiency, PropagationConfig, RecordWindow, Simulation,
};
use crate::ensemble::{
    calibrate_bath, sample_ensemble, BathCalibration, IonRealization, OUParams, OpticalProfile,
};
use crate::observables::{
    echo_fwhm_us, energy_jackknife, fit_t2eff, fit_visibility, DecayCurve, EchoTrace, FitResult,
    Window,
};
use crate::sequence::{
    assemble_protocol, calibrate_peak_for_area, Channel, DDKind, DDSpec, Envelope, Pulse, Role,
    Sequence, Storage,
};

/// Storage request after rounding to a whole number of decoupling blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct SnappedStorage {
    pub storage: Storage,
    pub requested_us: f64,
    pub spin_us: f64,
    pub rf_pulses: usize,
    pub warning: Option<String>,
}

/// Pulses, ensemble and bookkeeping shared by the points of one run.
#[derive(Debug)]
pub struct Experiment {
    /// Resolved config, with the calibrated transfer peak filled in.
    pub cfg: ExperimentConfig,
    pub ions: Vec<IonRealization>,
    pub inputs: Vec<Pulse>,
    pub transfer: Pulse,
    pub transfer_efficiency: f64,
    pub optical_pi: Pulse,
    pub rf: Pulse,
    /// Half-width of the echo integration window, µs.
    pub echo_half_us: f64,
    ion_runs: AtomicU64,
    steps: AtomicU64,
}

/// Echo measurement of one protocol, averaged over shots.
struct Measured {
    value: f64,
    stderr: f64,
    trace: EchoTrace,
}

fn gaussian(channel: Channel, role: Role, fwhm: f64, area: f64) -> Result<Pulse, HarnessError> {
    let env = Envelope::Gaussian { fwhm };
    let peak = if area > 0.0 { calibrate_peak_for_area(&env, area)? } else { 0.0 };
    Ok(Pulse::new(channel, role, env, peak))
}

impl Experiment {
    /// Validates the config, samples the ensemble and calibrates the transfer.
    pub fn prepare(cfg: &ExperimentConfig) -> Result<Self, HarnessError> {
        let mut cfg = cfg.clone();
        cfg.resolve();
        let bad = cfg.validate();
        if !bad.is_empty() {
            return Err(HarnessError::Validation(bad));
        }
        let ions = sample_ensemble(&cfg.distribution, cfg.seed)?;
        let inputs = cfg
            .inputs
            .as_ref()
            .expect("resolved")
            .iter()
            .map(|i| {
                gaussian(Channel::Ie, Role::Input, i.fwhm_us, i.area_pi * PI)
                    .map(|p| p.at(i.offset_us).with_phase(i.phase_deg.to_radians()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let env = Envelope::SechChirp {
            fwhm: cfg.transfer.fwhm_us,
            sweep: cfg.transfer.sweep_mhz,
        };
        let mut transfer = Pulse::new(Channel::Te, Role::Transfer, env, 0.0);
        let prop = PropagationConfig {
            windows: Vec::new(),
            ..cfg.propagation.clone()
        };
        let efficiency = match cfg.transfer.peak_rabi {
            Some(peak) => {
                transfer.peak_rabi = peak;
                let mut probe = transfer.clone();
                probe.center = env.half_support();
                transfer_efficiency(&probe, &IonRealization::centered(0), &prop)?
            }
            None => {
                let cal = calibrate_transfer(&transfer, cfg.material.transfer_efficiency, &prop)?;
                transfer.peak_rabi = cal.peak_rabi;
                cfg.transfer.peak_rabi = Some(cal.peak_rabi);
                cal.efficiency
            }
        };
        let optical_pi = gaussian(
            Channel::Ie,
            Role::Rephase,
            cfg.optical_pi.fwhm_us,
            cfg.optical_pi.area_pi * PI,
        )?;
        let d = cfg.dd.rf_duration_us;
        let rf = Pulse::new(
            Channel::It,
            Role::Rf,
            Envelope::Rectangular { duration: d },
            cfg.dd.rf_area_pi * PI / d,
        )
        .with_phase(cfg.dd.rf_phase_deg.to_radians());
        let lorentzian = cfg.distribution.optical_profile == OpticalProfile::Lorentzian;
        let echo_half_us = 3.0 * echo_fwhm_us(cfg.distribution.optical_fwhm_mhz, lorentzian);
        Ok(Self {
            cfg,
            ions,
            inputs,
            transfer,
            transfer_efficiency: efficiency,
            optical_pi,
            rf,
            echo_half_us,
            ion_runs: AtomicU64::new(0),
            steps: AtomicU64::new(0),
        })
    }

    /// Spin storage of the requested length for a decoupling kind.
    ///
    /// CPMG lengths are rounded to multiples of `2τ` and KDD lengths to
    /// multiples of `20τ`, with at least one block.
    pub fn snap(&self, kind: DDKind, requested_ms: f64) -> Result<SnappedStorage, HarnessError> {
        let want = 1e3 * requested_ms;
        let tau = self.cfg.dd.tau_us;
        let (spec, pulses) = match kind {
            DDKind::TwoPulse => (
                DDSpec {
                    kind,
                    n: 1,
                    tau: 0.5 * want,
                    template: self.rf.clone(),
                },
                2,
            ),
            DDKind::Cpmg | DDKind::Kdd => {
                let block = if kind == DDKind::Cpmg { 2.0 * tau } else { 20.0 * tau };
                let n = ((want / block).round() as usize).max(1);
                let per = if kind == DDKind::Cpmg { 2 } else { 20 };
                (
                    DDSpec {
                        kind,
                        n,
                        tau,
                        template: self.rf.clone(),
                    },
                    per * n,
                )
            }
        };
        spec.validate()?;
        let spin_us = spec.duration();
        let warning = ((spin_us - want).abs() > 1e-9 * want.max(1.0)).then(|| {
            format!(
                "storage {requested_ms} ms snapped to {} ms ({:?}, N = {})",
                1e-3 * spin_us,
                kind,
                spec.n
            )
        });
        Ok(SnappedStorage {
            storage: Storage::Dd(spec),
            requested_us: want,
            spin_us,
            rf_pulses: pulses,
            warning,
        })
    }

    pub fn protocol(&self, inputs: &[Pulse], storage: &Storage) -> Result<Sequence, HarnessError> {
        let t = &self.cfg.timing;
        Ok(assemble_protocol(
            inputs,
            t.t12_us,
            t.t34_us,
            storage,
            &self.transfer,
            &self.optical_pi,
        )?)
    }

    /// Spin storage of the zero-delay reference: the two transfers back to back.
    pub fn reference_spin_us(&self) -> f64 {
        2.0 * self.transfer.envelope.half_support()
    }

    /// Optical phase added to every input in a shot.
    fn shot_phase(&self, shot: u64) -> f64 {
        if self.cfg.random_input_phase != Some(true) {
            return 0.0;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed ^ 0x5eed_0f_1a5e_u64);
        rng.set_stream(shot);
        rng.random::<f64>() * TAU
    }

    fn simulation(&self, seq: &Sequence, cfg: &PropagationConfig) -> Result<Simulation, HarnessError> {
        let mat = &self.cfg.material;
        Ok(if self.cfg.phase_cycling {
            Simulation::phase_cycled(seq, cfg, mat)?
        } else {
            Simulation::new(seq, cfg, mat)?
        })
    }

    fn count(&self, sim: &Simulation, ions: usize) {
        let runs = ions as u64 * if sim.is_phase_cycled() { 2 } else { 1 };
        self.ion_runs.fetch_add(runs, Ordering::Relaxed);
        self.steps.fetch_add(runs * sim.step_count() as u64, Ordering::Relaxed);
    }

    /// Shot-averaged debiased energy (or mean intensity) over `measure`.
    #[allow(clippy::too_many_arguments)]
    fn measure(
        &self,
        seq: &Sequence,
        record: RecordWindow,
        measure: Window,
        per_time: bool,
        bath: OUParams,
        ions: &[IonRealization],
        shots: usize,
    ) -> Result<Measured, HarnessError> {
        let cfg = PropagationConfig {
            windows: vec![record],
            bath,
            ..self.cfg.propagation.clone()
        };
        let scale = if per_time { 1.0 / measure.width() } else { 1.0 };
        let (mut sum, mut var) = (0.0, 0.0);
        let mut first = None;
        for shot in 0..shots as u64 {
            let phi = self.shot_phase(shot);
            let seq = if phi != 0.0 {
                seq.map_pulses(|p| {
                    if p.role == Role::Input {
                        p.phase += phi;
                    }
                })?
            } else {
                seq.clone()
            };
            let sim = self.simulation(&seq, &cfg)?;
            let trace = sim.run_ensemble(ions, shot)?.remove(0);
            self.count(&sim, ions.len());
            let (e, se) = energy_jackknife(&trace, measure)?;
            sum += scale * e;
            var += (scale * se).powi(2);
            first.get_or_insert(trace);
        }
        let n = shots as f64;
        Ok(Measured {
            value: sum / n,
            stderr: var.sqrt() / n,
            trace: first.expect("at least one shot"),
        })
    }

    fn bath(&self) -> OUParams {
        self.cfg.bath.params()
    }

    /// Echo energy of the latest input after the zero-delay reference storage.
    ///
    /// The reference ions keep their optical detunings and drive scales but
    /// sit at the spin line center, and the bath is off.
    pub fn reference(&self) -> Result<(f64, f64, EchoTrace), HarnessError> {
        let ions: Vec<IonRealization> = self
            .ions
            .iter()
            .map(|ion| IonRealization {
                spin_detuning_khz: 0.0,
                ..*ion
            })
            .collect();
        let latest = self
            .inputs
            .iter()
            .max_by(|a, b| a.center.total_cmp(&b.center))
            .expect("inputs")
            .clone();
        let seq = self.protocol(&[latest], &Storage::Free(self.reference_spin_us()))?;
        let echo = seq.markers().expect("protocol markers").echo();
        let dt = self.cfg.timing.record_dt_us;
        let record = RecordWindow::around(echo, self.echo_half_us, dt);
        let whole = Window::new(record.start, record.start + (record.len() - 1) as f64 * dt);
        let m = self.measure(&seq, record, whole, false, OUParams::disabled(), &ions, 1)?;
        let avg = Window::centered(echo, 0.5 * self.cfg.timing.average_us);
        let (e, _) = energy_jackknife(&m.trace, avg)?;
        Ok((m.value, e / avg.width(), m.trace))
    }

    /// One storage-sweep point.
    fn decay_point(
        &self,
        snapped: &SnappedStorage,
        ions: &[IonRealization],
        bath: OUParams,
        reference: f64,
        shots: usize,
    ) -> Result<(DecayPoint, EchoTrace), HarnessError> {
        let seq = self.protocol(&self.inputs, &snapped.storage)?;
        let m = seq.markers().expect("protocol markers");
        let dt = self.cfg.timing.record_dt_us;
        let record = RecordWindow::around(m.echo(), self.echo_half_us, dt);
        let whole = Window::new(record.start, record.start + (record.len() - 1) as f64 * dt);
        let r = self.measure(&seq, record, whole, false, bath, ions, shots)?;
        Ok((
            DecayPoint {
                requested_ms: 1e-3 * snapped.requested_us,
                spin_ms: 1e-3 * snapped.spin_us,
                t_ms: 1e-3 * m.storage_time,
                rf_pulses: snapped.rf_pulses,
                eta: r.value / reference,
                stderr: r.stderr / reference,
            },
            r.trace,
        ))
    }

    fn loss_budget(&self, reference: f64) -> LossBudget {
        let t = &self.cfg.timing;
        LossBudget {
            transfer_efficiency: self.transfer_efficiency,
            transfer_intensity_factor: self.transfer_efficiency.powi(4),
            optical_dephasing_factor: (-2.0 * (t.t12_us + t.t34_us) / self.cfg.material.t2_opt_us)
                .exp(),
            reference_energy: reference,
            reference_spin_us: self.reference_spin_us(),
            echo_window_us: 2.0 * self.echo_half_us,
        }
    }

    fn meta(&self, start: Instant) -> Meta {
        let wall = start.elapsed().as_secs_f64();
        let runs = self.ion_runs.load(Ordering::Relaxed);
        let steps = self.steps.load(Ordering::Relaxed);
        Meta {
            version: env!("CARGO_PKG_VERSION").to_string(),
            workers: rayon::current_num_threads(),
            wall_s: wall,
            ion_runs: runs,
            steps,
            ion_runs_per_s: runs as f64 / wall.max(1e-9),
            steps_per_s: steps as f64 / wall.max(1e-9),
        }
    }
}

/// Storage sweep of one decoupling kind with a fitted `T₂,eff`.
struct Sweep {
    points: Vec<DecayPoint>,
    traces: Vec<(String, EchoTrace)>,
    fit: Option<FitResult>,
}

fn sweep(
    exp: &Experiment,
    kind: DDKind,
    grid_ms: &[f64],
    ions: &[IonRealization],
    bath: OUParams,
    reference: f64,
    shots: usize,
    warnings: &mut Vec<String>,
) -> Result<Sweep, HarnessError> {
    let mut points: Vec<DecayPoint> = Vec::new();
    let mut traces = Vec::new();
    for &req in grid_ms {
        let snapped = exp.snap(kind, req)?;
        if let Some(w) = &snapped.warning {
            warnings.push(w.clone());
        }
        if points.iter().any(|p| (1e3 * p.spin_ms - snapped.spin_us).abs() < 1e-9) {
            warnings.push(format!("storage {req} ms duplicates an earlier point and is skipped"));
            continue;
        }
        let (p, trace) = exp.decay_point(&snapped, ions, bath, reference, shots)?;
        traces.push((format!("T{:.4}ms", p.t_ms), trace));
        points.push(p);
    }
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| points[a].t_ms.total_cmp(&points[b].t_ms));
    let points: Vec<DecayPoint> = order.iter().map(|&k| points[k].clone()).collect();
    let traces = order.iter().map(|&k| traces[k].clone()).collect();

    let usable: Vec<&DecayPoint> = points.iter().filter(|p| p.eta > 0.0 && p.eta.is_finite()).collect();
    if usable.len() < points.len() {
        warnings.push(format!(
            "{} points with non-positive efficiency left out of the fit",
            points.len() - usable.len()
        ));
    }
    let fit = if usable.len() >= 3 {
        let stderr: Vec<f64> = usable.iter().map(|p| p.stderr).collect();
        let stderr = stderr.iter().all(|s| *s > 0.0 && s.is_finite()).then_some(stderr);
        let curve = DecayCurve::new(
            usable.iter().map(|p| p.t_ms).collect(),
            usable.iter().map(|p| p.eta).collect(),
            stderr,
        )?;
        let fit = fit_t2eff(&curve)?;
        if !fit.converged {
            warnings.push("T2eff fit did not converge".into());
        }
        Some(fit)
    } else {
        warnings.push("fewer than 3 usable points; no T2eff fit".into());
        None
    };
    Ok(Sweep { points, traces, fit })
}

/// Calibrates `σ_b` against the two-pulse target and stores it in the config.
fn calibrate(
    exp: &mut Experiment,
    reference: f64,
    warnings: &mut Vec<String>,
) -> Result<BathCalibration, HarnessError> {
    let b = exp.cfg.bath.clone();
    let mut spec = exp.cfg.distribution.clone();
    spec.n = b.calibration_ions;
    let ions = sample_ensemble(&spec, exp.cfg.seed)?;
    let cal = {
        let exp = &*exp;
        calibrate_bath(b.target_t2_two_pulse_us, b.tau_c_us, &b.calibration, |params| {
            let mut sink = Vec::new();
            let s = sweep(exp, DDKind::TwoPulse, &b.calibration_grid_ms, &ions, *params, reference, b.calibration_shots, &mut sink)
                .map_err(|e| e.to_string())?;
            log::info!("calibration: sigma {:.4} rad/ms", params.sigma_rad_per_ms);
            match s.fit {
                Some(f) if f.converged => Ok(1e3 * f.t2eff_ms),
                Some(_) => Ok(f64::INFINITY),
                None => Err("no usable decay curve".to_string()),
            }
        })?
    };
    if cal.weak_bath {
        warnings.push(format!(
            "weak-bath regime: sigma*tau_c below {}; sigma taken from the motional-narrowing estimate without simulation",
            b.calibration.weak_bath_threshold
        ));
    }
    exp.cfg.bath.sigma_rad_per_ms = Some(cal.params.sigma_rad_per_ms);
    Ok(cal)
}

fn needs_calibration(cfg: &ExperimentConfig) -> bool {
    cfg.bath.enabled && cfg.bath.sigma_rad_per_ms.is_none()
}

fn finish(
    exp: Experiment,
    start: Instant,
    data: RunData,
    fits: Fits,
    reference: f64,
    warnings: Vec<String>,
    traces: Vec<(String, EchoTrace)>,
) -> RunResult {
    for w in &warnings {
        log::warn!("{w}");
    }
    RunResult {
        kind: exp.cfg.kind,
        loss_budget: exp.loss_budget(reference),
        meta: exp.meta(start),
        config: exp.cfg,
        data,
        fits,
        warnings,
        traces,
    }
}

/// Echo efficiency against storage time and the fitted `T₂,eff`.
pub fn run_storage_sweep(cfg: &ExperimentConfig) -> Result<RunResult, HarnessError> {
    let start = Instant::now();
    let mut exp = Experiment::prepare(cfg)?;
    let mut warnings = Vec::new();
    let (reference, _, ref_trace) = exp.reference()?;
    let mut fits = Fits::default();
    if needs_calibration(&exp.cfg) {
        fits.bath = Some(calibrate(&mut exp, reference, &mut warnings)?);
    }
    let grid = exp.cfg.grid.storage_ms.clone().expect("resolved");
    let s = sweep(&exp, exp.cfg.dd_kind(), &grid, &exp.ions, exp.bath(), reference, exp.cfg.shots, &mut warnings)?;
    fits.t2eff = s.fit;
    let mut traces = vec![("reference".to_string(), ref_trace)];
    traces.extend(s.traces);
    Ok(finish(exp, start, RunData::Decay(s.points), fits, reference, warnings, traces))
}

/// Interference of two stored inputs against their relative phase.
///
/// The relative phase is added to the earlier input `1'`. `I_n` is the
/// mean debiased intensity over `average_us` at the midpoint between the
/// two echoes, divided by the same average at the peak of the reference echo.
pub fn run_phase_sweep(cfg: &ExperimentConfig) -> Result<RunResult, HarnessError> {
    let start = Instant::now();
    let mut exp = Experiment::prepare(cfg)?;
    let mut warnings = Vec::new();
    let (reference, ref_peak, ref_trace) = exp.reference()?;
    let mut fits = Fits::default();
    if needs_calibration(&exp.cfg) {
        fits.bath = Some(calibrate(&mut exp, reference, &mut warnings)?);
    }
    let snapped = exp.snap(exp.cfg.dd_kind(), exp.cfg.grid.fixed_storage_ms)?;
    if let Some(w) = &snapped.warning {
        warnings.push(w.clone());
    }
    let early = (0..exp.inputs.len())
        .min_by(|&a, &b| exp.inputs[a].center.total_cmp(&exp.inputs[b].center))
        .expect("inputs");
    let dt = exp.cfg.timing.record_dt_us;
    let mut points = Vec::new();
    let mut traces = vec![("reference".to_string(), ref_trace)];
    for &phi in exp.cfg.grid.phase_deg.as_ref().expect("resolved") {
        let mut inputs = exp.inputs.clone();
        inputs[early].phase += phi.to_radians();
        let seq = exp.protocol(&inputs, &snapped.storage)?;
        let m = seq.markers().expect("protocol markers");
        let lo = m.echoes.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = m.echoes.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mid = 0.5 * (lo + hi);
        let half = 0.5 * (hi - lo) + exp.echo_half_us;
        let record = RecordWindow::around(mid, half, dt);
        let avg = Window::centered(mid, 0.5 * exp.cfg.timing.average_us);
        let r = exp.measure(&seq, record, avg, true, exp.bath(), &exp.ions, exp.cfg.shots)?;
        points.push(PhasePoint {
            phi_deg: phi,
            i_n: r.value / ref_peak,
            stderr: r.stderr / ref_peak,
        });
        traces.push((format!("phi{phi}deg"), r.trace));
    }
    let pairs: Vec<(f64, f64)> = points.iter().map(|p| (p.phi_deg.to_radians(), p.i_n)).collect();
    match fit_visibility(&pairs) {
        Ok(v) => {
            if v.clamped {
                warnings.push(format!("visibility {:.4} clamped to 1", v.raw_v));
            }
            fits.visibility = Some(v);
        }
        Err(e) => warnings.push(format!("no visibility fit: {e}")),
    }
    Ok(finish(exp, start, RunData::Phase(points), fits, reference, warnings, traces))
}

/// Calibrates the bath and checks it with a fresh two-pulse sweep.
///
/// The check uses a new ensemble drawn from `seed + 1` with
/// `distribution.n` ions on the calibration grid.
pub fn run_bath_calibration(cfg: &ExperimentConfig) -> Result<RunResult, HarnessError> {
    let start = Instant::now();
    let mut cfg = cfg.clone();
    cfg.bath.enabled = true;
    cfg.bath.sigma_rad_per_ms = None;
    let mut exp = Experiment::prepare(&cfg)?;
    let mut warnings = Vec::new();
    let (reference, _, ref_trace) = exp.reference()?;
    let cal = calibrate(&mut exp, reference, &mut warnings)?;
    let mut fits = Fits::default();
    let mut points = Vec::new();
    let mut traces = vec![("reference".to_string(), ref_trace)];
    if cal.weak_bath {
        warnings.push("verification sweep skipped in the weak-bath regime".into());
    } else {
        let fresh = sample_ensemble(&exp.cfg.distribution, exp.cfg.seed.wrapping_add(1))?;
        let grid = exp.cfg.bath.calibration_grid_ms.clone();
        let s = sweep(&exp, DDKind::TwoPulse, &grid, &fresh, exp.bath(), reference, exp.cfg.shots, &mut warnings)?;
        fits.t2eff = s.fit;
        points = s.points;
        traces.extend(s.traces);
    }
    fits.bath = Some(cal);
    Ok(finish(exp, start, RunData::Decay(points), fits, reference, warnings, traces))
}

/// Runs the experiment named by `cfg.kind` on `cfg.workers` threads.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunResult, HarnessError> {
    let go = || match cfg.kind {
        ExperimentKind::StorageSweep => run_storage_sweep(cfg),
        ExperimentKind::PhaseSweep => run_phase_sweep(cfg),
        ExperimentKind::BathCalibration => run_bath_calibration(cfg),
    };
    match cfg.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| HarnessError::Io(format!("thread pool: {e}")))?
            .install(go),
        None => go(),
    }
}

/// Protocol of the first grid point, with any snapping warning.
pub fn build_protocol(cfg: &ExperimentConfig) -> Result<(Sequence, Vec<String>), HarnessError> {
    let exp = Experiment::prepare(cfg)?;
    let (kind, ms, mut inputs) = match exp.cfg.kind {
        ExperimentKind::StorageSweep => (
            exp.cfg.dd_kind(),
            exp.cfg.grid.storage_ms.as_ref().expect("resolved")[0],
            exp.inputs.clone(),
        ),
        ExperimentKind::PhaseSweep => {
            (exp.cfg.dd_kind(), exp.cfg.grid.fixed_storage_ms, exp.inputs.clone())
        }
        ExperimentKind::BathCalibration => {
            (DDKind::TwoPulse, exp.cfg.bath.calibration_grid_ms[0], exp.inputs.clone())
        }
    };
    if exp.cfg.kind == ExperimentKind::PhaseSweep {
        let phi = exp.cfg.grid.phase_deg.as_ref().expect("resolved")[0];
        if let Some(p) = inputs.iter_mut().min_by(|a, b| a.center.total_cmp(&b.center)) {
            p.phase += phi.to_radians();
        }
    }
    let snapped = exp.snap(kind, ms)?;
    let seq = exp.protocol(&inputs, &snapped.storage)?;
    Ok((seq, snapped.warning.into_iter().collect()))
}

/// Energy of the zero-delay reference echo.
pub fn reference_energy(cfg: &ExperimentConfig) -> Result<(f64, EchoTrace), HarnessError> {
    let exp = Experiment::prepare(cfg)?;
    let (e, _, trace) = exp.reference()?;
    Ok((e, trace))
}
