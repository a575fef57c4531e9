use std::cell::Cell;
use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::kernel::{
    channel_scale, evolve_in_place, free_phase, optical_detuning, rotate_diagonal,
    spin_detuning, step_unitary, DissFactors, Dissipation, PAIRS,
};
use super::plan::{Op, Plan, Step, INV_SQRT_3};
use super::state::{DensityState, Mat3, Tolerances, C64};
use super::{EngineError, FrameConvention, GapMode, PropagationConfig};
use crate::ensemble::{ou_stationary, ou_step, IonRealization, OUParams, OuPhaseKernel};
use crate::model::MaterialParams;
use crate::observables::{BlockSums, EchoTrace};
use crate::sequence::{Channel, Pulse, Role, Sequence};

/// Ions per reduction block. Blocks are contiguous in ion index and summed
/// in index order, so the ensemble sum does not depend on scheduling.
pub const BLOCK_SIZE: usize = 32;

/// Spin-bath trajectory of one ion in one shot.
#[derive(Debug, Clone)]
pub struct BathStream {
    params: OUParams,
    value: f64,
    rng: ChaCha8Rng,
    kernel: Option<OuPhaseKernel>,
}

impl BathStream {
    /// Starts from a stationary draw when the bath is active.
    pub fn new(params: &OUParams, ion: &IonRealization, shot: u64) -> Self {
        let mut rng = ion.bath_rng(shot);
        let value = if params.is_active() {
            ou_stationary(params, &mut rng)
        } else {
            0.0
        };
        Self {
            params: *params,
            value,
            rng,
            kernel: None,
        }
    }

    pub fn inactive() -> Self {
        Self {
            params: OUParams::disabled(),
            value: 0.0,
            rng: ChaCha8Rng::seed_from_u64(0),
            kernel: None,
        }
    }

    pub fn is_active(&self) -> bool {
        self.params.is_active()
    }

    /// Current bath value, rad/ms.
    pub fn value(&self) -> f64 {
        self.value
    }

    /// Advances by `dt` µs and returns the accumulated phase in radians.
    pub fn advance_phase(&mut self, dt: f64) -> f64 {
        if !self.is_active() {
            return 0.0;
        }
        let kernel = match self.kernel {
            Some(k) if k.dt == dt => k,
            _ => {
                let k = OuPhaseKernel::new(&self.params, dt);
                self.kernel = Some(k);
                k
            }
        };
        let (next, phase) = kernel.draw(self.value, &mut self.rng);
        self.value = next;
        phase
    }

    /// Advances by `dt` µs without tracking the phase.
    pub fn advance(&mut self, dt: f64) {
        if self.is_active() {
            self.value = ou_step(&self.params, self.value, dt, &mut self.rng);
        }
    }
}

/// Effective Hamiltonian of the fourth-order Magnus step from the samples
/// at the two Gauss points: `(H₁ + H₂)/2 − i(√3 h/12)[H₂, H₁]`.
fn magnus4(a: ([f64; 3], [C64; 3]), b: ([f64; 3], [C64; 3]), h: f64) -> ([f64; 3], [C64; 3]) {
    let full = |(d, c): ([f64; 3], [C64; 3])| {
        let mut m = [[C64::new(0.0, 0.0); 3]; 3];
        for k in 0..3 {
            m[k][k] = C64::new(d[k], 0.0);
        }
        for (k, &(p, q)) in PAIRS.iter().enumerate() {
            m[p][q] = c[k];
            m[q][p] = c[k].conj();
        }
        m
    };
    let (h1, h2) = (full(a), full(b));
    let comm = |i: usize, j: usize| {
        (0..3).fold(C64::new(0.0, 0.0), |acc, k| acc + h2[i][k] * h1[k][j] - h1[i][k] * h2[k][j])
    };
    let mi = C64::new(0.0, -0.25 * INV_SQRT_3 * h);
    let diag = std::array::from_fn(|k| 0.5 * (a.0[k] + b.0[k]) + (mi * comm(k, k)).re);
    let c = std::array::from_fn(|k| {
        let (p, q) = PAIRS[k];
        0.5 * (a.1[k] + b.1[k]) + mi * comm(p, q)
    });
    (diag, c)
}

/// Per-ion constants used inside the propagation loop.
struct IonCtx {
    optical: f64,
    spin: f64,
    scale: [f64; 3],
    diss: Dissipation,
    diss_cache: Cell<Option<DissFactors>>,
    gap: GapMode,
    check: Option<Tolerances>,
}

impl IonCtx {
    fn new(ion: &IonRealization, cfg: &PropagationConfig, mat: &MaterialParams) -> Self {
        Self {
            optical: optical_detuning(ion),
            spin: spin_detuning(ion),
            scale: Channel::ALL.map(|c| channel_scale(ion, c)),
            diss: Dissipation::new(mat, cfg.optical_dephasing, cfg.spin_t2_floor_us),
            diss_cache: Cell::new(None),
            gap: cfg.gap,
            check: cfg.check_invariants.then_some(cfg.tolerances),
        }
    }

    fn check(&self, s: &DensityState, t: f64) -> Result<(), EngineError> {
        match &self.check {
            Some(tol) => s.check(tol, t),
            None => Ok(()),
        }
    }

    fn dissipate(&self, rho: &mut Mat3, dt: f64) {
        if self.diss.is_none() || dt == 0.0 {
            return;
        }
        let f = match self.diss_cache.get() {
            Some(f) if f.dt == dt => f,
            _ => {
                let f = self.diss.factors(dt);
                self.diss_cache.set(Some(f));
                f
            }
        };
        f.apply(rho);
    }

    fn step(&self, s: &Step, state: &mut DensityState, bath: &mut BathStream) {
        let half = 0.5 * s.dt;
        let rho = state.matrix_mut();
        self.dissipate(rho, half);
        let b = bath.advance_phase(s.dt) / s.dt;
        let d0 = s.d0.map(|z| z.conj());
        rotate_diagonal(rho, &d0);
        let ham = |j: usize| {
            let r = s.rate[j];
            let diag = [-r[0], self.spin + b - r[1], self.optical - r[2]];
            let c: [C64; 3] = std::array::from_fn(|k| s.coupling[j][k] * self.scale[k]);
            (diag, c)
        };
        let (diag, c) = if s.uniform {
            ham(0)
        } else {
            magnus4(ham(0), ham(1), s.dt)
        };
        evolve_in_place(rho, diag, c, s.dt);
        rotate_diagonal(rho, &s.d1);
        state.hermitize();
        self.dissipate(state.matrix_mut(), half);
    }

    fn gap(
        &self,
        t0: f64,
        dt: f64,
        state: &mut DensityState,
        bath: &mut BathStream,
    ) -> Result<(), EngineError> {
        match self.gap {
            GapMode::Analytic => {
                let phi = bath.advance_phase(dt);
                free_phase(state.matrix_mut(), self.spin * dt + phi, self.optical * dt);
                self.diss.apply(state.matrix_mut(), dt);
                self.check(state, t0 + dt)
            }
            GapMode::Stepped { step_us } => {
                let n = (dt / step_us - 1e-9).ceil().max(1.0) as usize;
                let h = dt / n as f64;
                for k in 0..n {
                    let mut ham = Mat3::zeros();
                    ham[(1, 1)] = C64::new(self.spin + 1e-3 * bath.value(), 0.0);
                    ham[(2, 2)] = C64::new(self.optical, 0.0);
                    *state = step_unitary(state, &ham, h);
                    self.diss.apply(state.matrix_mut(), h);
                    bath.advance(h);
                    self.check(state, t0 + (k + 1) as f64 * h)?;
                }
                Ok(())
            }
        }
    }

    fn run(
        &self,
        plan: &Plan,
        state: &mut DensityState,
        bath: &mut BathStream,
        out: &mut [C64],
    ) -> Result<(), EngineError> {
        for op in &plan.ops {
            match op {
                Op::Gap { t0, dt } => self.gap(*t0, *dt, state, bath)?,
                Op::Step(s) => {
                    self.step(s, state, bath);
                    self.check(state, s.t0 + s.dt)?;
                }
                Op::Record(k) => out[*k] = state.optical(),
            }
        }
        Ok(())
    }
}

/// A sequence prepared for repeated propagation.
#[derive(Debug, Clone)]
pub struct Simulation {
    plan: Plan,
    /// Same timeline with every input pulse shifted by π.
    cycle: Option<Plan>,
    cfg: PropagationConfig,
    mat: MaterialParams,
    initial: DensityState,
}

impl Simulation {
    pub fn new(
        seq: &Sequence,
        cfg: &PropagationConfig,
        mat: &MaterialParams,
    ) -> Result<Self, EngineError> {
        Self::over(seq.pulses(), 0.0, seq.duration(), cfg, mat)
    }

    /// Propagation over `[start, end]` driven by `pulses`.
    pub fn over(
        pulses: &[Pulse],
        start: f64,
        end: f64,
        cfg: &PropagationConfig,
        mat: &MaterialParams,
    ) -> Result<Self, EngineError> {
        let diags = mat.validate();
        if !diags.is_empty() {
            let msg: Vec<String> = diags.iter().map(|d| format!("{}: {}", d.field, d.message)).collect();
            return Err(EngineError::Config(msg.join("; ")));
        }
        FrameConvention::from_scheme(&mat.scheme).check()?;
        Ok(Self {
            plan: Plan::build(pulses, start, end, cfg)?,
            cycle: None,
            cfg: cfg.clone(),
            mat: mat.clone(),
            initial: DensityState::ground(),
        })
    }

    /// Two-step phase cycling of the inputs.
    ///
    /// Every ion is propagated twice with the same bath trajectory, the
    /// second time with all input pulses shifted by π, and the recorded
    /// samples are the half-difference. This keeps the part of `ρ_ie` that
    /// is odd in the input field and removes signals generated by the
    /// other pulses alone (for instance spin coherence created by imperfect
    /// RF pulses out of the ground population).
    pub fn phase_cycled(
        seq: &Sequence,
        cfg: &PropagationConfig,
        mat: &MaterialParams,
    ) -> Result<Self, EngineError> {
        let mut sim = Self::new(seq, cfg, mat)?;
        let flipped = seq.map_pulses(|p| {
            if p.role == Role::Input {
                p.phase += PI;
            }
        })?;
        sim.cycle = Some(Plan::build(flipped.pulses(), 0.0, flipped.duration(), cfg)?);
        Ok(sim)
    }

    pub fn is_phase_cycled(&self) -> bool {
        self.cycle.is_some()
    }

    /// Replaces the initial state `|i⟩⟨i|`.
    pub fn with_initial(mut self, state: DensityState) -> Self {
        self.initial = state;
        self
    }

    pub fn config(&self) -> &PropagationConfig {
        &self.cfg
    }

    pub fn record_count(&self) -> usize {
        self.plan.records
    }

    pub fn step_count(&self) -> usize {
        self.plan.step_count()
    }

    /// Recorded `ρ_ie` samples and the final state of one ion.
    ///
    /// With phase cycling the final state is the one of the unshifted run.
    pub fn run_ion_full(
        &self,
        ion: &IonRealization,
        shot: u64,
    ) -> Result<(Vec<C64>, DensityState), EngineError> {
        let ctx = IonCtx::new(ion, &self.cfg, &self.mat);
        let one = |plan: &Plan| -> Result<(Vec<C64>, DensityState), EngineError> {
            let mut bath = BathStream::new(&self.cfg.bath, ion, shot);
            let mut state = self.initial;
            ctx.check(&state, 0.0)?;
            let mut out = vec![C64::new(0.0, 0.0); plan.records];
            ctx.run(plan, &mut state, &mut bath, &mut out)?;
            Ok((out, state))
        };
        let (mut out, state) = one(&self.plan)?;
        if let Some(cycle) = &self.cycle {
            let (other, _) = one(cycle)?;
            for (a, b) in out.iter_mut().zip(other) {
                *a = 0.5 * (*a - b);
            }
        }
        Ok((out, state))
    }

    /// Recorded `ρ_ie` samples, windows concatenated in order.
    pub fn run_ion(&self, ion: &IonRealization, shot: u64) -> Result<Vec<C64>, EngineError> {
        self.run_ion_full(ion, shot).map(|r| r.0)
    }

    /// Final state of every ion, in input order.
    pub fn final_states(
        &self,
        ions: &[IonRealization],
        shot: u64,
    ) -> Result<Vec<DensityState>, EngineError> {
        ions.par_iter()
            .map(|ion| self.run_ion_full(ion, shot).map(|r| r.1))
            .collect()
    }

    /// Ensemble polarization, one trace per record window.
    pub fn run_ensemble(
        &self,
        ions: &[IonRealization],
        shot: u64,
    ) -> Result<Vec<EchoTrace>, EngineError> {
        if ions.is_empty() {
            return Err(EngineError::EmptyEnsemble);
        }
        let n = self.plan.records;
        let blocks: Vec<BlockSums> = ions
            .par_chunks(BLOCK_SIZE)
            .map(|chunk| {
                let mut b = BlockSums::zeros(n);
                for ion in chunk {
                    b.add(&self.run_ion(ion, shot)?);
                }
                Ok(b)
            })
            .collect::<Result<_, EngineError>>()?;
        let mut traces = Vec::with_capacity(self.cfg.windows.len());
        let mut at = 0;
        for w in &self.cfg.windows {
            let len = w.len();
            let part: Vec<BlockSums> = blocks.iter().map(|b| b.slice(at..at + len)).collect();
            traces.push(
                EchoTrace::from_blocks(w.start, w.dt, part)
                    .map_err(|e| EngineError::GridMismatch(e.to_string()))?,
            );
            at += len;
        }
        Ok(traces)
    }
}

/// Propagates `state` across the support of one pulse.
pub fn evolve_pulse(
    state: &DensityState,
    pulse: &Pulse,
    ion: &IonRealization,
    bath: &mut BathStream,
    cfg: &PropagationConfig,
    mat: &MaterialParams,
) -> Result<DensityState, EngineError> {
    let cfg = PropagationConfig {
        windows: Vec::new(),
        ..cfg.clone()
    };
    let (a, b) = pulse.support();
    let plan = Plan::build(std::slice::from_ref(pulse), a, b, &cfg)?;
    let ctx = IonCtx::new(ion, &cfg, mat);
    let mut s = *state;
    ctx.run(&plan, &mut s, bath, &mut [])?;
    Ok(s)
}

/// Free evolution over `dt` µs.
pub fn evolve_gap(
    state: &DensityState,
    dt: f64,
    ion: &IonRealization,
    bath: &mut BathStream,
    cfg: &PropagationConfig,
    mat: &MaterialParams,
) -> Result<DensityState, EngineError> {
    cfg.validate()?;
    let mut s = *state;
    if dt > 0.0 {
        IonCtx::new(ion, cfg, mat).gap(0.0, dt, &mut s, bath)?;
    }
    Ok(s)
}

/// Recorded `ρ_ie` samples of one ion starting from `|i⟩⟨i|`.
pub fn run_ion(
    ion: &IonRealization,
    seq: &Sequence,
    cfg: &PropagationConfig,
    mat: &MaterialParams,
) -> Result<Vec<C64>, EngineError> {
    Simulation::new(seq, cfg, mat)?.run_ion(ion, 0)
}

/// Ensemble polarization `P(t) = (1/n) Σ ρ_ie`, one trace per window.
pub fn run_ensemble(
    ions: &[IonRealization],
    seq: &Sequence,
    cfg: &PropagationConfig,
    mat: &MaterialParams,
) -> Result<Vec<EchoTrace>, EngineError> {
    Simulation::new(seq, cfg, mat)?.run_ensemble(ions, 0)
}
