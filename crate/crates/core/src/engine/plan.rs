//! Ion-independent step table for a sequence.

use super::kernel::PAIRS;
use super::state::C64;
use super::{EngineError, PropagationConfig};
use crate::sequence::{Channel, Pulse, TIME_EPS};

/// One driven step in the co-rotating frame.
///
/// `rate[j]` and `coupling[j]` are sampled at the two Gauss points of the
/// step; the propagator is the fourth-order Magnus exponential built from
/// them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Step {
    pub t0: f64,
    pub dt: f64,
    /// `e^{−iθ_k}` at the start and end of the step.
    pub d0: [C64; 3],
    pub d1: [C64; 3],
    /// `θ̇_k`, rad/µs.
    pub rate: [[f64; 3]; 2],
    /// Unscaled couplings by channel index, frame phase included.
    pub coupling: [[C64; 3]; 2],
    /// Both samples coincide, so the drive is constant over the step.
    pub uniform: bool,
}

pub(crate) const INV_SQRT_3: f64 = 0.577_350_269_189_625_8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Op {
    Gap { t0: f64, dt: f64 },
    Step(Step),
    /// Store ρ_ie into the output slot.
    Record(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Plan {
    pub ops: Vec<Op>,
    pub records: usize,
    pub duration: f64,
}

/// Level phases `θ` as integer combinations of the reference channel phases.
struct Frame {
    coef: [[i8; 3]; 3],
    reference: [Option<usize>; 3],
}

impl Frame {
    fn build(pulses: &[&Pulse], tm: f64) -> Self {
        let mut reference: [Option<usize>; 3] = [None; 3];
        for (k, p) in pulses.iter().enumerate() {
            let c = p.channel.index();
            let better = match reference[c] {
                None => true,
                Some(j) => p.rabi_at(tm) > pulses[j].rabi_at(tm),
            };
            if better {
                reference[c] = Some(k);
            }
        }
        let mut coef = [[0i8; 3]; 3];
        let mut comp = [0usize, 1, 2];
        let mut tree = [None; 3];
        for ch in Channel::ALL {
            let c = ch.index();
            if reference[c].is_none() {
                continue;
            }
            let (l, u) = PAIRS[c];
            if comp[l] == comp[u] {
                continue;
            }
            // shift u's component so that θ_u − θ_l = φ_c
            let cu = comp[u];
            let shift: [i8; 3] = std::array::from_fn(|j| coef[l][j] - coef[u][j] + (j == c) as i8);
            for k in 0..3 {
                if comp[k] == cu {
                    for j in 0..3 {
                        coef[k][j] += shift[j];
                    }
                    comp[k] = comp[l];
                }
            }
            tree[c] = reference[c];
        }
        Self { coef, reference: tree }
    }

    fn theta(&self, pulses: &[&Pulse], t: f64) -> [f64; 3] {
        self.combine(pulses, |p| p.phase_at(t))
    }

    fn rate(&self, pulses: &[&Pulse], t: f64) -> [f64; 3] {
        self.combine(pulses, |p| p.phase_rate_at(t))
    }

    fn combine(&self, pulses: &[&Pulse], f: impl Fn(&Pulse) -> f64) -> [f64; 3] {
        let vals: [f64; 3] =
            std::array::from_fn(|c| self.reference[c].map_or(0.0, |k| f(pulses[k])));
        std::array::from_fn(|k| (0..3).map(|c| self.coef[k][c] as f64 * vals[c]).sum())
    }
}

fn phasors(theta: [f64; 3]) -> [C64; 3] {
    theta.map(|x| C64::from_polar(1.0, -x))
}

fn make_step(active: &[&Pulse], t0: f64, t1: f64) -> Step {
    let tm = 0.5 * (t0 + t1);
    let frame = Frame::build(active, tm);
    let h = t1 - t0;
    let gauss = [tm - 0.5 * h * INV_SQRT_3, tm + 0.5 * h * INV_SQRT_3];
    let sample = |t: f64| {
        let theta = frame.theta(active, t);
        let mut coupling = [C64::new(0.0, 0.0); 3];
        for p in active {
            let c = p.channel.index();
            let (l, u) = PAIRS[c];
            let residual = match frame.reference[c] {
                Some(k) if std::ptr::eq(*p, active[k]) => 0.0,
                _ => p.phase_at(t) + theta[l] - theta[u],
            };
            coupling[c] += C64::from_polar(0.5 * p.rabi_at(t), residual);
        }
        (frame.rate(active, t), coupling)
    };
    let (r1, c1) = sample(gauss[0]);
    let (r2, c2) = sample(gauss[1]);
    Step {
        t0,
        dt: h,
        d0: phasors(frame.theta(active, t0)),
        d1: phasors(frame.theta(active, t1)),
        rate: [r1, r2],
        coupling: [c1, c2],
        uniform: r1 == r2 && c1 == c2,
    }
}

/// Largest permitted step for a pulse, µs.
pub(crate) fn step_limit(p: &Pulse) -> f64 {
    p.envelope.width() / 20.0
}

/// Step used for a pulse under the configured policy, checked against the limit.
pub(crate) fn pulse_step(p: &Pulse, cfg: &PropagationConfig) -> Result<f64, EngineError> {
    let width = p.envelope.width();
    let step = cfg.step.step_for(width);
    let limit = step_limit(p);
    if step > limit * (1.0 + 1e-12) {
        return Err(EngineError::StepTooLarge {
            step,
            limit,
            center: p.center,
        });
    }
    Ok(step)
}

impl Plan {
    pub fn build(
        pulses: &[Pulse],
        start: f64,
        end: f64,
        cfg: &PropagationConfig,
    ) -> Result<Self, EngineError> {
        cfg.validate()?;
        for w in &cfg.windows {
            if w.start < start - TIME_EPS || w.end > end + TIME_EPS {
                return Err(EngineError::WindowOutside {
                    start: w.start,
                    end: w.end,
                    duration: end,
                });
            }
        }
        let steps: Vec<f64> = pulses
            .iter()
            .map(|p| pulse_step(p, cfg))
            .collect::<Result<_, _>>()?;

        // record times in time order, tagged with their output slot
        let mut records: Vec<(f64, usize)> = Vec::with_capacity(cfg.record_count());
        for w in &cfg.windows {
            for t in w.times() {
                let slot = records.len();
                records.push((t.clamp(start, end), slot));
            }
        }
        let n_records = records.len();
        records.sort_by(|a, b| a.0.total_cmp(&b.0));

        // driven intervals: merged pulse supports clipped to [start, end]
        let mut spans: Vec<(f64, f64)> = pulses
            .iter()
            .map(|p| {
                let (a, b) = p.support();
                (a.max(start), b.min(end))
            })
            .filter(|(a, b)| b > a)
            .collect();
        spans.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::new();
        for (a, b) in spans {
            match merged.last_mut() {
                Some(last) if a <= last.1 => last.1 = last.1.max(b),
                _ => merged.push((a, b)),
            }
        }

        let mut ops = Vec::new();
        let mut t = start;
        let mut r = 0;
        let gap_to = |ops: &mut Vec<Op>, t: &mut f64, r: &mut usize, until: f64| {
            while *r < records.len() && records[*r].0 <= until {
                let tr = records[*r].0;
                if tr > *t {
                    ops.push(Op::Gap { t0: *t, dt: tr - *t });
                    *t = tr;
                }
                ops.push(Op::Record(records[*r].1));
                *r += 1;
            }
            if until > *t {
                ops.push(Op::Gap { t0: *t, dt: until - *t });
                *t = until;
            }
        };

        for &(a, b) in &merged {
            gap_to(&mut ops, &mut t, &mut r, a);
            // breakpoints: support edges and record times strictly inside
            let mut cuts: Vec<f64> = pulses
                .iter()
                .flat_map(|p| {
                    let (x, y) = p.support();
                    [x, y]
                })
                .filter(|&x| x > a && x < b)
                .collect();
            let first_record = r;
            while r < records.len() && records[r].0 < b {
                cuts.push(records[r].0);
                r += 1;
            }
            cuts.push(b);
            cuts.sort_by(f64::total_cmp);
            cuts.dedup_by(|x, y| (*x - *y).abs() < TIME_EPS);
            let mut rr = first_record;
            let mut p0 = a;
            for &p1 in &cuts {
                if p1 - p0 > TIME_EPS {
                    let h = pulses
                        .iter()
                        .zip(&steps)
                        .filter(|(p, _)| {
                            let (x, y) = p.support();
                            x < p1 && y > p0
                        })
                        .map(|(_, &s)| s)
                        .fold(f64::INFINITY, f64::min);
                    let h = if h.is_finite() { h } else { p1 - p0 };
                    let n = ((p1 - p0) / h - 1e-9).ceil().max(1.0) as usize;
                    let dt = (p1 - p0) / n as f64;
                    for k in 0..n {
                        let s0 = p0 + k as f64 * dt;
                        let s1 = if k + 1 == n { p1 } else { s0 + dt };
                        let sm = 0.5 * (s0 + s1);
                        let active: Vec<&Pulse> = pulses
                            .iter()
                            .filter(|p| {
                                let (x, y) = p.support();
                                sm > x && sm < y
                            })
                            .collect();
                        ops.push(Op::Step(make_step(&active, s0, s1)));
                    }
                    p0 = p1;
                }
                while rr < r && records[rr].0 <= p0 + TIME_EPS {
                    ops.push(Op::Record(records[rr].1));
                    rr += 1;
                }
            }
            while rr < r {
                ops.push(Op::Record(records[rr].1));
                rr += 1;
            }
            t = b;
        }
        gap_to(&mut ops, &mut t, &mut r, end);
        Ok(Self {
            ops,
            records: n_records,
            duration: end,
        })
    }

    pub fn step_count(&self) -> usize {
        self.ops.iter().filter(|o| matches!(o, Op::Step(_))).count()
    }
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;
    use crate::engine::{RecordWindow, StepPolicy};
    use crate::sequence::{Envelope, Role, Sequence};

    impl Plan {
        fn new(seq: &Sequence, cfg: &PropagationConfig) -> Result<Self, EngineError> {
            Self::build(seq.pulses(), 0.0, seq.duration(), cfg)
        }
    }

    fn rf(center: f64) -> Pulse {
        Pulse::new(Channel::It, Role::Rf, Envelope::Rectangular { duration: 5.0 }, PI / 5.0)
            .at(center)
    }

    #[test]
    fn steps_cover_pulses_and_records_are_ordered() {
        let seq = Sequence::new(vec![rf(10.0), rf(30.0)], 40.0, None).unwrap();
        let cfg = PropagationConfig {
            windows: vec![RecordWindow::new(9.0, 11.0, 0.5), RecordWindow::new(0.0, 1.0, 1.0)],
            ..Default::default()
        };
        let plan = Plan::new(&seq, &cfg).unwrap();
        assert_eq!(plan.step_count(), 80);
        assert_eq!(plan.records, 7);
        let mut t = 0.0;
        let mut seen = Vec::new();
        for op in &plan.ops {
            match *op {
                Op::Gap { t0, dt } => {
                    assert!((t0 - t).abs() < 1e-9);
                    t = t0 + dt;
                }
                Op::Step(s) => {
                    assert!((s.t0 - t).abs() < 1e-9);
                    t = s.t0 + s.dt;
                }
                Op::Record(k) => seen.push((k, t)),
            }
        }
        assert!((t - 40.0).abs() < 1e-9);
        let order: Vec<usize> = seen.iter().map(|s| s.0).collect();
        assert_eq!(order, vec![5, 6, 0, 1, 2, 3, 4]);
        for (k, t) in seen {
            let want = if k < 5 { 9.0 + 0.5 * k as f64 } else { (k - 5) as f64 };
            assert!((t - want).abs() < 1e-9, "{k} {t}");
        }
    }

    #[test]
    fn rejects_coarse_step_and_outside_window() {
        let seq = Sequence::new(vec![rf(10.0)], 20.0, None).unwrap();
        let cfg = PropagationConfig {
            step: StepPolicy::FixedNs(500.0),
            ..Default::default()
        };
        assert!(matches!(Plan::new(&seq, &cfg), Err(EngineError::StepTooLarge { .. })));
        let cfg = PropagationConfig {
            windows: vec![RecordWindow::new(15.0, 25.0, 1.0)],
            ..Default::default()
        };
        assert!(matches!(Plan::new(&seq, &cfg), Err(EngineError::WindowOutside { .. })));
    }

    #[test]
    fn frame_satisfies_tree_constraints() {
        let a = Pulse::new(Channel::Ie, Role::Input, Envelope::Gaussian { fwhm: 1.0 }, 1.0)
            .at(5.0)
            .with_phase(0.3);
        let b = Pulse::new(
            Channel::Te,
            Role::Transfer,
            Envelope::SechChirp { fwhm: 1.0, sweep: 2.0 },
            1.0,
        )
        .at(5.2)
        .with_phase(-0.7);
        let c = rf(5.1).with_phase(1.1);
        let active = vec![&a, &b, &c];
        let s = make_step(&active, 5.0, 5.05);
        // both tree couplings are real; the loop-closing one carries its residual
        for cp in &s.coupling {
            assert!(cp[0].im.abs() < 1e-15 && cp[1].im.abs() < 1e-15);
        }
        let f = Frame::build(&active, 5.025);
        let th = f.theta(&active, 5.3);
        assert!((th[2] - th[0] - a.phase_at(5.3)).abs() < 1e-12);
        assert!((th[2] - th[1] - b.phase_at(5.3)).abs() < 1e-12);
        let g = [5.025 - 0.025 * INV_SQRT_3, 5.025 + 0.025 * INV_SQRT_3];
        let z = |t: f64| {
            let th = f.theta(&active, t);
            C64::from_polar(0.5 * c.rabi_at(t), c.phase_at(t) + th[0] - th[1])
        };
        assert!((s.coupling[0][2] - z(g[0])).norm() < 1e-12);
        assert!((s.coupling[1][2] - z(g[1])).norm() < 1e-12);
    }
}
