//! Strang splitting with an alternating-direction sweep for the rotation term.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diagnostics::{self, DiagnosticsRecord};
use crate::exec::for_each_chunk;
use crate::grid::WaveField;
use crate::operators::{OperatorSet, PhysicsParams};

type C = Complex64;

#[derive(Debug, Error, PartialEq)]
pub enum IntegratorError {
    #[error("cannot step a state with status {0:?}")]
    NotRunning(Status),
    #[error("end time {t_end} lies before the current time {t}")]
    BadEndTime { t: f64, t_end: f64 },
    #[error("step size must be finite and nonzero")]
    BadStep,
    #[error("field grid does not match the operator grid")]
    GridMismatch,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Running,
    Finished,
    BlowupDetected,
    ResolutionLost,
}

/// Monitoring thresholds used by `evolve`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepControl {
    pub cadence: u64,
    pub tail_threshold: f64,
    pub refine_trigger: f64,
    pub blowup_ratio: f64,
}

impl Default for StepControl {
    fn default() -> Self {
        StepControl {
            cadence: 10,
            tail_threshold: 1e-6,
            refine_trigger: 2.0,
            blowup_ratio: 1e3,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RefineState {
    pub reference_grad: Option<f64>,
    pub refining: bool,
    pub next_level: f64,
    pub t_detect: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvolutionState {
    pub field: WaveField,
    pub t: f64,
    pub steps: u64,
    pub params: PhysicsParams,
    pub dt: f64,
    pub status: Status,
    pub refine: RefineState,
}

impl EvolutionState {
    pub fn new(field: WaveField, params: PhysicsParams, dt: f64) -> Self {
        EvolutionState {
            field,
            t: 0.0,
            steps: 0,
            params,
            dt,
            status: Status::Running,
            refine: RefineState::default(),
        }
    }

    /// Default step 1e-3 / gamma.
    pub fn with_default_step(field: WaveField, params: PhysicsParams) -> Self {
        let dt = 1e-3 / params.gamma;
        Self::new(field, params, dt)
    }
}

/// Exact sub-flow multipliers for one step size.
struct Tables {
    dt: f64,
    /// axis-1 transform, duration dt/2: 1/2 k1^2 + Omega x2 k1.
    a: Vec<C>,
    /// axis-2 transform, duration dt: 1/2 k2^2 - Omega x1 k2.
    b: Vec<C>,
    /// axis-3 kinetic flow, duration dt.
    c: Vec<C>,
}

impl Tables {
    fn new(ops: &OperatorSet, dt: f64) -> Self {
        let g = &ops.grid;
        let (n0, n1) = (g.points[0], g.points[1]);
        let omega = ops.params.omega;
        let mut a = Vec::with_capacity(n0 * n1);
        let mut b = Vec::with_capacity(n0 * n1);
        for i1 in 0..n1 {
            for i0 in 0..n0 {
                let k1 = ops.k[0][i0];
                let k2 = ops.k[1][i1];
                let x1 = ops.x[0][i0];
                let x2 = ops.x[1][i1];
                a.push(C::from_polar(
                    1.0,
                    -0.5 * dt * (0.5 * k1 * k1 + omega * x2 * k1),
                ));
                b.push(C::from_polar(1.0, -dt * (0.5 * k2 * k2 - omega * x1 * k2)));
            }
        }
        let c = ops.k[2]
            .iter()
            .map(|k| C::from_polar(1.0, -dt * 0.5 * k * k))
            .collect();
        Tables { dt, a, b, c }
    }
}

pub struct Integrator {
    ops: OperatorSet,
    pub control: StepControl,
    tables: Option<Tables>,
}

impl Integrator {
    pub fn new(ops: OperatorSet) -> Self {
        Integrator {
            ops,
            control: StepControl::default(),
            tables: None,
        }
    }

    pub fn with_control(mut self, control: StepControl) -> Self {
        self.control = control;
        self
    }

    pub fn operators(&self) -> &OperatorSet {
        &self.ops
    }

    pub fn record(&self, state: &EvolutionState) -> DiagnosticsRecord {
        diagnostics::record(&self.ops, &state.field, state.t)
    }

    /// One Strang step of the state's current size.
    pub fn step(&mut self, state: &mut EvolutionState) -> Result<(), IntegratorError> {
        let dt = state.dt;
        self.step_by(state, dt)
    }

    /// One Strang step of size `h`; negative `h` runs backwards.
    pub fn step_by(&mut self, state: &mut EvolutionState, h: f64) -> Result<(), IntegratorError> {
        if matches!(
            state.status,
            Status::BlowupDetected | Status::ResolutionLost
        ) {
            return Err(IntegratorError::NotRunning(state.status));
        }
        if !(h.is_finite() && h != 0.0) {
            return Err(IntegratorError::BadStep);
        }
        if state.field.grid != self.ops.grid {
            return Err(IntegratorError::GridMismatch);
        }
        self.advance(state, h, 1);
        Ok(())
    }

    /// `count` Strang steps of size `h` with the adjacent half-step phases
    /// merged into full ones.
    fn advance(&mut self, state: &mut EvolutionState, h: f64, count: u64) {
        if self.tables.as_ref().map_or(true, |t| t.dt != h) {
            self.tables = Some(Tables::new(&self.ops, h));
        }
        let u = &mut state.field.values;
        self.phase(u, 0.5 * h);
        for j in 0..count {
            self.kinetic_rotation(u);
            self.phase(u, if j + 1 == count { 0.5 * h } else { h });
            state.t += h;
            state.steps += 1;
        }
    }

    fn phase(&self, u: &mut [C], tau: f64) {
        let ops = &self.ops;
        let p = ops.params.p;
        let kappa = ops.params.kappa;
        let chunk = 4096;
        for_each_chunk(ops.spectral().policy(), u, chunk, |ci, part| {
            let base = ci * chunk;
            for (j, z) in part.iter_mut().enumerate() {
                let i = base + j;
                let dg = ops.params.model.profile(p, z.norm_sqr()).1;
                let theta = tau * (ops.potential[i] - kappa * ops.lambda[i] * dg);
                *z *= C::from_polar(1.0, -theta);
            }
        });
    }

    fn kinetic_rotation(&self, u: &mut [C]) {
        let ops = &self.ops;
        let sp = ops.spectral();
        let tables = self.tables.as_ref().expect("tables built before use");
        let plane = ops.grid.points[0] * ops.grid.points[1];
        let multiply = |u: &mut [C], m: &[C]| {
            let chunk = plane;
            for_each_chunk(sp.policy(), u, chunk, |_, part| {
                part.iter_mut().zip(m).for_each(|(z, w)| *z *= w);
            });
        };
        sp.forward_axis(u, 0);
        multiply(u, &tables.a);
        sp.inverse_axis(u, 0);
        sp.forward_axis(u, 1);
        multiply(u, &tables.b);
        sp.inverse_axis(u, 1);
        sp.forward_axis(u, 0);
        multiply(u, &tables.a);
        sp.inverse_axis(u, 0);
        if ops.grid.dim == 3 {
            sp.forward_axis(u, 2);
            for (plane_idx, part) in u.chunks_mut(plane).enumerate() {
                let w = tables.c[plane_idx];
                part.iter_mut().for_each(|z| *z *= w);
            }
            sp.inverse_axis(u, 2);
        }
    }

    /// Runs to `t_end`, recording diagnostics every `control.cadence` steps
    /// and at the final time. Stops early on blowup or resolution loss.
    pub fn evolve(
        &mut self,
        state: &mut EvolutionState,
        t_end: f64,
    ) -> Result<Vec<DiagnosticsRecord>, IntegratorError> {
        if matches!(
            state.status,
            Status::BlowupDetected | Status::ResolutionLost
        ) {
            return Err(IntegratorError::NotRunning(state.status));
        }
        if !(t_end >= state.t) {
            return Err(IntegratorError::BadEndTime { t: state.t, t_end });
        }
        let mut out = Vec::new();
        if t_end == state.t {
            return Ok(out);
        }
        state.status = Status::Running;
        let cadence = self.control.cadence.max(1);
        let first = self.record(state);
        if state.refine.reference_grad.is_none() {
            state.refine.reference_grad = Some(first.grad_norm);
        }
        self.monitor(state, &first);
        out.push(first);
        let mut last_recorded = state.steps;
        while state.status == Status::Running {
            let remaining = t_end - state.t;
            if remaining <= 1e-9 * state.dt.abs() {
                break;
            }
            if remaining < state.dt {
                self.step_by(state, remaining)?;
                state.t = t_end;
            } else {
                let to_record = cadence - state.steps % cadence;
                let fit = ((remaining / state.dt) * (1.0 + 1e-12)).floor().max(1.0) as u64;
                let dt = state.dt;
                self.advance(state, dt, to_record.min(fit));
            }
            if !state.field.is_finite() {
                state.status = if state.refine.refining {
                    Status::BlowupDetected
                } else {
                    Status::ResolutionLost
                };
                state.refine.t_detect.get_or_insert(state.t);
                break;
            }
            if state.steps % cadence == 0 {
                let rec = self.record(state);
                self.monitor(state, &rec);
                out.push(rec);
                last_recorded = state.steps;
            }
        }
        if state.status == Status::Running {
            if last_recorded != state.steps {
                out.push(self.record(state));
            }
            state.status = Status::Finished;
        }
        Ok(out)
    }

    fn monitor(&self, state: &mut EvolutionState, rec: &DiagnosticsRecord) {
        let c = &self.control;
        let reference = state.refine.reference_grad.unwrap_or(rec.grad_norm);
        let ratio = rec.grad_norm / reference;
        if rec.tail_fraction > c.tail_threshold {
            let refining = state.refine.refining || ratio >= c.refine_trigger;
            state.status = if refining {
                Status::BlowupDetected
            } else {
                Status::ResolutionLost
            };
            state.refine.t_detect = Some(state.t);
            return;
        }
        if rec.boundary_mass > 1e-8 {
            log::debug!(
                "boundary mass fraction {:.3e} at t = {}",
                rec.boundary_mass,
                state.t
            );
        }
        refine_near_blowup(state, ratio, c);
    }
}

/// Step control driven by the gradient growth ratio.
pub fn refine_near_blowup(state: &mut EvolutionState, ratio: f64, control: &StepControl) {
    if ratio > control.blowup_ratio {
        state.status = Status::BlowupDetected;
        state.refine.t_detect = Some(state.t);
        return;
    }
    if ratio < control.refine_trigger && !state.refine.refining {
        return;
    }
    if !state.refine.refining {
        state.refine.refining = true;
        state.refine.next_level = control.refine_trigger;
    }
    while ratio >= state.refine.next_level {
        state.dt *= 0.5;
        state.refine.next_level *= 2.0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use std::f64::consts::PI;

    fn setup(n: usize, omega: f64, lambda: f64) -> (Integrator, WaveField) {
        let g = GridSpec::cubic(2, 8.0, n).unwrap();
        let params = PhysicsParams::power(2, 3.0, lambda, 1.0, omega);
        let ops = OperatorSet::new(g, params).unwrap();
        let u = WaveField::from_fn(g, |x| {
            C::new((-(x[0] * x[0] + x[1] * x[1]) / 2.0).exp() / PI.sqrt(), 0.0)
        });
        (Integrator::new(ops), u)
    }

    #[test]
    fn oscillator_ground_state_phase() {
        let (mut it, u0) = setup(64, 0.0, 0.0);
        let mut s = EvolutionState::new(u0.clone(), it.operators().params.clone(), 1e-3);
        let t_end = 2.0 * PI;
        it.evolve(&mut s, t_end).unwrap();
        let mut exact = u0.clone();
        exact
            .values
            .iter_mut()
            .for_each(|z| *z *= C::from_polar(1.0, -t_end));
        assert!(s.field.distance(&exact).unwrap() < 1e-6);
        assert_eq!(s.status, Status::Finished);
        assert!((s.t - t_end).abs() < 1e-12);
    }

    #[test]
    fn vortex_eigenstate_phase_rate() {
        let (mut it, _) = setup(64, 0.5, 0.0);
        let g = it.operators().grid;
        let psi = WaveField::from_fn(g, |x| {
            C::new(x[0], x[1]) * (-(x[0] * x[0] + x[1] * x[1]) / 2.0).exp() / PI.sqrt()
        });
        let mut s = EvolutionState::new(psi.clone(), it.operators().params.clone(), 1e-3);
        let t_end = 2.0;
        it.evolve(&mut s, t_end).unwrap();
        let mut exact = psi;
        exact
            .values
            .iter_mut()
            .for_each(|z| *z *= C::from_polar(1.0, -1.5 * t_end));
        assert!(s.field.distance(&exact).unwrap() < 1e-6);
    }

    fn rotation_gap(dt: f64) -> f64 {
        let (mut a, u0) = setup(64, 0.0, 0.0);
        let (mut b, _) = setup(64, 0.9, 0.0);
        let mut v = u0.clone();
        for (i, z) in v.values.iter_mut().enumerate() {
            let r2 = a.operators().radius[i].powi(2);
            *z *= C::from_polar(1.0 + 0.3 * r2, 0.2 * r2);
        }
        let mut sa = EvolutionState::new(v.clone(), a.operators().params.clone(), dt);
        let mut sb = EvolutionState::new(v, b.operators().params.clone(), dt);
        let steps = (0.3 / dt).round() as usize;
        for _ in 0..steps {
            a.step(&mut sa).unwrap();
            b.step(&mut sb).unwrap();
        }
        sa.field.distance(&sb.field).unwrap()
    }

    #[test]
    fn radial_linear_run_ignores_rotation_to_second_order() {
        let coarse = rotation_gap(1e-3);
        let fine = rotation_gap(5e-4);
        assert!(coarse < 1e-6, "{coarse}");
        let ratio = coarse / fine;
        assert!(ratio > 3.5 && ratio < 4.5, "{ratio}");
    }

    #[test]
    fn reversibility_and_mass() {
        let (mut it, u0) = setup(64, 0.6, 1.0);
        let mut u = u0.clone();
        for (i, z) in u.values.iter_mut().enumerate() {
            let x = it.operators().coordinate(i);
            *z *= C::from_polar(1.5, 0.4 * x[0]) * (1.0 + 0.3 * x[1]);
        }
        let m0 = u.norm_sq();
        let mut s = EvolutionState::new(u.clone(), it.operators().params.clone(), 1e-3);
        for _ in 0..200 {
            it.step(&mut s).unwrap();
        }
        assert!((s.field.norm_sq() - m0).abs() < 1e-12 * m0);
        for _ in 0..200 {
            it.step_by(&mut s, -1e-3).unwrap();
        }
        assert!(s.field.distance(&u).unwrap() < 1e-9);
    }

    #[test]
    fn zero_duration_is_identity() {
        let (mut it, u0) = setup(32, 0.5, 1.0);
        let mut s = EvolutionState::new(u0, it.operators().params.clone(), 1e-3);
        let before = s.clone();
        let recs = it.evolve(&mut s, 0.0).unwrap();
        assert!(recs.is_empty());
        assert_eq!(s, before);
    }

    #[test]
    fn refine_rules() {
        let (it, u0) = setup(32, 0.0, 1.0);
        let c = StepControl::default();
        let mut s = EvolutionState::new(u0, it.operators().params.clone(), 1e-3);
        refine_near_blowup(&mut s, 1.9, &c);
        assert_eq!(s.dt, 1e-3);
        assert!(!s.refine.refining);
        refine_near_blowup(&mut s, 2.0, &c);
        assert_eq!(s.dt, 5e-4);
        refine_near_blowup(&mut s, 3.9, &c);
        assert_eq!(s.dt, 5e-4);
        refine_near_blowup(&mut s, 8.5, &c);
        assert_eq!(s.dt, 1.25e-4);
        s.t = 0.7;
        refine_near_blowup(&mut s, 1001.0, &c);
        assert_eq!(s.status, Status::BlowupDetected);
        assert_eq!(s.refine.t_detect, Some(0.7));
        assert!(matches!(
            it_step(s),
            Err(IntegratorError::NotRunning(Status::BlowupDetected))
        ));
    }

    fn it_step(mut s: EvolutionState) -> Result<(), IntegratorError> {
        let (mut it, _) = setup(32, 0.0, 1.0);
        it.step(&mut s)
    }

    #[test]
    fn zero_rotation_sweep_equals_kinetic_flow() {
        let (mut it, u0) = setup(64, 0.0, 0.0);
        let g = it.operators().grid;
        let mut u = u0.clone();
        for (i, z) in u.values.iter_mut().enumerate() {
            let x = it.operators().coordinate(i);
            *z *= C::from_polar(1.0, 0.7 * x[0] - 0.3 * x[1]);
        }
        let dt = 0.01;
        let mut s = EvolutionState::new(u.clone(), it.operators().params.clone(), dt);
        it.tables = Some(Tables::new(it.operators(), dt));
        it.kinetic_rotation(&mut s.field.values);
        let sp = it.operators().spectral().clone();
        let mut c = u.values.clone();
        sp.forward(&mut c);
        c.iter_mut()
            .zip(&it.operators().kinetic)
            .for_each(|(z, k)| *z *= C::from_polar(1.0, -dt * k));
        sp.inverse(&mut c);
        let direct = WaveField::new(g, c).unwrap();
        assert!(s.field.distance(&direct).unwrap() < 1e-13);
        let _ = it.step(&mut s);
    }
}
