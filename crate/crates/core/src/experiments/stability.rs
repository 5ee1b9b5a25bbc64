use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{trap_period, ExperimentError};
use crate::exec::ExecPolicy;
use crate::grid::{GridSpec, Spectral, WaveField};
use crate::groundstate::{
    critical_profile, lift_to_grid, minimize_energy_constrained, solve_q_radial, threshold_mass,
    FlowOptions,
};
use crate::integrator::{EvolutionState, Integrator, Status, StepControl};
use crate::operators::{OperatorSet, PhysicsParams};

type C = Complex64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Sum of seeded random complex Gaussian bumps.
    RandomSmooth,
    /// x1 Q.
    Dipole,
    /// i |x|^2 Q.
    Chirp,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StabilityVerdict {
    Stable,
    Unstable,
    Blowup,
}

#[derive(Clone, Debug)]
pub struct StabilityConfig {
    pub grid: GridSpec,
    pub params: PhysicsParams,
    /// Mass parameter in units of ||Q||_2.
    pub c: f64,
    pub delta: f64,
    pub directions: Vec<Direction>,
    pub periods: f64,
    pub dt: f64,
    pub sample_every: f64,
    pub seed: u64,
    pub tolerance: f64,
    pub flow: FlowOptions,
    pub control: StepControl,
    pub policy: ExecPolicy,
}

impl StabilityConfig {
    pub fn new(grid: GridSpec, params: PhysicsParams, c: f64, delta: f64) -> Self {
        let dt = 1e-3 / params.gamma;
        StabilityConfig {
            grid,
            params,
            c,
            delta,
            directions: vec![Direction::RandomSmooth, Direction::Dipole, Direction::Chirp],
            periods: 5.0,
            dt,
            sample_every: 0.05,
            seed: 7,
            tolerance: 5e-2,
            flow: FlowOptions::default(),
            control: StepControl::default(),
            policy: ExecPolicy::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StabilityRun {
    pub direction: Option<Direction>,
    pub delta: f64,
    pub times: Vec<f64>,
    pub distance: Vec<f64>,
    pub sup_distance: f64,
    pub status: Status,
    pub verdict: StabilityVerdict,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StabilityResult {
    pub c: f64,
    /// Absolute L2 norm of the data.
    pub norm: f64,
    /// True when the reference is a constrained minimizer, false for the
    /// scaled ground state used at or above the threshold.
    pub minimizer: bool,
    pub reference_energy: f64,
    pub reference_residual: f64,
    pub rotation_invariant: bool,
    pub runs: Vec<StabilityRun>,
    pub verdict: StabilityVerdict,
}

/// <u, q>_Sigma = <grad u, grad q> + <x u, x q> + <u, q>.
pub fn sigma_inner(ops: &OperatorSet, u: &[C], q: &[C]) -> C {
    dual(ops, q)
        .iter()
        .zip(u)
        .map(|(w, z)| z * w.conj())
        .sum::<C>()
        * ops.grid.cell_volume()
}

/// (-Lap + |x|^2 + 1) q, so that <u, q>_Sigma = int u conj(dual).
fn dual(ops: &OperatorSet, q: &[C]) -> Vec<C> {
    let lap = ops.kinetic(q);
    lap.iter()
        .zip(q)
        .zip(&ops.radius)
        .map(|((l, z), r)| l * 2.0 + z * (r * r + 1.0))
        .collect()
}

fn shear(ops: &OperatorSet, data: &mut [C], axis: usize, other: usize, factor: f64) {
    let sp = ops.spectral();
    sp.forward_axis(data, axis);
    for (i, z) in data.iter_mut().enumerate() {
        let a = ops.axes(i);
        let shift = factor * ops.x[other][a[other]];
        *z *= C::from_polar(1.0, -ops.k[axis][a[axis]] * shift);
    }
    sp.inverse_axis(data, axis);
}

/// u(R_{-phi} x): rotation of the field by phi in the (x1, x2) plane via
/// three Fourier shears.
pub fn rotate(ops: &OperatorSet, u: &[C], phi: f64) -> Vec<C> {
    if phi.abs() > std::f64::consts::FRAC_PI_2 {
        let half = rotate(ops, u, phi / 2.0);
        return rotate(ops, &half, phi / 2.0);
    }
    let t = (phi / 2.0).tan();
    let mut v = u.to_vec();
    shear(ops, &mut v, 0, 1, -t);
    shear(ops, &mut v, 1, 0, phi.sin());
    shear(ops, &mut v, 0, 1, -t);
    v
}

struct Reference {
    dual: Vec<C>,
    norm_sq: f64,
    rotation_invariant: bool,
}

impl Reference {
    fn new(ops: &OperatorSet, q: &[C]) -> Self {
        let dual = dual(ops, q);
        let dv = ops.grid.cell_volume();
        let norm_sq = dual
            .iter()
            .zip(q)
            .map(|(w, z)| (z * w.conj()).re)
            .sum::<f64>()
            * dv;
        let turned = rotate(ops, q, 1.0);
        let diff: f64 = turned
            .iter()
            .zip(q)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>();
        let size: f64 = q.iter().map(|z| z.norm_sqr()).sum();
        Reference {
            dual,
            norm_sq,
            rotation_invariant: diff <= 1e-12 * size,
        }
    }

    fn overlap(&self, ops: &OperatorSet, u: &[C]) -> f64 {
        self.dual
            .iter()
            .zip(u)
            .map(|(w, z)| z * w.conj())
            .sum::<C>()
            .norm()
            * ops.grid.cell_volume()
    }
}

/// min over phase (and rotation unless Q is rotation invariant) of
/// ||u e^{i theta} o R_phi - Q||_Sigma.
fn distance_to(ops: &OperatorSet, reference: &Reference, u: &[C]) -> f64 {
    let unorm = sigma_inner(ops, u, u).re;
    let best = if reference.rotation_invariant {
        reference.overlap(ops, u)
    } else {
        let f = |phi: f64| reference.overlap(ops, &rotate(ops, u, phi));
        let tau = std::f64::consts::TAU;
        let coarse = 24;
        let (i_best, _) = (0..coarse)
            .map(|i| (i, f(tau * i as f64 / coarse as f64)))
            .fold((0, f64::NEG_INFINITY), |b, x| if x.1 > b.1 { x } else { b });
        let h = tau / coarse as f64;
        golden_max(
            f,
            tau * i_best as f64 / coarse as f64 - h,
            tau * i_best as f64 / coarse as f64 + h,
            1e-8,
        )
    };
    (unorm + reference.norm_sq - 2.0 * best).max(0.0).sqrt()
}

fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - r * (b - a);
    let mut x2 = a + r * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while b - a > tol {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + r * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - r * (b - a);
            f1 = f(x1);
        }
    }
    f1.max(f2)
}

pub fn orbit_distance(ops: &OperatorSet, u: &WaveField, q: &WaveField) -> f64 {
    distance_to(ops, &Reference::new(ops, &q.values), &u.values)
}

fn direction_field(ops: &OperatorSet, q: &[C], dir: Direction, seed: u64) -> Vec<C> {
    match dir {
        Direction::Dipole => q
            .iter()
            .enumerate()
            .map(|(i, z)| z * ops.coordinate(i)[0])
            .collect(),
        Direction::Chirp => q
            .iter()
            .zip(&ops.radius)
            .map(|(z, r)| z * C::new(0.0, r * r))
            .collect(),
        Direction::RandomSmooth => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let bumps: Vec<([f64; 3], f64, C)> = (0..6)
                .map(|_| {
                    let c = [
                        rng.gen_range(-1.5..1.5),
                        rng.gen_range(-1.5..1.5),
                        rng.gen_range(-1.5..1.5),
                    ];
                    let w = rng.gen_range(0.5..1.2);
                    (
                        c,
                        w,
                        C::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
                    )
                })
                .collect();
            let dim = ops.grid.dim;
            (0..q.len())
                .map(|i| {
                    let x = ops.coordinate(i);
                    bumps
                        .iter()
                        .map(|(c, w, a)| {
                            let d2: f64 = (0..dim).map(|k| (x[k] - c[k]).powi(2)).sum();
                            a * (-d2 / (2.0 * w * w)).exp()
                        })
                        .sum()
                })
                .collect()
        }
    }
}

/// (Q + delta eta) c / ||Q + delta eta||, with ||eta||_2 = ||Q||_2.
fn perturbed(
    ops: &OperatorSet,
    q: &WaveField,
    dir: Option<Direction>,
    delta: f64,
    seed: u64,
) -> WaveField {
    let qn = q.norm();
    let mut values = q.values.clone();
    if let Some(dir) = dir {
        if delta != 0.0 {
            let eta = direction_field(ops, &q.values, dir, seed);
            let en =
                (eta.iter().map(|z| z.norm_sqr()).sum::<f64>() * ops.grid.cell_volume()).sqrt();
            values
                .iter_mut()
                .zip(&eta)
                .for_each(|(v, e)| *v += e * (delta * qn / en));
        }
    }
    let mut f = WaveField {
        grid: q.grid,
        values,
    };
    f.scale(qn / f.norm());
    f
}

fn reference_norm(params: &PhysicsParams) -> Result<f64, ExperimentError> {
    let lambda = params.threshold_lambda();
    if params.is_mass_critical() {
        Ok(threshold_mass(params.dim, lambda).sqrt())
    } else {
        Ok(solve_q_radial(params.p, lambda, params.dim, 1e-12)?
            .mass
            .sqrt())
    }
}

/// Perturbs the constrained minimizer with mass c^2 ||Q||^2 along each
/// direction and records the orbit distance over `periods` trap periods.
/// At or above the critical threshold the reference is the scaled Q.
pub fn stability_run(cfg: &StabilityConfig) -> Result<StabilityResult, ExperimentError> {
    let params = &cfg.params;
    params.validate()?;
    if params.omega.abs() >= params.gamma {
        return Err(ExperimentError::Precondition(format!(
            "|Omega| < gamma required, got Omega = {}, gamma = {}",
            params.omega, params.gamma
        )));
    }
    if !(cfg.delta >= 0.0 && cfg.delta <= 0.1) {
        return Err(ExperimentError::Precondition(format!(
            "delta must lie in [0, 0.1], got {}",
            cfg.delta
        )));
    }
    let norm = cfg.c * reference_norm(params)?;
    let ops = OperatorSet::with_spectral(
        Spectral::new(cfg.grid).with_policy(cfg.policy),
        params.clone(),
    )?;
    let supercritical = params.kappa > 0.0 && params.is_mass_critical() && cfg.c >= 1.0;
    let (q, energy, residual) = if supercritical {
        let lambda = params.threshold_lambda();
        let prof = critical_profile(params.dim).scaled(lambda.powf(-(params.dim as f64) / 4.0));
        let q = lift_to_grid(&prof, &cfg.grid, cfg.c, 1.0, 0.0, 0.0)?;
        let e = crate::diagnostics::record(&ops, &q, 0.0).energy;
        (q, e, f64::NAN)
    } else {
        let gs = minimize_energy_constrained(&ops, norm, None, cfg.flow)?;
        (gs.field, gs.energy, gs.residual)
    };
    let reference = Reference::new(&ops, &q.values);
    let dirs: Vec<Option<Direction>> = if cfg.delta == 0.0 {
        vec![None]
    } else {
        cfg.directions.iter().copied().map(Some).collect()
    };
    let t_end = cfg.periods * trap_period(params.gamma);
    let mut runs = Vec::new();
    let mut integ = Integrator::new(ops).with_control(cfg.control.clone());
    for dir in dirs {
        let u0 = perturbed(integ.operators(), &q, dir, cfg.delta, cfg.seed);
        let mut state = EvolutionState::new(u0, params.clone(), cfg.dt);
        let mut times = vec![0.0];
        let mut distance = vec![distance_to(
            integ.operators(),
            &reference,
            &state.field.values,
        )];
        while state.t < t_end * (1.0 - 1e-12) {
            let next = (state.t + cfg.sample_every).min(t_end);
            integ.evolve(&mut state, next)?;
            if state.status != Status::Finished {
                break;
            }
            times.push(state.t);
            distance.push(distance_to(
                integ.operators(),
                &reference,
                &state.field.values,
            ));
        }
        let sup_distance = distance.iter().cloned().fold(0.0, f64::max);
        let verdict = match state.status {
            Status::BlowupDetected => StabilityVerdict::Blowup,
            Status::Finished if sup_distance <= cfg.tolerance => StabilityVerdict::Stable,
            _ => StabilityVerdict::Unstable,
        };
        runs.push(StabilityRun {
            direction: dir,
            delta: cfg.delta,
            times,
            distance,
            sup_distance,
            status: state.status,
            verdict,
        });
    }
    let verdict = if runs.iter().any(|r| r.verdict == StabilityVerdict::Blowup) {
        StabilityVerdict::Blowup
    } else if runs.iter().all(|r| r.verdict == StabilityVerdict::Stable) {
        StabilityVerdict::Stable
    } else {
        StabilityVerdict::Unstable
    };
    Ok(StabilityResult {
        c: cfg.c,
        norm,
        minimizer: !supercritical,
        reference_energy: energy,
        reference_residual: residual,
        rotation_invariant: reference.rotation_invariant,
        runs,
        verdict,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn ops() -> OperatorSet {
        let g = GridSpec::cubic(2, 8.0, 64).unwrap();
        OperatorSet::new(g, PhysicsParams::power(2, 3.0, 1.0, 1.0, 0.5)).unwrap()
    }

    fn blob(o: &OperatorSet, f: impl Fn([f64; 3]) -> C) -> WaveField {
        WaveField::from_fn(o.grid, f)
    }

    #[test]
    fn quarter_turn_maps_x1_to_x2() {
        let o = ops();
        let u = blob(&o, |x| {
            C::new(x[0] * (-(x[0] * x[0] + x[1] * x[1])).exp(), 0.0)
        });
        let v = blob(&o, |x| {
            C::new(x[1] * (-(x[0] * x[0] + x[1] * x[1])).exp(), 0.0)
        });
        let r = rotate(&o, &u.values, PI / 2.0);
        let err: f64 = r
            .iter()
            .zip(&v.values)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(err < 1e-10, "{err}");
        let back = rotate(&o, &rotate(&o, &u.values, 2.3), -2.3);
        let err: f64 = back
            .iter()
            .zip(&u.values)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(err < 1e-10, "{err}");
    }

    #[test]
    fn sigma_inner_matches_definition() {
        let o = ops();
        let u = blob(&o, |x| {
            C::new(1.0, 0.3 * x[0]) * (-(x[0] * x[0] + 2.0 * x[1] * x[1]) / 2.0).exp()
        });
        let grads = o.gradient(&u.values);
        let dv = o.grid.cell_volume();
        let grad: f64 = grads
            .iter()
            .flat_map(|g| g.iter())
            .map(|z| z.norm_sqr())
            .sum::<f64>()
            * dv;
        let trap: f64 = u
            .values
            .iter()
            .zip(&o.radius)
            .map(|(z, r)| r * r * z.norm_sqr())
            .sum::<f64>()
            * dv;
        let direct = grad + trap + u.norm_sq();
        let s = sigma_inner(&o, &u.values, &u.values);
        assert!((s.re - direct).abs() < 1e-10 * direct && s.im.abs() < 1e-10);
    }

    #[test]
    fn distance_is_zero_on_the_orbit() {
        let o = ops();
        let q = blob(&o, |x| {
            C::new((-(x[0] - 0.7).powi(2) - x[1] * x[1]).exp(), 0.0)
        });
        let moved = rotate(&o, &q.values, 1.1)
            .into_iter()
            .map(|z| z * C::from_polar(1.0, 0.8))
            .collect();
        let moved = WaveField {
            grid: o.grid,
            values: moved,
        };
        assert!(orbit_distance(&o, &moved, &q) < 1e-6);
        let radial = blob(&o, |x| C::new((-(x[0] * x[0] + x[1] * x[1])).exp(), 0.0));
        let r = Reference::new(&o, &radial.values);
        assert!(r.rotation_invariant);
        assert!(!Reference::new(&o, &q.values).rotation_invariant);
        let mut other = radial.clone();
        other.scale(1.1);
        let d = orbit_distance(&o, &other, &radial);
        let expect = 0.1 * sigma_inner(&o, &radial.values, &radial.values).re.sqrt();
        assert!((d - expect).abs() < 1e-9, "{d} {expect}");
    }

    #[test]
    fn perturbation_keeps_mass_and_size() {
        let o = ops();
        let q = blob(&o, |x| {
            C::new((-(x[0] * x[0] + x[1] * x[1]) / 2.0).exp(), 0.0)
        });
        for dir in [Direction::RandomSmooth, Direction::Dipole, Direction::Chirp] {
            let u = perturbed(&o, &q, Some(dir), 1e-2, 3);
            assert!((u.norm() - q.norm()).abs() < 1e-13);
            let d = u.distance(&q).unwrap() / q.norm();
            assert!(d > 1e-3 && d < 2e-2, "{dir:?} {d}");
        }
        let a = direction_field(&o, &q.values, Direction::RandomSmooth, 3);
        let b = direction_field(&o, &q.values, Direction::RandomSmooth, 3);
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_fast_rotation_and_large_delta() {
        let g = GridSpec::cubic(2, 8.0, 32).unwrap();
        let cfg = StabilityConfig::new(g, PhysicsParams::power(2, 3.0, 1.0, 1.0, 1.2), 0.5, 1e-2);
        assert!(matches!(
            stability_run(&cfg),
            Err(ExperimentError::Precondition(_))
        ));
        let cfg = StabilityConfig::new(g, PhysicsParams::power(2, 3.0, 1.0, 1.0, 0.5), 0.5, 0.2);
        assert!(matches!(
            stability_run(&cfg),
            Err(ExperimentError::Precondition(_))
        ));
    }
}
