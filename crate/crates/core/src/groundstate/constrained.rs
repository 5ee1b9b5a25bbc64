use num_complex::Complex64;
use serde::Serialize;

use super::{threshold_mass, GroundStateError};
use crate::grid::WaveField;
use crate::operators::OperatorSet;

type C = Complex64;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GroundStateResult {
    #[serde(skip)]
    pub field: WaveField,
    pub mass: f64,
    pub energy: f64,
    /// Standing wave is e^{i omega t} u.
    pub omega: f64,
    pub residual: f64,
    pub iterations: usize,
    pub energy_history: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlowOptions {
    /// Initial pseudo-time step; None selects 1e-2 / gamma.
    pub tau: Option<f64>,
    pub tol: f64,
    pub max_iterations: usize,
}

impl Default for FlowOptions {
    fn default() -> Self {
        FlowOptions {
            tau: None,
            tol: 1e-8,
            max_iterations: 200_000,
        }
    }
}

/// Relative size of quadrature roundoff in the energy; rises below it are
/// not treated as increases.
pub const ENERGY_NOISE: f64 = 1e-12;

struct Eval {
    /// H u - kappa N(u).
    grad: Vec<C>,
    energy: f64,
    omega: f64,
    residual: f64,
    scale: f64,
}

fn evaluate(ops: &OperatorSet, u: &[C], mass: f64) -> Eval {
    let lin = ops.linear(u);
    let non = ops.nonlinearity(u);
    let kappa = ops.params.kappa;
    let dv = ops.grid.cell_volume();
    let p = ops.params.p;
    let quad: f64 = lin
        .iter()
        .zip(u)
        .map(|(h, z)| (h * z.conj()).re)
        .sum::<f64>()
        * dv;
    let inter: f64 = u
        .iter()
        .zip(&ops.lambda)
        .map(|(z, l)| l * ops.params.model.profile(p, z.norm_sqr()).0)
        .sum::<f64>()
        * dv;
    let grad: Vec<C> = lin.iter().zip(&non).map(|(h, n)| h - n * kappa).collect();
    let ray: f64 = grad
        .iter()
        .zip(u)
        .map(|(g, z)| (g * z.conj()).re)
        .sum::<f64>()
        * dv;
    let omega = -ray / mass;
    let residual = grad
        .iter()
        .zip(u)
        .map(|(g, z)| (g + z * omega).norm_sqr())
        .sum::<f64>()
        .mul_add(dv, 0.0)
        .sqrt();
    Eval {
        grad,
        energy: quad - kappa * inter,
        omega,
        residual,
        scale: quad.abs() + inter.abs(),
    }
}

fn renormalize(u: &mut [C], target: f64, dv: f64) {
    let m: f64 = u.iter().map(|z| z.norm_sqr()).sum::<f64>() * dv;
    let s = (target / m).sqrt();
    u.iter_mut().for_each(|z| *z *= s);
}

/// Largest eigenvalue of the linear Hamiltonian by power iteration.
fn spectral_radius(ops: &OperatorSet) -> f64 {
    let mut v: Vec<C> = ops.grid.sample(|x| {
        C::new(
            1.0 + 0.3 * x[0] - 0.2 * x[1] + 0.1 * x[0] * x[1],
            0.2 * x[1],
        )
    });
    let mut est = 0.0;
    for _ in 0..60 {
        let w = ops.linear(&v);
        let nv: f64 = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let nw: f64 = w.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        est = nw / nv;
        v = w.into_iter().map(|z| z / nw).collect();
    }
    est
}

/// Normalized gradient flow on the mass sphere ||u||^2 = c^2 with
/// backtracking whenever the energy rises.
pub fn minimize_energy_constrained(
    ops: &OperatorSet,
    c: f64,
    init: Option<&WaveField>,
    opts: FlowOptions,
) -> Result<GroundStateResult, GroundStateError> {
    let params = &ops.params;
    params.validate()?;
    if params.omega.abs() >= params.gamma {
        return Err(GroundStateError::FastRotation {
            omega: params.omega,
            gamma: params.gamma,
        });
    }
    if params.kappa > 0.0 && params.is_mass_critical() {
        let lambda = params.threshold_lambda();
        if lambda > 0.0 {
            let threshold = threshold_mass(params.dim, lambda).sqrt();
            if c >= threshold {
                return Err(GroundStateError::Threshold { c, threshold });
            }
        }
    }
    let grid = ops.grid;
    let dv = grid.cell_volume();
    let mass = c * c;
    let gamma = params.gamma;
    let mut u: Vec<C> = match init {
        Some(f) => f.values.clone(),
        None => grid.sample(|x| {
            let r2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
            C::new((-gamma * r2 / 2.0).exp(), 0.0)
        }),
    };
    if u.len() != grid.len() {
        return Err(GroundStateError::Resolution(
            "initial field on a different grid".into(),
        ));
    }
    renormalize(&mut u, mass, dv);

    let stiff = spectral_radius(ops);
    let max_amp = u.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let nl = ops.lambda.iter().fold(0.0_f64, |a, b| a.max(b.abs()))
        * params.p
        * max_amp.powf(params.p - 1.0);
    let bound = 1.9 / (stiff + 2.0 * nl);
    let mut tau = opts.tau.unwrap_or(1e-2 / gamma).min(bound);
    let tau_max = tau;

    let mut cur = evaluate(ops, &u, mass);
    let mut history = vec![cur.energy];
    let mut iterations = 0;
    while iterations < opts.max_iterations && cur.residual >= opts.tol {
        let mut accepted = None;
        for _ in 0..40 {
            let mut trial: Vec<C> = u
                .iter()
                .zip(&cur.grad)
                .map(|(z, g)| z - (g + z * cur.omega) * tau)
                .collect();
            renormalize(&mut trial, mass, dv);
            let ev = evaluate(ops, &trial, mass);
            if ev.energy <= cur.energy + ENERGY_NOISE * cur.scale {
                accepted = Some((trial, ev));
                break;
            }
            tau *= 0.5;
        }
        let Some((next, ev)) = accepted else {
            return Err(GroundStateError::NonConvergence {
                iterations,
                residual: cur.residual,
            });
        };
        iterations += 1;
        let drop = cur.energy - ev.energy;
        u = next;
        cur = ev;
        history.push(cur.energy);
        tau = (tau * 1.25).min(tau_max);
        if cur.residual < opts.tol && drop <= opts.tol * cur.energy.abs().max(1e-300) {
            break;
        }
        if !cur.residual.is_finite() {
            return Err(GroundStateError::NonConvergence {
                iterations,
                residual: cur.residual,
            });
        }
    }
    if cur.residual >= opts.tol {
        return Err(GroundStateError::NonConvergence {
            iterations,
            residual: cur.residual,
        });
    }
    let peak = u
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.norm().partial_cmp(&b.1.norm()).unwrap())
        .map(|(i, _)| i)
        .unwrap_or(0);
    let phase = C::from_polar(1.0, -u[peak].arg());
    u.iter_mut().for_each(|z| *z *= phase);
    Ok(GroundStateResult {
        field: WaveField { grid, values: u },
        mass: c,
        energy: cur.energy,
        omega: cur.omega,
        residual: cur.residual,
        iterations,
        energy_history: history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use crate::operators::PhysicsParams;

    fn ops(omega: f64, lambda: f64, kappa: f64) -> OperatorSet {
        let g = GridSpec::cubic(2, 8.0, 64).unwrap();
        OperatorSet::new(
            g,
            PhysicsParams::power(2, 3.0, lambda, 1.0, omega).with_kappa(kappa),
        )
        .unwrap()
    }

    #[test]
    fn linear_oscillator_minimizer() {
        for omega in [0.0, 0.5] {
            let o = ops(omega, 0.0, 1.0);
            let init = WaveField::from_fn(o.grid, |x| {
                C::new((-(x[0] - 0.4).powi(2) - 0.6 * x[1] * x[1]).exp(), 0.0)
            });
            let res =
                minimize_energy_constrained(&o, 1.0, Some(&init), FlowOptions::default()).unwrap();
            assert!(res.iterations > 100);
            assert!((res.energy - 1.0).abs() < 1e-6, "{}", res.energy);
            assert!((res.omega + 1.0).abs() < 1e-6);
            assert!((res.field.norm_sq() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn energy_monotone_and_mass_fixed() {
        let o = ops(0.5, 1.0, 1.0);
        let init = WaveField::from_fn(o.grid, |x| {
            C::new((-(x[0] - 0.5).powi(2) - x[1] * x[1]).exp(), 0.1 * x[0])
        });
        let res =
            minimize_energy_constrained(&o, 1.2, Some(&init), FlowOptions::default()).unwrap();
        assert!(res
            .energy_history
            .windows(2)
            .all(|w| w[1] <= w[0] + 1e-11 * w[0].abs()));
        assert!(res.energy_history.last() < res.energy_history.first());
        assert!((res.field.norm_sq() - 1.44).abs() < 1e-12);
        assert!(res.residual < 1e-8);
        let peak = res
            .field
            .values
            .iter()
            .max_by(|a, b| a.norm().partial_cmp(&b.norm()).unwrap())
            .unwrap();
        assert!(peak.im.abs() < 1e-14 && peak.re > 0.0);
    }

    #[test]
    fn defocusing_converges_for_large_mass() {
        for c in [0.5, 2.0, 4.0] {
            let res =
                minimize_energy_constrained(&ops(0.3, 1.0, -1.0), c, None, FlowOptions::default())
                    .unwrap();
            assert!(res.residual < 1e-8);
        }
    }

    #[test]
    fn rejections() {
        let err =
            minimize_energy_constrained(&ops(1.2, 1.0, 1.0), 1.0, None, FlowOptions::default());
        assert!(matches!(err, Err(GroundStateError::FastRotation { .. })));
        let err =
            minimize_energy_constrained(&ops(0.2, 1.0, 1.0), 2.5, None, FlowOptions::default());
        assert!(matches!(err, Err(GroundStateError::Threshold { .. })));
    }
}
