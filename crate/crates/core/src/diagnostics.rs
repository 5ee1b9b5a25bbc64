//! Conserved and monitored functionals, virial identities and blowup criteria.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::WaveField;
use crate::operators::{OperatorSet, PhysicsParams};

type C = Complex64;

#[derive(Debug, Error, PartialEq)]
pub enum DiagnosticsError {
    #[error("gamma must be > 0, got {0}")]
    Gamma(f64),
    #[error("weight is not a smooth radial function: {0}")]
    NonRadialWeight(String),
    #[error("series needs at least {need} samples, got {got}")]
    ShortSeries { need: usize, got: usize },
    #[error("series samples are not uniformly spaced")]
    NonUniform,
}

/// One row of the time series. Column order matches `COLUMNS`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub mass: f64,
    /// Integral of |grad u|^2.
    pub kinetic: f64,
    pub trap: f64,
    /// Integral of G(x, |u|^2).
    pub interaction: f64,
    /// l_Omega = -Omega <L_z u, u>.
    pub angular: f64,
    pub energy: f64,
    pub free_energy: f64,
    pub variance: f64,
    pub variance_prime: f64,
    /// J'' - 4(E - l) + 4 gamma^2 J, the forcing that moves J off the
    /// harmonic variance law.
    pub virial_residual: f64,
    pub grad_norm: f64,
    pub sigma_norm: f64,
    pub boundary_mass: f64,
    pub tail_fraction: f64,
}

pub const COLUMNS: [&str; 15] = [
    "t",
    "mass",
    "kinetic",
    "trap",
    "interaction",
    "angular",
    "energy",
    "free_energy",
    "J",
    "dJ",
    "virial_residual",
    "grad_norm",
    "sigma_norm",
    "boundary_mass",
    "tail_fraction",
];

impl DiagnosticsRecord {
    pub fn to_row(&self) -> [f64; 15] {
        [
            self.t,
            self.mass,
            self.kinetic,
            self.trap,
            self.interaction,
            self.angular,
            self.energy,
            self.free_energy,
            self.variance,
            self.variance_prime,
            self.virial_residual,
            self.grad_norm,
            self.sigma_norm,
            self.boundary_mass,
            self.tail_fraction,
        ]
    }

    pub fn from_row(r: &[f64; 15]) -> Self {
        DiagnosticsRecord {
            t: r[0],
            mass: r[1],
            kinetic: r[2],
            trap: r[3],
            interaction: r[4],
            angular: r[5],
            energy: r[6],
            free_energy: r[7],
            variance: r[8],
            variance_prime: r[9],
            virial_residual: r[10],
            grad_norm: r[11],
            sigma_norm: r[12],
            boundary_mass: r[13],
            tail_fraction: r[14],
        }
    }

    /// J'' predicted by the virial identity at this sample.
    pub fn virial_second_derivative(&self, gamma: f64) -> f64 {
        self.virial_residual + 4.0 * (self.energy - self.angular)
            - 4.0 * gamma * gamma * self.variance
    }
}

/// Thresholds shared by the classifiers and consistency checks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Relative slack allowed when matching the equality cases of the criteria.
    pub verdict: f64,
    pub boundary_mass: f64,
    pub duhamel_bound: f64,
    pub duhamel_reconstruction: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            verdict: 1e-6,
            boundary_mass: 1e-8,
            duhamel_bound: 1e-4,
            duhamel_reconstruction: 1e-3,
        }
    }
}

struct Pointwise {
    mass: f64,
    trap: f64,
    interaction: f64,
    variance: f64,
    /// Integral of lambda (v G'(v) - G(v)).
    excess: f64,
    /// Integral of r lambda'(r) G(v).
    radial_slope: f64,
    boundary: f64,
}

fn pointwise(ops: &OperatorSet, u: &[C]) -> Pointwise {
    let dv = ops.grid.cell_volume();
    let p = ops.params.p;
    let edge = 0.9 * ops.grid.min_extent();
    let mut s = Pointwise {
        mass: 0.0,
        trap: 0.0,
        interaction: 0.0,
        variance: 0.0,
        excess: 0.0,
        radial_slope: 0.0,
        boundary: 0.0,
    };
    for (i, z) in u.iter().enumerate() {
        let v = z.norm_sqr();
        let r = ops.radius[i];
        let (g, dg) = ops.params.model.profile(p, v);
        s.mass += v;
        s.trap += ops.potential[i] * v;
        s.interaction += ops.lambda[i] * g;
        s.variance += r * r * v;
        s.excess += ops.lambda[i] * (v * dg - g);
        s.radial_slope += r * ops.dlambda[i] * g;
        if r > edge {
            s.boundary += v;
        }
    }
    for x in [
        &mut s.mass,
        &mut s.trap,
        &mut s.interaction,
        &mut s.variance,
        &mut s.excess,
        &mut s.radial_slope,
        &mut s.boundary,
    ] {
        *x *= dv;
    }
    s
}

/// Kinetic integral and the fraction of spectral mass with some
/// |k_j| above two thirds of the axis maximum.
pub fn spectral_content(ops: &OperatorSet, u: &[C]) -> (f64, f64) {
    let mut c = u.to_vec();
    ops.spectral().forward(&mut c);
    let grid = &ops.grid;
    let cut: Vec<f64> = (0..3)
        .map(|a| {
            if a < grid.dim {
                2.0 / 3.0 * grid.k_max(a)
            } else {
                f64::INFINITY
            }
        })
        .collect();
    let (mut kin, mut total, mut tail) = (0.0, 0.0, 0.0);
    for (i, z) in c.iter().enumerate() {
        let a = ops.axes(i);
        let w = z.norm_sqr();
        kin += 2.0 * ops.kinetic[i] * w;
        total += w;
        if (0..grid.dim).any(|j| ops.k[j][a[j]].abs() > cut[j]) {
            tail += w;
        }
    }
    let frac = if total > 0.0 { tail / total } else { 0.0 };
    (kin * grid.parseval_weight(), frac)
}

fn weighted_sum(ops: &OperatorSet, f: impl Fn(usize) -> C) -> C {
    (0..ops.grid.len()).map(f).sum::<C>() * ops.grid.cell_volume()
}

/// <L_z u, u>, real for any field.
pub fn lz_expectation(ops: &OperatorSet, u: &[C]) -> C {
    let l = ops.lz(u);
    weighted_sum(ops, |i| l[i] * u[i].conj())
}

pub fn record(ops: &OperatorSet, field: &WaveField, t: f64) -> DiagnosticsRecord {
    let u = &field.values;
    let params = &ops.params;
    let pw = pointwise(ops, u);
    let (kinetic, tail) = spectral_content(ops, u);
    let grads = ops.gradient(u);
    let lz = ops.lz_from_gradient(&grads[0], &grads[1]);
    let lz_exp = weighted_sum(ops, |i| lz[i] * u[i].conj()).re;
    let jp = variance_prime_from_gradient(ops, u, &grads);
    let angular = -params.omega * lz_exp;
    let free_energy = 0.5 * kinetic - params.kappa * pw.interaction;
    let energy = free_energy + pw.trap + angular;
    let g2 = params.gamma * params.gamma;
    let n = params.dim as f64;
    let jpp = 2.0 * kinetic - 2.0 * g2 * pw.variance - 2.0 * n * params.kappa * pw.excess
        + 2.0 * params.kappa * pw.radial_slope;
    DiagnosticsRecord {
        t,
        mass: pw.mass,
        kinetic,
        trap: pw.trap,
        interaction: pw.interaction,
        angular,
        energy,
        free_energy,
        variance: pw.variance,
        variance_prime: jp,
        virial_residual: jpp - 4.0 * (energy - angular) + 4.0 * g2 * pw.variance,
        grad_norm: kinetic.sqrt(),
        sigma_norm: (kinetic + pw.variance + pw.mass).sqrt(),
        boundary_mass: if pw.mass > 0.0 {
            pw.boundary / pw.mass
        } else {
            0.0
        },
        tail_fraction: tail,
    }
}

fn variance_prime_from_gradient(ops: &OperatorSet, u: &[C], grads: &[Vec<C>]) -> f64 {
    let s = weighted_sum(ops, |i| {
        let x = ops.coordinate(i);
        let xg: C = (0..grads.len()).map(|a| grads[a][i] * x[a]).sum();
        u[i].conj() * xg
    });
    2.0 * s.im
}

/// J' = 2 Im int x conj(u) . grad u.
pub fn variance_prime(ops: &OperatorSet, field: &WaveField) -> f64 {
    let grads = ops.gradient(&field.values);
    variance_prime_from_gradient(ops, &field.values, &grads)
}

/// J'' from the virial identity, inhomogeneous coefficient included.
pub fn virial_rhs(ops: &OperatorSet, field: &WaveField) -> f64 {
    let pw = pointwise(ops, &field.values);
    let (kinetic, _) = spectral_content(ops, &field.values);
    let p = &ops.params;
    2.0 * kinetic - 2.0 * p.gamma * p.gamma * pw.variance - 2.0 * p.dim as f64 * p.kappa * pw.excess
        + 2.0 * p.kappa * pw.radial_slope
}

/// Radial weight rho(r) with derivatives [rho, rho', rho'', rho''', rho''''].
pub trait RadialWeight {
    fn derivatives(&self, r: f64) -> [f64; 5];
}

pub struct QuadraticWeight;

impl RadialWeight for QuadraticWeight {
    fn derivatives(&self, r: f64) -> [f64; 5] {
        [r * r, 2.0 * r, 2.0, 0.0, 0.0]
    }
}

pub struct ConstantWeight(pub f64);

impl RadialWeight for ConstantWeight {
    fn derivatives(&self, _: f64) -> [f64; 5] {
        [self.0, 0.0, 0.0, 0.0, 0.0]
    }
}

/// rho(r) = exp(-r^2 / w^2).
pub struct GaussianBump {
    pub width: f64,
}

impl RadialWeight for GaussianBump {
    fn derivatives(&self, r: f64) -> [f64; 5] {
        let a = 1.0 / (self.width * self.width);
        let r2 = r * r;
        let e = (-a * r2).exp();
        [
            e,
            -2.0 * a * r * e,
            (-2.0 * a + 4.0 * a * a * r2) * e,
            (12.0 * a * a * r - 8.0 * a.powi(3) * r * r2) * e,
            (12.0 * a * a - 48.0 * a.powi(3) * r2 + 16.0 * a.powi(4) * r2 * r2) * e,
        ]
    }
}

/// Laplacian and bilaplacian of a radial function in n dimensions.
fn radial_laplacians(d: [f64; 5], r: f64, n: f64) -> (f64, f64) {
    if r < 1e-12 {
        return (n * d[2], n * (n + 2.0) / 3.0 * d[4]);
    }
    let lap = d[2] + (n - 1.0) * d[1] / r;
    let dlap = d[3] + (n - 1.0) * (d[2] / r - d[1] / (r * r));
    let ddlap = d[4] + (n - 1.0) * (d[3] / r - 2.0 * d[2] / (r * r) + 2.0 * d[1] / (r * r * r));
    (lap, ddlap + (n - 1.0) * dlap / r)
}

/// Second derivative of J_rho = int rho |u|^2 from the localized virial identity.
pub fn localized_virial_rhs(
    ops: &OperatorSet,
    field: &WaveField,
    weight: &dyn RadialWeight,
) -> Result<f64, DiagnosticsError> {
    let d0 = weight.derivatives(0.0);
    let scale = d0.iter().map(|x| x.abs()).fold(1e-300, f64::max);
    if d0[1].abs() > 1e-12 * scale || d0[3].abs() > 1e-12 * scale {
        return Err(DiagnosticsError::NonRadialWeight(format!(
            "odd derivatives at the origin are {} and {}",
            d0[1], d0[3]
        )));
    }
    let u = &field.values;
    let params = &ops.params;
    let n = params.dim as f64;
    let p = params.p;
    let g2 = params.gamma * params.gamma;
    let grads = ops.gradient(u);
    let dv = ops.grid.cell_volume();
    let mut total = 0.0;
    for i in 0..u.len() {
        let r = ops.radius[i];
        let x = ops.coordinate(i);
        let d = weight.derivatives(r);
        let (lap, bilap) = radial_laplacians(d, r, n);
        let v = u[i].norm_sqr();
        let (g, dg) = params.model.profile(p, v);
        let mut hess = 0.0;
        for j in 0..params.dim {
            for k in 0..params.dim {
                let delta = if j == k { 1.0 } else { 0.0 };
                let hjk = if r < 1e-12 {
                    d[2] * delta
                } else {
                    let xx = x[j] * x[k] / (r * r);
                    d[2] * xx + d[1] / r * (delta - xx)
                };
                hess += hjk * (grads[j][i].conj() * grads[k][i]).re;
            }
        }
        total += -0.25 * bilap * v - params.kappa * ops.lambda[i] * lap * (v * dg - g) + hess
            - g2 * r * d[1] * v
            + params.kappa * ops.dlambda[i] * d[1] * g;
    }
    Ok(total * dv)
}

/// Closed-form solution of J'' + 4 gamma^2 J = 4 (E - l).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClosedForm {
    pub c: f64,
    pub beta: f64,
    /// (E - l) / gamma^2, the centre of the oscillation.
    pub center: f64,
    pub gamma: f64,
    pub j0: f64,
    pub dj0: f64,
}

impl ClosedForm {
    pub fn predict(&self, t: f64) -> f64 {
        let w = 2.0 * self.gamma * t;
        (self.j0 - self.center) * w.cos() + self.dj0 / (2.0 * self.gamma) * w.sin() + self.center
    }

    /// Smallest positive zero, allowing a relative slack `tol` on C >= |D|.
    pub fn first_zero_with(&self, tol: f64) -> Option<f64> {
        let d = self.center;
        if self.c < d.abs() * (1.0 - tol) || self.c == 0.0 {
            return None;
        }
        let s = (-d / self.c).clamp(-1.0, 1.0);
        let a = s.asin();
        let mut best: Option<f64> = None;
        for k in -1..=2 {
            for phi in [a, PI - a] {
                let t = (phi + 2.0 * PI * k as f64 - self.beta) / (2.0 * self.gamma);
                if t > 1e-14 && best.map_or(true, |b| t < b) {
                    best = Some(t);
                }
            }
        }
        best
    }

    pub fn first_zero(&self) -> Option<f64> {
        self.first_zero_with(1e-6)
    }
}

pub fn closed_form_variance(
    j0: f64,
    dj0: f64,
    energy: f64,
    angular: f64,
    gamma: f64,
) -> Result<ClosedForm, DiagnosticsError> {
    if !(gamma > 0.0) {
        return Err(DiagnosticsError::Gamma(gamma));
    }
    let center = (energy - angular) / (gamma * gamma);
    let a = j0 - center;
    let b = dj0 / (2.0 * gamma);
    let c = a.hypot(b);
    Ok(ClosedForm {
        c,
        beta: a.atan2(b),
        center,
        gamma,
        j0,
        dj0,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    A,
    B,
    C,
    D,
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlowupVerdict {
    pub condition: Condition,
    /// Predicted window for the blowup time.
    pub window: Option<(f64, f64)>,
    pub closed_form: Option<ClosedForm>,
    pub predicted_zero: Option<f64>,
}

impl BlowupVerdict {
    pub fn fires(&self) -> bool {
        self.condition != Condition::None
    }
}

pub fn classify_blowup(rec: &DiagnosticsRecord, params: &PhysicsParams) -> BlowupVerdict {
    classify_blowup_with(rec, params, &Tolerances::default())
}

pub fn classify_blowup_with(
    rec: &DiagnosticsRecord,
    params: &PhysicsParams,
    tol: &Tolerances,
) -> BlowupVerdict {
    let gamma = params.gamma;
    let g2 = gamma * gamma;
    let el = rec.energy - rec.angular;
    let j0 = rec.variance;
    let dj0 = rec.variance_prime;
    let slack = tol.verdict * (0.5 * rec.kinetic + rec.trap).max(1e-300);
    let critical = params.is_mass_critical();
    let focusing = params.kappa > 0.0;
    let mut condition = Condition::None;
    if focusing && critical {
        if el <= 0.5 * g2 * j0 + slack {
            condition = Condition::A;
        } else if el <= 0.5 * gamma * dj0.abs() + slack {
            condition = Condition::B;
        }
    } else if focusing && params.p > PhysicsParams::critical_power(params.dim) {
        if el < -slack {
            condition = Condition::C;
        } else if el.abs() <= slack && dj0 < 0.0 {
            condition = Condition::D;
        }
    }
    let closed_form = if critical {
        closed_form_variance(j0, dj0, rec.energy, rec.angular, gamma).ok()
    } else {
        None
    };
    let window = match condition {
        Condition::A | Condition::B => Some((PI / (4.0 * gamma), 3.0 * PI / (4.0 * gamma))),
        Condition::C | Condition::D => quadratic_root(j0, dj0, el).map(|t| (0.0, t)),
        Condition::None => None,
    };
    let predicted_zero = match condition {
        Condition::A | Condition::B => closed_form
            .as_ref()
            .and_then(|c| c.first_zero_with(tol.verdict.max(1e-6))),
        Condition::C | Condition::D => window.map(|w| w.1),
        Condition::None => None,
    };
    BlowupVerdict {
        condition,
        window,
        closed_form,
        predicted_zero,
    }
}

/// Positive root of J0 + J0' t + 2 (E - l) t^2.
fn quadratic_root(j0: f64, dj0: f64, el: f64) -> Option<f64> {
    if el.abs() < 1e-300 {
        return if dj0 < 0.0 { Some(-j0 / dj0) } else { None };
    }
    let disc = dj0 * dj0 - 8.0 * el * j0;
    if disc < 0.0 {
        return None;
    }
    let roots = [
        (-dj0 - disc.sqrt()) / (4.0 * el),
        (-dj0 + disc.sqrt()) / (4.0 * el),
    ];
    roots
        .into_iter()
        .filter(|t| *t > 0.0)
        .fold(None, |b: Option<f64>, t| Some(b.map_or(t, |b| b.min(t))))
}

/// (2/n) int|grad u|^2 int|x|^2|u|^2 / (int|u|^2)^2, at least one.
pub fn uncertainty_ratio(ops: &OperatorSet, field: &WaveField) -> f64 {
    let pw = pointwise(ops, &field.values);
    let (kinetic, _) = spectral_content(ops, &field.values);
    2.0 / ops.grid.dim as f64 * kinetic * pw.variance / (pw.mass * pw.mass)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DuhamelReport {
    pub times: Vec<f64>,
    /// Closed-form bound minus measured J.
    pub slack: Vec<f64>,
    pub reconstruction: Vec<f64>,
    pub min_slack_rel: f64,
    pub reconstruction_error_rel: f64,
}

/// Compares the measured variance with the closed-form bound and with the
/// Duhamel reconstruction driven by the sampled forcing.
pub fn duhamel_variance_bound(
    series: &[DiagnosticsRecord],
    params: &PhysicsParams,
) -> Result<DuhamelReport, DiagnosticsError> {
    if series.len() < 2 {
        return Err(DiagnosticsError::ShortSeries {
            need: 2,
            got: series.len(),
        });
    }
    let r0 = &series[0];
    let gamma = params.gamma;
    let cf = closed_form_variance(r0.variance, r0.variance_prime, r0.energy, r0.angular, gamma)?;
    let t0 = r0.t;
    let times: Vec<f64> = series.iter().map(|r| r.t - t0).collect();
    let mut slack = Vec::with_capacity(series.len());
    let mut recon = Vec::with_capacity(series.len());
    for (i, r) in series.iter().enumerate() {
        let t = times[i];
        let kernel = |j: usize| {
            (2.0 * gamma * (t - times[j])).sin() / (2.0 * gamma) * series[j].virial_residual
        };
        let mut integral = 0.0;
        for j in 1..=i {
            integral += 0.5 * (times[j] - times[j - 1]) * (kernel(j) + kernel(j - 1));
        }
        let bound = cf.predict(t);
        slack.push(bound - r.variance);
        recon.push(bound + integral);
    }
    let j0 = r0.variance;
    let min_slack_rel = slack.iter().cloned().fold(f64::INFINITY, f64::min) / j0;
    let reconstruction_error_rel = recon
        .iter()
        .zip(series)
        .map(|(a, r)| (a - r.variance).abs())
        .fold(0.0, f64::max)
        / j0;
    Ok(DuhamelReport {
        times,
        slack,
        reconstruction: recon,
        min_slack_rel,
        reconstruction_error_rel,
    })
}

/// Largest relative gap between the fourth-order centred second difference
/// of the measured J (Richardson combination of the h and 2h stencils) and
/// the virial prediction, over interior samples.
pub fn virial_consistency(
    series: &[DiagnosticsRecord],
    gamma: f64,
) -> Result<f64, DiagnosticsError> {
    if series.len() < 5 {
        return Err(DiagnosticsError::ShortSeries {
            need: 5,
            got: series.len(),
        });
    }
    let h = series[1].t - series[0].t;
    if series
        .windows(2)
        .any(|w| ((w[1].t - w[0].t) - h).abs() > 1e-9 * h.abs())
    {
        return Err(DiagnosticsError::NonUniform);
    }
    let j: Vec<f64> = series.iter().map(|r| r.variance).collect();
    let pred: Vec<f64> = series
        .iter()
        .map(|r| r.virial_second_derivative(gamma))
        .collect();
    let scale = pred.iter().map(|x| x.abs()).fold(0.0, f64::max).max(1e-300);
    let mut worst: f64 = 0.0;
    for i in 2..j.len() - 2 {
        let d2 = (-j[i - 2] + 16.0 * j[i - 1] - 30.0 * j[i] + 16.0 * j[i + 1] - j[i + 2])
            / (12.0 * h * h);
        worst = worst.max((d2 - pred[i]).abs() / scale);
    }
    Ok(worst)
}
