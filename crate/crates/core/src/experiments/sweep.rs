use std::time::Instant;

use serde::Serialize;

use super::{trap_period, ExperimentError, InitialData};
use crate::diagnostics::{classify_blowup, BlowupVerdict, DiagnosticsRecord};
use crate::exec::{map_indexed, ExecPolicy};
use crate::grid::{GridSpec, Spectral, WaveField};
use crate::groundstate::threshold_mass;
use crate::integrator::{EvolutionState, Integrator, Status, StepControl};
use crate::operators::{OperatorSet, PhysicsParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// c e^{i theta} alpha^{n/2} Q(alpha x).
    ScaledQ,
    /// Oscillator ground state with mass c^2 ||Q||^2.
    Gaussian,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Global,
    Blowup,
    /// Resolution lost before refine mode, or growth without a detection.
    Unresolved,
}

#[derive(Clone, Debug)]
pub struct SweepConfig {
    pub grid: GridSpec,
    pub params: PhysicsParams,
    pub family: Family,
    pub c_list: Vec<f64>,
    pub dt: f64,
    pub periods: f64,
    pub alpha: f64,
    pub theta: f64,
    /// Coefficient of the profile used for the family and for measuring c.
    /// None takes the threshold coefficient of the model.
    pub reference_lambda: Option<f64>,
    pub control: StepControl,
    pub policy: ExecPolicy,
    pub keep_series: bool,
}

impl SweepConfig {
    pub fn new(grid: GridSpec, params: PhysicsParams, family: Family, c_list: Vec<f64>) -> Self {
        let dt = 1e-3 / params.gamma;
        SweepConfig {
            grid,
            params,
            family,
            c_list,
            dt,
            periods: 3.0,
            alpha: 1.0,
            theta: 0.0,
            reference_lambda: None,
            control: StepControl::default(),
            policy: ExecPolicy::default(),
            keep_series: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub c: f64,
    pub family: Family,
    pub verdict: BlowupVerdict,
    pub outcome: Outcome,
    pub status: Status,
    pub t_detect: Option<f64>,
    pub t_final: f64,
    pub steps: u64,
    pub max_grad: f64,
    pub max_grad_ratio: f64,
    pub max_sigma: f64,
    /// A-priori bound on the Sigma norm, available below the threshold.
    pub sigma_bound: Option<f64>,
    #[serde(skip)]
    pub runtime: f64,
    #[serde(skip)]
    pub series: Vec<DiagnosticsRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepResult {
    /// ||Q_{lambda_ref}||_2, the unit of c.
    pub reference_norm: f64,
    /// (||Q_{lambda_max}||_2, ||Q_{lambda_min}||_2) for inhomogeneous models.
    pub gap: Option<(f64, f64)>,
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    /// No global row above a blowup row within one family.
    pub fn is_monotone(&self) -> bool {
        for fam in [Family::ScaledQ, Family::Gaussian] {
            let rows: Vec<&SweepRow> = self.rows.iter().filter(|r| r.family == fam).collect();
            let first_blowup = rows
                .iter()
                .filter(|r| r.outcome == Outcome::Blowup)
                .map(|r| r.c)
                .fold(f64::INFINITY, f64::min);
            if rows
                .iter()
                .any(|r| r.outcome == Outcome::Global && r.c > first_blowup)
            {
                return false;
            }
        }
        true
    }

    /// Largest global c and smallest blowup c.
    pub fn transition(&self) -> Option<(f64, f64)> {
        let g = self
            .rows
            .iter()
            .filter(|r| r.outcome == Outcome::Global)
            .map(|r| r.c)
            .fold(None, fmax);
        let b = self
            .rows
            .iter()
            .filter(|r| r.outcome == Outcome::Blowup)
            .map(|r| r.c)
            .fold(None, fmin);
        Some((g?, b?))
    }

    /// Every firing verdict ended in blowup.
    pub fn verdicts_confirmed(&self) -> bool {
        self.rows
            .iter()
            .all(|r| !r.verdict.fires() || r.outcome == Outcome::Blowup)
    }
}

fn fmax(a: Option<f64>, b: f64) -> Option<f64> {
    Some(a.map_or(b, |a| a.max(b)))
}

fn fmin(a: Option<f64>, b: f64) -> Option<f64> {
    Some(a.map_or(b, |a| a.min(b)))
}

fn initial_field(cfg: &SweepConfig, lambda_ref: f64, c: f64) -> Result<WaveField, ExperimentError> {
    let data = InitialData {
        alpha: cfg.alpha,
        theta: cfg.theta,
        lambda: Some(lambda_ref),
        ..InitialData::new(cfg.family, c)
    };
    data.build(&cfg.grid, &cfg.params)
}

/// Sigma-norm bound from E - l >= (1/2)(1 - q^{2/n}) K + trap, with
/// q = M / M_threshold < 1.
fn sigma_bound(rec: &DiagnosticsRecord, params: &PhysicsParams) -> Option<f64> {
    if params.kappa < 0.0 {
        return None;
    }
    if !params.is_mass_critical() {
        return None;
    }
    let n = params.dim as f64;
    let q = rec.mass / threshold_mass(params.dim, params.threshold_lambda());
    if q >= 1.0 {
        return None;
    }
    let el = rec.energy - rec.angular;
    let k = 2.0 * el / (1.0 - q.powf(2.0 / n));
    let j = 2.0 * el / (params.gamma * params.gamma);
    Some((k + j + rec.mass).sqrt())
}

fn run_row(
    cfg: &SweepConfig,
    lambda_ref: f64,
    c: f64,
    inner: ExecPolicy,
) -> Result<SweepRow, ExperimentError> {
    let start = Instant::now();
    let ops = OperatorSet::with_spectral(
        Spectral::new(cfg.grid).with_policy(inner),
        cfg.params.clone(),
    )?;
    let u0 = initial_field(cfg, lambda_ref, c)?;
    let mut integ = Integrator::new(ops).with_control(cfg.control.clone());
    let mut state = EvolutionState::new(u0, cfg.params.clone(), cfg.dt);
    let first = integ.record(&state);
    let verdict = classify_blowup(&first, &cfg.params);
    let bound = sigma_bound(&first, &cfg.params);
    let series = integ.evolve(&mut state, cfg.periods * trap_period(cfg.params.gamma))?;
    let g0 = first.grad_norm;
    let max_grad = series.iter().map(|r| r.grad_norm).fold(0.0, f64::max);
    let max_sigma = series.iter().map(|r| r.sigma_norm).fold(0.0, f64::max);
    let max_grad_ratio = max_grad / g0;
    let outcome = match state.status {
        Status::BlowupDetected => Outcome::Blowup,
        Status::Finished => {
            let sigma_ok = match bound {
                Some(b) => max_sigma <= b * (1.0 + 1e-6),
                None => max_sigma <= 10.0 * first.sigma_norm,
            };
            if max_grad_ratio <= 10.0 && sigma_ok {
                Outcome::Global
            } else {
                Outcome::Unresolved
            }
        }
        _ => Outcome::Unresolved,
    };
    Ok(SweepRow {
        c,
        family: cfg.family,
        verdict,
        outcome,
        status: state.status,
        t_detect: state.refine.t_detect.filter(|_| outcome == Outcome::Blowup),
        t_final: state.t,
        steps: state.steps,
        max_grad,
        max_grad_ratio,
        max_sigma,
        sigma_bound: bound,
        runtime: start.elapsed().as_secs_f64(),
        series: if cfg.keep_series { series } else { Vec::new() },
    })
}

/// Evolves every c in the list for `periods` trap periods or until blowup.
/// Rows run concurrently and are returned in list order.
pub fn threshold_sweep(cfg: &SweepConfig) -> Result<SweepResult, ExperimentError> {
    cfg.params.validate()?;
    if !cfg.params.is_mass_critical() {
        return Err(ExperimentError::Precondition(format!(
            "threshold sweep needs the mass-critical power, got p = {}",
            cfg.params.p
        )));
    }
    let lambda_ref = cfg
        .reference_lambda
        .unwrap_or_else(|| cfg.params.threshold_lambda());
    let inner = if cfg.policy.is_parallel() && cfg.c_list.len() > 1 {
        ExecPolicy::Sequential
    } else {
        cfg.policy
    };
    let rows = map_indexed(cfg.policy, cfg.c_list.len(), |i| {
        run_row(cfg, lambda_ref, cfg.c_list[i], inner)
    });
    let rows = rows.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(SweepResult {
        reference_norm: threshold_mass(cfg.grid.dim, lambda_ref).sqrt(),
        gap: None,
        rows,
    })
}

/// Sweep for a spatially varying coefficient. Data are scaled copies of
/// Q_{lambda_min}, c is measured in ||Q_{lambda_min}||_2, and both reference
/// masses are reported.
pub fn inhomogeneous_threshold(cfg: &SweepConfig) -> Result<SweepResult, ExperimentError> {
    cfg.params.check_hypothesis(&cfg.grid)?;
    let (lmin, lmax) = cfg.params.model.coefficient_bounds(cfg.grid.dim, 50.0);
    let mut cfg = cfg.clone();
    cfg.family = Family::ScaledQ;
    cfg.reference_lambda = Some(lmin);
    let mut res = threshold_sweep(&cfg)?;
    let dim = cfg.grid.dim;
    res.gap = Some((
        threshold_mass(dim, lmax).sqrt(),
        threshold_mass(dim, lmin).sqrt(),
    ));
    Ok(res)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root mean square of the log residuals.
    pub residual: f64,
    pub samples: usize,
    /// Range of T_detect - t used.
    pub window: (f64, f64),
}

/// Least squares line through (ln x, ln y).
pub fn power_law_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = lx
        .iter()
        .zip(&ly)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    (slope, intercept, (rss / n).sqrt())
}

/// Fits ln ||grad u|| against ln(T_detect - t) over the last decade of
/// T_detect - t that holds at least `min_samples` records.
pub fn blowup_rate_fit(
    series: &[DiagnosticsRecord],
    t_detect: f64,
    min_samples: usize,
) -> Result<RateFit, ExperimentError> {
    let mut taus: Vec<(f64, f64)> = series
        .iter()
        .filter(|r| r.t < t_detect)
        .map(|r| (t_detect - r.t, r.grad_norm))
        .filter(|(tau, g)| *tau > 0.0 && *g > 0.0)
        .collect();
    taus.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let found = taus.len();
    if found < min_samples.max(2) {
        return Err(ExperimentError::InsufficientSamples {
            found,
            needed: min_samples,
        });
    }
    let lo = taus[0].0;
    let mut hi = 10.0 * lo;
    loop {
        let count = taus
            .iter()
            .filter(|(tau, _)| *tau >= hi / 10.0 && *tau <= hi)
            .count();
        if count >= min_samples {
            break;
        }
        if hi >= taus[found - 1].0 {
            return Err(ExperimentError::InsufficientSamples {
                found: count,
                needed: min_samples,
            });
        }
        hi *= 1.05;
    }
    let win: Vec<&(f64, f64)> = taus
        .iter()
        .filter(|(tau, _)| *tau >= hi / 10.0 && *tau <= hi)
        .collect();
    let x: Vec<f64> = win.iter().map(|w| w.0).collect();
    let y: Vec<f64> = win.iter().map(|w| w.1).collect();
    let (slope, intercept, residual) = power_law_fit(&x, &y);
    Ok(RateFit {
        slope,
        intercept,
        residual,
        samples: x.len(),
        window: (hi / 10.0, hi),
    })
}
