//! Drives one configured experiment and writes its artifacts.
//!
//! Every run writes `config.ini` (the effective config), `summary.json`
//! and `timing.json` to the output directory, plus kind-specific files.

use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use crate::diagnostics::{classify_blowup, BlowupVerdict, DiagnosticsRecord};
use crate::experiments::{
    inhomogeneous_threshold, stability_run, threshold_sweep, vortex_counterexample,
    ExperimentError, InitialData, StabilityConfig, SweepConfig, SweepResult, VortexConfig,
};
use crate::groundstate::{
    gn_constant, minimize_energy_constrained, pohozaev_residuals, solve_q_radial, FlowOptions,
    GnConstant, GroundStateError,
};
use crate::integrator::{EvolutionState, Integrator, IntegratorError, Status};
use crate::io::{
    load_checkpoint, save_checkpoint, write_series, write_summary, ConfigError, ExperimentKind,
    IoError, RunConfig,
};
use crate::operators::OperatorSet;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("config error: {0}")]
    Config(#[from] ConfigError),
    #[error("invalid setup: {0}")]
    Setup(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("io error: {0}")]
    Io(#[from] IoError),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) | RunError::Setup(_) => EXIT_CONFIG,
            RunError::Numerical(_) => EXIT_NUMERICAL,
            RunError::Io(_) => EXIT_IO,
        }
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Io(IoError::Io(e))
    }
}

impl From<ExperimentError> for RunError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Params(_) | ExperimentError::Precondition(_) => {
                RunError::Setup(e.to_string())
            }
            ExperimentError::GroundState(g) => g.into(),
            other => RunError::Numerical(other.to_string()),
        }
    }
}

impl From<GroundStateError> for RunError {
    fn from(e: GroundStateError) -> Self {
        match e {
            GroundStateError::NonConvergence { .. }
            | GroundStateError::BracketNotFound
            | GroundStateError::Resolution(_) => RunError::Numerical(e.to_string()),
            other => RunError::Setup(other.to_string()),
        }
    }
}

impl From<IntegratorError> for RunError {
    fn from(e: IntegratorError) -> Self {
        RunError::Numerical(e.to_string())
    }
}

#[derive(Serialize)]
struct EvolveSummary {
    status: Status,
    t_final: f64,
    steps: u64,
    dt_final: f64,
    t_detect: Option<f64>,
    verdict: BlowupVerdict,
    max_grad_ratio: f64,
    mass_drift: f64,
    energy_drift: f64,
    angular_drift: f64,
}

#[derive(Serialize)]
struct RadialSummary {
    mass: f64,
    kinetic: f64,
    peak: f64,
    pohozaev: [f64; 3],
    gn: GnConstant,
}

#[derive(Serialize)]
struct GroundSummary {
    radial: Option<RadialSummary>,
    threshold_norm: f64,
    norm: f64,
    energy: f64,
    omega: f64,
    residual: f64,
    iterations: usize,
}

#[derive(Serialize)]
struct SweepSummary<'a> {
    monotone: bool,
    verdicts_confirmed: bool,
    transition: Option<(f64, f64)>,
    sweep: &'a SweepResult,
}

/// Runs `cfg`, writing into `out`. Returns the exit code of a completed
/// run; errors carry their own exit code.
pub fn run(cfg: &RunConfig, out: &Path, resume: Option<&Path>) -> Result<i32, RunError> {
    fs::create_dir_all(out)?;
    fs::write(out.join("config.ini"), cfg.echo())?;
    let start = Instant::now();
    let grid = cfg.grid();
    let params = cfg.physics();
    if resume.is_some() && cfg.experiment != ExperimentKind::Evolve {
        return Err(RunError::Setup(
            "--resume applies to evolve runs only".into(),
        ));
    }
    let code = match cfg.experiment {
        ExperimentKind::Evolve => {
            let ops = OperatorSet::new(grid, params.clone())
                .map_err(|e| RunError::Setup(e.to_string()))?;
            let mut state = match resume {
                Some(path) => {
                    let s = load_checkpoint(path)?;
                    if s.field.grid != grid || s.params.spec().ok() != params.spec().ok() {
                        return Err(RunError::Setup(
                            "checkpoint grid or physics differs from the config".into(),
                        ));
                    }
                    s
                }
                None => {
                    let data = InitialData {
                        alpha: cfg.alpha,
                        theta: cfg.theta,
                        nu: cfg.nu,
                        ..InitialData::new(cfg.family, cfg.c)
                    };
                    EvolutionState::new(data.build(&grid, &params)?, params.clone(), cfg.dt)
                }
            };
            let mut integ = Integrator::new(ops).with_control(cfg.control());
            let series = evolve_with_checkpoints(&mut integ, &mut state, cfg, out)?;
            save_checkpoint(&state, &out.join("final.rnls"))?;
            write_series(&series, &out.join("series.csv"))?;
            let first = &series[0];
            let drift = |f: fn(&DiagnosticsRecord) -> f64| {
                series
                    .iter()
                    .map(|r| (f(r) - f(first)).abs())
                    .fold(0.0, f64::max)
                    / f(first).abs().max(1e-300)
            };
            let code = if state.status == Status::ResolutionLost {
                EXIT_NUMERICAL
            } else {
                EXIT_OK
            };
            let summary = EvolveSummary {
                status: state.status,
                t_final: state.t,
                steps: state.steps,
                dt_final: state.dt,
                t_detect: state.refine.t_detect,
                verdict: classify_blowup(first, &params),
                max_grad_ratio: series.iter().map(|r| r.grad_norm).fold(0.0, f64::max)
                    / first.grad_norm,
                mass_drift: drift(|r| r.mass),
                energy_drift: drift(|r| r.energy),
                angular_drift: drift(|r| r.angular),
            };
            write_summary(out, cfg, code, &summary, start.elapsed().as_secs_f64())?;
            code
        }
        ExperimentKind::Groundstate => {
            let lambda = params.threshold_lambda();
            let radial = if params.kappa > 0.0 {
                let q = solve_q_radial(cfg.p, lambda, cfg.dim, 1e-13)?;
                fs::write(out.join("q_radial.txt"), q.to_table())?;
                Some(RadialSummary {
                    mass: q.mass,
                    kinetic: q.kinetic,
                    peak: q.peak(),
                    pohozaev: pohozaev_residuals(&q),
                    gn: gn_constant(&q),
                })
            } else {
                None
            };
            // Defocusing runs measure c in absolute units.
            let threshold_norm = radial.as_ref().map_or(1.0, |r| r.mass.sqrt());
            let ops = OperatorSet::new(grid, params.clone())
                .map_err(|e| RunError::Setup(e.to_string()))?;
            let opts = FlowOptions {
                tol: cfg.tol,
                ..FlowOptions::default()
            };
            let gs = minimize_energy_constrained(&ops, cfg.c * threshold_norm, None, opts)?;
            let mut state = EvolutionState::new(gs.field.clone(), params.clone(), cfg.dt);
            state.status = Status::Finished;
            save_checkpoint(&state, &out.join("groundstate.rnls"))?;
            let summary = GroundSummary {
                radial,
                threshold_norm,
                norm: gs.mass,
                energy: gs.energy,
                omega: gs.omega,
                residual: gs.residual,
                iterations: gs.iterations,
            };
            write_summary(out, cfg, EXIT_OK, &summary, start.elapsed().as_secs_f64())?;
            EXIT_OK
        }
        ExperimentKind::Sweep | ExperimentKind::Inhomogeneous => {
            let mut sc = SweepConfig::new(grid, params, cfg.family, cfg.c_list.clone());
            sc.dt = cfg.dt;
            sc.periods = cfg.periods;
            sc.alpha = cfg.alpha;
            sc.theta = cfg.theta;
            sc.control = cfg.control();
            sc.keep_series = true;
            let res = if cfg.experiment == ExperimentKind::Sweep {
                threshold_sweep(&sc)?
            } else {
                inhomogeneous_threshold(&sc)?
            };
            for (i, row) in res.rows.iter().enumerate() {
                write_series(&row.series, &out.join(format!("row_{i:02}.csv")))?;
            }
            let summary = SweepSummary {
                monotone: res.is_monotone(),
                verdicts_confirmed: res.verdicts_confirmed(),
                transition: res.transition(),
                sweep: &res,
            };
            let rows: Vec<f64> = res.rows.iter().map(|r| r.runtime).collect();
            write_summary(out, cfg, EXIT_OK, &summary, start.elapsed().as_secs_f64())?;
            let timing = serde_json::json!({ "wall_time_s": start.elapsed().as_secs_f64(), "row_runtime_s": rows });
            fs::write(
                out.join("timing.json"),
                serde_json::to_string_pretty(&timing).map_err(IoError::from)? + "\n",
            )?;
            EXIT_OK
        }
        ExperimentKind::Stability => {
            let mut sc = StabilityConfig::new(grid, params, cfg.c, cfg.delta);
            sc.directions = cfg.directions.clone();
            sc.periods = cfg.periods;
            sc.dt = cfg.dt;
            sc.sample_every = cfg.sample_every;
            sc.seed = cfg.seed;
            sc.flow.tol = cfg.tol;
            sc.control = cfg.control();
            let res = stability_run(&sc)?;
            for run in &res.runs {
                let name = match run.direction {
                    Some(d) => format!("{d:?}").to_lowercase(),
                    None => "unperturbed".into(),
                };
                let mut text = String::from("t,distance\n");
                for (t, d) in run.times.iter().zip(&run.distance) {
                    text.push_str(&format!("{t:.16e},{d:.16e}\n"));
                }
                fs::write(out.join(format!("distance_{name}.csv")), text)?;
            }
            write_summary(out, cfg, EXIT_OK, &res, start.elapsed().as_secs_f64())?;
            EXIT_OK
        }
        ExperimentKind::Vortex => {
            let vc = VortexConfig {
                grid,
                gamma: cfg.gamma,
                omega: cfg.omega,
                k: cfg.strength,
                a: cfg.a,
                m_list: cfg.m_list.clone(),
            };
            let res = vortex_counterexample(&vc)?;
            let mut text =
                String::from("m,kinetic,trap,angular_momentum,interaction,energy,analytic\n");
            for r in &res.rows {
                text.push_str(&format!(
                    "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
                    r.m, r.kinetic, r.trap, r.angular_momentum, r.interaction, r.energy, r.analytic
                ));
            }
            fs::write(out.join("vortex.csv"), text)?;
            write_summary(out, cfg, EXIT_OK, &res, start.elapsed().as_secs_f64())?;
            EXIT_OK
        }
    };
    Ok(code)
}

/// Evolves to `t_end`, saving `checkpoint.rnls` every `checkpoint_every`
/// steps. The returned series has one record per sample time.
fn evolve_with_checkpoints(
    integ: &mut Integrator,
    state: &mut EvolutionState,
    cfg: &RunConfig,
    out: &Path,
) -> Result<Vec<DiagnosticsRecord>, RunError> {
    let mut series: Vec<DiagnosticsRecord> = Vec::new();
    if matches!(
        state.status,
        Status::BlowupDetected | Status::ResolutionLost
    ) {
        return Err(RunError::Setup(format!(
            "checkpoint has terminal status {:?}",
            state.status
        )));
    }
    loop {
        let target = if cfg.checkpoint_every > 0 {
            (state.t + cfg.checkpoint_every as f64 * state.dt).min(cfg.t_end)
        } else {
            cfg.t_end
        };
        let chunk = integ.evolve(state, target)?;
        let skip = usize::from(!series.is_empty() && !chunk.is_empty());
        series.extend(chunk.into_iter().skip(skip));
        if cfg.checkpoint_every > 0 {
            save_checkpoint(state, &out.join("checkpoint.rnls"))?;
        }
        if state.status != Status::Finished || state.t >= cfg.t_end {
            break;
        }
    }
    if series.is_empty() {
        series.push(integ.record(state));
    }
    Ok(series)
}
