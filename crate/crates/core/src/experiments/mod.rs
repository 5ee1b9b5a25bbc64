//! Scripted runs: threshold sweeps, blowup-rate fits, orbital stability and
//! the fast-rotation vortex family.

mod stability;
mod sweep;
mod vortex;

use std::f64::consts::PI;

use num_complex::Complex64;
use thiserror::Error;

use crate::diagnostics::DiagnosticsError;
use crate::grid::{GridError, GridSpec, WaveField};
use crate::groundstate::{
    critical_profile, lift_to_grid, solve_q_radial, threshold_mass, GroundStateError,
};
use crate::integrator::IntegratorError;
use crate::operators::{ParamsError, PhysicsParams};

pub use stability::{
    orbit_distance, rotate, sigma_inner, stability_run, Direction, StabilityConfig,
    StabilityResult, StabilityRun, StabilityVerdict,
};
pub use sweep::{
    blowup_rate_fit, inhomogeneous_threshold, power_law_fit, threshold_sweep, Family, Outcome,
    RateFit, SweepConfig, SweepResult, SweepRow,
};
pub use vortex::{
    psi_m, vortex_counterexample, vortex_interaction_exact, VortexConfig, VortexResult, VortexRow,
};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Params(#[from] ParamsError),
    #[error(transparent)]
    GroundState(#[from] GroundStateError),
    #[error(transparent)]
    Integrator(#[from] IntegratorError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
    #[error("insufficient samples: {found} in the fit window, need {needed}")]
    InsufficientSamples { found: usize, needed: usize },
    #[error("resolution limit exceeded: {0}")]
    Resolution(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
}

/// One trap period 2 pi / gamma.
pub fn trap_period(gamma: f64) -> f64 {
    2.0 * PI / gamma
}

/// Oscillator ground state (gamma/pi)^(n/4) e^{-gamma |x|^2 / 2} scaled to
/// L2 norm `norm`.
pub fn oscillator_gaussian(grid: &GridSpec, gamma: f64, norm: f64) -> WaveField {
    let a = norm * (gamma / PI).powf(grid.dim as f64 / 4.0);
    WaveField::from_fn(*grid, |x| {
        let r2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
        Complex64::new(a * (-gamma * r2 / 2.0).exp(), 0.0)
    })
}

/// Data c e^{i theta} alpha^{n/2} Q_lambda(alpha x) e^{i nu |x|^2}, or the
/// oscillator Gaussian with the same L2 norm c ||Q_lambda||_2.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InitialData {
    pub family: Family,
    pub c: f64,
    pub alpha: f64,
    pub theta: f64,
    pub nu: f64,
    /// None takes the threshold coefficient of the model.
    pub lambda: Option<f64>,
}

impl InitialData {
    pub fn new(family: Family, c: f64) -> Self {
        InitialData {
            family,
            c,
            alpha: 1.0,
            theta: 0.0,
            nu: 0.0,
            lambda: None,
        }
    }

    pub fn build(
        &self,
        grid: &GridSpec,
        params: &PhysicsParams,
    ) -> Result<WaveField, ExperimentError> {
        let dim = grid.dim;
        let lambda = self.lambda.unwrap_or_else(|| params.threshold_lambda());
        let profile = if params.is_mass_critical() {
            critical_profile(dim).scaled(lambda.powf(-(dim as f64) / 4.0))
        } else {
            solve_q_radial(params.p, lambda, dim, 1e-12)?
        };
        match self.family {
            Family::ScaledQ => Ok(lift_to_grid(
                &profile, grid, self.c, self.alpha, self.theta, self.nu,
            )?),
            Family::Gaussian => {
                let norm = if params.is_mass_critical() {
                    threshold_mass(dim, lambda)
                } else {
                    profile.mass
                };
                let mut u = oscillator_gaussian(grid, params.gamma, self.c * norm.sqrt());
                if self.nu != 0.0 || self.theta != 0.0 {
                    u.values
                        .iter_mut()
                        .zip(grid.sample(|x| x[0] * x[0] + x[1] * x[1] + x[2] * x[2]))
                        .for_each(|(z, r2)| {
                            *z *= Complex64::from_polar(1.0, self.theta + self.nu * r2)
                        });
                }
                Ok(u)
            }
        }
    }
}
