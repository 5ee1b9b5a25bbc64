//! Spectral simulator for the rotating nonlinear Schrodinger equation
//!
//! i u_t = -1/2 Lap u + 1/2 gamma^2 |x|^2 u - kappa lambda |u|^(p-1) u - Omega L_z u
//!
//! on periodic boxes in two and three dimensions.

pub mod diagnostics;
pub mod exec;
pub mod experiments;
pub mod grid;
pub mod groundstate;
pub mod integrator;
pub mod io;
pub mod operators;
pub mod runner;

pub use grid::{GridSpec, Spectral, WaveField};
pub use operators::{NonlinearityModel, OperatorSet, PhysicsParams};
