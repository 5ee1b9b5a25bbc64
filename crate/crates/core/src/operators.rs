//! Hamiltonian pieces, nonlinearity models and their application on a grid.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{GridSpec, Spectral, WaveField};

type C = Complex64;

#[derive(Debug, Error, PartialEq)]
pub enum ParamsError {
    #[error("gamma must be > 0, got {0}")]
    Gamma(f64),
    #[error("dimension must be 2 or 3, got {0}")]
    Dimension(usize),
    #[error("power p = {p} outside [1, {limit}) for n = {n}")]
    Power { p: f64, n: usize, limit: f64 },
    #[error("kappa must be +1 or -1, got {0}")]
    Kappa(f64),
    #[error("Omega must be finite")]
    Omega,
    #[error("invalid nonlinearity: {0}")]
    Model(String),
    #[error("coefficient hypothesis violated: {0}")]
    Hypothesis(String),
    #[error("nonlinearity model {0} cannot be serialized")]
    NotSerializable(&'static str),
}

/// User supplied radial coefficient lambda(r) with its radial derivative.
pub struct RadialCoefficient {
    pub value: Box<dyn Fn(f64) -> f64 + Send + Sync>,
    pub slope: Box<dyn Fn(f64) -> f64 + Send + Sync>,
}

/// General nonlinearity N(u) = G'(|u|^2) u with growth bound
/// 0 <= G(v) <= growth * (v + v^((p+1)/2)).
pub struct GeneralNonlinearity {
    pub g: Box<dyn Fn(f64) -> f64 + Send + Sync>,
    pub dg: Box<dyn Fn(f64) -> f64 + Send + Sync>,
    pub growth: f64,
}

#[derive(Clone)]
pub enum NonlinearityModel {
    Power {
        lambda: f64,
    },
    /// lambda(x) = lambda0 + (1 + |x|^2)^(-m/2)
    Inhomogeneous {
        lambda0: f64,
        m: f64,
    },
    Radial(Arc<RadialCoefficient>),
    General(Arc<GeneralNonlinearity>),
}

impl fmt::Debug for NonlinearityModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Power { lambda } => write!(f, "Power {{ lambda: {lambda} }}"),
            Self::Inhomogeneous { lambda0, m } => {
                write!(f, "Inhomogeneous {{ lambda0: {lambda0}, m: {m} }}")
            }
            Self::Radial(_) => write!(f, "Radial(..)"),
            Self::General(g) => write!(f, "General {{ growth: {} }}", g.growth),
        }
    }
}

impl PartialEq for NonlinearityModel {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Self::Power { lambda: a }, Self::Power { lambda: b }) => a == b,
            (
                Self::Inhomogeneous { lambda0: a, m: b },
                Self::Inhomogeneous { lambda0: c, m: d },
            ) => a == c && b == d,
            (Self::Radial(a), Self::Radial(b)) => Arc::ptr_eq(a, b),
            (Self::General(a), Self::General(b)) => Arc::ptr_eq(a, b),
            _ => false,
        }
    }
}

impl NonlinearityModel {
    /// (lambda(r), lambda'(r)); general models carry their strength in G.
    pub fn coefficient(&self, r: f64) -> (f64, f64) {
        match self {
            Self::Power { lambda } => (*lambda, 0.0),
            Self::Inhomogeneous { lambda0, m } => {
                let s = 1.0 + r * r;
                (lambda0 + s.powf(-m / 2.0), -m * r * s.powf(-m / 2.0 - 1.0))
            }
            Self::Radial(c) => ((c.value)(r), (c.slope)(r)),
            Self::General(_) => (1.0, 0.0),
        }
    }

    /// (G(v), G'(v)) without the spatial coefficient.
    pub fn profile(&self, p: f64, v: f64) -> (f64, f64) {
        match self {
            Self::General(g) => ((g.g)(v), (g.dg)(v)),
            _ => {
                let e = (p - 1.0) / 2.0;
                let d = if e == 0.0 {
                    1.0
                } else if e == 1.0 {
                    v
                } else if e == 0.5 {
                    v.sqrt()
                } else if e == 2.0 {
                    v * v
                } else if e == 1.5 {
                    v * v.sqrt()
                } else {
                    v.powf(e)
                };
                (2.0 / (p + 1.0) * v * d, d)
            }
        }
    }

    /// Bounds (lambda_min, lambda_max) of the coefficient. For general
    /// models both equal the equivalent critical strength (n+2)/n * growth.
    pub fn coefficient_bounds(&self, dim: usize, sample_radius: f64) -> (f64, f64) {
        match self {
            Self::Power { lambda } => (*lambda, *lambda),
            Self::Inhomogeneous { lambda0, .. } => (*lambda0, lambda0 + 1.0),
            Self::Radial(c) => {
                let vals: Vec<f64> = (0..=2000)
                    .map(|i| (c.value)(sample_radius * i as f64 / 2000.0))
                    .collect();
                let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                (lo, hi)
            }
            Self::General(g) => {
                let l = (dim as f64 + 2.0) / dim as f64 * g.growth;
                (l, l)
            }
        }
    }

    pub fn is_homogeneous(&self) -> bool {
        matches!(self, Self::Power { .. } | Self::General(_))
    }
}

/// Serializable form of the closed-form nonlinearity models.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    Power { lambda: f64 },
    Inhomogeneous { lambda0: f64, m: f64 },
}

impl TryFrom<&NonlinearityModel> for ModelSpec {
    type Error = ParamsError;
    fn try_from(m: &NonlinearityModel) -> Result<Self, ParamsError> {
        match m {
            NonlinearityModel::Power { lambda } => Ok(ModelSpec::Power { lambda: *lambda }),
            NonlinearityModel::Inhomogeneous { lambda0, m } => Ok(ModelSpec::Inhomogeneous {
                lambda0: *lambda0,
                m: *m,
            }),
            NonlinearityModel::Radial(_) => Err(ParamsError::NotSerializable("radial")),
            NonlinearityModel::General(_) => Err(ParamsError::NotSerializable("general")),
        }
    }
}

impl From<ModelSpec> for NonlinearityModel {
    fn from(s: ModelSpec) -> Self {
        match s {
            ModelSpec::Power { lambda } => NonlinearityModel::Power { lambda },
            ModelSpec::Inhomogeneous { lambda0, m } => {
                NonlinearityModel::Inhomogeneous { lambda0, m }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhysicsParams {
    pub omega: f64,
    pub gamma: f64,
    pub p: f64,
    pub dim: usize,
    /// +1 focusing, -1 defocusing.
    pub kappa: f64,
    pub model: NonlinearityModel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamsSpec {
    pub omega: f64,
    pub gamma: f64,
    pub p: f64,
    pub dim: usize,
    pub kappa: f64,
    pub model: ModelSpec,
}

impl PhysicsParams {
    /// Focusing constant-coefficient power model.
    pub fn power(dim: usize, p: f64, lambda: f64, gamma: f64, omega: f64) -> Self {
        PhysicsParams {
            omega,
            gamma,
            p,
            dim,
            kappa: 1.0,
            model: NonlinearityModel::Power { lambda },
        }
    }

    pub fn with_model(mut self, model: NonlinearityModel) -> Self {
        self.model = model;
        self
    }

    pub fn with_kappa(mut self, kappa: f64) -> Self {
        self.kappa = kappa;
        self
    }

    pub fn critical_power(dim: usize) -> f64 {
        1.0 + 4.0 / dim as f64
    }

    pub fn is_mass_critical(&self) -> bool {
        (self.p - Self::critical_power(self.dim)).abs() < 1e-12
    }

    pub fn validate(&self) -> Result<(), ParamsError> {
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(ParamsError::Gamma(self.gamma));
        }
        if !self.omega.is_finite() {
            return Err(ParamsError::Omega);
        }
        if self.dim != 2 && self.dim != 3 {
            return Err(ParamsError::Dimension(self.dim));
        }
        let limit = if self.dim == 2 { f64::INFINITY } else { 5.0 };
        if !(self.p >= 1.0 && self.p < limit) {
            return Err(ParamsError::Power {
                p: self.p,
                n: self.dim,
                limit,
            });
        }
        if self.kappa != 1.0 && self.kappa != -1.0 {
            return Err(ParamsError::Kappa(self.kappa));
        }
        match &self.model {
            NonlinearityModel::Power { lambda } if !(lambda.is_finite() && *lambda >= 0.0) => Err(
                ParamsError::Model(format!("lambda must be >= 0, got {lambda}")),
            ),
            NonlinearityModel::Inhomogeneous { lambda0, m }
                if !(*lambda0 > 0.0 && *m > 0.0 && lambda0.is_finite() && m.is_finite()) =>
            {
                Err(ParamsError::Model(format!(
                    "inhomogeneous coefficient needs lambda0 > 0 and m > 0, got {lambda0}, {m}"
                )))
            }
            NonlinearityModel::General(g) => check_growth(g, self.p),
            _ => Ok(()),
        }
    }

    /// Samples the coefficient on all node radii of `grid` and checks
    /// lambda > 0 and x . grad lambda <= 0.
    pub fn check_hypothesis(&self, grid: &GridSpec) -> Result<(), ParamsError> {
        if self.model.is_homogeneous() {
            return Ok(());
        }
        let r_max: f64 = (0..grid.dim)
            .map(|a| grid.extents[a].powi(2))
            .sum::<f64>()
            .sqrt();
        let mut radii = grid.sample(|x| (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt());
        radii.extend((0..=1000).map(|i| r_max * i as f64 / 1000.0));
        for r in radii {
            let (l, dl) = self.model.coefficient(r);
            if !(l.is_finite() && l > 0.0) {
                return Err(ParamsError::Hypothesis(format!(
                    "lambda({r}) = {l} is not positive"
                )));
            }
            if !(dl.is_finite() && r * dl <= 1e-14 * l) {
                return Err(ParamsError::Hypothesis(format!(
                    "x.grad lambda = {} > 0 at |x| = {r}",
                    r * dl
                )));
            }
        }
        Ok(())
    }

    /// Coefficient that sets the mass threshold of the critical problem.
    pub fn threshold_lambda(&self) -> f64 {
        self.model.coefficient_bounds(self.dim, 50.0).1
    }

    pub fn spec(&self) -> Result<ParamsSpec, ParamsError> {
        Ok(ParamsSpec {
            omega: self.omega,
            gamma: self.gamma,
            p: self.p,
            dim: self.dim,
            kappa: self.kappa,
            model: ModelSpec::try_from(&self.model)?,
        })
    }
}

impl From<ParamsSpec> for PhysicsParams {
    fn from(s: ParamsSpec) -> Self {
        PhysicsParams {
            omega: s.omega,
            gamma: s.gamma,
            p: s.p,
            dim: s.dim,
            kappa: s.kappa,
            model: s.model.into(),
        }
    }
}

fn check_growth(g: &GeneralNonlinearity, p: f64) -> Result<(), ParamsError> {
    if !(g.growth > 0.0) {
        return Err(ParamsError::Model("growth constant must be > 0".into()));
    }
    for i in 0..=320 {
        let v = 10f64.powf(-8.0 + 16.0 * i as f64 / 320.0);
        let gv = (g.g)(v);
        let bound = g.growth * (v + v.powf((p + 1.0) / 2.0));
        if !(gv >= 0.0 && gv <= bound * (1.0 + 1e-12)) {
            return Err(ParamsError::Hypothesis(format!(
                "G({v:e}) = {gv:e} outside [0, {bound:e}]"
            )));
        }
    }
    Ok(())
}

/// Pointwise and spectral pieces of the Hamiltonian on one grid.
#[derive(Clone, Debug)]
pub struct OperatorSet {
    pub grid: GridSpec,
    pub params: PhysicsParams,
    spectral: Spectral,
    pub x: [Vec<f64>; 3],
    pub k: [Vec<f64>; 3],
    /// 1/2 |k|^2 in FFT order.
    pub kinetic: Vec<f64>,
    pub potential: Vec<f64>,
    pub effective_potential: Vec<f64>,
    pub radius: Vec<f64>,
    pub lambda: Vec<f64>,
    pub dlambda: Vec<f64>,
}

impl OperatorSet {
    pub fn new(grid: GridSpec, params: PhysicsParams) -> Result<Self, ParamsError> {
        Self::with_spectral(Spectral::new(grid), params)
    }

    pub fn with_spectral(spectral: Spectral, params: PhysicsParams) -> Result<Self, ParamsError> {
        let grid = *spectral.grid();
        params.validate()?;
        if params.dim != grid.dim {
            return Err(ParamsError::Dimension(grid.dim));
        }
        params.check_hypothesis(&grid)?;
        let g2 = params.gamma * params.gamma;
        let w2 = params.omega * params.omega;
        let kinetic = grid.sample_spectral(|k| 0.5 * (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]));
        let potential = grid.sample(|x| 0.5 * g2 * (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]));
        let effective_potential =
            grid.sample(|x| 0.5 * (g2 - w2) * (x[0] * x[0] + x[1] * x[1]) + 0.5 * g2 * x[2] * x[2]);
        let radius = grid.sample(|x| (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt());
        let (lambda, dlambda) = radius.iter().map(|r| params.model.coefficient(*r)).unzip();
        Ok(OperatorSet {
            x: [grid.coords(0), grid.coords(1), grid.coords(2)],
            k: [
                grid.wavenumbers(0),
                grid.wavenumbers(1),
                grid.wavenumbers(2),
            ],
            grid,
            params,
            spectral,
            kinetic,
            potential,
            effective_potential,
            radius,
            lambda,
            dlambda,
        })
    }

    pub fn spectral(&self) -> &Spectral {
        &self.spectral
    }

    /// Axis indices of a canonical node index.
    #[inline]
    pub fn axes(&self, idx: usize) -> [usize; 3] {
        let n0 = self.grid.points[0];
        let n1 = self.grid.points[1];
        [idx % n0, (idx / n0) % n1, idx / (n0 * n1)]
    }

    pub fn coordinate(&self, idx: usize) -> [f64; 3] {
        let a = self.axes(idx);
        [self.x[0][a[0]], self.x[1][a[1]], self.x[2][a[2]]]
    }

    pub fn kinetic(&self, u: &[C]) -> Vec<C> {
        let mut d = u.to_vec();
        self.spectral.forward(&mut d);
        d.iter_mut().zip(&self.kinetic).for_each(|(z, m)| *z *= m);
        self.spectral.inverse(&mut d);
        d
    }

    /// Spectral partial derivative along `axis`.
    pub fn derivative(&self, u: &[C], axis: usize) -> Vec<C> {
        let mut d = u.to_vec();
        self.spectral.forward_axis(&mut d, axis);
        for (i, z) in d.iter_mut().enumerate() {
            let k = self.k[axis][self.axes(i)[axis]];
            *z = C::new(-z.im * k, z.re * k);
        }
        self.spectral.inverse_axis(&mut d, axis);
        d
    }

    pub fn gradient(&self, u: &[C]) -> Vec<Vec<C>> {
        (0..self.grid.dim).map(|a| self.derivative(u, a)).collect()
    }

    /// L_z u = i (x2 d1 u - x1 d2 u).
    pub fn lz(&self, u: &[C]) -> Vec<C> {
        let d1 = self.derivative(u, 0);
        let d2 = self.derivative(u, 1);
        self.lz_from_gradient(&d1, &d2)
    }

    pub fn lz_from_gradient(&self, d1: &[C], d2: &[C]) -> Vec<C> {
        (0..d1.len())
            .map(|i| {
                let x = self.coordinate(i);
                let w = d1[i] * x[1] - d2[i] * x[0];
                C::new(-w.im, w.re)
            })
            .collect()
    }

    /// Linear Hamiltonian -1/2 Lap + V - Omega L_z.
    pub fn linear(&self, u: &[C]) -> Vec<C> {
        let mut h = self.kinetic(u);
        let omega = self.params.omega;
        let lz = if omega != 0.0 { Some(self.lz(u)) } else { None };
        for i in 0..u.len() {
            h[i] += u[i] * self.potential[i];
            if let Some(l) = &lz {
                h[i] -= l[i] * omega;
            }
        }
        h
    }

    /// N(x, u) = lambda(x) G'(|u|^2) u.
    pub fn nonlinearity(&self, u: &[C]) -> Vec<C> {
        let p = self.params.p;
        u.iter()
            .zip(&self.lambda)
            .map(|(z, l)| z * (l * self.params.model.profile(p, z.norm_sqr()).1))
            .collect()
    }

    /// Right-hand side of i u_t = H u - kappa N(u).
    pub fn full(&self, u: &[C]) -> Vec<C> {
        let mut h = self.linear(u);
        let n = self.nonlinearity(u);
        h.iter_mut()
            .zip(&n)
            .for_each(|(a, b)| *a -= b * self.params.kappa);
        h
    }

    /// -1/2 (grad - iA)^2 u + V_e u with A = Omega (-x2, x1, 0), computed
    /// through the covariant derivatives.
    pub fn magnetic(&self, u: &[C]) -> Vec<C> {
        let omega = self.params.omega;
        let a_comp = |axis: usize, x: [f64; 3]| match axis {
            0 => -omega * x[1],
            1 => omega * x[0],
            _ => 0.0,
        };
        let mut out: Vec<C> = u
            .iter()
            .zip(&self.effective_potential)
            .map(|(z, v)| z * v)
            .collect();
        for axis in 0..self.grid.dim {
            let du = self.derivative(u, axis);
            let w: Vec<C> = (0..u.len())
                .map(|i| du[i] - C::new(0.0, a_comp(axis, self.coordinate(i))) * u[i])
                .collect();
            let dw = self.derivative(&w, axis);
            for i in 0..u.len() {
                let cov = dw[i] - C::new(0.0, a_comp(axis, self.coordinate(i))) * w[i];
                out[i] -= cov * 0.5;
            }
        }
        out
    }

    pub fn apply_kinetic(&self, u: &WaveField) -> WaveField {
        WaveField {
            grid: self.grid,
            values: self.kinetic(&u.values),
        }
    }

    pub fn apply_lz(&self, u: &WaveField) -> WaveField {
        WaveField {
            grid: self.grid,
            values: self.lz(&u.values),
        }
    }

    pub fn apply_nonlinearity(&self, u: &WaveField) -> WaveField {
        WaveField {
            grid: self.grid,
            values: self.nonlinearity(&u.values),
        }
    }

    pub fn apply_hamiltonian(&self, u: &WaveField) -> WaveField {
        WaveField {
            grid: self.grid,
            values: self.linear(&u.values),
        }
    }
}
