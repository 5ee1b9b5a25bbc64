//! Periodic tensor grids, spectral transforms and quadrature.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::{for_each_chunk, ExecPolicy};

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("dimension must be 2 or 3, got {0}")]
    BadDimension(usize),
    #[error("axis {axis}: {points} points is not a power of two >= 8")]
    BadPoints { axis: usize, points: usize },
    #[error("axis {axis}: half-extent must be positive and finite, got {extent}")]
    BadExtent { axis: usize, extent: f64 },
    #[error("expected {expected} values per axis, got {got}")]
    AxisCount { expected: usize, got: usize },
    #[error("sample count {got} does not match grid size {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("field contains non-finite samples")]
    NonFinite,
}

/// Uniform grid on the box prod_j [-L_j, L_j) with N_j nodes per axis.
/// Unused trailing axes (2-D grids) carry one point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dim: usize,
    pub extents: [f64; 3],
    pub points: [usize; 3],
}

impl GridSpec {
    pub fn new(dim: usize, extents: &[f64], points: &[usize]) -> Result<Self, GridError> {
        if dim != 2 && dim != 3 {
            return Err(GridError::BadDimension(dim));
        }
        for len in [extents.len(), points.len()] {
            if len != dim {
                return Err(GridError::AxisCount {
                    expected: dim,
                    got: len,
                });
            }
        }
        let mut e = [1.0; 3];
        let mut p = [1usize; 3];
        for axis in 0..dim {
            if !(extents[axis].is_finite() && extents[axis] > 0.0) {
                return Err(GridError::BadExtent {
                    axis,
                    extent: extents[axis],
                });
            }
            if points[axis] < 8 || !points[axis].is_power_of_two() {
                return Err(GridError::BadPoints {
                    axis,
                    points: points[axis],
                });
            }
            e[axis] = extents[axis];
            p[axis] = points[axis];
        }
        Ok(GridSpec {
            dim,
            extents: e,
            points: p,
        })
    }

    /// Cubic grid with the same extent and resolution on every axis.
    pub fn cubic(dim: usize, extent: f64, points: usize) -> Result<Self, GridError> {
        GridSpec::new(dim, &vec![extent; dim], &vec![points; dim])
    }

    pub fn len(&self) -> usize {
        self.points.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        2.0 * self.extents[axis] / self.points[axis] as f64
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.dim).map(|a| self.spacing(a)).product()
    }

    pub fn min_extent(&self) -> f64 {
        self.extents[..self.dim]
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn coords(&self, axis: usize) -> Vec<f64> {
        if axis >= self.dim {
            return vec![0.0];
        }
        let h = self.spacing(axis);
        (0..self.points[axis])
            .map(|j| -self.extents[axis] + j as f64 * h)
            .collect()
    }

    /// Wavenumbers in FFT order: 0, 1, .., N/2-1, -N/2, .., -1 times pi/L.
    pub fn wavenumbers(&self, axis: usize) -> Vec<f64> {
        if axis >= self.dim {
            return vec![0.0];
        }
        let n = self.points[axis] as i64;
        let scale = std::f64::consts::PI / self.extents[axis];
        (0..n)
            .map(|m| if m < n / 2 { m } else { m - n } as f64 * scale)
            .collect()
    }

    pub fn k_max(&self, axis: usize) -> f64 {
        std::f64::consts::PI / self.spacing(axis)
    }

    pub fn index(&self, i: [usize; 3]) -> usize {
        i[0] + self.points[0] * (i[1] + self.points[1] * i[2])
    }

    /// Evaluates `f` at every node in canonical order (axis 1 fastest).
    pub fn sample<T, F: FnMut([f64; 3]) -> T>(&self, mut f: F) -> Vec<T> {
        let c: Vec<Vec<f64>> = (0..3).map(|a| self.coords(a)).collect();
        let mut out = Vec::with_capacity(self.len());
        for z in &c[2] {
            for y in &c[1] {
                for x in &c[0] {
                    out.push(f([*x, *y, *z]));
                }
            }
        }
        out
    }

    /// Same as `sample` but over wavenumbers.
    pub fn sample_spectral<T, F: FnMut([f64; 3]) -> T>(&self, mut f: F) -> Vec<T> {
        let k: Vec<Vec<f64>> = (0..3).map(|a| self.wavenumbers(a)).collect();
        let mut out = Vec::with_capacity(self.len());
        for kz in &k[2] {
            for ky in &k[1] {
                for kx in &k[0] {
                    out.push(f([*kx, *ky, *kz]));
                }
            }
        }
        out
    }

    pub fn integrate(&self, samples: &[Complex64]) -> Result<Complex64, GridError> {
        self.check_len(samples.len())?;
        Ok(samples.iter().sum::<Complex64>() * self.cell_volume())
    }

    pub fn integrate_real(&self, samples: &[f64]) -> Result<f64, GridError> {
        self.check_len(samples.len())?;
        Ok(samples.iter().sum::<f64>() * self.cell_volume())
    }

    /// Weight turning sum |u_hat|^2 into the quadrature of |u|^2.
    pub fn parseval_weight(&self) -> f64 {
        self.cell_volume() / self.len() as f64
    }

    fn check_len(&self, got: usize) -> Result<(), GridError> {
        if got != self.len() {
            return Err(GridError::LengthMismatch {
                expected: self.len(),
                got,
            });
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WaveField {
    pub grid: GridSpec,
    pub values: Vec<Complex64>,
}

impl WaveField {
    pub fn new(grid: GridSpec, values: Vec<Complex64>) -> Result<Self, GridError> {
        grid.check_len(values.len())?;
        Ok(WaveField { grid, values })
    }

    pub fn zeros(grid: GridSpec) -> Self {
        WaveField {
            grid,
            values: vec![Complex64::new(0.0, 0.0); grid.len()],
        }
    }

    pub fn from_fn<F: FnMut([f64; 3]) -> Complex64>(grid: GridSpec, f: F) -> Self {
        WaveField {
            values: grid.sample(f),
            grid,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values
            .iter()
            .all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn validate(&self) -> Result<(), GridError> {
        self.grid.check_len(self.values.len())?;
        if !self.is_finite() {
            return Err(GridError::NonFinite);
        }
        Ok(())
    }

    pub fn norm_sq(&self) -> f64 {
        self.values.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.grid.cell_volume()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// Quadrature of u * conj(v).
    pub fn inner(&self, other: &WaveField) -> Result<Complex64, GridError> {
        if self.grid != other.grid {
            return Err(GridError::GridMismatch);
        }
        let s: Complex64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b.conj())
            .sum();
        Ok(s * self.grid.cell_volume())
    }

    pub fn scale(&mut self, s: f64) {
        self.values.iter_mut().for_each(|z| *z *= s);
    }

    pub fn distance(&self, other: &WaveField) -> Result<f64, GridError> {
        if self.grid != other.grid {
            return Err(GridError::GridMismatch);
        }
        let s: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum();
        Ok((s * self.grid.cell_volume()).sqrt())
    }
}

/// FFT plans for every axis of a grid. Forward transforms are unnormalized,
/// inverse transforms divide by the number of points.
#[derive(Clone)]
pub struct Spectral {
    grid: GridSpec,
    forward: Vec<Arc<dyn Fft<f64>>>,
    inverse: Vec<Arc<dyn Fft<f64>>>,
    policy: ExecPolicy,
}

impl std::fmt::Debug for Spectral {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Spectral")
            .field("grid", &self.grid)
            .field("policy", &self.policy)
            .finish()
    }
}

impl Spectral {
    pub fn new(grid: GridSpec) -> Self {
        let mut planner = FftPlanner::new();
        let forward = (0..grid.dim)
            .map(|a| planner.plan_fft_forward(grid.points[a]))
            .collect();
        let inverse = (0..grid.dim)
            .map(|a| planner.plan_fft_inverse(grid.points[a]))
            .collect();
        Spectral {
            grid,
            forward,
            inverse,
            policy: ExecPolicy::default(),
        }
    }

    pub fn with_policy(mut self, policy: ExecPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn policy(&self) -> ExecPolicy {
        self.policy
    }

    pub fn forward(&self, data: &mut [Complex64]) {
        for axis in 0..self.grid.dim {
            self.forward_axis(data, axis);
        }
    }

    pub fn inverse(&self, data: &mut [Complex64]) {
        for axis in 0..self.grid.dim {
            self.inverse_axis(data, axis);
        }
    }

    pub fn forward_axis(&self, data: &mut [Complex64], axis: usize) {
        self.transform_axis(data, axis, &self.forward[axis]);
    }

    pub fn inverse_axis(&self, data: &mut [Complex64], axis: usize) {
        self.transform_axis(data, axis, &self.inverse[axis]);
        let s = 1.0 / self.grid.points[axis] as f64;
        for_each_chunk(self.policy, data, 4096, |_, c| {
            c.iter_mut().for_each(|z| *z *= s)
        });
    }

    pub fn forward_field(&self, field: &WaveField) -> Vec<Complex64> {
        let mut d = field.values.clone();
        self.forward(&mut d);
        d
    }

    pub fn inverse_to_field(&self, mut coeffs: Vec<Complex64>) -> WaveField {
        self.inverse(&mut coeffs);
        WaveField {
            grid: self.grid,
            values: coeffs,
        }
    }

    fn transform_axis(&self, data: &mut [Complex64], axis: usize, plan: &Arc<dyn Fft<f64>>) {
        assert_eq!(data.len(), self.grid.len(), "buffer does not match grid");
        let n = self.grid.points[axis];
        let stride: usize = self.grid.points[..axis].iter().product();
        let lines_per_task = (4096 / n).max(1);
        let run_lines = |buf: &mut [Complex64]| {
            for_each_chunk(self.policy, buf, n * lines_per_task, |_, chunk| {
                let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
                plan.process_with_scratch(chunk, &mut scratch);
            });
        };
        if stride == 1 {
            run_lines(data);
            return;
        }
        let block = n * stride;
        let mut buf = vec![Complex64::new(0.0, 0.0); block];
        for blk in data.chunks_mut(block) {
            transpose::transpose(blk, &mut buf, stride, n);
            run_lines(&mut buf);
            transpose::transpose(&buf, blk, n, stride);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn gaussian(grid: GridSpec, gamma: f64) -> WaveField {
        let n = grid.dim as f64;
        let a = (gamma / PI).powf(n / 4.0);
        WaveField::from_fn(grid, |x| {
            let r2: f64 = x.iter().map(|v| v * v).sum();
            Complex64::new(a * (-gamma * r2 / 2.0).exp(), 0.0)
        })
    }

    #[test]
    fn make_grid_examples() {
        let g = GridSpec::cubic(2, 8.0, 128).unwrap();
        assert_eq!(g.spacing(0), 0.125);
        assert_eq!(
            GridSpec::cubic(2, 8.0, 100),
            Err(GridError::BadPoints {
                axis: 0,
                points: 100
            })
        );
        assert_eq!(GridSpec::cubic(3, 8.0, 64).unwrap().len(), 262144);
        assert_eq!(GridSpec::cubic(4, 8.0, 64), Err(GridError::BadDimension(4)));
        assert!(GridSpec::cubic(2, 8.0, 4).is_err());
    }

    #[test]
    fn wavenumber_ordering() {
        let g = GridSpec::cubic(2, 4.0, 8).unwrap();
        let k = g.wavenumbers(0);
        let s = PI / 4.0;
        assert_eq!(k[0], 0.0);
        assert_eq!(k[3], 3.0 * s);
        assert_eq!(k[4], -4.0 * s);
        assert!((k[4].abs() - g.k_max(0)).abs() < 1e-14);
        assert!((g.spacing(0) * 8.0 - 8.0).abs() == 0.0);
    }

    #[test]
    fn constant_field_is_pure_dc() {
        let g = GridSpec::cubic(2, 8.0, 32).unwrap();
        let sp = Spectral::new(g);
        let f = WaveField::from_fn(g, |_| Complex64::new(1.0, 0.0));
        let c = sp.forward_field(&f);
        assert!((c[0].re - g.len() as f64).abs() < 1e-9);
        let rest = c[1..].iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(rest <= 1e-13 * g.len() as f64);
    }

    #[test]
    fn plane_wave_is_single_mode() {
        let g = GridSpec::new(2, &[8.0, 6.0], &[32, 16]).unwrap();
        let sp = Spectral::new(g);
        let k1 = 3.0 * PI / 8.0;
        let f = WaveField::from_fn(g, |x| Complex64::from_polar(1.0, k1 * x[0]));
        let c = sp.forward_field(&f);
        for (i, z) in c.iter().enumerate() {
            if i == 3 {
                assert!((z.norm() - g.len() as f64).abs() < 1e-9);
            } else {
                assert!(z.norm() < 1e-10, "mode {i} has {z}");
            }
        }
    }

    #[test]
    fn gaussian_quadrature() {
        let g = GridSpec::cubic(2, 8.0, 128).unwrap();
        let u = gaussian(g, 1.0);
        assert!((u.norm_sq() - 1.0).abs() < 1e-10);
        let moment: Vec<f64> = g
            .sample(|x| x[0] * x[0] + x[1] * x[1])
            .iter()
            .zip(&u.values)
            .map(|(r2, z)| r2 * z.norm_sqr())
            .collect();
        assert!((g.integrate_real(&moment).unwrap() - 1.0).abs() < 1e-9);
        assert_eq!(g.integrate_real(&vec![0.0; g.len()]).unwrap(), 0.0);
        assert!(g.integrate_real(&[1.0]).is_err());
    }

    #[test]
    fn spectral_derivative_of_plane_wave() {
        let g = GridSpec::cubic(3, 4.0, 16).unwrap();
        let sp = Spectral::new(g);
        let k = 2.0 * PI / 4.0;
        let f = WaveField::from_fn(g, |x| Complex64::from_polar(1.0, k * x[2]));
        let mut d = f.values.clone();
        sp.forward_axis(&mut d, 2);
        let kz = g.wavenumbers(2);
        for (i, z) in d.iter_mut().enumerate() {
            let iz = i / (g.points[0] * g.points[1]);
            *z *= Complex64::new(0.0, kz[iz]);
        }
        sp.inverse_axis(&mut d, 2);
        for (a, b) in d.iter().zip(&f.values) {
            assert!((a - Complex64::new(0.0, k) * b).norm() < 1e-12);
        }
    }

    #[test]
    fn mismatched_grids_rejected() {
        let a = WaveField::zeros(GridSpec::cubic(2, 8.0, 16).unwrap());
        let b = WaveField::zeros(GridSpec::cubic(2, 4.0, 16).unwrap());
        assert_eq!(a.inner(&b), Err(GridError::GridMismatch));
    }

    fn random_field(g: GridSpec, seed: u64) -> WaveField {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        WaveField::from_fn(g, |_| {
            Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn round_trip_and_parseval(seed in any::<u64>(), three in any::<bool>(), par in any::<bool>()) {
            let g = if three {
                GridSpec::new(3, &[3.0, 4.0, 5.0], &[8, 16, 8]).unwrap()
            } else {
                GridSpec::new(2, &[8.0, 5.0], &[32, 64]).unwrap()
            };
            let policy = if par { ExecPolicy::Parallel } else { ExecPolicy::Sequential };
            let sp = Spectral::new(g).with_policy(policy);
            let u = random_field(g, seed);
            let c = sp.forward_field(&u);
            let spec: f64 = c.iter().map(|z| z.norm_sqr()).sum::<f64>() * g.parseval_weight();
            prop_assert!((spec - u.norm_sq()).abs() <= 1e-12 * u.norm_sq());
            let back = sp.inverse_to_field(c);
            let err = back.values.iter().zip(&u.values).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            prop_assert!(err <= 1e-13);
        }
    }
}
