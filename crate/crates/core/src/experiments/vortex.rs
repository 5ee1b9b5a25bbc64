use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use serde::Serialize;
use statrs::function::gamma::ln_gamma;

use super::ExperimentError;
use crate::diagnostics::record;
use crate::grid::{GridSpec, WaveField};
use crate::operators::{GeneralNonlinearity, NonlinearityModel, OperatorSet, PhysicsParams};

#[derive(Clone, Debug)]
pub struct VortexConfig {
    pub grid: GridSpec,
    pub gamma: f64,
    pub omega: f64,
    /// Strength K in G(v) = K (v + v^{a/2}).
    pub k: f64,
    pub a: f64,
    pub m_list: Vec<i32>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VortexRow {
    pub m: i32,
    pub mass: f64,
    pub kinetic: f64,
    pub trap: f64,
    /// <L_z psi, psi>.
    pub angular_momentum: f64,
    pub interaction: f64,
    pub energy: f64,
    /// (|m| + 1) gamma - Omega m - K.
    pub leading: f64,
    /// leading - K int |psi|^a.
    pub analytic: f64,
    pub difference: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VortexResult {
    pub gamma: f64,
    pub omega: f64,
    pub k: f64,
    pub a: f64,
    pub rows: Vec<VortexRow>,
    pub strictly_decreasing: bool,
}

impl VortexResult {
    /// (E(m_hi) - E(m_lo)) / (m_hi - m_lo) from the numerical energies.
    pub fn slope(&self, m_lo: i32, m_hi: i32) -> Option<f64> {
        let e = |m| self.rows.iter().find(|r| r.m == m).map(|r| r.energy);
        Some((e(m_hi)? - e(m_lo)?) / (m_hi - m_lo) as f64)
    }
}

fn ln_amplitude(gamma: f64, m: u32) -> f64 {
    0.5 * (m as f64 + 1.0) * gamma.ln() - 0.5 * PI.ln() - 0.5 * ln_gamma(m as f64 + 1.0)
}

/// gamma^{(|m|+1)/2} / sqrt(pi |m|!) |x|^{|m|} e^{-gamma |x|^2 / 2} e^{i m theta}
/// in the (x1, x2) plane.
pub fn psi_m(grid: &GridSpec, gamma: f64, m: i32) -> WaveField {
    let am = m.unsigned_abs();
    let ln_c = ln_amplitude(gamma, am);
    WaveField::from_fn(*grid, |x| {
        let r2 = x[0] * x[0] + x[1] * x[1];
        if am > 0 && r2 == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        let radial = if am > 0 {
            0.5 * am as f64 * r2.ln()
        } else {
            0.0
        };
        let ln_mod = ln_c + radial - gamma * r2 / 2.0;
        Complex64::from_polar(ln_mod.exp(), m as f64 * x[1].atan2(x[0]))
    })
}

/// int |psi_m|^a = pi C^a Gamma(a|m|/2 + 1) / (a gamma / 2)^{a|m|/2 + 1}.
pub fn vortex_interaction_exact(gamma: f64, a: f64, m: i32) -> f64 {
    let am = m.unsigned_abs() as f64;
    let s = a * am / 2.0 + 1.0;
    (PI.ln() + a * ln_amplitude(gamma, m.unsigned_abs()) + ln_gamma(s) - s * (a * gamma / 2.0).ln())
        .exp()
}

/// Energies of the vortex family psi_m under G(v) = K (v + v^{a/2}).
pub fn vortex_counterexample(cfg: &VortexConfig) -> Result<VortexResult, ExperimentError> {
    if cfg.grid.dim != 2 {
        return Err(ExperimentError::Precondition(
            "vortex family needs n = 2".into(),
        ));
    }
    if !(cfg.gamma > 0.0 && cfg.a > 2.0 && cfg.k > 0.0) {
        return Err(ExperimentError::Precondition(format!(
            "need gamma > 0, a > 2, K > 0; got gamma = {}, a = {}, K = {}",
            cfg.gamma, cfg.a, cfg.k
        )));
    }
    let (k, a) = (cfg.k, cfg.a);
    let model = NonlinearityModel::General(Arc::new(GeneralNonlinearity {
        g: Box::new(move |v| k * (v + v.powf(a / 2.0))),
        dg: Box::new(move |v| k * (1.0 + a / 2.0 * v.powf(a / 2.0 - 1.0))),
        growth: k,
    }));
    let params = PhysicsParams::power(2, a - 1.0, 1.0, cfg.gamma, cfg.omega).with_model(model);
    let ops = OperatorSet::new(cfg.grid, params)?;
    let mut rows = Vec::new();
    for &m in &cfg.m_list {
        let mut psi = psi_m(&cfg.grid, cfg.gamma, m);
        let raw = psi.norm_sq();
        if (raw - 1.0).abs() > 1e-6 {
            return Err(ExperimentError::Resolution(format!(
                "psi_{m} has grid mass {raw}"
            )));
        }
        psi.scale(1.0 / raw.sqrt());
        let rec = record(&ops, &psi, 0.0);
        if rec.boundary_mass > 1e-8 || rec.tail_fraction > 1e-8 {
            return Err(ExperimentError::Resolution(format!(
                "psi_{m}: boundary fraction {:.2e}, spectral tail {:.2e}",
                rec.boundary_mass, rec.tail_fraction
            )));
        }
        let am = m.unsigned_abs() as f64;
        let leading = (am + 1.0) * cfg.gamma - cfg.omega * m as f64 - k;
        let analytic = leading - k * vortex_interaction_exact(cfg.gamma, a, m);
        rows.push(VortexRow {
            m,
            mass: rec.mass,
            kinetic: rec.kinetic,
            trap: rec.trap,
            angular_momentum: if cfg.omega != 0.0 {
                -rec.angular / cfg.omega
            } else {
                f64::NAN
            },
            interaction: rec.interaction,
            energy: rec.energy,
            leading,
            analytic,
            difference: rec.energy - analytic,
        });
    }
    let strictly_decreasing = rows.windows(2).all(|w| w[1].energy < w[0].energy);
    Ok(VortexResult {
        gamma: cfg.gamma,
        omega: cfg.omega,
        k,
        a,
        rows,
        strictly_decreasing,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(omega: f64) -> VortexConfig {
        VortexConfig {
            grid: GridSpec::cubic(2, 12.0, 128).unwrap(),
            gamma: 1.0,
            omega,
            k: 1.0,
            a: 4.0,
            m_list: vec![0, 1, 5, 10, 15, 20],
        }
    }

    #[test]
    fn interaction_integral_by_quadrature() {
        for (m, a) in [(0, 4.0), (3, 3.0), (12, 5.5)] {
            let n = 200_000;
            let h = 30.0 / n as f64;
            let gamma = 1.3;
            let c = ln_amplitude(gamma, m as u32).exp();
            let s: f64 = (1..n)
                .map(|i| {
                    let r = i as f64 * h;
                    2.0 * PI * r * (c * r.powi(m) * (-gamma * r * r / 2.0).exp()).powf(a)
                })
                .sum::<f64>()
                * h;
            let exact = vortex_interaction_exact(gamma, a, m);
            assert!((s / exact - 1.0).abs() < 1e-8, "{m} {s} {exact}");
        }
    }

    #[test]
    fn energies_follow_the_formula() {
        let res = vortex_counterexample(&cfg(1.5)).unwrap();
        for r in &res.rows {
            let m = r.m as f64;
            assert!((r.kinetic - (m.abs() + 1.0)).abs() < 1e-6, "{r:?}");
            assert!((r.angular_momentum - m).abs() < 1e-6, "{r:?}");
            assert!(r.difference.abs() < 1e-6, "{r:?}");
        }
        assert!(res.strictly_decreasing);
        let slope = res.slope(10, 20).unwrap();
        assert!((slope + 0.5).abs() < 0.01, "{slope}");
    }

    #[test]
    fn slow_rotation_increases() {
        let res = vortex_counterexample(&cfg(0.5)).unwrap();
        assert!(res.rows.windows(2).all(|w| w[1].energy > w[0].energy));
        assert!(!res.strictly_decreasing);
    }

    #[test]
    fn large_m_needs_a_larger_box() {
        let mut c = cfg(1.5);
        c.grid = GridSpec::cubic(2, 6.0, 64).unwrap();
        c.m_list = vec![40];
        assert!(matches!(
            vortex_counterexample(&c),
            Err(ExperimentError::Resolution(_))
        ));
    }

    #[test]
    fn negative_m_mirrors() {
        let g = GridSpec::cubic(2, 8.0, 64).unwrap();
        let p = psi_m(&g, 1.0, 3);
        let q = psi_m(&g, 1.0, -3);
        assert!(p
            .values
            .iter()
            .zip(&q.values)
            .all(|(a, b)| (a.conj() - b).norm() < 1e-15));
    }
}
