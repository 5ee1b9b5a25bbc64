//! Radial shooting for -1/2 (Q'' + (n-1) Q'/r) - lambda Q^p = -Q.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::sync::OnceLock;

use num_complex::Complex64;

use super::GroundStateError;
use crate::grid::{GridSpec, WaveField};

const MESH_NODES: usize = 4000;
const TAIL_FLOOR: f64 = 1e-11;
const AGREEMENT: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct RadialProfile {
    pub p: f64,
    pub lambda: f64,
    pub dim: usize,
    pub r: Vec<f64>,
    pub q: Vec<f64>,
    pub dq: Vec<f64>,
    /// Integral of Q^2 over R^n.
    pub mass: f64,
    /// Integral of |grad Q|^2.
    pub kinetic: f64,
    /// Integral of Q^(p+1).
    pub lpp: f64,
    /// Nodes produced by the shooting integrator; the rest is the
    /// asymptotic tail.
    pub shooting_nodes: usize,
}

pub fn sphere_area(dim: usize) -> f64 {
    match dim {
        2 => 2.0 * PI,
        3 => 4.0 * PI,
        _ => 2.0 * PI.powf(dim as f64 / 2.0) / statrs::function::gamma::gamma(dim as f64 / 2.0),
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Shot {
    /// Turned upward while positive.
    Under,
    /// Crossed zero.
    Over,
}

struct Trajectory {
    y: Vec<[f64; 5]>,
    outcome: Shot,
}

fn rhs(r: f64, y: &[f64; 5], p: f64, lambda: f64, n: f64) -> [f64; 5] {
    let q = y[0];
    let dq = y[1];
    let rn = r.powf(n - 1.0);
    let qp = q.abs().powf(p - 1.0) * q;
    [
        dq,
        2.0 * (q - lambda * qp) - (n - 1.0) * dq / r,
        q * q * rn,
        dq * dq * rn,
        q.abs().powf(p + 1.0) * rn,
    ]
}

fn mesh(r_max: f64) -> Vec<f64> {
    let beta = 1.0;
    (0..=MESH_NODES)
        .map(|i| {
            let s = i as f64 / MESH_NODES as f64;
            r_max * (s + beta * s * s) / (1.0 + beta)
        })
        .collect()
}

const SERIES_RADIUS: f64 = 0.1;
const SERIES_TERMS: usize = 16;
const SUBSTEPS: usize = 4;

/// Coefficients of Q as a power series in r^2 about the origin.
fn origin_series(a: f64, p: f64, lambda: f64, n: f64) -> Vec<f64> {
    let mut c = vec![a];
    let mut g = vec![a.powf(p)];
    for k in 0..SERIES_TERMS {
        let kk = (k + 1) as f64;
        c.push((2.0 * c[k] - 2.0 * lambda * g[k]) / (2.0 * kk * (2.0 * kk + n - 2.0)));
        // Power of a series: g = c^p.
        let m = k + 1;
        let s: f64 = (1..=m)
            .map(|j| ((p + 1.0) * j as f64 - m as f64) * c[j] * g[m - j])
            .sum();
        g.push(s / (m as f64 * a));
    }
    c
}

fn series_eval(c: &[f64], r: f64) -> (f64, f64) {
    let x = r * r;
    let (mut q, mut dq) = (0.0, 0.0);
    for (k, ck) in c.iter().enumerate().rev() {
        q = q * x + ck;
        if k > 0 {
            dq = dq * x + 2.0 * k as f64 * ck;
        }
    }
    (q, dq * r)
}

fn shoot(a: f64, p: f64, lambda: f64, n: f64, r: &[f64]) -> Trajectory {
    let c = origin_series(a, p, lambda, n);
    let reach = SERIES_RADIUS / (lambda * a.powf(p - 1.0)).max(1.0).sqrt();
    let start = r.iter().position(|&x| x >= reach).unwrap_or(1).max(1);
    let mut y = Vec::with_capacity(r.len());
    let mut acc = [0.0; 3];
    let mut prev = 0.0;
    for (i, &ri) in r[..=start].iter().enumerate() {
        if i > 0 {
            // Simpson on each cell with the series.
            let f = |x: f64| {
                let (q, dq) = series_eval(&c, x);
                let w = x.powf(n - 1.0);
                [q * q * w, dq * dq * w, q.abs().powf(p + 1.0) * w]
            };
            let (f0, f1, f2) = (f(prev), f(0.5 * (prev + ri)), f(ri));
            for j in 0..3 {
                acc[j] += (ri - prev) / 6.0 * (f0[j] + 4.0 * f1[j] + f2[j]);
            }
        }
        let (q, dq) = series_eval(&c, ri);
        y.push([q, dq, acc[0], acc[1], acc[2]]);
        prev = ri;
    }
    let add = |b: &[f64; 5], k: &[f64; 5], f: f64| -> [f64; 5] {
        let mut o = *b;
        for j in 0..5 {
            o[j] += f * k[j];
        }
        o
    };
    for i in start..r.len() - 1 {
        let h = (r[i + 1] - r[i]) / SUBSTEPS as f64;
        let mut next = y[i];
        for sub in 0..SUBSTEPS {
            let x = r[i] + sub as f64 * h;
            let s = next;
            let k1 = rhs(x, &s, p, lambda, n);
            let k2 = rhs(x + 0.5 * h, &add(&s, &k1, 0.5 * h), p, lambda, n);
            let k3 = rhs(x + 0.5 * h, &add(&s, &k2, 0.5 * h), p, lambda, n);
            let k4 = rhs(x + h, &add(&s, &k3, h), p, lambda, n);
            for j in 0..5 {
                next[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
            }
        }
        y.push(next);
        if next[0] <= 0.0 {
            return Trajectory {
                y,
                outcome: Shot::Over,
            };
        }
        if next[1] > 0.0 {
            return Trajectory {
                y,
                outcome: Shot::Under,
            };
        }
    }
    // Reached the mesh end: the sign of the growing mode Q + Q'/sqrt(2)
    // decides the branch.
    let last = y[y.len() - 1];
    let outcome = if last[0] + last[1] / 2f64.sqrt() > 0.0 {
        Shot::Under
    } else {
        Shot::Over
    };
    Trajectory { y, outcome }
}

/// Decaying solution T(r) of T'' + (n-1) T'/r = 2 T and its derivative.
fn tail_mode(r: f64, dim: usize) -> (f64, f64) {
    let k = 2f64.sqrt();
    let z = k * r;
    match dim {
        3 => {
            let e = (-z).exp() / r;
            (e, -e * (k + 1.0 / r))
        }
        _ => {
            let pre = (PI / (2.0 * z)).sqrt() * (-z).exp();
            let k0 = pre
                * (1.0 - 1.0 / (8.0 * z) + 9.0 / (128.0 * z * z) - 225.0 / (3072.0 * z.powi(3))
                    + 11025.0 / (98304.0 * z.powi(4)));
            let k1 = pre
                * (1.0 + 3.0 / (8.0 * z) - 15.0 / (128.0 * z * z) + 315.0 / (3072.0 * z.powi(3))
                    - 14175.0 / (98304.0 * z.powi(4)));
            (k0, -k * k1)
        }
    }
}

/// Ground state by shooting on Q(0) with bisection to relative bracket
/// width `tol`.
pub fn solve_q_radial(
    p: f64,
    lambda: f64,
    dim: usize,
    tol: f64,
) -> Result<RadialProfile, GroundStateError> {
    let upper = if dim > 2 {
        1.0 + 4.0 / (dim as f64 - 2.0)
    } else {
        f64::INFINITY
    };
    if !(p > 1.0 && p < upper) {
        return Err(GroundStateError::BadPower { p, dim });
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(GroundStateError::BadLambda(lambda));
    }
    if dim != 2 && dim != 3 {
        return Err(GroundStateError::BadPower { p, dim });
    }
    let n = dim as f64;
    let r = mesh(14.0);
    let equilibrium = lambda.powf(-1.0 / (p - 1.0));
    let mut lo = equilibrium * (1.0 + 1e-3);
    if shoot(lo, p, lambda, n, &r).outcome != Shot::Under {
        return Err(GroundStateError::BracketNotFound);
    }
    let mut hi = 2.0 * equilibrium;
    let mut tries = 0;
    while shoot(hi, p, lambda, n, &r).outcome != Shot::Over {
        lo = hi;
        hi *= 2.0;
        tries += 1;
        if tries > 60 {
            return Err(GroundStateError::BracketNotFound);
        }
    }
    let tol = tol.max(4.0 * f64::EPSILON);
    let mut iterations = 0;
    while hi - lo > tol * hi {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        match shoot(mid, p, lambda, n, &r).outcome {
            Shot::Under => lo = mid,
            Shot::Over => hi = mid,
        }
        iterations += 1;
        if iterations > 200 {
            return Err(GroundStateError::NonConvergence {
                iterations,
                residual: (hi - lo) / hi,
            });
        }
    }
    let tl = shoot(lo, p, lambda, n, &r);
    let th = shoot(hi, p, lambda, n, &r);
    let tm = shoot(0.5 * (lo + hi), p, lambda, n, &r);
    let len = tl.y.len().min(th.y.len()).min(tm.y.len());
    let a = tm.y[0][0];
    let mut m = 1;
    for i in 1..len {
        let (ql, qh, s) = (tl.y[i][0], th.y[i][0], tm.y[i]);
        if s[0] <= 0.0 || s[1] >= 0.0 || (ql - qh).abs() > AGREEMENT * s[0] {
            break;
        }
        m = i;
        if s[0] < TAIL_FLOOR * a {
            break;
        }
    }
    if r[m] < 3.0 {
        return Err(GroundStateError::NonConvergence {
            iterations,
            residual: (hi - lo) / hi,
        });
    }
    let mut rr: Vec<f64> = r[..=m].to_vec();
    let mut q: Vec<f64> = tm.y[..=m].iter().map(|s| s[0]).collect();
    let mut dq: Vec<f64> = tm.y[..=m].iter().map(|s| s[1]).collect();
    let [_, _, mut mass, mut kin, mut lpp] = tm.y[m];
    let (t0, _) = tail_mode(r[m], dim);
    let scale = q[m] / t0;
    let h = r[m] - r[m - 1];
    let mut rc = r[m];
    let integrand = |rv: f64| {
        let (t, dt) = tail_mode(rv, dim);
        let (qv, dqv) = (scale * t, scale * dt);
        let rn = rv.powf(n - 1.0);
        [qv * qv * rn, dqv * dqv * rn, qv.powf(p + 1.0) * rn]
    };
    while q[q.len() - 1] >= 1e-2 * TAIL_FLOOR * a {
        let (f0, f1, f2) = (integrand(rc), integrand(rc + 0.5 * h), integrand(rc + h));
        mass += h / 6.0 * (f0[0] + 4.0 * f1[0] + f2[0]);
        kin += h / 6.0 * (f0[1] + 4.0 * f1[1] + f2[1]);
        lpp += h / 6.0 * (f0[2] + 4.0 * f1[2] + f2[2]);
        rc += h;
        let (t, dt) = tail_mode(rc, dim);
        rr.push(rc);
        q.push(scale * t);
        dq.push(scale * dt);
    }
    let area = sphere_area(dim);
    Ok(RadialProfile {
        p,
        lambda,
        dim,
        r: rr,
        q,
        dq,
        mass: mass * area,
        kinetic: kin * area,
        lpp: lpp * area,
        shooting_nodes: m + 1,
    })
}

/// Finite-difference weights (Fornberg) for derivatives 0..=order at z.
pub fn fd_weights(z: f64, x: &[f64], order: usize) -> Vec<Vec<f64>> {
    let n = x.len();
    let mut c = vec![vec![0.0; n]; order + 1];
    let mut c1 = 1.0;
    let mut c4 = x[0] - z;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(order);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = x[i] - z;
        for j in 0..i {
            let c3 = x[i] - x[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] *= c4 / c3;
        }
        c1 = c2;
    }
    c
}

impl RadialProfile {
    /// Largest ODE residual over interior nodes of the shooting range,
    /// with Q'' from seven-point finite differences.
    pub fn ode_residual(&self) -> f64 {
        let n = self.dim as f64;
        let mut worst: f64 = 0.0;
        let stop = self.shooting_nodes.min(self.r.len()).saturating_sub(4);
        for i in 4..stop {
            let idx: Vec<usize> = (i - 3..=i + 3).collect();
            let xs: Vec<f64> = idx.iter().map(|&j| self.r[j]).collect();
            let w = fd_weights(self.r[i], &xs, 2);
            let d2: f64 = idx.iter().zip(&w[2]).map(|(&j, c)| c * self.q[j]).sum();
            let q = self.q[i];
            let res = d2 + (n - 1.0) * self.dq[i] / self.r[i] - 2.0 * q
                + 2.0 * self.lambda * q.powf(self.p);
            worst = worst.max(res.abs());
        }
        worst
    }

    /// Cubic Hermite interpolation; zero beyond the last node.
    pub fn value(&self, r: f64) -> f64 {
        let last = self.r.len() - 1;
        if r >= self.r[last] {
            return 0.0;
        }
        let i = match self.r.binary_search_by(|x| x.partial_cmp(&r).unwrap()) {
            Ok(i) => return self.q[i],
            Err(i) => i - 1,
        };
        let h = self.r[i + 1] - self.r[i];
        let s = (r - self.r[i]) / h;
        let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
        let h10 = s * (1.0 - s) * (1.0 - s);
        let h01 = s * s * (3.0 - 2.0 * s);
        let h11 = s * s * (s - 1.0);
        h00 * self.q[i] + h10 * h * self.dq[i] + h01 * self.q[i + 1] + h11 * h * self.dq[i + 1]
    }

    pub fn peak(&self) -> f64 {
        self.q[0]
    }

    /// Profile multiplied by `s`, integrals rescaled accordingly.
    pub fn scaled(&self, s: f64) -> RadialProfile {
        RadialProfile {
            q: self.q.iter().map(|v| v * s).collect(),
            dq: self.dq.iter().map(|v| v * s).collect(),
            mass: self.mass * s * s,
            kinetic: self.kinetic * s * s,
            lpp: self.lpp * s.abs().powf(self.p + 1.0),
            ..self.clone()
        }
    }

    /// Two-column table "r Q(r)" with a commented header carrying the
    /// parameters and integrals.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "# p={:e} lambda={:e} dim={} mass={:e} kinetic={:e} lpp={:e}",
            self.p, self.lambda, self.dim, self.mass, self.kinetic, self.lpp
        );
        for (r, q) in self.r.iter().zip(&self.q) {
            let _ = writeln!(s, "{r:.16e} {q:.16e}");
        }
        s
    }

    pub fn from_table(text: &str) -> Result<RadialProfile, GroundStateError> {
        let bad = |m: &str| GroundStateError::Table(m.to_string());
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad("empty table"))?;
        let mut fields = std::collections::HashMap::new();
        for tok in header.trim_start_matches('#').split_whitespace() {
            let (k, v) = tok.split_once('=').ok_or_else(|| bad("malformed header"))?;
            fields.insert(k.to_string(), v.to_string());
        }
        let get = |k: &str| -> Result<f64, GroundStateError> {
            fields
                .get(k)
                .ok_or_else(|| bad(&format!("missing {k}")))?
                .parse()
                .map_err(|_| bad(&format!("bad {k}")))
        };
        let (mut r, mut q) = (Vec::new(), Vec::new());
        for (i, line) in lines.enumerate() {
            let mut it = line.split_whitespace();
            let parse = |t: Option<&str>| -> Result<f64, GroundStateError> {
                t.ok_or_else(|| bad(&format!("row {i} short")))?
                    .parse()
                    .map_err(|_| bad(&format!("row {i} unparsable")))
            };
            r.push(parse(it.next())?);
            q.push(parse(it.next())?);
        }
        if r.len() < 8 {
            return Err(bad("too few rows"));
        }
        let p = get("p")?;
        let lambda = get("lambda")?;
        let dim = get("dim")? as usize;
        let n = dim as f64;
        let dq = (0..r.len())
            .map(|i| {
                if i == 0 {
                    return 0.0;
                }
                let lo = i.saturating_sub(3).min(r.len() - 7);
                let xs = &r[lo..lo + 7];
                let w = fd_weights(r[i], xs, 1);
                let _ = n;
                (lo..lo + 7).zip(&w[1]).map(|(j, c)| c * q[j]).sum()
            })
            .collect();
        let shooting_nodes = r.len();
        Ok(RadialProfile {
            shooting_nodes,
            p,
            lambda,
            dim,
            r,
            q,
            dq,
            mass: get("mass")?,
            kinetic: get("kinetic")?,
            lpp: get("lpp")?,
        })
    }
}

/// Relative residuals of the three Pohozaev identities with a = 1/2,
/// b = lambda, c = 1.
pub fn pohozaev_residuals(profile: &RadialProfile) -> [f64; 3] {
    let (a, b, c) = (0.5, profile.lambda, 1.0);
    let n = profile.dim as f64;
    let p = profile.p;
    let (k, m, l) = (profile.kinetic, profile.mass, profile.lpp);
    let rel = |x: f64, y: f64| (x - y).abs() / x.abs().max(y.abs());
    [
        rel(2.0 * a * k, b * n * (p - 1.0) / (p + 1.0) * l),
        rel(2.0 * c * m, b * (2.0 - n * (p - 1.0) / (p + 1.0)) * l),
        rel(a * (2.0 * (p + 1.0) / (n * (p - 1.0)) - 1.0) * k, c * m),
    ]
}

/// E_00(Q) = 1/2 kinetic - (2 lambda / (p+1)) lpp.
pub fn free_energy(profile: &RadialProfile) -> f64 {
    0.5 * profile.kinetic - 2.0 * profile.lambda / (profile.p + 1.0) * profile.lpp
}

#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct GnConstant {
    pub c_gn: f64,
    /// Inverse constant from the closed formula in sigma = (p-1)/2.
    pub inverse_formula: f64,
    /// Inverse constant from the Weinstein functional evaluated on Q.
    pub inverse_direct: f64,
    /// Mass-critical formula (2 lambda n / (n+2)) ||Q||^(4/n), when p = 1 + 4/n.
    pub inverse_critical: Option<f64>,
}

pub fn gn_constant(profile: &RadialProfile) -> GnConstant {
    let n = profile.dim as f64;
    let sigma = (profile.p - 1.0) / 2.0;
    let sn = sigma * n;
    let (m, k, l) = (profile.mass, profile.kinetic, profile.lpp);
    let inverse_formula = profile.lambda * m.powf(sigma) / 2f64.powf(1.0 - sn / 2.0)
        * (2.0 - sn / (sigma + 1.0))
        * (sn / (2.0 * sigma + 2.0 - sn)).powf(sn / 2.0);
    let inverse_direct = m.powf((2.0 + 2.0 * sigma - sn) / 2.0) * k.powf(sn / 2.0) / l;
    let critical = (profile.p - (1.0 + 4.0 / n)).abs() < 1e-12;
    let inverse_critical = critical.then(|| 2.0 * profile.lambda * n / (n + 2.0) * m.powf(2.0 / n));
    GnConstant {
        c_gn: 1.0 / inverse_formula,
        inverse_formula,
        inverse_direct,
        inverse_critical,
    }
}

/// Cached mass-critical ground state with lambda = 1.
pub fn critical_profile(dim: usize) -> &'static RadialProfile {
    static TWO: OnceLock<RadialProfile> = OnceLock::new();
    static THREE: OnceLock<RadialProfile> = OnceLock::new();
    let cell = if dim == 3 { &THREE } else { &TWO };
    cell.get_or_init(|| {
        solve_q_radial(1.0 + 4.0 / dim as f64, 1.0, dim, 1e-15).expect("critical ground state")
    })
}

/// ||Q_{lambda,1}||_2^2 for the mass-critical power.
pub fn threshold_mass(dim: usize, lambda: f64) -> f64 {
    critical_profile(dim).mass * lambda.powf(-(dim as f64) / 2.0)
}

/// u(x) = c e^{i theta} alpha^{n/2} Q(alpha |x|) e^{i nu |x|^2}.
pub fn lift_to_grid(
    profile: &RadialProfile,
    grid: &GridSpec,
    c: f64,
    alpha: f64,
    theta: f64,
    nu: f64,
) -> Result<WaveField, GroundStateError> {
    if profile.dim != grid.dim {
        return Err(GroundStateError::Resolution(format!(
            "profile dimension {} differs from grid dimension {}",
            profile.dim, grid.dim
        )));
    }
    let h = (0..grid.dim).map(|a| grid.spacing(a)).fold(0.0, f64::max);
    if alpha * h > 0.35 {
        return Err(GroundStateError::Resolution(format!(
            "spacing {h} too coarse for scale alpha = {alpha}"
        )));
    }
    let amp = c * alpha.powf(grid.dim as f64 / 2.0);
    Ok(WaveField::from_fn(*grid, |x| {
        let r2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
        let q = profile.value(alpha * r2.sqrt());
        Complex64::from_polar(amp * q, theta + nu * r2)
    }))
}
