//! Flat `key = value` configuration with optional `[section]` headers.
//!
//! Every key belongs to exactly one section; a key may also appear before
//! any header. Keys are case-insensitive, `#` starts a comment.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::experiments::{Direction, Family};
use crate::grid::GridSpec;
use crate::integrator::StepControl;
use crate::operators::{NonlinearityModel, PhysicsParams};

#[derive(Debug, Error, PartialEq)]
#[error("{}{key}: {message}", line.map(|l| format!("line {l}: ")).unwrap_or_default())]
pub struct ConfigError {
    pub line: Option<usize>,
    pub key: String,
    pub message: String,
}

fn err(line: Option<usize>, key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError {
        line,
        key: key.to_string(),
        message: message.into(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExperimentKind {
    Groundstate,
    Evolve,
    Sweep,
    Stability,
    Vortex,
    Inhomogeneous,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Groundstate => "groundstate",
            Self::Evolve => "evolve",
            Self::Sweep => "sweep",
            Self::Stability => "stability",
            Self::Vortex => "vortex",
            Self::Inhomogeneous => "inhomogeneous",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "groundstate" => Self::Groundstate,
            "evolve" => Self::Evolve,
            "sweep" => Self::Sweep,
            "stability" => Self::Stability,
            "vortex" => Self::Vortex,
            "inhomogeneous" | "inhom" => Self::Inhomogeneous,
            _ => return None,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ModelKind {
    Power { lambda: f64 },
    Inhomogeneous { lambda0: f64, m: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub experiment: ExperimentKind,
    // [grid]
    pub dim: usize,
    pub extent: f64,
    pub points: usize,
    // [physics]
    pub omega: f64,
    pub gamma: f64,
    pub p: f64,
    pub kappa: f64,
    pub model: ModelKind,
    // [initial]
    pub family: Family,
    pub c: f64,
    pub alpha: f64,
    pub theta: f64,
    pub nu: f64,
    // [numerics]
    pub dt: f64,
    pub t_end: f64,
    pub periods: f64,
    pub cadence: u64,
    pub seed: u64,
    pub tail_threshold: f64,
    pub refine_trigger: f64,
    pub blowup_ratio: f64,
    pub tol: f64,
    // [sweep]
    pub c_list: Vec<f64>,
    // [stability]
    pub delta: f64,
    pub directions: Vec<Direction>,
    pub sample_every: f64,
    // [vortex]
    pub strength: f64,
    pub a: f64,
    pub m_list: Vec<i32>,
    // [io]
    pub output: String,
    pub checkpoint_every: u64,
}

const SECTIONS: &[(&str, &[&str])] = &[
    ("run", &["experiment"]),
    ("grid", &["dim", "extent", "points"]),
    (
        "physics",
        &[
            "omega", "gamma", "p", "kappa", "model", "lambda", "lambda0", "m",
        ],
    ),
    ("initial", &["family", "c", "alpha", "theta", "nu"]),
    (
        "numerics",
        &[
            "dt",
            "t_end",
            "periods",
            "cadence",
            "seed",
            "tail_threshold",
            "refine_trigger",
            "blowup_ratio",
            "tol",
        ],
    ),
    ("sweep", &["c_list"]),
    ("stability", &["delta", "directions", "sample_every"]),
    ("vortex", &["strength", "a", "m_list"]),
    ("io", &["output", "checkpoint_every"]),
];

fn section_of(key: &str) -> Option<&'static str> {
    SECTIONS
        .iter()
        .find(|(_, keys)| keys.contains(&key))
        .map(|(s, _)| *s)
}

struct Entries {
    map: BTreeMap<String, (String, usize)>,
}

impl Entries {
    fn raw(&self, key: &str) -> Option<(&str, usize)> {
        self.map.get(key).map(|(v, l)| (v.as_str(), *l))
    }

    fn num<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T, ConfigError> {
        match self.raw(key) {
            None => Ok(default),
            Some((v, line)) => v
                .parse()
                .map_err(|_| err(Some(line), key, format!("cannot parse '{v}' as a number"))),
        }
    }

    fn line(&self, key: &str) -> Option<usize> {
        self.raw(key).map(|(_, l)| l)
    }

    fn list<T: std::str::FromStr>(&self, key: &str) -> Result<Option<Vec<T>>, ConfigError> {
        let Some((v, line)) = self.raw(key) else {
            return Ok(None);
        };
        v.split(',')
            .map(|s| s.trim())
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse()
                    .map_err(|_| err(Some(line), key, format!("cannot parse list item '{s}'")))
            })
            .collect::<Result<Vec<T>, _>>()
            .map(Some)
    }
}

fn tokenize(text: &str) -> Result<Entries, ConfigError> {
    let mut map = BTreeMap::new();
    let mut section: Option<String> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let s = raw.split('#').next().unwrap_or("").trim();
        if s.is_empty() {
            continue;
        }
        if let Some(name) = s.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| err(Some(line), s, "malformed section header"))?
                .trim()
                .to_ascii_lowercase();
            if !SECTIONS.iter().any(|(n, _)| *n == name) {
                return Err(err(Some(line), &name, "unknown section"));
            }
            section = Some(name);
            continue;
        }
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| err(Some(line), s, "expected 'key = value'"))?;
        let key = k.trim().to_ascii_lowercase();
        let value = v.trim().to_string();
        let home = section_of(&key).ok_or_else(|| err(Some(line), &key, "unknown key"))?;
        if let Some(sec) = &section {
            if sec != home {
                return Err(err(
                    Some(line),
                    &key,
                    format!("unknown key in section [{sec}] (belongs to [{home}])"),
                ));
            }
        }
        if map.insert(key.clone(), (value, line)).is_some() {
            return Err(err(Some(line), &key, "duplicate key"));
        }
    }
    Ok(Entries { map })
}

fn parse_family(s: &str) -> Option<Family> {
    match s {
        "scaled_q" | "scaled-q" | "q" => Some(Family::ScaledQ),
        "gaussian" => Some(Family::Gaussian),
        _ => None,
    }
}

fn family_name(f: Family) -> &'static str {
    match f {
        Family::ScaledQ => "scaled_q",
        Family::Gaussian => "gaussian",
    }
}

fn parse_direction(s: &str) -> Option<Direction> {
    match s {
        "random" => Some(Direction::RandomSmooth),
        "dipole" => Some(Direction::Dipole),
        "chirp" => Some(Direction::Chirp),
        _ => None,
    }
}

fn direction_name(d: Direction) -> &'static str {
    match d {
        Direction::RandomSmooth => "random",
        Direction::Dipole => "dipole",
        Direction::Chirp => "chirp",
    }
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    parse_config_as(text, None)
}

/// Like `parse_config`, with `kind` standing in for a missing `experiment`
/// key. A config naming a different experiment is rejected.
pub fn parse_config_as(text: &str, kind: Option<ExperimentKind>) -> Result<RunConfig, ConfigError> {
    let e = tokenize(text)?;
    let experiment = match (e.raw("experiment"), kind) {
        (None, None) => return Err(err(None, "experiment", "missing required key")),
        (None, Some(k)) => k,
        (Some((exp, line)), kind) => {
            let found = ExperimentKind::parse(&exp.to_ascii_lowercase()).ok_or_else(|| {
                err(
                    Some(line),
                    "experiment",
                    format!("unknown experiment '{exp}'"),
                )
            })?;
            if let Some(k) = kind.filter(|k| *k != found) {
                return Err(err(
                    Some(line),
                    "experiment",
                    format!("config is for '{}', not '{}'", found.name(), k.name()),
                ));
            }
            found
        }
    };

    let dim: usize = e.num("dim", 2)?;
    if dim != 2 && dim != 3 {
        return Err(err(e.line("dim"), "dim", "dim must be 2 or 3"));
    }
    let gamma: f64 = e.num("gamma", 1.0)?;
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(err(e.line("gamma"), "gamma", "gamma must be > 0"));
    }
    let omega: f64 = e.num("omega", 0.0)?;
    if !omega.is_finite() {
        return Err(err(e.line("omega"), "omega", "omega must be finite"));
    }
    let model_name = e
        .raw("model")
        .map(|(v, _)| v.to_ascii_lowercase())
        .unwrap_or_else(|| "power".into());
    let model = match model_name.as_str() {
        "power" => ModelKind::Power {
            lambda: e.num("lambda", 1.0)?,
        },
        "inhomogeneous" => ModelKind::Inhomogeneous {
            lambda0: e.num("lambda0", 1.0)?,
            m: e.num("m", 2.0)?,
        },
        other => {
            return Err(err(
                e.line("model"),
                "model",
                format!("unknown model '{other}'"),
            ))
        }
    };
    let family = match e.raw("family") {
        None => {
            if experiment == ExperimentKind::Sweep || experiment == ExperimentKind::Inhomogeneous {
                Family::ScaledQ
            } else {
                Family::Gaussian
            }
        }
        Some((v, line)) => parse_family(&v.to_ascii_lowercase())
            .ok_or_else(|| err(Some(line), "family", format!("unknown family '{v}'")))?,
    };
    let directions = match e.list::<String>("directions")? {
        None => vec![Direction::RandomSmooth, Direction::Dipole, Direction::Chirp],
        Some(items) => items
            .iter()
            .map(|s| {
                parse_direction(&s.to_ascii_lowercase()).ok_or_else(|| {
                    err(
                        e.line("directions"),
                        "directions",
                        format!("unknown direction '{s}'"),
                    )
                })
            })
            .collect::<Result<_, _>>()?,
    };
    let default_periods = if experiment == ExperimentKind::Stability {
        5.0
    } else {
        3.0
    };
    let cfg = RunConfig {
        experiment,
        dim,
        extent: e.num("extent", 8.0)?,
        points: e.num("points", 128)?,
        omega,
        gamma,
        p: e.num("p", PhysicsParams::critical_power(dim))?,
        kappa: e.num("kappa", 1.0)?,
        model,
        family,
        c: e.num("c", 0.5)?,
        alpha: e.num("alpha", 1.0)?,
        theta: e.num("theta", 0.0)?,
        nu: e.num("nu", 0.0)?,
        dt: e.num("dt", 1e-3 / gamma)?,
        t_end: e.num("t_end", 2.0 * std::f64::consts::PI / gamma)?,
        periods: e.num("periods", default_periods)?,
        cadence: e.num("cadence", 10)?,
        seed: e.num("seed", 0)?,
        tail_threshold: e.num("tail_threshold", 1e-6)?,
        refine_trigger: e.num("refine_trigger", 2.0)?,
        blowup_ratio: e.num("blowup_ratio", 1e3)?,
        tol: e.num("tol", 1e-8)?,
        c_list: e.list("c_list")?.unwrap_or_default(),
        delta: e.num("delta", 1e-2)?,
        directions,
        sample_every: e.num("sample_every", 0.05)?,
        strength: e.num("strength", 1.0)?,
        a: e.num("a", 4.0)?,
        m_list: e.list("m_list")?.unwrap_or_default(),
        output: e
            .raw("output")
            .map(|(v, _)| v.to_string())
            .unwrap_or_else(|| "out".into()),
        checkpoint_every: e.num("checkpoint_every", 0)?,
    };
    validate(&cfg, &e)?;
    Ok(cfg)
}

fn validate(c: &RunConfig, e: &Entries) -> Result<(), ConfigError> {
    let check = |ok: bool, key: &str, msg: &str| {
        if ok {
            Ok(())
        } else {
            Err(err(e.line(key), key, msg))
        }
    };
    check(
        c.extent > 0.0 && c.extent.is_finite(),
        "extent",
        "extent must be > 0",
    )?;
    GridSpec::cubic(c.dim, c.extent, c.points)
        .map_err(|g| err(e.line("points"), "points", g.to_string()))?;
    check(
        c.kappa == 1.0 || c.kappa == -1.0,
        "kappa",
        "kappa must be +1 or -1",
    )?;
    c.physics()
        .validate()
        .map_err(|p| err(e.line("p"), "physics", p.to_string()))?;
    check(c.dt > 0.0 && c.dt.is_finite(), "dt", "dt must be > 0")?;
    check(
        c.t_end >= 0.0 && c.t_end.is_finite(),
        "t_end",
        "t_end must be >= 0",
    )?;
    check(c.periods > 0.0, "periods", "periods must be > 0")?;
    check(c.cadence >= 1, "cadence", "cadence must be >= 1")?;
    check(c.c >= 0.0 && c.c.is_finite(), "c", "c must be >= 0")?;
    check(c.alpha > 0.0, "alpha", "alpha must be > 0")?;
    check(
        c.tail_threshold > 0.0,
        "tail_threshold",
        "tail_threshold must be > 0",
    )?;
    check(
        c.refine_trigger > 1.0,
        "refine_trigger",
        "refine_trigger must be > 1",
    )?;
    check(
        c.blowup_ratio > c.refine_trigger,
        "blowup_ratio",
        "blowup_ratio must exceed refine_trigger",
    )?;
    check(c.tol > 0.0, "tol", "tol must be > 0")?;
    check(
        (0.0..=0.1).contains(&c.delta),
        "delta",
        "delta must lie in [0, 0.1]",
    )?;
    check(
        c.sample_every > 0.0,
        "sample_every",
        "sample_every must be > 0",
    )?;
    check(c.strength > 0.0, "strength", "strength must be > 0")?;
    check(c.a > 2.0, "a", "a must be > 2")?;
    check(
        c.c_list.iter().all(|v| *v >= 0.0 && v.is_finite()),
        "c_list",
        "c_list entries must be >= 0",
    )?;
    let rotating_limit = |key: &str| {
        if c.omega.abs() >= c.gamma {
            Err(err(
                e.line("omega").or(e.line(key)),
                "omega",
                format!(
                    "{} requires |Omega| < gamma (Omega = {}, gamma = {})",
                    c.experiment.name(),
                    c.omega,
                    c.gamma
                ),
            ))
        } else {
            Ok(())
        }
    };
    match c.experiment {
        ExperimentKind::Groundstate | ExperimentKind::Stability => rotating_limit("gamma")?,
        ExperimentKind::Sweep | ExperimentKind::Inhomogeneous => {
            if c.c_list.is_empty() {
                return Err(err(None, "c_list", "missing required key"));
            }
            check(
                c.dim as f64 * (c.p - 1.0) == 4.0,
                "p",
                "sweeps need the mass-critical power p = 1 + 4/n",
            )?;
            if c.experiment == ExperimentKind::Inhomogeneous
                && !matches!(c.model, ModelKind::Inhomogeneous { .. })
            {
                return Err(err(
                    e.line("model"),
                    "model",
                    "inhomogeneous experiment needs model = inhomogeneous",
                ));
            }
        }
        ExperimentKind::Vortex => {
            check(c.dim == 2, "dim", "vortex family needs dim = 2")?;
            if c.m_list.is_empty() {
                return Err(err(None, "m_list", "missing required key"));
            }
        }
        ExperimentKind::Evolve => {}
    }
    Ok(())
}

impl RunConfig {
    pub fn grid(&self) -> GridSpec {
        GridSpec::cubic(self.dim, self.extent, self.points).expect("validated grid")
    }

    pub fn physics(&self) -> PhysicsParams {
        let model = match self.model {
            ModelKind::Power { lambda } => NonlinearityModel::Power { lambda },
            ModelKind::Inhomogeneous { lambda0, m } => {
                NonlinearityModel::Inhomogeneous { lambda0, m }
            }
        };
        PhysicsParams::power(self.dim, self.p, 1.0, self.gamma, self.omega)
            .with_model(model)
            .with_kappa(self.kappa)
    }

    pub fn control(&self) -> StepControl {
        StepControl {
            cadence: self.cadence,
            tail_threshold: self.tail_threshold,
            refine_trigger: self.refine_trigger,
            blowup_ratio: self.blowup_ratio,
        }
    }

    /// Effective configuration with every key written out; parses back to
    /// an equal config.
    pub fn echo(&self) -> String {
        let mut s = String::new();
        let list = |v: &[f64]| {
            v.iter()
                .map(|x| format!("{x:?}"))
                .collect::<Vec<_>>()
                .join(", ")
        };
        let _ = writeln!(s, "[run]\nexperiment = {}\n", self.experiment.name());
        let _ = writeln!(
            s,
            "[grid]\ndim = {}\nextent = {:?}\npoints = {}\n",
            self.dim, self.extent, self.points
        );
        let _ = writeln!(
            s,
            "[physics]\nomega = {:?}\ngamma = {:?}\np = {:?}\nkappa = {:?}",
            self.omega, self.gamma, self.p, self.kappa
        );
        match self.model {
            ModelKind::Power { lambda } => {
                let _ = writeln!(s, "model = power\nlambda = {lambda:?}\n");
            }
            ModelKind::Inhomogeneous { lambda0, m } => {
                let _ = writeln!(
                    s,
                    "model = inhomogeneous\nlambda0 = {lambda0:?}\nm = {m:?}\n"
                );
            }
        }
        let _ = writeln!(
            s,
            "[initial]\nfamily = {}\nc = {:?}\nalpha = {:?}\ntheta = {:?}\nnu = {:?}\n",
            family_name(self.family),
            self.c,
            self.alpha,
            self.theta,
            self.nu
        );
        let _ = writeln!(
            s,
            "[numerics]\ndt = {:?}\nt_end = {:?}\nperiods = {:?}\ncadence = {}\nseed = {}\ntail_threshold = {:?}\nrefine_trigger = {:?}\nblowup_ratio = {:?}\ntol = {:?}\n",
            self.dt,
            self.t_end,
            self.periods,
            self.cadence,
            self.seed,
            self.tail_threshold,
            self.refine_trigger,
            self.blowup_ratio,
            self.tol
        );
        if !self.c_list.is_empty() {
            let _ = writeln!(s, "[sweep]\nc_list = {}\n", list(&self.c_list));
        }
        let dirs: Vec<&str> = self.directions.iter().map(|d| direction_name(*d)).collect();
        let _ = writeln!(
            s,
            "[stability]\ndelta = {:?}\ndirections = {}\nsample_every = {:?}\n",
            self.delta,
            dirs.join(", "),
            self.sample_every
        );
        let _ = write!(
            s,
            "[vortex]\nstrength = {:?}\na = {:?}\n",
            self.strength, self.a
        );
        if !self.m_list.is_empty() {
            let ms: Vec<String> = self.m_list.iter().map(|m| m.to_string()).collect();
            let _ = writeln!(s, "m_list = {}", ms.join(", "));
        }
        let _ = writeln!(
            s,
            "\n[io]\noutput = {}\ncheckpoint_every = {}",
            self.output, self.checkpoint_every
        );
        s
    }
}
