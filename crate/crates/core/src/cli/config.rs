//! Flat `[section]` / `key = value` experiment configurations.
//!
//! `#` starts a comment. Every key is validated; unknown sections and keys,
//! duplicates, type mismatches and constraint violations are all collected
//! and reported together with their line numbers.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::Serialize;
use serde_json::{json, Value};

use crate::grid::{GaussianPacket, Grid1D};
use crate::stern_gerlach::{Polarity, Reversal, SgNumerics, SgSetup};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Propagate,
    Trajectories,
    BornCheck,
    SternGerlach,
    Contextuality,
    PointerModel,
    Nogo,
}

impl Command {
    pub const ALL: [Command; 7] = [
        Command::Propagate,
        Command::Trajectories,
        Command::BornCheck,
        Command::SternGerlach,
        Command::Contextuality,
        Command::PointerModel,
        Command::Nogo,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Command::Propagate => "propagate",
            Command::Trajectories => "trajectories",
            Command::BornCheck => "born-check",
            Command::SternGerlach => "stern-gerlach",
            Command::Contextuality => "contextuality",
            Command::PointerModel => "pointer-model",
            Command::Nogo => "nogo",
        }
    }
}

impl FromStr for Command {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Command::ALL
            .iter()
            .find(|c| c.name() == s)
            .copied()
            .ok_or_else(|| {
                let names: Vec<_> = Command::ALL.iter().map(|c| c.name()).collect();
                format!("unknown command `{s}` (expected one of {})", names.join(", "))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Formats {
    pub csv: bool,
    pub json: bool,
}

impl Default for Formats {
    fn default() -> Self {
        Self { csv: true, json: true }
    }
}

impl FromStr for Formats {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut f = Formats { csv: false, json: false };
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            match part {
                "csv" => f.csv = true,
                "json" => f.json = true,
                other => return Err(format!("unknown format `{other}` (expected csv or json)")),
            }
        }
        if !f.csv && !f.json {
            return Err("at least one of csv, json is required".into());
        }
        Ok(f)
    }
}

impl fmt::Display for Formats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<&str> = [(self.csv, "csv"), (self.json, "json")]
            .iter()
            .filter(|(on, _)| *on)
            .map(|(_, n)| *n)
            .collect();
        write!(f, "{}", parts.join(","))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Potential {
    Free,
    Harmonic { omega: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropagateParams {
    pub t_total: f64,
    pub dt: f64,
    pub record_every: usize,
    pub dt_traj: f64,
    pub potential: Potential,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContextualityParams {
    pub q_points: usize,
    pub q_min: f64,
    pub q_max: f64,
    pub reversal: Reversal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointerOutcomeSpec {
    pub label: String,
    /// Computational basis vectors spanning the outcome subspace.
    pub basis: Vec<usize>,
    pub calibration: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointerParams {
    pub dim: usize,
    /// Explicit state; drawn from the seed when absent.
    pub state: Option<Vec<Complex64>>,
    /// Explicit outcomes; a random experiment with `random_outcomes`
    /// outcomes is drawn from the seed when empty.
    pub outcomes: Vec<PointerOutcomeSpec>,
    pub random_outcomes: usize,
}

/// A fully validated run description.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub seed: u64,
    pub n_samples: usize,
    pub formats: Formats,
    pub grid: Grid1D,
    pub packet: GaussianPacket,
    pub spin: (Complex64, Complex64),
    pub setup: SgSetup,
    pub propagate: PropagateParams,
    pub contextuality: ContextualityParams,
    pub pointer: PointerParams,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub field: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}: {}", self.field, self.message),
            None => write!(f, "{}: {}", self.field, self.message),
        }
    }
}

const SECTIONS: &[(&str, &[&str])] = &[
    ("run", &["command", "seed", "n_samples", "formats"]),
    ("grid", &["n", "x_min", "x_max"]),
    ("packet", &["center", "sigma", "k"]),
    ("spin", &["p_up", "a_re", "a_im", "b_re", "b_im"]),
    (
        "setup",
        &[
            "b0",
            "b_grad",
            "mu",
            "tau",
            "t_drift",
            "z_det",
            "polarity",
            "geometry",
            "calibration_up",
            "calibration_down",
            "dt",
            "record_every",
            "dt_traj",
        ],
    ),
    ("propagate", &["t_total", "dt", "record_every", "dt_traj", "potential", "omega"]),
    ("contextuality", &["q_points", "q_min", "q_max", "reversal"]),
    ("pointer", &["dim", "state_re", "state_im", "outcomes"]),
];

const OUTCOME_KEYS: &[&str] = &["basis", "calibration"];

#[derive(Debug, Clone)]
struct Entry {
    value: String,
    line: usize,
}

/// Raw sections in file order; `outcome.<label>` sections keep their label.
#[derive(Debug, Default)]
struct Raw {
    sections: BTreeMap<String, BTreeMap<String, Entry>>,
    outcome_order: Vec<String>,
}

fn parse_raw(text: &str, errors: &mut Vec<ConfigError>) -> Raw {
    let mut raw = Raw::default();
    let mut current: Option<String> = None;
    let mut section_lines: BTreeMap<String, usize> = BTreeMap::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(rest) = content.strip_prefix('[') {
            let Some(name) = rest.strip_suffix(']').map(str::trim) else {
                errors.push(err(Some(lineno), "section", format!("malformed header `{content}`")));
                current = None;
                continue;
            };
            let known = SECTIONS.iter().any(|(s, _)| *s == name)
                || name.strip_prefix("outcome.").is_some_and(|l| !l.is_empty());
            if !known {
                errors.push(err(Some(lineno), name, "unknown section".to_string()));
                current = None;
                continue;
            }
            if let Some(first) = section_lines.get(name) {
                errors.push(err(
                    Some(lineno),
                    name,
                    format!("duplicate section (first defined on line {first})"),
                ));
            } else {
                section_lines.insert(name.to_string(), lineno);
                if let Some(label) = name.strip_prefix("outcome.") {
                    raw.outcome_order.push(label.to_string());
                }
            }
            raw.sections.entry(name.to_string()).or_default();
            current = Some(name.to_string());
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            errors.push(err(Some(lineno), "syntax", format!("expected `key = value`, got `{content}`")));
            continue;
        };
        let (key, value) = (key.trim(), value.trim());
        let Some(section) = current.as_ref() else {
            errors.push(err(Some(lineno), key, "key outside of any known section".to_string()));
            continue;
        };
        let map = raw.sections.get_mut(section).expect("section registered");
        if let Some(prev) = map.get(key) {
            errors.push(err(
                Some(lineno),
                &format!("{section}.{key}"),
                format!("duplicate key (lines {} and {lineno})", prev.line),
            ));
            continue;
        }
        map.insert(
            key.to_string(),
            Entry {
                value: value.to_string(),
                line: lineno,
            },
        );
    }
    raw
}

fn err(line: Option<usize>, field: &str, message: String) -> ConfigError {
    ConfigError {
        line,
        field: field.to_string(),
        message,
    }
}

/// Typed access to one section; records errors and consumed keys.
struct Section<'a> {
    name: &'a str,
    entries: Option<&'a BTreeMap<String, Entry>>,
    errors: &'a mut Vec<ConfigError>,
}

impl<'a> Section<'a> {
    fn entry(&self, key: &str) -> Option<&'a Entry> {
        self.entries.and_then(|m| m.get(key))
    }

    fn has(&self, key: &str) -> bool {
        self.entry(key).is_some()
    }

    fn field(&self, key: &str) -> String {
        format!("{}.{}", self.name, key)
    }

    fn fail(&mut self, key: &str, message: String) {
        let line = self.entry(key).map(|e| e.line);
        let field = self.field(key);
        self.errors.push(err(line, &field, message));
    }

    fn parse<T: FromStr>(&mut self, key: &str, what: &str) -> Option<T>
    where
        T::Err: fmt::Display,
    {
        let e = self.entry(key)?;
        match e.value.parse::<T>() {
            Ok(v) => Some(v),
            Err(m) => {
                self.fail(key, format!("expected {what}, got `{}` ({m})", e.value));
                None
            }
        }
    }

    fn f64_or(&mut self, key: &str, default: f64) -> f64 {
        match self.parse::<f64>(key, "a number") {
            Some(v) if v.is_finite() => v,
            Some(v) => {
                self.fail(key, format!("must be finite, got {v}"));
                default
            }
            None => default,
        }
    }

    fn positive(&mut self, key: &str, default: f64) -> f64 {
        let v = self.f64_or(key, default);
        if v <= 0.0 {
            self.fail(key, format!("must be > 0, got {v}"));
        }
        v
    }

    fn usize_or(&mut self, key: &str, default: usize) -> usize {
        self.parse::<usize>(key, "a non-negative integer").unwrap_or(default)
    }

    fn at_least(&mut self, key: &str, default: usize, min: usize) -> usize {
        let v = self.usize_or(key, default);
        if v < min {
            self.fail(key, format!("must be >= {min}, got {v}"));
        }
        v
    }

    fn str_or(&self, key: &str, default: &'a str) -> &'a str {
        self.entry(key).map(|e| e.value.as_str()).unwrap_or(default)
    }

    fn list<T: FromStr>(&mut self, key: &str, what: &str) -> Option<Vec<T>>
    where
        T::Err: fmt::Display,
    {
        let e = self.entry(key)?;
        let mut out = Vec::new();
        for part in e.value.split(',').map(str::trim) {
            match part.parse::<T>() {
                Ok(v) => out.push(v),
                Err(m) => {
                    self.fail(key, format!("expected a comma-separated list of {what}, bad item `{part}` ({m})"));
                    return None;
                }
            }
        }
        Some(out)
    }
}

fn section<'a>(raw: &'a Raw, name: &'a str, errors: &'a mut Vec<ConfigError>) -> Section<'a> {
    Section {
        name,
        entries: raw.sections.get(name),
        errors,
    }
}

/// Parses and validates a configuration, returning every problem found.
pub fn parse_config(text: &str) -> Result<RunConfig, Vec<ConfigError>> {
    let mut errors = Vec::new();
    let raw = parse_raw(text, &mut errors);

    for (name, entries) in &raw.sections {
        let allowed: &[&str] = if name.starts_with("outcome.") {
            OUTCOME_KEYS
        } else {
            SECTIONS.iter().find(|(s, _)| s == name).map(|(_, k)| *k).unwrap_or(&[])
        };
        for (key, e) in entries {
            if !allowed.contains(&key.as_str()) {
                errors.push(err(
                    Some(e.line),
                    &format!("{name}.{key}"),
                    format!("unknown key (allowed: {})", allowed.join(", ")),
                ));
            }
        }
    }

    // [run]
    let mut s = section(&raw, "run", &mut errors);
    let command = match s.entry("command") {
        None => {
            s.fail("command", "missing required key".into());
            None
        }
        Some(_) => s.parse::<Command>("command", "a command name"),
    };
    let seed = s.parse::<u64>("seed", "an unsigned 64-bit integer").unwrap_or(0);
    let n_samples = s.at_least("n_samples", 10_000, 1);
    let formats = s.parse::<Formats>("formats", "a format list").unwrap_or_default();

    // [grid]
    let defaults = SgNumerics::default();
    let mut s = section(&raw, "grid", &mut errors);
    let n = s.usize_or("n", defaults.grid.n());
    let x_min = s.f64_or("x_min", defaults.grid.x_min());
    let x_max = s.f64_or("x_max", defaults.grid.x_max());
    let grid = match Grid1D::new(n, x_min, x_max) {
        Ok(g) => Some(g),
        Err(e) => {
            let key = if matches!(e, crate::grid::GridError::BadSize(_)) { "n" } else { "x_max" };
            s.fail(key, e.to_string());
            None
        }
    };

    // [packet]
    let mut s = section(&raw, "packet", &mut errors);
    let packet = GaussianPacket::new(s.f64_or("center", 0.0), s.positive("sigma", 1.0), s.f64_or("k", 0.0));

    // [spin]
    let mut s = section(&raw, "spin", &mut errors);
    let explicit = ["a_re", "a_im", "b_re", "b_im"].iter().any(|k| s.has(k));
    let spin = if explicit {
        if s.has("p_up") {
            s.fail("p_up", "give either p_up or a_re/a_im/b_re/b_im, not both".into());
        }
        let a = Complex64::new(s.f64_or("a_re", 0.0), s.f64_or("a_im", 0.0));
        let b = Complex64::new(s.f64_or("b_re", 0.0), s.f64_or("b_im", 0.0));
        let norm = a.norm_sqr() + b.norm_sqr();
        if (norm - 1.0).abs() > 1e-9 {
            s.fail("a_re", format!("|a|^2 + |b|^2 must equal 1, got {norm}"));
        }
        (a, b)
    } else {
        let p = s.f64_or("p_up", 0.5);
        if !(0.0..=1.0).contains(&p) {
            s.fail("p_up", format!("must lie in [0, 1], got {p}"));
        }
        let p = p.clamp(0.0, 1.0);
        (Complex64::new(p.sqrt(), 0.0), Complex64::new((1.0 - p).sqrt(), 0.0))
    };

    // [setup]
    let base = SgSetup::default();
    let mut s = section(&raw, "setup", &mut errors);
    let mut setup = SgSetup {
        b0: s.f64_or("b0", base.b0),
        b_grad: s.f64_or("b_grad", base.b_grad),
        mu: s.f64_or("mu", base.mu),
        tau: s.positive("tau", base.tau),
        t_drift: s.f64_or("t_drift", base.t_drift),
        z_det: 0.0,
        polarity: Polarity::Normal,
        geometry_reversed: false,
        calibration_up: base.calibration_up,
        calibration_down: base.calibration_down,
        numerics: SgNumerics {
            grid: grid.unwrap_or(defaults.grid),
            dt: s.positive("dt", defaults.dt),
            record_every: s.at_least("record_every", defaults.record_every, 1),
            dt_traj: s.positive("dt_traj", defaults.dt_traj),
        },
    };
    if setup.t_drift < 0.0 {
        s.fail("t_drift", format!("must be >= 0, got {}", setup.t_drift));
    }
    match s.str_or("polarity", "normal") {
        "normal" => {}
        "reversed" => setup.polarity = Polarity::Reversed,
        other => s.fail("polarity", format!("expected normal or reversed, got `{other}`")),
    }
    match s.str_or("geometry", "normal") {
        "normal" => {}
        "reversed" => setup.geometry_reversed = true,
        other => s.fail("geometry", format!("expected normal or reversed, got `{other}`")),
    }
    setup = setup.with_default_calibration();
    setup.calibration_up = s.f64_or("calibration_up", setup.calibration_up);
    setup.calibration_down = s.f64_or("calibration_down", setup.calibration_down);
    setup.z_det = if s.has("z_det") {
        let z = s.f64_or("z_det", 0.0);
        if z < 0.0 {
            s.fail("z_det", format!("must be >= 0, got {z}"));
        }
        z
    } else {
        setup.auto_detector_edge(packet.sigma)
    };
    let sg_command = matches!(
        command,
        Some(Command::BornCheck | Command::SternGerlach | Command::Contextuality)
    );
    if sg_command && grid.is_some() {
        if let Err(e) = setup.validate() {
            s.fail("b_grad", e.to_string());
        }
    }

    // [propagate]
    let mut s = section(&raw, "propagate", &mut errors);
    let dt = s.positive("dt", 0.005);
    let record_every = s.at_least("record_every", 2, 1);
    let potential = match s.str_or("potential", "free") {
        "free" => {
            if s.has("omega") {
                s.fail("omega", "only used with potential = harmonic".into());
            }
            Potential::Free
        }
        "harmonic" => Potential::Harmonic {
            omega: s.positive("omega", 1.0),
        },
        other => {
            s.fail("potential", format!("expected free or harmonic, got `{other}`"));
            Potential::Free
        }
    };
    let propagate = PropagateParams {
        t_total: s.positive("t_total", 2.0),
        dt,
        record_every,
        dt_traj: s.positive("dt_traj", dt * record_every as f64 / 4.0),
        potential,
    };

    // [contextuality]
    let mut s = section(&raw, "contextuality", &mut errors);
    let spread = 3.0 * packet.sigma;
    let contextuality = ContextualityParams {
        q_points: s.at_least("q_points", 99, 1),
        q_min: s.f64_or("q_min", packet.center - spread),
        q_max: s.f64_or("q_max", packet.center + spread),
        reversal: match s.str_or("reversal", "polarity") {
            "polarity" => Reversal::Polarity,
            "geometry" => Reversal::Geometry,
            other => {
                s.fail("reversal", format!("expected polarity or geometry, got `{other}`"));
                Reversal::Polarity
            }
        },
    };
    if contextuality.q_max < contextuality.q_min {
        s.fail("q_max", "must be >= q_min".into());
    }

    // [pointer] and [outcome.<label>]
    let mut s = section(&raw, "pointer", &mut errors);
    let dim = s.at_least("dim", 2, 1);
    let random_outcomes = s.at_least("outcomes", dim.min(2), 1);
    if random_outcomes > dim {
        s.fail("outcomes", format!("cannot exceed dim = {dim}"));
    }
    let re = s.list::<f64>("state_re", "numbers");
    let im = s.list::<f64>("state_im", "numbers");
    let state = match (re, im) {
        (None, None) => None,
        (re, im) => {
            let re = re.unwrap_or_else(|| vec![0.0; dim]);
            let im = im.unwrap_or_else(|| vec![0.0; dim]);
            if re.len() != dim || im.len() != dim {
                s.fail("state_re", format!("state components must have length dim = {dim}"));
                None
            } else {
                let v: Vec<Complex64> = re.iter().zip(&im).map(|(&r, &i)| Complex64::new(r, i)).collect();
                let norm: f64 = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                if norm == 0.0 {
                    s.fail("state_re", "state must be nonzero".into());
                }
                Some(v)
            }
        }
    };
    let mut outcomes = Vec::new();
    let mut seen = vec![None; dim];
    for label in &raw.outcome_order {
        let name = format!("outcome.{label}");
        let mut s = section(&raw, &name, &mut errors);
        let basis = match s.list::<usize>("basis", "basis indices") {
            Some(b) => b,
            None => {
                if !s.has("basis") {
                    s.fail("basis", "missing required key".into());
                }
                Vec::new()
            }
        };
        for &i in &basis {
            if i >= dim {
                s.fail("basis", format!("index {i} out of range for dim = {dim}"));
            } else if let Some(prev) = &seen[i] {
                s.fail("basis", format!("index {i} already used by outcome `{prev}`"));
            } else {
                seen[i] = Some(label.clone());
            }
        }
        if !s.has("calibration") {
            s.fail("calibration", "missing required key".into());
        }
        let calibration = s.f64_or("calibration", 0.0);
        outcomes.push(PointerOutcomeSpec {
            label: label.clone(),
            basis,
            calibration,
        });
    }
    if !outcomes.is_empty() && seen.iter().any(Option::is_none) {
        let missing: Vec<String> = seen
            .iter()
            .enumerate()
            .filter(|(_, s)| s.is_none())
            .map(|(i, _)| i.to_string())
            .collect();
        errors.push(err(
            None,
            "outcome",
            format!("outcome bases must cover every index 0..{dim}; missing {}", missing.join(", ")),
        ));
    }
    let pointer = PointerParams {
        dim,
        state,
        outcomes,
        random_outcomes,
    };

    if !errors.is_empty() {
        errors.sort_by_key(|e| (e.line.unwrap_or(usize::MAX), e.field.clone()));
        return Err(errors);
    }
    Ok(RunConfig {
        command: command.expect("checked above"),
        seed,
        n_samples,
        formats,
        grid: grid.expect("checked above"),
        packet,
        spin,
        setup,
        propagate,
        contextuality,
        pointer,
    })
}

fn complex_json(z: Complex64) -> Value {
    json!([z.re, z.im])
}

impl RunConfig {
    /// Parameter echo for the JSON summary. Execution details that do not
    /// affect results (thread count, output paths) are excluded.
    pub fn params_json(&self) -> Value {
        let mut p = json!({
            "n_samples": self.n_samples,
            "grid": { "n": self.grid.n(), "x_min": self.grid.x_min(), "x_max": self.grid.x_max() },
            "packet": { "center": self.packet.center, "sigma": self.packet.sigma, "k": self.packet.k },
            "spin": { "a": complex_json(self.spin.0), "b": complex_json(self.spin.1) },
        });
        let obj = p.as_object_mut().expect("object");
        match self.command {
            Command::Propagate | Command::Trajectories => {
                let pr = &self.propagate;
                let (potential, omega) = match pr.potential {
                    Potential::Free => ("free", None),
                    Potential::Harmonic { omega } => ("harmonic", Some(omega)),
                };
                obj.insert(
                    "propagate".into(),
                    json!({
                        "t_total": pr.t_total, "dt": pr.dt, "record_every": pr.record_every,
                        "dt_traj": pr.dt_traj, "potential": potential, "omega": omega,
                    }),
                );
            }
            Command::BornCheck | Command::SternGerlach | Command::Contextuality => {
                let s = &self.setup;
                obj.insert(
                    "setup".into(),
                    json!({
                        "b0": s.b0, "b_grad": s.b_grad, "mu": s.mu, "tau": s.tau, "t_drift": s.t_drift,
                        "z_det": s.z_det,
                        "polarity": match s.polarity { Polarity::Normal => "normal", Polarity::Reversed => "reversed" },
                        "geometry": if s.geometry_reversed { "reversed" } else { "normal" },
                        "calibration_up": s.calibration_up, "calibration_down": s.calibration_down,
                        "dt": s.numerics.dt, "record_every": s.numerics.record_every, "dt_traj": s.numerics.dt_traj,
                    }),
                );
                if self.command == Command::Contextuality {
                    let c = &self.contextuality;
                    obj.insert(
                        "contextuality".into(),
                        json!({ "q_points": c.q_points, "q_min": c.q_min, "q_max": c.q_max, "reversal": c.reversal }),
                    );
                }
            }
            Command::PointerModel => {
                let pm = &self.pointer;
                let outcomes: Vec<Value> = pm
                    .outcomes
                    .iter()
                    .map(|o| json!({ "label": o.label, "basis": o.basis, "calibration": o.calibration }))
                    .collect();
                obj.insert(
                    "pointer".into(),
                    json!({
                        "dim": pm.dim,
                        "state": pm.state.as_ref().map(|v| v.iter().map(|&z| complex_json(z)).collect::<Vec<_>>()),
                        "outcomes": outcomes,
                        "random_outcomes": pm.random_outcomes,
                    }),
                );
            }
            Command::Nogo => {
                obj.clear();
                obj.insert("grid".into(), json!("peres-mermin"));
            }
        }
        p
    }
}
