//! Executes a validated [`RunConfig`] and writes its artifacts.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Map, Value};
use thiserror::Error;

use super::config::{Command, Potential, RunConfig};
use crate::equilibrium::{ks_band, ks_distance, sample, SamplingError};
use crate::formalism::{
    self, CMatrix, CVector, ExperimentOutcome, ExperimentSpec, FormalismError, StateVec,
};
use crate::grid::{gaussian_packet, Configuration, GridError};
use crate::guidance::{GuidanceError, GuidanceField, TrajectoryEnsemble};
use crate::nogo::{self, NogoError};
use crate::propagator::{evolve, HamiltonianSpec, PropagationError};
use crate::stern_gerlach::{contextuality_demo, no_crossing_check, PreparedExperiment, SgError};
use crate::VERSION;

/// Version of the CSV layouts, written into each header comment.
pub const CSV_SCHEMA: u32 = 1;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Propagation(#[from] PropagationError),
    #[error(transparent)]
    Guidance(#[from] GuidanceError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error(transparent)]
    SternGerlach(#[from] SgError),
    #[error(transparent)]
    Formalism(#[from] FormalismError),
    #[error(transparent)]
    Nogo(#[from] NogoError),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

impl RunError {
    pub fn kind(&self) -> &'static str {
        match self {
            RunError::Grid(_) => "grid",
            RunError::Propagation(_) => "propagation",
            RunError::Guidance(_) => "guidance",
            RunError::Sampling(_) => "sampling",
            RunError::SternGerlach(_) => "stern-gerlach",
            RunError::Formalism(_) => "formalism",
            RunError::Nogo(_) => "nogo",
            RunError::Io { .. } => "io",
        }
    }
}

/// JSON summary under construction.
struct Summary {
    command: Command,
    params: Value,
    seed: u64,
    theoretical: Map<String, Value>,
    empirical: Map<String, Value>,
    stderr: Map<String, Value>,
    checks: Map<String, Value>,
}

impl Summary {
    fn new(config: &RunConfig) -> Self {
        Self {
            command: config.command,
            params: config.params_json(),
            seed: config.seed,
            theoretical: Map::new(),
            empirical: Map::new(),
            stderr: Map::new(),
            checks: Map::new(),
        }
    }

    fn theory(&mut self, name: &str, value: impl Serialize, eq: &str) {
        self.theoretical.insert(name.into(), json!({ "value": value, "eq": eq }));
    }

    fn measured(&mut self, name: &str, value: impl Serialize) {
        self.empirical.insert(name.into(), json!(value));
    }

    fn stderr(&mut self, name: &str, value: f64) {
        self.stderr.insert(name.into(), json!(value));
    }

    fn check(&mut self, name: &str, ok: bool) {
        self.checks.insert(name.into(), json!(ok));
    }

    fn all_passed(&self) -> bool {
        self.checks.values().all(|v| v.as_bool() == Some(true))
    }

    fn into_json(self) -> Value {
        let all = self.all_passed();
        let mut checks = self.checks;
        checks.insert("all".into(), json!(all));
        json!({
            "command": self.command.name(),
            "params": self.params,
            "seed": self.seed,
            "theoretical": self.theoretical,
            "empirical": self.empirical,
            "stderr_estimates": self.stderr,
            "checks_passed": checks,
            "version": VERSION,
        })
    }
}

/// A CSV table with a versioned comment header.
struct Csv {
    text: String,
}

impl Csv {
    fn new(schema: &str, columns: &[&str]) -> Self {
        let mut text = format!("# bohmlab {schema} schema v{CSV_SCHEMA} (bohmlab {VERSION})\n");
        text.push_str(&columns.join(","));
        text.push('\n');
        Self { text }
    }

    fn row(&mut self, cells: &[String]) {
        self.text.push_str(&cells.join(","));
        self.text.push('\n');
    }
}

fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x}")
    } else {
        String::new()
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

struct Outputs {
    files: Vec<(String, Vec<u8>)>,
}

impl Outputs {
    fn csv(&mut self, name: &str, csv: Csv) {
        self.files.push((name.into(), csv.text.into_bytes()));
    }

    fn text(&mut self, name: &str, text: String) {
        self.files.push((name.into(), text.into_bytes()));
    }

    fn json(&mut self, name: &str, value: &Value) {
        let mut s = serde_json::to_string_pretty(value).expect("JSON values serialize");
        s.push('\n');
        self.files.push((name.into(), s.into_bytes()));
    }
}

/// Result of a successful run.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub summary: Value,
    pub files: Vec<PathBuf>,
    pub checks_passed: bool,
}

fn ensemble_csv(ensemble: &TrajectoryEnsemble, calibrate: impl Fn(&crate::stern_gerlach::Outcome) -> Option<f64>) -> Csv {
    let mut csv = Csv::new("ensemble", &["index", "q0", "q_final", "outcome", "lambda"]);
    for (i, t) in ensemble.trajectories.iter().enumerate() {
        let (label, lambda) = match &t.outcome {
            Some(o) => (o.label().to_string(), opt(calibrate(o))),
            None => ("none".to_string(), String::new()),
        };
        csv.row(&[i.to_string(), num(t.q0()), num(t.q_final()), label, lambda]);
    }
    csv
}

fn density_csv(psi: &crate::grid::SpinorField) -> Csv {
    let mut csv = Csv::new("density", &["x", "rho", "rho_up", "rho_down"]);
    for (j, x) in psi.grid().points().enumerate() {
        let (u, d) = (psi.comp1()[j].norm_sqr(), psi.comp2()[j].norm_sqr());
        csv.row(&[num(x), num(u + d), num(u), num(d)]);
    }
    csv
}

fn hamiltonian(config: &RunConfig) -> HamiltonianSpec {
    match config.propagate.potential {
        Potential::Free => HamiltonianSpec::free(&config.grid),
        Potential::Harmonic { omega } => HamiltonianSpec::with_potential(&config.grid, |x| 0.5 * omega * omega * x * x),
    }
}

fn free_width(sigma0: f64, t: f64) -> f64 {
    sigma0 * (1.0 + (t / (2.0 * sigma0 * sigma0)).powi(2)).sqrt()
}

fn run_propagate(config: &RunConfig, s: &mut Summary, out: &mut Outputs) -> Result<(), RunError> {
    let p = &config.propagate;
    let (a, b) = config.spin;
    let psi0 = gaussian_packet(&config.grid, config.packet.center, config.packet.sigma, config.packet.k, a, b)?;
    let h = hamiltonian(config);
    let timeline = evolve(&psi0, &h, p.t_total, p.dt, p.record_every)?;
    let e0 = h.energy(&psi0)?;
    let mut csv = Csv::new("observables", &["t", "norm", "mean_x", "width", "energy", "p_up", "p_down"]);
    let mut max_drift: f64 = 0.0;
    let mut max_energy_dev: f64 = 0.0;
    for (i, f) in timeline.frames().iter().enumerate() {
        let e = h.energy(f)?;
        let (pu, pd) = f.spin_populations();
        max_drift = max_drift.max((f.norm() - psi0.norm()).abs());
        max_energy_dev = max_energy_dev.max((e - e0).abs());
        csv.row(&[
            num(timeline.time(i)),
            num(f.norm()),
            num(f.mean_position()),
            num(f.position_width()),
            num(e),
            num(pu),
            num(pd),
        ]);
    }
    out.csv("observables.csv", csv);
    out.csv("final_density.csv", density_csv(timeline.last()));

    let last = timeline.last();
    s.theory("norm", 1.0, "eq:unitary");
    s.measured("norm_final", last.norm());
    s.measured("norm_drift_max", max_drift);
    s.check("norm_drift", max_drift <= 1e-10);
    s.theory("energy", e0, "eq:se");
    s.measured("energy_deviation_max", max_energy_dev);
    s.measured("width_final", last.position_width());
    s.measured("boundary_mass_max", timeline.boundary_mass_max());
    if config.propagate.potential == Potential::Free {
        let w = free_width(config.packet.sigma, timeline.t_end());
        s.theory("width_final", w, "eq:free-width");
        s.check("free_width", (last.position_width() - w).abs() <= 0.01 * w);
    }
    Ok(())
}

fn run_trajectories(config: &RunConfig, s: &mut Summary, out: &mut Outputs) -> Result<(), RunError> {
    let p = &config.propagate;
    let (a, b) = config.spin;
    let psi0 = gaussian_packet(&config.grid, config.packet.center, config.packet.sigma, config.packet.k, a, b)?;
    let timeline = evolve(&psi0, &hamiltonian(config), p.t_total, p.dt, p.record_every)?;
    let field = GuidanceField::from_timeline(&timeline)?;
    let starts: Vec<f64> = sample(&psi0, config.n_samples, config.seed)?.iter().map(|c| c.q).collect();
    let trajectories = field.integrate_all(&starts, p.dt_traj)?;
    let ensemble = TrajectoryEnsemble {
        seed: config.seed,
        trajectories,
        mirror_plane: None,
    };
    out.csv("ensemble.csv", ensemble_csv(&ensemble, |_| None));
    let mut paths = Csv::new("paths", &["index", "t", "q"]);
    for (i, t) in ensemble.trajectories.iter().take(16).enumerate() {
        for (time, q) in t.times.iter().zip(&t.positions) {
            paths.row(&[i.to_string(), num(*time), num(*q)]);
        }
    }
    out.csv("paths.csv", paths);

    let finals: Vec<Configuration> = ensemble.final_positions().into_iter().map(Configuration::new).collect();
    let ks = ks_distance(&finals, timeline.last());
    let band = ks_band(config.n_samples);
    s.theory("ks_band", band, "eq:equivariance");
    s.measured("ks_distance", ks);
    s.check("equivariance", ks <= band);
    let q: Vec<f64> = ensemble.final_positions();
    let (mean, se) = crate::equilibrium::mean_and_stderr(&q);
    s.theory("mean_position_final", timeline.last().mean_position(), "eq:equivariance");
    s.measured("mean_position_final", mean);
    s.stderr("mean_position_final", se);
    s.measured("boundary_mass_max", timeline.boundary_mass_max());
    Ok(())
}

fn run_stern_gerlach(config: &RunConfig, s: &mut Summary, out: &mut Outputs, full: bool) -> Result<(), RunError> {
    let (a, b) = config.spin;
    let exp = PreparedExperiment::new(&config.setup, a, b, &config.packet)?;
    let run = exp.run(config.n_samples, config.seed)?;
    let st = &run.statistics;
    out.csv("ensemble.csv", ensemble_csv(&run.ensemble, |o| config.setup.calibration(*o)));

    let n = st.n as f64;
    s.theory("p_up", st.p_up, "eq:prob");
    s.theory("p_down", st.p_down, "eq:prob");
    s.measured("freq_up", st.freq_up);
    s.measured("freq_down", st.freq_down);
    s.measured("freq_null", st.freq_null);
    s.measured("count_up", st.count_up);
    s.measured("count_down", st.count_down);
    s.measured("count_null", st.count_null);
    s.stderr("freq_up", (st.p_up * (1.0 - st.p_up) / n).sqrt());
    s.stderr("freq_down", (st.p_down * (1.0 - st.p_down) / n).sqrt());
    s.check("born_3sigma", st.born_agrees());
    s.measured("branch_overlap", st.branch_overlap);
    s.measured("boundary_mass_max", st.boundary_mass_max);
    if full {
        s.theory("expectation", st.expectation, "eq:ev");
        s.measured("calibrated_mean", st.calibrated_mean);
        s.stderr("calibrated_mean", st.calibrated_stderr);
        s.check("mean_3se", st.mean_agrees());

        let finals: Vec<Configuration> = run.ensemble.final_positions().into_iter().map(Configuration::new).collect();
        let ks = ks_distance(&finals, exp.final_field());
        s.theory("ks_band", ks_band(config.n_samples), "eq:equivariance");
        s.measured("ks_distance", ks);
        s.check("equivariance", ks <= ks_band(config.n_samples));
        if let Some(plane) = exp.mirror_plane() {
            let ok = no_crossing_check(&run.ensemble, plane)?;
            s.measured("mirror_plane", plane);
            s.measured("crossings", crate::stern_gerlach::crossing_count(&run.ensemble, plane));
            s.check("no_crossing", ok);
        }
        out.csv("final_density.csv", density_csv(exp.final_field()));
    }
    Ok(())
}

fn run_contextuality(config: &RunConfig, s: &mut Summary, out: &mut Outputs) -> Result<(), RunError> {
    let c = &config.contextuality;
    let q_grid: Vec<f64> = if c.q_points == 1 {
        vec![0.5 * (c.q_min + c.q_max)]
    } else {
        (0..c.q_points)
            .map(|i| c.q_min + (c.q_max - c.q_min) * i as f64 / (c.q_points - 1) as f64)
            .collect()
    };
    let (a, b) = config.spin;
    let report = contextuality_demo(
        &config.setup,
        a,
        b,
        &config.packet,
        &q_grid,
        config.n_samples,
        config.seed,
        c.reversal,
    )?;
    let mut csv = Csv::new("outcome-map", &["index", "q0", "x_original", "x_reversed"]);
    for (i, ((q, x), y)) in report.q_grid.iter().zip(&report.x_original).zip(&report.x_reversed).enumerate() {
        csv.row(&[i.to_string(), num(*q), opt(*x), opt(*y)]);
    }
    out.csv("outcome_map.csv", csv);

    let (so, sr) = (&report.statistics_original, &report.statistics_reversed);
    let n = so.n as f64;
    s.theory("p_up_original", so.p_up, "eq:prob");
    s.theory("p_up_reversed", sr.p_up, "eq:prob");
    s.measured("freq_up_original", so.freq_up);
    s.measured("freq_up_reversed", sr.freq_up);
    s.stderr("freq_up_original", (so.p_up * (1.0 - so.p_up) / n).sqrt());
    s.stderr("freq_up_reversed", (sr.p_up * (1.0 - sr.p_up) / n).sqrt());
    s.measured("reversed_points", report.reversed_points);
    s.measured("mismatched_points", report.mismatched_points);
    s.measured("null_points", report.null_points);
    s.check("same_operator", report.same_operator);
    s.check("pointwise_reversed", report.pointwise_reversed);
    s.check("born_3sigma", report.statistics_agree_with_born);
    s.measured("summary", &report.summary);
    Ok(())
}

fn pointer_inputs(config: &RunConfig) -> Result<(StateVec, ExperimentSpec), RunError> {
    let pm = &config.pointer;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let spec = if pm.outcomes.is_empty() {
        formalism::random_experiment(&mut rng, pm.dim, pm.random_outcomes)
    } else {
        let outcomes = pm
            .outcomes
            .iter()
            .map(|o| {
                let mut p = CMatrix::zeros(pm.dim, pm.dim);
                for &i in &o.basis {
                    p[(i, i)] = Complex64::new(1.0, 0.0);
                }
                ExperimentOutcome::new(o.label.clone(), p, o.calibration)
            })
            .collect();
        ExperimentSpec::new(pm.dim, outcomes)?
    };
    let psi = match &pm.state {
        Some(v) => StateVec::normalized(CVector::from_vec(v.clone()))?,
        None => formalism::random_state(&mut rng, pm.dim),
    };
    Ok((psi, spec))
}

fn run_pointer(config: &RunConfig, s: &mut Summary, out: &mut Outputs) -> Result<(), RunError> {
    let (psi, spec) = pointer_inputs(config)?;
    let born = formalism::born_probabilities(&psi, &spec)?;
    let result = formalism::pointer_model(&psi, &spec)?;
    let mut csv = Csv::new("marginals", &["index", "label", "calibration", "born", "marginal", "repeat_defect"]);
    let mut max_dev: f64 = 0.0;
    let mut max_repeat: f64 = 0.0;
    for (i, o) in spec.outcomes().iter().enumerate() {
        let repeat = match formalism::collapse(&psi, &spec, i)? {
            Some(post) => 1.0 - formalism::born_probabilities(&post, &spec)?[i],
            None => 0.0,
        };
        max_dev = max_dev.max((born[i] - result.marginals[i]).abs());
        max_repeat = max_repeat.max(repeat.abs());
        csv.row(&[
            i.to_string(),
            o.label.clone(),
            num(o.calibration),
            num(born[i]),
            num(result.marginals[i]),
            num(repeat),
        ]);
    }
    out.csv("marginals.csv", csv);
    s.theory("born", &born, "eq:prob");
    s.measured("pointer_marginals", &result.marginals);
    s.measured("max_marginal_deviation", max_dev);
    s.measured("ready_weight", result.ready_weight);
    s.theory("expectation", formalism::expectation(&psi, &spec)?, "eq:ev");
    let a = formalism::build_observable(&spec);
    s.measured("quadratic_form", a.quadratic_form(&psi).re);
    s.measured("max_repeat_defect", max_repeat);
    s.check("marginals_match_born", max_dev <= 1e-12);
    s.check("reproducible", max_repeat <= 1e-12);
    s.check(
        "expectation_identity",
        (formalism::expectation(&psi, &spec)? - a.quadratic_form(&psi).re).abs() <= 1e-12,
    );
    Ok(())
}

fn run_nogo(config: &RunConfig, s: &mut Summary, out: &mut Outputs) -> Result<(), RunError> {
    let grid = nogo::peres_mermin();
    let report = nogo::verify_grid(&grid);
    let search = nogo::assignment_search(&grid);
    let cert = nogo::contextual_witness(&grid)?;
    let mut csv = Csv::new("constraints", &["name", "cells", "target", "product_sign", "commuting", "ok"]);
    for c in &report.constraints {
        csv.row(&[
            c.name.clone(),
            c.cells.join(" * "),
            c.target.to_string(),
            c.product_sign.map(|v| v.to_string()).unwrap_or_default(),
            c.commuting.to_string(),
            (c.commuting && c.sign_matches).to_string(),
        ]);
    }
    if config.formats.csv {
        out.csv("constraints.csv", csv);
    }
    out.text("certificate.txt", cert.text.clone());
    if config.formats.json {
        out.json("certificate.json", &serde_json::to_value(&cert).expect("certificate serializes"));
    }
    s.theory("consistent_assignments", 0, "eq:no-go");
    s.theory("target_parity", cert.target_parity, "eq:no-go");
    s.measured("examined", search.examined);
    s.measured("consistent_assignments", search.consistent);
    s.measured("assignment_parity", cert.assignment_parity);
    s.check("grid_verified", report.passed);
    s.check("exhaustive", search.examined == 512);
    s.check("no_consistent_assignment", search.consistent == 0);
    Ok(())
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Runs the configured command and writes its outputs into `out_dir`. On
/// failure every file this run created is removed. `threads` is recorded in
/// `run.log` only.
pub fn run(config: &RunConfig, out_dir: &Path, threads: Option<usize>) -> Result<RunReport, RunError> {
    let started = Instant::now();
    let mut summary = Summary::new(config);
    let mut out = Outputs { files: Vec::new() };
    match config.command {
        Command::Propagate => run_propagate(config, &mut summary, &mut out)?,
        Command::Trajectories => run_trajectories(config, &mut summary, &mut out)?,
        Command::BornCheck => run_stern_gerlach(config, &mut summary, &mut out, false)?,
        Command::SternGerlach => run_stern_gerlach(config, &mut summary, &mut out, true)?,
        Command::Contextuality => run_contextuality(config, &mut summary, &mut out)?,
        Command::PointerModel => run_pointer(config, &mut summary, &mut out)?,
        Command::Nogo => run_nogo(config, &mut summary, &mut out)?,
    }
    let checks_passed = summary.all_passed();
    let summary = summary.into_json();

    let keep: Vec<(String, Vec<u8>)> = out
        .files
        .into_iter()
        .filter(|(name, _)| config.formats.csv || !name.ends_with(".csv"))
        .collect();
    let mut files: Vec<(String, Vec<u8>)> = keep;
    if config.formats.json {
        let mut s = serde_json::to_string_pretty(&summary).expect("JSON values serialize");
        s.push('\n');
        files.push(("summary.json".into(), s.into_bytes()));
    }
    let stamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let mut log = String::new();
    let _ = writeln!(log, "timestamp_unix = {stamp}");
    let _ = writeln!(log, "command = {}", config.command.name());
    let _ = writeln!(log, "seed = {}", config.seed);
    let _ = writeln!(log, "threads = {}", threads.map(|t| t.to_string()).unwrap_or_else(|| "auto".into()));
    let _ = writeln!(log, "elapsed_s = {:.3}", started.elapsed().as_secs_f64());
    let _ = writeln!(log, "checks_passed = {checks_passed}");
    let _ = writeln!(log, "version = {VERSION}");
    files.push(("run.log".into(), log.into_bytes()));

    let mut created_dir = false;
    if !out_dir.exists() {
        fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
        created_dir = true;
    }
    let mut written = Vec::new();
    for (name, bytes) in &files {
        let path = out_dir.join(name);
        if let Err(e) = fs::write(&path, bytes) {
            for p in &written {
                let _ = fs::remove_file(p);
            }
            if created_dir {
                let _ = fs::remove_dir(out_dir);
            }
            return Err(io_err(&path)(e));
        }
        written.push(path);
    }
    Ok(RunReport {
        summary,
        files: written,
        checks_passed,
    })
}
