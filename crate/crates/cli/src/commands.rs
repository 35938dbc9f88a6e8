use std::fmt;
use std::path::Path;

use anyhow::anyhow;
use gw_extinct::figures::{sequence_table, surface_table, FigureId, SequenceRow, SurfaceRow};
use gw_extinct::model_io::load_model;
use gw_extinct::sim::{
    attach_solver_column, check_path_invariants, estimate_extinction, seed_statistics,
    simulate_paths, CoupledPath, McTarget, SeedCount, SimConfig,
};
use gw_extinct::solver::{extinction_sequence, truncated_extinction, Method, SolverConfig};
use gw_extinct::spectral::{criterion_scan, ScanOptions};
use gw_extinct::truncation::{ReplacementDistribution, TruncationMode};
use gw_extinct::{ModelError, ProgenyModel, SimError, SolveError, SpectralError};

use crate::output::{num, opt, writer, CsvOut};
use crate::{
    MethodArg, ReproduceArgs, SequenceArgs, SimulateArgs, SolveArgs, SolverArgs, SpectralArgs,
};

pub const EXIT_OTHER: u8 = 1;
pub const EXIT_NONCONVERGENCE: u8 = 2;
pub const EXIT_CONFIG: u8 = 3;

#[derive(Debug)]
pub enum Failure {
    Config(anyhow::Error),
    NonConvergence(anyhow::Error),
    Other(anyhow::Error),
}

impl Failure {
    pub fn config(msg: impl Into<String>) -> Self {
        Failure::Config(anyhow!(msg.into()))
    }

    pub fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => EXIT_CONFIG,
            Failure::NonConvergence(_) => EXIT_NONCONVERGENCE,
            Failure::Other(_) => EXIT_OTHER,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Config(e) => write!(f, "invalid configuration: {e:#}"),
            Failure::NonConvergence(e) => write!(f, "no convergence: {e:#}"),
            Failure::Other(e) => write!(f, "{e:#}"),
        }
    }
}

impl From<ModelError> for Failure {
    fn from(e: ModelError) -> Self {
        Failure::Config(e.into())
    }
}

impl From<SolveError> for Failure {
    fn from(e: SolveError) -> Self {
        match e {
            SolveError::Model(m) => m.into(),
            SolveError::Dimension { .. } => Failure::Other(e.into()),
            other => Failure::NonConvergence(other.into()),
        }
    }
}

impl From<SpectralError> for Failure {
    fn from(e: SpectralError) -> Self {
        match e {
            SpectralError::Model(m) => m.into(),
            SpectralError::NonConvergence { .. } => Failure::NonConvergence(e.into()),
            SpectralError::Unsupported(_) => Failure::Config(e.into()),
            other => Failure::Other(other.into()),
        }
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Model(m) => m.into(),
            SimError::Solve(s) => s.into(),
            SimError::Config(_) | SimError::UnknownLevel(_) => Failure::Config(e.into()),
            other => Failure::Other(other.into()),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Other(e)
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Other(e.into())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Other(e.into())
    }
}

fn positive(name: &str, v: f64) -> Result<f64, Failure> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(Failure::config(format!(
            "--{name} must be positive, got {v}"
        )))
    }
}

fn solver_config(a: &SolverArgs) -> Result<SolverConfig, Failure> {
    Ok(SolverConfig {
        inner_tol: positive("inner-tol", a.inner_tol)?,
        method: match a.method {
            MethodArg::Newton => Method::Newton,
            MethodArg::Fi => Method::FunctionalIteration,
        },
        max_inner_iter: a.max_iter,
        verify_minimality: false,
        ..SolverConfig::default()
    })
}

fn level_at_least_first(model: &dyn ProgenyModel, name: &str, k: u32) -> Result<(), Failure> {
    if k < model.first_type() {
        return Err(Failure::config(format!(
            "--{name} {k} is below the first type {} of {}",
            model.first_type(),
            model.name()
        )));
    }
    Ok(())
}

fn finish(mut w: CsvOut) -> Result<(), Failure> {
    w.flush()?;
    Ok(())
}

pub fn solve(a: SolveArgs) -> Result<(), Failure> {
    let model = load_model(&a.model.model)?;
    let mode = TruncationMode::parse(&a.mode.mode, a.mode.alpha.as_deref())?;
    let cfg = solver_config(&a.solver)?;
    level_at_least_first(model.as_ref(), "k", a.k)?;
    let out = truncated_extinction(model.as_ref(), a.k, &mode, &cfg)?;
    let mut w = writer(a.out.as_deref())?;
    w.write_record(["type", "q"])?;
    for (j, x) in out.x.iter().enumerate() {
        w.write_record([(model.first_type() + j as u32).to_string(), num(*x)])?;
    }
    finish(w)
}

pub fn sequence(a: SequenceArgs) -> Result<(), Failure> {
    let model = load_model(&a.model.model)?;
    let mode = TruncationMode::parse(&a.mode.mode, a.mode.alpha.as_deref())?;
    if a.display == 0 || a.k_stride == 0 {
        return Err(Failure::config("--display and --k-stride must be positive"));
    }
    let first = model.first_type();
    let target = a.ty.unwrap_or(first);
    level_at_least_first(model.as_ref(), "type", target)?;
    if a.max_k < target {
        return Err(Failure::config(format!(
            "--max-k {} is below the tracked type {target}",
            a.max_k
        )));
    }
    let cfg = SolverConfig {
        outer_eps: positive("eps", a.eps)?,
        max_k: a.max_k,
        min_k: a.min_k,
        k_stride: a.k_stride,
        warm_start: a.warm_start,
        verify_minimality: a.verify_minimality,
        record_width: a.display,
        ..solver_config(&a.solver)?
    };
    let report = extinction_sequence(model.as_ref(), target, &mode, &cfg)?;

    let mut w = writer(a.out.as_deref())?;
    let mut header = vec!["k".to_string(), "mode".to_string()];
    header.extend((0..a.display).map(|j| format!("x_{}", first + j as u32)));
    header.push("iterations".into());
    w.write_record(&header)?;
    let mode_label = mode.to_string();
    for r in &report.records {
        let mut row = vec![r.k.to_string(), mode_label.clone()];
        row.extend((0..a.display).map(|j| r.x.get(j).map(|v| num(*v)).unwrap_or_default()));
        row.push(r.iterations.to_string());
        w.write_record(&row)?;
    }
    finish(w)?;

    let last = report.last();
    if report.converged {
        eprintln!(
            "type {target}: {mode_label} sequence settled at k={} with value {}",
            last.k, last.value
        );
        Ok(())
    } else if let Some(p) = report.parity {
        eprintln!(
            "type {target}: {mode_label} sequence oscillates; odd levels -> {}, even levels -> {} (k={})",
            p.odd, p.even, last.k
        );
        Ok(())
    } else {
        Err(Failure::NonConvergence(anyhow!(
            "{mode_label} sequence for type {target} did not settle by k={} (last value {})",
            last.k,
            last.value
        )))
    }
}

pub fn spectral(a: SpectralArgs) -> Result<(), Failure> {
    let model = load_model(&a.model.model)?;
    let alpha = ReplacementDistribution::parse(&a.alpha)?;
    level_at_least_first(model.as_ref(), "k-max", a.k_max)?;
    let opts = ScanOptions {
        k_min: a.k_min,
        k_max: a.k_max,
        stride: a.stride,
        tol: positive("tol", a.tol)?,
        window: a.window,
        positive_extinction_declared: a.positive_extinction,
    };
    let report = criterion_scan(model.as_ref(), &alpha, &opts)?;
    let mut w = writer(a.out.as_deref())?;
    w.write_record(["k", "rho_tilde", "rho_bar", "embedded_mean_k"])?;
    for r in &report.records {
        w.write_record([
            r.k.to_string(),
            num(r.rho_tilde),
            num(r.rho_bar),
            num(r.embedded_mean_k),
        ])?;
    }
    finish(w)?;
    eprintln!(
        "sterile Perron root limit estimate: {}",
        report.rho_tilde_limit
    );
    eprintln!(
        "augmented Perron roots over the last {} levels: liminf {}, limsup {}",
        opts.window, report.rho_bar_liminf, report.rho_bar_limsup
    );
    eprintln!(
        "sterile truncations die out surely: {}",
        report.q_tilde_one_indicated
    );
    eprintln!(
        "augmented extinction probabilities tend to one: {}",
        report.q_one_certified
    );
    for warning in &report.warnings {
        eprintln!("warning: {warning}");
    }
    Ok(())
}

fn write_paths(path: &Path, paths: &[CoupledPath]) -> Result<(), Failure> {
    let mut w = writer(Some(path))?;
    w.write_record([
        "path",
        "k",
        "sterile",
        "immortal",
        "augmented",
        "seeds",
        "tau",
        "catastrophe",
        "global",
    ])?;
    for p in paths {
        let global = p.global.map(|g| g.label().to_string()).unwrap_or_default();
        for l in &p.levels {
            let seeds = match l.seeds {
                SeedCount::Known(s) => s.to_string(),
                SeedCount::Unknown => "unknown".into(),
            };
            w.write_record([
                p.path.to_string(),
                l.k.to_string(),
                l.sterile.label().to_string(),
                l.immortal.label().to_string(),
                l.augmented.label().to_string(),
                seeds,
                opt(l.tau),
                opt(l.catastrophe),
                global.clone(),
            ])?;
        }
    }
    finish(w)
}

pub fn simulate(a: SimulateArgs) -> Result<(), Failure> {
    let model = load_model(&a.model.model)?;
    let initial = a.ty.unwrap_or(model.first_type());
    let cfg = SimConfig {
        max_generations: a.max_gen,
        max_population: a.max_pop,
        paths: a.paths,
        seed: a.seed,
        levels: a.k.clone(),
        alpha: ReplacementDistribution::parse(&a.alpha)?,
        track_global: a.global,
        record_generations: false,
    };
    let paths = simulate_paths(model.clone(), initial, &cfg)?;

    let mut targets = Vec::new();
    if a.global {
        targets.push(("global", McTarget::Global));
    }
    for &k in &a.k {
        targets.push(("sterile", McTarget::Sterile(k)));
        targets.push(("immortal", McTarget::Immortal(k)));
        targets.push(("augmented", McTarget::Augmented(k)));
    }
    let mut w = writer(a.out.as_deref())?;
    w.write_record([
        "process",
        "k",
        "paths",
        "extinct",
        "estimate",
        "stderr",
        "censored_fraction",
        "unresolved_fraction",
    ])?;
    for (name, target) in targets {
        let est = estimate_extinction(&paths, target)?;
        let k = match target {
            McTarget::Global => String::new(),
            McTarget::Sterile(k) | McTarget::Immortal(k) | McTarget::Augmented(k) => k.to_string(),
        };
        w.write_record([
            name.to_string(),
            k,
            est.paths.to_string(),
            est.extinct.to_string(),
            num(est.estimate),
            num(est.stderr),
            num(est.censored_fraction),
            num(est.unresolved_fraction),
        ])?;
    }
    finish(w)?;

    if let Some(path) = &a.seeds_out {
        let mut rows = seed_statistics(&paths, a.seed_bound)?;
        if a.solver_column {
            attach_solver_column(&mut rows, model.as_ref(), initial, &SolverConfig::default())?;
        }
        let mut w = writer(Some(path))?;
        w.write_record([
            "k",
            "resolved",
            "excluded",
            "p_zero",
            "p_zero_stderr",
            "p_one",
            "p_mid",
            "p_big",
            "solver_p_zero",
        ])?;
        for r in rows {
            w.write_record([
                r.k.to_string(),
                r.resolved.to_string(),
                r.excluded.to_string(),
                num(r.p_zero),
                num(r.p_zero_stderr),
                num(r.p_one),
                num(r.p_mid),
                num(r.p_big),
                r.solver_p_zero.map(num).unwrap_or_default(),
            ])?;
        }
        finish(w)?;
    }
    if let Some(path) = &a.paths_out {
        write_paths(path, &paths)?;
    }

    let violations: Vec<String> = paths
        .iter()
        .flat_map(|p| {
            check_path_invariants(p)
                .into_iter()
                .map(move |v| format!("path {}: {v}", p.path))
        })
        .collect();
    let censored = paths.iter().filter(|p| p.censored()).count();
    eprintln!("{} paths, {censored} with a censored process", paths.len());
    if let Some(first) = violations.first() {
        return Err(Failure::Other(anyhow!(
            "{} pathwise violations, first: {first}",
            violations.len()
        )));
    }
    Ok(())
}

fn write_sequence(path: &Path, rows: &[SequenceRow]) -> Result<usize, Failure> {
    let mut w = writer(Some(path))?;
    w.write_record(SequenceRow::HEADER)?;
    for r in rows {
        let mut rec = vec![r.k.to_string()];
        rec.extend(r.values().iter().map(|v| num(*v)));
        w.write_record(&rec)?;
    }
    finish(w)?;
    Ok(rows.iter().filter(|r| !r.complete()).count())
}

fn write_surface(path: &Path, rows: &[SurfaceRow]) -> Result<(), Failure> {
    let mut w = writer(Some(path))?;
    w.write_record(SurfaceRow::HEADER)?;
    for r in rows {
        let mut rec: Vec<String> = [r.a, r.b, r.q1, r.q_tilde1, r.q_bar1]
            .iter()
            .map(|v| num(*v))
            .collect();
        rec.extend(r.differences().iter().map(|v| num(*v)));
        w.write_record(&rec)?;
    }
    finish(w)
}

pub fn reproduce(a: ReproduceArgs) -> Result<(), Failure> {
    let figures = if a.figure == "all" {
        FigureId::ALL.to_vec()
    } else {
        vec![FigureId::parse(&a.figure)?]
    };
    if a.grid == 0 {
        return Err(Failure::config("--grid must be positive"));
    }
    let cfg = solver_config(&a.solver)?;
    let mut incomplete = 0;
    for fig in figures {
        let path = a.out_dir.join(format!("{}.csv", fig.name()));
        match fig.model() {
            None => write_surface(&path, &surface_table(a.grid)?)?,
            Some(model) => {
                level_at_least_first(model.as_ref(), "k-max", a.k_max)?;
                incomplete +=
                    write_sequence(&path, &sequence_table(model.as_ref(), a.k_max, &cfg))?;
            }
        }
        eprintln!("wrote {}", path.display());
    }
    if incomplete > 0 {
        return Err(Failure::NonConvergence(anyhow!(
            "{incomplete} levels have failed solves (written as NaN)"
        )));
    }
    Ok(())
}
