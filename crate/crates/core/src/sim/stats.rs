//! Monte Carlo estimators and pathwise invariant checks.

use std::sync::Arc;

use crate::error::SimError;
use crate::progeny::{ProgenyModel, TypeIndex};
use crate::solver::{truncated_extinction, SolverConfig};
use crate::truncation::TruncationMode;

use super::{simulate_paths, CoupledPath, Fate, SeedCount, SimConfig};

/// Which process an extinction estimate refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum McTarget {
    Global,
    Sterile(TypeIndex),
    Immortal(TypeIndex),
    Augmented(TypeIndex),
}

impl McTarget {
    pub fn fate(&self, path: &CoupledPath) -> Result<Fate, SimError> {
        match *self {
            McTarget::Global => path
                .global
                .ok_or_else(|| SimError::Config("global process was not tracked".into())),
            McTarget::Sterile(k) => path.level(k).map(|l| l.sterile),
            McTarget::Immortal(k) => path.level(k).map(|l| l.immortal),
            McTarget::Augmented(k) => path.level(k).map(|l| l.augmented),
        }
    }

    pub fn mode(&self) -> Option<TruncationMode> {
        match self {
            McTarget::Global => None,
            McTarget::Sterile(_) => Some(TruncationMode::Sterile),
            McTarget::Immortal(_) => Some(TruncationMode::Immortal),
            McTarget::Augmented(_) => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExtinctionEstimate {
    pub paths: u64,
    pub extinct: u64,
    pub estimate: f64,
    /// Binomial standard error `sqrt(p(1-p)/N)`.
    pub stderr: f64,
    /// Paths where the population cap was hit or the horizon reached.
    pub censored_fraction: f64,
    /// Paths still alive below the cap at the horizon.
    pub unresolved_fraction: f64,
}

impl ExtinctionEstimate {
    /// Whether `value` lies within `sigmas` standard errors plus the
    /// unresolved fraction (which could go either way) of the estimate.
    pub fn agrees_with(&self, value: f64, sigmas: f64) -> bool {
        (self.estimate - value).abs() <= sigmas * self.stderr + self.unresolved_fraction
    }
}

/// Fraction of paths on which `target` went extinct. Censored paths count
/// as surviving.
pub fn estimate_extinction(
    paths: &[CoupledPath],
    target: McTarget,
) -> Result<ExtinctionEstimate, SimError> {
    let n = paths.len() as u64;
    if n == 0 {
        return Err(SimError::Config("no paths".into()));
    }
    let (mut extinct, mut censored, mut unresolved) = (0u64, 0u64, 0u64);
    for p in paths {
        match target.fate(p)? {
            Fate::Extinct => extinct += 1,
            Fate::Immortal => {}
            Fate::Exploded => censored += 1,
            Fate::Unresolved => {
                censored += 1;
                unresolved += 1;
            }
        }
    }
    let nf = n as f64;
    let p = extinct as f64 / nf;
    Ok(ExtinctionEstimate {
        paths: n,
        extinct,
        estimate: p,
        stderr: (p * (1.0 - p) / nf).sqrt(),
        censored_fraction: censored as f64 / nf,
        unresolved_fraction: unresolved as f64 / nf,
    })
}

/// Simulates `config.paths` paths from `initial_type` and estimates the
/// extinction probability of `target`. The level list of `config` is
/// replaced by the one level the target needs.
pub fn mc_extinction(
    model: Arc<dyn ProgenyModel>,
    initial_type: TypeIndex,
    target: McTarget,
    config: &SimConfig,
) -> Result<ExtinctionEstimate, SimError> {
    let mut cfg = config.clone();
    match target {
        McTarget::Global => {
            cfg.levels.clear();
            cfg.track_global = true;
        }
        McTarget::Sterile(k) | McTarget::Immortal(k) | McTarget::Augmented(k) => {
            cfg.levels = vec![k];
            cfg.track_global = false;
        }
    }
    let paths = simulate_paths(model, initial_type, &cfg)?;
    estimate_extinction(&paths, target)
}

/// Empirical law of `|S_k|` at one level.
#[derive(Clone, Debug, PartialEq)]
pub struct SeedRow {
    pub k: TypeIndex,
    /// Paths with a known seed count.
    pub resolved: u64,
    /// Paths excluded because the sterile truncation was unresolved.
    pub excluded: u64,
    pub p_zero: f64,
    pub p_zero_stderr: f64,
    pub p_one: f64,
    pub p_one_stderr: f64,
    /// `0 < |S_k| < B`.
    pub p_mid: f64,
    /// `|S_k| >= B`.
    pub p_big: f64,
    /// `1 - q~_i^(k) + q_i^(k)` from the fixed-point solver.
    pub solver_p_zero: Option<f64>,
}

fn proportion(hits: u64, n: u64) -> (f64, f64) {
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let p = hits as f64 / n as f64;
    (p, (p * (1.0 - p) / n as f64).sqrt())
}

/// Tabulates the seed counts of `paths` at every level of the first path,
/// with `bound` the threshold `B` separating small from large counts.
pub fn seed_statistics(paths: &[CoupledPath], bound: u64) -> Result<Vec<SeedRow>, SimError> {
    if bound == 0 {
        return Err(SimError::Config("seed bound must be at least 1".into()));
    }
    let Some(first) = paths.first() else {
        return Ok(Vec::new());
    };
    let mut rows = Vec::with_capacity(first.levels.len());
    for lvl in &first.levels {
        let k = lvl.k;
        let (mut resolved, mut zero, mut one, mut mid, mut big) = (0u64, 0u64, 0u64, 0u64, 0u64);
        for p in paths {
            match p.seed_count(k)? {
                SeedCount::Unknown => continue,
                SeedCount::Known(s) => {
                    resolved += 1;
                    match s {
                        0 => zero += 1,
                        s if s >= bound => big += 1,
                        s => {
                            mid += 1;
                            if s == 1 {
                                one += 1;
                            }
                        }
                    }
                }
            }
        }
        let (p_zero, p_zero_stderr) = proportion(zero, resolved);
        let (p_one, p_one_stderr) = proportion(one, resolved);
        rows.push(SeedRow {
            k,
            resolved,
            excluded: paths.len() as u64 - resolved,
            p_zero,
            p_zero_stderr,
            p_one,
            p_one_stderr,
            p_mid: proportion(mid, resolved).0,
            p_big: proportion(big, resolved).0,
            solver_p_zero: None,
        });
    }
    Ok(rows)
}

/// `1 - q~_i^(k) + q_i^(k)`, the probability that the seed set at level `k`
/// is empty.
pub fn solver_seed_zero(
    model: &dyn ProgenyModel,
    initial_type: TypeIndex,
    k: TypeIndex,
    config: &SolverConfig,
) -> Result<f64, SimError> {
    let pos = (initial_type - model.first_type()) as usize;
    let sterile = truncated_extinction(model, k, &TruncationMode::Sterile, config)?;
    let immortal = truncated_extinction(model, k, &TruncationMode::Immortal, config)?;
    Ok(1.0 - sterile.x[pos] + immortal.x[pos])
}

/// Fills the solver column of `rows`.
pub fn attach_solver_column(
    rows: &mut [SeedRow],
    model: &dyn ProgenyModel,
    initial_type: TypeIndex,
    config: &SolverConfig,
) -> Result<(), SimError> {
    for row in rows {
        row.solver_p_zero = Some(solver_seed_zero(model, initial_type, row.k, config)?);
    }
    Ok(())
}

/// Lists the violated pathwise relations on `path`; empty when all hold.
/// Relations involving an unresolved process are skipped.
pub fn check_path_invariants(path: &CoupledPath) -> Vec<String> {
    let mut out = Vec::new();
    let resolved = |f: Fate| f.is_resolved();
    for l in &path.levels {
        let k = l.k;
        if resolved(l.immortal)
            && resolved(l.augmented)
            && l.immortal.is_extinct()
            && !l.augmented.is_extinct()
        {
            out.push(format!(
                "k={k}: immortal truncation extinct but augmented one survives"
            ));
        }
        if resolved(l.augmented)
            && resolved(l.sterile)
            && l.augmented.is_extinct()
            && !l.sterile.is_extinct()
        {
            out.push(format!(
                "k={k}: augmented truncation extinct but sterile one survives"
            ));
        }
        if let Some(g) = path.global.filter(|g| g.is_resolved()) {
            if resolved(l.immortal) && l.immortal.is_extinct() && !g.is_extinct() {
                out.push(format!(
                    "k={k}: immortal truncation extinct but the process survives"
                ));
            }
            if resolved(l.sterile) && !l.sterile.is_extinct() && g.is_extinct() {
                out.push(format!(
                    "k={k}: sterile truncation survives but the process dies"
                ));
            }
        }
    }
    for w in path.levels.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if a.sterile.is_resolved()
            && b.sterile.is_resolved()
            && !a.sterile.is_extinct()
            && b.sterile.is_extinct()
        {
            out.push(format!(
                "sterile truncation survives at k={} but dies at k={}",
                a.k, b.k
            ));
        }
        if a.immortal.is_resolved()
            && b.immortal.is_resolved()
            && a.immortal.is_extinct()
            && !b.immortal.is_extinct()
        {
            out.push(format!(
                "immortal truncation dies at k={} but survives at k={}",
                a.k, b.k
            ));
        }
        if a.seeds == SeedCount::Known(0) {
            if let SeedCount::Known(s) = b.seeds {
                if s > 0 {
                    out.push(format!("seed count left 0 between k={} and k={}", a.k, b.k));
                }
            }
        }
        match (a.tau, b.tau) {
            (Some(x), Some(y)) if x > y => {
                out.push(format!("tau decreases from k={} to k={}", a.k, b.k))
            }
            (None, Some(_)) => out.push(format!("tau finite at k={} but not at k={}", b.k, a.k)),
            _ => {}
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::progeny::{TableModel, TailRule, TypeLaw};

    fn all_die() -> Arc<dyn ProgenyModel> {
        Arc::new(TableModel::new(1, vec![TypeLaw::sterile()], TailRule::RepeatLast).unwrap())
    }

    #[test]
    fn trivial_model_always_dies() {
        let cfg = SimConfig {
            paths: 200,
            levels: vec![1, 2, 3],
            track_global: true,
            ..Default::default()
        };
        let paths = simulate_paths(all_die(), 1, &cfg).unwrap();
        for target in [
            McTarget::Global,
            McTarget::Sterile(2),
            McTarget::Immortal(2),
            McTarget::Augmented(3),
        ] {
            let est = estimate_extinction(&paths, target).unwrap();
            assert_eq!(est.estimate, 1.0);
            assert_eq!(est.stderr, 0.0);
        }
        let rows = seed_statistics(&paths, 5).unwrap();
        assert!(rows.iter().all(|r| r.p_zero == 1.0 && r.excluded == 0));
        assert!(paths
            .iter()
            .all(|p| p.levels.iter().all(|l| l.seeds == SeedCount::Known(0))));
    }

    #[test]
    fn missing_level_is_an_error() {
        let cfg = SimConfig {
            paths: 3,
            levels: vec![1],
            ..Default::default()
        };
        let paths = simulate_paths(all_die(), 1, &cfg).unwrap();
        assert!(matches!(
            estimate_extinction(&paths, McTarget::Sterile(4)),
            Err(SimError::UnknownLevel(4))
        ));
        assert!(estimate_extinction(&paths, McTarget::Global).is_err());
    }
}
