//! Minimal fixed points of truncated generating-function maps, and the outer
//! loop producing the sequence of truncated extinction probabilities.

use nalgebra::{DMatrix, DVector};

use crate::error::SolveError;
use crate::mmatrix::{MMatrixLu, SparseRows};
use crate::progeny::{check_type, ProgenyModel, TypeIndex};
use crate::truncation::{build_truncated, TruncatedSystem, TruncationMode};

/// A monotone map of `[0,1]^n` into itself with a Jacobian.
pub trait FixedPointMap {
    fn dim(&self) -> usize;
    fn eval_into(&self, s: &[f64], out: &mut [f64]);
    fn jacobian(&self, s: &[f64]) -> DMatrix<f64>;

    /// Solves `(I - J(s)) d = r`, `None` when the system is singular.
    fn newton_direction(&self, s: &[f64], r: &[f64]) -> Option<Vec<f64>> {
        let n = self.dim();
        let mut a = -self.jacobian(s);
        for d in 0..n {
            a[(d, d)] += 1.0;
        }
        let sol = a.lu().solve(&DVector::from_column_slice(r))?;
        Some(sol.iter().copied().collect())
    }
}

impl FixedPointMap for TruncatedSystem {
    fn dim(&self) -> usize {
        TruncatedSystem::dim(self)
    }

    fn eval_into(&self, s: &[f64], out: &mut [f64]) {
        TruncatedSystem::eval_into(self, s, out)
    }

    fn jacobian(&self, s: &[f64]) -> DMatrix<f64> {
        TruncatedSystem::jacobian(self, s)
    }

    /// Below the minimal fixed point `I - J` is a nonsingular M-matrix, so a
    /// sparse unpivoted factorisation applies.
    fn newton_direction(&self, s: &[f64], r: &[f64]) -> Option<Vec<f64>> {
        let j = SparseRows::from_rows(self.dim(), self.jacobian_rows(s));
        let lu = MMatrixLu::factor(&j.shifted_negation(1.0)).ok()?;
        Some(lu.solve(r))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    FunctionalIteration,
    /// Newton's method from zero, falling back to functional iteration when
    /// the Jacobian system cannot be solved.
    Newton,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    /// Inner stopping rule: sup-norm of the last update.
    pub inner_tol: f64,
    /// Outer stopping rule on consecutive values of the tracked component.
    pub outer_eps: f64,
    pub max_inner_iter: usize,
    pub max_k: TypeIndex,
    /// Levels below this are computed but never stop the outer loop.
    pub min_k: TypeIndex,
    pub k_stride: u32,
    pub method: Method,
    /// Start immortal truncations from the previous level's solution.
    pub warm_start: bool,
    /// Re-solve warm-started levels from zero and compare.
    pub verify_minimality: bool,
    /// Number of leading components kept in each sequence record.
    pub record_width: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            inner_tol: 1e-12,
            outer_eps: 1e-8,
            max_inner_iter: 1_000_000,
            max_k: 500,
            min_k: 0,
            k_stride: 1,
            method: Method::Newton,
            warm_start: true,
            verify_minimality: cfg!(debug_assertions),
            record_width: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveOutcome {
    pub x: Vec<f64>,
    /// Number of updates applied before the stopping rule fired.
    pub iterations: usize,
    pub method: Method,
}

fn sup_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Functional iteration `x <- G(x)` from `start` (zero by default) until the
/// update is at most `inner_tol` in sup norm.
pub fn functional_iteration<M: FixedPointMap + ?Sized>(
    map: &M,
    start: Option<&[f64]>,
    config: &SolverConfig,
) -> Result<SolveOutcome, SolveError> {
    let n = map.dim();
    let mut x = match start {
        Some(s) if s.len() != n => {
            return Err(SolveError::Dimension {
                expected: n,
                got: s.len(),
            })
        }
        Some(s) => s.to_vec(),
        None => vec![0.0; n],
    };
    let mut y = vec![0.0; n];
    let mut step = f64::INFINITY;
    for it in 0..config.max_inner_iter {
        map.eval_into(&x, &mut y);
        for v in &mut y {
            *v = v.clamp(0.0, 1.0);
        }
        debug_assert!(
            start.is_some() || x.iter().zip(&y).all(|(a, b)| *b >= *a - 1e-13),
            "iterates from zero must be nondecreasing"
        );
        step = sup_dist(&x, &y);
        std::mem::swap(&mut x, &mut y);
        if step <= config.inner_tol {
            return Ok(SolveOutcome {
                x,
                iterations: it,
                method: Method::FunctionalIteration,
            });
        }
    }
    Err(SolveError::NonConvergence {
        iterations: config.max_inner_iter,
        last_step: step,
        last: x,
    })
}

/// Minimal fixed point by functional iteration from zero.
pub fn minimal_fixed_point<M: FixedPointMap + ?Sized>(
    map: &M,
    config: &SolverConfig,
) -> Result<SolveOutcome, SolveError> {
    functional_iteration(map, None, config)
}

const NEWTON_MAX_ITER: usize = 500;
const NEWTON_OVERSHOOT_TOL: f64 = 1e-9;
/// A residual at rounding level ends the iteration: near a singular Jacobian
/// the step size keeps amplifying the rounding error and never falls below
/// the tolerance.
const NEWTON_RESIDUAL_FLOOR: f64 = 1e-15;

/// Newton's method on `x - G(x) = 0` from `start` (zero by default). Iterates
/// are clipped to `[0,1]`.
pub fn newton_solve<M: FixedPointMap + ?Sized>(
    map: &M,
    start: Option<&[f64]>,
    config: &SolverConfig,
) -> Result<SolveOutcome, SolveError> {
    let n = map.dim();
    let mut x = match start {
        Some(s) if s.len() != n => {
            return Err(SolveError::Dimension {
                expected: n,
                got: s.len(),
            })
        }
        Some(s) => s.to_vec(),
        None => vec![0.0; n],
    };
    let mut g = vec![0.0; n];
    let mut step = f64::INFINITY;
    let limit = config.max_inner_iter.min(NEWTON_MAX_ITER);
    for it in 0..limit {
        map.eval_into(&x, &mut g);
        let residual: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a - b).collect();
        if it > 0 && residual.iter().all(|r| r.abs() <= NEWTON_RESIDUAL_FLOOR) {
            return Ok(SolveOutcome {
                x,
                iterations: it,
                method: Method::Newton,
            });
        }
        let delta = map
            .newton_direction(&x, &residual)
            .ok_or(SolveError::SingularJacobian { iteration: it })?;
        if delta.iter().any(|v| !v.is_finite()) {
            return Err(SolveError::SingularJacobian { iteration: it });
        }
        let next: Vec<f64> = x
            .iter()
            .zip(delta.iter())
            .map(|(v, d)| (v - d).clamp(0.0, 1.0))
            .collect();
        step = sup_dist(&x, &next);
        // From below the minimal fixed point every Newton iterate stays a
        // sub-solution; a point with G(x) < x means the step overshot.
        map.eval_into(&next, &mut g);
        if next
            .iter()
            .zip(&g)
            .any(|(v, gv)| *gv < v - NEWTON_OVERSHOOT_TOL)
        {
            return Err(SolveError::NonConvergence {
                iterations: it + 1,
                last_step: step,
                last: next,
            });
        }
        if step <= config.inner_tol {
            return Ok(SolveOutcome {
                x: next,
                iterations: it,
                method: Method::Newton,
            });
        }
        x = next;
    }
    Err(SolveError::NonConvergence {
        iterations: limit,
        last_step: step,
        last: x,
    })
}

/// Solves with the configured method. Newton failures fall back to
/// functional iteration from the same start.
pub fn solve<M: FixedPointMap + ?Sized>(
    map: &M,
    start: Option<&[f64]>,
    config: &SolverConfig,
) -> Result<SolveOutcome, SolveError> {
    match config.method {
        Method::FunctionalIteration => functional_iteration(map, start, config),
        Method::Newton => match newton_solve(map, start, config) {
            Ok(out) => Ok(out),
            Err(SolveError::SingularJacobian { .. }) | Err(SolveError::NonConvergence { .. }) => {
                functional_iteration(map, start, config)
            }
            Err(e) => Err(e),
        },
    }
}

/// Extinction probability vector of the truncation at level `k`.
pub fn truncated_extinction(
    model: &dyn ProgenyModel,
    k: TypeIndex,
    mode: &TruncationMode,
    config: &SolverConfig,
) -> Result<SolveOutcome, SolveError> {
    let sys = build_truncated(model, k, mode.clone())?;
    solve(&sys, None, config)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SequenceRecord {
    pub k: TypeIndex,
    /// Leading components of the solution (types `first..`), at most
    /// `record_width` of them.
    pub x: Vec<f64>,
    /// Component of the tracked type.
    pub value: f64,
    pub iterations: usize,
}

/// Limits along odd and even truncation levels when the two parities settle
/// on different values.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ParityLimits {
    pub odd: f64,
    pub even: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExtinctionSequenceReport {
    pub target: TypeIndex,
    pub mode: TruncationMode,
    pub records: Vec<SequenceRecord>,
    pub converged: bool,
    pub final_value: f64,
    pub parity: Option<ParityLimits>,
}

impl ExtinctionSequenceReport {
    pub fn last(&self) -> &SequenceRecord {
        self.records
            .last()
            .expect("a report has at least one record")
    }
}

fn solve_level(
    model: &dyn ProgenyModel,
    k: TypeIndex,
    mode: &TruncationMode,
    warm: Option<&[f64]>,
    config: &SolverConfig,
) -> Result<SolveOutcome, SolveError> {
    let sys = build_truncated(model, k, mode.clone())?;
    let start = warm.map(|prev| {
        let mut s = prev.to_vec();
        s.resize(sys.dim(), 0.0);
        s
    });
    let out = solve(&sys, start.as_deref(), config)?;
    if start.is_some() && config.verify_minimality {
        let cold = solve(&sys, None, config)?;
        let gap = sup_dist(&cold.x, &out.x);
        if gap > 1e3 * config.inner_tol.max(1e-13) {
            return Err(SolveError::NotMinimal { gap });
        }
    }
    Ok(out)
}

/// Computes truncated extinction probabilities for `k = i, i + stride, ...`
/// until consecutive values of component `i` differ by at most `outer_eps`
/// or `max_k` is reached.
///
/// When the odd and even subsequences have each settled but the full
/// sequence has not, the loop stops and reports both parity limits with
/// `converged == false`.
pub fn extinction_sequence(
    model: &dyn ProgenyModel,
    i: TypeIndex,
    mode: &TruncationMode,
    config: &SolverConfig,
) -> Result<ExtinctionSequenceReport, SolveError> {
    check_type(model, i)?;
    if config.k_stride == 0 {
        return Err(SolveError::Model(crate::ModelError::InvalidParameter(
            "k_stride must be positive".into(),
        )));
    }
    let first = model.first_type();
    let pos = (i - first) as usize;
    let warm_ok = config.warm_start && matches!(mode, TruncationMode::Immortal);
    let mut records: Vec<SequenceRecord> = Vec::new();
    let mut prev_full: Option<Vec<f64>> = None;
    let mut k = i;
    let mut x_old = 2.0;
    loop {
        let warm = if warm_ok { prev_full.as_deref() } else { None };
        let out = solve_level(model, k, mode, warm, config)?;
        let value = out.x[pos];
        records.push(SequenceRecord {
            k,
            x: out.x.iter().take(config.record_width).copied().collect(),
            value,
            iterations: out.iterations,
        });
        prev_full = Some(out.x);
        let testable = k >= config.min_k;
        if testable && (value - x_old).abs() <= config.outer_eps {
            return Ok(report(i, mode, records, true, None));
        }
        if testable && config.k_stride % 2 == 1 && records.len() >= 4 {
            let n = records.len();
            let settled = |a: usize, b: usize| {
                (records[a].value - records[b].value).abs() <= config.outer_eps
            };
            if settled(n - 1, n - 3) && settled(n - 2, n - 4) {
                let (a, b) = (&records[n - 1], &records[n - 2]);
                let (odd, even) = if a.k % 2 == 1 {
                    (a.value, b.value)
                } else {
                    (b.value, a.value)
                };
                return Ok(report(
                    i,
                    mode,
                    records,
                    false,
                    Some(ParityLimits { odd, even }),
                ));
            }
        }
        match k.checked_add(config.k_stride) {
            Some(next) if next <= config.max_k => {
                x_old = value;
                k = next;
            }
            _ => return Ok(report(i, mode, records, false, None)),
        }
    }
}

fn report(
    target: TypeIndex,
    mode: &TruncationMode,
    records: Vec<SequenceRecord>,
    converged: bool,
    parity: Option<ParityLimits>,
) -> ExtinctionSequenceReport {
    let final_value = records.last().expect("at least one level was solved").value;
    ExtinctionSequenceReport {
        target,
        mode: mode.clone(),
        records,
        converged,
        final_value,
        parity,
    }
}
