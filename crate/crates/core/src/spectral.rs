//! Mean matrices of truncations, Perron roots and the spectral criteria built
//! on them.
//!
//! Spectral radii are computed block by block over the strongly connected
//! components of the support graph. On each irreducible block a short shifted
//! power iteration is followed by Noda's inverse iteration, which stops when
//! the Collatz-Wielandt bracket `[min (Mx)_i/x_i, max (Mx)_i/x_i]` is narrower
//! than the tolerance.

use nalgebra::DMatrix;
use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;

use crate::error::SpectralError;
use crate::mmatrix::{MMatrixLu, SparseRows};
use crate::progeny::{mean_row, ProgenyModel, TypeIndex};
use crate::truncation::{
    build_truncated, ReplacementDistribution, TruncatedSystem, TruncationMode,
};

const POWER_SHIFT: f64 = 1e-9;
const POWER_STEPS: usize = 30;
const NODA_MAX_ITER: usize = 200;

fn validate(m: &DMatrix<f64>) -> Result<(), SpectralError> {
    if m.nrows() != m.ncols() {
        return Err(SpectralError::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    for c in 0..m.ncols() {
        for r in 0..m.nrows() {
            let v = m[(r, c)];
            if !v.is_finite() || v < 0.0 {
                return Err(SpectralError::BadEntry {
                    row: r,
                    col: c,
                    value: v,
                });
            }
        }
    }
    Ok(())
}

/// Strongly connected components of the graph with an edge `i -> j` when
/// `m[(i,j)] > 0`.
pub fn components(m: &DMatrix<f64>) -> Vec<Vec<usize>> {
    let n = m.nrows();
    let mut g = DiGraph::<(), ()>::with_capacity(n, n);
    let nodes: Vec<_> = (0..n).map(|_| g.add_node(())).collect();
    for i in 0..n {
        for j in 0..n {
            if m[(i, j)] > 0.0 {
                g.add_edge(nodes[i], nodes[j], ());
            }
        }
    }
    let mut comps: Vec<Vec<usize>> = tarjan_scc(&g)
        .into_iter()
        .map(|c| {
            let mut v: Vec<usize> = c.into_iter().map(|x| x.index()).collect();
            v.sort_unstable();
            v
        })
        .collect();
    comps.sort();
    comps
}

fn collatz(m: &SparseRows, x: &[f64]) -> (f64, f64, Vec<f64>) {
    let y = m.mul_vec(x);
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for (a, b) in y.iter().zip(x) {
        let r = a / b;
        lo = lo.min(r);
        hi = hi.max(r);
    }
    (lo, hi, y)
}

fn normalise(x: &mut [f64]) {
    let top = x.iter().cloned().fold(0.0, f64::max);
    if top > 0.0 {
        x.iter_mut().for_each(|v| *v /= top);
    }
    // Keep every entry strictly positive so the ratios stay defined.
    for v in x.iter_mut() {
        if *v < f64::MIN_POSITIVE {
            *v = f64::MIN_POSITIVE;
        }
    }
}

/// Perron root and vector of one irreducible block.
#[derive(Clone, Debug, PartialEq)]
pub struct PerronPair {
    pub rho: f64,
    pub vector: Vec<f64>,
    pub lower: f64,
    pub upper: f64,
}

/// Perron pair of an irreducible nonnegative matrix, optionally started from
/// a positive guess.
fn irreducible_perron(
    m: &SparseRows,
    start: Option<&[f64]>,
    tol: f64,
) -> Result<PerronPair, SpectralError> {
    let n = m.dim();
    if n == 1 {
        let v = m.row(0).first().map(|e| e.1).unwrap_or(0.0);
        return Ok(PerronPair {
            rho: v,
            vector: vec![1.0],
            lower: v,
            upper: v,
        });
    }
    let mut x = match start {
        Some(s) if s.len() == n && s.iter().all(|v| v.is_finite() && *v > 0.0) => s.to_vec(),
        _ => vec![1.0; n],
    };
    normalise(&mut x);
    let done = |lo: f64, hi: f64| hi - lo <= tol * hi.max(1.0);
    let pair = |x: Vec<f64>, lo: f64, hi: f64| PerronPair {
        rho: 0.5 * (lo + hi),
        vector: x,
        lower: lo,
        upper: hi,
    };
    let (mut lo, mut hi, mut y) = collatz(m, &x);
    if done(lo, hi) {
        return Ok(pair(x, lo, hi));
    }
    // A few shifted power steps smooth out a poor start before inverse iteration.
    if start.is_none() {
        for _ in 0..POWER_STEPS {
            for (xi, yi) in x.iter_mut().zip(&y) {
                *xi = yi + POWER_SHIFT * *xi;
            }
            normalise(&mut x);
            (lo, hi, y) = collatz(m, &x);
            if done(lo, hi) {
                return Ok(pair(x, lo, hi));
            }
        }
    }
    for _ in 0..NODA_MAX_ITER {
        let mu = hi * (1.0 + 8.0 * f64::EPSILON) + f64::MIN_POSITIVE;
        match MMatrixLu::factor(&m.shifted_negation(mu)) {
            Ok(lu) => {
                let sol = lu.solve(&x);
                if sol.iter().any(|v| !v.is_finite()) {
                    return Ok(PerronPair {
                        rho: hi,
                        vector: x,
                        lower: lo,
                        upper: hi,
                    });
                }
                x = sol.iter().map(|v| v.abs()).collect();
            }
            // The shift reached the eigenvalue to machine precision.
            Err(_) => {
                return Ok(PerronPair {
                    rho: hi,
                    vector: x,
                    lower: lo,
                    upper: hi,
                })
            }
        }
        normalise(&mut x);
        let (nlo, nhi, _) = collatz(m, &x);
        let stalled = (nhi - hi).abs() <= 1e-3 * tol * hi.max(1.0) && nlo <= lo;
        lo = lo.max(nlo);
        hi = hi.min(nhi);
        // Rounding can keep the bracket slightly wider than `tol` once the
        // upper bound no longer moves.
        if done(lo, hi) || (stalled && hi - lo <= 1e3 * tol * hi.max(1.0)) {
            return Ok(pair(x, lo, hi));
        }
    }
    Err(SpectralError::NonConvergence {
        estimate: 0.5 * (lo + hi),
        width: hi - lo,
    })
}

fn sparse_sub_block(m: &SparseRows, idx: &[usize]) -> SparseRows {
    let mut pos = vec![usize::MAX; m.dim()];
    for (p, &i) in idx.iter().enumerate() {
        pos[i] = p;
    }
    let rows = idx
        .iter()
        .map(|&i| {
            m.row(i)
                .iter()
                .filter(|(j, _)| pos[*j] != usize::MAX)
                .map(|&(j, v)| (pos[j], v))
                .collect()
        })
        .collect();
    SparseRows::from_rows(idx.len(), rows)
}

/// Spectral radius with the dominant block's Perron pair, computed over the
/// strongly connected components. `start` is an optional positive guess for
/// the full vector (for example the previous truncation level's vector).
pub fn perron_estimate(
    m: &DMatrix<f64>,
    start: Option<&[f64]>,
    tol: f64,
) -> Result<(f64, Vec<f64>), SpectralError> {
    validate(m)?;
    let n = m.nrows();
    if n == 0 {
        return Ok((0.0, Vec::new()));
    }
    let sparse = SparseRows::from_dense(m);
    let mut best = 0.0f64;
    let mut best_vec = vec![0.0; n];
    for comp in components(m) {
        let block = sparse_sub_block(&sparse, &comp);
        if (0..block.dim()).all(|i| block.row(i).is_empty()) {
            continue;
        }
        let guess: Option<Vec<f64>> = start
            .filter(|s| s.len() == n)
            .map(|s| comp.iter().map(|&i| s[i]).collect());
        let pair = irreducible_perron(&block, guess.as_deref(), tol)?;
        if pair.rho > best {
            best = pair.rho;
            best_vec = vec![0.0; n];
            for (pos, &i) in comp.iter().enumerate() {
                best_vec[i] = pair.vector[pos];
            }
        }
    }
    Ok((best, best_vec))
}

/// Spectral radius of a nonnegative square matrix within `tol` (relative to
/// `max(1, rho)`).
pub fn spectral_radius(m: &DMatrix<f64>, tol: f64) -> Result<f64, SpectralError> {
    perron_estimate(m, None, tol).map(|(rho, _)| rho)
}

/// Indices not strongly connected to index 0, empty when `m` is irreducible.
pub fn reducible_indices(m: &DMatrix<f64>) -> Vec<usize> {
    let comps = components(m);
    let with_zero = comps
        .iter()
        .find(|c| c.contains(&0))
        .cloned()
        .unwrap_or_default();
    (0..m.nrows()).filter(|i| !with_zero.contains(i)).collect()
}

/// Right Perron vector of an irreducible matrix, normalised to sup norm one.
pub fn perron_right_vector(m: &DMatrix<f64>, tol: f64) -> Result<(f64, Vec<f64>), SpectralError> {
    validate(m)?;
    let unreachable = reducible_indices(m);
    if !unreachable.is_empty() {
        return Err(SpectralError::Reducible { unreachable });
    }
    let pair = irreducible_perron(&SparseRows::from_dense(m), None, tol)?;
    Ok((pair.rho, pair.vector))
}

/// Embedded mean number of returns to index `i`:
/// `M_ii + M_{i,-i} (I - M_{-i,-i})^{-1} M_{-i,i}`, infinite when
/// `rho(M_{-i,-i}) >= 1 - 1e-9`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EmbeddedMean {
    pub value: f64,
    /// Collatz-Wielandt bracket for `rho(M_{-i,-i})` from the solve, when
    /// the removed matrix is subcritical.
    pub rest_bracket: Option<(f64, f64)>,
}

impl EmbeddedMean {
    pub fn is_infinite(&self) -> bool {
        self.value.is_infinite()
    }
}

pub const EMBEDDED_CRITICAL_MARGIN: f64 = 1e-9;

pub fn embedded_return_mean(m: &DMatrix<f64>, i: usize) -> Result<EmbeddedMean, SpectralError> {
    validate(m)?;
    let n = m.nrows();
    if i >= n {
        return Err(SpectralError::Index { index: i, dim: n });
    }
    let rest: Vec<usize> = (0..n).filter(|&j| j != i).collect();
    if rest.is_empty() {
        return Ok(EmbeddedMean {
            value: m[(i, i)],
            rest_bracket: Some((0.0, 0.0)),
        });
    }
    let infinite = EmbeddedMean {
        value: f64::INFINITY,
        rest_bracket: None,
    };
    let sub = sparse_sub_block(&SparseRows::from_dense(m), &rest);
    // I - A is a nonsingular M-matrix exactly when rho(A) < 1.
    let lu = match MMatrixLu::factor(&sub.shifted_negation(1.0)) {
        Ok(lu) => lu,
        Err(_) => return Ok(infinite),
    };
    // With (I - A) z = 1: 1 - 1/min z <= rho(A) <= 1 - 1/max z.
    let z = lu.solve(&vec![1.0; rest.len()]);
    let zmin = z.iter().cloned().fold(f64::INFINITY, f64::min);
    let zmax = z.iter().cloned().fold(0.0, f64::max);
    if zmin.is_nan() || zmin < 1.0 - 1e-9 || !zmax.is_finite() {
        return Ok(infinite);
    }
    let bracket = (1.0 - 1.0 / zmin, 1.0 - 1.0 / zmax);
    if bracket.0 >= 1.0 - EMBEDDED_CRITICAL_MARGIN {
        return Ok(infinite);
    }
    let col: Vec<f64> = rest.iter().map(|&j| m[(j, i)]).collect();
    let y = lu.solve(&col);
    let value = m[(i, i)]
        + rest
            .iter()
            .zip(&y)
            .map(|(&j, yj)| m[(i, j)] * yj.max(0.0))
            .sum::<f64>();
    Ok(EmbeddedMean {
        value,
        rest_bracket: Some((bracket.0.max(0.0), bracket.1.max(0.0))),
    })
}

/// Mean matrices of the level-`k` truncation.
#[derive(Clone, Debug)]
pub struct TruncatedMeanMatrices {
    pub first: TypeIndex,
    pub k: TypeIndex,
    /// North-west corner of the full mean matrix.
    pub tilde: DMatrix<f64>,
    /// Expected number of children above `k`, per parent type.
    pub tail_mass: Vec<f64>,
    pub alpha: Option<Vec<f64>>,
    /// `tilde + tail_mass alpha^T`, present when `alpha` is.
    pub bar: Option<DMatrix<f64>>,
}

pub fn build_mean_matrices(
    model: &dyn ProgenyModel,
    k: TypeIndex,
    alpha: Option<&ReplacementDistribution>,
) -> Result<TruncatedMeanMatrices, SpectralError> {
    let sys = build_truncated(model, k, TruncationMode::Sterile)?;
    Ok(mean_matrices_of(&sys, alpha)?)
}

fn mean_matrices_of(
    sys: &TruncatedSystem,
    alpha: Option<&ReplacementDistribution>,
) -> Result<TruncatedMeanMatrices, crate::error::ModelError> {
    let tilde = sys.window_mean();
    let tail_mass = sys.tail_mass();
    let alpha = alpha.map(|a| a.realize(sys.dim())).transpose()?;
    let bar = alpha.as_ref().map(|a| {
        let mut b = tilde.clone();
        for (i, x) in tail_mass.iter().enumerate() {
            for (j, w) in a.iter().enumerate() {
                b[(i, j)] += x * w;
            }
        }
        b
    });
    Ok(TruncatedMeanMatrices {
        first: sys.first_type(),
        k: sys.k(),
        tilde,
        tail_mass,
        alpha,
        bar,
    })
}

/// Row sums of the full mean matrix for the types of a truncation window.
pub fn full_row_sums(model: &dyn ProgenyModel, k: TypeIndex) -> Result<Vec<f64>, SpectralError> {
    (model.first_type()..=k)
        .map(|i| Ok(mean_row(model, i)?.iter().map(|(_, m)| m).sum()))
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectralRecord {
    pub k: TypeIndex,
    pub rho_tilde: f64,
    pub rho_bar: f64,
    /// Embedded return mean of type `k` under the augmented mean matrix.
    pub embedded_mean_k: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScanOptions {
    pub k_min: Option<TypeIndex>,
    pub k_max: TypeIndex,
    pub stride: u32,
    pub tol: f64,
    /// Number of trailing levels used for the limit summaries.
    pub window: usize,
    /// User declaration that the extinction probabilities are bounded away
    /// from zero, `None` when unknown.
    pub positive_extinction_declared: Option<bool>,
}

impl Default for ScanOptions {
    fn default() -> Self {
        ScanOptions {
            k_min: None,
            k_max: 400,
            stride: 1,
            tol: 1e-10,
            window: 20,
            positive_extinction_declared: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Hypotheses {
    /// The replacement family is tight.
    pub tight_alpha: bool,
    pub positive_extinction: Option<bool>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectralReport {
    pub records: Vec<SpectralRecord>,
    /// Augmented Perron roots at most one recur up to the last scanned
    /// levels: the augmented truncations then go extinct surely along those
    /// levels, so their extinction probabilities tend to one.
    pub q_one_certified: bool,
    /// The sterile Perron roots never exceed one, so every sterile truncation
    /// dies out surely.
    pub q_tilde_one_indicated: bool,
    /// Last sterile Perron root, the nondecreasing limit estimate.
    pub rho_tilde_limit: f64,
    pub rho_bar_liminf: f64,
    pub rho_bar_limsup: f64,
    /// Last augmented Perron root at odd and even levels.
    pub rho_bar_odd: Option<f64>,
    pub rho_bar_even: Option<f64>,
    pub hypotheses: Hypotheses,
    pub warnings: Vec<String>,
}

/// Evaluates the sterile and augmented Perron roots and the embedded return
/// mean of the last type for every scanned level.
pub fn criterion_scan(
    model: &dyn ProgenyModel,
    alpha: &ReplacementDistribution,
    opts: &ScanOptions,
) -> Result<SpectralReport, SpectralError> {
    let first = model.first_type();
    let k_min = opts.k_min.unwrap_or(first).max(first);
    if opts.k_max < k_min || opts.stride == 0 {
        return Err(SpectralError::Unsupported(format!(
            "empty scan range {k_min}..={} with stride {}",
            opts.k_max, opts.stride
        )));
    }
    let mut records = Vec::new();
    let mut vec_tilde: Option<Vec<f64>> = None;
    let mut vec_bar: Option<Vec<f64>> = None;
    let pad = |v: &Option<Vec<f64>>, n: usize| {
        v.as_ref().map(|v| {
            let mut w: Vec<f64> = v.iter().map(|x| x.max(1e-300)).collect();
            let last = w.last().copied().unwrap_or(1.0);
            w.resize(n, last);
            w
        })
    };
    let mut warnings = Vec::new();
    let mut k = k_min;
    while k <= opts.k_max {
        let mm = build_mean_matrices(model, k, Some(alpha))?;
        let n = mm.tilde.nrows();
        let bar = mm.bar.as_ref().expect("alpha was supplied");
        let (rt, vt) = perron_estimate(&mm.tilde, pad(&vec_tilde, n).as_deref(), opts.tol)?;
        let (rb, vb) = perron_estimate(bar, pad(&vec_bar, n).as_deref(), opts.tol)?;
        let emb = embedded_return_mean(bar, n - 1)?;
        if let Some(prev) = records.last().map(|r: &SpectralRecord| r.rho_tilde) {
            if rt < prev - 10.0 * opts.tol * prev.max(1.0) {
                warnings.push(format!(
                    "sterile Perron root decreased at k={k}: {prev} -> {rt}"
                ));
            }
        }
        records.push(SpectralRecord {
            k,
            rho_tilde: rt,
            rho_bar: rb,
            embedded_mean_k: emb.value,
        });
        vec_tilde = Some(vt);
        vec_bar = Some(vb);
        k = match k.checked_add(opts.stride) {
            Some(next) => next,
            None => break,
        };
    }
    let tail = &records[records.len().saturating_sub(opts.window.max(1))..];
    let sub_one = |r: &SpectralRecord| r.rho_bar <= 1.0 + opts.tol;
    let last_two = &records[records.len().saturating_sub(2)..];
    let q_one_certified = tail.iter().filter(|r| sub_one(r)).count() * 4 >= tail.len()
        && last_two.iter().any(sub_one);
    let q_tilde_one_indicated = records.iter().all(|r| r.rho_tilde <= 1.0 + opts.tol);
    let rho_bar_liminf = tail.iter().map(|r| r.rho_bar).fold(f64::INFINITY, f64::min);
    let rho_bar_limsup = tail.iter().map(|r| r.rho_bar).fold(0.0, f64::max);
    let rho_bar_odd = records
        .iter()
        .rev()
        .find(|r| r.k % 2 == 1)
        .map(|r| r.rho_bar);
    let rho_bar_even = records
        .iter()
        .rev()
        .find(|r| r.k % 2 == 0)
        .map(|r| r.rho_bar);
    let hypotheses = Hypotheses {
        tight_alpha: alpha.is_tight(),
        positive_extinction: opts.positive_extinction_declared,
    };
    if q_one_certified && !(hypotheses.tight_alpha && hypotheses.positive_extinction == Some(true))
    {
        warnings.push(
            "augmented extinction probabilities tend to one, but this equals the global extinction probability \
             only for a tight replacement family and extinction probabilities bounded away from zero"
                .into(),
        );
    }
    Ok(SpectralReport {
        rho_tilde_limit: records.last().map(|r| r.rho_tilde).unwrap_or(0.0),
        records,
        q_one_certified,
        q_tilde_one_indicated,
        rho_bar_liminf,
        rho_bar_limsup,
        rho_bar_odd,
        rho_bar_even,
        hypotheses,
        warnings,
    })
}

/// A point `s` with some coordinate below one and `G(s) <= s`; its existence
/// shows that the truncation survives with positive probability.
#[derive(Clone, Debug, PartialEq)]
pub struct SubSolutionCertificate {
    pub theta: f64,
    pub s: Vec<f64>,
}

/// Tries `s = 1 - theta v` along the grid, with `v` the dominant
/// nonnegative eigenvector of the truncation's mean matrix scaled to sup
/// norm one.
pub fn certify_q_less_than_one(
    sys: &TruncatedSystem,
    theta_grid: &[f64],
    tol: f64,
) -> Result<Option<SubSolutionCertificate>, SpectralError> {
    let n = sys.dim();
    let ones = vec![1.0; n];
    let m = sys.jacobian(&ones);
    let (rho, v) = perron_estimate(&m, None, tol)?;
    if rho <= 1.0 || v.iter().all(|x| *x == 0.0) {
        return Ok(None);
    }
    let mut out = vec![0.0; n];
    for &theta in theta_grid {
        if !(theta > 0.0 && theta <= 1.0) {
            continue;
        }
        let s: Vec<f64> = v.iter().map(|x| 1.0 - theta * x).collect();
        sys.eval_into(&s, &mut out);
        if out.iter().zip(&s).all(|(g, x)| *g <= *x) {
            return Ok(Some(SubSolutionCertificate { theta, s }));
        }
    }
    Ok(None)
}

/// Geometric grid `2^-1, 2^-2, ..., 2^-steps`.
pub fn default_theta_grid(steps: u32) -> Vec<f64> {
    (1..=steps).map(|j| 0.5f64.powi(j as i32)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn small_matrices() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert_relative_eq!(spectral_radius(&m, 1e-12).unwrap(), 1.0, epsilon = 1e-12);
        let (_, v) = perron_right_vector(&m, 1e-12).unwrap();
        assert_relative_eq!(v[0], 1.0);
        assert_relative_eq!(v[1], 1.0, epsilon = 1e-10);
        assert_eq!(spectral_radius(&DMatrix::zeros(3, 3), 1e-12).unwrap(), 0.0);
        let nil = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.5, 0.0]);
        assert_eq!(spectral_radius(&nil, 1e-12).unwrap(), 0.0);
        let tri = DMatrix::from_row_slice(2, 2, &[0.3, 5.0, 0.0, 0.7]);
        assert_relative_eq!(spectral_radius(&tri, 1e-12).unwrap(), 0.7, epsilon = 1e-12);
        assert!(matches!(
            perron_right_vector(&tri, 1e-12),
            Err(SpectralError::Reducible { .. })
        ));
        assert!(spectral_radius(&DMatrix::from_row_slice(1, 1, &[-1.0]), 1e-12).is_err());
    }

    #[test]
    fn embedded_mean_of_two_cycle() {
        // Returning to 0 through 1: 0.5 * (1 / (1 - 0.2)) * 0.4 = 0.25.
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 0.5, 0.4, 0.2]);
        let e = embedded_return_mean(&m, 0).unwrap();
        assert_relative_eq!(e.value, 0.25, epsilon = 1e-14);
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 0.5, 0.4, 1.0]);
        assert!(embedded_return_mean(&m, 0).unwrap().is_infinite());
    }

    #[test]
    fn tridiagonal_closed_form() {
        let (a, c, d) = (1.0 / 6.0, 7.0 / 8.0, 2.0);
        let m = crate::zoo::Example2::new(a, c, d).unwrap();
        for k in [3u32, 10, 50] {
            let mm = build_mean_matrices(&m, k, None).unwrap();
            let want =
                2.0 * (a * c).sqrt() * (std::f64::consts::PI / (k as f64 + 1.0)).cos();
            assert_relative_eq!(
                spectral_radius(&mm.tilde, 1e-12).unwrap(),
                want,
                epsilon = 1e-10
            );
        }
    }
}
