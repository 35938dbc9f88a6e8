//! Finite truncations of a model to the types `first..=k`.
//!
//! Every type above `k` is sent to a common tail argument `u`:
//! `u = 1` (sterile), `u = 0` (immortal) or `u = alpha . s` (augmented, each
//! exceeding child is replaced by a type drawn from `alpha`).

use std::fmt;

use nalgebra::DMatrix;
use serde::Deserialize;

use crate::error::{ModelError, SolveError};
use crate::progeny::{check_type, ProgenyModel, TypeIndex};

/// Replacement distribution on the window `first..=k`.
#[derive(Clone, Debug, PartialEq)]
pub enum ReplacementDistribution {
    /// All mass on the first type.
    FirstType,
    /// All mass on the last type `k`.
    LastType,
    Uniform,
    /// Weights anchored at both ends of the window: `head[j]` is the weight of
    /// position `j` from the start, `tail[j]` the weight of position `j` from
    /// the end. Overlapping weights add up; the result is normalised.
    Custom {
        head: Vec<f64>,
        tail: Vec<f64>,
    },
}

#[derive(Deserialize)]
struct CustomSpec {
    #[serde(default)]
    head: Vec<f64>,
    #[serde(default)]
    tail: Vec<f64>,
}

impl ReplacementDistribution {
    /// Parses `e1`, `ek`, `uniform`, `custom:<json>` where the JSON is
    /// either a list of head weights or `{"head": [...], "tail": [...]}`.
    pub fn parse(s: &str) -> Result<Self, ModelError> {
        match s {
            "e1" => Ok(Self::FirstType),
            "ek" => Ok(Self::LastType),
            "uniform" => Ok(Self::Uniform),
            _ => {
                let json = s.strip_prefix("custom:").ok_or_else(|| {
                    ModelError::Parse(format!("unknown replacement distribution `{s}`"))
                })?;
                let (head, tail) = match serde_json::from_str::<Vec<f64>>(json) {
                    Ok(head) => (head, Vec::new()),
                    Err(_) => {
                        let spec: CustomSpec = serde_json::from_str(json)
                            .map_err(|e| ModelError::Parse(format!("custom weights: {e}")))?;
                        (spec.head, spec.tail)
                    }
                };
                Self::custom(head, tail)
            }
        }
    }

    pub fn custom(head: Vec<f64>, tail: Vec<f64>) -> Result<Self, ModelError> {
        if let Some(w) = head
            .iter()
            .chain(&tail)
            .find(|w| !w.is_finite() || **w < 0.0)
        {
            return Err(ModelError::InvalidParameter(format!(
                "replacement weight {w}"
            )));
        }
        if head.iter().chain(&tail).sum::<f64>() <= 0.0 {
            return Err(ModelError::InvalidParameter(
                "replacement weights are all zero".into(),
            ));
        }
        Ok(Self::Custom { head, tail })
    }

    /// Probability vector over the `n` window positions.
    pub fn realize(&self, n: usize) -> Result<Vec<f64>, ModelError> {
        if n == 0 {
            return Err(ModelError::InvalidParameter(
                "empty truncation window".into(),
            ));
        }
        let mut w = vec![0.0; n];
        match self {
            Self::FirstType => w[0] = 1.0,
            Self::LastType => w[n - 1] = 1.0,
            Self::Uniform => w.iter_mut().for_each(|x| *x = 1.0 / n as f64),
            Self::Custom { head, tail } => {
                for (j, h) in head.iter().enumerate().take(n) {
                    w[j] += h;
                }
                for (j, t) in tail.iter().enumerate().take(n) {
                    w[n - 1 - j] += t;
                }
                let total: f64 = w.iter().sum();
                if total <= 0.0 {
                    return Err(ModelError::InvalidParameter(format!(
                        "replacement weights vanish on a window of {n} types"
                    )));
                }
                w.iter_mut().for_each(|x| *x /= total);
            }
        }
        Ok(w)
    }

    /// Whether the family of realised distributions keeps a fixed positive
    /// weight on some type as the window grows (tightness).
    pub fn is_tight(&self) -> bool {
        match self {
            Self::FirstType => true,
            Self::LastType | Self::Uniform => false,
            Self::Custom { head, .. } => head.iter().any(|&h| h > 0.0),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Self::FirstType => "e1".into(),
            Self::LastType => "ek".into(),
            Self::Uniform => "uniform".into(),
            Self::Custom { head, tail } => format!("custom(head={head:?},tail={tail:?})"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum TruncationMode {
    Sterile,
    Immortal,
    Augmented(ReplacementDistribution),
}

impl TruncationMode {
    /// Builds a mode from a `--mode` name and an optional `--alpha` value.
    pub fn parse(mode: &str, alpha: Option<&str>) -> Result<Self, ModelError> {
        match (mode, alpha) {
            ("sterile", None) => Ok(Self::Sterile),
            ("immortal", None) => Ok(Self::Immortal),
            ("augmented", a) => Ok(Self::Augmented(ReplacementDistribution::parse(
                a.unwrap_or("e1"),
            )?)),
            ("sterile" | "immortal", Some(_)) => Err(ModelError::Parse(format!(
                "mode `{mode}` takes no replacement distribution"
            ))),
            _ => Err(ModelError::Parse(format!(
                "unknown truncation mode `{mode}`"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Sterile => "sterile",
            Self::Immortal => "immortal",
            Self::Augmented(_) => "augmented",
        }
    }
}

impl fmt::Display for TruncationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Augmented(a) => write!(f, "augmented[{}]", a.label()),
            other => f.write_str(other.name()),
        }
    }
}

#[derive(Clone, Debug)]
struct CompiledEvent {
    prob: f64,
    window: Vec<(usize, u32)>,
    tail: u32,
}

/// The `k - first + 1` dimensional generating-function map of a truncation.
#[derive(Clone, Debug)]
pub struct TruncatedSystem {
    first: TypeIndex,
    k: TypeIndex,
    mode: TruncationMode,
    alpha: Option<Vec<f64>>,
    rows: Vec<Vec<CompiledEvent>>,
}

pub fn build_truncated(
    model: &dyn ProgenyModel,
    k: TypeIndex,
    mode: TruncationMode,
) -> Result<TruncatedSystem, ModelError> {
    check_type(model, k)?;
    let first = model.first_type();
    let dim = (k - first + 1) as usize;
    let alpha = match &mode {
        TruncationMode::Augmented(a) => Some(a.realize(dim)?),
        _ => None,
    };
    let mut rows = Vec::with_capacity(dim);
    for i in first..=k {
        let law = model.law_for(i)?;
        let events = law
            .events()
            .iter()
            .map(|e| {
                let mut window = Vec::new();
                let mut tail = 0u32;
                for &(t, c) in e.offspring.entries() {
                    if t <= k {
                        window.push(((t - first) as usize, c));
                    } else {
                        tail += c;
                    }
                }
                CompiledEvent {
                    prob: e.prob,
                    window,
                    tail,
                }
            })
            .collect();
        rows.push(events);
    }
    Ok(TruncatedSystem {
        first,
        k,
        mode,
        alpha,
        rows,
    })
}

impl TruncatedSystem {
    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    pub fn k(&self) -> TypeIndex {
        self.k
    }

    pub fn first_type(&self) -> TypeIndex {
        self.first
    }

    pub fn mode(&self) -> &TruncationMode {
        &self.mode
    }

    pub fn alpha(&self) -> Option<&[f64]> {
        self.alpha.as_deref()
    }

    /// The common argument substituted for every type above `k`.
    pub fn tail_value(&self, s: &[f64]) -> f64 {
        match &self.mode {
            TruncationMode::Sterile => 1.0,
            TruncationMode::Immortal => 0.0,
            TruncationMode::Augmented(_) => {
                let a = self.alpha.as_ref().expect("augmented systems carry alpha");
                a.iter().zip(s).map(|(x, y)| x * y).sum()
            }
        }
    }

    pub fn eval_into(&self, s: &[f64], out: &mut [f64]) {
        let u = self.tail_value(s);
        for (row, o) in self.rows.iter().zip(out.iter_mut()) {
            *o = row
                .iter()
                .map(|e| {
                    e.window
                        .iter()
                        .fold(e.prob * u.powi(e.tail as i32), |acc, &(j, c)| {
                            acc * s[j].powi(c as i32)
                        })
                })
                .sum();
        }
    }

    pub fn system_eval(&self, s: &[f64]) -> Result<Vec<f64>, SolveError> {
        if s.len() != self.dim() {
            return Err(SolveError::Dimension {
                expected: self.dim(),
                got: s.len(),
            });
        }
        let mut out = vec![0.0; self.dim()];
        self.eval_into(s, &mut out);
        Ok(out)
    }

    /// `d G_i / d s_j` at `s`, including the chain-rule term through the tail
    /// argument for augmented systems.
    pub fn jacobian(&self, s: &[f64]) -> DMatrix<f64> {
        let n = self.dim();
        let mut jac = DMatrix::zeros(n, n);
        for (i, row) in self.jacobian_rows(s).into_iter().enumerate() {
            for (j, v) in row {
                jac[(i, j)] += v;
            }
        }
        jac
    }

    /// Jacobian rows as `(column, value)` pairs; columns may repeat.
    pub fn jacobian_rows(&self, s: &[f64]) -> Vec<Vec<(usize, f64)>> {
        let u = self.tail_value(s);
        let nz_alpha: Option<Vec<(usize, f64)>> = self.alpha.as_ref().map(|a| {
            a.iter()
                .enumerate()
                .filter(|(_, w)| **w != 0.0)
                .map(|(j, w)| (j, *w))
                .collect()
        });
        self.rows
            .iter()
            .map(|row| {
                let mut out = Vec::new();
                let mut du = 0.0;
                for e in row {
                    let ut = u.powi(e.tail as i32);
                    for (pos, &(j, c)) in e.window.iter().enumerate() {
                        let mut d = e.prob * c as f64 * s[j].powi(c as i32 - 1) * ut;
                        for (other, &(l, cl)) in e.window.iter().enumerate() {
                            if other != pos {
                                d *= s[l].powi(cl as i32);
                            }
                        }
                        out.push((j, d));
                    }
                    if e.tail > 0 {
                        let mut d = e.prob * e.tail as f64 * u.powi(e.tail as i32 - 1);
                        for &(l, cl) in &e.window {
                            d *= s[l].powi(cl as i32);
                        }
                        du += d;
                    }
                }
                if let (Some(alpha), true) = (&nz_alpha, du != 0.0) {
                    out.extend(alpha.iter().map(|&(j, w)| (j, du * w)));
                }
                out
            })
            .collect()
    }

    /// Expected number of children of type above `k`, per parent type.
    pub fn tail_mass(&self) -> Vec<f64> {
        self.rows
            .iter()
            .map(|row| row.iter().map(|e| e.prob * e.tail as f64).sum())
            .collect()
    }

    /// North-west corner of the mean matrix (children of types `<= k`).
    pub fn window_mean(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        for (i, row) in self.rows.iter().enumerate() {
            for e in row {
                for &(j, c) in &e.window {
                    m[(i, j)] += e.prob * c as f64;
                }
            }
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::zoo::{Example1, Example2, Example3};
    use approx::assert_relative_eq;

    #[test]
    fn realize_alphas() {
        assert_eq!(
            ReplacementDistribution::FirstType.realize(3).unwrap(),
            vec![1.0, 0.0, 0.0]
        );
        assert_eq!(
            ReplacementDistribution::LastType.realize(3).unwrap(),
            vec![0.0, 0.0, 1.0]
        );
        let c = ReplacementDistribution::parse(r#"custom:{"head":[0.25],"tail":[0.75]}"#).unwrap();
        assert_eq!(c.realize(4).unwrap(), vec![0.25, 0.0, 0.0, 0.75]);
        assert_eq!(c.realize(1).unwrap(), vec![1.0]);
        let h = ReplacementDistribution::parse("custom:[1,1]").unwrap();
        assert_eq!(h.realize(3).unwrap(), vec![0.5, 0.5, 0.0]);
        assert!(ReplacementDistribution::parse("custom:[0]").is_err());
        assert!(ReplacementDistribution::parse("bogus").is_err());
        assert!(ReplacementDistribution::FirstType.is_tight());
        assert!(!ReplacementDistribution::Uniform.is_tight());
    }

    #[test]
    fn example1_k1_is_scalar() {
        let m = Example1::new(0.3, 0.5).unwrap();
        let s = build_truncated(&m, 1, TruncationMode::Sterile).unwrap();
        assert_eq!(s.system_eval(&[0.2]).unwrap(), vec![1.0]);
        let s = build_truncated(&m, 1, TruncationMode::Immortal).unwrap();
        assert_relative_eq!(s.system_eval(&[0.2]).unwrap()[0], 0.7);
        assert!(s.system_eval(&[0.2, 0.3]).is_err());
    }

    #[test]
    fn example3_window_starts_at_two() {
        let m = Example3::new(0.5, 0.5).unwrap();
        assert!(build_truncated(&m, 1, TruncationMode::Sterile).is_err());
        let s = build_truncated(&m, 4, TruncationMode::Immortal).unwrap();
        assert_eq!(s.dim(), 3);
        assert_eq!(s.tail_mass()[0], 0.0);
        assert!(s.tail_mass()[2] > 0.0);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let m = Example2::new(1.0 / 6.0, 7.0 / 8.0, 2.0).unwrap();
        for mode in [
            TruncationMode::Sterile,
            TruncationMode::Immortal,
            TruncationMode::Augmented(ReplacementDistribution::Uniform),
        ] {
            let sys = build_truncated(&m, 6, mode).unwrap();
            let s: Vec<f64> = (0..6).map(|j| 0.3 + 0.1 * j as f64).collect();
            let jac = sys.jacobian(&s);
            let h = 1e-6;
            for j in 0..6 {
                let mut up = s.clone();
                let mut dn = s.clone();
                up[j] += h;
                dn[j] -= h;
                let gu = sys.system_eval(&up).unwrap();
                let gd = sys.system_eval(&dn).unwrap();
                for i in 0..6 {
                    assert_relative_eq!(jac[(i, j)], (gu[i] - gd[i]) / (2.0 * h), epsilon = 1e-7);
                }
            }
        }
    }

    #[test]
    fn mode_parsing() {
        assert_eq!(
            TruncationMode::parse("sterile", None).unwrap(),
            TruncationMode::Sterile
        );
        assert!(TruncationMode::parse("sterile", Some("e1")).is_err());
        assert_eq!(
            TruncationMode::parse("augmented", Some("uniform"))
                .unwrap()
                .to_string(),
            "augmented[uniform]"
        );
    }
}
