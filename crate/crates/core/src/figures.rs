//! Data behind the published extinction-probability plots: per-level
//! sequences for the Example 2 and Example 3 panels and the Example 1
//! parameter surfaces.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::ModelError;
use crate::progeny::{ProgenyModel, TypeIndex};
use crate::solver::{truncated_extinction, SolverConfig};
use crate::truncation::{ReplacementDistribution, TruncationMode};
use crate::zoo::{example1_oracles, Example2, Example3};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FigureId {
    Fig3,
    Fig5a,
    Fig5b,
    Fig5c,
    Fig5d,
    Fig7Top,
    Fig7Bottom,
}

impl FigureId {
    pub const ALL: [FigureId; 7] = [
        FigureId::Fig3,
        FigureId::Fig5a,
        FigureId::Fig5b,
        FigureId::Fig5c,
        FigureId::Fig5d,
        FigureId::Fig7Top,
        FigureId::Fig7Bottom,
    ];

    pub fn parse(s: &str) -> Result<Self, ModelError> {
        Self::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| {
                ModelError::Parse(format!(
                    "unknown figure `{s}` (expected one of {})",
                    Self::names()
                ))
            })
    }

    pub fn names() -> String {
        Self::ALL.map(|f| f.name()).join(", ")
    }

    pub fn name(self) -> &'static str {
        match self {
            FigureId::Fig3 => "fig3",
            FigureId::Fig5a => "fig5a",
            FigureId::Fig5b => "fig5b",
            FigureId::Fig5c => "fig5c",
            FigureId::Fig5d => "fig5d",
            FigureId::Fig7Top => "fig7-top",
            FigureId::Fig7Bottom => "fig7-bottom",
        }
    }

    /// Model of a sequence panel; `None` for the parameter surface.
    pub fn model(self) -> Option<Arc<dyn ProgenyModel>> {
        let ex2 = |a: f64, c: f64, d: f64| -> Arc<dyn ProgenyModel> {
            Arc::new(Example2::new(a, c, d).expect("valid"))
        };
        let ex3 =
            |p: f64| -> Arc<dyn ProgenyModel> { Arc::new(Example3::new(p, 0.5).expect("valid")) };
        match self {
            FigureId::Fig3 => None,
            FigureId::Fig5a => Some(ex2(1.0 / 6.0, 7.0 / 8.0, 1.0 / 0.95)),
            FigureId::Fig5b => Some(ex2(1.0 / 6.0, 7.0 / 8.0, 1.0 / 0.93)),
            FigureId::Fig5c => Some(ex2(1.0 / 3.0, 13.0 / 16.0, 2.0)),
            FigureId::Fig5d => Some(ex2(1.0 / 6.0, 13.0 / 16.0, 2.0)),
            FigureId::Fig7Top => Some(ex3(0.5)),
            FigureId::Fig7Bottom => Some(ex3(7.0 / 9.0)),
        }
    }
}

impl fmt::Display for FigureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// First component of every truncation at one level; `NaN` where a solve
/// failed.
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceRow {
    pub k: TypeIndex,
    pub sterile: f64,
    pub immortal: f64,
    pub augmented_first: f64,
    pub augmented_uniform: f64,
    pub augmented_last: f64,
}

impl SequenceRow {
    pub const HEADER: [&'static str; 6] =
        ["k", "q_tilde", "q", "q_bar_e1", "q_bar_uniform", "q_bar_ek"];

    pub fn values(&self) -> [f64; 5] {
        [
            self.sterile,
            self.immortal,
            self.augmented_first,
            self.augmented_uniform,
            self.augmented_last,
        ]
    }

    pub fn complete(&self) -> bool {
        self.values().iter().all(|v| v.is_finite())
    }
}

/// Modes in the column order of [`SequenceRow`].
pub fn figure_modes() -> [TruncationMode; 5] {
    [
        TruncationMode::Sterile,
        TruncationMode::Immortal,
        TruncationMode::Augmented(ReplacementDistribution::FirstType),
        TruncationMode::Augmented(ReplacementDistribution::Uniform),
        TruncationMode::Augmented(ReplacementDistribution::LastType),
    ]
}

/// Solves every truncation of `model` at levels `first_type..=k_max`,
/// reporting the component of the first type.
pub fn sequence_table(
    model: &dyn ProgenyModel,
    k_max: TypeIndex,
    config: &SolverConfig,
) -> Vec<SequenceRow> {
    let first = model.first_type();
    let modes = figure_modes();
    (first..=k_max.max(first))
        .into_par_iter()
        .map(|k| {
            let v: Vec<f64> = modes
                .iter()
                .map(|m| truncated_extinction(model, k, m, config).map_or(f64::NAN, |o| o.x[0]))
                .collect();
            SequenceRow {
                k,
                sterile: v[0],
                immortal: v[1],
                augmented_first: v[2],
                augmented_uniform: v[3],
                augmented_last: v[4],
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct SurfaceRow {
    pub a: f64,
    pub b: f64,
    pub q1: f64,
    pub q_tilde1: f64,
    pub q_bar1: f64,
}

impl SurfaceRow {
    pub const HEADER: [&'static str; 8] = ["a", "b", "q1", "q_tilde1", "q_bar1", "z1", "z2", "z3"];

    /// `q~ - q`, `q_bar - q` and `q~ - q_bar`.
    pub fn differences(&self) -> [f64; 3] {
        [
            self.q_tilde1 - self.q1,
            self.q_bar1 - self.q1,
            self.q_tilde1 - self.q_bar1,
        ]
    }
}

/// Cell midpoints `(j + 1/2) / n` of an `n x n` grid on `(0,1)^2`.
pub fn surface_grid(n: usize) -> Vec<(f64, f64)> {
    let mid = |j: usize| (j as f64 + 0.5) / n as f64;
    (0..n)
        .flat_map(|i| (0..n).map(move |j| (mid(i), mid(j))))
        .collect()
}

/// Example 1 closed-form limits over the grid.
pub fn surface_table(n: usize) -> Result<Vec<SurfaceRow>, ModelError> {
    surface_grid(n)
        .into_iter()
        .map(|(a, b)| {
            let o = example1_oracles(a, b)?;
            Ok(SurfaceRow {
                a,
                b,
                q1: o.q1,
                q_tilde1: o.q_tilde1,
                q_bar1: o.q_bar1,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_round_trip() {
        for f in FigureId::ALL {
            assert_eq!(FigureId::parse(f.name()).unwrap(), f);
        }
        assert!(FigureId::parse("fig4").is_err());
        assert!(FigureId::Fig3.model().is_none());
        assert_eq!(FigureId::Fig7Top.model().unwrap().first_type(), 2);
    }

    #[test]
    fn surface_rows() {
        let rows = surface_table(4).unwrap();
        assert_eq!(rows.len(), 16);
        assert_eq!((rows[0].a, rows[0].b), (0.125, 0.125));
        for r in &rows {
            assert!(
                r.q1 <= r.q_bar1 + 1e-12 && r.q_bar1 <= r.q_tilde1 + 1e-12,
                "{r:?}"
            );
        }
    }

    #[test]
    fn sequence_rows_are_sandwiched() {
        let model = FigureId::Fig5c.model().unwrap();
        let rows = sequence_table(model.as_ref(), 12, &SolverConfig::default());
        assert_eq!(rows.len(), 12);
        for r in &rows {
            assert!(r.complete());
            for bar in [r.augmented_first, r.augmented_uniform, r.augmented_last] {
                assert!(
                    r.immortal <= bar + 1e-12 && bar <= r.sterile + 1e-12,
                    "{r:?}"
                );
            }
        }
    }
}
