//! Coupled pathwise simulation of a process and its truncations.
//!
//! Every individual carries a class, the largest type among its strict
//! ancestors (0 for the root). For a level `k`:
//!
//! * the sterile truncation consists of individuals with class and type at
//!   most `k`;
//! * its seeds are individuals with class at most `k` and type above `k`,
//!   i.e. the children that leave the window;
//! * the immortal truncation dies out exactly when the sterile one does and
//!   there were no seeds;
//! * the augmented truncation continues from the seeds with their types
//!   redrawn from the replacement distribution.
//!
//! Two engines share this bookkeeping: [`cohort`] simulates counts per
//! `(type, class)` cell and is used for Monte Carlo, [`genealogy`] keeps
//! labelled individuals and replays prescribed trees.

pub mod cohort;
pub mod genealogy;
pub mod stats;
mod tracker;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::SimError;
use crate::progeny::{ProgenyModel, TypeIndex};
use crate::truncation::ReplacementDistribution;

pub use cohort::{simulate_path, simulate_paths};
pub use genealogy::{
    derive_labelled_path, seed_counts_for_tree, Label, OffspringSource, RandomLabelSource,
    ReplaySource, TreeSpec,
};
pub use stats::{
    attach_solver_column, check_path_invariants, estimate_extinction, mc_extinction,
    seed_statistics, solver_seed_zero, ExtinctionEstimate, McTarget, SeedRow,
};

/// Outcome of one process on one path.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Fate {
    Extinct,
    /// The immortal truncation contains an individual above the window and
    /// therefore survives forever.
    Immortal,
    /// Population exceeded the cap; treated as survival.
    Exploded,
    /// Still alive and below the cap at the generation horizon.
    Unresolved,
}

impl Fate {
    pub fn is_extinct(self) -> bool {
        self == Fate::Extinct
    }

    /// Survival was not observed directly (cap or horizon).
    pub fn is_censored(self) -> bool {
        matches!(self, Fate::Exploded | Fate::Unresolved)
    }

    pub fn is_resolved(self) -> bool {
        self != Fate::Unresolved
    }

    pub fn label(self) -> &'static str {
        match self {
            Fate::Extinct => "extinct",
            Fate::Immortal => "immortal",
            Fate::Exploded => "exploded",
            Fate::Unresolved => "unresolved",
        }
    }
}

/// Number of seeds, unknown when the sterile truncation is unresolved.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SeedCount {
    Known(u64),
    Unknown,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LevelOutcome {
    pub k: TypeIndex,
    pub sterile: Fate,
    /// Generation at which the sterile truncation was resolved.
    pub sterile_resolved_at: Option<u32>,
    pub immortal: Fate,
    pub augmented: Fate,
    /// Seeds of the sterile truncation. An exploded sterile truncation is
    /// recorded with zero seeds.
    pub seeds: SeedCount,
    /// First generation containing a type above `k`.
    pub tau: Option<u32>,
    /// Whether this sterile truncation died while the one at the next
    /// listed level exploded; `None` for the last level or when either is
    /// unresolved.
    pub catastrophe: Option<bool>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoupledPath {
    pub path: u64,
    pub initial_type: TypeIndex,
    pub levels: Vec<LevelOutcome>,
    pub global: Option<Fate>,
    /// Per generation, counts by type of the simulated part of the tree.
    pub generations: Option<Vec<Vec<(TypeIndex, u64)>>>,
}

impl CoupledPath {
    pub fn level(&self, k: TypeIndex) -> Result<&LevelOutcome, SimError> {
        self.levels
            .iter()
            .find(|l| l.k == k)
            .ok_or(SimError::UnknownLevel(k))
    }

    pub fn seed_count(&self, k: TypeIndex) -> Result<SeedCount, SimError> {
        self.level(k).map(|l| l.seeds)
    }

    /// Some process on the path was cut by the cap or the horizon.
    pub fn censored(&self) -> bool {
        self.global.is_some_and(|g| g.is_censored())
            || self.levels.iter().any(|l| {
                l.sterile.is_censored() || l.immortal.is_censored() || l.augmented.is_censored()
            })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub max_generations: u32,
    pub max_population: u64,
    pub paths: u64,
    pub seed: u64,
    /// Truncation levels, strictly increasing.
    pub levels: Vec<TypeIndex>,
    pub alpha: ReplacementDistribution,
    /// Also follow the untruncated process until extinction or the cap.
    pub track_global: bool,
    pub record_generations: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            max_generations: 500,
            max_population: 1_000_000,
            paths: 10_000,
            seed: 42,
            levels: vec![5, 10, 20],
            alpha: ReplacementDistribution::FirstType,
            track_global: false,
            record_generations: false,
        }
    }
}

impl SimConfig {
    pub fn validate(
        &self,
        model: &dyn ProgenyModel,
        initial_type: TypeIndex,
    ) -> Result<(), SimError> {
        crate::progeny::check_type(model, initial_type)?;
        if self.max_generations == 0 || self.max_population == 0 || self.paths == 0 {
            return Err(SimError::Config(
                "generations, population cap and paths must be positive".into(),
            ));
        }
        if self.levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(SimError::Config(format!(
                "levels {:?} must be strictly increasing",
                self.levels
            )));
        }
        if let Some(&k) = self.levels.iter().find(|&&k| k < initial_type) {
            return Err(SimError::Config(format!(
                "level {k} is below the initial type {initial_type}"
            )));
        }
        if self.levels.is_empty() && !self.track_global {
            return Err(SimError::Config(
                "nothing to simulate: no levels and no global tracking".into(),
            ));
        }
        for &k in &self.levels {
            self.alpha.realize((k - model.first_type() + 1) as usize)?;
        }
        Ok(())
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a sequence of words into one seed.
pub(crate) fn mix(words: &[u64]) -> u64 {
    words
        .iter()
        .fold(0x6a09_e667_f3bc_c909, |h, &w| splitmix(h ^ splitmix(w)))
}

/// Independent stream for `(seed, path, tag)`.
pub(crate) fn stream(seed: u64, path: u64, tag: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(&[seed, path, tag]))
}

pub(crate) const TAG_TREE: u64 = 0;
pub(crate) const TAG_REPLACEMENT: u64 = 1 << 40;

pub(crate) fn finish_levels(
    levels: &[TypeIndex],
    tracker: &tracker::LevelTracker,
    augmented: &[Fate],
) -> Vec<LevelOutcome> {
    let mut out: Vec<LevelOutcome> = levels
        .iter()
        .enumerate()
        .map(|(idx, &k)| {
            let (sterile, at) = tracker.sterile(idx);
            let raw_seeds = tracker.seeds(idx);
            let seeds = match sterile {
                Fate::Extinct => SeedCount::Known(raw_seeds),
                Fate::Exploded => SeedCount::Known(0),
                _ => SeedCount::Unknown,
            };
            let immortal = if raw_seeds > 0 {
                Fate::Immortal
            } else {
                sterile
            };
            LevelOutcome {
                k,
                sterile,
                sterile_resolved_at: at,
                immortal,
                augmented: augmented[idx],
                seeds,
                tau: tracker.tau(idx),
                catastrophe: None,
            }
        })
        .collect();
    for idx in 0..out.len().saturating_sub(1) {
        let (a, b) = (out[idx].sterile, out[idx + 1].sterile);
        out[idx].catastrophe = match (a, b) {
            (Fate::Extinct, Fate::Exploded) => Some(true),
            (Fate::Unresolved, _) | (Fate::Extinct, Fate::Unresolved) => None,
            _ => Some(false),
        };
    }
    out
}
