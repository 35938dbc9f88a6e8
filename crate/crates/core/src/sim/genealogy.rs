//! Labelled engine. Individuals carry Ulam-Harris labels, sequences of
//! `(ordinal, type)` steps from the root: the `n`-th child of type `t` of the
//! individual labelled `x` is `x (n, t)`. Offspring and replacement draws are
//! looked up by label, so the same label always has the same offspring in
//! every coupled process.
//!
//! In the augmented process, when an individual's `l`-th child above the
//! window is replaced by a child of type `t`, the new child gets the next
//! unused ordinal among its type-`t` siblings. Its label therefore does not
//! occur in the untruncated tree and its descendants are fresh draws.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::SimError;
use crate::progeny::{LawCache, ProgenyModel, SparseOffspring, TypeIndex};
use crate::truncation::ReplacementDistribution;

use super::tracker::LevelTracker;
use super::{finish_levels, mix, CoupledPath, Fate, SeedCount, SimConfig};

pub type Label = Vec<(u32, TypeIndex)>;

/// Supplies offspring vectors and replacement types by label.
pub trait OffspringSource {
    fn offspring(
        &mut self,
        label: &[(u32, TypeIndex)],
        ty: TypeIndex,
    ) -> Result<SparseOffspring, SimError>;

    /// Type replacing the `l`-th (from 1) child above level `k` of the
    /// individual `label`.
    fn replacement(
        &mut self,
        label: &[(u32, TypeIndex)],
        k: TypeIndex,
        l: u32,
    ) -> Result<TypeIndex, SimError>;
}

fn label_hash(seed: u64, tag: u64, label: &[(u32, TypeIndex)], extra: &[u64]) -> u64 {
    let mut words = vec![seed, tag, label.len() as u64];
    words.extend(label.iter().map(|&(o, t)| ((o as u64) << 32) | t as u64));
    words.extend_from_slice(extra);
    mix(&words)
}

/// Draws offspring from the model with a random stream keyed by the label.
#[derive(Debug, Clone)]
pub struct RandomLabelSource {
    cache: LawCache,
    seed: u64,
    alpha: ReplacementDistribution,
    realized: HashMap<TypeIndex, Vec<f64>>,
}

impl RandomLabelSource {
    pub fn new(model: Arc<dyn ProgenyModel>, seed: u64, alpha: ReplacementDistribution) -> Self {
        RandomLabelSource {
            cache: LawCache::new(model),
            seed,
            alpha,
            realized: HashMap::new(),
        }
    }
}

impl OffspringSource for RandomLabelSource {
    fn offspring(
        &mut self,
        label: &[(u32, TypeIndex)],
        ty: TypeIndex,
    ) -> Result<SparseOffspring, SimError> {
        let law = self.cache.get(ty)?;
        let mut rng = ChaCha8Rng::seed_from_u64(label_hash(self.seed, 1, label, &[ty as u64]));
        Ok(law.sample(&mut rng).clone())
    }

    fn replacement(
        &mut self,
        label: &[(u32, TypeIndex)],
        k: TypeIndex,
        l: u32,
    ) -> Result<TypeIndex, SimError> {
        let first = self.cache.model().first_type();
        if !self.realized.contains_key(&k) {
            let w = self.alpha.realize((k - first + 1) as usize)?;
            self.realized.insert(k, w);
        }
        let w = &self.realized[&k];
        let mut rng =
            ChaCha8Rng::seed_from_u64(label_hash(self.seed, 2, label, &[k as u64, l as u64]));
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (pos, p) in w.iter().enumerate() {
            acc += p;
            if u < acc {
                return Ok(first + pos as u32);
            }
        }
        let last = w.iter().rposition(|p| *p > 0.0).unwrap_or(w.len() - 1);
        Ok(first + last as u32)
    }
}

/// A tree written out explicitly: a type and its children.
#[derive(Clone, Debug, PartialEq)]
pub struct TreeSpec {
    pub ty: TypeIndex,
    pub children: Vec<TreeSpec>,
}

impl TreeSpec {
    pub fn leaf(ty: TypeIndex) -> Self {
        TreeSpec {
            ty,
            children: Vec::new(),
        }
    }

    pub fn node(ty: TypeIndex, children: Vec<TreeSpec>) -> Self {
        TreeSpec { ty, children }
    }
}

/// Prescribed offspring and replacements; a missing entry is an error.
#[derive(Clone, Debug, Default)]
pub struct ReplaySource {
    offspring: HashMap<Label, SparseOffspring>,
    replacements: HashMap<(Label, TypeIndex, u32), TypeIndex>,
}

impl ReplaySource {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set_offspring(&mut self, label: Label, offspring: SparseOffspring) {
        self.offspring.insert(label, offspring);
    }

    pub fn set_replacement(&mut self, label: Label, k: TypeIndex, l: u32, ty: TypeIndex) {
        self.replacements.insert((label, k, l), ty);
    }

    /// Adds every node of `tree`, rooted at `root_label`. Children are
    /// labelled in the order given, numbered separately for each type.
    pub fn add_tree(&mut self, root_label: Label, tree: &TreeSpec) {
        let mut ordinals: BTreeMap<TypeIndex, u32> = BTreeMap::new();
        let mut pairs = Vec::new();
        for child in &tree.children {
            let ord = ordinals.entry(child.ty).or_insert(0);
            *ord += 1;
            pairs.push((child.ty, 1));
            let mut label = root_label.clone();
            label.push((*ord, child.ty));
            self.add_tree(label, child);
        }
        self.offspring.insert(
            root_label,
            SparseOffspring::new(pairs).expect("tree types are positive"),
        );
    }

    pub fn from_tree(tree: &TreeSpec) -> Self {
        let mut s = Self::new();
        s.add_tree(Vec::new(), tree);
        s
    }
}

impl OffspringSource for ReplaySource {
    fn offspring(
        &mut self,
        label: &[(u32, TypeIndex)],
        _ty: TypeIndex,
    ) -> Result<SparseOffspring, SimError> {
        self.offspring
            .get(label)
            .cloned()
            .ok_or_else(|| SimError::MissingReplay(format!("offspring for label {label:?}")))
    }

    fn replacement(
        &mut self,
        label: &[(u32, TypeIndex)],
        k: TypeIndex,
        l: u32,
    ) -> Result<TypeIndex, SimError> {
        self.replacements
            .get(&(label.to_vec(), k, l))
            .copied()
            .ok_or_else(|| {
                SimError::MissingReplay(format!("replacement {l} at level {k} for label {label:?}"))
            })
    }
}

#[derive(Clone, Debug)]
struct Node {
    label: Label,
    ty: TypeIndex,
    class: TypeIndex,
}

fn children_of(node: &Node, off: &SparseOffspring) -> Vec<Node> {
    let mut out = Vec::new();
    for &(ct, cc) in off.entries() {
        for ord in 1..=cc {
            let mut label = node.label.clone();
            label.push((ord, ct));
            out.push(Node {
                label,
                ty: ct,
                class: node.class.max(node.ty),
            });
        }
    }
    out
}

fn cells(nodes: &[Node]) -> Vec<(TypeIndex, TypeIndex, u64)> {
    let mut acc: BTreeMap<(TypeIndex, TypeIndex), u64> = BTreeMap::new();
    for n in nodes {
        *acc.entry((n.ty, n.class)).or_insert(0) += 1;
    }
    acc.into_iter().map(|((t, c), n)| (t, c, n)).collect()
}

/// Grows the tree generation by generation, feeding the tracker, until every
/// tracked process is resolved or the horizon is reached.
fn grow<S: OffspringSource + ?Sized>(
    source: &mut S,
    initial_type: TypeIndex,
    tracker: &mut LevelTracker,
    max_generations: u32,
    mut history: Option<&mut Vec<Vec<(TypeIndex, u64)>>>,
) -> Result<(), SimError> {
    let mut nodes = vec![Node {
        label: Vec::new(),
        ty: initial_type,
        class: 0,
    }];
    let mut gen = 0u32;
    loop {
        tracker.observe(gen, &cells(&nodes));
        if let Some(h) = history.as_deref_mut() {
            let mut by_type: BTreeMap<TypeIndex, u64> = BTreeMap::new();
            for n in &nodes {
                *by_type.entry(n.ty).or_insert(0) += 1;
            }
            h.push(by_type.into_iter().collect());
        }
        if tracker.all_resolved() {
            return Ok(());
        }
        if gen == max_generations {
            tracker.close(gen);
            return Ok(());
        }
        let mut next = Vec::new();
        for node in &nodes {
            if tracker.needs(node.ty, node.class) {
                let off = source.offspring(&node.label, node.ty)?;
                next.extend(children_of(node, &off));
            }
        }
        nodes = next;
        gen += 1;
    }
}

/// Runs the augmented truncation at level `k` individual by individual.
fn augmented_fate<S: OffspringSource + ?Sized>(
    source: &mut S,
    initial_type: TypeIndex,
    k: TypeIndex,
    config: &SimConfig,
) -> Result<Fate, SimError> {
    let mut nodes: Vec<(Label, TypeIndex)> = vec![(Vec::new(), initial_type)];
    for _ in 0..=config.max_generations {
        if nodes.is_empty() {
            return Ok(Fate::Extinct);
        }
        if nodes.len() as u64 > config.max_population {
            return Ok(Fate::Exploded);
        }
        let mut next = Vec::new();
        for (label, ty) in &nodes {
            let off = source.offspring(label, *ty)?;
            let mut used: BTreeMap<TypeIndex, u32> =
                off.entries().iter().map(|&(t, c)| (t, c)).collect();
            let mut l = 0u32;
            for &(ct, cc) in off.entries() {
                for ord in 1..=cc {
                    let mut child = label.clone();
                    if ct <= k {
                        child.push((ord, ct));
                        next.push((child, ct));
                    } else {
                        l += 1;
                        let t = source.replacement(label, k, l)?;
                        let slot = used.entry(t).or_insert(0);
                        *slot += 1;
                        child.push((*slot, t));
                        next.push((child, t));
                    }
                }
            }
        }
        nodes = next;
    }
    Ok(Fate::Unresolved)
}

/// Coupled path from a labelled source: the sterile and immortal truncations
/// come from one tree, each augmented truncation is regrown from the root
/// with the same labels.
pub fn derive_labelled_path<S: OffspringSource + ?Sized>(
    source: &mut S,
    model: &dyn ProgenyModel,
    initial_type: TypeIndex,
    config: &SimConfig,
) -> Result<CoupledPath, SimError> {
    config.validate(model, initial_type)?;
    let mut tracker = LevelTracker::new(&config.levels, config.max_population, config.track_global);
    let mut history = config.record_generations.then(Vec::new);
    grow(
        source,
        initial_type,
        &mut tracker,
        config.max_generations,
        history.as_mut(),
    )?;
    let mut augmented = Vec::with_capacity(config.levels.len());
    for (idx, &k) in config.levels.iter().enumerate() {
        let fate = match tracker.sterile(idx).0 {
            Fate::Extinct if tracker.seeds(idx) == 0 => Fate::Extinct,
            Fate::Extinct => augmented_fate(source, initial_type, k, config)?,
            other => other,
        };
        augmented.push(fate);
    }
    Ok(CoupledPath {
        path: 0,
        initial_type,
        levels: finish_levels(&config.levels, &tracker, &augmented),
        global: tracker.global(),
        generations: history,
    })
}

/// Seed counts of the sterile truncations at `levels` (any nonnegative
/// integers) for the tree supplied by `source`.
pub fn seed_counts_for_tree<S: OffspringSource + ?Sized>(
    source: &mut S,
    initial_type: TypeIndex,
    levels: &[TypeIndex],
    max_generations: u32,
    max_population: u64,
) -> Result<Vec<SeedCount>, SimError> {
    let mut tracker = LevelTracker::new(levels, max_population, false);
    grow(source, initial_type, &mut tracker, max_generations, None)?;
    Ok((0..levels.len())
        .map(|idx| match tracker.sterile(idx).0 {
            Fate::Extinct => SeedCount::Known(tracker.seeds(idx)),
            Fate::Exploded => SeedCount::Known(0),
            _ => SeedCount::Unknown,
        })
        .collect())
}
