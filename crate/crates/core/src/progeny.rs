//! Offspring laws and the `ProgenyModel` abstraction.
//!
//! A model assigns to every type `i >= first_type()` a finite-support law on
//! offspring vectors. Types are positive integers; a model whose type set starts
//! at 2 reports `first_type() == 2` and rejects type 1.

use std::collections::BTreeMap;
use std::fmt::Debug;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Binomial, Distribution};

use crate::error::ModelError;

pub type TypeIndex = u32;

/// Probabilities of a law must add up to one within this tolerance.
pub const LAW_SUM_TOL: f64 = 1e-12;

/// Poisson laws are cut where the remaining tail mass drops below this.
pub const POISSON_TAIL_CUTOFF: f64 = 1e-12;

/// An offspring vector stored as `(type, count)` pairs, strictly increasing in
/// type, every count at least one.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SparseOffspring(Vec<(TypeIndex, u32)>);

impl SparseOffspring {
    pub fn empty() -> Self {
        SparseOffspring(Vec::new())
    }

    /// Builds an offspring vector from arbitrary pairs. Repeated types are
    /// summed and zero counts are dropped.
    pub fn new<I: IntoIterator<Item = (TypeIndex, u32)>>(pairs: I) -> Result<Self, ModelError> {
        let mut merged: BTreeMap<TypeIndex, u32> = BTreeMap::new();
        for (t, c) in pairs {
            if t == 0 {
                return Err(ModelError::InvalidOffspring(
                    "type 0 is not a valid type".into(),
                ));
            }
            if c == 0 {
                continue;
            }
            let slot = merged.entry(t).or_insert(0);
            *slot = slot.checked_add(c).ok_or_else(|| {
                ModelError::InvalidOffspring(format!("count overflow for type {t}"))
            })?;
        }
        Ok(SparseOffspring(merged.into_iter().collect()))
    }

    pub fn entries(&self) -> &[(TypeIndex, u32)] {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.0.iter().map(|&(_, c)| c as u64).sum()
    }

    pub fn count_of(&self, t: TypeIndex) -> u32 {
        self.0
            .binary_search_by_key(&t, |&(ty, _)| ty)
            .map(|pos| self.0[pos].1)
            .unwrap_or(0)
    }

    pub fn max_type(&self) -> Option<TypeIndex> {
        self.0.last().map(|&(t, _)| t)
    }

    /// Adds `shift` to every child type.
    pub fn shifted(&self, shift: u32) -> Self {
        SparseOffspring(self.0.iter().map(|&(t, c)| (t + shift, c)).collect())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Event {
    pub prob: f64,
    pub offspring: SparseOffspring,
}

/// Finite-support probability law on offspring vectors for one parent type.
#[derive(Clone, Debug, PartialEq)]
pub struct TypeLaw {
    events: Vec<Event>,
}

impl TypeLaw {
    /// Validates and normalises a list of `(probability, offspring)` events.
    /// Duplicate offspring vectors are merged and zero-probability events
    /// removed; the probabilities must sum to one within [`LAW_SUM_TOL`].
    pub fn new<I: IntoIterator<Item = (f64, SparseOffspring)>>(
        events: I,
    ) -> Result<Self, ModelError> {
        let mut merged: BTreeMap<SparseOffspring, f64> = BTreeMap::new();
        let mut sum = 0.0;
        for (p, off) in events {
            if !p.is_finite() || !(0.0..=1.0 + LAW_SUM_TOL).contains(&p) {
                return Err(ModelError::InvalidProbability(p));
            }
            sum += p;
            if p > 0.0 {
                *merged.entry(off).or_insert(0.0) += p;
            }
        }
        if (sum - 1.0).abs() > LAW_SUM_TOL {
            return Err(ModelError::ProbabilitySum(sum));
        }
        let events = merged
            .into_iter()
            .map(|(offspring, prob)| Event { prob, offspring })
            .collect();
        Ok(TypeLaw { events })
    }

    /// The law putting all its mass on the empty offspring vector.
    pub fn sterile() -> Self {
        TypeLaw {
            events: vec![Event {
                prob: 1.0,
                offspring: SparseOffspring::empty(),
            }],
        }
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    /// Evaluates the generating function with `s(t)` giving the argument for
    /// type `t`.
    pub fn pgf<F: Fn(TypeIndex) -> f64>(&self, s: F) -> f64 {
        self.events
            .iter()
            .map(|e| {
                e.offspring
                    .entries()
                    .iter()
                    .fold(e.prob, |acc, &(t, c)| acc * s(t).powi(c as i32))
            })
            .sum()
    }

    /// Expected number of children of each type, sorted by type.
    pub fn mean(&self) -> Vec<(TypeIndex, f64)> {
        let mut acc: BTreeMap<TypeIndex, f64> = BTreeMap::new();
        for e in &self.events {
            for &(t, c) in e.offspring.entries() {
                *acc.entry(t).or_insert(0.0) += e.prob * c as f64;
            }
        }
        acc.into_iter().collect()
    }

    pub fn max_type(&self) -> Option<TypeIndex> {
        self.events
            .iter()
            .filter_map(|e| e.offspring.max_type())
            .max()
    }

    /// `E |offspring|^2`, the second moment of the total number of children.
    pub fn total_second_moment(&self) -> f64 {
        self.events
            .iter()
            .map(|e| {
                let n = e.offspring.total() as f64;
                e.prob * n * n
            })
            .sum()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> &SparseOffspring {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for e in &self.events {
            acc += e.prob;
            if u < acc {
                return &e.offspring;
            }
        }
        &self
            .events
            .last()
            .expect("a law has at least one event")
            .offspring
    }

    /// Splits `n` independent parents across the events (multinomial draw).
    pub fn sample_counts<R: Rng + ?Sized>(&self, n: u64, rng: &mut R) -> Vec<u64> {
        let mut counts = vec![0u64; self.events.len()];
        let mut left = n;
        let mut mass = 1.0f64;
        for (j, e) in self.events.iter().enumerate() {
            if left == 0 {
                break;
            }
            if j + 1 == self.events.len() || mass <= e.prob {
                counts[j] = left;
                break;
            }
            let p = (e.prob / mass).clamp(0.0, 1.0);
            let draw = Binomial::new(left, p)
                .expect("p is clamped to [0,1]")
                .sample(rng);
            counts[j] = draw;
            left -= draw;
            mass -= e.prob;
        }
        counts
    }
}

/// A multitype offspring model with countably many types.
pub trait ProgenyModel: Send + Sync + Debug {
    fn name(&self) -> String;

    fn first_type(&self) -> TypeIndex {
        1
    }

    fn law_for(&self, i: TypeIndex) -> Result<TypeLaw, ModelError>;

    /// An upper bound on the child types reachable from parents of type at
    /// most `k`, when the model knows one cheaply.
    fn max_reachable(&self, _k: TypeIndex) -> Option<TypeIndex> {
        None
    }
}

pub fn check_type(model: &dyn ProgenyModel, i: TypeIndex) -> Result<(), ModelError> {
    if i == 0 || i < model.first_type() {
        return Err(ModelError::InvalidType {
            index: i,
            first: model.first_type(),
        });
    }
    Ok(())
}

/// Evaluates `G_i(s)` where `window[j]` is the argument for type
/// `first_type + j` and every type beyond the window receives `tail`.
///
/// Arguments must be finite and non-negative; values above one evaluate the
/// polynomial extension of the generating function.
pub fn pgf_eval(
    model: &dyn ProgenyModel,
    i: TypeIndex,
    window: &[f64],
    tail: f64,
) -> Result<f64, ModelError> {
    check_type(model, i)?;
    if let Some(bad) = window
        .iter()
        .chain(std::iter::once(&tail))
        .find(|v| !v.is_finite() || **v < 0.0)
    {
        return Err(ModelError::InvalidArgument(format!(
            "pgf argument {bad} must be finite and non-negative"
        )));
    }
    let first = model.first_type();
    let law = model.law_for(i)?;
    Ok(law.pgf(|t| {
        let pos = (t - first) as usize;
        if pos < window.len() {
            window[pos]
        } else {
            tail
        }
    }))
}

/// Row `i` of the mean matrix as sorted `(type, mean)` pairs.
pub fn mean_row(
    model: &dyn ProgenyModel,
    i: TypeIndex,
) -> Result<Vec<(TypeIndex, f64)>, ModelError> {
    check_type(model, i)?;
    let row = model.law_for(i)?.mean();
    if let Some(&(t, m)) = row.iter().find(|(_, m)| !m.is_finite()) {
        return Err(ModelError::InvalidArgument(format!(
            "mean entry ({i},{t}) is {m}"
        )));
    }
    Ok(row)
}

pub fn offspring_sample<R: Rng + ?Sized>(
    model: &dyn ProgenyModel,
    i: TypeIndex,
    rng: &mut R,
) -> Result<SparseOffspring, ModelError> {
    check_type(model, i)?;
    Ok(model.law_for(i)?.sample(rng).clone())
}

/// Poisson(`lambda`) probabilities `p_0..p_n`, cut at the first `n` whose
/// remaining tail mass is below [`POISSON_TAIL_CUTOFF`] and renormalised.
pub fn truncated_poisson(lambda: f64) -> Result<Vec<f64>, ModelError> {
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(ModelError::InvalidParameter(format!(
            "Poisson mean {lambda}"
        )));
    }
    if lambda == 0.0 {
        return Ok(vec![1.0]);
    }
    let mut pmf = vec![(-lambda).exp()];
    // 1 - e^{-lambda} without cancellation for tiny lambda.
    let mut tail = -(-lambda).exp_m1();
    while tail >= POISSON_TAIL_CUTOFF {
        let n = pmf.len() as f64;
        let next = pmf[pmf.len() - 1] * lambda / n;
        pmf.push(next);
        tail -= next;
        if next == 0.0 && n > lambda {
            break;
        }
    }
    let total: f64 = pmf.iter().sum();
    for p in &mut pmf {
        *p /= total;
    }
    Ok(pmf)
}

/// Memoised access to the laws of a model, indexed from its first type.
#[derive(Debug, Clone)]
pub struct LawCache {
    model: Arc<dyn ProgenyModel>,
    laws: Vec<Option<Arc<TypeLaw>>>,
}

impl LawCache {
    pub fn new(model: Arc<dyn ProgenyModel>) -> Self {
        LawCache {
            model,
            laws: Vec::new(),
        }
    }

    pub fn model(&self) -> &Arc<dyn ProgenyModel> {
        &self.model
    }

    pub fn get(&mut self, i: TypeIndex) -> Result<Arc<TypeLaw>, ModelError> {
        check_type(self.model.as_ref(), i)?;
        let pos = (i - self.model.first_type()) as usize;
        if pos >= self.laws.len() {
            self.laws.resize(pos + 1, None);
        }
        if let Some(law) = &self.laws[pos] {
            return Ok(law.clone());
        }
        let law = Arc::new(self.model.law_for(i)?);
        self.laws[pos] = Some(law.clone());
        Ok(law)
    }
}

/// What an explicit table model does for types past its last listed law.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailRule {
    /// Unlisted types have no children.
    Extinct,
    /// Unlisted types reuse the last listed law.
    RepeatLast,
    /// Type `last + m` uses the last law with every child type raised by `m`.
    ShiftLast,
}

/// A model given by an explicit list of laws for types
/// `first_type, first_type + 1, ...` and a rule for the remaining types.
#[derive(Clone, Debug)]
pub struct TableModel {
    first: TypeIndex,
    laws: Vec<TypeLaw>,
    tail: TailRule,
}

impl TableModel {
    pub fn new(first: TypeIndex, laws: Vec<TypeLaw>, tail: TailRule) -> Result<Self, ModelError> {
        if first == 0 {
            return Err(ModelError::InvalidParameter(
                "first_type must be at least 1".into(),
            ));
        }
        if laws.is_empty() {
            return Err(ModelError::InvalidParameter(
                "a table model needs at least one law".into(),
            ));
        }
        for (j, law) in laws.iter().enumerate() {
            for e in law.events() {
                if let Some(&(t, _)) = e.offspring.entries().iter().find(|&&(t, _)| t < first) {
                    return Err(ModelError::InvalidOffspring(format!(
                        "type {} has a child of type {t}, below the first type {first}",
                        first + j as u32
                    )));
                }
            }
        }
        Ok(TableModel { first, laws, tail })
    }

    fn last(&self) -> TypeIndex {
        self.first + self.laws.len() as u32 - 1
    }
}

impl ProgenyModel for TableModel {
    fn name(&self) -> String {
        format!("table({} laws, tail {:?})", self.laws.len(), self.tail)
    }

    fn first_type(&self) -> TypeIndex {
        self.first
    }

    fn law_for(&self, i: TypeIndex) -> Result<TypeLaw, ModelError> {
        check_type(self, i)?;
        let last = self.last();
        if i <= last {
            return Ok(self.laws[(i - self.first) as usize].clone());
        }
        let last_law = &self.laws[self.laws.len() - 1];
        match self.tail {
            TailRule::Extinct => Ok(TypeLaw::sterile()),
            TailRule::RepeatLast => Ok(last_law.clone()),
            TailRule::ShiftLast => {
                let shift = i - last;
                TypeLaw::new(
                    last_law
                        .events()
                        .iter()
                        .map(|e| (e.prob, e.offspring.shifted(shift))),
                )
            }
        }
    }

    fn max_reachable(&self, k: TypeIndex) -> Option<TypeIndex> {
        let last = self.last();
        let listed = self
            .laws
            .iter()
            .filter_map(|l| l.max_type())
            .max()
            .unwrap_or(0);
        match self.tail {
            TailRule::Extinct => Some(listed.max(k)),
            TailRule::RepeatLast => Some(listed.max(k)),
            TailRule::ShiftLast => {
                let lastmax = self.laws[self.laws.len() - 1].max_type().unwrap_or(last);
                Some(listed.max(k).max(lastmax + k.saturating_sub(last)))
            }
        }
    }
}
