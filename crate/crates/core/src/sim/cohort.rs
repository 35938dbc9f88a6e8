//! Count-based engine: individuals sharing `(type, class)` are reproduced
//! together with one multinomial draw over the events of their law.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;

use crate::error::SimError;
use crate::progeny::{LawCache, ProgenyModel, TypeIndex};

use super::tracker::LevelTracker;
use super::{finish_levels, stream, CoupledPath, Fate, SimConfig, TAG_REPLACEMENT, TAG_TREE};

/// Multinomial split of `n` draws over the probability vector `w`.
pub(crate) fn multinomial<R: Rng + ?Sized>(n: u64, w: &[f64], rng: &mut R) -> Vec<u64> {
    let mut out = vec![0u64; w.len()];
    let mut left = n;
    let mut mass: f64 = w.iter().sum();
    for (j, &p) in w.iter().enumerate() {
        if left == 0 {
            break;
        }
        if p <= 0.0 {
            continue;
        }
        if mass <= p || j + 1 == w.len() {
            out[j] = left;
            break;
        }
        let draw = Binomial::new(left, (p / mass).clamp(0.0, 1.0))
            .expect("clamped")
            .sample(rng);
        out[j] = draw;
        left -= draw;
        mass -= p;
    }
    out
}

/// Simulates one path of the process started from one individual of type
/// `initial_type`, coupled across the configured levels.
pub fn simulate_path(
    cache: &mut LawCache,
    initial_type: TypeIndex,
    config: &SimConfig,
    path: u64,
) -> Result<CoupledPath, SimError> {
    let first = cache.model().first_type();
    let kmax = config.levels.last().copied().unwrap_or(0);
    let class_cap = kmax.saturating_add(1);
    let mut rng = stream(config.seed, path, TAG_TREE);
    let mut tracker = LevelTracker::new(&config.levels, config.max_population, config.track_global);
    let mut cells: BTreeMap<(TypeIndex, TypeIndex), u64> = BTreeMap::new();
    cells.insert((initial_type, 0), 1);
    let mut history = config.record_generations.then(Vec::new);
    let mut gen = 0u32;
    loop {
        let flat: Vec<(TypeIndex, TypeIndex, u64)> =
            cells.iter().map(|(&(t, c), &n)| (t, c, n)).collect();
        tracker.observe(gen, &flat);
        if let Some(h) = history.as_mut() {
            let mut by_type: BTreeMap<TypeIndex, u64> = BTreeMap::new();
            for &(t, _, n) in &flat {
                *by_type.entry(t).or_insert(0) += n;
            }
            h.push(by_type.into_iter().collect());
        }
        if tracker.all_resolved() {
            break;
        }
        if gen == config.max_generations {
            tracker.close(gen);
            break;
        }
        let mut next: BTreeMap<(TypeIndex, TypeIndex), u64> = BTreeMap::new();
        for (&(ty, class), &n) in &cells {
            if !tracker.needs(ty, class) {
                continue;
            }
            let law = cache.get(ty)?;
            let child_class = class.max(ty).min(class_cap);
            let counts = law.sample_counts(n, &mut rng);
            for (e, &m) in law.events().iter().zip(&counts) {
                if m == 0 {
                    continue;
                }
                for &(ct, cc) in e.offspring.entries() {
                    *next.entry((ct, child_class)).or_insert(0) += m * cc as u64;
                }
            }
        }
        cells = next;
        gen += 1;
    }
    let mut augmented = Vec::with_capacity(config.levels.len());
    for (idx, &k) in config.levels.iter().enumerate() {
        let (sterile, _) = tracker.sterile(idx);
        let fate = match sterile {
            Fate::Extinct if tracker.seeds(idx) == 0 => Fate::Extinct,
            Fate::Extinct => {
                let alpha = config.alpha.realize((k - first + 1) as usize)?;
                let mut rng = stream(config.seed, path, TAG_REPLACEMENT + k as u64);
                continue_augmented(cache, k, &alpha, tracker.seeds(idx), config, &mut rng)?
            }
            other => other,
        };
        augmented.push(fate);
    }
    Ok(CoupledPath {
        path,
        initial_type,
        levels: finish_levels(&config.levels, &tracker, &augmented),
        global: tracker.global(),
        generations: history,
    })
}

/// Runs the augmented truncation at level `k` from `seeds` individuals
/// whose types are drawn from `alpha`.
fn continue_augmented<R: Rng + ?Sized>(
    cache: &mut LawCache,
    k: TypeIndex,
    alpha: &[f64],
    seeds: u64,
    config: &SimConfig,
    rng: &mut R,
) -> Result<Fate, SimError> {
    let first = cache.model().first_type();
    let mut counts = multinomial(seeds, alpha, rng);
    for _ in 0..=config.max_generations {
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Ok(Fate::Extinct);
        }
        if total > config.max_population {
            return Ok(Fate::Exploded);
        }
        let mut next = vec![0u64; counts.len()];
        let mut exceeding = 0u64;
        for (pos, &n) in counts.iter().enumerate() {
            if n == 0 {
                continue;
            }
            let law = cache.get(first + pos as u32)?;
            let draws = law.sample_counts(n, rng);
            for (e, &m) in law.events().iter().zip(&draws) {
                if m == 0 {
                    continue;
                }
                for &(ct, cc) in e.offspring.entries() {
                    if ct <= k {
                        next[(ct - first) as usize] += m * cc as u64;
                    } else {
                        exceeding += m * cc as u64;
                    }
                }
            }
        }
        if exceeding > 0 {
            for (slot, add) in next.iter_mut().zip(multinomial(exceeding, alpha, rng)) {
                *slot += add;
            }
        }
        counts = next;
    }
    Ok(Fate::Unresolved)
}

/// Simulates `config.paths` independent paths in parallel. Path `p` uses its
/// own random streams, so results do not depend on the thread count.
pub fn simulate_paths(
    model: Arc<dyn ProgenyModel>,
    initial_type: TypeIndex,
    config: &SimConfig,
) -> Result<Vec<CoupledPath>, SimError> {
    config.validate(model.as_ref(), initial_type)?;
    (0..config.paths)
        .into_par_iter()
        .map_init(
            || LawCache::new(model.clone()),
            |cache, p| simulate_path(cache, initial_type, config, p),
        )
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::zoo::Example1;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn multinomial_conserves_total() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let out = multinomial(1000, &[0.2, 0.0, 0.5, 0.3], &mut rng);
        assert_eq!(out.iter().sum::<u64>(), 1000);
        assert_eq!(out[1], 0);
    }

    #[test]
    fn deterministic_given_seed() {
        let model: Arc<dyn ProgenyModel> = Arc::new(Example1::new(0.6, 0.5).unwrap());
        let cfg = SimConfig {
            paths: 50,
            levels: vec![1, 3, 6],
            track_global: true,
            ..Default::default()
        };
        let a = simulate_paths(model.clone(), 1, &cfg).unwrap();
        let b = simulate_paths(model, 1, &cfg).unwrap();
        assert_eq!(a, b);
    }
}
