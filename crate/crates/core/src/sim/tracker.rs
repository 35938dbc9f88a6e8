use crate::progeny::TypeIndex;

use super::Fate;

/// Per-generation bookkeeping of the sterile truncations at several levels
/// and, optionally, of the untruncated process.
#[derive(Clone, Debug)]
pub(crate) struct LevelTracker {
    levels: Vec<TypeIndex>,
    cap: u64,
    sterile: Vec<Option<(Fate, u32)>>,
    seeds: Vec<u64>,
    tau: Vec<Option<u32>>,
    global: Option<Option<Fate>>,
}

impl LevelTracker {
    pub(crate) fn new(levels: &[TypeIndex], cap: u64, track_global: bool) -> Self {
        let n = levels.len();
        LevelTracker {
            levels: levels.to_vec(),
            cap,
            sterile: vec![None; n],
            seeds: vec![0; n],
            tau: vec![None; n],
            global: track_global.then_some(None),
        }
    }

    /// Records generation `gen`, given as `(type, class, count)` cells of
    /// every individual that some unresolved process still needs.
    pub(crate) fn observe(&mut self, gen: u32, cells: &[(TypeIndex, TypeIndex, u64)]) {
        for (idx, &k) in self.levels.iter().enumerate() {
            if self.sterile[idx].is_some() {
                continue;
            }
            let mut pop = 0u64;
            let mut seeds = 0u64;
            for &(ty, class, n) in cells {
                if class <= k {
                    if ty <= k {
                        pop = pop.saturating_add(n);
                    } else {
                        seeds = seeds.saturating_add(n);
                    }
                }
            }
            if seeds > 0 && self.tau[idx].is_none() {
                self.tau[idx] = Some(gen);
            }
            self.seeds[idx] = self.seeds[idx].saturating_add(seeds);
            if pop == 0 {
                self.sterile[idx] = Some((Fate::Extinct, gen));
            } else if pop > self.cap {
                self.sterile[idx] = Some((Fate::Exploded, gen));
            }
        }
        if let Some(None) = self.global {
            let pop = cells.iter().fold(0u64, |acc, c| acc.saturating_add(c.2));
            if pop == 0 {
                self.global = Some(Some(Fate::Extinct));
            } else if pop > self.cap {
                self.global = Some(Some(Fate::Exploded));
            }
        }
    }

    /// Whether individuals in the cell must still be given offspring.
    pub(crate) fn needs(&self, ty: TypeIndex, class: TypeIndex) -> bool {
        if let Some(None) = self.global {
            return true;
        }
        self.levels
            .iter()
            .zip(&self.sterile)
            .any(|(&k, fate)| fate.is_none() && class <= k && ty <= k)
    }

    pub(crate) fn all_resolved(&self) -> bool {
        self.sterile.iter().all(Option::is_some) && !matches!(self.global, Some(None))
    }

    /// Marks everything still open at the horizon as unresolved.
    pub(crate) fn close(&mut self, gen: u32) {
        for fate in &mut self.sterile {
            if fate.is_none() {
                *fate = Some((Fate::Unresolved, gen));
            }
        }
        if let Some(None) = self.global {
            self.global = Some(Some(Fate::Unresolved));
        }
    }

    pub(crate) fn sterile(&self, idx: usize) -> (Fate, Option<u32>) {
        match self.sterile[idx] {
            Some((f, g)) if f != Fate::Unresolved => (f, Some(g)),
            _ => (Fate::Unresolved, None),
        }
    }

    pub(crate) fn seeds(&self, idx: usize) -> u64 {
        self.seeds[idx]
    }

    pub(crate) fn tau(&self, idx: usize) -> Option<u32> {
        self.tau[idx]
    }

    pub(crate) fn global(&self) -> Option<Fate> {
        self.global.map(|g| g.unwrap_or(Fate::Unresolved))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn root_above_level_is_a_seed() {
        let mut t = LevelTracker::new(&[0, 2], 100, false);
        t.observe(0, &[(1, 0, 1)]);
        assert_eq!(t.sterile(0), (Fate::Extinct, Some(0)));
        assert_eq!(t.seeds(0), 1);
        assert_eq!(t.tau(0), Some(0));
        assert!(t.needs(1, 0));
        t.observe(1, &[(3, 1, 2)]);
        assert_eq!(t.sterile(1), (Fate::Extinct, Some(1)));
        assert_eq!(t.seeds(1), 2);
        assert!(t.all_resolved());
    }

    #[test]
    fn cap_and_horizon() {
        let mut t = LevelTracker::new(&[5], 10, true);
        t.observe(0, &[(1, 0, 11)]);
        assert_eq!(t.sterile(0).0, Fate::Exploded);
        assert_eq!(t.global(), Some(Fate::Exploded));
        let mut t = LevelTracker::new(&[5], 10, false);
        t.observe(0, &[(1, 0, 3)]);
        t.close(0);
        assert_eq!(t.sterile(0), (Fate::Unresolved, None));
    }
}
