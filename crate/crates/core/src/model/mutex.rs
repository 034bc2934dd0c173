//! Static action mutexes: `A` and `B` are mutex when one deletes a
//! precondition or an add effect of the other.

use std::collections::HashSet;

use super::{ActionId, GroundAction};

#[derive(Debug, Clone, Default)]
pub struct MutexTable {
    pairs: HashSet<(ActionId, ActionId)>,
}

impl MutexTable {
    pub fn is_mutex(&self, a: ActionId, b: ActionId) -> bool {
        let key = if a <= b { (a, b) } else { (b, a) };
        self.pairs.contains(&key)
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Pairs `(a, b)` with `a < b`, sorted.
    pub fn pairs(&self) -> Vec<(ActionId, ActionId)> {
        let mut v: Vec<_> = self.pairs.iter().copied().collect();
        v.sort();
        v
    }
}

pub fn compute_static_mutexes(actions: &[GroundAction]) -> MutexTable {
    let mut deleters: Vec<Vec<usize>> = Vec::new();
    for (i, a) in actions.iter().enumerate() {
        for e in a.deletes() {
            let f = e.fact.index();
            if deleters.len() <= f {
                deleters.resize(f + 1, Vec::new());
            }
            deleters[f].push(i);
        }
    }
    let mut pairs = HashSet::new();
    for (j, b) in actions.iter().enumerate() {
        let touched = b.preconditions().chain(b.adds().map(|e| e.fact));
        for f in touched {
            for &i in deleters.get(f.index()).map(Vec::as_slice).unwrap_or(&[]) {
                if i != j {
                    let (x, y) = (i.min(j), i.max(j));
                    pairs.insert((ActionId(x as u32), ActionId(y as u32)));
                }
            }
        }
    }
    MutexTable { pairs }
}
