use super::index::RecencyIndex;
use super::{AccessOutcome, Clock, EvictionCause, Policy, PolicyKind};
use crate::error::Result;
use crate::predictor::{PredictedTime, Predictor};
use crate::trace::{Key, Ordinal};

/// Least-recently-used eviction.
#[derive(Debug, Clone)]
pub struct Lru {
    k: usize,
    index: RecencyIndex,
    clock: Clock,
}

impl Lru {
    pub fn new(k: usize) -> Self {
        Lru {
            k,
            index: RecencyIndex::new(k, false),
            clock: Clock::default(),
        }
    }

    /// Residents, least recently used first.
    pub fn residents(&self) -> Vec<Key> {
        self.index.keys().collect()
    }
}

impl Policy for Lru {
    fn kind(&self) -> PolicyKind {
        PolicyKind::Lru
    }

    fn capacity(&self) -> usize {
        self.k
    }

    fn len(&self) -> usize {
        self.index.len()
    }

    fn contains(&self, key: Key) -> bool {
        self.index.contains(key)
    }

    fn on_request(&mut self, key: Key, now: Ordinal, _predictor: Option<&mut dyn Predictor>) -> Result<AccessOutcome> {
        self.clock.advance(now)?;
        if self.index.contains(key) {
            self.index.touch(key);
            return Ok(AccessOutcome::hit());
        }
        let victim = if self.index.len() == self.k {
            let v = self.index.oldest().expect("full cache has an oldest resident");
            self.index.remove(v);
            Some(v)
        } else {
            None
        };
        self.index.push(key, PredictedTime::NEVER);
        Ok(AccessOutcome::miss(victim, EvictionCause::LruFallback))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textbook_lru() {
        let mut p = Lru::new(2);
        let keys = [1u64, 2, 1, 3];
        let out: Vec<AccessOutcome> = keys
            .iter()
            .enumerate()
            .map(|(t, &k)| p.on_request(Key(k), t, None).unwrap())
            .collect();
        assert_eq!(out.iter().map(|o| o.hit).collect::<Vec<_>>(), vec![false, false, true, false]);
        assert_eq!(out[3].evicted, Some(Key(2)));
        assert_eq!(out[3].cause, EvictionCause::LruFallback);
        assert_eq!(p.residents(), vec![Key(1), Key(3)]);
    }

    #[test]
    fn rejects_out_of_order() {
        let mut p = Lru::new(2);
        p.on_request(Key(1), 3, None).unwrap();
        assert!(p.on_request(Key(1), 3, None).is_err());
        assert!(p.on_request(Key(1), 2, None).is_err());
    }
}
