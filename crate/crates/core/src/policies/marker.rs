use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{AccessOutcome, Clock, EvictionCause, Policy, PolicyKind};
use crate::error::Result;
use crate::predictor::Predictor;
use crate::trace::{Key, Ordinal};

/// Randomized marking: evict a uniformly random unmarked resident; when
/// every resident is marked, unmark all and start a new phase.
#[derive(Debug, Clone)]
pub struct Marker {
    k: usize,
    marked: HashMap<Key, bool>,
    /// Residents in insertion order; the unmark-all snapshot reads this.
    order: Vec<Key>,
    unmarked: Vec<Key>,
    unmarked_pos: HashMap<Key, usize>,
    rng: ChaCha8Rng,
    clock: Clock,
}

impl Marker {
    pub fn new(k: usize, seed: u64) -> Self {
        Marker {
            k,
            marked: HashMap::with_capacity(k),
            order: Vec::with_capacity(k),
            unmarked: Vec::with_capacity(k),
            unmarked_pos: HashMap::with_capacity(k),
            rng: ChaCha8Rng::seed_from_u64(seed),
            clock: Clock::default(),
        }
    }

    fn mark(&mut self, key: Key) {
        if let Some(i) = self.unmarked_pos.remove(&key) {
            self.unmarked.swap_remove(i);
            if let Some(&moved) = self.unmarked.get(i) {
                self.unmarked_pos.insert(moved, i);
            }
        }
        self.marked.insert(key, true);
    }
}

impl Policy for Marker {
    fn kind(&self) -> PolicyKind {
        PolicyKind::Marker
    }

    fn capacity(&self) -> usize {
        self.k
    }

    fn len(&self) -> usize {
        self.marked.len()
    }

    fn contains(&self, key: Key) -> bool {
        self.marked.contains_key(&key)
    }

    fn on_request(&mut self, key: Key, now: Ordinal, _predictor: Option<&mut dyn Predictor>) -> Result<AccessOutcome> {
        self.clock.advance(now)?;
        if self.marked.contains_key(&key) {
            self.mark(key);
            return Ok(AccessOutcome::hit());
        }
        let mut phase_started = false;
        let victim = if self.marked.len() == self.k {
            if self.unmarked.is_empty() {
                phase_started = true;
                self.unmarked = self.order.clone();
                self.unmarked_pos = self.unmarked.iter().enumerate().map(|(i, &k)| (k, i)).collect();
                self.marked.values_mut().for_each(|m| *m = false);
            }
            let i = self.rng.random_range(0..self.unmarked.len());
            let v = self.unmarked[i];
            self.mark(v);
            self.marked.remove(&v);
            let at = self.order.iter().position(|&k| k == v).expect("victim is resident");
            self.order.remove(at);
            Some(v)
        } else {
            None
        };
        self.order.push(key);
        self.mark(key);
        let mut out = AccessOutcome::miss(victim, EvictionCause::MarkerRandom);
        out.phase_started = phase_started;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policies::Lru;

    fn run(p: &mut dyn Policy, keys: &[u64]) -> Vec<bool> {
        keys.iter()
            .enumerate()
            .map(|(t, &k)| p.on_request(Key(k), t, None).unwrap().hit)
            .collect()
    }

    #[test]
    fn abca_two_cases() {
        for seed in 0..20 {
            let mut m = Marker::new(2, seed);
            let keys = [1u64, 2, 3, 1];
            let outs: Vec<AccessOutcome> = keys
                .iter()
                .enumerate()
                .map(|(t, &k)| m.on_request(Key(k), t, None).unwrap())
                .collect();
            let evicted_a = outs[2].evicted == Some(Key(1));
            assert_eq!(outs[3].hit, !evicted_a);
        }
    }

    #[test]
    fn small_alphabet_never_evicts() {
        let mut m = Marker::new(4, 1);
        let keys: Vec<u64> = (0..200).map(|i| (i * 7 % 4) as u64).collect();
        for (t, &k) in keys.iter().enumerate() {
            assert!(m.on_request(Key(k), t, None).unwrap().evicted.is_none());
        }
    }

    #[test]
    fn k1_matches_lru() {
        let keys: Vec<u64> = (0..300).map(|i| (i * i % 5) as u64).collect();
        let mut m = Marker::new(1, 9);
        let mut l = Lru::new(1);
        assert_eq!(run(&mut m, &keys), run(&mut l, &keys));
    }
}
