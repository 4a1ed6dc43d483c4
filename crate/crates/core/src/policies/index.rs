//! Recency-ordered resident set with per-resident predictions.
//!
//! Residents occupy slots in access order; a touch moves a key to a fresh
//! slot at the tail. When the tail reaches the end, live slots are compacted
//! to the front, which happens at most once every `capacity - len` touches.
//!
//! With `track_max` set, a segment tree over the slots keeps the resident
//! count and the best `(prediction, oldest slot)` per subtree, so the
//! argmax over the `l` least recently used residents costs `O(log k)`.

use std::collections::HashMap;

use crate::predictor::PredictedTime;
use crate::trace::Key;

#[derive(Debug, Clone, Copy)]
struct Slot {
    key: Key,
    pred: PredictedTime,
}

/// Max-prediction winner; ties go to the lower (older) slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Best {
    pred: PredictedTime,
    slot: usize,
}

fn better(a: Option<Best>, b: Option<Best>) -> Option<Best> {
    match (a, b) {
        (None, x) | (x, None) => x,
        (Some(x), Some(y)) => {
            if y.pred > x.pred || (y.pred == x.pred && y.slot < x.slot) {
                Some(y)
            } else {
                Some(x)
            }
        }
    }
}

#[derive(Debug, Clone)]
struct MaxTree {
    leaves: usize,
    count: Vec<u32>,
    best: Vec<Option<Best>>,
}

impl MaxTree {
    fn new(leaves: usize) -> Self {
        MaxTree {
            leaves,
            count: vec![0; 2 * leaves],
            best: vec![None; 2 * leaves],
        }
    }

    fn set(&mut self, slot: usize, value: Option<PredictedTime>) {
        let mut i = slot + self.leaves;
        self.count[i] = value.is_some() as u32;
        self.best[i] = value.map(|pred| Best { pred, slot });
        while i > 1 {
            i /= 2;
            self.pull(i);
        }
    }

    fn pull(&mut self, i: usize) {
        self.count[i] = self.count[2 * i] + self.count[2 * i + 1];
        self.best[i] = better(self.best[2 * i], self.best[2 * i + 1]);
    }

    fn rebuild(&mut self, slots: &[Option<Slot>]) {
        for (s, v) in slots.iter().enumerate() {
            let i = s + self.leaves;
            self.count[i] = v.is_some() as u32;
            self.best[i] = v.map(|v| Best { pred: v.pred, slot: s });
        }
        for i in (1..self.leaves).rev() {
            self.pull(i);
        }
    }

    /// Best among the first `l` occupied leaves under node `i`.
    fn best_of_oldest(&self, i: usize, l: u32) -> Option<Best> {
        if l == 0 {
            return None;
        }
        if l >= self.count[i] {
            return self.best[i];
        }
        let left = self.count[2 * i];
        if l <= left {
            self.best_of_oldest(2 * i, l)
        } else {
            better(self.best[2 * i], self.best_of_oldest(2 * i + 1, l - left))
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct RecencyIndex {
    slots: Vec<Option<Slot>>,
    pos: HashMap<Key, usize>,
    head: usize,
    tail: usize,
    tree: Option<MaxTree>,
}

impl RecencyIndex {
    pub(crate) fn new(k: usize, track_max: bool) -> Self {
        let cap = (4 * k.max(1)).next_power_of_two().max(8);
        RecencyIndex {
            slots: vec![None; cap],
            pos: HashMap::with_capacity(k + 1),
            head: 0,
            tail: 0,
            tree: track_max.then(|| MaxTree::new(cap)),
        }
    }

    pub(crate) fn len(&self) -> usize {
        self.pos.len()
    }

    pub(crate) fn contains(&self, key: Key) -> bool {
        self.pos.contains_key(&key)
    }

    /// Moves `key` to the most-recently-used end, keeping its prediction.
    pub(crate) fn touch(&mut self, key: Key) {
        let pred = self.remove(key).unwrap_or(PredictedTime::NEVER);
        self.push(key, pred);
    }

    /// Inserts `key` as most recently used with prediction `pred`.
    pub(crate) fn push(&mut self, key: Key, pred: PredictedTime) {
        debug_assert!(!self.contains(key));
        if self.tail == self.slots.len() {
            self.compact();
        }
        let s = self.tail;
        self.tail += 1;
        self.slots[s] = Some(Slot { key, pred });
        self.pos.insert(key, s);
        if let Some(t) = &mut self.tree {
            t.set(s, Some(pred));
        }
    }

    pub(crate) fn remove(&mut self, key: Key) -> Option<PredictedTime> {
        let s = self.pos.remove(&key)?;
        let old = self.slots[s].take().map(|v| v.pred);
        if let Some(t) = &mut self.tree {
            t.set(s, None);
        }
        old
    }

    pub(crate) fn set_pred(&mut self, key: Key, pred: PredictedTime) {
        if let Some(&s) = self.pos.get(&key) {
            if let Some(slot) = &mut self.slots[s] {
                slot.pred = pred;
            }
            if let Some(t) = &mut self.tree {
                t.set(s, Some(pred));
            }
        }
    }

    /// Least recently used resident.
    pub(crate) fn oldest(&mut self) -> Option<Key> {
        while self.head < self.tail && self.slots[self.head].is_none() {
            self.head += 1;
        }
        self.slots.get(self.head).and_then(|s| s.map(|v| v.key))
    }

    /// The `l` least recently used residents, oldest first.
    pub(crate) fn oldest_n(&mut self, l: usize) -> Vec<Key> {
        self.oldest();
        self.slots[self.head..self.tail]
            .iter()
            .flatten()
            .take(l)
            .map(|s| s.key)
            .collect()
    }

    /// All residents, oldest first.
    pub(crate) fn keys(&self) -> impl Iterator<Item = Key> + '_ {
        self.slots[..self.tail].iter().flatten().map(|s| s.key)
    }

    /// Resident with the largest prediction among the `l` oldest; ties go
    /// to the least recently used.
    pub(crate) fn argmax_oldest(&mut self, l: usize) -> Option<Key> {
        if let Some(t) = &self.tree {
            let b = t.best_of_oldest(1, l.min(u32::MAX as usize) as u32)?;
            return self.slots[b.slot].map(|s| s.key);
        }
        self.oldest();
        let mut best: Option<Slot> = None;
        for s in self.slots[self.head..self.tail].iter().flatten().take(l) {
            if best.is_none_or(|b| s.pred > b.pred) {
                best = Some(*s);
            }
        }
        best.map(|s| s.key)
    }

    fn compact(&mut self) {
        let live: Vec<Slot> = self.slots.iter().flatten().copied().collect();
        self.slots.iter_mut().for_each(|s| *s = None);
        for (i, s) in live.into_iter().enumerate() {
            self.pos.insert(s.key, i);
            self.slots[i] = Some(s);
        }
        self.head = 0;
        self.tail = self.pos.len();
        if let Some(t) = &mut self.tree {
            t.rebuild(&self.slots);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(v: i64) -> PredictedTime {
        PredictedTime(v)
    }

    #[test]
    fn recency_order_and_touch() {
        let mut ix = RecencyIndex::new(3, false);
        for k in 1..=3 {
            ix.push(Key(k), p(0));
        }
        ix.touch(Key(1));
        assert_eq!(ix.oldest(), Some(Key(2)));
        assert_eq!(ix.oldest_n(3), vec![Key(2), Key(3), Key(1)]);
    }

    #[test]
    fn argmax_prefers_older_on_ties() {
        for track in [false, true] {
            let mut ix = RecencyIndex::new(4, track);
            ix.push(Key(1), p(5));
            ix.push(Key(2), p(9));
            ix.push(Key(3), p(9));
            ix.push(Key(4), p(100));
            assert_eq!(ix.argmax_oldest(1), Some(Key(1)));
            assert_eq!(ix.argmax_oldest(3), Some(Key(2)));
            assert_eq!(ix.argmax_oldest(4), Some(Key(4)));
            ix.set_pred(Key(1), p(50));
            assert_eq!(ix.argmax_oldest(3), Some(Key(1)));
        }
    }

    #[test]
    fn compaction_preserves_order_and_tree() {
        let k = 5;
        let mut ix = RecencyIndex::new(k, true);
        let mut reference: Vec<(Key, i64)> = Vec::new();
        for step in 0..500u64 {
            let key = Key(step % 7);
            let pred = ((step * 37) % 101) as i64;
            if let Some(i) = reference.iter().position(|(kk, _)| *kk == key) {
                reference.remove(i);
                ix.remove(key);
            } else if reference.len() == k {
                let victim = reference.remove(0).0;
                assert_eq!(ix.oldest(), Some(victim));
                ix.remove(victim);
            }
            ix.push(key, p(pred));
            reference.push((key, pred));
            let keys: Vec<Key> = reference.iter().map(|r| r.0).collect();
            assert_eq!(ix.keys().collect::<Vec<_>>(), keys);
            for l in 1..=k {
                let window = &reference[..l.min(reference.len())];
                let mut want = window[0];
                for w in window {
                    if w.1 > want.1 {
                        want = *w;
                    }
                }
                assert_eq!(ix.argmax_oldest(l), Some(want.0));
            }
        }
    }
}
