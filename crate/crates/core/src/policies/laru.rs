//! Learning-augmented LRU.
//!
//! Execution is split into phases. A phase starts on a full-cache miss
//! when the set of unrequested old items is empty: every resident becomes
//! old, the confidence `λ` resets to 1 and the record of prediction-driven
//! evictions is cleared. On a miss:
//!
//! - if the requested key was evicted by a prediction earlier in this
//!   phase, the miss is prediction-induced: evict the LRU victim and, every
//!   `errors_per_decay` such misses, divide `λ` by `b`;
//! - otherwise take the `l = max(⌊λk⌋, 1)` LRU-oldest residents and evict the
//!   one with the largest predicted next-request time (or the single
//!   candidate when `l = 1`, without consulting the predictor).
//!
//! `λ` is stored as the exponent `m` in `λ = b^-m`, so `⌊λk⌋` is the integer
//! quotient `k / b^m`.
//!
//! The cold period before the first full-cache miss belongs to phase 1:
//! its distinct keys count as new items of that phase.

use std::collections::HashSet;

use super::index::RecencyIndex;
use super::{
    require_predictor, AccessOutcome, Clock, EvictionCause, Mode, Policy, PolicyConfig, PolicyKind,
    Predictions,
};
use crate::error::Result;
use crate::predictor::{PredictionTable, Predictor};
use crate::trace::{Key, Ordinal};

/// Accounting for one phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PhaseStats {
    /// Ordinal of the miss that opened the phase (0 for phase 1).
    pub start: Ordinal,
    /// Distinct keys requested in the phase that were not old at its start.
    pub new_items: usize,
    /// Distinct keys requested in the phase.
    pub distinct: usize,
    /// LRU-following evictions: prediction-induced fallbacks plus `l = 1`.
    pub lru_class: usize,
    /// Evictions chosen by prediction over more than one candidate.
    pub prediction_driven: usize,
    /// Misses on keys evicted by prediction earlier in the phase.
    pub prediction_induced: usize,
    pub misses: usize,
    /// All old items were requested or evicted.
    pub completed: bool,
}

#[derive(Debug, Clone)]
pub struct Laru {
    k: usize,
    b: usize,
    errors_per_decay: usize,
    index: RecencyIndex,
    preds: Predictions,
    old: HashSet<Key>,
    old_at_start: HashSet<Key>,
    requested_in_phase: HashSet<Key>,
    prediction_evicted: HashSet<Key>,
    decay_steps: u32,
    errors_since_decay: usize,
    /// Set once the first phase snapshot was taken.
    snapshot_taken: bool,
    phases: Vec<PhaseStats>,
    clock: Clock,
}

impl Laru {
    pub fn new(cfg: &PolicyConfig) -> Self {
        Laru {
            k: cfg.k,
            b: cfg.b as usize,
            errors_per_decay: cfg.errors_per_decay.max(1),
            index: RecencyIndex::new(cfg.k, cfg.mode == Mode::Async),
            preds: Predictions::new(cfg),
            old: HashSet::with_capacity(cfg.k),
            old_at_start: HashSet::with_capacity(cfg.k),
            requested_in_phase: HashSet::new(),
            prediction_evicted: HashSet::new(),
            decay_steps: 0,
            errors_since_decay: 0,
            snapshot_taken: false,
            phases: vec![PhaseStats::default()],
            clock: Clock::default(),
        }
    }

    /// Current confidence `λ`.
    pub fn lambda(&self) -> f64 {
        (self.b as f64).powi(-(self.decay_steps as i32))
    }

    /// Current candidate-set size `max(⌊λk⌋, 1)`.
    pub fn candidate_size(&self) -> usize {
        match self.b.checked_pow(self.decay_steps) {
            Some(d) => (self.k / d).max(1),
            None => 1,
        }
    }

    /// Unrequested old items of the current phase.
    pub fn old_items(&self) -> &HashSet<Key> {
        &self.old
    }

    pub fn prediction_evicted(&self) -> &HashSet<Key> {
        &self.prediction_evicted
    }

    pub fn prediction_table(&self) -> &PredictionTable {
        &self.preds.table
    }

    /// Residents, least recently used first.
    pub fn residents(&self) -> impl Iterator<Item = Key> + '_ {
        self.index.keys()
    }

    /// Number of phases whose old set was exhausted.
    pub fn completed_phases(&self) -> usize {
        self.phases.iter().filter(|p| p.completed).count()
    }

    fn current(&mut self) -> &mut PhaseStats {
        self.phases.last_mut().expect("there is always a current phase")
    }

    fn start_phase(&mut self, now: Ordinal) {
        if self.snapshot_taken {
            self.phases.push(PhaseStats {
                start: now,
                ..PhaseStats::default()
            });
            self.requested_in_phase.clear();
        }
        self.snapshot_taken = true;
        self.old.clear();
        self.old.extend(self.index.keys());
        self.old_at_start.clone_from(&self.old);
        self.decay_steps = 0;
        self.errors_since_decay = 0;
        self.prediction_evicted.clear();
    }

    fn note_request(&mut self, key: Key) {
        if self.requested_in_phase.insert(key) {
            let is_new = !self.old_at_start.contains(&key);
            let phase = self.current();
            phase.distinct += 1;
            if is_new {
                phase.new_items += 1;
            }
        }
    }

    fn retire_old(&mut self, key: Key) {
        if self.old.remove(&key) && self.old.is_empty() {
            self.current().completed = true;
        }
    }

    fn record_prediction_error(&mut self) {
        self.current().prediction_induced += 1;
        self.errors_since_decay += 1;
        if self.errors_since_decay >= self.errors_per_decay {
            self.errors_since_decay = 0;
            self.decay_steps = self.decay_steps.saturating_add(1);
        }
    }

    fn on_miss(&mut self, key: Key, now: Ordinal, predictor: &mut dyn Predictor) -> AccessOutcome {
        let mut phase_started = false;
        if self.old.is_empty() {
            self.start_phase(now);
            phase_started = true;
        }
        self.note_request(key);

        let mut calls = 0;
        let (victim, cause) = if self.prediction_evicted.remove(&key) {
            self.record_prediction_error();
            (self.index.oldest(), EvictionCause::LruFallback)
        } else {
            let l = self.candidate_size().min(self.index.len());
            if l <= 1 {
                (self.index.oldest(), EvictionCause::DegenerateSingle)
            } else {
                if self.preds.mode == Mode::Sync {
                    let cands = self.index.oldest_n(l);
                    calls += self.preds.refresh_candidates(&mut self.index, &cands, now, predictor);
                }
                (self.index.argmax_oldest(l), EvictionCause::PredictionDriven)
            }
        };
        let victim = victim.expect("full cache has a victim");
        self.index.remove(victim);
        if cause == EvictionCause::PredictionDriven {
            self.prediction_evicted.insert(victim);
            self.current().prediction_driven += 1;
        } else {
            self.current().lru_class += 1;
        }
        self.current().misses += 1;
        self.retire_old(victim);

        let pred = self.preds.table.value_or_default(key);
        self.index.push(key, pred);

        AccessOutcome {
            hit: false,
            evicted: Some(victim),
            cause,
            predictor_calls: calls,
            phase_started,
        }
    }
}

impl Policy for Laru {
    fn kind(&self) -> PolicyKind {
        PolicyKind::Laru
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

    fn on_request(&mut self, key: Key, now: Ordinal, predictor: Option<&mut dyn Predictor>) -> Result<AccessOutcome> {
        let predictor = require_predictor(PolicyKind::Laru, predictor)?;
        self.clock.advance(now)?;
        let mut out = if self.index.contains(key) {
            self.index.touch(key);
            self.note_request(key);
            self.retire_old(key);
            AccessOutcome::hit()
        } else if self.index.len() < self.k {
            self.note_request(key);
            self.current().misses += 1;
            let pred = self.preds.table.value_or_default(key);
            self.index.push(key, pred);
            AccessOutcome::miss(None, EvictionCause::None)
        } else {
            self.on_miss(key, now, predictor)
        };
        out.predictor_calls += self.preds.after_request(&mut self.index, key, now, predictor);
        Ok(out)
    }

    fn phases(&self) -> Option<&[PhaseStats]> {
        Some(&self.phases)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predictor::{make_adversarial, OraclePredictor, PredictedTime, Truth};
    use crate::trace::Trace;

    fn cfg(k: usize) -> PolicyConfig {
        PolicyConfig::new(PolicyKind::Laru, k)
    }

    /// Predicts a constant for every key.
    struct Constant;

    impl Predictor for Constant {
        fn predict(&mut self, _key: Key, _now: Ordinal) -> PredictedTime {
            PredictedTime(0)
        }
    }

    #[test]
    fn candidate_size_halves_per_error() {
        let mut laru = Laru::new(&cfg(64));
        assert_eq!(laru.candidate_size(), 64);
        laru.record_prediction_error();
        assert_eq!(laru.lambda(), 0.5);
        assert_eq!(laru.candidate_size(), 32);
        for _ in 0..5 {
            laru.record_prediction_error();
        }
        assert_eq!(laru.candidate_size(), 1);
        laru.record_prediction_error();
        assert_eq!(laru.candidate_size(), 1);
    }

    #[test]
    fn coarse_decay_needs_several_errors() {
        let c = cfg(256).with_coarse_decay();
        assert_eq!(c.errors_per_decay, 8);
        let mut laru = Laru::new(&c);
        for _ in 0..7 {
            laru.record_prediction_error();
        }
        assert_eq!(laru.candidate_size(), 256);
        laru.record_prediction_error();
        assert_eq!(laru.candidate_size(), 128);
    }

    #[test]
    fn oracle_abcabc_matches_belady() {
        let t = Trace::from_keys([0u64, 1, 2, 0, 1, 2]);
        let mut p = OraclePredictor::new(Truth::new(&t).unwrap());
        let mut laru = Laru::new(&cfg(2));
        let misses = t
            .requests()
            .iter()
            .filter(|r| !laru.on_request(r.key, r.ordinal, Some(&mut p)).unwrap().hit)
            .count();
        assert_eq!(misses, 4);
    }

    #[test]
    fn requires_predictor() {
        let mut laru = Laru::new(&cfg(2));
        assert!(matches!(
            laru.on_request(Key(1), 0, None),
            Err(crate::Error::Config(_))
        ));
    }

    #[test]
    fn degenerates_to_lru_after_log_k_errors() {
        // Scan over k+1 keys with adversarial predictions: every miss on a
        // prediction-evicted key halves λ until l = 1.
        let k = 8;
        let t = crate::trace::gen_cyclic_scan(k + 1, 6).unwrap();
        let mut p = make_adversarial(Truth::new(&t).unwrap());
        let mut laru = Laru::new(&cfg(k));
        let mut last_l = usize::MAX;
        let mut degenerate_seen = false;
        for r in t.requests() {
            let phase_before = laru.phases.len();
            let out = laru.on_request(r.key, r.ordinal, Some(&mut p)).unwrap();
            if out.phase_started || laru.phases.len() != phase_before {
                last_l = usize::MAX;
                degenerate_seen = false;
            }
            let l = laru.candidate_size();
            assert!(l <= last_l, "candidate set grew within a phase");
            last_l = l;
            if out.cause == EvictionCause::DegenerateSingle {
                degenerate_seen = true;
                assert_eq!(out.predictor_calls, 0);
            }
            if degenerate_seen {
                assert_ne!(out.cause, EvictionCause::PredictionDriven);
            }
            assert!(laru.prediction_evicted.iter().all(|k| !laru.contains(*k)));
            assert!(laru.old.iter().all(|k| laru.contains(*k)));
        }
        let phases = laru.phases().unwrap();
        assert!(phases.iter().any(|p| p.prediction_induced >= 3));
    }

    #[test]
    fn constant_predictions_evict_lru_among_candidates() {
        // Ties fall to the least recently used candidate, so a constant
        // predictor reproduces LRU exactly.
        let t = crate::trace::gen_zipf(2000, 40, 0.8, 5).unwrap();
        let mut laru = Laru::new(&cfg(8));
        let mut lru = crate::policies::Lru::new(8);
        for r in t.requests() {
            let a = laru.on_request(r.key, r.ordinal, Some(&mut Constant)).unwrap();
            let b = lru.on_request(r.key, r.ordinal, None).unwrap();
            assert_eq!(a.hit, b.hit);
            assert_eq!(a.evicted, b.evicted);
        }
    }
}
