use super::index::RecencyIndex;
use super::{
    require_predictor, AccessOutcome, Clock, EvictionCause, Mode, Policy, PolicyConfig, PolicyKind,
    Predictions,
};
use crate::error::Result;
use crate::predictor::Predictor;
use crate::trace::{Key, Ordinal};

/// Prediction-scored eviction over a fixed number of LRU-oldest candidates.
///
/// With `candidates == k` this is FPB (follow predictions blindly); with a
/// small constant it is heuristic filtering (HF).
#[derive(Debug, Clone)]
pub struct Scored {
    kind: PolicyKind,
    k: usize,
    candidates: usize,
    index: RecencyIndex,
    preds: Predictions,
    clock: Clock,
}

impl Scored {
    pub fn fpb(cfg: &PolicyConfig) -> Self {
        Self::with_candidates(PolicyKind::Fpb, cfg, cfg.k)
    }

    pub fn hf(cfg: &PolicyConfig) -> Self {
        Self::with_candidates(PolicyKind::Hf, cfg, cfg.hf_candidates.clamp(1, cfg.k))
    }

    fn with_candidates(kind: PolicyKind, cfg: &PolicyConfig, candidates: usize) -> Self {
        Scored {
            kind,
            k: cfg.k,
            candidates,
            index: RecencyIndex::new(cfg.k, cfg.mode == Mode::Async),
            preds: Predictions::new(cfg),
            clock: Clock::default(),
        }
    }

    /// Residents, least recently used first.
    pub fn residents(&self) -> impl Iterator<Item = Key> + '_ {
        self.index.keys()
    }
}

impl Policy for Scored {
    fn kind(&self) -> PolicyKind {
        self.kind
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
        let predictor = require_predictor(self.kind, predictor)?;
        self.clock.advance(now)?;
        let mut out = if self.index.contains(key) {
            self.index.touch(key);
            AccessOutcome::hit()
        } else {
            let mut calls = 0;
            let victim = if self.index.len() == self.k {
                let l = self.candidates.min(self.index.len());
                let v = if l == 1 {
                    self.index.oldest()
                } else {
                    if self.preds.mode == Mode::Sync {
                        let cands = self.index.oldest_n(l);
                        calls += self.preds.refresh_candidates(&mut self.index, &cands, now, predictor);
                    }
                    self.index.argmax_oldest(l)
                }
                .expect("full cache has a victim");
                self.index.remove(v);
                Some(v)
            } else {
                None
            };
            let pred = self.preds.table.value_or_default(key);
            self.index.push(key, pred);
            let mut out = AccessOutcome::miss(victim, EvictionCause::BeladyLike);
            out.predictor_calls = calls;
            out
        };
        out.predictor_calls += self.preds.after_request(&mut self.index, key, now, predictor);
        Ok(out)
    }
}
