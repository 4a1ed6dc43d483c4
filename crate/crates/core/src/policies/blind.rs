use super::index::RecencyIndex;
use super::{
    require_predictor, AccessOutcome, Clock, EvictionCause, Lru, Policy, PolicyConfig, PolicyKind,
    Scored,
};
use crate::error::Result;
use crate::predictor::{PredictedTime, Predictor};
use crate::trace::{Key, Ordinal};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Leader {
    Fpb,
    Lru,
}

/// Deterministic combiner of an FPB shadow and an LRU shadow.
///
/// Both shadows see every request. The served cache follows one of them and
/// switches when the followed shadow's miss count exceeds twice the other's.
/// Reconciliation is lazy: on a served miss the victim is the key the leader
/// just evicted if the served cache still holds it, otherwise the least
/// recently used served key that the leader does not hold.
#[derive(Debug, Clone)]
pub struct BlindOracleLru {
    k: usize,
    fpb: Scored,
    lru: Lru,
    served: RecencyIndex,
    leader: Leader,
    fpb_misses: usize,
    lru_misses: usize,
    switches: usize,
    clock: Clock,
}

impl BlindOracleLru {
    pub fn new(cfg: &PolicyConfig) -> Self {
        BlindOracleLru {
            k: cfg.k,
            fpb: Scored::fpb(cfg),
            lru: Lru::new(cfg.k),
            served: RecencyIndex::new(cfg.k, false),
            leader: Leader::Fpb,
            fpb_misses: 0,
            lru_misses: 0,
            switches: 0,
            clock: Clock::default(),
        }
    }

    pub fn switches(&self) -> usize {
        self.switches
    }

    pub fn shadow_misses(&self) -> (usize, usize) {
        (self.fpb_misses, self.lru_misses)
    }

    fn leader_holds(&self, key: Key) -> bool {
        match self.leader {
            Leader::Fpb => self.fpb.contains(key),
            Leader::Lru => self.lru.contains(key),
        }
    }
}

impl Policy for BlindOracleLru {
    fn kind(&self) -> PolicyKind {
        PolicyKind::BlindOracleLru
    }

    fn capacity(&self) -> usize {
        self.k
    }

    fn len(&self) -> usize {
        self.served.len()
    }

    fn contains(&self, key: Key) -> bool {
        self.served.contains(key)
    }

    fn on_request(&mut self, key: Key, now: Ordinal, predictor: Option<&mut dyn Predictor>) -> Result<AccessOutcome> {
        let predictor = require_predictor(PolicyKind::BlindOracleLru, predictor)?;
        self.clock.advance(now)?;
        let f = self.fpb.on_request(key, now, Some(predictor))?;
        let l = self.lru.on_request(key, now, None)?;
        self.fpb_misses += (!f.hit) as usize;
        self.lru_misses += (!l.hit) as usize;
        let next = match self.leader {
            Leader::Fpb if self.fpb_misses > 2 * self.lru_misses => Leader::Lru,
            Leader::Lru if self.lru_misses > 2 * self.fpb_misses => Leader::Fpb,
            same => same,
        };
        if next != self.leader {
            self.leader = next;
            self.switches += 1;
        }

        let mut out = if self.served.contains(key) {
            self.served.touch(key);
            AccessOutcome::hit()
        } else {
            let victim = if self.served.len() == self.k {
                let leader_victim = match self.leader {
                    Leader::Fpb => f.evicted,
                    Leader::Lru => l.evicted,
                };
                let v = leader_victim
                    .filter(|v| self.served.contains(*v))
                    .or_else(|| self.served.keys().find(|s| !self.leader_holds(*s)))
                    .or_else(|| self.served.oldest())
                    .expect("full cache has a victim");
                self.served.remove(v);
                Some(v)
            } else {
                None
            };
            self.served.push(key, PredictedTime::NEVER);
            let cause = match self.leader {
                Leader::Fpb => EvictionCause::BeladyLike,
                Leader::Lru => EvictionCause::LruFallback,
            };
            AccessOutcome::miss(victim, cause)
        };
        out.predictor_calls = f.predictor_calls;
        Ok(out)
    }
}
