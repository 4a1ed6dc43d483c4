//! Online eviction policies behind one [`Policy`] contract.
//!
//! | policy | victim on a full-cache miss |
//! |--------|-----------------------------|
//! | LRU    | least recently used |
//! | Marker | uniformly random unmarked resident |
//! | FPB    | largest predicted next-request time over all residents |
//! | HF     | largest prediction among a fixed number of LRU-oldest residents |
//! | LARU   | adaptive candidate set, see [`laru`] |
//! | BlindOracle&LRU | follows whichever of an FPB and an LRU shadow misses less |
//!
//! A cold cache (not yet full) inserts without evicting under every policy.

mod blind;
pub(crate) mod index;
pub mod laru;
mod lru;
mod marker;
mod scored;

use std::fmt;
use std::str::FromStr;

pub use blind::BlindOracleLru;
pub use laru::{Laru, PhaseStats};
pub use lru::Lru;
pub use marker::Marker;
pub use scored::Scored;

use crate::error::{Error, Result};
use crate::predictor::{PredictionTable, Predictor, RefreshRule};
use crate::trace::{Key, Ordinal};

/// Which eviction rule a policy instance runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PolicyKind {
    Lru,
    Marker,
    Fpb,
    Hf,
    Laru,
    BlindOracleLru,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 6] = [
        PolicyKind::Lru,
        PolicyKind::Marker,
        PolicyKind::Fpb,
        PolicyKind::Hf,
        PolicyKind::Laru,
        PolicyKind::BlindOracleLru,
    ];

    pub fn needs_predictor(self) -> bool {
        !matches!(self, PolicyKind::Lru | PolicyKind::Marker)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::Lru => "lru",
            PolicyKind::Marker => "marker",
            PolicyKind::Fpb => "fpb",
            PolicyKind::Hf => "hf",
            PolicyKind::Laru => "laru",
            PolicyKind::BlindOracleLru => "blind",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lru" => Ok(PolicyKind::Lru),
            "marker" => Ok(PolicyKind::Marker),
            "fpb" => Ok(PolicyKind::Fpb),
            "hf" => Ok(PolicyKind::Hf),
            "laru" => Ok(PolicyKind::Laru),
            "blind" | "blindoracle" | "blindoracle-lru" => Ok(PolicyKind::BlindOracleLru),
            other => Err(Error::InvalidArgument(format!("unknown policy {other:?}"))),
        }
    }
}

/// When predictions are refreshed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    /// Inside the eviction decision, for every candidate.
    #[default]
    Sync,
    /// After each request for the requested key, subject to a
    /// [`RefreshRule`]; evictions read whatever the table holds.
    Async,
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sync" => Ok(Mode::Sync),
            "async" => Ok(Mode::Async),
            other => Err(Error::InvalidArgument(format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyConfig {
    pub k: usize,
    pub kind: PolicyKind,
    /// LARU confidence decay base.
    pub b: u32,
    /// Prediction-induced misses per confidence decay step.
    pub errors_per_decay: usize,
    pub hf_candidates: usize,
    pub mode: Mode,
    pub refresh: RefreshRule,
    /// Marker's random stream.
    pub seed: u64,
}

impl PolicyConfig {
    pub fn new(kind: PolicyKind, k: usize) -> Self {
        PolicyConfig {
            k,
            kind,
            b: 2,
            errors_per_decay: 1,
            hf_candidates: 4.min(k.max(1)),
            mode: Mode::Sync,
            refresh: RefreshRule::default(),
            seed: 0,
        }
    }

    /// Decay granularity used for large caches: one step per `ceil(k / 32)`
    /// prediction-induced misses.
    pub fn with_coarse_decay(mut self) -> Self {
        self.errors_per_decay = self.k.div_ceil(32).max(1);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidArgument("cache size must be at least 1".into()));
        }
        if self.b < 2 {
            return Err(Error::InvalidArgument(format!("decay base must be at least 2, got {}", self.b)));
        }
        if (self.k as f64).log(self.b as f64) > self.k as f64 {
            return Err(Error::InvalidArgument("decay base must satisfy log_b(k) <= k".into()));
        }
        if self.errors_per_decay == 0 {
            return Err(Error::InvalidArgument("errors_per_decay must be at least 1".into()));
        }
        if self.kind == PolicyKind::Hf && !(1..=self.k).contains(&self.hf_candidates) {
            return Err(Error::InvalidArgument(format!(
                "hf_candidates must lie in [1, {}], got {}",
                self.k, self.hf_candidates
            )));
        }
        Ok(())
    }

    pub fn build(&self) -> Result<Box<dyn Policy>> {
        self.validate()?;
        Ok(match self.kind {
            PolicyKind::Lru => Box::new(Lru::new(self.k)),
            PolicyKind::Marker => Box::new(Marker::new(self.k, self.seed)),
            PolicyKind::Fpb => Box::new(Scored::fpb(self)),
            PolicyKind::Hf => Box::new(Scored::hf(self)),
            PolicyKind::Laru => Box::new(Laru::new(self)),
            PolicyKind::BlindOracleLru => Box::new(BlindOracleLru::new(self)),
        })
    }

    /// `log_b(k)`.
    pub fn log_b_k(&self) -> f64 {
        (self.k as f64).ln() / (self.b as f64).ln()
    }
}

/// Why a resident was evicted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EvictionCause {
    None,
    LruFallback,
    PredictionDriven,
    DegenerateSingle,
    MarkerRandom,
    BeladyLike,
}

impl EvictionCause {
    pub const ALL: [EvictionCause; 6] = [
        EvictionCause::None,
        EvictionCause::LruFallback,
        EvictionCause::PredictionDriven,
        EvictionCause::DegenerateSingle,
        EvictionCause::MarkerRandom,
        EvictionCause::BeladyLike,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EvictionCause::None => "none",
            EvictionCause::LruFallback => "lru_fallback",
            EvictionCause::PredictionDriven => "prediction_driven",
            EvictionCause::DegenerateSingle => "degenerate_single",
            EvictionCause::MarkerRandom => "marker_random",
            EvictionCause::BeladyLike => "belady_like",
        }
    }
}

/// Result of one request.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AccessOutcome {
    pub hit: bool,
    pub evicted: Option<Key>,
    pub cause: EvictionCause,
    pub predictor_calls: usize,
    pub phase_started: bool,
}

impl AccessOutcome {
    pub(crate) fn hit() -> Self {
        AccessOutcome {
            hit: true,
            evicted: None,
            cause: EvictionCause::None,
            predictor_calls: 0,
            phase_started: false,
        }
    }

    pub(crate) fn miss(evicted: Option<Key>, cause: EvictionCause) -> Self {
        AccessOutcome {
            hit: false,
            evicted,
            cause: if evicted.is_some() { cause } else { EvictionCause::None },
            predictor_calls: 0,
            phase_started: false,
        }
    }
}

/// An online eviction policy. Requests must arrive in strictly increasing
/// ordinal order.
pub trait Policy: Send {
    fn kind(&self) -> PolicyKind;

    fn capacity(&self) -> usize;

    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn contains(&self, key: Key) -> bool;

    fn on_request(
        &mut self,
        key: Key,
        now: Ordinal,
        predictor: Option<&mut dyn Predictor>,
    ) -> Result<AccessOutcome>;

    /// Per-phase accounting; only LARU keeps phases.
    fn phases(&self) -> Option<&[PhaseStats]> {
        None
    }
}

/// Enforces strictly increasing request ordinals.
#[derive(Debug, Clone, Default)]
pub(crate) struct Clock {
    last: Option<Ordinal>,
}

impl Clock {
    pub(crate) fn advance(&mut self, now: Ordinal) -> Result<()> {
        if let Some(last) = self.last {
            if now <= last {
                return Err(Error::ContractViolation(format!(
                    "request at ordinal {now} arrived after {last}"
                )));
            }
        }
        self.last = Some(now);
        Ok(())
    }
}

pub(crate) fn require_predictor(
    kind: PolicyKind,
    predictor: Option<&mut dyn Predictor>,
) -> Result<&mut dyn Predictor> {
    predictor.ok_or_else(|| Error::Config(format!("policy {kind} requires a predictor")))
}

/// Prediction bookkeeping shared by the prediction-consuming policies.
#[derive(Debug, Clone)]
pub(crate) struct Predictions {
    pub(crate) mode: Mode,
    pub(crate) refresh: RefreshRule,
    pub(crate) table: PredictionTable,
}

impl Predictions {
    pub(crate) fn new(cfg: &PolicyConfig) -> Self {
        Predictions {
            mode: cfg.mode,
            refresh: cfg.refresh,
            table: PredictionTable::default(),
        }
    }

    /// Sync refresh of every candidate; returns the number of calls.
    pub(crate) fn refresh_candidates(
        &mut self,
        ix: &mut index::RecencyIndex,
        candidates: &[Key],
        now: Ordinal,
        predictor: &mut dyn Predictor,
    ) -> usize {
        for &y in candidates {
            let v = predictor.predict(y, now);
            self.table.update(y, v, now);
            ix.set_pred(y, v);
        }
        candidates.len()
    }

    /// Async refresh of the requested key; returns the number of calls.
    pub(crate) fn after_request(
        &mut self,
        ix: &mut index::RecencyIndex,
        key: Key,
        now: Ordinal,
        predictor: &mut dyn Predictor,
    ) -> usize {
        if self.mode != Mode::Async || !self.refresh.due(&self.table, key, now) {
            return 0;
        }
        let v = predictor.predict(key, now);
        self.table.update(key, v, now);
        ix.set_pred(key, v);
        1
    }
}
