//! Next-request-time predictors and the prediction table they feed.
//!
//! Every predictor answers "when will `key` be requested next?" as an
//! absolute ordinal. Predictions may be negative: the noisy and adversarial
//! predictors negate the true time.

use std::collections::{HashMap, VecDeque};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::trace::{annotate_next_request, Key, NextRequestTable, Ordinal, Request, Trace};

/// Predicted next-request ordinal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PredictedTime(pub i64);

impl PredictedTime {
    /// Default for keys the predictor knows nothing about: furthest future.
    pub const NEVER: PredictedTime = PredictedTime(i64::MAX / 4);

    pub fn negated(self) -> PredictedTime {
        PredictedTime(-self.0)
    }
}

impl From<usize> for PredictedTime {
    fn from(v: usize) -> Self {
        PredictedTime(v as i64)
    }
}

/// Source of next-request predictions.
///
/// `observe` is fed every request in ordinal order before the policy
/// handles it; `predict` may be called any number of times in between.
pub trait Predictor {
    fn observe(&mut self, _request: Request) -> Result<()> {
        Ok(())
    }

    fn predict(&mut self, key: Key, now: Ordinal) -> PredictedTime;
}

impl<P: Predictor + ?Sized> Predictor for Box<P> {
    fn observe(&mut self, request: Request) -> Result<()> {
        (**self).observe(request)
    }

    fn predict(&mut self, key: Key, now: Ordinal) -> PredictedTime {
        (**self).predict(key, now)
    }
}

/// Ground-truth next-request times for one trace.
#[derive(Debug, Clone)]
pub struct Truth {
    keys: Vec<Key>,
    next: NextRequestTable,
    occurrences: HashMap<Key, Vec<Ordinal>>,
}

impl Truth {
    pub fn new(trace: &Trace) -> Result<Arc<Truth>> {
        let next = annotate_next_request(trace)?;
        let mut occurrences: HashMap<Key, Vec<Ordinal>> = HashMap::new();
        for r in trace.requests() {
            occurrences.entry(r.key).or_default().push(r.ordinal);
        }
        Ok(Arc::new(Truth {
            keys: trace.keys().collect(),
            next,
            occurrences,
        }))
    }

    pub fn table(&self) -> &NextRequestTable {
        &self.next
    }

    /// Ordinal of the first request for `key` strictly after `now`; the
    /// recency-ordered sentinel of its last request when there is none.
    pub fn next_after(&self, key: Key, now: Ordinal) -> PredictedTime {
        if self.keys.get(now) == Some(&key) {
            return self.next.get(now).into();
        }
        let Some(occ) = self.occurrences.get(&key) else {
            return PredictedTime::NEVER;
        };
        let idx = occ.partition_point(|&o| o <= now);
        match (occ.get(idx), idx.checked_sub(1)) {
            (Some(&o), _) => o.into(),
            (None, Some(prev)) => self.next.sentinel_for(occ[prev]).into(),
            (None, None) => PredictedTime::NEVER,
        }
    }
}

impl Truth {
    /// Latest request for `key` at or before `now`.
    pub fn last_at_or_before(&self, key: Key, now: Ordinal) -> Option<Ordinal> {
        if self.keys.get(now) == Some(&key) {
            return Some(now);
        }
        let occ = self.occurrences.get(&key)?;
        let idx = occ.partition_point(|&o| o <= now);
        idx.checked_sub(1).map(|i| occ[i])
    }
}

/// Perfect predictions read off the next-request table.
#[derive(Debug, Clone)]
pub struct OraclePredictor {
    truth: Arc<Truth>,
}

impl OraclePredictor {
    pub fn new(truth: Arc<Truth>) -> Self {
        OraclePredictor { truth }
    }
}

impl Predictor for OraclePredictor {
    fn predict(&mut self, key: Key, now: Ordinal) -> PredictedTime {
        self.truth.next_after(key, now)
    }
}

/// Always the negated true next-request time.
#[derive(Debug, Clone)]
pub struct AdversarialPredictor {
    truth: Arc<Truth>,
}

pub fn make_adversarial(truth: Arc<Truth>) -> AdversarialPredictor {
    AdversarialPredictor { truth }
}

impl Predictor for AdversarialPredictor {
    fn predict(&mut self, key: Key, now: Ordinal) -> PredictedTime {
        self.truth.next_after(key, now).negated()
    }
}

/// Wraps a predictor so each query is independently replaced by the
/// negated truth with probability `p`.
pub struct NoisyPredictor<P> {
    inner: P,
    p: f64,
    truth: Arc<Truth>,
    rng: ChaCha8Rng,
    seed: u64,
    noise: NoiseModel,
    queries: u64,
    flips: u64,
}

/// How flip decisions relate across queries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoiseModel {
    /// Every query draws its own coin.
    #[default]
    PerQuery,
    /// One coin per key between consecutive requests for it, so repeated
    /// queries of an unchanged key agree.
    PerInterval,
}

pub fn make_noisy<P: Predictor>(inner: P, p: f64, truth: Arc<Truth>, seed: u64) -> Result<NoisyPredictor<P>> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!(
            "flip probability must lie in [0, 1], got {p}"
        )));
    }
    Ok(NoisyPredictor {
        inner,
        p,
        truth,
        rng: ChaCha8Rng::seed_from_u64(seed),
        seed,
        noise: NoiseModel::PerQuery,
        queries: 0,
        flips: 0,
    })
}

impl<P> NoisyPredictor<P> {
    pub fn with_model(mut self, noise: NoiseModel) -> Self {
        self.noise = noise;
        self
    }

    pub fn queries(&self) -> u64 {
        self.queries
    }

    pub fn flips(&self) -> u64 {
        self.flips
    }
}

impl<P: Predictor> Predictor for NoisyPredictor<P> {
    fn observe(&mut self, request: Request) -> Result<()> {
        self.inner.observe(request)
    }

    fn predict(&mut self, key: Key, now: Ordinal) -> PredictedTime {
        self.queries += 1;
        let u = match self.noise {
            NoiseModel::PerQuery => self.rng.random::<f64>(),
            NoiseModel::PerInterval => {
                let last = self.truth.last_at_or_before(key, now).map_or(u64::MAX, |o| o as u64);
                unit_hash(self.seed, key.0, last)
            }
        };
        let flip = self.p > 0.0 && (self.p >= 1.0 || u < self.p);
        if flip {
            self.flips += 1;
            self.truth.next_after(key, now).negated()
        } else {
            self.inner.predict(key, now)
        }
    }
}

/// Uniform value in `[0, 1)` from a SplitMix64 finalizer over the inputs.
fn unit_hash(seed: u64, a: u64, b: u64) -> f64 {
    let mut z = seed
        .wrapping_add(a.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(b.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    (z >> 11) as f64 / (1u64 << 53) as f64
}

/// A stored prediction and the ordinal it was made at.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TableEntry {
    pub value: PredictedTime,
    pub updated_at: Ordinal,
}

/// Key to latest prediction; absent keys are distinguishable from stale
/// ones.
#[derive(Debug, Clone, Default)]
pub struct PredictionTable {
    entries: HashMap<Key, TableEntry>,
}

impl PredictionTable {
    pub fn get(&self, key: Key) -> Option<TableEntry> {
        self.entries.get(&key).copied()
    }

    /// Stored value, or the absent-key default.
    pub fn value_or_default(&self, key: Key) -> PredictedTime {
        self.get(key).map_or(PredictedTime::NEVER, |e| e.value)
    }

    pub fn update(&mut self, key: Key, value: PredictedTime, now: Ordinal) {
        self.entries.insert(
            key,
            TableEntry {
                value,
                updated_at: now,
            },
        );
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Async refresh condition: refresh a key iff it was not refreshed within
/// the last `interval` requests.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RefreshRule {
    pub interval: usize,
}

impl Default for RefreshRule {
    fn default() -> Self {
        RefreshRule { interval: 1 }
    }
}

impl RefreshRule {
    pub fn due(&self, table: &PredictionTable, key: Key, now: Ordinal) -> bool {
        match table.get(key) {
            None => true,
            Some(e) => now.saturating_sub(e.updated_at) >= self.interval.max(1),
        }
    }
}

/// Number of request-interval deltas kept per key.
pub const DELTA_HISTORY: usize = 10;
/// Number of exponentially decayed counters per key.
pub const EDC_LEVELS: usize = 10;

/// Per-key features.
#[derive(Debug, Clone, PartialEq)]
pub struct KeyFeatures {
    /// Newest first, at most [`DELTA_HISTORY`] entries.
    pub deltas: VecDeque<u64>,
    /// `edcs[j - 1]` decays with half-life `2^j` requests.
    pub edcs: [f64; EDC_LEVELS],
    pub last_access: Ordinal,
    pub tag: Option<u32>,
}

/// Online feature state: deltas and EDCs per key.
#[derive(Debug, Clone, Default)]
pub struct FeatureState {
    keys: HashMap<Key, KeyFeatures>,
    last_ordinal: Option<Ordinal>,
}

impl FeatureState {
    pub fn features(&self, key: Key) -> Option<&KeyFeatures> {
        self.keys.get(&key)
    }

    pub fn set_tag(&mut self, key: Key, tag: u32) {
        if let Some(f) = self.keys.get_mut(&key) {
            f.tag = Some(tag);
        }
    }

    /// Folds one request into the features.
    pub fn observe(&mut self, request: Request) -> Result<()> {
        if let Some(last) = self.last_ordinal {
            if request.ordinal <= last {
                return Err(Error::ContractViolation(format!(
                    "request ordinal {} observed after {last}",
                    request.ordinal
                )));
            }
        }
        self.last_ordinal = Some(request.ordinal);
        let now = request.ordinal;
        match self.keys.get_mut(&request.key) {
            None => {
                self.keys.insert(
                    request.key,
                    KeyFeatures {
                        deltas: VecDeque::with_capacity(DELTA_HISTORY),
                        edcs: [1.0; EDC_LEVELS],
                        last_access: now,
                        tag: None,
                    },
                );
            }
            Some(f) => {
                let delta = (now - f.last_access) as u64;
                f.deltas.push_front(delta);
                f.deltas.truncate(DELTA_HISTORY);
                for (j, edc) in f.edcs.iter_mut().enumerate() {
                    let half_life = (1u64 << (j + 1)) as f64;
                    *edc = 1.0 + *edc * (-(delta as f64) / half_life).exp2();
                }
                f.last_access = now;
            }
        }
        Ok(())
    }

    /// Mean-interval forecast blended with an EDC-derived interval.
    ///
    /// The blend weight is `1 / (1 + cv^2)` over the stored deltas, so a
    /// strictly periodic key predicts exactly one period after its last
    /// access. Keys without any delta get [`PredictedTime::NEVER`].
    pub fn heuristic_predict(&self, key: Key, now: Ordinal) -> PredictedTime {
        let Some(f) = self.keys.get(&key) else {
            return PredictedTime::NEVER;
        };
        if f.deltas.is_empty() {
            return PredictedTime::NEVER;
        }
        let n = f.deltas.len() as f64;
        let mean = f.deltas.iter().sum::<u64>() as f64 / n;
        let var = f.deltas.iter().map(|&d| (d as f64 - mean).powi(2)).sum::<f64>() / n;
        let confidence = if f.deltas.len() < 2 {
            0.5
        } else {
            1.0 / (1.0 + var / (mean * mean).max(f64::MIN_POSITIVE))
        };
        let interval = confidence * mean + (1.0 - confidence) * edc_interval(&f.edcs, mean);
        let step = interval.round().max(1.0) as i64;
        let anchored = f.last_access as i64 + step;
        if anchored > now as i64 {
            PredictedTime(anchored)
        } else {
            PredictedTime(now as i64 + step)
        }
    }
}

/// Inverts the steady-state EDC of a periodic stream at the level whose
/// half-life is closest to `mean`.
fn edc_interval(edcs: &[f64; EDC_LEVELS], mean: f64) -> f64 {
    let level = (mean.max(1.0).log2().round() as usize).clamp(1, EDC_LEVELS);
    let edc = edcs[level - 1];
    if edc <= 1.0 {
        return mean;
    }
    let half_life = (1u64 << level) as f64;
    -half_life * (1.0 - 1.0 / edc).log2()
}

/// Online feature-based stand-in for a learned next-access model.
#[derive(Debug, Clone, Default)]
pub struct HeuristicPredictor {
    state: FeatureState,
}

impl HeuristicPredictor {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn state(&self) -> &FeatureState {
        &self.state
    }
}

impl Predictor for HeuristicPredictor {
    fn observe(&mut self, request: Request) -> Result<()> {
        self.state.observe(request)
    }

    fn predict(&mut self, key: Key, now: Ordinal) -> PredictedTime {
        self.state.heuristic_predict(key, now)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req(ordinal: usize, key: u64) -> Request {
        Request {
            ordinal,
            key: Key(key),
        }
    }

    #[test]
    fn oracle_reads_truth() {
        let t = Trace::from_keys([1u64, 2, 1]);
        let mut p = OraclePredictor::new(Truth::new(&t).unwrap());
        assert_eq!(p.predict(Key(1), 0), PredictedTime(2));
        // Key 2 is never requested again: sentinel len + ordinal.
        assert_eq!(p.predict(Key(2), 1), PredictedTime(4));
        assert_eq!(p.predict(Key(2), 2), PredictedTime(4));
        assert_eq!(p.predict(Key(1), 1), PredictedTime(2));
        assert_eq!(p.predict(Key(99), 1), PredictedTime::NEVER);
    }

    #[test]
    fn adversarial_negates() {
        let keys: Vec<u64> = (0..13).map(|i| if i == 0 || i == 12 { 5 } else { 100 + i }).collect();
        let truth = Truth::new(&Trace::from_keys(keys)).unwrap();
        let mut adv = make_adversarial(truth);
        assert_eq!(adv.predict(Key(5), 0), PredictedTime(-12));
        // Dead key: negated sentinel 13 + 12.
        assert_eq!(adv.predict(Key(5), 12), PredictedTime(-25));
    }

    #[test]
    fn noisy_extremes() {
        let t = crate::trace::gen_zipf(300, 20, 1.0, 1).unwrap();
        let truth = Truth::new(&t).unwrap();
        let mut clean = make_noisy(OraclePredictor::new(truth.clone()), 0.0, truth.clone(), 3).unwrap();
        let mut full = make_noisy(OraclePredictor::new(truth.clone()), 1.0, truth.clone(), 3).unwrap();
        let mut oracle = OraclePredictor::new(truth.clone());
        let mut adv = make_adversarial(truth.clone());
        for r in t.requests() {
            assert_eq!(clean.predict(r.key, r.ordinal), oracle.predict(r.key, r.ordinal));
            assert_eq!(full.predict(r.key, r.ordinal), adv.predict(r.key, r.ordinal));
        }
    }

    #[test]
    fn noisy_flip_of_seven() {
        let keys: Vec<u64> = (0..8).map(|i| if i == 0 || i == 7 { 1 } else { 10 + i }).collect();
        let truth = Truth::new(&Trace::from_keys(keys)).unwrap();
        let mut p = make_noisy(OraclePredictor::new(truth.clone()), 1.0, truth, 0).unwrap();
        assert_eq!(p.predict(Key(1), 0), PredictedTime(-7));
    }

    #[test]
    fn noisy_flip_rate() {
        let t = crate::trace::gen_zipf(1000, 50, 1.0, 2).unwrap();
        let truth = Truth::new(&t).unwrap();
        let mut p = make_noisy(OraclePredictor::new(truth.clone()), 0.5, truth, 17).unwrap();
        for i in 0..10_000 {
            p.predict(Key((i % 50) as u64), i % 1000);
        }
        let frac = p.flips() as f64 / p.queries() as f64;
        assert!((frac - 0.5).abs() <= 0.03, "{frac}");
    }

    #[test]
    fn interval_noise_is_stable_between_requests() {
        let t = crate::trace::gen_zipf(2000, 40, 1.0, 5).unwrap();
        let truth = Truth::new(&t).unwrap();
        let mut p = make_noisy(OraclePredictor::new(truth.clone()), 0.3, truth.clone(), 9)
            .unwrap()
            .with_model(NoiseModel::PerInterval);
        let mut oracle = OraclePredictor::new(truth);
        let mut flipped = 0;
        for r in t.requests() {
            let a = p.predict(r.key, r.ordinal);
            // Later queries before the key's next request repeat the answer.
            let later = (r.ordinal + 3).min(t.len() - 1);
            if oracle.predict(r.key, r.ordinal) > PredictedTime(later as i64) {
                assert_eq!(p.predict(r.key, later).0.signum(), a.0.signum());
            }
            flipped += (a != oracle.predict(r.key, r.ordinal)) as usize;
        }
        let frac = flipped as f64 / t.len() as f64;
        assert!((frac - 0.3).abs() <= 0.04, "{frac}");
    }

    #[test]
    fn noisy_rejects_bad_p() {
        let truth = Truth::new(&Trace::from_keys([1u64])).unwrap();
        assert!(make_noisy(OraclePredictor::new(truth.clone()), 1.5, truth.clone(), 0).is_err());
        assert!(make_noisy(OraclePredictor::new(truth.clone()), -0.1, truth, 0).is_err());
    }

    #[test]
    fn table_absent_vs_stale() {
        let mut t = PredictionTable::default();
        assert!(t.get(Key(1)).is_none());
        assert_eq!(t.value_or_default(Key(1)), PredictedTime::NEVER);
        t.update(Key(1), PredictedTime(5), 2);
        assert_eq!(t.get(Key(1)).unwrap().updated_at, 2);
        let rule = RefreshRule { interval: 3 };
        assert!(!rule.due(&t, Key(1), 4));
        assert!(rule.due(&t, Key(1), 5));
        assert!(rule.due(&t, Key(2), 5));
    }

    #[test]
    fn edc_first_access() {
        let mut s = FeatureState::default();
        s.observe(req(0, 7)).unwrap();
        let f = s.features(Key(7)).unwrap();
        assert!(f.deltas.is_empty());
        assert!(f.edcs.iter().all(|&e| e == 1.0));
    }

    #[test]
    fn edc_update_rule() {
        let mut s = FeatureState::default();
        s.observe(req(0, 7)).unwrap();
        s.observe(req(4, 7)).unwrap();
        let f = s.features(Key(7)).unwrap();
        assert!((f.edcs[0] - 1.25).abs() < 1e-12);
        // Level 2: 1 + 2^(-4/4).
        assert!((f.edcs[1] - 1.5).abs() < 1e-12);
        assert_eq!(f.deltas, VecDeque::from(vec![4]));
    }

    #[test]
    fn edc_long_gap_decays_fully() {
        let mut s = FeatureState::default();
        s.observe(req(0, 7)).unwrap();
        s.observe(req(1_000_000, 7)).unwrap();
        let f = s.features(Key(7)).unwrap();
        assert!(f.edcs.iter().all(|&e| (e - 1.0).abs() < 1e-9));
    }

    #[test]
    fn feature_state_rejects_out_of_order() {
        let mut s = FeatureState::default();
        s.observe(req(5, 1)).unwrap();
        assert!(matches!(s.observe(req(5, 2)), Err(Error::ContractViolation(_))));
        assert!(s.observe(req(3, 2)).is_err());
    }

    #[test]
    fn delta_ring_is_bounded_and_newest_first() {
        let mut s = FeatureState::default();
        for i in 0..15 {
            s.observe(req(i * i, 1)).unwrap();
        }
        let f = s.features(Key(1)).unwrap();
        assert_eq!(f.deltas.len(), DELTA_HISTORY);
        // Delta between 13^2 and 14^2.
        assert_eq!(f.deltas[0], 27);
        for (j, &e) in f.edcs.iter().enumerate() {
            let bound = 1.0 / (1.0 - (-1.0 / (1u64 << (j + 1)) as f64).exp2());
            assert!(e >= 0.0 && e <= bound);
        }
    }

    #[test]
    fn heuristic_periodic() {
        let mut p = HeuristicPredictor::new();
        for t in [0, 10, 20] {
            p.observe(req(t, 3)).unwrap();
        }
        assert_eq!(p.predict(Key(3), 20), PredictedTime(30));
    }

    #[test]
    fn heuristic_unknown_key_is_never() {
        let mut p = HeuristicPredictor::new();
        assert_eq!(p.predict(Key(3), 0), PredictedTime::NEVER);
        p.observe(req(0, 3)).unwrap();
        assert_eq!(p.predict(Key(3), 1), PredictedTime::NEVER);
    }

    #[test]
    fn heuristic_overdue_key_predicts_past_now() {
        let mut p = HeuristicPredictor::new();
        for t in [0, 5, 10] {
            p.observe(req(t, 3)).unwrap();
        }
        assert_eq!(p.predict(Key(3), 40), PredictedTime(45));
    }
}
