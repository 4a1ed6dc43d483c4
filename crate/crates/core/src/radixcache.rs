//! Prefix-tree cache index with leaf-only eviction.
//!
//! Nodes hold token spans; a path from the root spells a cached prefix.
//! Eviction removes whole leaf nodes, so a shared prefix stays resident
//! until every extension below it is gone. LARU runs at node granularity
//! with `k` taken as the current number of evictable leaves and a single
//! confidence state for the whole tree.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::policies::EvictionCause;
use crate::predictor::{PredictedTime, Predictor};
use crate::trace::{ConversationWorkload, Key, Ordinal};

pub type Token = u64;

/// Arena index of a node. The root is never evicted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub usize);

const ROOT: usize = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RadixPolicy {
    #[default]
    Lru,
    Fpb,
    Laru,
}

impl RadixPolicy {
    pub fn needs_predictor(self) -> bool {
        self != RadixPolicy::Lru
    }
}

impl fmt::Display for RadixPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RadixPolicy::Lru => "lru",
            RadixPolicy::Fpb => "fpb",
            RadixPolicy::Laru => "laru",
        })
    }
}

impl FromStr for RadixPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lru" => Ok(RadixPolicy::Lru),
            "fpb" => Ok(RadixPolicy::Fpb),
            "laru" => Ok(RadixPolicy::Laru),
            other => Err(Error::InvalidArgument(format!("unknown radix policy {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadixConfig {
    /// Capacity in tokens.
    pub capacity: usize,
    pub policy: RadixPolicy,
    pub b: u32,
    pub errors_per_decay: usize,
}

impl RadixConfig {
    pub fn new(capacity: usize, policy: RadixPolicy) -> Self {
        RadixConfig {
            capacity,
            policy,
            b: 2,
            errors_per_decay: 1,
        }
    }
}

#[derive(Debug, Clone)]
struct Node {
    span: Vec<Token>,
    parent: usize,
    children: BTreeMap<Token, usize>,
    last_access: Ordinal,
    predicted_time: PredictedTime,
    /// Tokens from the root through the end of this span.
    path_len: usize,
    locked: bool,
    live: bool,
}

impl Node {
    fn start(&self) -> usize {
        self.path_len - self.span.len()
    }

    /// Identity that survives eviction: first token and its depth.
    fn ident(&self) -> (Token, usize) {
        (self.span[0], self.start())
    }
}

/// Read-only view of a node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeInfo {
    pub id: NodeId,
    pub span: Vec<Token>,
    pub children: Vec<NodeId>,
    pub last_access: Ordinal,
    pub predicted_time: PredictedTime,
    pub path_len: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvictionRecord {
    pub at: Ordinal,
    pub node: NodeId,
    pub first_token: Token,
    pub start: usize,
    pub tokens: usize,
    /// Whether the node had resident children when it was removed.
    pub had_children: bool,
    pub cause: EvictionCause,
}

#[derive(Debug, Clone, Default)]
struct NodeLaru {
    old: HashSet<usize>,
    decay_exp: u32,
    errors: usize,
    prediction_evicted: HashSet<(Token, usize)>,
    /// A prediction-induced miss is waiting for its LRU eviction.
    induced_pending: bool,
    phases: usize,
}

/// Prefix tree with token-capacity accounting and leaf-only eviction.
#[derive(Debug, Clone)]
pub struct RadixTree {
    cfg: RadixConfig,
    nodes: Vec<Node>,
    free: Vec<usize>,
    resident: usize,
    laru: NodeLaru,
    log: Vec<EvictionRecord>,
    predictor_calls: u64,
    prediction_induced: usize,
    last_now: Ordinal,
}

impl RadixTree {
    pub fn new(cfg: RadixConfig) -> Result<Self> {
        if cfg.capacity == 0 {
            return Err(Error::InvalidArgument("radix capacity must be at least 1 token".into()));
        }
        if cfg.b < 2 || cfg.errors_per_decay == 0 {
            return Err(Error::InvalidArgument(
                "decay base must be at least 2 and errors_per_decay at least 1".into(),
            ));
        }
        let root = Node {
            span: Vec::new(),
            parent: ROOT,
            children: BTreeMap::new(),
            last_access: 0,
            predicted_time: PredictedTime::NEVER,
            path_len: 0,
            locked: false,
            live: true,
        };
        Ok(RadixTree {
            cfg,
            nodes: vec![root],
            free: Vec::new(),
            resident: 0,
            laru: NodeLaru::default(),
            log: Vec::new(),
            predictor_calls: 0,
            prediction_induced: 0,
            last_now: 0,
        })
    }

    pub fn config(&self) -> &RadixConfig {
        &self.cfg
    }

    pub fn capacity(&self) -> usize {
        self.cfg.capacity
    }

    pub fn resident_tokens(&self) -> usize {
        self.resident
    }

    pub fn eviction_log(&self) -> &[EvictionRecord] {
        &self.log
    }

    pub fn predictor_calls(&self) -> u64 {
        self.predictor_calls
    }

    pub fn prediction_induced(&self) -> usize {
        self.prediction_induced
    }

    pub fn phases(&self) -> usize {
        self.laru.phases
    }

    /// Current LARU confidence `b^-m`.
    pub fn lambda(&self) -> f64 {
        (self.cfg.b as f64).powi(-(self.laru.decay_exp as i32))
    }

    pub fn root(&self) -> NodeId {
        NodeId(ROOT)
    }

    pub fn node(&self, id: NodeId) -> Option<NodeInfo> {
        let n = self.nodes.get(id.0).filter(|n| n.live)?;
        Some(NodeInfo {
            id,
            span: n.span.clone(),
            children: n.children.values().map(|&c| NodeId(c)).collect(),
            last_access: n.last_access,
            predicted_time: n.predicted_time,
            path_len: n.path_len,
        })
    }

    pub fn node_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.live).count() - 1
    }

    /// Current leaves, excluding the root.
    pub fn leaves(&self) -> Vec<NodeId> {
        self.live_ids()
            .filter(|&i| i != ROOT && self.nodes[i].children.is_empty())
            .map(NodeId)
            .collect()
    }

    fn live_ids(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes.iter().enumerate().filter(|(_, n)| n.live).map(|(i, _)| i)
    }

    fn advance(&mut self, now: Ordinal) -> Result<()> {
        if now < self.last_now {
            return Err(Error::ContractViolation(format!(
                "radix operation at ordinal {now} arrived after {}",
                self.last_now
            )));
        }
        self.last_now = now;
        Ok(())
    }

    fn touch(&mut self, i: usize, now: Ordinal) {
        self.nodes[i].last_access = now;
        self.laru.old.remove(&i);
    }

    /// Length of the longest resident prefix of `tokens`; refreshes recency
    /// along the matched path.
    pub fn match_prefix(&mut self, tokens: &[Token], now: Ordinal) -> Result<usize> {
        if tokens.is_empty() {
            return Err(Error::InvalidArgument("token sequence must be non-empty".into()));
        }
        self.advance(now)?;
        let mut cur = ROOT;
        let mut matched = 0;
        while matched < tokens.len() {
            let Some(&child) = self.nodes[cur].children.get(&tokens[matched]) else {
                break;
            };
            let common = common_len(&self.nodes[child].span, &tokens[matched..]);
            matched += common;
            self.touch(child, now);
            if common < self.nodes[child].span.len() {
                break;
            }
            cur = child;
        }
        Ok(matched)
    }

    /// Makes all of `tokens` resident, evicting first if needed. Returns the
    /// number of newly inserted tokens.
    pub fn insert_sequence(
        &mut self,
        tokens: &[Token],
        now: Ordinal,
        predictor: Option<&mut dyn Predictor>,
    ) -> Result<usize> {
        if tokens.is_empty() {
            return Err(Error::InvalidArgument("token sequence must be non-empty".into()));
        }
        if tokens.len() > self.cfg.capacity {
            return Err(Error::Capacity {
                need: tokens.len(),
                available: self.cfg.capacity,
            });
        }
        if self.cfg.policy.needs_predictor() && predictor.is_none() {
            return Err(Error::Config(format!("radix policy {} requires a predictor", self.cfg.policy)));
        }
        self.advance(now)?;

        let mut path = vec![ROOT];
        let mut cur = ROOT;
        let mut matched = 0;
        while matched < tokens.len() {
            let Some(&child) = self.nodes[cur].children.get(&tokens[matched]) else {
                break;
            };
            let common = common_len(&self.nodes[child].span, &tokens[matched..]);
            let node = if common < self.nodes[child].span.len() {
                self.split(child, common)
            } else {
                child
            };
            matched += common;
            self.touch(node, now);
            path.push(node);
            cur = node;
        }
        let need = tokens.len() - matched;
        if need == 0 {
            return Ok(0);
        }

        for &i in &path {
            self.nodes[i].locked = true;
        }
        let start = matched;
        if self.cfg.policy == RadixPolicy::Laru {
            let hit: Vec<(Token, usize)> = tokens[start..]
                .iter()
                .enumerate()
                .map(|(j, &t)| (t, start + j))
                .filter(|id| self.laru.prediction_evicted.contains(id))
                .collect();
            if !hit.is_empty() {
                for id in hit {
                    self.laru.prediction_evicted.remove(&id);
                }
                self.laru.induced_pending = true;
                self.prediction_induced += 1;
                self.laru.errors += 1;
            }
        }
        let overflow = (self.resident + need).saturating_sub(self.cfg.capacity);
        let evicted = if overflow > 0 {
            self.evict_inner(overflow, now, predictor)
        } else {
            Ok(Vec::new())
        };
        // A pending induced miss that did not need an eviction still decays.
        if self.laru.induced_pending {
            self.laru.induced_pending = false;
            self.record_error();
        }
        for &i in &path {
            self.nodes[i].locked = false;
        }
        evicted?;

        let leaf = self.alloc(Node {
            span: tokens[start..].to_vec(),
            parent: cur,
            children: BTreeMap::new(),
            last_access: now,
            predicted_time: PredictedTime::NEVER,
            path_len: tokens.len(),
            locked: false,
            live: true,
        });
        self.nodes[cur].children.insert(tokens[start], leaf);
        self.resident += need;
        Ok(need)
    }

    /// Frees at least `need` tokens by removing leaves under the configured
    /// policy. Path-locked nodes are not eligible.
    pub fn evict(
        &mut self,
        need: usize,
        now: Ordinal,
        predictor: Option<&mut dyn Predictor>,
    ) -> Result<Vec<EvictionRecord>> {
        if self.cfg.policy.needs_predictor() && predictor.is_none() {
            return Err(Error::Config(format!("radix policy {} requires a predictor", self.cfg.policy)));
        }
        self.advance(now)?;
        self.evict_inner(need, now, predictor)
    }

    fn evictable_tokens(&self) -> usize {
        self.live_ids()
            .filter(|&i| i != ROOT && !self.nodes[i].locked)
            .map(|i| self.nodes[i].span.len())
            .sum()
    }

    fn evict_inner(
        &mut self,
        need: usize,
        now: Ordinal,
        mut predictor: Option<&mut dyn Predictor>,
    ) -> Result<Vec<EvictionRecord>> {
        let available = self.evictable_tokens();
        if need > available {
            return Err(Error::Capacity { need, available });
        }
        let mut freed = 0;
        let mut out = Vec::new();
        let mut refreshed = false;
        while freed < need {
            let mut leaves: Vec<usize> = self
                .live_ids()
                .filter(|&i| i != ROOT && !self.nodes[i].locked && self.nodes[i].children.is_empty())
                .collect();
            // Oldest first; deeper nodes first among equals.
            leaves.sort_by_key(|&i| {
                let n = &self.nodes[i];
                (n.last_access, std::cmp::Reverse(n.path_len), i)
            });
            let victim_and_cause = match self.cfg.policy {
                RadixPolicy::Lru => (leaves[0], EvictionCause::LruFallback),
                RadixPolicy::Fpb => {
                    let p = predictor.as_deref_mut().expect("checked by caller");
                    if !refreshed {
                        self.refresh(&leaves, now, p);
                        refreshed = true;
                    } else {
                        // Leaves exposed by earlier removals need fresh values.
                        let stale: Vec<usize> = leaves
                            .iter()
                            .copied()
                            .filter(|&i| self.nodes[i].predicted_time == PredictedTime::NEVER)
                            .collect();
                        self.refresh(&stale, now, p);
                    }
                    (self.argmax(&leaves), EvictionCause::BeladyLike)
                }
                RadixPolicy::Laru => {
                    let p = predictor.as_deref_mut().expect("checked by caller");
                    self.laru_victim(&leaves, now, p)
                }
            };
            let (victim, cause) = victim_and_cause;
            freed += self.nodes[victim].span.len();
            out.push(self.remove_leaf(victim, now, cause));
        }
        self.log.extend(out.iter().cloned());
        Ok(out)
    }

    fn refresh(&mut self, ids: &[usize], now: Ordinal, predictor: &mut dyn Predictor) {
        for &i in ids {
            let v = predictor.predict(Key(self.nodes[i].span[0]), now);
            self.nodes[i].predicted_time = v;
        }
        self.predictor_calls += ids.len() as u64;
    }

    /// Largest prediction; ties go to the earliest entry of `ids`.
    fn argmax(&self, ids: &[usize]) -> usize {
        let mut best = ids[0];
        for &i in &ids[1..] {
            if self.nodes[i].predicted_time > self.nodes[best].predicted_time {
                best = i;
            }
        }
        best
    }

    fn record_error(&mut self) {
        if self.laru.errors >= self.cfg.errors_per_decay {
            self.laru.errors = 0;
            self.laru.decay_exp = self.laru.decay_exp.saturating_add(1);
        }
    }

    fn laru_victim(&mut self, leaves: &[usize], now: Ordinal, predictor: &mut dyn Predictor) -> (usize, EvictionCause) {
        let nodes = &self.nodes;
        self.laru.old.retain(|&i| nodes[i].live);
        if self.laru.old.is_empty() {
            self.laru.old = leaves.iter().copied().collect();
            self.laru.decay_exp = 0;
            self.laru.errors = 0;
            self.laru.prediction_evicted.clear();
            self.laru.phases += 1;
        }
        let victim_and_cause = if self.laru.induced_pending {
            self.laru.induced_pending = false;
            self.record_error();
            (leaves[0], EvictionCause::LruFallback)
        } else {
            let k = leaves.len();
            let l = self.candidate_size(k);
            if l == 1 {
                (leaves[0], EvictionCause::DegenerateSingle)
            } else {
                let cands = &leaves[..l];
                self.refresh(cands, now, predictor);
                let v = self.argmax(cands);
                self.laru.prediction_evicted.insert(self.nodes[v].ident());
                (v, EvictionCause::PredictionDriven)
            }
        };
        self.laru.old.remove(&victim_and_cause.0);
        victim_and_cause
    }

    fn candidate_size(&self, k: usize) -> usize {
        let b = self.cfg.b as usize;
        let mut l = k;
        for _ in 0..self.laru.decay_exp {
            l /= b;
            if l == 0 {
                break;
            }
        }
        l.max(1)
    }

    fn remove_leaf(&mut self, i: usize, now: Ordinal, cause: EvictionCause) -> EvictionRecord {
        let n = &self.nodes[i];
        let rec = EvictionRecord {
            at: now,
            node: NodeId(i),
            first_token: n.span[0],
            start: n.start(),
            tokens: n.span.len(),
            had_children: !n.children.is_empty(),
            cause,
        };
        let parent = n.parent;
        let first = n.span[0];
        self.nodes[parent].children.remove(&first);
        self.resident -= rec.tokens;
        let n = &mut self.nodes[i];
        n.live = false;
        n.span = Vec::new();
        n.children.clear();
        self.laru.old.remove(&i);
        self.free.push(i);
        rec
    }

    /// Splits `child` after `at` tokens; returns the new upper node.
    fn split(&mut self, child: usize, at: usize) -> usize {
        let lower_span = self.nodes[child].span.split_off(at);
        let upper_span = std::mem::replace(&mut self.nodes[child].span, lower_span);
        let parent = self.nodes[child].parent;
        let c = &self.nodes[child];
        let upper = Node {
            parent,
            children: BTreeMap::from([(c.span[0], child)]),
            last_access: c.last_access,
            predicted_time: c.predicted_time,
            path_len: c.path_len - c.span.len(),
            locked: false,
            live: true,
            span: upper_span,
        };
        let first = upper.span[0];
        let u = self.alloc(upper);
        self.nodes[child].parent = u;
        self.nodes[parent].children.insert(first, u);
        u
    }

    fn alloc(&mut self, node: Node) -> usize {
        match self.free.pop() {
            Some(i) => {
                self.nodes[i] = node;
                i
            }
            None => {
                self.nodes.push(node);
                self.nodes.len() - 1
            }
        }
    }

    /// Structural checks: child keys match first tokens, path lengths add
    /// up, the token total matches and fits, and no lock is left behind.
    pub fn check_invariants(&self) -> Result<()> {
        let fail = |m: String| Err(Error::ContractViolation(m));
        let mut total = 0;
        for i in self.live_ids() {
            let n = &self.nodes[i];
            if n.locked {
                return fail(format!("node {i} left locked"));
            }
            if i != ROOT {
                if n.span.is_empty() {
                    return fail(format!("node {i} has an empty span"));
                }
                let p = &self.nodes[n.parent];
                if !p.live || p.children.get(&n.span[0]) != Some(&i) {
                    return fail(format!("node {i} is not linked from its parent"));
                }
                if p.path_len + n.span.len() != n.path_len {
                    return fail(format!("node {i} path length mismatch"));
                }
                total += n.span.len();
            }
            for (&t, &c) in &n.children {
                if !self.nodes[c].live || self.nodes[c].span.first() != Some(&t) {
                    return fail(format!("child {c} of {i} keyed by a token it does not start with"));
                }
            }
        }
        if total != self.resident {
            return fail(format!("resident total {} but nodes hold {total}", self.resident));
        }
        if total > self.cfg.capacity {
            return fail(format!("resident {total} exceeds capacity {}", self.cfg.capacity));
        }
        Ok(())
    }
}

fn common_len(a: &[Token], b: &[Token]) -> usize {
    a.iter().zip(b).take_while(|(x, y)| x == y).count()
}

/// Node-granularity oracle: a node's next request is the next sequence that
/// contains its first token.
#[derive(Debug, Clone)]
pub struct SequenceOracle {
    occurrences: HashMap<Token, Vec<Ordinal>>,
    len: usize,
}

impl SequenceOracle {
    pub fn new<S: AsRef<[Token]>>(sequences: &[S]) -> Self {
        let mut occurrences: HashMap<Token, Vec<Ordinal>> = HashMap::new();
        for (i, s) in sequences.iter().enumerate() {
            for &t in s.as_ref() {
                let v = occurrences.entry(t).or_default();
                if v.last() != Some(&i) {
                    v.push(i);
                }
            }
        }
        SequenceOracle {
            occurrences,
            len: sequences.len(),
        }
    }
}

impl Predictor for SequenceOracle {
    fn predict(&mut self, key: Key, now: Ordinal) -> PredictedTime {
        let Some(occ) = self.occurrences.get(&key.0) else {
            return PredictedTime::NEVER;
        };
        let j = occ.partition_point(|&o| o <= now);
        match occ.get(j) {
            Some(&o) => PredictedTime(o as i64),
            None => PredictedTime((self.len + occ[j - 1]) as i64),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadixReport {
    pub policy: RadixPolicy,
    pub capacity: usize,
    pub requests: usize,
    pub tokens: usize,
    pub hit_tokens: usize,
    /// Matched tokens over requested tokens.
    pub hit_rate: f64,
    pub evictions: usize,
    pub predictor_calls: u64,
    pub prediction_induced: usize,
}

/// Serves each request as match-then-insert, one ordinal per request.
pub fn replay_sequences<S: AsRef<[Token]>>(
    cfg: &RadixConfig,
    sequences: &[S],
    mut predictor: Option<&mut dyn Predictor>,
) -> Result<RadixReport> {
    let mut tree = RadixTree::new(cfg.clone())?;
    let mut tokens = 0;
    let mut hit_tokens = 0;
    for (i, s) in sequences.iter().enumerate() {
        let s = s.as_ref();
        hit_tokens += tree.match_prefix(s, i)?;
        tokens += s.len();
        tree.insert_sequence(s, i, predictor.as_deref_mut().map(|p| p as &mut dyn Predictor))?;
    }
    Ok(RadixReport {
        policy: cfg.policy,
        capacity: cfg.capacity,
        requests: sequences.len(),
        tokens,
        hit_tokens,
        hit_rate: if tokens == 0 { 0.0 } else { hit_tokens as f64 / tokens as f64 },
        evictions: tree.eviction_log().len(),
        predictor_calls: tree.predictor_calls(),
        prediction_induced: tree.prediction_induced(),
    })
}

/// Replays a conversation workload with `policy`; prediction-consuming
/// policies get node-granularity oracle predictions.
pub fn replay_conversations(
    workload: &ConversationWorkload,
    cfg: &RadixConfig,
) -> Result<RadixReport> {
    // One block key is one tree token.
    let seqs: Vec<Vec<Token>> = workload
        .requests
        .iter()
        .map(|r| r.blocks.iter().map(|k| k.0).collect())
        .collect();
    if cfg.policy.needs_predictor() {
        let mut oracle = SequenceOracle::new(&seqs);
        replay_sequences(cfg, &seqs, Some(&mut oracle))
    } else {
        replay_sequences(cfg, &seqs, None)
    }
}
