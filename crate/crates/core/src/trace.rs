//! Request/trace model, trace loading and synthetic workload generators.
//!
//! Ordinals (positions in a trace) are the only clock used anywhere in the
//! crate. Generators are pure functions of their arguments, seed included,
//! and use a ChaCha stream so traces are identical across platforms.

use std::collections::HashSet;
use std::fmt;
use std::io::BufRead;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};

use crate::error::{Error, Result};

/// Position of a request within a trace, 0-based.
pub type Ordinal = usize;

/// Opaque cache item identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Key(pub u64);

impl fmt::Display for Key {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl From<u64> for Key {
    fn from(v: u64) -> Self {
        Key(v)
    }
}

/// One keyed access.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Request {
    pub ordinal: Ordinal,
    pub key: Key,
}

/// An ordered request sequence with contiguous ordinals starting at 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trace {
    requests: Vec<Request>,
    alphabet_size: usize,
}

impl Trace {
    /// Builds a trace from keys in request order.
    pub fn from_keys<I>(keys: I) -> Self
    where
        I: IntoIterator,
        I::Item: Into<Key>,
    {
        let requests: Vec<Request> = keys
            .into_iter()
            .enumerate()
            .map(|(ordinal, k)| Request {
                ordinal,
                key: k.into(),
            })
            .collect();
        let alphabet_size = requests.iter().map(|r| r.key).collect::<HashSet<_>>().len();
        Trace {
            requests,
            alphabet_size,
        }
    }

    pub fn requests(&self) -> &[Request] {
        &self.requests
    }

    pub fn keys(&self) -> impl Iterator<Item = Key> + '_ {
        self.requests.iter().map(|r| r.key)
    }

    pub fn len(&self) -> usize {
        self.requests.len()
    }

    pub fn is_empty(&self) -> bool {
        self.requests.is_empty()
    }

    /// Number of distinct keys in the trace.
    pub fn alphabet_size(&self) -> usize {
        self.alphabet_size
    }

    pub fn key_at(&self, ordinal: Ordinal) -> Key {
        self.requests[ordinal].key
    }

    pub(crate) fn ensure_non_empty(&self) -> Result<()> {
        if self.is_empty() {
            Err(Error::EmptyTrace)
        } else {
            Ok(())
        }
    }
}

/// Supported on-disk trace encodings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TraceFormat {
    /// One decimal key per line, optional `key` header, LF or CRLF.
    #[default]
    Csv,
}

/// Reads a trace, assigning ordinals by line order.
pub fn load_trace<R: BufRead>(source: R, format: TraceFormat) -> Result<Trace> {
    match format {
        TraceFormat::Csv => load_csv(source),
    }
}

fn load_csv<R: BufRead>(source: R) -> Result<Trace> {
    let mut keys = Vec::new();
    for (idx, line) in source.lines().enumerate() {
        let line = line?;
        let field = line.trim();
        if field.is_empty() {
            continue;
        }
        if idx == 0 && field.eq_ignore_ascii_case("key") {
            continue;
        }
        let value: u64 = field.parse().map_err(|_| Error::Parse {
            line: idx + 1,
            message: format!("expected a decimal key, found {field:?}"),
        })?;
        keys.push(Key(value));
    }
    if keys.is_empty() {
        return Err(Error::EmptyTrace);
    }
    Ok(Trace::from_keys(keys))
}

/// Writes a trace in the CSV format accepted by [`load_trace`].
pub fn write_csv<W: std::io::Write>(trace: &Trace, mut out: W) -> Result<()> {
    writeln!(out, "key")?;
    for r in trace.requests() {
        writeln!(out, "{}", r.key)?;
    }
    Ok(())
}

/// Zipf(s) workload over `alphabet` keys; key `i` has rank `i + 1`.
///
/// Sampling is inverse-CDF over a precomputed cumulative table.
pub fn gen_zipf(n: usize, alphabet: usize, s: f64, seed: u64) -> Result<Trace> {
    if n == 0 || alphabet == 0 {
        return Err(Error::InvalidArgument(
            "zipf length and alphabet must be at least 1".into(),
        ));
    }
    if s.is_nan() || s < 0.0 || !s.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "zipf exponent must be finite and non-negative, got {s}"
        )));
    }
    let cdf = zipf_cdf(alphabet, s);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let keys = (0..n).map(|_| {
        let u: f64 = rng.random();
        let idx = cdf.partition_point(|&c| c <= u).min(alphabet - 1);
        Key(idx as u64)
    });
    Ok(Trace::from_keys(keys.collect::<Vec<_>>()))
}

/// Analytic Zipf probability mass for ranks `1..=alphabet`.
pub fn zipf_pmf(alphabet: usize, s: f64) -> Vec<f64> {
    let weights: Vec<f64> = (1..=alphabet).map(|r| (r as f64).powf(-s)).collect();
    let total: f64 = weights.iter().sum();
    weights.into_iter().map(|w| w / total).collect()
}

fn zipf_cdf(alphabet: usize, s: f64) -> Vec<f64> {
    let mut acc = 0.0;
    let mut cdf: Vec<f64> = zipf_pmf(alphabet, s)
        .into_iter()
        .map(|p| {
            acc += p;
            acc
        })
        .collect();
    if let Some(last) = cdf.last_mut() {
        *last = 1.0;
    }
    cdf
}

/// Keys `0..cycle_len` repeated `rounds` times in order.
pub fn gen_cyclic_scan(cycle_len: usize, rounds: usize) -> Result<Trace> {
    if cycle_len < 2 {
        return Err(Error::InvalidArgument(format!(
            "scan cycle length must be at least 2, got {cycle_len}"
        )));
    }
    if rounds == 0 {
        return Err(Error::InvalidArgument("scan rounds must be at least 1".into()));
    }
    Ok(Trace::from_keys(
        (0..rounds).flat_map(|_| (0..cycle_len as u64).map(Key)),
    ))
}

/// Parameters of the multi-turn conversation workload.
#[derive(Debug, Clone, PartialEq)]
pub struct ConversationConfig {
    pub num_conversations: usize,
    pub turns_per_conv: usize,
    /// Mean number of new prompt tokens appended per turn.
    pub prompt_len_mean: usize,
    /// Mean of the gap between a conversation's consecutive turns, counted
    /// in intervening trace requests from other conversations.
    pub interval_mean: f64,
    pub interval_sd: f64,
    /// Tokens per cache key.
    pub block_size: usize,
    pub seed: u64,
}

impl Default for ConversationConfig {
    fn default() -> Self {
        ConversationConfig {
            num_conversations: 100,
            turns_per_conv: 4,
            prompt_len_mean: 128,
            interval_mean: 266.0,
            interval_sd: 77.5,
            block_size: 16,
            seed: 0,
        }
    }
}

/// One turn of one conversation: the full prompt as block keys.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConversationRequest {
    pub conversation: usize,
    pub turn: usize,
    pub blocks: Vec<Key>,
}

/// Interleaved conversation turns in arrival order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConversationWorkload {
    pub requests: Vec<ConversationRequest>,
}

impl ConversationWorkload {
    /// Flattens every turn's blocks into one key trace.
    pub fn trace(&self) -> Trace {
        Trace::from_keys(
            self.requests
                .iter()
                .flat_map(|r| r.blocks.iter().copied())
                .collect::<Vec<_>>(),
        )
    }

    /// Realized gaps between consecutive turns of the same conversation,
    /// counted in flattened trace requests from other conversations.
    pub fn turn_gaps(&self) -> Vec<usize> {
        let mut last_end: Vec<Option<usize>> = vec![None; self.num_conversations()];
        let mut gaps = Vec::new();
        let mut pos = 0usize;
        for r in &self.requests {
            if let Some(end) = last_end[r.conversation] {
                gaps.push(pos - end);
            }
            pos += r.blocks.len();
            last_end[r.conversation] = Some(pos);
        }
        gaps
    }

    fn num_conversations(&self) -> usize {
        self.requests
            .iter()
            .map(|r| r.conversation + 1)
            .max()
            .unwrap_or(0)
    }
}

fn conversation_key(conversation: usize, block: usize) -> Key {
    Key(((conversation as u64) << 32) | block as u64)
}

struct ConvState {
    blocks: Vec<Key>,
    next_turn: usize,
    /// Intervening requests still owed before the next turn may arrive.
    wait: i64,
}

/// Generates the conversation workload turn by turn.
///
/// Gaps are lognormal with the given mean and standard deviation of the
/// distribution itself. A waiting conversation becomes eligible once enough
/// other requests have been emitted; the most overdue eligible conversation
/// goes first, and a fresh conversation is opened only when none is eligible.
pub fn gen_conversation_workload(cfg: &ConversationConfig) -> Result<ConversationWorkload> {
    if cfg.num_conversations == 0
        || cfg.turns_per_conv == 0
        || cfg.prompt_len_mean == 0
        || cfg.block_size == 0
    {
        return Err(Error::InvalidArgument(
            "conversation counts, prompt length and block size must be at least 1".into(),
        ));
    }
    if !(cfg.interval_mean > 0.0 && cfg.interval_sd > 0.0)
        || !cfg.interval_mean.is_finite()
        || !cfg.interval_sd.is_finite()
    {
        return Err(Error::InvalidArgument(format!(
            "interval mean and sd must be positive, got {} and {}",
            cfg.interval_mean, cfg.interval_sd
        )));
    }
    let sigma2 = (1.0 + (cfg.interval_sd / cfg.interval_mean).powi(2)).ln();
    let mu = cfg.interval_mean.ln() - sigma2 / 2.0;
    let gap_dist = LogNormal::new(mu, sigma2.sqrt())
        .map_err(|e| Error::InvalidArgument(format!("lognormal parameters: {e}")))?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let lo = (cfg.prompt_len_mean / 2).max(1);
    let hi = (cfg.prompt_len_mean + cfg.prompt_len_mean / 2).max(lo);

    let mut convs: Vec<ConvState> = Vec::with_capacity(cfg.num_conversations);
    let mut waiting: Vec<usize> = Vec::new();
    let mut requests = Vec::new();
    // Conversations kept open at once so that, on average, the traffic of
    // the others fills each sampled gap: a conversation waits
    // (turns - 1) * interval_mean blocks over its life and emits
    // turns * (turns + 1) / 2 * mean_new_blocks.
    let mean_new_blocks = (lo..=hi).map(|t| t.div_ceil(cfg.block_size)).sum::<usize>() as f64
        / (hi - lo + 1) as f64;
    let turns = cfg.turns_per_conv as f64;
    let open_limit = ((turns - 1.0) * cfg.interval_mean
        / (turns * (turns + 1.0) / 2.0 * mean_new_blocks))
        .ceil()
        .max(1.0) as usize;

    loop {
        let pick = waiting
            .iter()
            .enumerate()
            .filter(|(_, &c)| convs[c].wait <= 0)
            .min_by_key(|(_, &c)| (convs[c].wait, c))
            .map(|(i, _)| i);
        let conv = match pick {
            Some(i) => waiting.swap_remove(i),
            None if convs.len() < cfg.num_conversations
                && waiting.len() <= open_limit =>
            {
                convs.push(ConvState {
                    blocks: Vec::new(),
                    next_turn: 0,
                    wait: 0,
                });
                convs.len() - 1
            }
            None => match waiting
                .iter()
                .enumerate()
                .min_by_key(|(_, &c)| (convs[c].wait, c))
                .map(|(i, _)| i)
            {
                Some(i) => waiting.swap_remove(i),
                None => break,
            },
        };

        let tokens = rng.random_range(lo..=hi);
        let new_blocks = tokens.div_ceil(cfg.block_size);
        let state = &mut convs[conv];
        let start = state.blocks.len();
        state
            .blocks
            .extend((start..start + new_blocks).map(|b| conversation_key(conv, b)));
        let turn = state.next_turn;
        state.next_turn += 1;
        let emitted = state.blocks.len() as i64;
        requests.push(ConversationRequest {
            conversation: conv,
            turn,
            blocks: state.blocks.clone(),
        });

        for &other in &waiting {
            convs[other].wait -= emitted;
        }
        if convs[conv].next_turn < cfg.turns_per_conv {
            let gap: f64 = gap_dist.sample(&mut rng);
            convs[conv].wait = gap.round() as i64;
            waiting.push(conv);
        }
    }
    Ok(ConversationWorkload { requests })
}

/// Flattened key trace of [`gen_conversation_workload`].
pub fn gen_conversation(cfg: &ConversationConfig) -> Result<Trace> {
    Ok(gen_conversation_workload(cfg)?.trace())
}

/// For every ordinal, the ordinal of the next request for the same key.
///
/// Keys never requested again map to `len + ordinal`, a sentinel greater
/// than every valid ordinal that keeps dead entries ordered by recency.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NextRequestTable {
    next: Vec<usize>,
}

impl NextRequestTable {
    pub fn len(&self) -> usize {
        self.next.len()
    }

    pub fn is_empty(&self) -> bool {
        self.next.is_empty()
    }

    /// Next-request ordinal after `ordinal`, or the sentinel.
    pub fn get(&self, ordinal: Ordinal) -> usize {
        self.next[ordinal]
    }

    pub fn sentinel_for(&self, ordinal: Ordinal) -> usize {
        self.next.len() + ordinal
    }

    pub fn is_sentinel(&self, value: usize) -> bool {
        value >= self.next.len()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.next
    }
}

/// Single backward pass over the trace.
pub fn annotate_next_request(trace: &Trace) -> Result<NextRequestTable> {
    trace.ensure_non_empty()?;
    let n = trace.len();
    let mut next = vec![0usize; n];
    let mut seen: std::collections::HashMap<Key, usize> =
        std::collections::HashMap::with_capacity(trace.alphabet_size());
    for (t, r) in trace.requests().iter().enumerate().rev() {
        next[t] = seen.insert(r.key, t).unwrap_or(n + t);
    }
    Ok(NextRequestTable { next })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn csv(body: &str) -> Result<Trace> {
        load_trace(body.as_bytes(), TraceFormat::Csv)
    }

    #[test]
    fn csv_basic_body() {
        let t = csv("5\n7\n5").unwrap();
        assert_eq!(t.keys().collect::<Vec<_>>(), vec![Key(5), Key(7), Key(5)]);
        assert_eq!(t.requests()[2].ordinal, 2);
        assert_eq!(t.alphabet_size(), 2);
    }

    #[test]
    fn csv_header_and_crlf() {
        let t = csv("key\r\n1\r\n2\r\n").unwrap();
        assert_eq!(t.keys().collect::<Vec<_>>(), vec![Key(1), Key(2)]);
    }

    #[test]
    fn csv_empty_is_error() {
        assert!(matches!(csv(""), Err(Error::EmptyTrace)));
        assert!(matches!(csv("key\n"), Err(Error::EmptyTrace)));
    }

    #[test]
    fn csv_bad_line_reports_line_number() {
        match csv("5\nxyz") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn csv_round_trip() {
        let t = gen_zipf(200, 30, 0.9, 3).unwrap();
        let mut buf = Vec::new();
        write_csv(&t, &mut buf).unwrap();
        assert_eq!(csv(std::str::from_utf8(&buf).unwrap()).unwrap(), t);
    }

    #[test]
    fn zipf_single_key() {
        let t = gen_zipf(4, 1, 1.0, 0).unwrap();
        assert_eq!(t.keys().collect::<Vec<_>>(), vec![Key(0); 4]);
    }

    #[test]
    fn zipf_rejects_zero_sizes() {
        assert!(gen_zipf(0, 3, 1.0, 0).is_err());
        assert!(gen_zipf(3, 0, 1.0, 0).is_err());
        assert!(gen_zipf(3, 3, -1.0, 0).is_err());
    }

    #[test]
    fn zipf_is_deterministic() {
        assert_eq!(
            gen_zipf(1000, 50, 1.0, 9).unwrap(),
            gen_zipf(1000, 50, 1.0, 9).unwrap()
        );
        assert_ne!(
            gen_zipf(1000, 50, 1.0, 9).unwrap(),
            gen_zipf(1000, 50, 1.0, 10).unwrap()
        );
    }

    #[test]
    fn zipf_head_mass_matches_analytic() {
        let t = gen_zipf(100_000, 1000, 1.0, 42).unwrap();
        let top = t.keys().filter(|k| k.0 == 0).count() as f64 / t.len() as f64;
        // Analytic mass of rank 1: 1 / H_1000.
        let h: f64 = (1..=1000).map(|r| 1.0 / r as f64).sum();
        let expected = 1.0 / h;
        assert!((top - expected).abs() <= 0.1 * expected, "{top} vs {expected}");
    }

    #[test]
    fn scan_by_construction() {
        let t = gen_cyclic_scan(3, 2).unwrap();
        assert_eq!(
            t.keys().map(|k| k.0).collect::<Vec<_>>(),
            vec![0, 1, 2, 0, 1, 2]
        );
        assert!(gen_cyclic_scan(1, 2).is_err());
        assert!(gen_cyclic_scan(3, 0).is_err());
    }

    #[test]
    fn next_request_small() {
        let t = Trace::from_keys([1u64, 2, 1]);
        let nt = annotate_next_request(&t).unwrap();
        assert_eq!(nt.get(0), 2);
        assert!(nt.is_sentinel(nt.get(1)));
        assert!(nt.is_sentinel(nt.get(2)));
        assert_eq!(nt.get(1), 4);
        assert_eq!(nt.get(2), 5);
    }

    #[test]
    fn next_request_all_distinct() {
        let t = Trace::from_keys(0u64..20);
        let nt = annotate_next_request(&t).unwrap();
        assert!((0..20).all(|i| nt.is_sentinel(nt.get(i))));
    }

    #[test]
    fn next_request_empty_trace() {
        let t = Trace::from_keys(Vec::<u64>::new());
        assert!(matches!(annotate_next_request(&t), Err(Error::EmptyTrace)));
    }

    #[test]
    fn conversation_prefix_growth() {
        let cfg = ConversationConfig {
            num_conversations: 1,
            turns_per_conv: 2,
            ..Default::default()
        };
        let w = gen_conversation_workload(&cfg).unwrap();
        assert_eq!(w.requests.len(), 2);
        let (a, b) = (&w.requests[0].blocks, &w.requests[1].blocks);
        assert!(b.len() > a.len());
        assert_eq!(&b[..a.len()], &a[..]);
    }

    #[test]
    fn conversation_rejects_bad_intervals() {
        let cfg = ConversationConfig {
            interval_sd: 0.0,
            ..Default::default()
        };
        assert!(gen_conversation(&cfg).is_err());
        let cfg = ConversationConfig {
            interval_mean: -3.0,
            ..Default::default()
        };
        assert!(gen_conversation(&cfg).is_err());
    }

    #[test]
    fn conversation_gap_mean() {
        let cfg = ConversationConfig {
            num_conversations: 100,
            turns_per_conv: 4,
            seed: 7,
            ..Default::default()
        };
        let w = gen_conversation_workload(&cfg).unwrap();
        assert_eq!(w.requests.len(), 400);
        let gaps = w.turn_gaps();
        assert_eq!(gaps.len(), 300);
        let mean = gaps.iter().sum::<usize>() as f64 / gaps.len() as f64;
        assert!((mean - 266.0).abs() <= 0.15 * 266.0, "mean gap {mean}");
    }

    #[test]
    fn conversation_is_deterministic() {
        let cfg = ConversationConfig {
            seed: 11,
            ..Default::default()
        };
        assert_eq!(
            gen_conversation(&cfg).unwrap(),
            gen_conversation(&cfg).unwrap()
        );
    }
}
