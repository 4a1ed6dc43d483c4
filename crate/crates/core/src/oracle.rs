//! Offline optimum (Belady's rule) and an exhaustive cross-check.

use std::collections::{BTreeSet, HashMap, HashSet};

use crate::error::{Error, Result};
use crate::trace::{annotate_next_request, Key, Ordinal, Trace};

/// Outcome of replaying a trace under a fixed eviction schedule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleResult {
    pub misses: usize,
    /// `(ordinal, victim)` for every eviction, in order.
    pub eviction_schedule: Vec<(Ordinal, Key)>,
    /// `true` where the request hit.
    pub hits: Vec<bool>,
}

impl OracleResult {
    pub fn from_outcomes(hits: Vec<bool>, eviction_schedule: Vec<(Ordinal, Key)>) -> Self {
        let misses = hits.iter().filter(|h| !**h).count();
        OracleResult {
            misses,
            eviction_schedule,
            hits,
        }
    }
}

/// Belady's MIN: on a full-cache miss evict the resident whose next
/// request is furthest away.
///
/// Next-request values are unique (dead keys get recency-ordered sentinels),
/// so no two residents ever tie.
pub fn belady(trace: &Trace, k: usize) -> Result<OracleResult> {
    if k == 0 {
        return Err(Error::InvalidArgument("cache size must be at least 1".into()));
    }
    let next = annotate_next_request(trace)?;
    let mut by_next: BTreeSet<(usize, Key)> = BTreeSet::new();
    let mut resident: HashMap<Key, usize> = HashMap::with_capacity(k);
    let mut hits = Vec::with_capacity(trace.len());
    let mut schedule = Vec::new();

    for (t, r) in trace.requests().iter().enumerate() {
        let nxt = next.get(t);
        if let Some(old) = resident.insert(r.key, nxt) {
            by_next.remove(&(old, r.key));
            by_next.insert((nxt, r.key));
            hits.push(true);
            continue;
        }
        hits.push(false);
        if by_next.len() == k {
            let (_, victim) = by_next.pop_last().expect("full cache is non-empty");
            resident.remove(&victim);
            schedule.push((t, victim));
        }
        by_next.insert((nxt, r.key));
    }
    Ok(OracleResult::from_outcomes(hits, schedule))
}

/// Largest instance accepted by [`exhaustive_opt`].
pub const EXHAUSTIVE_MAX_ALPHABET: usize = 6;
pub const EXHAUSTIVE_MAX_LEN: usize = 14;
pub const EXHAUSTIVE_MAX_K: usize = 3;

/// Minimum miss count over every legal demand-paging schedule.
///
/// Depth-first search memoized on `(ordinal, resident set)`; the resident
/// set is a bitmask over the trace's compacted alphabet.
pub fn exhaustive_opt(trace: &Trace, k: usize) -> Result<usize> {
    if k == 0 {
        return Err(Error::InvalidArgument("cache size must be at least 1".into()));
    }
    if trace.alphabet_size() > EXHAUSTIVE_MAX_ALPHABET
        || trace.len() > EXHAUSTIVE_MAX_LEN
        || k > EXHAUSTIVE_MAX_K
    {
        return Err(Error::SizeLimit(format!(
            "alphabet {} (max {EXHAUSTIVE_MAX_ALPHABET}), length {} (max {EXHAUSTIVE_MAX_LEN}), k {k} (max {EXHAUSTIVE_MAX_K})",
            trace.alphabet_size(),
            trace.len()
        )));
    }
    let mut ids: HashMap<Key, u8> = HashMap::new();
    let seq: Vec<u8> = trace
        .keys()
        .map(|key| {
            let next_id = ids.len() as u8;
            *ids.entry(key).or_insert(next_id)
        })
        .collect();
    let mut memo = HashMap::new();
    Ok(search(&seq, k, 0, 0, &mut memo))
}

fn search(seq: &[u8], k: usize, t: usize, cache: u8, memo: &mut HashMap<(usize, u8), usize>) -> usize {
    if t == seq.len() {
        return 0;
    }
    if let Some(&v) = memo.get(&(t, cache)) {
        return v;
    }
    let bit = 1u8 << seq[t];
    let best = if cache & bit != 0 {
        search(seq, k, t + 1, cache, memo)
    } else if (cache.count_ones() as usize) < k {
        1 + search(seq, k, t + 1, cache | bit, memo)
    } else {
        (0..8)
            .filter(|i| cache & (1 << i) != 0)
            .map(|i| 1 + search(seq, k, t + 1, (cache & !(1 << i)) | bit, memo))
            .min()
            .expect("full cache has a victim")
    };
    memo.insert((t, cache), best);
    best
}

/// Checks that no item stayed resident, unrequested, across the interval
/// between an eviction of `x` and the next miss on `x`.
///
/// Replays `result` against `trace` and fails with `InvalidArgument` when the
/// schedule is not consistent with the trace.
pub fn verify_no_idle_resident(result: &OracleResult, trace: &Trace) -> Result<bool> {
    if result.hits.len() != trace.len() {
        return Err(Error::InvalidArgument(format!(
            "result covers {} requests, trace has {}",
            result.hits.len(),
            trace.len()
        )));
    }
    let mismatch = |t: usize, what: &str| {
        Err(Error::InvalidArgument(format!(
            "schedule inconsistent with trace at ordinal {t}: {what}"
        )))
    };
    let mut last_req: HashMap<Key, usize> = HashMap::new();
    let mut by_last: BTreeSet<(usize, Key)> = BTreeSet::new();
    let mut evicted_at: HashMap<Key, usize> = HashMap::new();
    let mut schedule = result.eviction_schedule.iter().peekable();
    let mut ok = true;

    for (t, r) in trace.requests().iter().enumerate() {
        let x = r.key;
        let resident = last_req.contains_key(&x);
        if result.hits[t] != resident {
            return mismatch(t, if resident { "resident key recorded as miss" } else { "absent key recorded as hit" });
        }
        if !resident {
            if let Some(&t_evict) = evicted_at.get(&x) {
                if let Some(&(oldest, _)) = by_last.first() {
                    if oldest < t_evict {
                        ok = false;
                    }
                }
            }
            while let Some(&&(et, victim)) = schedule.peek() {
                if et != t {
                    break;
                }
                schedule.next();
                let Some(lr) = last_req.remove(&victim) else {
                    return mismatch(t, "evicted key was not resident");
                };
                by_last.remove(&(lr, victim));
                evicted_at.insert(victim, t);
            }
        } else {
            let lr = last_req[&x];
            by_last.remove(&(lr, x));
        }
        last_req.insert(x, t);
        by_last.insert((t, x));
    }
    if schedule.next().is_some() {
        return Err(Error::InvalidArgument(
            "eviction schedule extends past the trace".into(),
        ));
    }
    Ok(ok)
}

/// Distinct keys in the trace: a lower bound on any schedule's misses.
pub fn compulsory_misses(trace: &Trace) -> usize {
    trace.keys().collect::<HashSet<_>>().len()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::gen_cyclic_scan;

    fn tr(keys: &[u64]) -> Trace {
        Trace::from_keys(keys.iter().copied())
    }

    #[test]
    fn belady_abcabc() {
        let r = belady(&tr(&[0, 1, 2, 0, 1, 2]), 2).unwrap();
        assert_eq!(r.misses, 4);
        assert_eq!(r.eviction_schedule, vec![(2, Key(1)), (4, Key(0))]);
    }

    #[test]
    fn belady_single_key() {
        assert_eq!(belady(&tr(&[3, 3, 3]), 1).unwrap().misses, 1);
    }

    #[test]
    fn belady_rejects_zero_k() {
        assert!(matches!(belady(&tr(&[1]), 0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn exhaustive_small_cases() {
        assert_eq!(exhaustive_opt(&tr(&[0, 1, 0, 1]), 1).unwrap(), 4);
        assert_eq!(exhaustive_opt(&tr(&[0, 1, 2, 0, 1, 2]), 2).unwrap(), 4);
        assert_eq!(exhaustive_opt(&tr(&[0, 1, 0, 2, 1, 2, 0]), 3).unwrap(), 3);
    }

    #[test]
    fn exhaustive_guard() {
        let long = tr(&[0; 15]);
        assert!(matches!(exhaustive_opt(&long, 1), Err(Error::SizeLimit(_))));
        let wide = tr(&[0, 1, 2, 3, 4, 5, 6]);
        assert!(matches!(exhaustive_opt(&wide, 1), Err(Error::SizeLimit(_))));
        assert!(matches!(exhaustive_opt(&tr(&[0]), 4), Err(Error::SizeLimit(_))));
    }

    #[test]
    fn scan_beats_lru_worst_case() {
        let k = 4;
        let r = belady(&gen_cyclic_scan(k + 1, 5).unwrap(), k).unwrap();
        // LRU misses all 25 requests here.
        assert!(r.misses < 25);
    }

    #[test]
    fn no_idle_resident_single_key() {
        let t = tr(&[9, 9, 9]);
        assert!(verify_no_idle_resident(&belady(&t, 1).unwrap(), &t).unwrap());
    }

    #[test]
    fn no_idle_resident_flags_lru_on_scan() {
        // LRU with k=2 on 0,1,2,0,1,2,0,1,2: every request misses and the
        // victim is always the least recently used key.
        let t = gen_cyclic_scan(3, 3).unwrap();
        let hits = vec![false; 9];
        let schedule: Vec<(usize, Key)> = (2..9).map(|i| (i, Key(((i - 2) % 3) as u64))).collect();
        let lru = OracleResult::from_outcomes(hits, schedule);
        assert!(!verify_no_idle_resident(&lru, &t).unwrap());
    }

    #[test]
    fn no_idle_resident_rejects_mismatch() {
        let t = tr(&[1, 2, 1]);
        let bogus = OracleResult::from_outcomes(vec![false, false], vec![]);
        assert!(verify_no_idle_resident(&bogus, &t).is_err());
        let wrong_hit = OracleResult::from_outcomes(vec![true, false, false], vec![]);
        assert!(verify_no_idle_resident(&wrong_hit, &t).is_err());
    }
}
