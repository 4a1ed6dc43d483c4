use std::fmt;

use crate::error::{Error, Result};
use crate::oracle::OracleResult;
use crate::policies::{PolicyConfig, PolicyKind};

use super::SimReport;

/// Which audit condition failed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AuditClause {
    /// OPT ≥ max(½·Σcᵢ, N − 1) over completed phases.
    OptLowerBound,
    /// misses ≤ N·(k + a) + Σcᵢ + (k + a + c_partial), `a` the per-phase
    /// prediction allowance.
    MissUpperBound,
    /// Per-phase eviction-class caps.
    PhaseCap { phase: usize },
    /// A completed phase touched fewer than k distinct keys.
    PhaseSize { phase: usize },
}

impl fmt::Display for AuditClause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AuditClause::OptLowerBound => f.write_str("opt-lower-bound"),
            AuditClause::MissUpperBound => f.write_str("miss-upper-bound"),
            AuditClause::PhaseCap { phase } => write!(f, "phase-cap[{phase}]"),
            AuditClause::PhaseSize { phase } => write!(f, "phase-size[{phase}]"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditVerdict {
    pub violations: Vec<(AuditClause, String)>,
    pub completed_phases: usize,
    pub sum_new_items: usize,
    pub opt_lower_bound: f64,
    pub miss_upper_bound: f64,
    /// The final-partial-phase allowance included in `miss_upper_bound`.
    pub partial_phase_slack: f64,
}

impl AuditVerdict {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    /// `PASS` or `FAIL(<clauses>)`.
    pub fn summary(&self) -> String {
        if self.passed() {
            "PASS".to_string()
        } else {
            let clauses: Vec<String> = self.violations.iter().map(|(c, _)| c.to_string()).collect();
            format!("FAIL({})", clauses.join(";"))
        }
    }
}

/// Per-phase allowance on prediction-driven evictions beyond the new items.
///
/// Prediction-driven evictions in a phase come from first requests of new
/// items, or from re-requests of keys evicted by the LRU fallback while the
/// candidate set was still larger than one. The fallback fires at most
/// `e·(M + 1) − 1` times before `l` reaches 1, where `M` is the largest decay
/// step with `k / b^M ≥ 2`. With one error per decay this is at most
/// `log_b(k)`; the allowance is the larger of the two.
pub fn prediction_allowance(cfg: &PolicyConfig) -> f64 {
    let e = cfg.errors_per_decay.max(1);
    let log_term = e as f64 * cfg.log_b_k();
    if cfg.k < 2 {
        return log_term;
    }
    let b = cfg.b as usize;
    let mut m = 0usize;
    let mut d = b;
    while cfg.k / d >= 2 {
        m += 1;
        d = match d.checked_mul(b) {
            Some(v) => v,
            None => break,
        };
    }
    log_term.max((e * (m + 1) - 1) as f64)
}

/// Checks a LARU run against the optimal lower bound, the finite-trace
/// robustness bound and the per-phase eviction caps.
pub fn phase_audit(report: &SimReport, oracle: &OracleResult, cfg: &PolicyConfig) -> Result<AuditVerdict> {
    if report.policy != PolicyKind::Laru || cfg.kind != PolicyKind::Laru {
        return Err(Error::InvalidArgument(format!(
            "phase audit applies to LARU runs, got {}",
            report.policy
        )));
    }
    if report.k != cfg.k {
        return Err(Error::InvalidArgument(format!(
            "report cache size {} does not match config {}",
            report.k, cfg.k
        )));
    }
    let k = cfg.k as f64;
    let allowance = prediction_allowance(cfg);
    let mut violations = Vec::new();

    let completed: Vec<_> = report.phases.iter().filter(|p| p.completed).collect();
    let n_done = completed.len();
    let sum_c: usize = completed.iter().map(|p| p.new_items).sum();
    let partial_c: usize = report.phases.iter().filter(|p| !p.completed).map(|p| p.new_items).sum();

    let lower = (0.5 * sum_c as f64).max(n_done as f64 - 1.0);
    if (oracle.misses as f64) < lower {
        violations.push((
            AuditClause::OptLowerBound,
            format!("OPT misses {} < max(½·{sum_c}, {n_done} − 1)", oracle.misses),
        ));
    }

    let has_partial = report.phases.iter().any(|p| !p.completed);
    let slack = if has_partial { k + allowance + partial_c as f64 } else { 0.0 };
    let upper = n_done as f64 * (k + allowance) + sum_c as f64 + slack;
    if report.misses as f64 > upper + 1e-9 {
        violations.push((
            AuditClause::MissUpperBound,
            format!(
                "misses {} > {n_done}·(k + {allowance:.3}) + {sum_c} + slack {slack:.3}",
                report.misses
            ),
        ));
    }

    for (i, p) in report.phases.iter().enumerate() {
        if p.lru_class > cfg.k {
            violations.push((
                AuditClause::PhaseCap { phase: i + 1 },
                format!("{} LRU-class evictions > k = {}", p.lru_class, cfg.k),
            ));
        }
        if p.prediction_driven as f64 > p.new_items as f64 + allowance + 1e-9 {
            violations.push((
                AuditClause::PhaseCap { phase: i + 1 },
                format!(
                    "{} prediction-driven evictions > c = {} + {allowance:.3}",
                    p.prediction_driven, p.new_items
                ),
            ));
        }
        if p.completed && p.distinct < cfg.k {
            violations.push((
                AuditClause::PhaseSize { phase: i + 1 },
                format!("completed phase touched {} < k = {} distinct keys", p.distinct, cfg.k),
            ));
        }
    }

    Ok(AuditVerdict {
        violations,
        completed_phases: n_done,
        sum_new_items: sum_c,
        opt_lower_bound: lower,
        miss_upper_bound: upper,
        partial_phase_slack: slack,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{simulate, PredictorSpec};
    use crate::oracle::belady;
    use crate::trace::{gen_zipf, Trace};

    fn laru(k: usize) -> PolicyConfig {
        PolicyConfig::new(PolicyKind::Laru, k)
    }

    #[test]
    fn allowance_matches_log_for_default_decay() {
        assert_eq!(prediction_allowance(&laru(64)), 6.0);
        assert_eq!(prediction_allowance(&laru(1)), 0.0);
        let mut c = laru(2);
        c.b = 5;
        c.errors_per_decay = 3;
        // One fallback round at l = 2 allows e·1 − 1 = 2 > 3·log_5(2).
        assert_eq!(prediction_allowance(&c), 2.0);
    }

    #[test]
    fn adversarial_run_passes() {
        let t = gen_zipf(5000, 200, 0.9, 1).unwrap();
        let cfg = laru(16);
        let r = simulate(&cfg, &t, &PredictorSpec::Adversarial, "z").unwrap();
        let v = phase_audit(&r, &belady(&t, 16).unwrap(), &cfg).unwrap();
        assert!(v.passed(), "{:?}", v.violations);
        assert!(v.completed_phases > 0);
    }

    #[test]
    fn corrupted_report_fails_upper_bound() {
        let t = gen_zipf(3000, 100, 0.9, 2).unwrap();
        let cfg = laru(8);
        let mut r = simulate(&cfg, &t, &PredictorSpec::Adversarial, "z").unwrap();
        let opt = belady(&t, 8).unwrap();
        let v = phase_audit(&r, &opt, &cfg).unwrap();
        r.misses = v.miss_upper_bound.floor() as usize + 1;
        let bad = phase_audit(&r, &opt, &cfg).unwrap();
        assert!(!bad.passed());
        assert!(bad.violations.iter().any(|(c, _)| *c == AuditClause::MissUpperBound));
        assert!(bad.summary().starts_with("FAIL"));
    }

    #[test]
    fn fitting_trace_is_vacuous() {
        let t = Trace::from_keys([1u64, 2, 1, 2]);
        let cfg = laru(4);
        let r = simulate(&cfg, &t, &PredictorSpec::Oracle, "t").unwrap();
        let v = phase_audit(&r, &belady(&t, 4).unwrap(), &cfg).unwrap();
        assert!(v.passed());
        assert_eq!(v.completed_phases, 0);
    }

    #[test]
    fn rejects_non_laru() {
        let t = Trace::from_keys([1u64, 2]);
        let cfg = PolicyConfig::new(PolicyKind::Lru, 1);
        let r = simulate(&cfg, &t, &PredictorSpec::None, "t").unwrap();
        assert!(phase_audit(&r, &belady(&t, 1).unwrap(), &cfg).is_err());
    }
}
