//! Trace-driven simulation, cost ratios, phase audits, noise sweeps and
//! timing.

mod audit;
mod battery;
mod bench;
mod sweep;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

pub use audit::{phase_audit, prediction_allowance, AuditClause, AuditVerdict};
pub use battery::{random_trace, run_battery, BatteryOptions, BatteryReport};
pub use bench::{bench_amortized_cost, fit_growth_exponent, BenchRow, BenchTable};
pub use sweep::{noise_sweep, SweepRow, SweepTable, DEFAULT_P_GRID};

use crate::error::{Error, Result};
use crate::oracle::OracleResult;
use crate::policies::{EvictionCause, PhaseStats, Policy, PolicyConfig, PolicyKind};
use crate::predictor::{
    make_adversarial, make_noisy, HeuristicPredictor, NoiseModel, OraclePredictor, Predictor, Truth,
};
use crate::trace::Trace;

/// Which predictor a simulation runs with.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PredictorSpec {
    None,
    Oracle,
    /// Oracle predictions, each flipped to the negated truth with
    /// probability `p`.
    Noisy { p: f64, seed: u64, model: NoiseModel },
    Adversarial,
    Heuristic,
    /// Heuristic predictions with flip noise.
    NoisyHeuristic { p: f64, seed: u64, model: NoiseModel },
}

impl PredictorSpec {
    pub fn build(&self, truth: &Arc<Truth>) -> Result<Option<Box<dyn Predictor + Send>>> {
        Ok(match *self {
            PredictorSpec::None => None,
            PredictorSpec::Oracle => Some(Box::new(OraclePredictor::new(truth.clone()))),
            PredictorSpec::Noisy { p, seed, model } => Some(Box::new(
                make_noisy(OraclePredictor::new(truth.clone()), p, truth.clone(), seed)?.with_model(model),
            )),
            PredictorSpec::Adversarial => Some(Box::new(make_adversarial(truth.clone()))),
            PredictorSpec::Heuristic => Some(Box::new(HeuristicPredictor::new())),
            PredictorSpec::NoisyHeuristic { p, seed, model } => Some(Box::new(
                make_noisy(HeuristicPredictor::new(), p, truth.clone(), seed)?.with_model(model),
            )),
        })
    }
}

impl fmt::Display for PredictorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PredictorSpec::None => f.write_str("none"),
            PredictorSpec::Oracle => f.write_str("oracle"),
            PredictorSpec::Noisy { p, model, .. } => write!(f, "noisy:{p}{}", model_suffix(*model)),
            PredictorSpec::Adversarial => f.write_str("adversarial"),
            PredictorSpec::Heuristic => f.write_str("heuristic"),
            PredictorSpec::NoisyHeuristic { p, model, .. } => {
                write!(f, "noisy-heuristic:{p}{}", model_suffix(*model))
            }
        }
    }
}

impl FromStr for PredictorSpec {
    type Err = Error;

    /// `none | oracle | adversarial | heuristic | noisy:P[:M] |
    /// noisy-heuristic:P[:M]` with `M` either `query` (default) or
    /// `interval`; the noise seed is filled in by the caller.
    fn from_str(s: &str) -> Result<Self> {
        let parse_p = |v: &str| {
            v.parse::<f64>()
                .map_err(|_| Error::InvalidArgument(format!("bad flip probability {v:?}")))
        };
        let parse_model = |m: Option<&str>| match m {
            None | Some("query") => Ok(NoiseModel::PerQuery),
            Some("interval") => Ok(NoiseModel::PerInterval),
            Some(other) => Err(Error::InvalidArgument(format!("unknown noise model {other:?}"))),
        };
        let mut parts = s.splitn(3, ':');
        let name = parts.next().unwrap_or_default();
        let p = parts.next();
        let model = parts.next();
        match (name, p) {
            ("none", None) => Ok(PredictorSpec::None),
            ("oracle", None) => Ok(PredictorSpec::Oracle),
            ("adversarial", None) => Ok(PredictorSpec::Adversarial),
            ("heuristic", None) => Ok(PredictorSpec::Heuristic),
            ("noisy" | "noisy-heuristic", None) => Err(Error::InvalidArgument(format!(
                "predictor {s} requires a flip probability, e.g. {s}:0.3"
            ))),
            ("noisy", Some(p)) => Ok(PredictorSpec::Noisy {
                p: parse_p(p)?,
                seed: 0,
                model: parse_model(model)?,
            }),
            ("noisy-heuristic", Some(p)) => Ok(PredictorSpec::NoisyHeuristic {
                p: parse_p(p)?,
                seed: 0,
                model: parse_model(model)?,
            }),
            _ => Err(Error::InvalidArgument(format!("unknown predictor {s:?}"))),
        }
    }
}

fn model_suffix(model: NoiseModel) -> &'static str {
    match model {
        NoiseModel::PerQuery => "",
        NoiseModel::PerInterval => ":interval",
    }
}

/// Aggregated outcome of one policy-vs-trace run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimReport {
    pub policy: PolicyKind,
    pub config: PolicyConfig,
    pub k: usize,
    pub trace_id: String,
    pub misses: usize,
    pub hits: usize,
    /// Indexed by [`EvictionCause::index`].
    pub evictions_by_cause: [usize; 6],
    pub predictor_calls: u64,
    /// Per-phase accounting (LARU only).
    pub phases: Vec<PhaseStats>,
    /// Completed phases.
    pub completed_phases: usize,
    pub hit_rate: f64,
    pub runtime_ns_per_request: f64,
}

impl SimReport {
    pub fn evictions(&self, cause: EvictionCause) -> usize {
        self.evictions_by_cause[cause.index()]
    }

    pub fn total_evictions(&self) -> usize {
        self.evictions_by_cause.iter().sum()
    }

    /// New items of completed phases and of the trailing partial phase.
    pub fn new_item_totals(&self) -> (usize, usize) {
        let done = self.phases.iter().filter(|p| p.completed).map(|p| p.new_items).sum();
        let partial = self.phases.iter().filter(|p| !p.completed).map(|p| p.new_items).sum();
        (done, partial)
    }
}

/// Replays `trace` through a fresh policy built from `cfg`.
pub fn simulate(cfg: &PolicyConfig, trace: &Trace, predictor: &PredictorSpec, trace_id: &str) -> Result<SimReport> {
    let (report, _) = run(cfg, trace, predictor, trace_id, false)?;
    Ok(report)
}

/// Like [`simulate`] but also returns the hit flags and eviction schedule.
pub fn simulate_with_schedule(
    cfg: &PolicyConfig,
    trace: &Trace,
    predictor: &PredictorSpec,
) -> Result<(SimReport, OracleResult)> {
    let (report, sched) = run(cfg, trace, predictor, "", true)?;
    Ok((report, sched.expect("schedule was requested")))
}

fn run(
    cfg: &PolicyConfig,
    trace: &Trace,
    spec: &PredictorSpec,
    trace_id: &str,
    record: bool,
) -> Result<(SimReport, Option<OracleResult>)> {
    trace.ensure_non_empty()?;
    if cfg.kind.needs_predictor() && matches!(spec, PredictorSpec::None) {
        return Err(Error::Config(format!("policy {} requires a predictor", cfg.kind)));
    }
    let truth = Truth::new(trace)?;
    let mut predictor = spec.build(&truth)?;
    let mut policy = cfg.build()?;
    replay(policy.as_mut(), trace, predictor.as_deref_mut().map(|p| p as &mut dyn Predictor), trace_id, record)
        .map(|(mut r, s)| {
            r.config = cfg.clone();
            (r, s)
        })
}

/// Replays a trace through an existing policy and predictor.
pub fn replay(
    policy: &mut dyn Policy,
    trace: &Trace,
    mut predictor: Option<&mut dyn Predictor>,
    trace_id: &str,
    record: bool,
) -> Result<(SimReport, Option<OracleResult>)> {
    let mut hits = 0usize;
    let mut by_cause = [0usize; 6];
    let mut calls = 0u64;
    let mut flags = Vec::new();
    let mut schedule = Vec::new();
    let start = Instant::now();
    for r in trace.requests() {
        let p: Option<&mut dyn Predictor> = match predictor {
            Some(ref mut p) => {
                p.observe(*r)?;
                Some(&mut **p)
            }
            None => None,
        };
        let out = policy.on_request(r.key, r.ordinal, p)?;
        debug_assert!(policy.len() <= policy.capacity());
        hits += out.hit as usize;
        calls += out.predictor_calls as u64;
        if let Some(v) = out.evicted {
            by_cause[out.cause.index()] += 1;
            if record {
                schedule.push((r.ordinal, v));
            }
        }
        if record {
            flags.push(out.hit);
        }
    }
    let elapsed = start.elapsed().as_nanos() as f64;
    let n = trace.len();
    let phases = policy.phases().map(<[_]>::to_vec).unwrap_or_default();
    let report = SimReport {
        policy: policy.kind(),
        config: PolicyConfig::new(policy.kind(), policy.capacity()),
        k: policy.capacity(),
        trace_id: trace_id.to_string(),
        misses: n - hits,
        hits,
        evictions_by_cause: by_cause,
        predictor_calls: calls,
        completed_phases: phases.iter().filter(|p| p.completed).count(),
        phases,
        hit_rate: hits as f64 / n as f64,
        runtime_ns_per_request: elapsed / n as f64,
    };
    let sched = record.then(|| OracleResult::from_outcomes(flags, schedule));
    Ok((report, sched))
}

/// Policy misses over optimal misses.
pub fn cost_ratio(report: &SimReport, oracle: &OracleResult) -> Result<f64> {
    if oracle.misses == 0 {
        return Err(Error::UndefinedRatio);
    }
    Ok(report.misses as f64 / oracle.misses as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::belady;
    use crate::trace::gen_cyclic_scan;

    #[test]
    fn lru_fits_in_cache() {
        let t = Trace::from_keys([1u64, 2, 1, 2]);
        let r = simulate(&PolicyConfig::new(PolicyKind::Lru, 2), &t, &PredictorSpec::None, "t").unwrap();
        assert_eq!((r.misses, r.hits), (2, 2));
        assert_eq!(r.hit_rate, 0.5);
        assert_eq!(r.predictor_calls, 0);
        let opt = belady(&t, 2).unwrap();
        assert_eq!(cost_ratio(&r, &opt).unwrap(), 1.0);
    }

    #[test]
    fn missing_predictor_is_config_error() {
        let t = Trace::from_keys([1u64]);
        for kind in [PolicyKind::Fpb, PolicyKind::Hf, PolicyKind::Laru, PolicyKind::BlindOracleLru] {
            let err = simulate(&PolicyConfig::new(kind, 2), &t, &PredictorSpec::None, "t").unwrap_err();
            assert!(matches!(err, Error::Config(_)));
        }
    }

    #[test]
    fn zero_opt_misses_is_undefined() {
        let t = Trace::from_keys([1u64]);
        let r = simulate(&PolicyConfig::new(PolicyKind::Lru, 2), &t, &PredictorSpec::None, "t").unwrap();
        let fake = OracleResult::from_outcomes(vec![true], vec![]);
        assert!(matches!(cost_ratio(&r, &fake), Err(Error::UndefinedRatio)));
    }

    #[test]
    fn lru_scan_ratio_closed_form() {
        // LRU misses every request. OPT misses the k cold requests and then
        // once every k requests, so the ratio tends to k.
        for k in [2usize, 3, 5] {
            let t = gen_cyclic_scan(k + 1, 3000).unwrap();
            let r = simulate(&PolicyConfig::new(PolicyKind::Lru, k), &t, &PredictorSpec::None, "scan").unwrap();
            let opt = belady(&t, k).unwrap();
            assert_eq!(r.misses, t.len());
            assert_eq!(opt.misses, k + (t.len() - k).div_ceil(k));
            let ratio = cost_ratio(&r, &opt).unwrap();
            assert!((ratio - k as f64).abs() < 0.01, "k={k}: {ratio}");
        }
    }

    #[test]
    fn predictor_spec_parsing() {
        assert_eq!("oracle".parse::<PredictorSpec>().unwrap(), PredictorSpec::Oracle);
        assert_eq!(
            "noisy:0.25".parse::<PredictorSpec>().unwrap(),
            PredictorSpec::Noisy { p: 0.25, seed: 0, model: NoiseModel::PerQuery }
        );
        assert!("noisy".parse::<PredictorSpec>().is_err());
        assert!("noisy:x".parse::<PredictorSpec>().is_err());
        assert!("psychic".parse::<PredictorSpec>().is_err());
    }
}
