use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::policies::PolicyConfig;
use crate::predictor::{OraclePredictor, Predictor, Truth};
use crate::trace::Trace;

/// Requests per timed batch.
const BATCH: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub k: usize,
    pub ns_per_request: f64,
    pub misses: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchTable {
    pub rows: Vec<BenchRow>,
    /// Least-squares slope of ln(time per request) against ln(k).
    pub growth_exponent: f64,
}

/// Mean per-request wall time of `base` (with the oracle predictor) for
/// each cache size in `ks`. Meaningful only in optimized builds.
pub fn bench_amortized_cost(base: &PolicyConfig, trace: &Trace, ks: &[usize]) -> Result<BenchTable> {
    if ks.len() < 2 {
        return Err(Error::InvalidArgument("need at least two cache sizes to fit growth".into()));
    }
    let truth = Truth::new(trace)?;
    let mut rows = Vec::with_capacity(ks.len());
    for &k in ks {
        let mut cfg = base.clone();
        cfg.k = k;
        cfg.hf_candidates = cfg.hf_candidates.min(k);
        let mut policy = cfg.build()?;
        let mut oracle = OraclePredictor::new(truth.clone());
        let mut elapsed = Duration::ZERO;
        let mut misses = 0usize;
        for batch in trace.requests().chunks(BATCH) {
            let start = Instant::now();
            for r in batch {
                oracle.observe(*r)?;
                let out = policy.on_request(r.key, r.ordinal, Some(&mut oracle))?;
                misses += (!out.hit) as usize;
            }
            elapsed += start.elapsed();
        }
        rows.push(BenchRow {
            k,
            ns_per_request: elapsed.as_nanos() as f64 / trace.len() as f64,
            misses,
        });
    }
    let growth_exponent = fit_growth_exponent(
        &rows.iter().map(|r| (r.k as f64, r.ns_per_request)).collect::<Vec<_>>(),
    );
    Ok(BenchTable { rows, growth_exponent })
}

/// Slope of the least-squares line through `(ln x, ln y)`.
pub fn fit_growth_exponent(points: &[(f64, f64)]) -> f64 {
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.max(1e-9).ln())).collect();
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponent_of_power_laws() {
        let lin: Vec<(f64, f64)> = (1..8).map(|i| (2f64.powi(i), 3.0 * 2f64.powi(i))).collect();
        assert!((fit_growth_exponent(&lin) - 1.0).abs() < 1e-12);
        let flat: Vec<(f64, f64)> = (1..8).map(|i| (2f64.powi(i), 5.0)).collect();
        assert!(fit_growth_exponent(&flat).abs() < 1e-12);
        let sqrt: Vec<(f64, f64)> = (1..8).map(|i| (4f64.powi(i), 2f64.powi(i))).collect();
        assert!((fit_growth_exponent(&sqrt) - 0.5).abs() < 1e-12);
    }
}
