use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::oracle::belady;
use crate::policies::PolicyConfig;
use crate::predictor::NoiseModel;
use crate::trace::Trace;

use super::{simulate, PredictorSpec};

/// Flip probabilities 0.0, 0.1, ..., 1.0.
pub const DEFAULT_P_GRID: [f64; 11] = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0];

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub policy: String,
    pub p: f64,
    /// `None` marks a mean-over-seeds row.
    pub seed: Option<u64>,
    pub misses: f64,
    pub cost_ratio: f64,
    pub hit_rate: f64,
    pub predictor_calls: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    /// Mean-over-seeds row for `(policy, p)`.
    pub fn mean(&self, policy: &str, p: f64) -> Option<&SweepRow> {
        self.rows
            .iter()
            .find(|r| r.seed.is_none() && r.policy == policy && (r.p - p).abs() < 1e-12)
    }

    pub fn per_seed(&self) -> impl Iterator<Item = &SweepRow> {
        self.rows.iter().filter(|r| r.seed.is_some())
    }
}

/// Seed for the noise stream of one sweep cell.
fn noise_seed(seed: u64, p: f64) -> u64 {
    let mut z = seed ^ p.to_bits().rotate_left(17) ^ 0x9E37_79B9_7F4A_7C15;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Runs every `(policy, p, seed)` cell with the base predictor wrapped in
/// flip noise, against one shared Belady run. Policies that take no
/// predictor ignore `p`.
///
/// `heuristic_base` selects the heuristic predictor as the noise-free inner
/// predictor instead of the oracle.
pub fn noise_sweep(
    policies: &[PolicyConfig],
    trace: &Trace,
    p_grid: &[f64],
    seeds: &[u64],
    heuristic_base: bool,
    model: NoiseModel,
) -> Result<SweepTable> {
    if seeds.is_empty() {
        return Err(Error::InvalidArgument("noise sweep needs at least one seed".into()));
    }
    if let Some(p) = p_grid.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::InvalidArgument(format!("flip probability {p} outside [0, 1]")));
    }
    let k_values: Vec<usize> = {
        let mut v: Vec<usize> = policies.iter().map(|c| c.k).collect();
        v.sort_unstable();
        v.dedup();
        v
    };
    let optima: Vec<(usize, usize)> = k_values
        .iter()
        .map(|&k| belady(trace, k).map(|o| (k, o.misses)))
        .collect::<Result<_>>()?;

    let cells: Vec<(usize, f64, u64)> = policies
        .iter()
        .enumerate()
        .flat_map(|(i, _)| p_grid.iter().flat_map(move |&p| seeds.iter().map(move |&s| (i, p, s))))
        .collect();

    let rows: Vec<SweepRow> = cells
        .par_iter()
        .map(|&(i, p, seed)| {
            let mut cfg = policies[i].clone();
            cfg.seed = seed;
            let spec = if !cfg.kind.needs_predictor() {
                PredictorSpec::None
            } else if heuristic_base {
                PredictorSpec::NoisyHeuristic { p, seed: noise_seed(seed, p), model }
            } else {
                PredictorSpec::Noisy { p, seed: noise_seed(seed, p), model }
            };
            let report = simulate(&cfg, trace, &spec, "")?;
            let opt = optima.iter().find(|(k, _)| *k == cfg.k).expect("belady run per k").1;
            let ratio = report.misses as f64 / opt as f64;
            Ok(SweepRow {
                policy: cfg.kind.to_string(),
                p,
                seed: Some(seed),
                misses: report.misses as f64,
                cost_ratio: ratio,
                hit_rate: report.hit_rate,
                predictor_calls: report.predictor_calls as f64,
            })
        })
        .collect::<Result<_>>()?;

    let mut out = Vec::with_capacity(rows.len() + rows.len() / seeds.len());
    for group in rows.chunks(seeds.len()) {
        out.extend(group.iter().cloned());
        let n = group.len() as f64;
        let mean = |f: fn(&SweepRow) -> f64| group.iter().map(f).sum::<f64>() / n;
        out.push(SweepRow {
            policy: group[0].policy.clone(),
            p: group[0].p,
            seed: None,
            misses: mean(|r| r.misses),
            cost_ratio: mean(|r| r.cost_ratio),
            hit_rate: mean(|r| r.hit_rate),
            predictor_calls: mean(|r| r.predictor_calls),
        });
    }
    Ok(SweepTable { rows: out })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policies::PolicyKind;
    use crate::trace::gen_zipf;

    #[test]
    fn zero_noise_is_optimal_for_fpb_and_laru() {
        let t = gen_zipf(4000, 300, 0.9, 3).unwrap();
        let pols = [
            PolicyConfig::new(PolicyKind::Fpb, 16),
            PolicyConfig::new(PolicyKind::Laru, 16),
        ];
        let table = noise_sweep(&pols, &t, &[0.0, 1.0], &[1, 2], false, NoiseModel::PerQuery).unwrap();
        assert_eq!(table.rows.len(), 2 * 2 * 3);
        for name in ["fpb", "laru"] {
            assert_eq!(table.mean(name, 0.0).unwrap().cost_ratio, 1.0);
        }
    }

    #[test]
    fn rejects_bad_grid() {
        let t = gen_zipf(10, 3, 0.9, 3).unwrap();
        let pols = [PolicyConfig::new(PolicyKind::Lru, 2)];
        assert!(noise_sweep(&pols, &t, &[1.5], &[1], false, NoiseModel::PerQuery).is_err());
        assert!(noise_sweep(&pols, &t, &[0.5], &[], false, NoiseModel::PerQuery).is_err());
    }
}
