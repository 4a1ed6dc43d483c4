use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::Result;
use crate::oracle::{belady, exhaustive_opt, verify_no_idle_resident};
use crate::policies::{PolicyConfig, PolicyKind};
use crate::predictor::NoiseModel;
use crate::trace::{Key, Trace};

use super::{phase_audit, simulate, PredictorSpec};

/// Random trace with alphabet in `1..=max_alphabet` and length in
/// `1..=max_len`.
pub fn random_trace<R: Rng>(rng: &mut R, max_alphabet: usize, max_len: usize) -> Trace {
    let alphabet = rng.random_range(1..=max_alphabet) as u64;
    let n = rng.random_range(1..=max_len);
    Trace::from_keys((0..n).map(|_| Key(rng.random_range(0..alphabet))).collect::<Vec<_>>())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatteryOptions {
    pub seed: u64,
    /// Number of random instances.
    pub budget: usize,
    /// Deliberately corrupt the optimal miss count (negative control).
    pub inject_fault: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BatteryReport {
    pub instances: usize,
    pub checks: usize,
    pub failures: Vec<String>,
}

impl BatteryReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Noise levels exercised by the robustness checks.
const NOISE_LEVELS: [f64; 10] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0];

/// Randomized property battery: Belady against exhaustive search, the
/// idle-resident property, LARU consistency, the phase audit under
/// adversarial and noisy predictions, and LRU k-competitiveness.
pub fn run_battery(opts: &BatteryOptions) -> Result<BatteryReport> {
    let results: Vec<(usize, Vec<String>)> = (0..opts.budget)
        .into_par_iter()
        .map(|i| check_instance(opts, i))
        .collect::<Result<_>>()?;
    let mut report = BatteryReport {
        instances: opts.budget,
        ..Default::default()
    };
    for (checks, failures) in results {
        report.checks += checks;
        report.failures.extend(failures);
    }
    Ok(report)
}

fn check_instance(opts: &BatteryOptions, i: usize) -> Result<(usize, Vec<String>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_mul(0x9E37_79B9).wrapping_add(i as u64));
    let mut failures = Vec::new();
    let mut checks = 0usize;
    let fault = opts.inject_fault as usize;

    let small = random_trace(&mut rng, 6, 14);
    let k_small = rng.random_range(1..=3);
    let b = belady(&small, k_small)?.misses + fault;
    let e = exhaustive_opt(&small, k_small)?;
    checks += 1;
    if b != e {
        failures.push(format!("instance {i}: belady {b} != exhaustive {e} (k={k_small})"));
    }

    let t = random_trace(&mut rng, 20, 200);
    let k = rng.random_range(1..=8);
    let opt = belady(&t, k)?;
    let opt_misses = opt.misses + fault;

    checks += 1;
    if !verify_no_idle_resident(&opt, &t)? {
        failures.push(format!("instance {i}: belady kept an idle resident (k={k})"));
    }

    let laru = PolicyConfig::new(PolicyKind::Laru, k);
    let consistent = simulate(&laru, &t, &PredictorSpec::Oracle, "")?;
    checks += 1;
    if consistent.misses != opt_misses {
        failures.push(format!(
            "instance {i}: LARU with perfect predictions missed {} vs OPT {opt_misses} (k={k})",
            consistent.misses
        ));
    }

    let lru = simulate(&PolicyConfig::new(PolicyKind::Lru, k), &t, &PredictorSpec::None, "")?;
    checks += 1;
    if lru.misses > k * opt.misses + k {
        failures.push(format!("instance {i}: LRU {} > k·OPT + k (k={k}, OPT {})", lru.misses, opt.misses));
    }

    let mut specs = vec![PredictorSpec::Oracle, PredictorSpec::Adversarial];
    for model in [NoiseModel::PerQuery, NoiseModel::PerInterval] {
        specs.extend(NOISE_LEVELS.iter().map(|&p| PredictorSpec::Noisy {
            p,
            seed: i as u64,
            model,
        }));
    }
    for spec in specs {
        let r = if spec == PredictorSpec::Oracle {
            consistent.clone()
        } else {
            simulate(&laru, &t, &spec, "")?
        };
        let v = phase_audit(&r, &opt, &laru)?;
        checks += 1;
        if !v.passed() {
            failures.push(format!("instance {i}: audit {} under {spec}: {:?}", v.summary(), v.violations));
        }
    }
    Ok((checks, failures))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_battery_passes() {
        let r = run_battery(&BatteryOptions {
            seed: 5,
            budget: 200,
            inject_fault: false,
        })
        .unwrap();
        assert!(r.passed(), "{:?}", &r.failures[..r.failures.len().min(5)]);
        assert_eq!(r.instances, 200);
    }

    #[test]
    fn injected_fault_is_caught() {
        let r = run_battery(&BatteryOptions {
            seed: 5,
            budget: 20,
            inject_fault: true,
        })
        .unwrap();
        assert!(!r.passed());
    }

    #[test]
    fn empty_budget_is_vacuous() {
        let r = run_battery(&BatteryOptions {
            seed: 5,
            budget: 0,
            inject_fault: false,
        })
        .unwrap();
        assert!(r.passed());
        assert_eq!(r.checks, 0);
    }
}
