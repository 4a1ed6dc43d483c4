//! Learning-augmented LRU (LARU) cache replacement and a trace-driven
//! experiment harness.
//!
//! The crate is organised bottom-up:
//!
//! - [`trace`]: request/trace model, CSV loading and synthetic workloads.
//! - [`oracle`]: Belady's offline optimum plus an exhaustive cross-check.
//! - [`predictor`]: next-request-time predictors (perfect, noisy,
//!   adversarial, feature heuristic) and the prediction table.
//! - [`policies`]: LRU, Marker, FPB, HF, LARU and BlindOracle&LRU behind
//!   one [`policies::Policy`] trait.
//! - [`radixcache`]: a prefix tree with leaf-only eviction driven by LRU,
//!   FPB or node-level LARU.
//! - [`harness`]: simulation, cost ratios, phase audits, noise sweeps and
//!   the amortized-cost benchmark.

pub mod error;
pub mod harness;
pub mod oracle;
pub mod policies;
pub mod predictor;
pub mod radixcache;
pub mod trace;

pub use error::{Error, Result};
pub use trace::{Key, NextRequestTable, Ordinal, Request, Trace};
