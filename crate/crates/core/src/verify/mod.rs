//! Statistical and numeric verification harness.
//!
//! [`stats`] holds the tests, [`report`] the report types, [`oracles`] the
//! exact-identity suites and [`experiments`] the limit experiments.

pub mod experiments;
pub mod oracles;
pub mod report;
pub mod stats;

pub use experiments::{experiment_ascension, experiment_height, experiment_marginal_convergence, limit_checks, MarginalRegime};
pub use oracles::{check_counting_law, check_erased_prune_times, check_kesten, check_prune_marginal, metric_properties, transform_properties, CountingRegime};
pub use report::{SuiteReport, TestReport, Verdict};

use crate::rng::{Rng, RngStream};
use rayon::prelude::*;

/// Default significance level of every suite before Bonferroni correction.
pub const ALPHA: f64 = 0.001;

/// Runs `f` on replicates `0..count`, each with its own stream. The output
/// order is the replicate order, whatever the number of worker threads.
pub fn replicate<T, F>(seed: u64, tag: u32, count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut Rng) -> T + Sync + Send,
{
    replicate_from(seed, tag, 0, count, f)
}

/// Replicates `start..start + count`, for batched collection.
pub fn replicate_from<T, F>(seed: u64, tag: u32, start: u64, count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut Rng) -> T + Sync + Send,
{
    (start..start + count as u64).into_par_iter().map(|i| f(&mut RngStream::replicate(seed, tag, i).rng())).collect()
}

/// [`replicate`] for fallible work; the first error in replicate order wins.
pub fn try_replicate<T, F>(seed: u64, tag: u32, count: usize, f: F) -> crate::Result<Vec<T>>
where
    T: Send,
    F: Fn(&mut Rng) -> crate::Result<T> + Sync + Send,
{
    replicate(seed, tag, count, f).into_iter().collect()
}

/// Every suite at its default configuration, as run by `verify suite=all`.
pub fn run_all(seed: u64) -> crate::Result<Vec<SuiteReport>> {
    Ok(vec![
        experiments::default_height()?,
        experiments::default_ascension(seed)?,
        oracles::default_prune_marginal(seed)?,
        oracles::default_erased_prune_times(seed)?,
        experiments::default_marginal(seed)?,
        transform_properties(seed, 50, 1000)?,
        metric_properties(seed, 1000)?,
        oracles::default_counting(seed)?,
        oracles::default_kesten(seed)?,
        experiments::default_limits()?,
    ])
}

/// Looks up a suite by name (`height`, `ascension`, `prune-marginal`,
/// `erased-times`, `marginal`, `transforms`, `metric`, `counting`, `kesten`,
/// `limits`).
pub fn run_named(name: &str, seed: u64) -> crate::Result<Vec<SuiteReport>> {
    let one = match name {
        "all" => return run_all(seed),
        "height" => experiments::default_height()?,
        "ascension" => experiments::default_ascension(seed)?,
        "prune-marginal" => oracles::default_prune_marginal(seed)?,
        "erased-times" => oracles::default_erased_prune_times(seed)?,
        "marginal" => experiments::default_marginal(seed)?,
        "transforms" => transform_properties(seed, 50, 1000)?,
        "metric" => metric_properties(seed, 1000)?,
        "counting" => oracles::default_counting(seed)?,
        "kesten" => oracles::default_kesten(seed)?,
        "limits" => experiments::default_limits()?,
        other => return Err(crate::Error::InvalidArgument(format!("unknown suite '{other}'"))),
    };
    Ok(vec![one])
}

pub const SUITE_NAMES: [&str; 10] = ["height", "ascension", "prune-marginal", "erased-times", "marginal", "transforms", "metric", "counting", "kesten", "limits"];
