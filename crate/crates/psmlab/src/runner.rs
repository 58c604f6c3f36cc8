//! Parallel scenario execution.

use psmlab_core::harness::{resolve_truth, run_replicate, summarize, ReplicateRecord, ScenarioConfig, ScenarioSummary};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Runs all replicates on a pool of `workers` threads (rayon's default when
/// `None`) and returns the records in replicate order.
pub fn run_records_parallel(config: &ScenarioConfig, workers: Option<usize>) -> Result<Vec<ReplicateRecord>> {
    let truth = resolve_truth(config)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(k) = workers {
        if k == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        builder = builder.num_threads(k);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(|| {
        (0..config.replicates as u64)
            .into_par_iter()
            .map(|i| run_replicate(config, &truth, i))
            .collect()
    }))
}

/// Like [`run_records_parallel`], then aggregated. The summary is identical
/// for any worker count.
pub fn run_scenario_parallel(config: &ScenarioConfig, workers: Option<usize>) -> Result<ScenarioSummary> {
    let records = run_records_parallel(config, workers)?;
    Ok(summarize(config, &records))
}
