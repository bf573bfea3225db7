//! Rayon drivers over the chunked core plans. `collect` keeps chunk order,
//! so results match the sequential drivers bit for bit.

use ldhit_core::asymptotics::{EIntegralEstimate, EPlan};
use ldhit_core::simulation::{HittingEstimate, HittingPlan};
use rayon::prelude::*;

use crate::error::CliError;

pub fn pool(threads: usize) -> Result<rayon::ThreadPool, CliError> {
    if threads == 0 {
        return Err(CliError::Config("threads: must be positive".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Config(format!("threads: {e}")))
}

pub fn default_threads() -> usize {
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}

pub fn run_hitting(plan: &HittingPlan) -> HittingEstimate {
    let chunks: Vec<_> = (0..plan.n_chunks())
        .into_par_iter()
        .map(|c| plan.run_chunk(c))
        .collect();
    plan.finish(chunks)
}

pub fn run_e(plan: &EPlan) -> EIntegralEstimate {
    let values: Vec<_> = (0..plan.n_nodes())
        .into_par_iter()
        .map(|i| plan.eval_node(i))
        .collect();
    plan.finish(values)
}
