use std::thread;

use super::{run, ClosedLoop, SimOptions, SimTrace, TeleopState};
use crate::error::Result;

/// Runs independent scenarios on scoped threads. Results come back in the
/// input order; runs share no mutable state.
pub fn run_batch(jobs: &[(ClosedLoop, TeleopState, SimOptions)]) -> Vec<Result<SimTrace>> {
    let workers = thread::available_parallelism().map_or(1, |n| n.get()).min(jobs.len().max(1));
    let mut results: Vec<Option<Result<SimTrace>>> = (0..jobs.len()).map(|_| None).collect();
    thread::scope(|scope| {
        let chunk = jobs.len().div_ceil(workers).max(1);
        for (slots, batch) in results.chunks_mut(chunk).zip(jobs.chunks(chunk)) {
            scope.spawn(move || {
                for (slot, (sys, init, opts)) in slots.iter_mut().zip(batch) {
                    *slot = Some(run(sys, init, opts));
                }
            });
        }
    });
    results.into_iter().map(|r| r.expect("every job ran")).collect()
}
