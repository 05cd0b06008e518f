//! Scoped-thread executors for independent jobs.

use std::num::NonZeroUsize;

use wsfn_core::models::train::{Executor, SampleGrad};
use wsfn_core::Result;

/// Thread cap from `WSFN_THREADS`, else the available parallelism.
pub fn thread_count() -> usize {
    std::env::var("WSFN_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, NonZeroUsize::get))
}

/// Splits jobs into contiguous chunks, one per thread. Results come back in
/// index order, so reductions over them do not depend on the thread count.
pub struct Threaded {
    pub threads: usize,
}

impl Threaded {
    pub fn from_env() -> Self {
        Self {
            threads: thread_count(),
        }
    }

    /// `f(0), …, f(n − 1)` on up to `threads` workers, in index order.
    pub fn par_map<T: Send>(&self, n: usize, f: &(dyn Fn(usize) -> T + Sync)) -> Vec<T> {
        let threads = self.threads.clamp(1, n.max(1));
        if threads == 1 {
            return (0..n).map(f).collect();
        }
        let chunk = n.div_ceil(threads);
        std::thread::scope(|s| {
            let handles: Vec<_> = (0..n)
                .step_by(chunk)
                .map(|start| {
                    s.spawn(move || (start..(start + chunk).min(n)).map(f).collect::<Vec<_>>())
                })
                .collect();
            handles
                .into_iter()
                .flat_map(|h| h.join().expect("worker thread panicked"))
                .collect()
        })
    }
}

impl Executor for Threaded {
    fn map(
        &self,
        n: usize,
        f: &(dyn Fn(usize) -> Result<SampleGrad> + Sync),
    ) -> Vec<Result<SampleGrad>> {
        self.par_map(n, f)
    }
}
