//! Where independent restarts run.
//!
//! Optimizers hand a batch of indexed jobs to an [`Executor`] and reduce the
//! results in index order, so the answer never depends on how the jobs were
//! scheduled.

use alloc::vec::Vec;

pub trait Executor {
    /// Evaluates `job(0..n)` and returns the results ordered by index.
    fn map<T, F>(&self, n: usize, job: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send;
}

/// Runs every job on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn map<T, F>(&self, n: usize, job: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        (0..n).map(job).collect()
    }
}
