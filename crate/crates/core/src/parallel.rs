//! Trial-level parallelism with results returned in trial order, so output
//! never depends on the worker count.

use std::ops::Range;

use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ParallelError {
    #[error("worker count must be at least 1")]
    ZeroWorkers,
    #[error("could not start worker pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

/// A bounded worker pool; `workers = 1` runs on the calling thread.
#[derive(Debug)]
pub struct TrialRunner {
    workers: usize,
    pool: Option<rayon::ThreadPool>,
}

impl TrialRunner {
    pub fn new(workers: usize) -> Result<Self, ParallelError> {
        if workers == 0 {
            return Err(ParallelError::ZeroWorkers);
        }
        let pool = if workers == 1 {
            None
        } else {
            Some(rayon::ThreadPoolBuilder::new().num_threads(workers).build()?)
        };
        Ok(Self { workers, pool })
    }

    pub fn sequential() -> Self {
        Self { workers: 1, pool: None }
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    /// `f(trial)` for every trial, in trial order.
    pub fn map<T, F>(&self, trials: Range<u64>, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(u64) -> T + Sync + Send,
    {
        match &self.pool {
            None => trials.map(f).collect(),
            Some(pool) => pool.install(|| trials.into_par_iter().map(f).collect()),
        }
    }

    /// Like [`map`](Self::map), failing with the error of the lowest failing trial.
    pub fn try_map<T, E, F>(&self, trials: Range<u64>, f: F) -> Result<Vec<T>, E>
    where
        T: Send,
        E: Send,
        F: Fn(u64) -> Result<T, E> + Sync + Send,
    {
        self.map(trials, f).into_iter().collect()
    }
}

impl Default for TrialRunner {
    fn default() -> Self {
        Self::sequential()
    }
}
