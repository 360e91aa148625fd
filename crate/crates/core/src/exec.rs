//! Stage-level task execution.
//!
//! Per-stage work is mapped over stage indices and collected in stage order,
//! so results are identical whether the tasks run on one thread or many.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use rayon::ThreadPool;

use crate::error::{Error, Result};

#[derive(Clone, Default)]
pub enum Execution {
    #[default]
    Serial,
    Threads(Arc<ThreadPool>),
}

impl fmt::Debug for Execution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Execution::Serial => write!(f, "Serial"),
            Execution::Threads(pool) => write!(f, "Threads({})", pool.current_num_threads()),
        }
    }
}

impl Execution {
    /// A dedicated pool with `workers` threads; one worker means serial execution.
    pub fn with_workers(workers: usize) -> Result<Self> {
        if workers <= 1 {
            return Ok(Execution::Serial);
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
        Ok(Execution::Threads(Arc::new(pool)))
    }

    pub fn workers(&self) -> usize {
        match self {
            Execution::Serial => 1,
            Execution::Threads(pool) => pool.current_num_threads(),
        }
    }

    /// `(0..count).map(task)`, possibly concurrently, results in index order.
    pub fn map_stages<T, F>(&self, count: usize, task: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            Execution::Serial => (0..count).map(task).collect(),
            Execution::Threads(pool) => pool.install(|| (0..count).into_par_iter().map(task).collect()),
        }
    }
}
