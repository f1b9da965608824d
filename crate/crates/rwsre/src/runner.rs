//! Replica-parallel execution with results in replica order.

use rayon::prelude::*;

pub struct Runner {
    pool: rayon::ThreadPool,
}

impl Runner {
    /// `threads = 0` uses every available core.
    pub fn new(threads: usize) -> Self {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .expect("thread pool");
        Runner { pool }
    }

    pub fn threads(&self) -> usize {
        self.pool.current_num_threads()
    }

    /// `f(0), ..., f(count - 1)` evaluated in parallel, returned in index order.
    pub fn map<T, F>(&self, count: u64, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(u64) -> T + Sync + Send,
    {
        self.pool
            .install(|| (0..count).into_par_iter().map(&f).collect())
    }
}
