use rayon::prelude::*;
use rayon::{ThreadPool, ThreadPoolBuilder};

use crate::error::{Error, Result};

/// Worker pool for fanning outer samples out.
///
/// `map_indexed` always returns results in index order, so any reduction done
/// by the caller is independent of the thread count.
pub struct Workers {
    pool: ThreadPool,
}

impl Workers {
    /// `threads == 0` means hardware parallelism.
    pub fn new(threads: usize) -> Result<Self> {
        let pool = ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::config(format!("cannot build worker pool: {e}")))?;
        Ok(Self { pool })
    }

    pub fn single() -> Self {
        Self::new(1).expect("single-thread pool")
    }

    pub fn threads(&self) -> usize {
        self.pool.current_num_threads()
    }

    pub fn map_indexed<T, F>(&self, n: usize, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(usize) -> Result<T> + Sync + Send,
    {
        if self.threads() == 1 {
            return (0..n).map(f).collect();
        }
        self.pool
            .install(|| (0..n).into_par_iter().with_min_len(8).map(&f).collect())
    }
}

impl Default for Workers {
    fn default() -> Self {
        Self::new(0).expect("default worker pool")
    }
}
