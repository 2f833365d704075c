//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature the `Parallel` mode dispatches to rayon;
//! without it both modes run sequentially. Each helper writes results by
//! index, so output never depends on scheduling.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Parallelism {
    Sequential,
    #[default]
    Parallel,
}

impl Parallelism {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Parallelism::Parallel
    }
}

/// `(0..n).map(f).collect()`, possibly in parallel.
pub fn map_range<T, F>(n: usize, mode: Parallelism, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if mode.is_parallel() {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = mode;
    (0..n).map(f).collect()
}

/// Apply `f(chunk_index, chunk)` to consecutive `chunk`-sized pieces of `data`.
pub fn for_each_chunk_mut<T, F>(data: &mut [T], chunk: usize, mode: Parallelism, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    if chunk == 0 {
        return;
    }
    #[cfg(feature = "parallel")]
    if mode.is_parallel() {
        use rayon::prelude::*;
        data.par_chunks_mut(chunk)
            .enumerate()
            .for_each(|(i, c)| f(i, c));
        return;
    }
    let _ = mode;
    for (i, c) in data.chunks_mut(chunk).enumerate() {
        f(i, c);
    }
}

/// Run `f` inside a pool of `jobs` threads when parallelism is available.
pub fn with_jobs<R: Send, F: FnOnce() -> R + Send>(jobs: usize, f: F) -> R {
    #[cfg(feature = "parallel")]
    if jobs > 1 {
        if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
            return pool.install(f);
        }
    }
    let _ = jobs;
    f()
}
