//! Execution policy for data-parallel loops.
//!
//! Every parallel loop in the crate maps an index range or slice to an
//! ordered `Vec`, and every reduction over the results is performed
//! sequentially afterwards. Parallel and sequential runs therefore produce
//! bit-identical output.
//!
//! With the `parallel` feature the work runs on a dedicated rayon pool whose
//! size is read once from `EMA_MARKET_THREADS` (unset or `0` means one thread
//! per core). Without the feature, [`Execution::Parallel`] silently degrades
//! to sequential iteration.

use std::ops::Range;

pub const THREADS_ENV: &str = "EMA_MARKET_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// True when this policy will actually fan out across threads.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }

    pub fn map_range<R, F>(self, range: Range<usize>, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            use rayon::prelude::*;
            return pool().install(|| range.into_par_iter().map(f).collect());
        }
        range.map(f).collect()
    }

    pub fn map_slice<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            use rayon::prelude::*;
            return pool().install(|| items.par_iter().map(f).collect());
        }
        items.iter().map(f).collect()
    }
}

/// Parse the thread cap. `None` means automatic sizing.
pub fn thread_cap_from(value: Option<&str>) -> Option<usize> {
    match value.map(str::trim).and_then(|v| v.parse::<usize>().ok()) {
        Some(0) | None => None,
        Some(n) => Some(n),
    }
}

#[cfg(feature = "parallel")]
fn pool() -> &'static rayon::ThreadPool {
    use std::sync::OnceLock;
    static POOL: OnceLock<rayon::ThreadPool> = OnceLock::new();
    POOL.get_or_init(|| {
        let cap = thread_cap_from(std::env::var(THREADS_ENV).ok().as_deref());
        let mut builder = rayon::ThreadPoolBuilder::new().thread_name(|i| format!("ema-market-{i}"));
        if let Some(n) = cap {
            builder = builder.num_threads(n);
        }
        builder.build().expect("failed to build rayon pool")
    })
}
