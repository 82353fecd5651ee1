//! Index-ordered batch execution.
//!
//! Work items are identified by their index and results always come back in
//! index order, so reductions over them are reproducible regardless of the
//! worker count. Without the `parallel` feature every call runs sequentially.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Exec {
    Sequential,
    #[default]
    Parallel,
}

impl Exec {
    /// Whether this build can actually run work in parallel.
    pub fn available() -> bool {
        cfg!(feature = "parallel")
    }
}

pub fn map_indexed<T, F>(exec: Exec, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Exec::Parallel => {
            use rayon::prelude::*;
            (0..n).into_par_iter().map(f).collect()
        }
        _ => (0..n).map(f).collect(),
    }
}

/// Like [`map_indexed`] but stops at the first error (by index order).
pub fn try_map_indexed<T, E, F>(exec: Exec, n: usize, f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(usize) -> Result<T, E> + Sync + Send,
{
    map_indexed(exec, n, f).into_iter().collect()
}

/// Configures the global worker pool from `RDARS_THREADS` if set.
/// Returns the thread count that was requested, if any.
pub fn init_from_env() -> Option<usize> {
    let threads = std::env::var("RDARS_THREADS")
        .ok()?
        .trim()
        .parse::<usize>()
        .ok()?;
    #[cfg(feature = "parallel")]
    {
        // A pool may already exist (tests, repeated calls); that is fine.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    Some(threads)
}
