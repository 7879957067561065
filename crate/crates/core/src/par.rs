//! Path-level parallelism. Results always come back in path order, so every
//! downstream reduction sees the same sequence whatever the thread count.

use serde::{Deserialize, Serialize};

#[cfg(feature = "parallel")]
use crate::error::Error;
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

/// Maps `f` over path ids `start..start + count`, preserving order.
#[cfg(feature = "parallel")]
pub fn map_paths<T, F>(exec: Execution, start: u64, count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    use rayon::prelude::*;
    let ids = start..start + count as u64;
    match exec {
        Execution::Sequential => ids.map(f).collect(),
        Execution::Parallel => ids.into_par_iter().map(f).collect(),
    }
}

#[cfg(not(feature = "parallel"))]
pub fn map_paths<T, F>(_exec: Execution, start: u64, count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    (start..start + count as u64).map(f).collect()
}

/// Like [`map_paths`] but stops at the first error in path order.
pub fn try_map_paths<T, F>(exec: Execution, start: u64, count: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    map_paths(exec, start, count, f).into_iter().collect()
}

/// Runs `f` inside a pool of `threads` workers, 0 meaning the rayon default.
/// Without the `parallel` feature the count is ignored.
#[cfg(feature = "parallel")]
pub fn with_threads<T: Send, F: FnOnce() -> T + Send>(threads: usize, f: F) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

#[cfg(not(feature = "parallel"))]
pub fn with_threads<T: Send, F: FnOnce() -> T + Send>(_threads: usize, f: F) -> Result<T> {
    Ok(f())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    #[test]
    fn order_is_preserved() {
        let a = map_paths(Execution::Parallel, 10, 100, |i| i * i);
        let b = map_paths(Execution::Sequential, 10, 100, |i| i * i);
        assert_eq!(a, b);
        assert_eq!(a[0], 100);
    }

    #[test]
    fn first_error_wins() {
        let r: Result<Vec<u64>> = try_map_paths(Execution::Parallel, 0, 50, |i| {
            if i >= 20 { Err(Error::NonFinite(i as usize)) } else { Ok(i) }
        });
        assert_eq!(r.unwrap_err(), Error::NonFinite(20));
    }

    #[test]
    fn pool_runs_closure() {
        assert_eq!(with_threads(2, || map_paths(Execution::Parallel, 0, 4, |i| i + 1)).unwrap(), vec![1, 2, 3, 4]);
    }
}
