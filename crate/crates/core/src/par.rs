//! Data-parallel map used by the grid search and the batch simulator.
//!
//! With the `parallel` feature the work is spread over the rayon pool;
//! without it the same closures run sequentially. Results always come back
//! in input order, so reductions over them are reproducible either way.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Whether this build runs batch work on the rayon pool.
pub const PARALLEL: bool = cfg!(feature = "parallel");

/// Applies `f` to every item, preserving order.
#[cfg(feature = "parallel")]
pub fn map_indexed<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync + Send,
{
    items.par_iter().enumerate().map(|(i, t)| f(i, t)).collect()
}

/// Applies `f` to every item, preserving order.
#[cfg(not(feature = "parallel"))]
pub fn map_indexed<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync + Send,
{
    items.iter().enumerate().map(|(i, t)| f(i, t)).collect()
}

/// How batch work is scheduled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    /// Rayon pool when built with `parallel`, sequential otherwise.
    #[default]
    Parallel,
    Sequential,
}

/// Applies `f` to every item under the chosen schedule, preserving order.
pub fn map<T, R, F>(exec: Execution, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync + Send,
{
    match exec {
        Execution::Parallel => map_indexed(items, f),
        Execution::Sequential => map_indexed_sequential(items, f),
    }
}

/// Sequential counterpart of [`map_indexed`], available in every build.
pub fn map_indexed_sequential<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    F: Fn(usize, &T) -> R,
{
    items.iter().enumerate().map(|(i, t)| f(i, t)).collect()
}

/// Runs `op` with at most `threads` workers. `None` uses the global pool.
#[cfg(feature = "parallel")]
pub fn with_thread_cap<R: Send>(threads: Option<usize>, op: impl FnOnce() -> R + Send) -> R {
    match threads {
        Some(t) if t > 0 => match rayon::ThreadPoolBuilder::new().num_threads(t).build() {
            Ok(pool) => pool.install(op),
            Err(_) => op(),
        },
        _ => op(),
    }
}

/// Runs `op` with at most `threads` workers. `None` uses the global pool.
#[cfg(not(feature = "parallel"))]
pub fn with_thread_cap<R: Send>(_threads: Option<usize>, op: impl FnOnce() -> R + Send) -> R {
    op()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved() {
        let items: Vec<u64> = (0..1000).collect();
        let out = map_indexed(&items, |i, v| (i as u64) * 1000 + v);
        let seq = map_indexed_sequential(&items, |i, v| (i as u64) * 1000 + v);
        assert_eq!(out, seq);
        let capped = with_thread_cap(Some(2), || map_indexed(&items, |_, v| v * 2));
        assert_eq!(capped[999], 1998);
    }
}
