//! Path-level fan-out.
//!
//! With the `parallel` feature, [`Execution::Parallel`] maps over path
//! indices on the current rayon pool; otherwise it degrades to the
//! sequential loop. Outputs are always returned in index order and summed
//! with [`pairwise_sum`], whose tree depends only on the slice length.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

/// Evaluates `f(scratch, i)` for `i in 0..n`, in index order.
///
/// `init` builds per-worker scratch space; it must not influence results.
pub fn map_indexed<T, S, I, F>(exec: Execution, n: usize, init: I, f: F) -> Vec<T>
where
    T: Send,
    I: Fn() -> S + Send + Sync,
    F: Fn(&mut S, usize) -> T + Send + Sync,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => (0..n).into_par_iter().map_init(&init, |s, i| f(s, i)).collect(),
        _ => {
            let mut scratch = init();
            (0..n).map(|i| f(&mut scratch, i)).collect()
        }
    }
}

/// Fallible variant of [`map_indexed`]; returns the error of the lowest failing index.
pub fn try_map_indexed<T, E, S, I, F>(exec: Execution, n: usize, init: I, f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    I: Fn() -> S + Send + Sync,
    F: Fn(&mut S, usize) -> Result<T, E> + Send + Sync,
{
    map_indexed(exec, n, init, f).into_iter().collect()
}

const PAIRWISE_BLOCK: usize = 32;

/// Sum with a fixed binary reduction tree.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= PAIRWISE_BLOCK {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Runs `op` on a dedicated pool with `threads` workers (sequentially without the feature).
pub fn with_threads<R: Send>(threads: Option<usize>, op: impl FnOnce() -> R + Send) -> R {
    #[cfg(feature = "parallel")]
    if let Some(n) = threads {
        if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build() {
            return pool.install(op);
        }
    }
    let _ = threads;
    op()
}
