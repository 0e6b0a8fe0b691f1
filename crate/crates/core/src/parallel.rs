//! Execution strategy for the data-parallel inner loops.
//!
//! Every sampling loop in the crate is written as a map over fixed-size
//! batches followed by an order-independent reduction, so `Sequential` and
//! `Parallel` produce identical results. Without the `parallel` feature the
//! `Parallel` variant silently runs sequentially.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// True when work will actually be spread over the rayon pool.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

/// Maps `f` over `0..n` and collects the results in index order.
pub fn map_indexed<T, F>(exec: Execution, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = exec;
    (0..n).map(f).collect()
}

/// Applies `f` to every element of `items` in place.
pub fn for_each_mut<T, F>(exec: Execution, items: &mut [T], f: F)
where
    T: Send,
    F: Fn(usize, &mut T) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        items.par_iter_mut().enumerate().for_each(|(i, it)| f(i, it));
        return;
    }
    let _ = exec;
    items.iter_mut().enumerate().for_each(|(i, it)| f(i, it));
}

/// Splits `total` items into batches of `batch` and returns `(start, len)` pairs.
pub fn batches(total: usize, batch: usize) -> Vec<(usize, usize)> {
    let batch = batch.max(1);
    (0..total.div_ceil(batch))
        .map(|b| {
            let start = b * batch;
            (start, batch.min(total - start))
        })
        .collect()
}
