//! Row- and item-level data parallelism.
//!
//! With the `parallel` feature (default) these helpers run on rayon's
//! current pool; without it they are plain sequential loops. Results never
//! depend on how work was partitioned.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Calls `f(row_index, row)` for every `width`-long row of `buf`.
pub fn for_each_row_mut<T, F>(buf: &mut [T], width: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    buf.par_chunks_mut(width).enumerate().for_each(|(r, row)| f(r, row));
    #[cfg(not(feature = "parallel"))]
    buf.chunks_mut(width).enumerate().for_each(|(r, row)| f(r, row));
}

/// Maps `f` over `0..n` and folds the results with an associative `combine`.
pub fn map_reduce<R, F, C>(n: usize, identity: R, f: F, combine: C) -> R
where
    R: Send + Sync + Clone,
    F: Fn(usize) -> R + Sync + Send,
    C: Fn(R, R) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n)
            .into_par_iter()
            .map(&f)
            .reduce(|| identity.clone(), &combine)
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).fold(identity, combine)
    }
}

/// Order-preserving map over a slice.
pub fn map_collect<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Runs `f` with all helpers above confined to a single thread.
///
/// Under the `parallel` feature this installs a one-thread rayon pool, which
/// is how the benches measure the sequential baseline in the same binary.
pub fn sequential<R: Send>(f: impl FnOnce() -> R + Send) -> R {
    #[cfg(feature = "parallel")]
    {
        rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .expect("single-thread pool")
            .install(f)
    }
    #[cfg(not(feature = "parallel"))]
    {
        f()
    }
}

pub fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}
