//! Data-parallel helpers.
//!
//! With the `parallel` feature (on by default) these fan out over the rayon
//! pool; without it they run the same closures sequentially. Every helper
//! produces results that do not depend on how the work was partitioned, so
//! the two builds are bit-identical.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Block size for reductions. Partial sums are formed per block and then
/// added in block order, which keeps floating-point sums deterministic.
pub const REDUCE_BLOCK: usize = 1 << 14;

/// Whether the crate was built with the `parallel` feature.
pub const fn enabled() -> bool {
    cfg!(feature = "parallel")
}

/// Worker threads the helpers fan out to.
pub fn threads() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}

/// `(0..n).map(f).collect()`, in parallel when enabled.
pub fn map_indices<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Maps a slice element-wise into a new vector.
pub fn map_slice<T, U, F>(src: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        src.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        src.iter().map(f).collect()
    }
}

/// Calls `f(chunk_index, chunk)` for consecutive chunks of `chunk_len`.
pub fn for_each_chunk_mut<T, F>(data: &mut [T], chunk_len: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    let chunk_len = chunk_len.max(1);
    #[cfg(feature = "parallel")]
    {
        data.par_chunks_mut(chunk_len).enumerate().for_each(|(i, c)| f(i, c));
    }
    #[cfg(not(feature = "parallel"))]
    {
        data.chunks_mut(chunk_len).enumerate().for_each(|(i, c)| f(i, c));
    }
}

/// Deterministic sum of `f(i)` over `0..n`.
pub fn sum_f64<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    let blocks = n.div_ceil(REDUCE_BLOCK);
    let partial = map_indices(blocks, |b| {
        let lo = b * REDUCE_BLOCK;
        let hi = (lo + REDUCE_BLOCK).min(n);
        (lo..hi).map(&f).sum::<f64>()
    });
    partial.into_iter().sum()
}

/// Integer count of indices satisfying `pred`.
pub fn count<F>(n: usize, pred: F) -> u64
where
    F: Fn(usize) -> bool + Sync + Send,
{
    let blocks = n.div_ceil(REDUCE_BLOCK);
    map_indices(blocks, |b| {
        let lo = b * REDUCE_BLOCK;
        let hi = (lo + REDUCE_BLOCK).min(n);
        (lo..hi).filter(|&i| pred(i)).count() as u64
    })
    .into_iter()
    .sum()
}

/// Deterministic maximum of `f(i)`; returns `f64::NEG_INFINITY` for `n == 0`.
pub fn max_f64<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    let blocks = n.div_ceil(REDUCE_BLOCK);
    map_indices(blocks, |b| {
        let lo = b * REDUCE_BLOCK;
        let hi = (lo + REDUCE_BLOCK).min(n);
        (lo..hi).map(&f).fold(f64::NEG_INFINITY, f64::max)
    })
    .into_iter()
    .fold(f64::NEG_INFINITY, f64::max)
}
