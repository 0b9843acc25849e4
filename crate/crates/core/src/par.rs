//! Data-parallel helpers with a sequential fallback.
//!
//! Work is always split into the same chunks regardless of how many threads
//! run, and partial results are combined in index order, so outputs are
//! bit-identical across thread counts.

/// Number of voxel columns handled per work item.
pub const CHUNK: usize = 512;

#[cfg(feature = "parallel")]
pub fn map_indices<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_indices<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}

/// Splits `0..n` into fixed-size ranges and maps each one.
pub fn map_chunks<T, F>(n: usize, chunk: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(std::ops::Range<usize>) -> T + Sync + Send,
{
    let chunk = chunk.max(1);
    let n_chunks = n.div_ceil(chunk);
    map_indices(n_chunks, |c| {
        let lo = c * chunk;
        f(lo..(lo + chunk).min(n))
    })
}

/// Sum of per-chunk partial sums, reduced sequentially in chunk order.
pub fn sum_chunks<F>(n: usize, f: F) -> f64
where
    F: Fn(std::ops::Range<usize>) -> f64 + Sync + Send,
{
    map_chunks(n, CHUNK, f).into_iter().sum()
}

/// Builds an `rows x n` matrix from column blocks computed independently.
pub fn collect_columns<F>(rows: usize, n: usize, f: F) -> ndarray::Array2<f64>
where
    F: Fn(std::ops::Range<usize>) -> ndarray::Array2<f64> + Sync + Send,
{
    let blocks = map_chunks(n, CHUNK, |r| (r.clone(), f(r)));
    let mut out = ndarray::Array2::zeros((rows, n));
    for (r, block) in blocks {
        out.slice_mut(ndarray::s![.., r]).assign(&block);
    }
    out
}

/// Whether the crate was built with the rayon backend.
pub const fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}
