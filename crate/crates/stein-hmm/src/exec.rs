//! Replicate-level execution, parallel or sequential.
//!
//! Replicates are independent by construction (each derives its own random
//! stream from its index), so they can be mapped in any order. Results are
//! collected in index order and any floating-point reduction is left to the
//! caller to perform sequentially; output is therefore bit-identical whether
//! the `parallel` feature is on or off and whatever the thread count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Map `f` over `0..count`, returning results in index order.
///
/// Runs on the rayon pool when the `parallel` feature is enabled.
pub fn run_replicates<T, F>(count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..count).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..count).map(f).collect()
    }
}

/// Sequential twin of [`run_replicates`], available regardless of features.
///
/// Exists so benchmarks can compare the parallel driver against a true
/// single-threaded baseline within one build.
pub fn run_replicates_seq<T, F>(count: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..count).map(f).collect()
}
