//! Order-preserving map over replicate indices.
//!
//! Results are always collected in index order, so downstream reductions see
//! the same sequence regardless of how many workers ran.

#[cfg(feature = "parallel")]
pub(crate) fn map_indexed<T, F>(count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..count).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn map_indexed<T, F>(count: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..count).map(f).collect()
}

/// Per-replicate RNG: a ChaCha stream keyed by the run seed, one stream per
/// replicate index.
pub(crate) fn replicate_rng(seed: u64, replicate: u64) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate);
    rng
}

/// Caps the worker pool. Must run before any parallel work; results do not
/// depend on the count.
#[cfg(feature = "parallel")]
pub fn configure_threads(threads: usize) -> crate::Result<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| crate::Error::InvalidArgument(format!("cannot configure {threads} threads: {e}")))
}

/// Without the `parallel` feature everything runs on the calling thread.
#[cfg(not(feature = "parallel"))]
pub fn configure_threads(_threads: usize) -> crate::Result<()> {
    Ok(())
}
