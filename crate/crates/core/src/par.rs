//! Data-parallel map with a sequential fallback.
//!
//! With the `parallel` feature (default) work is spread over rayon's pool;
//! without it the same closures run in order on the calling thread. Results are
//! always returned in index order so downstream reductions are deterministic.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent RNG stream `stream` derived from `seed` (ChaCha stream splitting).
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// `(0..n).map(f).collect()`, possibly in parallel, in index order.
#[cfg(feature = "parallel")]
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}

/// Always-sequential variant, used by benches and by callers that are already
/// running inside a parallel task.
pub fn map_indexed_sequential<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

/// Splits `total` items into chunks of at most `chunk` items: `(start, len)` pairs.
pub fn chunks(total: usize, chunk: usize) -> Vec<(usize, usize)> {
    let chunk = chunk.max(1);
    (0..total.div_ceil(chunk))
        .map(|c| {
            let start = c * chunk;
            (start, chunk.min(total - start))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: u64 = stream_rng(7, 0).random();
        let b: u64 = stream_rng(7, 0).random();
        let c: u64 = stream_rng(7, 1).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn map_keeps_order() {
        assert_eq!(map_indexed(5, |i| i * i), vec![0, 1, 4, 9, 16]);
        assert_eq!(chunks(10, 4), vec![(0, 4), (4, 4), (8, 2)]);
        assert!(chunks(0, 4).is_empty());
    }
}
