//! Ordered data-parallel map with a sequential fallback.
//!
//! With the `parallel` feature (default) work runs on a dedicated rayon pool
//! sized to the requested parallelism. Without it, or when parallelism is 1,
//! items are processed in order on the calling thread. Either way the output
//! order matches the input order.

/// Maps `f` over `items` on the calling thread.
pub fn map_sequential<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    F: Fn(&T) -> R,
{
    items.iter().map(f).collect()
}

/// Maps `f` over `items` using at most `threads` workers. Results keep the
/// input order regardless of completion order.
#[cfg(feature = "parallel")]
pub fn map_ordered<T, R, F>(items: &[T], threads: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    use rayon::prelude::*;

    if threads <= 1 || items.len() <= 1 {
        return map_sequential(items, f);
    }
    match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(pool) => pool.install(|| items.par_iter().map(&f).collect()),
        // pool creation can fail under thread limits; degrade rather than abort
        Err(_) => map_sequential(items, f),
    }
}

#[cfg(not(feature = "parallel"))]
pub fn map_ordered<T, R, F>(items: &[T], _threads: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    map_sequential(items, f)
}

/// True when this build can actually run work in parallel.
pub const fn parallel_enabled() -> bool {
    cfg!(feature = "parallel")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preserves_order() {
        let items: Vec<u64> = (0..500).collect();
        let seq = map_sequential(&items, |x| x * x);
        for threads in [1, 2, 8] {
            assert_eq!(map_ordered(&items, threads, |x| x * x), seq);
        }
    }

    #[test]
    fn empty_input() {
        let items: Vec<u8> = Vec::new();
        assert!(map_ordered(&items, 4, |x| *x).is_empty());
    }
}
