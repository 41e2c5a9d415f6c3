//! Worker model: indexed map over independent tasks.
//!
//! With the `parallel` feature (default) and `workers > 1`, tasks run on a
//! dedicated rayon pool of exactly `workers` threads; otherwise they run
//! sequentially. Output order is always the task index order, and tasks are
//! expected to derive their own RNG from their index, so the result is
//! bit-identical regardless of worker count.

/// Map `f` over `0..n`, preserving index order.
#[cfg(feature = "parallel")]
pub fn map_indexed<T, F>(n: usize, workers: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    if workers <= 1 || n <= 1 {
        return (0..n).map(f).collect();
    }
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.min(n))
        .build()
        .expect("worker pool");
    pool.install(|| (0..n).into_par_iter().map(f).collect())
}

/// Sequential fallback used when the crate is built without `parallel`.
#[cfg(not(feature = "parallel"))]
pub fn map_indexed<T, F>(n: usize, _workers: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    (0..n).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;
    use rand::Rng;

    #[test]
    fn parallel_and_serial_agree() {
        let work = |i: usize| {
            let mut rng = rng_from(42, &[i as u64]);
            (0..100).map(|_| rng.gen::<f64>()).sum::<f64>()
        };
        let serial = map_indexed(64, 1, work);
        let parallel = map_indexed(64, 4, work);
        assert_eq!(serial, parallel);
    }
}
