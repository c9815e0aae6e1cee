//! Data-parallel map helpers with a sequential fallback.
//!
//! Batch verification and corpus scoring fan out through these functions.
//! With the `parallel` feature (default) they run on a rayon pool; without
//! it the same code paths run sequentially, which keeps the crate usable on
//! targets where rayon is unwanted and gives benches a baseline.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Map `f` over `items`, preserving order.
pub fn par_map<T, U, F>(items: Vec<T>, f: F) -> Vec<U>
where
    T: Send,
    U: Send,
    F: Fn(T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.into_iter().map(f).collect()
    }
}

/// Sequential map with the same shape as [`par_map`], kept callable in all
/// configurations so benches can compare the two directly.
pub fn seq_map<T, U, F>(items: Vec<T>, f: F) -> Vec<U>
where
    F: Fn(T) -> U,
{
    items.into_iter().map(f).collect()
}

/// Run `f` on a bounded pool of `workers` threads. With one worker (or
/// without the `parallel` feature) this degrades to a plain sequential map.
pub fn par_map_workers<T, U, F>(items: Vec<T>, workers: usize, f: F) -> Vec<U>
where
    T: Send,
    U: Send,
    F: Fn(T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if workers > 1 {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(workers)
                .build();
            if let Ok(pool) = pool {
                return pool.install(|| items.into_par_iter().map(f).collect());
            }
        }
        items.into_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = workers;
        items.into_iter().map(f).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn par_map_preserves_order() {
        let out = par_map((0..100).collect(), |x: i32| x * 2);
        assert_eq!(out, (0..100).map(|x| x * 2).collect::<Vec<_>>());
    }

    #[test]
    fn worker_pool_matches_sequential() {
        let items: Vec<u32> = (0..50).collect();
        let seq = seq_map(items.clone(), |x| x + 1);
        let par = par_map_workers(items, 4, |x| x + 1);
        assert_eq!(seq, par);
    }
}
