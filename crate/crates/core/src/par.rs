//! Data-parallel map with a sequential fallback. With the `parallel` feature
//! off, [`Execution::Parallel`] runs sequentially.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    pub fn is_parallel_available() -> bool {
        cfg!(feature = "parallel")
    }

    /// Order-preserving map.
    pub fn map<T, U, F>(self, items: Vec<T>, f: F) -> Vec<U>
    where
        T: Send,
        U: Send,
        F: Fn(T) -> U + Sync + Send,
    {
        match self {
            Execution::Sequential => items.into_iter().map(f).collect(),
            Execution::Parallel => parallel_map(items, f),
        }
    }
}

/// Order-preserving map on a dedicated pool of `workers` threads. Falls back
/// to a sequential map for one worker or without the `parallel` feature.
pub fn map_with_workers<T, U, F>(workers: usize, items: Vec<T>, f: F) -> Vec<U>
where
    T: Send,
    U: Send,
    F: Fn(T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if workers > 1 {
        if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
            return pool.install(|| parallel_map(items, f));
        }
    }
    let _ = workers;
    items.into_iter().map(f).collect()
}

#[cfg(feature = "parallel")]
fn parallel_map<T, U, F>(items: Vec<T>, f: F) -> Vec<U>
where
    T: Send,
    U: Send,
    F: Fn(T) -> U + Sync + Send,
{
    items.into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn parallel_map<T, U, F>(items: Vec<T>, f: F) -> Vec<U>
where
    T: Send,
    U: Send,
    F: Fn(T) -> U + Sync + Send,
{
    items.into_iter().map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_modes_preserve_order() {
        let items: Vec<u64> = (0..100).collect();
        let a = Execution::Sequential.map(items.clone(), |x| x * x);
        let b = Execution::Parallel.map(items, |x| x * x);
        assert_eq!(a, b);
        assert_eq!(a[7], 49);
    }

    #[test]
    fn worker_pool_matches_sequential() {
        let items: Vec<u64> = (0..50).collect();
        assert_eq!(
            map_with_workers(3, items.clone(), |x| x + 1),
            map_with_workers(1, items, |x| x + 1)
        );
    }
}
