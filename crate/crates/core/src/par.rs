//! Data-parallel loops over index ranges.
//!
//! With the `parallel` feature (default) these run on rayon; without it, or
//! with a worker hint of one, they run sequentially. Results never depend on
//! scheduling: maps preserve index order and reductions break ties on the
//! smallest index.

/// Worker-count hint. `0` means "all available", `1` forces the sequential
/// path.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Workers(pub usize);

impl Workers {
    pub const AUTO: Workers = Workers(0);
    pub const SEQUENTIAL: Workers = Workers(1);

    pub fn is_sequential(self) -> bool {
        self.0 == 1 || !cfg!(feature = "parallel")
    }
}

/// `(0..n).map(f)` collected in index order.
pub fn map_indices<T, F>(n: usize, workers: Workers, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    if workers.is_sequential() {
        return (0..n).map(f).collect();
    }
    parallel::map_indices(n, workers, f)
}

/// Index and value of the largest finite `f(i)`; ties go to the smallest
/// index. `None` entries are skipped.
pub fn argmax_indices<F>(n: usize, workers: Workers, f: F) -> Option<(usize, f64)>
where
    F: Fn(usize) -> Option<f64> + Sync + Send,
{
    let better = |a: (usize, f64), b: (usize, f64)| {
        if b.1 > a.1 || (b.1 == a.1 && b.0 < a.0) {
            b
        } else {
            a
        }
    };
    if workers.is_sequential() {
        return (0..n)
            .filter_map(|i| f(i).filter(|v| !v.is_nan()).map(|v| (i, v)))
            .reduce(better);
    }
    parallel::reduce_indices(n, workers, f, better)
}

/// Index and value of the smallest finite `f(i)`; ties go to the smallest
/// index.
pub fn argmin_indices<F>(n: usize, workers: Workers, f: F) -> Option<(usize, f64)>
where
    F: Fn(usize) -> Option<f64> + Sync + Send,
{
    argmax_indices(n, workers, |i| f(i).map(|v| -v)).map(|(i, v)| (i, -v))
}

#[cfg(feature = "parallel")]
mod parallel {
    use super::Workers;
    use rayon::prelude::*;

    fn with_pool<R: Send>(workers: Workers, job: impl FnOnce() -> R + Send) -> R {
        if workers.0 == 0 {
            return job();
        }
        match rayon::ThreadPoolBuilder::new().num_threads(workers.0).build() {
            Ok(pool) => pool.install(job),
            Err(_) => job(),
        }
    }

    pub(super) fn map_indices<T, F>(n: usize, workers: Workers, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        with_pool(workers, || (0..n).into_par_iter().map(&f).collect())
    }

    pub(super) fn reduce_indices<F, B>(
        n: usize,
        workers: Workers,
        f: F,
        better: B,
    ) -> Option<(usize, f64)>
    where
        F: Fn(usize) -> Option<f64> + Sync + Send,
        B: Fn((usize, f64), (usize, f64)) -> (usize, f64) + Sync + Send,
    {
        with_pool(workers, || {
            (0..n)
                .into_par_iter()
                .filter_map(|i| f(i).filter(|v| !v.is_nan()).map(|v| (i, v)))
                .reduce_with(&better)
        })
    }
}

#[cfg(not(feature = "parallel"))]
mod parallel {
    use super::Workers;

    pub(super) fn map_indices<T, F>(n: usize, _workers: Workers, f: F) -> Vec<T>
    where
        F: Fn(usize) -> T,
    {
        (0..n).map(f).collect()
    }

    pub(super) fn reduce_indices<F, B>(
        n: usize,
        _workers: Workers,
        f: F,
        better: B,
    ) -> Option<(usize, f64)>
    where
        F: Fn(usize) -> Option<f64>,
        B: Fn((usize, f64), (usize, f64)) -> (usize, f64),
    {
        (0..n)
            .filter_map(|i| f(i).filter(|v| !v.is_nan()).map(|v| (i, v)))
            .reduce(better)
    }
}
