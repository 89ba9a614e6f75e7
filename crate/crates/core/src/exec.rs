//! Execution policy for the data-parallel loops.
//!
//! Every reduction splits its input into fixed-size chunks, evaluates the
//! chunks (in parallel when the `parallel` feature is on), and folds the
//! per-chunk partials in chunk order. The floating-point result therefore
//! does not depend on the number of worker threads or on the policy chosen.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Items per work unit in chunked reductions.
pub const CHUNK_LEN: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Execution {
    Sequential,
    /// Uses the rayon global pool. Falls back to sequential evaluation when
    /// the crate is built without the `parallel` feature.
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

impl Execution {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }

    /// Maps each chunk of `items` to a partial result and folds the partials
    /// left to right.
    pub fn chunked_fold<T, P, A, M, C>(self, items: &[T], identity: A, map_chunk: M, combine: C) -> A
    where
        T: Sync,
        P: Send,
        M: Fn(&[T]) -> P + Sync + Send,
        C: Fn(A, P) -> A,
    {
        let partials = self.map_chunks(items, map_chunk);
        partials.into_iter().fold(identity, combine)
    }

    /// Maps each chunk of `items`, returning partials in chunk order.
    pub fn map_chunks<T, A, M>(self, items: &[T], map_chunk: M) -> Vec<A>
    where
        T: Sync,
        A: Send,
        M: Fn(&[T]) -> A + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            return items.par_chunks(CHUNK_LEN).map(map_chunk).collect();
        }
        items.chunks(CHUNK_LEN).map(map_chunk).collect()
    }

    /// Order-preserving map over independent tasks.
    pub fn map<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            return items.par_iter().map(f).collect();
        }
        items.iter().map(f).collect()
    }
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    compensation: f64,
}

impl KahanSum {
    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation += (self.sum - t) + value;
        } else {
            self.compensation += (value - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl std::iter::Sum<f64> for KahanSum {
    fn sum<I: Iterator<Item = f64>>(iter: I) -> Self {
        let mut acc = KahanSum::default();
        for v in iter {
            acc.add(v);
        }
        acc
    }
}
