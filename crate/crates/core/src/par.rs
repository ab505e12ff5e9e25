//! rayon when the `parallel` feature is on, sequential iterators otherwise.
//!
//! Call sites use `into_par_iter()` / `par_iter()` and only combinators that
//! exist with the same meaning on both `rayon::iter::ParallelIterator` and
//! `std::iter::Iterator` (`map`, `filter`, `collect`). Reductions that need
//! a deterministic tie-break are written out per call site.

#[cfg(feature = "parallel")]
pub use rayon::prelude::*;

#[cfg(not(feature = "parallel"))]
mod sequential {
    pub use std::iter::Iterator as ParallelIterator;

    pub trait IntoParallelIterator {
        type Iter: Iterator<Item = Self::Item>;
        type Item;
        fn into_par_iter(self) -> Self::Iter;
    }

    impl<I: IntoIterator> IntoParallelIterator for I {
        type Iter = I::IntoIter;
        type Item = I::Item;
        fn into_par_iter(self) -> Self::Iter {
            self.into_iter()
        }
    }

    pub trait IntoParallelRefIterator<'a> {
        type Iter: Iterator<Item = Self::Item>;
        type Item: 'a;
        fn par_iter(&'a self) -> Self::Iter;
    }

    impl<'a, T: 'a> IntoParallelRefIterator<'a> for [T] {
        type Iter = std::slice::Iter<'a, T>;
        type Item = &'a T;
        fn par_iter(&'a self) -> Self::Iter {
            self.iter()
        }
    }

    impl<'a, T: 'a> IntoParallelRefIterator<'a> for Vec<T> {
        type Iter = std::slice::Iter<'a, T>;
        type Item = &'a T;
        fn par_iter(&'a self) -> Self::Iter {
            self.iter()
        }
    }
}

#[cfg(not(feature = "parallel"))]
pub use sequential::*;

/// Below this many items the parallel dispatch costs more than it saves.
pub const MIN_PARALLEL_LEN: usize = 2048;

/// Number of worker threads the current pool would use.
pub fn current_threads() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}

/// `(max_i f(i), argmax)` over `0..n`, ties resolved toward the smallest
/// index so the result does not depend on how the range is split.
pub fn argmax<F>(n: usize, f: F) -> Option<(f64, usize)>
where
    F: Fn(usize) -> f64 + Sync,
{
    fn pick(a: (f64, usize), b: (f64, usize)) -> (f64, usize) {
        if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) {
            b
        } else {
            a
        }
    }
    #[cfg(feature = "parallel")]
    if n >= MIN_PARALLEL_LEN && rayon::current_num_threads() > 1 {
        return (0..n).into_par_iter().map(|i| (f(i), i)).reduce_with(pick);
    }
    (0..n).map(|i| (f(i), i)).reduce(pick)
}
