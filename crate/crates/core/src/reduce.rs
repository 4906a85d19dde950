//! Deterministic parallel reductions.
//!
//! Work is split into fixed-size chunks that do not depend on the number of
//! worker threads; each chunk is reduced sequentially and the chunk results
//! are merged in index order. Results are therefore bit-identical for any
//! thread count.

use rayon::prelude::*;

pub const CHUNK: usize = 4096;

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Sum {
    hi: f64,
    lo: f64,
}

impl Sum {
    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.hi + x;
        if self.hi.abs() >= x.abs() {
            self.lo += (self.hi - t) + x;
        } else {
            self.lo += (x - t) + self.hi;
        }
        self.hi = t;
    }

    #[inline]
    pub fn merge(&mut self, other: &Sum) {
        self.add(other.hi);
        self.add(other.lo);
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.hi + self.lo
    }
}

impl FromIterator<f64> for Sum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = Sum::default();
        for x in iter {
            s.add(x);
        }
        s
    }
}

/// Folds `0..n` in chunks in parallel and merges chunk accumulators in order.
pub fn chunked<T, F, M>(n: usize, init: impl Fn() -> T + Sync, fold: F, merge: M) -> T
where
    T: Send,
    F: Fn(&mut T, usize) + Sync,
    M: Fn(&mut T, T),
{
    let chunks = n.div_ceil(CHUNK);
    let parts: Vec<T> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = init();
            for idx in c * CHUNK..((c + 1) * CHUNK).min(n) {
                fold(&mut acc, idx);
            }
            acc
        })
        .collect();
    let mut total = init();
    for p in parts {
        merge(&mut total, p);
    }
    total
}

/// Compensated sum of `f(0) + ... + f(n-1)`, independent of thread count.
pub fn par_sum(n: usize, f: impl Fn(usize) -> f64 + Sync) -> f64 {
    chunked(n, Sum::default, |s, i| s.add(f(i)), |a, b| a.merge(&b)).value()
}

/// Maximum of `f` over `0..n` (0 for an empty range).
pub fn par_max(n: usize, f: impl Fn(usize) -> f64 + Sync) -> f64 {
    chunked(n, || 0.0f64, |m, i| *m = m.max(f(i)), |a, b| *a = a.max(b))
}
