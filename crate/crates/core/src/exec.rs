//! Chunked data-parallel map with a sequential fallback.
//!
//! Work is split into fixed-size chunks of outer indices and results come
//! back in chunk order, so reductions over them are bit-identical whether
//! chunks ran on one thread or many.

use std::ops::Range;

use serde::{Deserialize, Serialize};

/// Outer indices per chunk. Part of the reproducibility contract: changing
/// it changes the floating-point merge order.
pub const CHUNK: u64 = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Execution {
    Sequential,
    /// Uses the rayon pool when the `parallel` feature is enabled,
    /// otherwise behaves like `Sequential`.
    #[default]
    Parallel,
}

impl Execution {
    pub fn is_parallel_available() -> bool {
        cfg!(feature = "parallel")
    }
}

fn chunks(range: Range<u64>, chunk: u64) -> Vec<Range<u64>> {
    let mut out = Vec::new();
    let mut a = range.start;
    while a < range.end {
        let b = (a + chunk).min(range.end);
        out.push(a..b);
        a = b;
    }
    out
}

/// Apply `f` to consecutive chunks of `range`; results are in chunk order.
pub fn map_chunks<T, F>(exec: Execution, range: Range<u64>, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(Range<u64>) -> T + Sync + Send,
{
    let parts = chunks(range, CHUNK);
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            parts.into_par_iter().map(f).collect()
        }
        _ => parts.into_iter().map(f).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunking_covers_range() {
        let c = chunks(3..1500, 512);
        assert_eq!(c, vec![3..515, 515..1027, 1027..1500]);
        assert!(chunks(5..5, 512).is_empty());
    }

    #[test]
    fn results_are_ordered_and_identical() {
        let f = |r: Range<u64>| r.map(|i| (i as f64).sqrt()).sum::<f64>();
        let a = map_chunks(Execution::Sequential, 0..10_000, f);
        let b = map_chunks(Execution::Parallel, 0..10_000, f);
        assert_eq!(a, b);
    }
}
