//! Chunked evaluation over point batches.
//!
//! Work is split into fixed-size chunks whose results are returned in chunk
//! order, so any reduction the caller performs is independent of the number
//! of worker threads.

use serde::{Deserialize, Serialize};

/// Points per chunk for batched jet evaluation.
pub const CHUNK: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Execution {
    Sequential,
    /// Uses the rayon pool when the `parallel` feature is enabled, otherwise
    /// identical to `Sequential`.
    #[default]
    Parallel,
}

pub fn chunk_ranges(n: usize, chunk: usize) -> Vec<std::ops::Range<usize>> {
    (0..n.div_ceil(chunk))
        .map(|c| c * chunk..((c + 1) * chunk).min(n))
        .collect()
}

/// `f(0), f(1), …, f(count - 1)` in index order.
pub fn map_indexed<T, F>(exec: Execution, count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            (0..count).into_par_iter().map(f).collect()
        }
        _ => (0..count).map(f).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges_cover_everything_once() {
        let r = chunk_ranges(300, 128);
        assert_eq!(r, vec![0..128, 128..256, 256..300]);
        assert!(chunk_ranges(0, 128).is_empty());
    }

    #[test]
    fn modes_agree() {
        let a = map_indexed(Execution::Sequential, 50, |i| (i as f64).sqrt());
        let b = map_indexed(Execution::Parallel, 50, |i| (i as f64).sqrt());
        assert_eq!(a, b);
    }
}
