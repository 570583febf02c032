//! Chunk scheduling for the Monte Carlo paths.
//!
//! Work is split into fixed-size chunks of trials, each chunk is mapped
//! to an accumulator (in parallel when the `parallel` feature is on and
//! the caller asks for it), and the accumulators are folded **in chunk
//! order**. Because chunk boundaries depend only on the trial count and
//! every trial seeds its own generator, the fold input is identical
//! whatever the thread count — parallel and sequential runs produce
//! bit-identical results.

/// Trials per scheduling chunk. Fixed so that chunk boundaries — and
/// therefore accumulation order — never depend on the thread count.
pub(crate) const TRIAL_CHUNK: usize = 32;

/// Maps `f` over `0..chunks`, preserving order in the output.
#[cfg(feature = "parallel")]
pub(crate) fn map_chunks<T, F>(chunks: usize, parallel: bool, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    if parallel {
        (0..chunks).into_par_iter().map(f).collect()
    } else {
        (0..chunks).map(f).collect()
    }
}

/// Maps `f` over `0..chunks`, preserving order in the output.
#[cfg(not(feature = "parallel"))]
pub(crate) fn map_chunks<T, F>(chunks: usize, _parallel: bool, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..chunks).map(f).collect()
}

/// The trial indices belonging to chunk `c` out of `total` trials.
pub(crate) fn chunk_range(c: usize, total: usize) -> std::ops::Range<usize> {
    let start = c * TRIAL_CHUNK;
    let end = ((c + 1) * TRIAL_CHUNK).min(total);
    start..end
}

/// Number of chunks needed for `total` trials.
pub(crate) fn chunk_count(total: usize) -> usize {
    total.div_ceil(TRIAL_CHUNK)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunks_cover_all_trials_exactly_once() {
        for total in [0, 1, 31, 32, 33, 100] {
            let mut seen = Vec::new();
            for c in 0..chunk_count(total) {
                seen.extend(chunk_range(c, total));
            }
            assert_eq!(seen, (0..total).collect::<Vec<_>>(), "total = {total}");
        }
    }

    #[test]
    fn map_preserves_order() {
        let out = map_chunks(10, true, |c| c * c);
        assert_eq!(out, (0..10).map(|c| c * c).collect::<Vec<_>>());
    }
}
