//! Deterministic data-parallel helpers.
//!
//! Sweeps are split into fixed-size chunks; each chunk owns a random stream
//! derived from (base seed, chunk index) alone, and no floating-point
//! reduction crosses a chunk boundary except in a fixed sequential order.
//! Results are therefore bit-identical for any thread count, and identical
//! between the `parallel` build and the sequential fallback.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::Result;

/// Chunk width for data-parallel sweeps. Part of the deterministic stream
/// layout: changing it changes the exact draws produced by a given seed.
pub(crate) const CHUNK: usize = 1024;

pub(crate) fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Random stream for one chunk of a sweep.
pub(crate) fn chunk_rng(base: u64, chunk_idx: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(base ^ splitmix64(chunk_idx as u64 + 1)))
}

/// Fill `out` chunk by chunk, each chunk with its own derived rng.
/// The closure receives the absolute start index of its chunk so it can
/// index companion arrays.
pub(crate) fn chunked_fill<T, F>(out: &mut [T], base: u64, f: F) -> Result<()>
where
    T: Send,
    F: Fn(usize, &mut [T], &mut ChaCha8Rng) -> Result<()> + Sync,
{
    #[cfg(feature = "parallel")]
    {
        out.par_chunks_mut(CHUNK)
            .enumerate()
            .try_for_each(|(c, chunk)| {
                let mut rng = chunk_rng(base, c);
                f(c * CHUNK, chunk, &mut rng)
            })
    }
    #[cfg(not(feature = "parallel"))]
    {
        out.chunks_mut(CHUNK)
            .enumerate()
            .try_for_each(|(c, chunk)| {
                let mut rng = chunk_rng(base, c);
                f(c * CHUNK, chunk, &mut rng)
            })
    }
}

/// Map fixed chunks of `0..n` to partial results, in chunk order.
/// Callers combine the partials sequentially so that floating-point
/// accumulation order is fixed.
pub(crate) fn chunked_map<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize, usize) -> R + Sync,
{
    let ranges: Vec<(usize, usize)> = (0..n)
        .step_by(CHUNK)
        .map(|s| (s, (s + CHUNK).min(n)))
        .collect();
    #[cfg(feature = "parallel")]
    {
        ranges.into_par_iter().map(|(s, e)| f(s, e)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        ranges.into_iter().map(|(s, e)| f(s, e)).collect()
    }
}

/// Run `f` on a rayon pool of `threads` workers (0 = library default).
/// The sequential build ignores the thread count.
pub(crate) fn with_threads<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> Result<R> {
    #[cfg(feature = "parallel")]
    {
        if threads == 0 {
            return Ok(f());
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| crate::Error::InvalidParameter(format!("thread pool: {e}")))?;
        Ok(pool.install(f))
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        Ok(f())
    }
}
