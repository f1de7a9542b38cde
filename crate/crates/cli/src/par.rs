//! Tile-level parallelism with results kept in input order.

use anyhow::{Context, Result};
use rayon::prelude::*;

/// Runs `f` over `items` on a pool of `jobs` threads (0 = all cores) and
/// returns the results in input order. The first error in input order wins.
pub fn map_ordered<I, O, F>(jobs: usize, items: &[I], f: F) -> Result<Vec<O>>
where
    I: Sync,
    O: Send,
    F: Fn(usize, &I) -> Result<O> + Sync,
{
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build().context("cannot start worker pool")?;
    let results: Vec<Result<O>> = pool.install(|| items.par_iter().enumerate().map(|(i, x)| f(i, x)).collect());
    results.into_iter().collect()
}
