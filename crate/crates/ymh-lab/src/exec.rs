//! Row-parallel execution over cylinder grids.
//!
//! All field sweeps are data-parallel by t-row with no cross-row writes.
//! With the `parallel` feature (default) they run on rayon; without it, or
//! after [`set_sequential`]`(true)`, they run as plain loops. The bench
//! suite toggles the switch to compare both paths in one process.

use std::sync::atomic::{AtomicBool, Ordering};

static FORCE_SEQUENTIAL: AtomicBool = AtomicBool::new(false);

/// Force the sequential fallback even when the `parallel` feature is on.
pub fn set_sequential(force: bool) {
    FORCE_SEQUENTIAL.store(force, Ordering::Relaxed);
}

/// True when sweeps will actually run on rayon.
pub fn is_parallel() -> bool {
    cfg!(feature = "parallel") && !FORCE_SEQUENTIAL.load(Ordering::Relaxed)
}

/// Apply `f` to each row index and disjoint row-sized chunk of `out`.
///
/// `out.len()` must be divisible by `n_rows`; chunk `i` covers row `i`.
pub fn for_each_row_chunk<F>(n_rows: usize, out: &mut [f64], f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    assert_eq!(out.len() % n_rows.max(1), 0, "output not row-divisible");
    let chunk = out.len() / n_rows.max(1);
    #[cfg(feature = "parallel")]
    if is_parallel() {
        use rayon::prelude::*;
        out.par_chunks_mut(chunk)
            .enumerate()
            .for_each(|(i, row)| f(i, row));
        return;
    }
    for (i, row) in out.chunks_mut(chunk).enumerate() {
        f(i, row);
    }
}

/// Map each row index to a value, collected in row order.
pub fn map_rows<T, F>(n_rows: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if is_parallel() {
        use rayon::prelude::*;
        return (0..n_rows).into_par_iter().map(f).collect();
    }
    (0..n_rows).map(f).collect()
}

/// Map over arbitrary indexed work items, collected in index order.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    map_rows(n, f)
}

/// Deterministic sum of per-row values: rows are evaluated in parallel,
/// the reduction itself is sequential in row order.
pub fn sum_rows<F>(n_rows: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    map_rows(n_rows, f).into_iter().sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_and_sequential_agree() {
        let n = 37;
        let f = |i: usize| (i as f64 + 0.5).sqrt();
        set_sequential(true);
        let seq = sum_rows(n, f);
        set_sequential(false);
        let par = sum_rows(n, f);
        assert_eq!(seq, par);
    }

    #[test]
    fn row_chunks_cover_output() {
        let mut out = vec![0.0; 12];
        for_each_row_chunk(4, &mut out, |i, row| {
            for v in row.iter_mut() {
                *v = i as f64;
            }
        });
        assert_eq!(out[0], 0.0);
        assert_eq!(out[3], 1.0);
        assert_eq!(out[11], 3.0);
    }
}
