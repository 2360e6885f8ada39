//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (default) the index loops fan out over rayon;
//! without it the same loops run sequentially. Reductions are arranged so the
//! result is bitwise identical either way: sums are accumulated over
//! fixed-size index chunks and folded in chunk order, never in thread
//! completion order.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

const SUM_CHUNK: usize = 4096;

/// Maps `f` over `0..n` preserving index order.
pub fn map_indices<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Deterministic sum of `f(i)` for `i in 0..n`: chunk-local sums folded in
/// fixed chunk order.
pub fn deterministic_sum(n: usize, f: impl Fn(usize) -> f64 + Sync + Send) -> f64 {
    let chunks = n.div_ceil(SUM_CHUNK);
    let partial = |c: usize| {
        let lo = c * SUM_CHUNK;
        let hi = ((c + 1) * SUM_CHUNK).min(n);
        let mut s = 0.0;
        for i in lo..hi {
            s += f(i);
        }
        s
    };
    #[cfg(feature = "parallel")]
    let parts: Vec<f64> = (0..chunks).into_par_iter().map(partial).collect();
    #[cfg(not(feature = "parallel"))]
    let parts: Vec<f64> = (0..chunks).map(partial).collect();
    parts.into_iter().sum()
}

/// Max of `f(i)`; max is order-independent so a plain parallel reduce is fine.
pub fn max_over(n: usize, f: impl Fn(usize) -> f64 + Sync + Send) -> f64 {
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).reduce(|| f64::NEG_INFINITY, f64::max)
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).fold(f64::NEG_INFINITY, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_sum_matches_sequential() {
        let n = 100_000;
        let f = |i: usize| ((i as f64) * 0.37).sin() / (1.0 + i as f64);
        let par = deterministic_sum(n, f);
        let mut seq = 0.0;
        let mut c = 0;
        while c * SUM_CHUNK < n {
            let mut s = 0.0;
            for i in c * SUM_CHUNK..((c + 1) * SUM_CHUNK).min(n) {
                s += f(i);
            }
            seq += s;
            c += 1;
        }
        assert_eq!(par, seq);
    }

    #[test]
    fn max_over_small() {
        assert_eq!(max_over(5, |i| -(i as f64)), 0.0);
    }
}
