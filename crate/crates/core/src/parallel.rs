//! Replication-parallel helpers with a fixed reduction order.
//!
//! Work items are mapped on the current rayon pool and collected in index
//! order; every reduction afterwards runs sequentially over that vector, so
//! results do not depend on the number of worker threads.

use rayon::prelude::*;

/// `f(0), ..., f(n-1)` evaluated in parallel, returned in index order.
pub fn map_indexed<T, F>(n: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

/// Sum and sum of squares of `f(i)` over `0..n`, accumulated in blocks of
/// `block` items whose partial sums are combined in block order.
pub fn sum_moments<F>(n: u64, block: u64, f: F) -> (f64, f64)
where
    F: Fn(u64) -> f64 + Sync + Send,
{
    let block = block.max(1);
    let blocks = n.div_ceil(block);
    let parts = map_indexed(blocks, |b| {
        let start = b * block;
        let end = (start + block).min(n);
        let mut s = 0.0;
        let mut s2 = 0.0;
        for i in start..end {
            let v = f(i);
            s += v;
            s2 += v * v;
        }
        (s, s2)
    });
    parts
        .into_iter()
        .fold((0.0, 0.0), |(a, b), (s, s2)| (a + s, b + s2))
}

/// Mean and standard error from a sum and a sum of squares over `n` items.
pub fn mean_se(sum: f64, sum_sq: f64, n: u64) -> (f64, f64) {
    let nf = n as f64;
    let mean = sum / nf;
    if n < 2 {
        return (mean, f64::NAN);
    }
    let var = ((sum_sq - nf * mean * mean) / (nf - 1.0)).max(0.0);
    (mean, (var / nf).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn results_do_not_depend_on_the_pool_size() {
        let f = |i: u64| ((i as f64) * 0.37).sin() * 1e-3 + (i % 7) as f64;
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| sum_moments(100_003, 1000, f));
        let b = four.install(|| sum_moments(100_003, 1000, f));
        assert_eq!(a.0.to_bits(), b.0.to_bits());
        assert_eq!(a.1.to_bits(), b.1.to_bits());
        let v = four.install(|| map_indexed(10, |i| i * i));
        assert_eq!(v, (0..10).map(|i| i * i).collect::<Vec<_>>());
    }

    #[test]
    fn mean_and_standard_error() {
        let (m, se) = mean_se(6.0, 14.0, 3);
        assert_eq!(m, 2.0);
        assert!((se - (1.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }
}
