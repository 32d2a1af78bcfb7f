//! Replication plumbing: ordered parallel maps and reductions whose result
//! does not depend on the number of worker threads.

/// Replications per reduction chunk.
pub const CHUNK: usize = 1024;

/// Evaluates `f(0..n)` and returns the results in index order.
#[cfg(feature = "parallel")]
pub fn par_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn par_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}

/// Runs `op` on a dedicated pool with `workers` threads (0 = library default).
#[cfg(feature = "parallel")]
pub fn with_workers<R: Send>(workers: usize, op: impl FnOnce() -> R + Send) -> R {
    if workers == 0 {
        return op();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(op),
        Err(_) => op(),
    }
}

#[cfg(not(feature = "parallel"))]
pub fn with_workers<R: Send>(_workers: usize, op: impl FnOnce() -> R + Send) -> R {
    op()
}

/// Sum over fixed chunks of `CHUNK` values, chunk totals combined pairwise.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    let chunks: Vec<f64> = values.chunks(CHUNK).map(|c| c.iter().sum()).collect();
    tree_sum(&chunks)
}

fn tree_sum(v: &[f64]) -> f64 {
    match v.len() {
        0 => 0.0,
        1 => v[0],
        n => {
            let mid = n / 2;
            tree_sum(&v[..mid]) + tree_sum(&v[mid..])
        }
    }
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    pairwise_sum(values) / values.len() as f64
}

/// Unbiased sample covariance.
pub fn covariance(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len();
    if n < 2 {
        return f64::NAN;
    }
    let (ma, mb) = (mean(a), mean(b));
    let prods: Vec<f64> = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).collect();
    pairwise_sum(&prods) / (n - 1) as f64
}

pub fn variance(a: &[f64]) -> f64 {
    covariance(a, a)
}

/// Mean and its standard error.
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    let m = mean(values);
    if n < 2 {
        return (m, f64::NAN);
    }
    (m, (variance(values) / n as f64).sqrt())
}

/// Sample covariance and a plug-in standard error for it.
pub fn covariance_se(a: &[f64], b: &[f64]) -> (f64, f64) {
    let n = a.len();
    let (ma, mb) = (mean(a), mean(b));
    let prods: Vec<f64> = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).collect();
    let (m, se) = mean_se(&prods);
    (m * n as f64 / (n as f64 - 1.0), se)
}

/// Ordinary least-squares slope of `y` on `x`.
pub fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
    let mx = x.iter().sum::<f64>() / x.len() as f64;
    let my = y.iter().sum::<f64>() / y.len() as f64;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn mean_and_covariance_of_known_data() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [2.0, 4.0, 6.0, 8.0];
        assert_eq!(mean(&a), 2.5);
        assert!((covariance(&a, &b) - 10.0 / 3.0).abs() < 1e-14);
        assert!((ols_slope(&a, &b) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn par_map_keeps_order() {
        let v = par_map(5000, |i| i * 2);
        assert!(v.iter().enumerate().all(|(i, &x)| x == 2 * i));
    }

    #[test]
    fn reduction_ignores_worker_count() {
        let values: Vec<f64> = (0..10_000).map(|i| ((i as f64) * 0.37).sin() * 1e3).collect();
        let one = with_workers(1, || pairwise_sum(&par_map(values.len(), |i| values[i])));
        let three = with_workers(3, || pairwise_sum(&par_map(values.len(), |i| values[i])));
        assert_eq!(one.to_bits(), three.to_bits());
    }

    proptest! {
        #[test]
        fn pairwise_sum_close_to_naive(v in proptest::collection::vec(-1e6f64..1e6, 0..5000)) {
            let naive: f64 = v.iter().sum();
            let scale: f64 = v.iter().map(|x| x.abs()).sum::<f64>().max(1.0);
            prop_assert!((pairwise_sum(&v) - naive).abs() <= 1e-10 * scale);
        }
    }
}
