//! Small reference datasets.

use statrs::distribution::{ContinuousCDF, Normal};

/// `{−5, −4, 4, 5}`: two tight, well-separated pairs.
pub fn d1() -> Vec<f64> {
    vec![-5.0, -4.0, 4.0, 5.0]
}

/// `{0, 1, 9, 11}`: counts from two well-separated rates.
pub fn poisson_counts() -> Vec<u64> {
    vec![0, 1, 9, 11]
}

/// Two symmetric clusters of `m` points each at `±c`, placed at the normal
/// quantiles `±c + s·Φ⁻¹((j − ½)/m)`, `j = 1 … m`.
pub fn quantile_pair(c: f64, s: f64, m: usize) -> Vec<f64> {
    let z = Normal::standard();
    let q: Vec<f64> = (1..=m).map(|j| z.inverse_cdf((j as f64 - 0.5) / m as f64)).collect();
    q.iter().map(|x| -c + s * x).chain(q.iter().map(|x| c + s * x)).collect()
}

/// Means `±4.5`, small overlap: EM converges fast.
pub fn separated() -> Vec<f64> {
    quantile_pair(4.5, 1.7, 20)
}

/// Means `±0.5`, heavy overlap: EM converges slowly.
pub fn overlapping() -> Vec<f64> {
    quantile_pair(0.5, 0.3, 40)
}

/// Means `±1`, moderate overlap.
pub fn poorly_separated() -> Vec<f64> {
    quantile_pair(1.0, 0.5, 20)
}
