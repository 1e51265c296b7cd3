//! Deterministic floating-point reductions.
//!
//! Every reduction in the crate that feeds a report goes through
//! [`pairwise_sum`], so the result only depends on the order of the input
//! slice and never on how work was split across threads.

const BLOCK: usize = 32;

/// Pairwise (cascade) summation.
///
/// Error grows as O(log n) instead of O(n) for naive left-to-right
/// accumulation. Leaves of up to 32 elements are summed sequentially.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= BLOCK {
        return values.iter().fold(0.0, |acc, v| acc + v);
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Pairwise sum of `f(item)` over an iterator, materialising the terms first.
pub fn pairwise_sum_by<I, F>(items: I, f: F) -> f64
where
    I: IntoIterator,
    F: FnMut(I::Item) -> f64,
{
    let terms: Vec<f64> = items.into_iter().map(f).collect();
    pairwise_sum(&terms)
}

/// Population mean and variance (divide by `n`).
pub fn mean_and_population_variance(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = pairwise_sum(values) / n;
    let sq: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    (mean, pairwise_sum(&sq) / n)
}
