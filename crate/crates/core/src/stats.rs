//! Monte Carlo summaries.

use serde::{Deserialize, Serialize};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Pairwise (cascade) summation. The result depends only on the order of
/// `values`, never on how the values were produced.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const LEAF: usize = 32;
    if values.len() <= LEAF {
        return values.iter().sum();
    }
    let (a, b) = values.split_at(values.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub half_width_95: f64,
    pub std_error: f64,
    pub n_paths: usize,
    pub step: f64,
    pub horizon: f64,
    /// Bound on the discounted cost discarded beyond `horizon`.
    pub truncation_bound: f64,
}

/// Sample mean and standard error (unbiased variance).
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = pairwise_sum(values) / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let dev: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    let var = pairwise_sum(&dev) / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

impl McEstimate {
    pub fn from_samples(
        values: &[f64],
        step: f64,
        horizon: f64,
        truncation_bound: f64,
    ) -> McEstimate {
        let (mean, se) = mean_and_se(values);
        McEstimate {
            mean,
            half_width_95: Z95 * se,
            std_error: se,
            n_paths: values.len(),
            step,
            horizon,
            truncation_bound,
        }
    }

    pub fn contains(&self, value: f64) -> bool {
        (self.mean - value).abs() <= self.half_width_95
    }
}
