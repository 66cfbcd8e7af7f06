//! Summary statistics of replication outcomes.

use serde::{Deserialize, Serialize};

/// Mean, standard error and interquartile range of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub stderr: f64,
    pub p25: f64,
    pub p75: f64,
    pub reps: usize,
}

impl Summary {
    pub fn from_sample(sample: &[f64]) -> Self {
        let n = sample.len();
        assert!(n > 0, "empty sample");
        let mean = sample.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            sample.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        let mut sorted = sample.to_vec();
        sorted.sort_by(f64::total_cmp);
        Self {
            mean,
            stderr: (var / n as f64).sqrt(),
            p25: quantile_sorted(&sorted, 0.25),
            p75: quantile_sorted(&sorted, 0.75),
            reps: n,
        }
    }

    pub fn iqr(&self) -> f64 {
        self.p75 - self.p25
    }
}

/// Linear-interpolation quantile of sorted data (the common "type 7").
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}
