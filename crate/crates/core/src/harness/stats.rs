use serde::{Deserialize, Serialize};

use crate::sim::SimTime;

/// Summary of a latency sample set, in milliseconds. `std` is the
/// population standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub count: usize,
    pub mean_ms: f64,
    pub std_ms: f64,
    pub min_ms: f64,
    pub max_ms: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples_us: Option<Vec<u64>>,
}

impl LatencyStats {
    /// `None` for an empty sample set.
    pub fn from_samples(samples: &[SimTime], keep_samples: bool) -> Option<Self> {
        if samples.is_empty() {
            return None;
        }
        let ms: Vec<f64> = samples.iter().map(|s| s.as_ms_f64()).collect();
        let n = ms.len() as f64;
        let mean = ms.iter().sum::<f64>() / n;
        let var = ms.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        Some(Self {
            count: ms.len(),
            mean_ms: mean,
            std_ms: var.sqrt(),
            min_ms: ms.iter().copied().fold(f64::INFINITY, f64::min),
            max_ms: ms.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            samples_us: keep_samples.then(|| samples.iter().map(|s| s.as_us()).collect()),
        })
    }
}
