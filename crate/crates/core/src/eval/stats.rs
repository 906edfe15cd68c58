use serde::{Deserialize, Serialize};

/// Summary of measured runs. Recomputable from `samples_ns`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub mean_ns: f64,
    pub median_ns: f64,
    /// Population standard deviation.
    pub stddev_ns: f64,
    pub samples_ns: Vec<f64>,
}

impl LatencyStats {
    /// `None` for an empty sample set.
    pub fn from_samples(samples_ns: Vec<f64>) -> Option<Self> {
        if samples_ns.is_empty() {
            return None;
        }
        let n = samples_ns.len() as f64;
        let mean = samples_ns.iter().sum::<f64>() / n;
        let var = samples_ns.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        let mut sorted = samples_ns.clone();
        sorted.sort_by(f64::total_cmp);
        let mid = sorted.len() / 2;
        let median = if sorted.len().is_multiple_of(2) {
            (sorted[mid - 1] + sorted[mid]) / 2.0
        } else {
            sorted[mid]
        };
        Some(LatencyStats {
            mean_ns: mean,
            median_ns: median,
            stddev_ns: var.sqrt(),
            samples_ns,
        })
    }

    pub fn recompute(&self) -> Option<Self> {
        Self::from_samples(self.samples_ns.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_samples() {
        let s = LatencyStats::from_samples(vec![1000.0; 50]).unwrap();
        assert_eq!((s.mean_ns, s.median_ns, s.stddev_ns), (1000.0, 1000.0, 0.0));
    }

    #[test]
    fn one_to_fifty() {
        let s = LatencyStats::from_samples((1..=50).map(f64::from).collect()).unwrap();
        assert_eq!(s.mean_ns, 25.5);
        assert_eq!(s.median_ns, 25.5);
        // population variance of 1..n is (n^2 - 1) / 12
        assert!((s.stddev_ns - (2499.0f64 / 12.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn empty_is_none() {
        assert!(LatencyStats::from_samples(vec![]).is_none());
    }
}
