use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Frame timing of a dynamic acquisition, in minutes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionTimeline {
    mid_times: Vec<f64>,
    durations: Vec<f64>,
}

impl AcquisitionTimeline {
    pub fn new(mid_times: Vec<f64>, durations: Vec<f64>) -> Result<Self> {
        if mid_times.is_empty() {
            return Err(Error::Domain("timeline needs at least one frame".into()));
        }
        if mid_times.len() != durations.len() {
            return Err(Error::dim(
                "timeline durations",
                mid_times.len(),
                durations.len(),
            ));
        }
        if mid_times.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            return Err(Error::Domain(
                "frame mid-times must be finite and > 0".into(),
            ));
        }
        if mid_times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Domain(
                "frame mid-times must be strictly increasing".into(),
            ));
        }
        if durations.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
            return Err(Error::Domain(
                "frame durations must be finite and > 0".into(),
            ));
        }
        Ok(Self {
            mid_times,
            durations,
        })
    }

    /// Contiguous frames starting at t = 0; mid-times are frame centres.
    pub fn from_durations(durations: Vec<f64>) -> Result<Self> {
        let mut start = 0.0;
        let mid = durations
            .iter()
            .map(|d| {
                let m = start + 0.5 * d;
                start += d;
                m
            })
            .collect();
        Self::new(mid, durations)
    }

    pub fn len(&self) -> usize {
        self.mid_times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mid_times.is_empty()
    }

    pub fn mid_times(&self) -> &[f64] {
        &self.mid_times
    }

    pub fn durations(&self) -> &[f64] {
        &self.durations
    }

    pub fn total_duration(&self) -> f64 {
        self.durations.iter().sum()
    }

    /// Trapezoidal area under a TAC sampled at the frame mid-times.
    pub fn trapezoid_auc(&self, tac: &[f64]) -> f64 {
        debug_assert_eq!(tac.len(), self.len());
        self.mid_times
            .windows(2)
            .zip(tac.windows(2))
            .map(|(t, y)| 0.5 * (t[1] - t[0]) * (y[0] + y[1]))
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_timelines() {
        assert!(AcquisitionTimeline::new(vec![1.0, 1.0], vec![1.0, 1.0]).is_err());
        assert!(AcquisitionTimeline::new(vec![0.0, 1.0], vec![1.0, 1.0]).is_err());
        assert!(AcquisitionTimeline::new(vec![1.0, 2.0], vec![1.0]).is_err());
        assert!(AcquisitionTimeline::new(vec![1.0, 2.0], vec![1.0, -1.0]).is_err());
        assert!(AcquisitionTimeline::new(vec![], vec![]).is_err());
    }

    #[test]
    fn durations_to_mid_times() {
        let tl = AcquisitionTimeline::from_durations(vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(tl.mid_times(), &[0.5, 2.0, 4.5]);
        assert_eq!(tl.total_duration(), 6.0);
    }

    #[test]
    fn constant_tac_auc_is_rectangle() {
        let tl = AcquisitionTimeline::from_durations(vec![1.0, 2.0, 3.0, 5.0]).unwrap();
        let c = 2.5;
        let auc = tl.trapezoid_auc(&[c; 4]);
        let t = tl.mid_times();
        assert!((auc - c * (t[3] - t[0])).abs() < 1e-12);
    }
}
