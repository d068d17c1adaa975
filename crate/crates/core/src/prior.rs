//! Training-trajectory prior: per-class Dirichlet prior weights computed from
//! recorded training predictions, `β_k = γ · N_k / C_k` with `C_k` the number
//! of correctly predicted class-`k` samples (clamped to at least 1).

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{FamlError, Result};
use crate::opinion::{PriorVector, ProbabilityVector};

/// Predicted class per training sample for one epoch.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub epoch: usize,
    pub predicted: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorSchedule {
    pub warmup_epochs: usize,
    pub refresh_interval: usize,
    pub gamma: f64,
}

impl Default for PriorSchedule {
    fn default() -> Self {
        Self {
            warmup_epochs: 20,
            refresh_interval: 5,
            gamma: 1.0,
        }
    }
}

impl PriorSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.refresh_interval == 0 {
            return Err(FamlError::Config("refresh_interval must be at least 1".into()));
        }
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(FamlError::Config(format!("gamma must be finite and positive, got {}", self.gamma)));
        }
        Ok(())
    }

    /// Whether a new prior is computed at the start of `epoch`.
    pub fn is_refresh_epoch(&self, epoch: usize) -> bool {
        epoch >= self.warmup_epochs && (epoch - self.warmup_epochs).is_multiple_of(self.refresh_interval)
    }
}

pub fn compute_prior(
    record: &TrajectoryRecord,
    labels: &[usize],
    class_counts: &[usize],
    gamma: f64,
) -> Result<PriorVector> {
    if record.predicted.len() != labels.len() {
        return Err(FamlError::dim("trajectory record", labels.len(), record.predicted.len()));
    }
    let k = class_counts.len();
    if let Some(c) = class_counts.iter().position(|c| *c == 0) {
        return Err(FamlError::Argument(format!("class {c} has no training samples")));
    }
    let mut correct = vec![0usize; k];
    for (&p, &y) in record.predicted.iter().zip(labels) {
        if y >= k || p >= k {
            return Err(FamlError::Argument(format!(
                "class index out of range for {k} classes (label {y}, prediction {p})"
            )));
        }
        if p == y {
            correct[y] += 1;
        }
    }
    let values = class_counts
        .iter()
        .zip(&correct)
        .map(|(&n, &c)| gamma * (n as f64 / c.max(1) as f64))
        .collect();
    PriorVector::new(values)
}

/// The prior in force at `epoch`: uniform during warm-up or before any prior
/// has been computed, otherwise the most recent computed one.
pub fn active_prior(
    epoch: usize,
    schedule: &PriorSchedule,
    latest_computed: Option<&PriorVector>,
    num_classes: usize,
) -> PriorVector {
    match latest_computed {
        Some(p) if epoch >= schedule.warmup_epochs => p.clone(),
        _ => PriorVector::uniform(num_classes),
    }
}

/// Priors used for each view and for the fused opinion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorSet {
    pub fused: PriorVector,
    pub views: Vec<PriorVector>,
}

impl PriorSet {
    pub fn shared(prior: PriorVector, num_views: usize) -> Self {
        Self {
            views: vec![prior.clone(); num_views],
            fused: prior,
        }
    }

    pub fn uniform(num_classes: usize, num_views: usize) -> Self {
        Self::shared(PriorVector::uniform(num_classes), num_views)
    }

    /// Base rates for projecting the fused opinion: prior-derived unless pinned
    /// to uniform.
    pub fn fused_base_rates(&self, pin_uniform: bool) -> ProbabilityVector {
        if pin_uniform {
            ProbabilityVector::uniform(self.fused.num_classes())
        } else {
            self.fused.base_rates()
        }
    }
}

/// Writes `epoch,sample_index,predicted,label` rows for every record.
pub fn write_trajectory_csv(path: &Path, records: &[TrajectoryRecord], labels: &[usize]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| FamlError::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let io = |e| FamlError::io(path, e);
    writeln!(w, "epoch,sample_index,predicted,label").map_err(io)?;
    for r in records {
        for (i, (p, y)) in r.predicted.iter().zip(labels).enumerate() {
            writeln!(w, "{},{},{},{}", r.epoch, i, p, y).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(predicted: Vec<usize>) -> TrajectoryRecord {
        TrajectoryRecord { epoch: 0, predicted }
    }

    #[test]
    fn perfect_recall_gives_gamma() {
        let labels = vec![0, 0, 1, 2, 2, 2];
        let p = compute_prior(&record(labels.clone()), &labels, &[2, 1, 3], 2.5).unwrap();
        assert_eq!(p.as_slice(), &[2.5, 2.5, 2.5]);
        let p = compute_prior(&record(labels.clone()), &labels, &[2, 1, 3], 1.0).unwrap();
        assert_eq!(p, PriorVector::uniform(3));
    }

    #[test]
    fn half_recall_doubles() {
        let labels = vec![0; 10].into_iter().chain([1]).collect::<Vec<_>>();
        let mut pred = vec![0; 5];
        pred.extend(vec![1; 5]);
        pred.push(1);
        let p = compute_prior(&record(pred), &labels, &[10, 1], 1.0).unwrap();
        assert_eq!(p.as_slice(), &[2.0, 1.0]);
    }

    #[test]
    fn zero_correct_clamps_denominator() {
        let labels = vec![0; 10].into_iter().chain([1]).collect::<Vec<_>>();
        let p = compute_prior(&record(vec![1; 11]), &labels, &[10, 1], 1.0).unwrap();
        assert_eq!(p.as_slice(), &[10.0, 1.0]);
    }

    #[test]
    fn misaligned_record() {
        assert!(compute_prior(&record(vec![0]), &[0, 1], &[1, 1], 1.0).is_err());
        assert!(compute_prior(&record(vec![5, 0]), &[0, 1], &[1, 1], 1.0).is_err());
    }

    #[test]
    fn warmup_and_refresh() {
        let schedule = PriorSchedule::default();
        let computed = PriorVector::new(vec![1.0, 4.0, 2.0]).unwrap();
        assert_eq!(active_prior(5, &schedule, Some(&computed), 3), PriorVector::uniform(3));
        assert_eq!(active_prior(20, &schedule, None, 3), PriorVector::uniform(3));
        assert_eq!(active_prior(22, &schedule, Some(&computed), 3), computed);

        let refreshes: Vec<usize> = (0..40).filter(|e| schedule.is_refresh_epoch(*e)).collect();
        assert_eq!(refreshes, vec![20, 25, 30, 35]);
    }

    #[test]
    fn schedule_validation() {
        assert!(PriorSchedule { refresh_interval: 0, ..Default::default() }.validate().is_err());
        assert!(PriorSchedule { gamma: 0.0, ..Default::default() }.validate().is_err());
        assert!(PriorSchedule::default().validate().is_ok());
    }

    #[test]
    fn trajectory_csv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trajectory.csv");
        write_trajectory_csv(&path, &[TrajectoryRecord { epoch: 3, predicted: vec![1, 0] }], &[1, 1]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "epoch,sample_index,predicted,label\n3,0,1,1\n3,1,0,1\n");
    }
}
