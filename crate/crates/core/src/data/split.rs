use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::MultiViewDataset;
use crate::error::{DataError, FamlError, Result};

/// Per-class proportional split. Each class contributes
/// `round(n_k · test_fraction)` test rows, kept within `[1, n_k − 1]`.
pub fn stratified_split(
    ds: &MultiViewDataset,
    test_fraction: f64,
    seed: u64,
) -> Result<(MultiViewDataset, MultiViewDataset)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(FamlError::Argument(format!("test fraction must lie in (0, 1), got {test_fraction}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (class, mut rows) in ds.indices_by_class().into_iter().enumerate() {
        if rows.len() < 2 {
            return Err(DataError::TooFewSamples {
                class,
                count: rows.len(),
                required: 2,
            }
            .into());
        }
        rows.shuffle(&mut rng);
        let n_test = ((rows.len() as f64 * test_fraction).round() as usize).clamp(1, rows.len() - 1);
        test.extend_from_slice(&rows[..n_test]);
        train.extend_from_slice(&rows[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((ds.subset(&train)?, ds.subset(&test)?))
}

/// Outcome of a long-tail subsample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsampleInfo {
    /// Classes from most to least frequent.
    pub class_order: Vec<usize>,
    /// Target count per class index.
    pub target_counts: Vec<usize>,
    /// Realized count per class index (targets clipped to availability).
    pub realized_counts: Vec<usize>,
}

/// Geometric long-tail profile `round(n_max · ρ^(−r/(K−1)))` for ranks
/// `r = 0 … K−1`.
pub fn pareto_target_counts(n_max: usize, num_classes: usize, ratio: f64) -> Vec<usize> {
    let denom = (num_classes.max(2) - 1) as f64;
    (0..num_classes)
        .map(|r| ((n_max as f64) * ratio.powf(-(r as f64) / denom)).round().max(1.0) as usize)
        .collect()
}

/// Draws a long-tailed subset without replacement. Which class receives which
/// rank is a seeded random permutation.
pub fn pareto_subsample(
    train: &MultiViewDataset,
    imbalance_ratio: f64,
    seed: u64,
) -> Result<(MultiViewDataset, SubsampleInfo)> {
    if !(imbalance_ratio >= 1.0 && imbalance_ratio.is_finite()) {
        return Err(FamlError::Argument(format!(
            "imbalance ratio must be at least 1, got {imbalance_ratio}"
        )));
    }
    let k = train.num_classes();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut class_order: Vec<usize> = (0..k).collect();
    class_order.shuffle(&mut rng);
    let by_class = train.indices_by_class();
    let n_max = by_class.iter().map(Vec::len).max().unwrap_or(0);
    let profile = pareto_target_counts(n_max, k, imbalance_ratio);

    let mut target_counts = vec![0; k];
    let mut realized_counts = vec![0; k];
    let mut keep = Vec::new();
    for (rank, &class) in class_order.iter().enumerate() {
        let target = profile[rank];
        target_counts[class] = target;
        let mut rows = by_class[class].clone();
        if rows.len() < target {
            log::warn!(
                "class {class} has {} samples, fewer than its long-tail target {target}; using all of them",
                rows.len()
            );
        }
        rows.shuffle(&mut rng);
        let take = target.min(rows.len());
        realized_counts[class] = take;
        keep.extend_from_slice(&rows[..take]);
    }
    keep.sort_unstable();
    Ok((
        train.subset(&keep)?,
        SubsampleInfo {
            class_order,
            target_counts,
            realized_counts,
        },
    ))
}
