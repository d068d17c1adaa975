//! Multi-view datasets: ingestion, splitting, long-tail subsampling,
//! head/medium/tail partitioning and synthetic generation.

mod io;
mod normalize;
mod split;
mod synth;

pub use io::{load_multiview, save_multiview, LABELS_FILE};
pub use normalize::Normalizer;
pub use split::{pareto_subsample, pareto_target_counts, stratified_split, SubsampleInfo};
pub use synth::{synth_generate, SynthSpec};

use std::collections::BTreeSet;
use std::path::Path;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{DataError, FamlError, Result};
use crate::seed::derive_seed;

/// Row-aligned feature matrices plus labels. `sample_ids` tracks each row's
/// index in the originally loaded dataset so splits can be audited.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiViewDataset {
    views: Vec<Array2<f64>>,
    labels: Vec<usize>,
    num_classes: usize,
    class_counts: Vec<usize>,
    sample_ids: Vec<usize>,
}

impl MultiViewDataset {
    pub fn new(views: Vec<Array2<f64>>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        let ids = (0..labels.len()).collect();
        Self::with_ids(views, labels, num_classes, ids)
    }

    pub fn with_ids(
        views: Vec<Array2<f64>>,
        labels: Vec<usize>,
        num_classes: usize,
        sample_ids: Vec<usize>,
    ) -> Result<Self> {
        if views.is_empty() {
            return Err(DataError::Malformed("dataset has no views".into()).into());
        }
        if num_classes < 2 {
            return Err(DataError::Malformed(format!("need at least 2 classes, got {num_classes}")).into());
        }
        let n = labels.len();
        for (v, m) in views.iter().enumerate() {
            if m.nrows() != n {
                return Err(DataError::Malformed(format!(
                    "view {v} has {} rows but there are {n} labels",
                    m.nrows()
                ))
                .into());
            }
        }
        if sample_ids.len() != n {
            return Err(FamlError::dim("sample ids", n, sample_ids.len()));
        }
        let mut class_counts = vec![0; num_classes];
        for &y in &labels {
            if y >= num_classes {
                return Err(DataError::Malformed(format!("label {y} out of range for {num_classes} classes")).into());
            }
            class_counts[y] += 1;
        }
        Ok(Self {
            views,
            labels,
            num_classes,
            class_counts,
            sample_ids,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_views(&self) -> usize {
        self.views.len()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn view_dims(&self) -> Vec<usize> {
        self.views.iter().map(|m| m.ncols()).collect()
    }

    pub fn views(&self) -> &[Array2<f64>] {
        &self.views
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_counts(&self) -> &[usize] {
        &self.class_counts
    }

    pub fn sample_ids(&self) -> &[usize] {
        &self.sample_ids
    }

    /// Rows at `indices` (positions in this dataset), in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        if let Some(i) = indices.iter().find(|i| **i >= self.len()) {
            return Err(FamlError::Argument(format!("row {i} out of range for {} rows", self.len())));
        }
        let views = self.views.iter().map(|m| m.select(Axis(0), indices)).collect();
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        let ids = indices.iter().map(|&i| self.sample_ids[i]).collect();
        Self::with_ids(views, labels, self.num_classes, ids)
    }

    /// Positions grouped by class, in row order.
    pub fn indices_by_class(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_classes];
        for (i, &y) in self.labels.iter().enumerate() {
            out[y].push(i);
        }
        out
    }

    pub(crate) fn views_mut(&mut self) -> &mut [Array2<f64>] {
        &mut self.views
    }
}

/// Head, medium and tail class sets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionPartition {
    pub head: BTreeSet<usize>,
    pub medium: BTreeSet<usize>,
    pub tail: BTreeSet<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Head,
    Medium,
    Tail,
}

impl RegionPartition {
    pub fn region_of(&self, class: usize) -> Option<Region> {
        if self.head.contains(&class) {
            Some(Region::Head)
        } else if self.medium.contains(&class) {
            Some(Region::Medium)
        } else if self.tail.contains(&class) {
            Some(Region::Tail)
        } else {
            None
        }
    }
}

/// Splits classes into thirds by descending count (ties by ascending index);
/// remainders go to the head first, then the medium region.
pub fn region_partition(class_counts: &[usize]) -> Result<RegionPartition> {
    let k = class_counts.len();
    if k < 3 {
        return Err(FamlError::Argument(format!(
            "region partition needs at least 3 classes, got {k}"
        )));
    }
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| class_counts[b].cmp(&class_counts[a]).then(a.cmp(&b)));
    let base = k / 3;
    let rem = k % 3;
    let head_len = base + usize::from(rem > 0);
    let med_len = base + usize::from(rem > 1);
    Ok(RegionPartition {
        head: order[..head_len].iter().copied().collect(),
        medium: order[head_len..head_len + med_len].iter().copied().collect(),
        tail: order[head_len + med_len..].iter().copied().collect(),
    })
}

/// How a raw dataset becomes an imbalanced training set and a balanced test set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExperimentProtocol {
    pub test_fraction: f64,
    pub imbalance_ratio: f64,
    pub normalize: bool,
}

impl Default for ExperimentProtocol {
    fn default() -> Self {
        Self {
            test_fraction: 0.2,
            imbalance_ratio: 10.0,
            normalize: true,
        }
    }
}

/// Everything needed to reproduce a prepared split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataManifest {
    pub seed: u64,
    pub test_fraction: f64,
    pub imbalance_ratio: f64,
    /// Original row indices, in training-set order.
    pub train_ids: Vec<usize>,
    pub test_ids: Vec<usize>,
    pub class_order: Vec<usize>,
    pub target_counts: Vec<usize>,
    pub train_class_counts: Vec<usize>,
    pub regions: Option<RegionPartition>,
    pub normalizer: Option<Normalizer>,
}

impl DataManifest {
    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| FamlError::Numeric(format!("manifest serialization: {e}")))?;
        std::fs::write(path, text).map_err(|e| FamlError::io(path, e))
    }
}

#[derive(Debug, Clone)]
pub struct PreparedData {
    pub train: MultiViewDataset,
    pub test: MultiViewDataset,
    pub partition: Option<RegionPartition>,
    pub manifest: DataManifest,
}

/// Stratified split, Pareto subsampling of the training part, region
/// partition by training counts, and z-scoring fitted on the training rows.
pub fn prepare_experiment(
    raw: &MultiViewDataset,
    protocol: &ExperimentProtocol,
    seed: u64,
) -> Result<PreparedData> {
    let (train_full, mut test) = stratified_split(raw, protocol.test_fraction, derive_seed(seed, 0x5011))?;
    let (mut train, info) = pareto_subsample(&train_full, protocol.imbalance_ratio, derive_seed(seed, 0xBA7E))?;
    let partition = if raw.num_classes() >= 3 {
        Some(region_partition(train.class_counts())?)
    } else {
        None
    };
    let normalizer = if protocol.normalize {
        let n = Normalizer::fit(&train)?;
        n.apply(&mut train)?;
        n.apply(&mut test)?;
        Some(n)
    } else {
        None
    };
    let manifest = DataManifest {
        seed,
        test_fraction: protocol.test_fraction,
        imbalance_ratio: protocol.imbalance_ratio,
        train_ids: train.sample_ids().to_vec(),
        test_ids: test.sample_ids().to_vec(),
        class_order: info.class_order,
        target_counts: info.target_counts,
        train_class_counts: train.class_counts().to_vec(),
        regions: partition.clone(),
        normalizer,
    };
    Ok(PreparedData {
        train,
        test,
        partition,
        manifest,
    })
}

/// Rebuilds a prepared split from a manifest without re-running any sampling.
pub fn reproduce_experiment(raw: &MultiViewDataset, manifest: &DataManifest) -> Result<PreparedData> {
    let position: std::collections::HashMap<usize, usize> =
        raw.sample_ids().iter().enumerate().map(|(i, id)| (*id, i)).collect();
    let lookup = |ids: &[usize]| -> Result<Vec<usize>> {
        ids.iter()
            .map(|id| {
                position
                    .get(id)
                    .copied()
                    .ok_or_else(|| DataError::Malformed(format!("manifest references unknown sample {id}")).into())
            })
            .collect()
    };
    let mut train = raw.subset(&lookup(&manifest.train_ids)?)?;
    let mut test = raw.subset(&lookup(&manifest.test_ids)?)?;
    if let Some(n) = &manifest.normalizer {
        n.verify_source(&train)?;
        n.apply(&mut train)?;
        n.apply(&mut test)?;
    }
    Ok(PreparedData {
        train,
        test,
        partition: manifest.regions.clone(),
        manifest: manifest.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thirds() {
        let counts: Vec<usize> = (0..9).map(|i| 100 - i * 10).collect();
        let p = region_partition(&counts).unwrap();
        assert_eq!(p.head, [0, 1, 2].into());
        assert_eq!(p.medium, [3, 4, 5].into());
        assert_eq!(p.tail, [6, 7, 8].into());
    }

    #[test]
    fn remainder_goes_to_head() {
        let counts: Vec<usize> = (0..10).map(|i| 10 + i).collect();
        let p = region_partition(&counts).unwrap();
        assert_eq!((p.head.len(), p.medium.len(), p.tail.len()), (4, 3, 3));
        assert_eq!(p.head, [9, 8, 7, 6].into());
        let p = region_partition(&[1; 11]).unwrap();
        assert_eq!((p.head.len(), p.medium.len(), p.tail.len()), (4, 4, 3));
    }

    #[test]
    fn equal_counts_break_ties_by_index() {
        let p = region_partition(&[5; 6]).unwrap();
        assert_eq!(p.head, [0, 1].into());
        assert_eq!(p.medium, [2, 3].into());
        assert_eq!(p.tail, [4, 5].into());
        assert_eq!(p.region_of(3), Some(Region::Medium));
        assert_eq!(p.region_of(9), None);
    }

    #[test]
    fn partition_needs_three_classes() {
        assert!(region_partition(&[4, 2]).is_err());
    }

    #[test]
    fn prepared_split_is_disjoint_and_reproducible() {
        let raw = synth_generate(&SynthSpec {
            num_classes: 3,
            num_views: 2,
            dims: vec![3, 4],
            samples_per_class: 50,
            separation: 2.0,
            seed: 4,
        })
        .unwrap();
        let prepared = prepare_experiment(&raw, &ExperimentProtocol::default(), 9).unwrap();
        let train: BTreeSet<_> = prepared.train.sample_ids().iter().collect();
        assert!(prepared.test.sample_ids().iter().all(|id| !train.contains(id)));
        assert_eq!(prepared.test.class_counts(), &[10, 10, 10]);
        let again = reproduce_experiment(&raw, &prepared.manifest).unwrap();
        assert_eq!(again.train, prepared.train);
        assert_eq!(again.test, prepared.test);
    }
}
