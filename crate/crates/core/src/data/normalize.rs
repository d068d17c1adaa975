use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::MultiViewDataset;
use crate::error::{DataError, FamlError, Result};

/// Per-view z-score statistics. `source_checksum` hashes the sample ids of
/// the rows the statistics were computed from, so a run can prove that no
/// test row contributed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub means: Vec<Vec<f64>>,
    pub stds: Vec<Vec<f64>>,
    pub source_rows: usize,
    pub source_checksum: String,
}

fn ids_checksum(ids: &[usize]) -> String {
    let mut hasher = Sha256::new();
    for id in ids {
        hasher.update((*id as u64).to_le_bytes());
    }
    hex::encode(hasher.finalize())
}

impl Normalizer {
    pub fn fit(train: &MultiViewDataset) -> Result<Self> {
        if train.is_empty() {
            return Err(FamlError::Argument("cannot fit normalization on an empty set".into()));
        }
        let n = train.len() as f64;
        let mut means = Vec::new();
        let mut stds = Vec::new();
        for m in train.views() {
            let mu: Vec<f64> = m.columns().into_iter().map(|c| c.sum() / n).collect();
            let sd: Vec<f64> = m
                .columns()
                .into_iter()
                .zip(&mu)
                .map(|(c, mu)| {
                    let var = c.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / n;
                    let sd = var.sqrt();
                    // Constant columns pass through centred.
                    if sd > 1e-12 { sd } else { 1.0 }
                })
                .collect();
            means.push(mu);
            stds.push(sd);
        }
        Ok(Self {
            means,
            stds,
            source_rows: train.len(),
            source_checksum: ids_checksum(train.sample_ids()),
        })
    }

    pub fn apply(&self, ds: &mut MultiViewDataset) -> Result<()> {
        if ds.num_views() != self.means.len() {
            return Err(FamlError::dim("normalizer views", self.means.len(), ds.num_views()));
        }
        for (v, m) in ds.views_mut().iter_mut().enumerate() {
            if m.ncols() != self.means[v].len() {
                return Err(FamlError::dim("normalizer columns", self.means[v].len(), m.ncols()));
            }
            for mut row in m.rows_mut() {
                for (j, x) in row.iter_mut().enumerate() {
                    *x = (*x - self.means[v][j]) / self.stds[v][j];
                }
            }
        }
        Ok(())
    }

    /// Checks that `train` holds exactly the rows the statistics came from.
    pub fn verify_source(&self, train: &MultiViewDataset) -> Result<()> {
        if train.len() != self.source_rows || ids_checksum(train.sample_ids()) != self.source_checksum {
            return Err(DataError::Malformed(
                "normalization statistics were not computed from this training set".into(),
            )
            .into());
        }
        Ok(())
    }
}
