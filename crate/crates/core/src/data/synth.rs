use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::MultiViewDataset;
use crate::error::{FamlError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub num_classes: usize,
    pub num_views: usize,
    pub dims: Vec<usize>,
    pub samples_per_class: usize,
    /// Distance of each class centre from the origin.
    pub separation: f64,
    pub seed: u64,
}

/// Unit-variance isotropic Gaussian clusters: for each view and class the
/// centre is a random direction scaled by `separation`. Rows are grouped by
/// class.
pub fn synth_generate(spec: &SynthSpec) -> Result<MultiViewDataset> {
    if spec.num_views == 0 || spec.samples_per_class == 0 || spec.num_classes < 2 {
        return Err(FamlError::Argument(
            "synthetic data needs ≥1 view, ≥2 classes and ≥1 sample per class".into(),
        ));
    }
    if spec.dims.len() != spec.num_views || spec.dims.contains(&0) {
        return Err(FamlError::Argument(format!(
            "need one positive dimension per view, got {:?} for {} views",
            spec.dims, spec.num_views
        )));
    }
    if !(spec.separation >= 0.0 && spec.separation.is_finite()) {
        return Err(FamlError::Argument("separation must be finite and non-negative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.num_classes * spec.samples_per_class;
    let mut views = Vec::with_capacity(spec.num_views);
    for &d in &spec.dims {
        let centres: Vec<Vec<f64>> = (0..spec.num_classes)
            .map(|_| {
                let dir: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
                let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
                dir.into_iter().map(|x| x / norm * spec.separation).collect()
            })
            .collect();
        let mut m = Array2::zeros((n, d));
        for i in 0..n {
            let class = i / spec.samples_per_class;
            for j in 0..d {
                let noise: f64 = StandardNormal.sample(&mut rng);
                m[[i, j]] = centres[class][j] + noise;
            }
        }
        views.push(m);
    }
    let labels = (0..n).map(|i| i / spec.samples_per_class).collect();
    MultiViewDataset::new(views, labels, spec.num_classes)
}
