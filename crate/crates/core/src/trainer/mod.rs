//! The training loop: per-view evidential networks, in-graph fusion, the
//! class-balanced objective, the trajectory prior schedule, evaluation and
//! run artifacts.

mod config;
mod experiments;
pub mod run_dir;

pub use config::{apply_override, AblationFlags, TrainConfig, ABLATION_ROWS};
pub use experiments::{
    ablation_matrix, gamma_sweep, write_ablation_csv, write_gamma_sweep_csv, AblationRow, GammaRow, Stat,
};
pub use run_dir::{
    load_checkpoints, read_manifest, read_predictions, read_prior, read_report, write_plot_data, write_run_dir,
    PriorFile, HISTORY_FILE, MANIFEST_FILE, PREDICTIONS_FILE, REPORT_FILE,
};

use std::collections::HashSet;
use std::path::PathBuf;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{
    load_multiview, prepare_experiment, region_partition, reproduce_experiment, synth_generate,
    DataManifest, MultiViewDataset, PreparedData, RegionPartition, SynthSpec,
};
use crate::error::{DataError, FamlError, Result};
use crate::losses::{batch_loss, class_balance_weights, fuse_row, lambda_schedule, LossBreakdown, LossSettings};
use crate::metrics::{build_report, fused_predictions, EvalReport, SamplePrediction};
use crate::net::{EvidentialNet, NetConfig, OptimizerState};
use crate::opinion::PriorVector;
use crate::prior::{active_prior, compute_prior, PriorSet, TrajectoryRecord};
use crate::seed::derive_seed;

const SHUFFLE_TAG: u64 = 0x5_4FF1E;
const NET_TAG: u64 = 0x4E_E700;

/// Steps of the loop that are inferred rather than given, recorded in every
/// run manifest.
pub const RECONSTRUCTED_STEPS: [&str; 6] = [
    "fusion happens inside the training graph each batch (per-view opinions -> weighted aggregation -> fused loss)",
    "fused-loss gradient treats the fusion confidences as constants unless exact_fusion_grad is set",
    "prior refresh at the start of epoch t uses the predictions recorded during epoch t-1",
    "predictions feeding the prior are the training-time fused argmaxes unless fresh_eval_prior is set",
    "lambda_t ramps linearly from 0 at the first epoch to 1 at the last",
    "fairness terms are weighted by the batch mean class weight",
];

/// Where the raw dataset of a run comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSource {
    Synth(SynthSpec),
    Directory { path: PathBuf, num_classes: Option<usize> },
}

impl DataSource {
    pub fn load(&self) -> Result<MultiViewDataset> {
        match self {
            DataSource::Synth(spec) => synth_generate(spec),
            DataSource::Directory { path, num_classes } => load_multiview(path, *num_classes),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedManifest {
    pub run: u64,
    pub shuffle: u64,
    pub views: Vec<u64>,
}

/// Everything needed to rerun a training job exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub reconstructed: bool,
    pub reconstructed_steps: Vec<String>,
    pub version: String,
    pub config: TrainConfig,
    pub overrides: Vec<String>,
    pub seeds: SeedManifest,
    pub class_weights: Vec<f64>,
    pub partition: Option<RegionPartition>,
    pub source: Option<DataSource>,
    pub data: Option<DataManifest>,
}

/// One row of `history.csv`. Loss terms are sample-weighted means over the
/// epoch's batches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lambda_t: f64,
    pub beta_con: f64,
    pub total: f64,
    pub ace_fused: f64,
    pub ace_per_view: Vec<f64>,
    pub fairness_fused: f64,
    pub fairness_per_view: Vec<f64>,
    pub consistency: f64,
    /// Fused prior active during the epoch.
    pub prior: Vec<f64>,
    pub train_acc: f64,
    pub test_acc: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub report: EvalReport,
    pub predictions: Vec<SamplePrediction>,
}

#[derive(Debug, Clone)]
pub struct TrainArtifacts {
    pub nets: Vec<EvidentialNet>,
    /// Priors active in the final epoch, used for evaluation.
    pub priors: PriorSet,
    pub history: Vec<EpochRecord>,
    pub evaluation: Evaluation,
    pub trajectory: Vec<TrajectoryRecord>,
    pub train_labels: Vec<usize>,
    pub manifest: RunManifest,
}

impl TrainArtifacts {
    pub fn report(&self) -> &EvalReport {
        &self.evaluation.report
    }
}

fn check_compatible(train: &MultiViewDataset, test: &MultiViewDataset) -> Result<()> {
    if train.num_classes() < 2 {
        return Err(FamlError::Config(format!(
            "training needs at least 2 classes, got {}",
            train.num_classes()
        )));
    }
    if test.num_views() != train.num_views() {
        return Err(FamlError::dim("test views", train.num_views(), test.num_views()));
    }
    if test.num_classes() != train.num_classes() {
        return Err(FamlError::dim("test classes", train.num_classes(), test.num_classes()));
    }
    for (a, b) in train.view_dims().iter().zip(test.view_dims()) {
        if *a != b {
            return Err(FamlError::dim("test view width", *a, b));
        }
    }
    let test_ids: HashSet<usize> = test.sample_ids().iter().copied().collect();
    if let Some(id) = train.sample_ids().iter().find(|id| test_ids.contains(id)) {
        return Err(DataError::Malformed(format!("sample {id} is in both the training and the test set")).into());
    }
    Ok(())
}

/// Confidence-weighted fusion of a batch of per-view evidence.
pub fn fuse_batch(views: &[ArrayView2<f64>], priors: &PriorSet) -> Result<Array2<f64>> {
    let first = views
        .first()
        .ok_or_else(|| FamlError::Argument("fusion needs at least one view".into()))?;
    let (rows, k) = first.dim();
    if priors.views.len() != views.len() {
        return Err(FamlError::dim("view priors", views.len(), priors.views.len()));
    }
    for v in views {
        if v.dim() != (rows, k) {
            return Err(FamlError::dim("view evidence rows", rows, v.nrows()));
        }
    }
    let mut out = Array2::zeros((rows, k));
    let mut row = vec![0.0; k];
    for n in 0..rows {
        fuse_row(views, n, priors, &mut row);
        out.row_mut(n).iter_mut().zip(&row).for_each(|(o, x)| *o = *x);
    }
    Ok(out)
}

/// Argmax of the projected probability `(e_k + a_k W) / S` for each row.
fn projected_argmax(evidence: ArrayView2<f64>, prior: &PriorVector, pin_base_rates: bool) -> Vec<usize> {
    let w = prior.weight_total();
    let k = prior.num_classes();
    let rates: Vec<f64> = if pin_base_rates {
        vec![1.0 / k as f64; k]
    } else {
        prior.base_rates().into_vec()
    };
    evidence
        .rows()
        .into_iter()
        .map(|r| {
            r.iter()
                .zip(&rates)
                .map(|(e, a)| e + a * w)
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (c, p)| if p > best.1 { (c, p) } else { best })
                .0
        })
        .collect()
}

/// Forward-only evaluation of the fused model on `test`.
pub fn evaluate(
    nets: &[EvidentialNet],
    priors: &PriorSet,
    pin_base_rates: bool,
    test: &MultiViewDataset,
    partition: Option<&RegionPartition>,
) -> Result<Evaluation> {
    if nets.len() != test.num_views() {
        return Err(FamlError::dim("checkpoints", test.num_views(), nets.len()));
    }
    for (net, d) in nets.iter().zip(test.view_dims()) {
        if net.config().input_dim != d {
            return Err(FamlError::dim("checkpoint input width", d, net.config().input_dim));
        }
        if net.config().num_classes != test.num_classes() {
            return Err(FamlError::dim("checkpoint classes", test.num_classes(), net.config().num_classes));
        }
    }
    if priors.fused.num_classes() != test.num_classes() {
        return Err(FamlError::dim("prior classes", test.num_classes(), priors.fused.num_classes()));
    }
    let evidence: Vec<Array2<f64>> = nets
        .par_iter()
        .zip(test.views().par_iter())
        .map(|(net, x)| net.predict_batch(x.view()))
        .collect::<Result<_>>()?;
    let views: Vec<ArrayView2<f64>> = evidence.iter().map(|e| e.view()).collect();
    let fused = fuse_batch(&views, priors)?;
    let rates = priors.fused_base_rates(pin_base_rates);
    let predictions = fused_predictions(fused.view(), &priors.fused, &rates, test.labels(), test.sample_ids())?;
    let report = build_report(&views, fused.view(), &predictions, partition)?;
    Ok(Evaluation { report, predictions })
}

fn check_terms(b: &LossBreakdown, epoch: usize, batch: usize) -> Result<()> {
    let mut terms = vec![
        ("total".to_string(), b.total),
        ("ace_fused".to_string(), b.ace_fused),
        ("fairness_fused".to_string(), b.fairness_fused),
        ("consistency".to_string(), b.consistency),
    ];
    for (v, x) in b.ace_per_view.iter().enumerate() {
        terms.push((format!("ace_view_{v}"), *x));
    }
    for (v, x) in b.fairness_per_view.iter().enumerate() {
        terms.push((format!("fairness_view_{v}"), *x));
    }
    // Report the first offending component rather than the total.
    terms.rotate_left(1);
    match terms.into_iter().find(|(_, x)| !x.is_finite()) {
        Some((term, value)) => Err(FamlError::NumericAbort {
            epoch,
            batch,
            term,
            value,
        }),
        None => Ok(()),
    }
}

#[derive(Default)]
struct EpochSums {
    total: f64,
    ace_fused: f64,
    ace_per_view: Vec<f64>,
    fairness_fused: f64,
    fairness_per_view: Vec<f64>,
    consistency: f64,
}

impl EpochSums {
    fn add(&mut self, b: &LossBreakdown, weight: f64) {
        if self.ace_per_view.is_empty() {
            self.ace_per_view = vec![0.0; b.ace_per_view.len()];
            self.fairness_per_view = vec![0.0; b.fairness_per_view.len()];
        }
        self.total += weight * b.total;
        self.ace_fused += weight * b.ace_fused;
        self.fairness_fused += weight * b.fairness_fused;
        self.consistency += weight * b.consistency;
        for (s, x) in self.ace_per_view.iter_mut().zip(&b.ace_per_view) {
            *s += weight * x;
        }
        for (s, x) in self.fairness_per_view.iter_mut().zip(&b.fairness_per_view) {
            *s += weight * x;
        }
    }
}

fn current_priors(
    cfg: &TrainConfig,
    epoch: usize,
    k: usize,
    num_views: usize,
    fused: Option<&PriorVector>,
    per_view: Option<&Vec<PriorVector>>,
) -> PriorSet {
    if !cfg.adaptive_prior {
        return PriorSet::uniform(k, num_views);
    }
    let schedule = cfg.schedule();
    let fused_prior = active_prior(epoch, &schedule, fused, k);
    match per_view {
        Some(pv) if cfg.per_view_prior => PriorSet {
            views: pv.iter().map(|p| active_prior(epoch, &schedule, Some(p), k)).collect(),
            fused: fused_prior,
        },
        _ => PriorSet::shared(fused_prior, num_views),
    }
}

/// Trains one network per view on `train` and evaluates the fused model on
/// `test`. The region partition comes from the training class counts.
pub fn train(train: &MultiViewDataset, test: &MultiViewDataset, cfg: &TrainConfig) -> Result<TrainArtifacts> {
    cfg.validate()?;
    check_compatible(train, test)?;
    let k = train.num_classes();
    let nv = train.num_views();
    let n = train.len();
    let partition = if k >= 3 {
        Some(region_partition(train.class_counts())?)
    } else {
        None
    };
    let class_weights = if cfg.class_balanced {
        class_balance_weights(train.class_counts())?
    } else {
        if let Some(c) = train.class_counts().iter().position(|c| *c == 0) {
            return Err(FamlError::Argument(format!("class {c} has no training samples")));
        }
        vec![1.0; k]
    };
    let view_seeds: Vec<u64> = (0..nv as u64).map(|v| derive_seed(cfg.seed, NET_TAG + v)).collect();
    let shuffle_seed = derive_seed(cfg.seed, SHUFFLE_TAG);
    let mut nets = train
        .view_dims()
        .iter()
        .zip(&view_seeds)
        .map(|(&d, &seed)| {
            let mut nc = NetConfig::with_default_hidden(d, k, seed);
            if let Some(h) = &cfg.hidden_dims {
                nc.hidden_dims = h.clone();
            }
            nc.activation = cfg.activation;
            EvidentialNet::init(nc)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut opts: Vec<OptimizerState> = nets
        .iter()
        .map(|net| OptimizerState::new(cfg.optimizer(), net.num_parameters()))
        .collect();

    let labels = train.labels();
    let test_ids: HashSet<usize> = test.sample_ids().iter().copied().collect();
    let schedule = cfg.schedule();
    let mut rng = ChaCha8Rng::seed_from_u64(shuffle_seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut latest_fused: Option<PriorVector> = None;
    let mut latest_views: Option<Vec<PriorVector>> = None;
    let mut trajectory: Vec<TrajectoryRecord> = Vec::with_capacity(cfg.epochs);
    let mut last_view_records: Option<Vec<TrajectoryRecord>> = None;
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut priors = PriorSet::uniform(k, nv);

    for epoch in 0..cfg.epochs {
        if cfg.adaptive_prior && schedule.is_refresh_epoch(epoch) {
            if let Some(rec) = trajectory.last() {
                latest_fused = Some(compute_prior(rec, labels, train.class_counts(), cfg.gamma)?);
                if let Some(recs) = &last_view_records {
                    latest_views = Some(
                        recs.iter()
                            .map(|r| compute_prior(r, labels, train.class_counts(), cfg.gamma))
                            .collect::<Result<_>>()?,
                    );
                }
            }
        }
        priors = current_priors(cfg, epoch, k, nv, latest_fused.as_ref(), latest_views.as_ref());
        let settings = LossSettings {
            lambda: if cfg.fairness {
                lambda_schedule(epoch, cfg.epochs - 1)
            } else {
                0.0
            },
            beta_con: if cfg.consistency { cfg.beta_con } else { 0.0 },
            exact_fusion_grad: cfg.exact_fusion_grad,
        };

        order.shuffle(&mut rng);
        let mut predicted = vec![0usize; n];
        let mut view_predicted = vec![vec![0usize; n]; if cfg.per_view_prior { nv } else { 0 }];
        let mut sums = EpochSums::default();
        for (batch, idx) in order.chunks(cfg.batch_size).enumerate() {
            if let Some(id) = idx.iter().map(|&i| train.sample_ids()[i]).find(|id| test_ids.contains(id)) {
                return Err(DataError::Malformed(format!("test sample {id} reached a training batch")).into());
            }
            let xs: Vec<Array2<f64>> = train.views().iter().map(|m| m.select(Axis(0), idx)).collect();
            let batch_labels: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
            let evidence: Vec<Array2<f64>> = nets
                .par_iter_mut()
                .zip(xs.par_iter())
                .map(|(net, x)| net.forward_batch(x.view()))
                .collect::<Result<_>>()?;
            let views: Vec<ArrayView2<f64>> = evidence.iter().map(|e| e.view()).collect();
            let loss = batch_loss(&views, &batch_labels, &priors, &class_weights, settings)?;
            check_terms(&loss.breakdown, epoch, batch)?;
            sums.add(&loss.breakdown, idx.len() as f64 / n as f64);

            for (&i, p) in idx
                .iter()
                .zip(projected_argmax(loss.fused_evidence.view(), &priors.fused, cfg.pin_base_rates))
            {
                predicted[i] = p;
            }
            for (v, preds) in view_predicted.iter_mut().enumerate() {
                for (&i, p) in idx
                    .iter()
                    .zip(projected_argmax(views[v], &priors.views[v], cfg.pin_base_rates))
                {
                    preds[i] = p;
                }
            }

            nets.par_iter_mut()
                .zip(opts.par_iter_mut())
                .zip(loss.view_grads.par_iter())
                .try_for_each(|((net, opt), g)| -> Result<()> {
                    let grads = net.backward(g.view())?.flatten();
                    if let Some(x) = grads.iter().find(|x| !x.is_finite()) {
                        return Err(FamlError::NumericAbort {
                            epoch,
                            batch,
                            term: "parameter gradient".into(),
                            value: *x,
                        });
                    }
                    let mut params = net.parameters();
                    opt.step(&mut params, &grads)?;
                    net.set_parameters(&params)
                })?;
        }

        if cfg.fresh_eval_prior {
            let evidence: Vec<Array2<f64>> = nets
                .par_iter()
                .zip(train.views().par_iter())
                .map(|(net, x)| net.predict_batch(x.view()))
                .collect::<Result<_>>()?;
            let views: Vec<ArrayView2<f64>> = evidence.iter().map(|e| e.view()).collect();
            let fused = fuse_batch(&views, &priors)?;
            predicted = projected_argmax(fused.view(), &priors.fused, cfg.pin_base_rates);
            for (v, preds) in view_predicted.iter_mut().enumerate() {
                *preds = projected_argmax(views[v], &priors.views[v], cfg.pin_base_rates);
            }
        }

        let train_acc = predicted.iter().zip(labels).filter(|(p, y)| p == y).count() as f64 / n as f64;
        let is_last = epoch + 1 == cfg.epochs;
        let test_acc = if is_last || (cfg.eval_every > 0 && (epoch + 1) % cfg.eval_every == 0) {
            let acc = evaluate(&nets, &priors, cfg.pin_base_rates, test, partition.as_ref())?
                .report
                .acc_all;
            log::info!("epoch {epoch}: loss {:.5}, train acc {train_acc:.4}, test acc {acc:.4}", sums.total);
            Some(acc)
        } else {
            None
        };
        history.push(EpochRecord {
            epoch,
            lambda_t: settings.lambda,
            beta_con: settings.beta_con,
            total: sums.total,
            ace_fused: sums.ace_fused,
            ace_per_view: sums.ace_per_view,
            fairness_fused: sums.fairness_fused,
            fairness_per_view: sums.fairness_per_view,
            consistency: sums.consistency,
            prior: priors.fused.as_slice().to_vec(),
            train_acc,
            test_acc,
        });
        if cfg.per_view_prior {
            last_view_records = Some(
                view_predicted
                    .into_iter()
                    .map(|predicted| TrajectoryRecord { epoch, predicted })
                    .collect(),
            );
        }
        trajectory.push(TrajectoryRecord { epoch, predicted });
    }

    let evaluation = evaluate(&nets, &priors, cfg.pin_base_rates, test, partition.as_ref())?;
    let manifest = RunManifest {
        reconstructed: true,
        reconstructed_steps: RECONSTRUCTED_STEPS.iter().map(|s| s.to_string()).collect(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.clone(),
        overrides: Vec::new(),
        seeds: SeedManifest {
            run: cfg.seed,
            shuffle: shuffle_seed,
            views: view_seeds,
        },
        class_weights,
        partition,
        source: None,
        data: None,
    };
    Ok(TrainArtifacts {
        nets,
        priors,
        history,
        evaluation,
        trajectory,
        train_labels: labels.to_vec(),
        manifest,
    })
}

/// Loads the raw data, prepares the imbalanced split with `cfg.seed`, trains,
/// and records the data provenance in the manifest.
pub fn run_experiment(
    source: &DataSource,
    cfg: &TrainConfig,
    overrides: &[String],
) -> Result<(PreparedData, TrainArtifacts)> {
    cfg.validate()?;
    let raw = source.load()?;
    let prepared = prepare_experiment(&raw, &cfg.protocol(), cfg.seed)?;
    let mut artifacts = train(&prepared.train, &prepared.test, cfg)?;
    artifacts.manifest.source = Some(source.clone());
    artifacts.manifest.data = Some(prepared.manifest.clone());
    artifacts.manifest.overrides = overrides.to_vec();
    Ok((prepared, artifacts))
}

/// Rebuilds the data split recorded in a manifest (no resampling).
pub fn prepared_from_manifest(manifest: &RunManifest) -> Result<PreparedData> {
    let source = manifest
        .source
        .as_ref()
        .ok_or_else(|| FamlError::Config("manifest has no data source".into()))?;
    let data = manifest
        .data
        .as_ref()
        .ok_or_else(|| FamlError::Config("manifest has no data split".into()))?;
    reproduce_experiment(&source.load()?, data)
}

/// Reruns the job described by a manifest.
pub fn rerun_manifest(manifest: &RunManifest) -> Result<(PreparedData, TrainArtifacts)> {
    let prepared = prepared_from_manifest(manifest)?;
    let mut artifacts = train(&prepared.train, &prepared.test, &manifest.config)?;
    artifacts.manifest.source = manifest.source.clone();
    artifacts.manifest.data = manifest.data.clone();
    artifacts.manifest.overrides = manifest.overrides.clone();
    Ok((prepared, artifacts))
}
