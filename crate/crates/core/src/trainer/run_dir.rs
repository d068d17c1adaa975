//! Run directory layout:
//!
//! | file | content |
//! |---|---|
//! | `config.toml` | resolved training config |
//! | `manifest.json` | [`RunManifest`]: seeds, config, overrides, data split |
//! | `history.csv` | one row per epoch |
//! | `view_<v>.ckpt` | per-view network checkpoints |
//! | `prior.json` | priors used for evaluation |
//! | `report.json` | [`EvalReport`] of the final model |
//! | `predictions.csv` | fused per-sample test outcomes |
//! | `trajectory.csv` | recorded training predictions (optional) |
//! | `evidence_strength.csv`, `uncertainty_hist.csv` | plot data |

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::{EpochRecord, RunManifest, TrainArtifacts};
use crate::data::RegionPartition;
use crate::error::{FamlError, Result};
use crate::metrics::{
    read_predictions_csv, write_evidence_strength_csv, write_predictions_csv, write_uncertainty_histogram_csv,
    EvalReport, SamplePrediction,
};
use crate::net::EvidentialNet;
use crate::prior::{write_trajectory_csv, PriorSet};

pub const CONFIG_FILE: &str = "config.toml";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const HISTORY_FILE: &str = "history.csv";
pub const PRIOR_FILE: &str = "prior.json";
pub const REPORT_FILE: &str = "report.json";
pub const PREDICTIONS_FILE: &str = "predictions.csv";
pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const EVIDENCE_STRENGTH_FILE: &str = "evidence_strength.csv";
pub const UNCERTAINTY_HIST_FILE: &str = "uncertainty_hist.csv";
pub const UNCERTAINTY_BINS: usize = 20;

pub fn checkpoint_path(dir: &Path, view: usize) -> PathBuf {
    dir.join(format!("view_{view}.ckpt"))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| FamlError::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| FamlError::io(path, e))
}

fn to_json<T: serde::Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value).map_err(|e| FamlError::Numeric(format!("serialization: {e}")))
}

fn from_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_text(path)?).map_err(|e| FamlError::Config(format!("{}: {e}", path.display())))
}

/// Floats are written in shortest round-trip form.
pub fn write_history_csv(path: &Path, history: &[EpochRecord]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| FamlError::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let io = |e| FamlError::io(path, e);
    let nv = history.first().map_or(0, |h| h.ace_per_view.len());
    let k = history.first().map_or(0, |h| h.prior.len());
    let mut header = vec!["epoch", "lambda_t", "beta_con", "total", "ace_fused"]
        .into_iter()
        .map(String::from)
        .collect::<Vec<_>>();
    header.extend((0..nv).map(|v| format!("ace_view_{v}")));
    header.push("fairness_fused".into());
    header.extend((0..nv).map(|v| format!("fairness_view_{v}")));
    header.push("consistency".into());
    header.extend((0..k).map(|c| format!("prior_{c}")));
    header.push("train_acc".into());
    header.push("test_acc".into());
    writeln!(w, "{}", header.join(",")).map_err(io)?;
    for h in history {
        let mut cells = vec![
            h.epoch.to_string(),
            format!("{:?}", h.lambda_t),
            format!("{:?}", h.beta_con),
            format!("{:?}", h.total),
            format!("{:?}", h.ace_fused),
        ];
        cells.extend(h.ace_per_view.iter().map(|x| format!("{x:?}")));
        cells.push(format!("{:?}", h.fairness_fused));
        cells.extend(h.fairness_per_view.iter().map(|x| format!("{x:?}")));
        cells.push(format!("{:?}", h.consistency));
        cells.extend(h.prior.iter().map(|x| format!("{x:?}")));
        cells.push(format!("{:?}", h.train_acc));
        cells.push(h.test_acc.map_or_else(String::new, |x| format!("{x:?}")));
        writeln!(w, "{}", cells.join(",")).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Priors used at evaluation time.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PriorFile {
    pub priors: PriorSet,
    pub pin_base_rates: bool,
}

/// Plot-data CSVs derived from a report and its per-sample predictions.
pub fn write_plot_data(
    dir: &Path,
    report: &EvalReport,
    predictions: &[SamplePrediction],
    partition: Option<&RegionPartition>,
) -> Result<()> {
    write_evidence_strength_csv(&dir.join(EVIDENCE_STRENGTH_FILE), report, partition)?;
    write_uncertainty_histogram_csv(&dir.join(UNCERTAINTY_HIST_FILE), predictions, partition, UNCERTAINTY_BINS)
}

pub fn write_run_dir(dir: &Path, artifacts: &TrainArtifacts) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| FamlError::io(dir, e))?;
    let m = &artifacts.manifest;
    write_text(&dir.join(CONFIG_FILE), &m.config.to_toml()?)?;
    write_text(&dir.join(MANIFEST_FILE), &to_json(m)?)?;
    write_history_csv(&dir.join(HISTORY_FILE), &artifacts.history)?;
    for (v, net) in artifacts.nets.iter().enumerate() {
        net.save(&checkpoint_path(dir, v))?;
    }
    let prior = PriorFile {
        priors: artifacts.priors.clone(),
        pin_base_rates: m.config.pin_base_rates,
    };
    write_text(&dir.join(PRIOR_FILE), &to_json(&prior)?)?;
    write_text(&dir.join(REPORT_FILE), &artifacts.report().to_json()?)?;
    write_predictions_csv(&dir.join(PREDICTIONS_FILE), &artifacts.evaluation.predictions)?;
    if m.config.save_trajectory {
        write_trajectory_csv(&dir.join(TRAJECTORY_FILE), &artifacts.trajectory, &artifacts.train_labels)?;
    }
    write_plot_data(
        dir,
        artifacts.report(),
        &artifacts.evaluation.predictions,
        m.partition.as_ref(),
    )
}

pub fn read_manifest(dir: &Path) -> Result<RunManifest> {
    from_json(&dir.join(MANIFEST_FILE))
}

pub fn read_report(dir: &Path) -> Result<EvalReport> {
    EvalReport::from_json(&read_text(&dir.join(REPORT_FILE))?)
}

pub fn read_prior(dir: &Path) -> Result<PriorFile> {
    from_json(&dir.join(PRIOR_FILE))
}

pub fn read_predictions(dir: &Path) -> Result<Vec<SamplePrediction>> {
    read_predictions_csv(&dir.join(PREDICTIONS_FILE))
}

/// Loads `view_0.ckpt`, `view_1.ckpt`, … until the first missing index.
pub fn load_checkpoints(dir: &Path) -> Result<Vec<EvidentialNet>> {
    let mut nets = Vec::new();
    while checkpoint_path(dir, nets.len()).is_file() {
        nets.push(EvidentialNet::load(&checkpoint_path(dir, nets.len()))?);
    }
    if nets.is_empty() {
        return Err(FamlError::Config(format!(
            "no checkpoints found in {}",
            dir.display()
        )));
    }
    Ok(nets)
}
