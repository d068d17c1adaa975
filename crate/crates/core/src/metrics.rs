//! Accuracy by region, expected calibration error, per-class evidence
//! strength and fairness diagnostics, plus plot-data CSV writers.

use std::io::Write;
use std::path::Path;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::data::{Region, RegionPartition};
use crate::error::{FamlError, Result};
use crate::opinion::{class_fairness_degree, EvidenceVector, PriorVector, ProbabilityVector};

pub const DEFAULT_ECE_BINS: usize = 15;

/// Overall and per-region accuracy. A region with no test samples (or no
/// partition at all) is `None`, never 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionAccuracy {
    pub all: f64,
    pub head: Option<f64>,
    pub medium: Option<f64>,
    pub tail: Option<f64>,
}

fn check_aligned(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(FamlError::dim(what, expected, got));
    }
    if expected == 0 {
        return Err(FamlError::Argument(format!("{what}: empty input")));
    }
    Ok(())
}

fn region_mask(labels: &[usize], partition: Option<&RegionPartition>, region: Region) -> Vec<bool> {
    labels
        .iter()
        .map(|&y| partition.and_then(|p| p.region_of(y)) == Some(region))
        .collect()
}

fn masked_accuracy(predictions: &[usize], labels: &[usize], mask: &[bool]) -> Option<f64> {
    let mut n = 0usize;
    let mut correct = 0usize;
    for ((p, y), m) in predictions.iter().zip(labels).zip(mask) {
        if *m {
            n += 1;
            correct += usize::from(p == y);
        }
    }
    (n > 0).then(|| correct as f64 / n as f64)
}

pub fn accuracy(
    predictions: &[usize],
    labels: &[usize],
    partition: Option<&RegionPartition>,
) -> Result<RegionAccuracy> {
    check_aligned("predictions", labels.len(), predictions.len())?;
    let all = vec![true; labels.len()];
    let acc = |r| masked_accuracy(predictions, labels, &region_mask(labels, partition, r));
    Ok(RegionAccuracy {
        all: masked_accuracy(predictions, labels, &all).unwrap_or(0.0),
        head: acc(Region::Head),
        medium: acc(Region::Medium),
        tail: acc(Region::Tail),
    })
}

/// Bin of a confidence under equal-width binning of `[0, 1]`: a value on an
/// interior edge belongs to the lower bin, 0 to the first and 1 to the last.
fn bin_index(confidence: f64, num_bins: usize) -> usize {
    (0..num_bins)
        .find(|&b| confidence <= (b + 1) as f64 / num_bins as f64)
        .unwrap_or(num_bins - 1)
}

/// `Σ_b (n_b / N) · |acc_b − conf_b|` over `num_bins` equal-width bins.
pub fn ece(confidences: &[f64], correct: &[bool], num_bins: usize) -> Result<f64> {
    check_aligned("correctness flags", confidences.len(), correct.len())?;
    if num_bins == 0 {
        return Err(FamlError::Argument("ECE needs at least one bin".into()));
    }
    if let Some(c) = confidences.iter().find(|c| !(0.0..=1.0).contains(*c)) {
        return Err(FamlError::Argument(format!("confidence {c} outside [0, 1]")));
    }
    let mut count = vec![0usize; num_bins];
    let mut conf_sum = vec![0.0; num_bins];
    let mut hits = vec![0usize; num_bins];
    for (&c, &ok) in confidences.iter().zip(correct) {
        let b = bin_index(c, num_bins);
        count[b] += 1;
        conf_sum[b] += c;
        hits[b] += usize::from(ok);
    }
    let n = confidences.len() as f64;
    Ok((0..num_bins)
        .filter(|&b| count[b] > 0)
        .map(|b| {
            let nb = count[b] as f64;
            (nb / n) * (hits[b] as f64 / nb - conf_sum[b] / nb).abs()
        })
        .sum())
}

fn masked_ece(confidences: &[f64], correct: &[bool], mask: &[bool]) -> Result<Option<f64>> {
    let conf: Vec<f64> = confidences.iter().zip(mask).filter(|(_, m)| **m).map(|(c, _)| *c).collect();
    if conf.is_empty() {
        return Ok(None);
    }
    let ok: Vec<bool> = correct.iter().zip(mask).filter(|(_, m)| **m).map(|(c, _)| *c).collect();
    ece(&conf, &ok, DEFAULT_ECE_BINS).map(Some)
}

/// Mean total evidence `Σ_k e_k` per true class. Classes absent from
/// `labels` are `None`.
pub fn evidence_strength_report(
    evidence: &[EvidenceVector],
    labels: &[usize],
    num_classes: usize,
) -> Result<Vec<Option<f64>>> {
    check_aligned("labels", evidence.len(), labels.len())?;
    let totals: Vec<f64> = evidence.iter().map(EvidenceVector::total).collect();
    grouped_mean(&totals, labels, num_classes)
}

fn grouped_mean(values: &[f64], labels: &[usize], num_classes: usize) -> Result<Vec<Option<f64>>> {
    let mut sums = vec![0.0; num_classes];
    let mut counts = vec![0usize; num_classes];
    for (&x, &y) in values.iter().zip(labels) {
        if y >= num_classes {
            return Err(FamlError::Argument(format!(
                "label {y} out of range for {num_classes} classes"
            )));
        }
        sums[y] += x;
        counts[y] += 1;
    }
    Ok(sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| (c > 0).then(|| s / c as f64))
        .collect())
}

/// Population variance of the defined entries; 0 when fewer than two exist.
pub fn variance_of_present(values: &[Option<f64>]) -> f64 {
    let present: Vec<f64> = values.iter().flatten().copied().collect();
    if present.len() < 2 {
        return 0.0;
    }
    let n = present.len() as f64;
    let mean = present.iter().sum::<f64>() / n;
    present.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n
}

/// One test sample's fused outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePrediction {
    pub sample_id: usize,
    pub label: usize,
    pub predicted: usize,
    pub confidence: f64,
    pub uncertainty: f64,
    pub evidence_total: f64,
}

/// Evaluation summary, serialized as `report.json`.
///
/// Keys: `num_samples`; `acc_all`, `acc_head`, `acc_med`, `acc_tail`;
/// `ece_all`, `ece_head`, `ece_med`, `ece_tail`; `region_counts` (test samples
/// in head/med/tail); `fairness_degree_per_view` and `fused_fairness_degree`
/// (variance across classes of the mean true-class evidence);
/// `mean_evidence_per_class` and `mean_uncertainty_per_class` (fused, grouped
/// by true class); `evidence_strength_fairness` (variance of
/// `mean_evidence_per_class`). Region values are `null` when the region holds
/// no samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub num_samples: usize,
    pub acc_all: f64,
    pub acc_head: Option<f64>,
    pub acc_med: Option<f64>,
    pub acc_tail: Option<f64>,
    pub ece_all: f64,
    pub ece_head: Option<f64>,
    pub ece_med: Option<f64>,
    pub ece_tail: Option<f64>,
    pub region_counts: [usize; 3],
    pub fairness_degree_per_view: Vec<f64>,
    pub fused_fairness_degree: f64,
    pub mean_evidence_per_class: Vec<Option<f64>>,
    pub mean_uncertainty_per_class: Vec<Option<f64>>,
    pub evidence_strength_fairness: f64,
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| FamlError::Numeric(format!("report serialization: {e}")))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| FamlError::Config(format!("unreadable report: {e}")))
    }
}

/// Fused per-sample outcomes from per-view and fused evidence. `confidence`
/// is the largest projected probability under `base_rates`.
pub fn fused_predictions(
    fused: ArrayView2<f64>,
    fused_prior: &PriorVector,
    base_rates: &ProbabilityVector,
    labels: &[usize],
    sample_ids: &[usize],
) -> Result<Vec<SamplePrediction>> {
    let (n, k) = fused.dim();
    check_aligned("labels", n, labels.len())?;
    check_aligned("sample ids", n, sample_ids.len())?;
    if fused_prior.num_classes() != k || base_rates.as_slice().len() != k {
        return Err(FamlError::dim("prior classes", k, fused_prior.num_classes()));
    }
    let w = fused_prior.weight_total();
    let rates = base_rates.as_slice();
    Ok((0..n)
        .map(|i| {
            let row = fused.row(i);
            let total: f64 = row.sum();
            let s = total + w;
            let u = w / s;
            let (predicted, confidence) = row
                .iter()
                .zip(rates)
                .map(|(e, a)| e / s + a * u)
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (c, p)| if p > best.1 { (c, p) } else { best });
            SamplePrediction {
                sample_id: sample_ids[i],
                label: labels[i],
                predicted,
                confidence: confidence.clamp(0.0, 1.0),
                uncertainty: u,
                evidence_total: total,
            }
        })
        .collect())
}

fn rows_as_evidence(m: ArrayView2<f64>) -> Result<Vec<EvidenceVector>> {
    m.rows().into_iter().map(|r| EvidenceVector::new(r.to_vec())).collect()
}

/// Assembles the full report from per-view evidence, fused evidence and the
/// fused per-sample outcomes.
pub fn build_report(
    view_evidence: &[ArrayView2<f64>],
    fused: ArrayView2<f64>,
    predictions: &[SamplePrediction],
    partition: Option<&RegionPartition>,
) -> Result<EvalReport> {
    let (n, k) = fused.dim();
    check_aligned("predictions", n, predictions.len())?;
    let labels: Vec<usize> = predictions.iter().map(|p| p.label).collect();
    let predicted: Vec<usize> = predictions.iter().map(|p| p.predicted).collect();
    let conf: Vec<f64> = predictions.iter().map(|p| p.confidence).collect();
    let correct: Vec<bool> = predictions.iter().map(|p| p.predicted == p.label).collect();

    let acc = accuracy(&predicted, &labels, partition)?;
    let masks = [Region::Head, Region::Medium, Region::Tail].map(|r| region_mask(&labels, partition, r));
    let region_counts = [0, 1, 2].map(|i| masks[i].iter().filter(|m| **m).count());

    let mut fairness_degree_per_view = Vec::with_capacity(view_evidence.len());
    for v in view_evidence {
        if v.dim() != (n, k) {
            return Err(FamlError::dim("view evidence rows", n, v.nrows()));
        }
        fairness_degree_per_view.push(class_fairness_degree(&rows_as_evidence(*v)?, &labels)?.0);
    }
    let fused_rows = rows_as_evidence(fused)?;
    let fused_fairness_degree = class_fairness_degree(&fused_rows, &labels)?.0;
    let mean_evidence_per_class = evidence_strength_report(&fused_rows, &labels, k)?;
    let uncertainties: Vec<f64> = predictions.iter().map(|p| p.uncertainty).collect();
    let mean_uncertainty_per_class = grouped_mean(&uncertainties, &labels, k)?;

    Ok(EvalReport {
        num_samples: n,
        acc_all: acc.all,
        acc_head: acc.head,
        acc_med: acc.medium,
        acc_tail: acc.tail,
        ece_all: ece(&conf, &correct, DEFAULT_ECE_BINS)?,
        ece_head: masked_ece(&conf, &correct, &masks[0])?,
        ece_med: masked_ece(&conf, &correct, &masks[1])?,
        ece_tail: masked_ece(&conf, &correct, &masks[2])?,
        region_counts,
        fairness_degree_per_view,
        fused_fairness_degree,
        evidence_strength_fairness: variance_of_present(&mean_evidence_per_class),
        mean_evidence_per_class,
        mean_uncertainty_per_class,
    })
}

fn region_name(partition: Option<&RegionPartition>, class: usize) -> &'static str {
    match partition.and_then(|p| p.region_of(class)) {
        Some(Region::Head) => "head",
        Some(Region::Medium) => "med",
        Some(Region::Tail) => "tail",
        None => "none",
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(String::new, |v| format!("{v:?}"))
}

fn write_lines(path: &Path, header: &str, rows: impl IntoIterator<Item = String>) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| FamlError::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let io = |e| FamlError::io(path, e);
    writeln!(w, "{header}").map_err(io)?;
    for row in rows {
        writeln!(w, "{row}").map_err(io)?;
    }
    w.flush().map_err(io)
}

/// `class,region,mean_evidence,mean_uncertainty`.
pub fn write_evidence_strength_csv(
    path: &Path,
    report: &EvalReport,
    partition: Option<&RegionPartition>,
) -> Result<()> {
    let rows = report
        .mean_evidence_per_class
        .iter()
        .zip(&report.mean_uncertainty_per_class)
        .enumerate()
        .map(|(c, (e, u))| format!("{c},{},{},{}", region_name(partition, c), fmt_opt(*e), fmt_opt(*u)));
    write_lines(path, "class,region,mean_evidence,mean_uncertainty", rows)
}

/// Histogram of fused uncertainty per region over `num_bins` equal-width bins:
/// `region,bin_lo,bin_hi,count`. Region `all` covers every sample.
pub fn write_uncertainty_histogram_csv(
    path: &Path,
    predictions: &[SamplePrediction],
    partition: Option<&RegionPartition>,
    num_bins: usize,
) -> Result<()> {
    if num_bins == 0 {
        return Err(FamlError::Argument("histogram needs at least one bin".into()));
    }
    let mut rows = Vec::new();
    for region in ["all", "head", "med", "tail"] {
        let mut counts = vec![0usize; num_bins];
        for p in predictions {
            if region == "all" || region_name(partition, p.label) == region {
                counts[bin_index(p.uncertainty.clamp(0.0, 1.0), num_bins)] += 1;
            }
        }
        for (b, c) in counts.iter().enumerate() {
            let lo = b as f64 / num_bins as f64;
            let hi = (b + 1) as f64 / num_bins as f64;
            rows.push(format!("{region},{lo:?},{hi:?},{c}"));
        }
    }
    write_lines(path, "region,bin_lo,bin_hi,count", rows)
}

/// `sample_id,label,predicted,confidence,uncertainty,evidence_total`.
pub fn write_predictions_csv(path: &Path, predictions: &[SamplePrediction]) -> Result<()> {
    let rows = predictions.iter().map(|p| {
        format!(
            "{},{},{},{:?},{:?},{:?}",
            p.sample_id, p.label, p.predicted, p.confidence, p.uncertainty, p.evidence_total
        )
    });
    write_lines(path, "sample_id,label,predicted,confidence,uncertainty,evidence_total", rows)
}

pub fn read_predictions_csv(path: &Path) -> Result<Vec<SamplePrediction>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => FamlError::io(path, io),
        other => FamlError::Config(format!("{}: {other:?}", path.display())),
    })?;
    reader
        .deserialize()
        .map(|r| r.map_err(|e| FamlError::Config(format!("{}: {e}", path.display()))))
        .collect()
}
