//! Multi-seed experiment grids: the five-row ablation table and the γ sweep.
//! Every run is isolated (own data split, initialization and shuffling, all
//! derived from its seed), so runs execute in parallel and results do not
//! depend on execution order.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{train, write_run_dir, AblationFlags, TrainConfig, ABLATION_ROWS};
use crate::data::{prepare_experiment, MultiViewDataset};
use crate::error::{FamlError, Result};
use crate::metrics::EvalReport;

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    /// `None` when no value is defined.
    pub fn of(values: impl IntoIterator<Item = Option<f64>>) -> Option<Self> {
        let xs: Vec<f64> = values.into_iter().flatten().collect();
        if xs.is_empty() {
            return None;
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        Some(Self { mean, std: var.sqrt() })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub name: String,
    pub flags: AblationFlags,
    pub seeds: Vec<u64>,
    pub reports: Vec<EvalReport>,
}

impl AblationRow {
    pub fn acc_all(&self) -> Option<Stat> {
        Stat::of(self.reports.iter().map(|r| Some(r.acc_all)))
    }

    pub fn acc_tail(&self) -> Option<Stat> {
        Stat::of(self.reports.iter().map(|r| r.acc_tail))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaRow {
    pub gamma: f64,
    pub seeds: Vec<u64>,
    pub reports: Vec<EvalReport>,
}

fn run_one(raw: &MultiViewDataset, cfg: &TrainConfig, out: Option<&Path>) -> Result<EvalReport> {
    let prepared = prepare_experiment(raw, &cfg.protocol(), cfg.seed)?;
    let mut art = train(&prepared.train, &prepared.test, cfg)?;
    art.manifest.data = Some(prepared.manifest);
    if let Some(dir) = out {
        write_run_dir(dir, &art)?;
    }
    Ok(art.evaluation.report)
}

fn run_grid(
    raw: &MultiViewDataset,
    jobs: Vec<(TrainConfig, Option<std::path::PathBuf>)>,
) -> Result<Vec<EvalReport>> {
    jobs.par_iter()
        .map(|(cfg, out)| run_one(raw, cfg, out.as_deref()))
        .collect()
}

/// Runs every ablation row for every seed. With `out`, each run is written to
/// `out/<row>/seed_<s>/`.
pub fn ablation_matrix(
    base: &TrainConfig,
    raw: &MultiViewDataset,
    seeds: &[u64],
    out: Option<&Path>,
) -> Result<Vec<AblationRow>> {
    if seeds.is_empty() {
        return Err(FamlError::Config("ablation needs at least one seed".into()));
    }
    let mut jobs = Vec::new();
    for (name, flags) in ABLATION_ROWS {
        for &seed in seeds {
            let cfg = TrainConfig {
                seed,
                ..base.with_flags(flags)
            };
            jobs.push((cfg, out.map(|d| d.join(name).join(format!("seed_{seed}")))));
        }
    }
    let mut reports = run_grid(raw, jobs)?.into_iter();
    Ok(ABLATION_ROWS
        .iter()
        .map(|(name, flags)| AblationRow {
            name: name.to_string(),
            flags: *flags,
            seeds: seeds.to_vec(),
            reports: reports.by_ref().take(seeds.len()).collect(),
        })
        .collect())
}

/// Full-method runs for every γ and seed, written to
/// `out/gamma_<γ>/seed_<s>/` when `out` is given.
pub fn gamma_sweep(
    base: &TrainConfig,
    raw: &MultiViewDataset,
    gammas: &[f64],
    seeds: &[u64],
    out: Option<&Path>,
) -> Result<Vec<GammaRow>> {
    if seeds.is_empty() || gammas.is_empty() {
        return Err(FamlError::Config("sweep needs at least one γ value and one seed".into()));
    }
    let mut jobs = Vec::new();
    for &gamma in gammas {
        for &seed in seeds {
            let cfg = TrainConfig {
                seed,
                gamma,
                ..base.clone()
            };
            cfg.validate()?;
            jobs.push((cfg, out.map(|d| d.join(format!("gamma_{gamma}")).join(format!("seed_{seed}")))));
        }
    }
    let mut reports = run_grid(raw, jobs)?.into_iter();
    Ok(gammas
        .iter()
        .map(|&gamma| GammaRow {
            gamma,
            seeds: seeds.to_vec(),
            reports: reports.by_ref().take(seeds.len()).collect(),
        })
        .collect())
}

fn fmt_stat(s: Option<Stat>) -> String {
    s.map_or_else(|| ",".to_string(), |s| format!("{:?},{:?}", s.mean, s.std))
}

fn summary_cells(reports: &[EvalReport]) -> String {
    [
        Stat::of(reports.iter().map(|r| Some(r.acc_all))),
        Stat::of(reports.iter().map(|r| r.acc_head)),
        Stat::of(reports.iter().map(|r| r.acc_med)),
        Stat::of(reports.iter().map(|r| r.acc_tail)),
        Stat::of(reports.iter().map(|r| Some(r.ece_all))),
        Stat::of(reports.iter().map(|r| Some(r.evidence_strength_fairness))),
    ]
    .into_iter()
    .map(fmt_stat)
    .collect::<Vec<_>>()
    .join(",")
}

const SUMMARY_HEADER: &str = "acc_all_mean,acc_all_std,acc_head_mean,acc_head_std,acc_med_mean,acc_med_std,\
acc_tail_mean,acc_tail_std,ece_all_mean,ece_all_std,evidence_fd_mean,evidence_fd_std";

fn write_file(path: &Path, header: &str, rows: Vec<String>) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| FamlError::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let io = |e| FamlError::io(path, e);
    writeln!(w, "{header}").map_err(io)?;
    for r in rows {
        writeln!(w, "{r}").map_err(io)?;
    }
    w.flush().map_err(io)
}

/// One summary row per ablation configuration.
pub fn write_ablation_csv(path: &Path, rows: &[AblationRow]) -> Result<()> {
    let lines = rows
        .iter()
        .map(|r| {
            format!(
                "{},{},{},{},{},{}",
                r.name,
                r.flags.adaptive_prior,
                r.flags.fairness,
                r.flags.consistency,
                r.reports.len(),
                summary_cells(&r.reports)
            )
        })
        .collect();
    write_file(
        path,
        &format!("row,adaptive_prior,fairness,consistency,num_seeds,{SUMMARY_HEADER}"),
        lines,
    )
}

/// One row per γ with the per-seed overall accuracies joined by `;`.
pub fn write_gamma_sweep_csv(path: &Path, rows: &[GammaRow]) -> Result<()> {
    let lines = rows
        .iter()
        .map(|r| {
            let per_seed: Vec<String> = r.reports.iter().map(|x| format!("{:?}", x.acc_all)).collect();
            format!(
                "{:?},{},{},{}",
                r.gamma,
                r.reports.len(),
                summary_cells(&r.reports),
                per_seed.join(";")
            )
        })
        .collect();
    write_file(path, &format!("gamma,num_seeds,{SUMMARY_HEADER},acc_all_per_seed"), lines)
}
