//! Command-line interface. `run` dispatches a parsed invocation and maps every
//! failure to an exit code and one diagnostic line on stderr.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::data::{save_multiview, SynthSpec};
use crate::error::FamlError;
use crate::metrics::EvalReport;
use crate::trainer::{
    ablation_matrix, evaluate, gamma_sweep, load_checkpoints, prepared_from_manifest, read_manifest,
    read_predictions, read_prior, read_report, rerun_manifest, run_dir, run_experiment, write_ablation_csv,
    write_gamma_sweep_csv, write_plot_data, write_run_dir, DataSource, TrainConfig,
};

/// Environment variable naming the default output root.
pub const OUTPUT_ROOT_ENV: &str = "FAML_OUTPUT_ROOT";

pub mod exit {
    pub const OK: i32 = 0;
    pub const FAILURE: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const DATA: i32 = 3;
    pub const NUMERIC: i32 = 4;
}

/// Exit code for an error.
pub fn exit_code(err: &FamlError) -> i32 {
    match err {
        FamlError::Config(_) | FamlError::Argument(_) => exit::CONFIG,
        FamlError::Data(_) | FamlError::Dimension { .. } => exit::DATA,
        FamlError::NumericAbort { .. } | FamlError::Numeric(_) | FamlError::Domain { .. } => exit::NUMERIC,
        FamlError::Io { .. } | FamlError::State(_) => exit::FAILURE,
    }
}

#[derive(Debug, Parser)]
#[command(name = "faml", version, about = "Fairness-aware multi-view evidential learning")]
pub struct Cli {
    /// Log progress (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct ConfigArgs {
    /// TOML config file.
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// Override a config key, `key=value`; may repeat. Applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Args, Clone)]
pub struct SynthArgs {
    /// Number of classes.
    #[arg(long = "k", default_value_t = 3)]
    pub num_classes: usize,

    /// Number of views.
    #[arg(long, default_value_t = 2)]
    pub views: usize,

    /// Feature width per view, comma separated (one value is repeated).
    #[arg(long, value_delimiter = ',', default_value = "8")]
    pub dims: Vec<usize>,

    #[arg(long, default_value_t = 200)]
    pub samples_per_class: usize,

    /// Distance of each class centre from the origin.
    #[arg(long, default_value_t = 1.5)]
    pub separation: f64,

    #[arg(long = "seed", default_value_t = 0)]
    pub seed: u64,
}

impl SynthArgs {
    fn spec(&self) -> Result<SynthSpec, FamlError> {
        let dims = match self.dims.as_slice() {
            [d] => vec![*d; self.views],
            ds if ds.len() == self.views => ds.to_vec(),
            ds => {
                return Err(FamlError::Config(format!(
                    "--dims has {} values for {} views",
                    ds.len(),
                    self.views
                )))
            }
        };
        Ok(SynthSpec {
            num_classes: self.num_classes,
            num_views: self.views,
            dims,
            samples_per_class: self.samples_per_class,
            separation: self.separation,
            seed: self.seed,
        })
    }
}

#[derive(Debug, Args, Clone)]
pub struct DataArgs {
    /// Dataset directory (`view_<v>.csv`, `labels.csv`). Without it a
    /// synthetic dataset is generated from the `--synth-*` flags.
    #[arg(long)]
    pub data: Option<PathBuf>,

    /// Number of classes in `--data` (default: max label + 1).
    #[arg(long)]
    pub num_classes: Option<usize>,

    #[arg(long = "synth-k", default_value_t = 3)]
    pub synth_k: usize,
    #[arg(long = "synth-views", default_value_t = 2)]
    pub synth_views: usize,
    #[arg(long = "synth-dims", value_delimiter = ',', default_value = "8")]
    pub synth_dims: Vec<usize>,
    #[arg(long = "synth-samples-per-class", default_value_t = 200)]
    pub synth_samples_per_class: usize,
    #[arg(long = "synth-separation", default_value_t = 1.5)]
    pub synth_separation: f64,
    #[arg(long = "synth-seed", default_value_t = 0)]
    pub synth_seed: u64,
}

impl DataArgs {
    fn source(&self) -> Result<DataSource, FamlError> {
        match &self.data {
            Some(path) => Ok(DataSource::Directory {
                path: path.clone(),
                num_classes: self.num_classes,
            }),
            None => SynthArgs {
                num_classes: self.synth_k,
                views: self.synth_views,
                dims: self.synth_dims.clone(),
                samples_per_class: self.synth_samples_per_class,
                separation: self.synth_separation,
                seed: self.synth_seed,
            }
            .spec()
            .map(DataSource::Synth),
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train the per-view networks and write a run directory.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        data: DataArgs,
        /// Rerun exactly the job recorded in a run manifest (ignores config and data flags).
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-evaluate a run's checkpoints on its recorded test split.
    Eval {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic multi-view dataset directory.
    Synth {
        #[command(flatten)]
        synth: SynthArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Full-method accuracy for several prior strengths γ.
    SweepGamma {
        #[arg(long, value_delimiter = ',', default_value = "0.1,0.5,1,5,10")]
        values: Vec<f64>,
        /// Number of seeds per value, counting up from the config seed.
        #[arg(long, default_value_t = 5)]
        seeds: u64,
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// The five-row component ablation over several seeds.
    Ablate {
        #[arg(long, default_value_t = 5)]
        seeds: u64,
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Regenerate plot data and print a summary from a run directory.
    Report {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn output_dir(explicit: Option<&PathBuf>, subcommand: &str) -> PathBuf {
    explicit.cloned().unwrap_or_else(|| {
        let root = std::env::var_os(OUTPUT_ROOT_ENV).map_or_else(|| PathBuf::from("runs"), PathBuf::from);
        root.join(subcommand)
    })
}

fn seed_list(cfg: &TrainConfig, n: u64) -> Result<Vec<u64>, FamlError> {
    if n == 0 {
        return Err(FamlError::Config("--seeds must be at least 1".into()));
    }
    Ok((0..n).map(|i| cfg.seed + i).collect())
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "n/a".to_string(), |v| format!("{:.4}", v))
}

fn summary(report: &EvalReport) -> String {
    format!(
        "acc all {:.4} head {} med {} tail {} | ece {:.4} | evidence fd {:.4}",
        report.acc_all,
        fmt_opt(report.acc_head),
        fmt_opt(report.acc_med),
        fmt_opt(report.acc_tail),
        report.ece_all,
        report.evidence_strength_fairness
    )
}

fn load_config(args: &ConfigArgs) -> Result<TrainConfig, FamlError> {
    TrainConfig::load(args.config.as_deref(), &args.overrides)
}

fn create_dir(dir: &Path) -> Result<(), FamlError> {
    std::fs::create_dir_all(dir).map_err(|e| FamlError::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

/// Executes a parsed invocation.
pub fn run(cli: &Cli) -> Result<(), FamlError> {
    match &cli.command {
        Command::Train {
            config,
            data,
            manifest,
            out,
        } => {
            let out = output_dir(out.as_ref(), "train");
            let (_, art) = match manifest {
                Some(path) => {
                    let text = std::fs::read_to_string(path).map_err(|e| FamlError::Io {
                        path: path.clone(),
                        source: e,
                    })?;
                    let m = serde_json::from_str(&text)
                        .map_err(|e| FamlError::Config(format!("{}: {e}", path.display())))?;
                    rerun_manifest(&m)?
                }
                None => run_experiment(&data.source()?, &load_config(config)?, &config.overrides)?,
            };
            write_run_dir(&out, &art)?;
            println!("{}", summary(art.report()));
            println!("wrote {}", out.display());
        }
        Command::Eval { run, out } => {
            let out = output_dir(out.as_ref(), "eval");
            let manifest = read_manifest(run)?;
            let nets = load_checkpoints(run)?;
            let prior = read_prior(run)?;
            let prepared = prepared_from_manifest(&manifest)?;
            let eval = evaluate(
                &nets,
                &prior.priors,
                prior.pin_base_rates,
                &prepared.test,
                manifest.partition.as_ref(),
            )?;
            create_dir(&out)?;
            let path = out.join(run_dir::REPORT_FILE);
            std::fs::write(&path, eval.report.to_json()?).map_err(|e| FamlError::Io { path, source: e })?;
            crate::metrics::write_predictions_csv(&out.join(run_dir::PREDICTIONS_FILE), &eval.predictions)?;
            write_plot_data(&out, &eval.report, &eval.predictions, manifest.partition.as_ref())?;
            println!("{}", summary(&eval.report));
        }
        Command::Synth { synth, out } => {
            let out = output_dir(out.as_ref(), "synth");
            let ds = crate::data::synth_generate(&synth.spec()?)?;
            save_multiview(&ds, &out)?;
            println!("wrote {} samples, {} views to {}", ds.len(), ds.num_views(), out.display());
        }
        Command::SweepGamma {
            values,
            seeds,
            config,
            data,
            out,
        } => {
            let out = output_dir(out.as_ref(), "sweep-gamma");
            let cfg = load_config(config)?;
            let raw = data.source()?.load()?;
            let rows = gamma_sweep(&cfg, &raw, values, &seed_list(&cfg, *seeds)?, Some(&out))?;
            write_gamma_sweep_csv(&out.join("gamma_sweep.csv"), &rows)?;
            for r in &rows {
                let acc = crate::trainer::Stat::of(r.reports.iter().map(|x| Some(x.acc_all)));
                if let Some(s) = acc {
                    println!("gamma {:>6}: acc {:.4} ± {:.4}", r.gamma, s.mean, s.std);
                }
            }
        }
        Command::Ablate {
            seeds,
            config,
            data,
            out,
        } => {
            let out = output_dir(out.as_ref(), "ablate");
            let cfg = load_config(config)?;
            let raw = data.source()?.load()?;
            let rows = ablation_matrix(&cfg, &raw, &seed_list(&cfg, *seeds)?, Some(&out))?;
            write_ablation_csv(&out.join("ablation.csv"), &rows)?;
            for r in &rows {
                println!(
                    "{:<18} acc {} tail {}",
                    r.name,
                    r.acc_all().map_or("n/a".into(), |s| format!("{:.4} ± {:.4}", s.mean, s.std)),
                    r.acc_tail().map_or("n/a".into(), |s| format!("{:.4} ± {:.4}", s.mean, s.std)),
                );
            }
        }
        Command::Report { run, out } => {
            let out = out.clone().unwrap_or_else(|| run.clone());
            let report = read_report(run)?;
            let predictions = read_predictions(run)?;
            let manifest = read_manifest(run)?;
            create_dir(&out)?;
            write_plot_data(&out, &report, &predictions, manifest.partition.as_ref())?;
            println!("{}", summary(&report));
        }
    }
    Ok(())
}

/// Parses `args`, runs, and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { exit::CONFIG } else { exit::OK };
            let _ = e.print();
            return code;
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).parse_default_env().try_init();
    match run(&cli) {
        Ok(()) => exit::OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
