//! Command-line front end: `generate`, `diagnose`, `cluster`, `spectra` and
//! `gradcheck`.
//!
//! [`run`] returns the process exit code: 0 when the command completed and
//! every verdict it computes passed, 1 when a verdict failed, 2 on errors
//! (bad flags, unreadable inputs).

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use mmag_core::datagen::{generate_to, SynthConfig};
use mmag_core::diagnostics::diagnose;
use mmag_core::filter::{feature_shift, spectra_report, DualFilterConfig, SpectraReport};
use mmag_core::io::{load_dataset, KeyValues};
use mmag_core::metrics::ClusterMetrics;
use mmag_core::trainer::{fit, forward, gradcheck, init_params, write_epoch_log, TrainConfig, TrainingData};

type Failure = Box<dyn std::error::Error + Send + Sync>;

#[derive(Debug, Parser)]
#[command(name = "mmag", about = "Dual graph filtering and contrastive clustering of multimodal attributed graphs")]
pub struct Cli {
    /// Worker threads; defaults to the number of logical cores.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
#[allow(clippy::large_enum_variant)]
pub enum Command {
    /// Write a synthetic dataset (manifest, edges, labels, features).
    Generate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cross-modal distance correlation and z-score outlier report as JSON.
    Diagnose {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 4.0)]
        tau: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train, cluster and write assignments, metrics, epoch log and parameters.
    Cluster(ClusterArgs),
    /// Filter responses, truncation errors and spectral verdicts.
    Spectra {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
        #[arg(long = "t", default_value_t = 10)]
        t_layers: usize,
        #[arg(long, default_value_t = 30)]
        t_max: usize,
        #[arg(long, default_value_t = 64)]
        hidden_dim: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Directory for the CSV tables and JSON summary; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Finite-difference check of the end-to-end parameter gradient.
    Gradcheck {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 30)]
        n_cap: usize,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long = "t")]
    pub t_layers: Option<usize>,
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long = "walk-len")]
    pub walk_length: Option<usize>,
    #[arg(long)]
    pub negatives_per_node: Option<usize>,
    #[arg(long)]
    pub mms_negatives: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub kmeans_interval: Option<usize>,
    #[arg(long)]
    pub hidden_dim: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub no_fdd: bool,
    #[arg(long)]
    pub no_mod_loss: bool,
    #[arg(long)]
    pub no_nbr_loss: bool,
    #[arg(long)]
    pub no_aas: bool,
    #[arg(long)]
    pub no_comm_loss: bool,
    #[arg(long)]
    pub no_hps: bool,
}

impl ClusterArgs {
    /// Defaults, then the config file, then flags.
    pub fn resolve(&self) -> Result<TrainConfig, Failure> {
        let mut cfg = TrainConfig::default();
        if let Some(path) = &self.config {
            cfg.apply_key_values(&KeyValues::read(path)?)?;
        }
        macro_rules! over {
            ($($field:ident),*) => {$(
                if let Some(v) = self.$field {
                    cfg.$field = v;
                }
            )*};
        }
        over!(
            alpha,
            beta,
            t_layers,
            theta,
            delta,
            walk_length,
            negatives_per_node,
            mms_negatives,
            lr,
            weight_decay,
            epochs,
            kmeans_interval,
            hidden_dim,
            seed
        );
        if self.k.is_some() {
            cfg.num_clusters = self.k;
        }
        let ab = &mut cfg.ablations;
        ab.no_fdd |= self.no_fdd;
        ab.no_mod_loss |= self.no_mod_loss;
        ab.no_nbr_loss |= self.no_nbr_loss;
        ab.no_aas |= self.no_aas;
        ab.no_comm_loss |= self.no_comm_loss;
        ab.no_hps |= self.no_hps;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Parses `argv` (program name first), runs the command and returns the exit
/// code. Errors go to stderr.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.threads.unwrap_or(0)).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    match pool.install(|| execute(&cli.command)) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

/// Prints to stdout; a closed pipe (e.g. `| head`) is not an error.
fn emit(text: &str) -> Result<(), Failure> {
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{text}").and_then(|_| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn write(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| format!("writing {}: {e}", path.display()).into())
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| format!("creating {}: {e}", dir.display()).into())
}

fn execute(command: &Command) -> Result<bool, Failure> {
    match command {
        Command::Generate { config, out } => {
            let cfg = match config {
                Some(path) => SynthConfig::from_key_values(&KeyValues::read(path)?)?,
                None => SynthConfig::default(),
            };
            let manifest = generate_to(&cfg, out)?;
            emit(&manifest.display().to_string())?;
            Ok(true)
        }
        Command::Diagnose { data, tau, seed } => {
            let g = load_dataset(data)?;
            let report = diagnose(&g, *tau, *seed)?;
            emit(&serde_json::to_string_pretty(&report)?)?;
            Ok(true)
        }
        Command::Cluster(args) => cluster(args),
        Command::Spectra {
            data,
            alpha,
            beta,
            t_layers,
            t_max,
            hidden_dim,
            seed,
            out,
        } => {
            let cfg = TrainConfig {
                alpha: *alpha,
                beta: *beta,
                t_layers: *t_layers,
                hidden_dim: *hidden_dim,
                seed: *seed,
                ..TrainConfig::default()
            };
            cfg.validate()?;
            let g = load_dataset(data)?;
            let td = TrainingData::new(&g)?;
            let params = init_params(&td, cfg.hidden_dim, cfg.seed);
            let cache = forward(&td, &params, &cfg)?;
            let shifts = cache
                .z_list
                .iter()
                .enumerate()
                .map(|(i, zi)| feature_shift(zi.view(), i))
                .collect::<Result<Vec<_>, _>>()?;
            let filter = DualFilterConfig::new(cfg.alpha, cfg.beta, cfg.t_layers)?;
            let report = spectra_report(&td.ops, cache.z.view(), &shifts, &filter, *t_max)?;
            let summary = serde_json::json!({
                "alpha": report.alpha,
                "beta": report.beta,
                "t_layers": report.t_layers,
                "max_dual_ratio": report.max_dual_ratio,
                "max_node_ratio": report.max_node_ratio,
                "energy": report.energy,
                "verdicts": report.verdicts,
                "passed": report.verdicts.all(),
            });
            let summary = serde_json::to_string_pretty(&summary)?;
            match out {
                Some(dir) => {
                    create_dir(dir)?;
                    write(&dir.join("node_response.csv"), &SpectraReport::response_csv(&report.node))?;
                    write(&dir.join("feature_response.csv"), &SpectraReport::response_csv(&report.feature))?;
                    write(&dir.join("truncation.csv"), &report.truncation_csv())?;
                    write(&dir.join("spectra.json"), &summary)?;
                }
                None => {
                    emit(&format!("{}{summary}", report.truncation_csv()))?;
                }
            }
            Ok(report.verdicts.all())
        }
        Command::Gradcheck {
            data,
            n_cap,
            config,
            seed,
        } => {
            let mut cfg = TrainConfig::default();
            if let Some(path) = config {
                cfg.apply_key_values(&KeyValues::read(path)?)?;
            }
            if let Some(s) = seed {
                cfg.seed = *s;
            }
            let g = load_dataset(data)?;
            let report = gradcheck(&g, &cfg, *n_cap)?;
            emit(&serde_json::to_string_pretty(&report)?)?;
            Ok(report.passed)
        }
    }
}

fn cluster(args: &ClusterArgs) -> Result<bool, Failure> {
    let cfg = args.resolve()?;
    let g = load_dataset(&args.data)?;
    let data = TrainingData::new(&g)?;
    let result = fit(&data, &cfg)?;
    let out = &args.out;
    create_dir(out)?;
    write(&out.join("config.txt"), &cfg.to_key_values().render())?;
    write(&out.join("assignments.csv"), &result.clustering.assignments_csv())?;
    write_epoch_log(&result.logs, &out.join("epochs.jsonl"))?;
    result.params.save(&data.names, &out.join("params"))?;
    if let Some(labels) = g.labels() {
        let metrics = ClusterMetrics::evaluate_partial(labels, &result.clustering.assignments)?;
        write(&out.join("metrics.json"), &metrics.to_json())?;
        emit(&metrics.to_json())?;
    }
    if let Some(epoch) = result.diverged_at {
        eprintln!("training diverged at epoch {epoch}; outputs use the last finite state");
        return Ok(false);
    }
    Ok(true)
}
