//! Command-line driver: dataset ingestion, joint-model training, attack
//! grids, distortion schemes and sweeps, all from one JSON config.

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use std::fs;
use std::path::{Path, PathBuf};
use vfl_core::data::{select_rows, window_partitions};
use vfl_core::defense::{PassiveStats, PpsCase};
use vfl_core::harness::{
    self, mix_seed, AttackMethod, ExperimentConfig, ProcessedData, ProcessedFile,
};
use vfl_core::model::{self, accuracy, partition_params, ModelFile, TrainConfig};

#[derive(Parser)]
#[command(
    name = "vfl",
    version,
    about = "Feature-inference attacks and parameter-distortion defenses for vertical federated logistic regression"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output file.
    #[arg(long)]
    out: PathBuf,
    /// Override the config's seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Load, encode, normalize and split the configured source; write
    /// the processed dataset as JSON.
    Ingest(Common),
    /// Train the joint model on the training split and save it as JSON.
    Train {
        #[command(flatten)]
        common: Common,
        /// Reuse an already ingested dataset instead of re-ingesting.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Attack grid over window widths and methods; writes CSV rows
    /// (per window plus a window average per width and method).
    Attack(Common),
    /// Solve one distortion level for one window and write the outcome
    /// as JSON.
    Defend {
        #[command(flatten)]
        common: Common,
        /// Passive window width.
        #[arg(long)]
        d: usize,
        /// Window start index.
        #[arg(long, default_value_t = 0)]
        window: usize,
        /// Requested distortion level.
        #[arg(long)]
        epsilon: f64,
    },
    /// Distortion sweeps: privacy (attack error) against the
    /// interpretability level; writes CSV.
    SweepPi(Common),
    /// Feature covariance matrix, row-major CSV.
    Covariance(Common),
    /// Stand-in model accuracy against the active feature count; CSV.
    AmAccuracy(Common),
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let mut cfg: ExperimentConfig =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn ingest_from(cfg: &ExperimentConfig) -> Result<ProcessedData> {
    Ok(harness::ingest(&cfg.source, &cfg.split, cfg.seed)?)
}

fn load_or_ingest(cfg: &ExperimentConfig, data: &Option<PathBuf>) -> Result<ProcessedData> {
    match data {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading dataset {}", path.display()))?;
            let file: ProcessedFile = serde_json::from_str(&text)?;
            Ok(file.unpack())
        }
        None => ingest_from(cfg),
    }
}

fn report_skips(skips: &[harness::Skip]) {
    for s in skips {
        match s.window_start {
            Some(w) => eprintln!("skipped d={} window={} {}: {}", s.d, w, s.method, s.reason),
            None => eprintln!("skipped d={} {}: {}", s.d, s.method, s.reason),
        }
    }
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Ingest(common) => {
            let cfg = load_config(&common.config, common.seed)?;
            let data = ingest_from(&cfg)?;
            let file = ProcessedFile::pack(&data);
            fs::write(&common.out, serde_json::to_string(&file)?)?;
            eprintln!(
                "ingested {}: {} samples, {} features, {} classes (train/test/prediction = {}/{}/{})",
                cfg.source.label(),
                data.dataset.n_samples(),
                data.dataset.d_t(),
                data.dataset.k(),
                data.splits.train.len(),
                data.splits.test.len(),
                data.splits.prediction.len()
            );
        }
        Command::Train { common, data } => {
            let cfg = load_config(&common.config, common.seed)?;
            let data = load_or_ingest(&cfg, &data)?;
            let ds = &data.dataset;
            let x_train = select_rows(ds.features(), &data.splits.train);
            let labels: Vec<usize> = data.splits.train.iter().map(|&i| ds.labels()[i]).collect();
            let train_cfg = TrainConfig {
                seed: mix_seed(cfg.seed, &[0xf1]),
                ..cfg.train
            };
            let params = model::train(&x_train, &labels, ds.k(), &train_cfg)?;
            let x_test = select_rows(ds.features(), &data.splits.test);
            let labels_test: Vec<usize> =
                data.splits.test.iter().map(|&i| ds.labels()[i]).collect();
            eprintln!(
                "test accuracy {:.4}",
                accuracy(&params, &x_test, &labels_test)
            );
            let file = ModelFile::pack(&params, (0..ds.d_t()).collect());
            fs::write(&common.out, serde_json::to_string(&file)?)?;
        }
        Command::Attack(common) => {
            let cfg = load_config(&common.config, common.seed)?;
            let data = ingest_from(&cfg)?;
            let out = harness::run_attack_grid(&cfg, &data)?;
            report_skips(&out.skipped);
            eprintln!("joint model test accuracy {:.4}", out.vfl_test_accuracy);
            fs::write(&common.out, harness::attack_csv(&out.rows))?;
        }
        Command::Defend {
            common,
            d,
            window,
            epsilon,
        } => {
            let cfg = load_config(&common.config, common.seed)?;
            let data = ingest_from(&cfg)?;
            let ds = &data.dataset;
            if d == 0 || d >= ds.d_t() {
                bail!("window width d={d} out of range for d_t={}", ds.d_t());
            }
            let windows = window_partitions(ds.d_t(), d)?;
            let partition = windows
                .get(window)
                .cloned()
                .with_context(|| format!("window {window} out of range"))?;
            let x_train = select_rows(ds.features(), &data.splits.train);
            let labels: Vec<usize> = data.splits.train.iter().map(|&i| ds.labels()[i]).collect();
            let train_cfg = TrainConfig {
                seed: mix_seed(cfg.seed, &[0xf1]),
                ..cfg.train
            };
            let params = model::train(&x_train, &labels, ds.k(), &train_cfg)?;
            let pm = partition_params(&params, &partition);
            let stats = PassiveStats::from_samples(&partition.passive_slice(&x_train));
            let case = cfg
                .pps
                .as_ref()
                .and_then(|p| p.cases.first().copied())
                .unwrap_or_else(|| PpsCase::for_shape(d, ds.k()));
            let seed = mix_seed(cfg.seed, &[d as u64, window as u64, epsilon.to_bits()]);
            let outcome = match cfg.pps.as_ref().and_then(|p| p.randomize) {
                None => vfl_core::defense::solve_case(case, &pm.w_pas, &stats, epsilon, seed),
                Some(mode) => vfl_core::defense::solve_case_randomized(
                    case, &pm.w_pas, &stats, epsilon, mode, seed,
                ),
            };
            let w_n: Vec<Vec<f64>> = (0..outcome.w_n.nrows())
                .map(|r| outcome.w_n.row(r).iter().cloned().collect())
                .collect();
            let json = serde_json::json!({
                "dataset": cfg.source.label(),
                "case": outcome.case,
                "d": d,
                "window_start": partition.passive[0],
                "epsilon": outcome.epsilon,
                "g_achieved": outcome.g_achieved,
                "mse_predicted": outcome.mse_predicted,
                "solver_status": outcome.status,
                "w_n": w_n,
            });
            fs::write(&common.out, serde_json::to_string_pretty(&json)?)?;
            eprintln!(
                "case {} at epsilon {}: g={:.6}, predicted mse {:.6} ({})",
                outcome.case, epsilon, outcome.g_achieved, outcome.mse_predicted, outcome.status
            );
        }
        Command::SweepPi(common) => {
            let cfg = load_config(&common.config, common.seed)?;
            let data = ingest_from(&cfg)?;
            let out = harness::run_pi_grid(&cfg, &data)?;
            report_skips(&out.skipped);
            fs::write(&common.out, harness::pi_csv(&out.rows))?;
        }
        Command::Covariance(common) => {
            let cfg = load_config(&common.config, common.seed)?;
            let data = ingest_from(&cfg)?;
            let cov = harness::covariance_matrix(&data.dataset);
            fs::write(&common.out, harness::matrix_csv(&cov))?;
        }
        Command::AmAccuracy(common) => {
            let cfg = load_config(&common.config, common.seed)?;
            let data = ingest_from(&cfg)?;
            let mut cfg = cfg;
            if cfg.methods.is_empty() {
                cfg.methods = vec![AttackMethod::Am];
            }
            let rows = harness::run_am_accuracy(&cfg, &data)?;
            fs::write(&common.out, harness::am_accuracy_csv(&rows))?;
        }
    }
    Ok(())
}
