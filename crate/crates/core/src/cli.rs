//! CLI commands: dataset generation, training, NMSE sweeps, and one-shot
//! estimation, all driven by one TOML config. The binary in
//! `src/bin/sbmce.rs` is a thin argument parser around these functions.
//!
//! Exit codes: 0 success, 2 config error, 3 io/format error, 4 numeric
//! failure.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::channel::{load_dataset, make_splits, save_dataset, ChannelDataset, Domain};
use crate::config::RunConfig;
use crate::container;
use crate::error::{Error, Result};
use crate::estimators::gmm::{self, EmOptions, GmmPrior};
use crate::estimators::{load_observation, ls_estimate, sbm_estimate, single_step_estimate};
use crate::eval::{emit_csv, run_sweep, EstimatorSpec, SweepAssets};
use crate::numerics::{CMat, Rng};
use crate::scorenet::checkpoint::{load_model, save_model};
use crate::training;

const EST_MAGIC: &[u8] = b"SBMEST1";
const EST_VERSION: u16 = 1;

#[derive(Debug, Parser)]
#[command(
    name = "sbmce",
    about = "Score-based MIMO channel estimation: data generation, training, sweeps, estimation",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// TOML run configuration.
    pub config: PathBuf,
    /// Override every seed in the config (scenario, training, sweep).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override paths.data_dir.
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    /// Override paths.model_path.
    #[arg(long)]
    pub model_path: Option<PathBuf>,
    /// Override paths.report_path.
    #[arg(long)]
    pub report_path: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate train/val/test channel datasets.
    GenData(CommonArgs),
    /// Train the score network and write a checkpoint.
    Train(CommonArgs),
    /// Run the NMSE/step-count sweep and write the report CSV.
    Sweep(CommonArgs),
    /// Estimate one serialized pilot observation.
    Estimate {
        #[command(flatten)]
        common: CommonArgs,
        /// Serialized observation file.
        observation: PathBuf,
    },
}

pub fn load_config(args: &CommonArgs) -> Result<RunConfig> {
    let mut cfg = RunConfig::from_path(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.scenario.seed = seed;
        cfg.train.seed = seed;
        cfg.sweep.seed = seed;
    }
    if let Some(p) = &args.data_dir {
        cfg.paths.data_dir = p.clone();
    }
    if let Some(p) = &args.model_path {
        cfg.paths.model_path = p.clone();
    }
    if let Some(p) = &args.report_path {
        cfg.paths.report_path = p.clone();
    }
    Ok(cfg)
}

/// Runs `f` inside a rayon pool capped at `workers` threads (0 = default).
fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    if workers == 0 {
        return f();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Numeric(format!("thread pool: {e}")))?;
    pool.install(f)
}

pub fn cmd_gen_data(cfg: &RunConfig) -> Result<()> {
    with_workers(cfg.workers, || {
        std::fs::create_dir_all(&cfg.paths.data_dir)?;
        let (train, val, test) = make_splits(
            &cfg.scenario,
            cfg.dataset.m_train,
            cfg.dataset.m_val,
            cfg.dataset.m_test,
        )?;
        for (split, ds) in [("train", &train), ("val", &val), ("test", &test)] {
            let path = cfg.dataset_path(split);
            save_dataset(ds, &path)?;
            println!(
                "wrote {} ({} samples, {}x{})",
                path.display(),
                ds.len(),
                ds.n_rx,
                ds.n_tx
            );
        }
        Ok(())
    })
}

fn load_split(cfg: &RunConfig, split: &str) -> Result<ChannelDataset> {
    let path = cfg.dataset_path(split);
    if !path.exists() {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!(
                "dataset {} not found; run `sbmce gen-data` first",
                path.display()
            ),
        )));
    }
    load_dataset(&path)
}

pub fn cmd_train(cfg: &RunConfig) -> Result<()> {
    with_workers(cfg.workers, || {
        let train_ds = load_split(cfg, "train")?.to_domain(Domain::Beamspace)?;
        let val_ds = load_split(cfg, "val")?.to_domain(Domain::Beamspace)?;
        let sched = cfg.schedule.build()?;
        let model_cfg = cfg.model.to_model_config(cfg.scenario.n_rx, cfg.scenario.n_tx);
        let (model, report) = training::train(&train_ds, &val_ds, &sched, &model_cfg, &cfg.train)?;
        save_model(&model, &sched, &cfg.paths.model_path)?;
        let report_path = train_report_path(&cfg.paths.model_path);
        std::fs::write(&report_path, report.to_csv())?;
        println!(
            "trained {} restarts, selected restart {} (val loss {:.6e}); checkpoint {}, report {}",
            cfg.train.n_restarts,
            report.selected_restart,
            report.best_val_loss,
            cfg.paths.model_path.display(),
            report_path.display()
        );
        Ok(())
    })
}

/// The training report lands next to the checkpoint.
pub fn train_report_path(model_path: &Path) -> PathBuf {
    let mut s = model_path.as_os_str().to_owned();
    s.push(".train.csv");
    PathBuf::from(s)
}

fn fit_or_load_prior(
    cfg: &RunConfig,
    train_ds: &ChannelDataset,
    kron: bool,
) -> Result<GmmPrior> {
    let cache_path = cfg.paths.data_dir.join(if kron {
        "gmm_kron.sbmgmm"
    } else {
        "gmm_full.sbmgmm"
    });
    if cfg.gmm.cache && cache_path.exists() {
        return gmm::load_prior(&cache_path);
    }
    let opts = EmOptions {
        max_iters: cfg.gmm.max_iters,
        tol: cfg.gmm.tol,
    };
    let mut rng = Rng::from_seed(cfg.scenario.seed).split(if kron { 71 } else { 70 });
    let prior = if kron {
        gmm::fit_kron(
            train_ds,
            cfg.gmm.kron_rx_components,
            cfg.gmm.kron_tx_components,
            &opts,
            &mut rng,
        )?
    } else {
        gmm::fit_full(train_ds, cfg.gmm.components, &opts, &mut rng)?
    };
    if cfg.gmm.cache {
        gmm::save_prior(&prior, &cache_path)?;
    }
    Ok(prior)
}

/// Non-centered global sample covariance of the training split.
pub fn sample_covariance(train_ds: &ChannelDataset) -> CMat {
    let n = train_ds.n_rx * train_ds.n_tx;
    let mut cov = CMat::zeros(n, n);
    for s in &train_ds.samples {
        let v = s.to_vec();
        cov.gerc(
            num_complex::Complex64::new(1.0, 0.0),
            &v,
            &v,
            num_complex::Complex64::new(1.0, 0.0),
        );
    }
    cov /= num_complex::Complex64::new(train_ds.len() as f64, 0.0);
    cov
}

pub fn cmd_sweep(cfg: &RunConfig) -> Result<()> {
    with_workers(cfg.workers, || {
        let sweep_cfg = cfg.sweep.to_sweep_config(cfg.schedule.k_steps)?;
        let test_ds = load_split(cfg, "test")?;
        let needs_train = sweep_cfg.estimators.iter().any(|e| {
            matches!(
                e,
                EstimatorSpec::ScovLmmse | EstimatorSpec::Gmm | EstimatorSpec::GmmKron
            )
        });
        let needs_model = sweep_cfg
            .estimators
            .iter()
            .any(|e| matches!(e, EstimatorSpec::Sbm { .. }));

        let mut assets = SweepAssets::default();
        if needs_train {
            let train_ds = load_split(cfg, "train")?;
            if sweep_cfg
                .estimators
                .iter()
                .any(|e| matches!(e, EstimatorSpec::ScovLmmse))
            {
                assets.scov = Some(sample_covariance(&train_ds));
            }
            if sweep_cfg.estimators.iter().any(|e| matches!(e, EstimatorSpec::Gmm)) {
                assets.gmm = Some(fit_or_load_prior(cfg, &train_ds, false)?);
            }
            if sweep_cfg
                .estimators
                .iter()
                .any(|e| matches!(e, EstimatorSpec::GmmKron))
            {
                assets.gmm_kron = Some(fit_or_load_prior(cfg, &train_ds, true)?);
            }
        }
        if needs_model {
            if !cfg.paths.model_path.exists() {
                return Err(Error::Io(std::io::Error::new(
                    std::io::ErrorKind::NotFound,
                    format!(
                        "model {} not found; run `sbmce train` or drop sbm from sweep.estimators",
                        cfg.paths.model_path.display()
                    ),
                )));
            }
            if cfg.sweep_grid_clamps() {
                log::warn!(
                    "sweep grid exceeds the schedule's SNR coverage [{}, {}] dB; initial steps clamp at the ends",
                    cfg.schedule.snr_min_db,
                    cfg.schedule.snr_max_db
                );
            }
            assets.model = Some(load_model(&cfg.paths.model_path)?);
        }

        let report = run_sweep(&sweep_cfg, &test_ds, &assets)?;
        emit_csv(&report, &cfg.paths.report_path)?;
        println!(
            "wrote {} ({} rows)",
            cfg.paths.report_path.display(),
            report.rows.len()
        );
        Ok(())
    })
}

pub fn cmd_estimate(cfg: &RunConfig, observation: &Path) -> Result<()> {
    with_workers(cfg.workers, || {
        let obs = load_observation(observation)?;
        let (estimate, k_hat, steps) = match cfg.estimate.estimator.as_str() {
            "ls" => (ls_estimate(&obs)?, 0usize, 0usize),
            "sbm" => {
                let (model, sched) = load_model(&cfg.paths.model_path)?;
                let smin_sq = sched.sigma_min() * sched.sigma_min();
                let smax_sq = sched.sigma_max() * sched.sigma_max();
                if obs.eta_sq < smin_sq || obs.eta_sq > smax_sq {
                    log::warn!(
                        "observation eta^2 = {:.3e} outside schedule range [{:.3e}, {:.3e}]; clamping initial step",
                        obs.eta_sq,
                        smin_sq,
                        smax_sq,
                    );
                    eprintln!("warning: eta^2 outside schedule range, clamping initial step");
                }
                let est = if cfg.estimate.delta == 0 {
                    single_step_estimate(&obs, &model, &sched)?
                } else {
                    sbm_estimate(&obs, &model, &sched, cfg.estimate.delta)?
                };
                (est.estimate, est.k_hat, est.steps)
            }
            other => {
                return Err(Error::Config(format!(
                    "estimate.estimator must be \"ls\" or \"sbm\", got \"{other}\""
                )))
            }
        };
        let out_path = estimate_output_path(observation);
        save_estimate(&estimate, k_hat, steps, &out_path)?;
        println!(
            "estimate written to {}; k_hat={} steps={}",
            out_path.display(),
            k_hat,
            steps
        );
        Ok(())
    })
}

pub fn estimate_output_path(observation: &Path) -> PathBuf {
    let mut s = observation.as_os_str().to_owned();
    s.push(".est");
    PathBuf::from(s)
}

pub fn save_estimate(
    estimate: &crate::channel::ChannelSample,
    k_hat: usize,
    steps: usize,
    path: &Path,
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    container::write_magic(&mut w, EST_MAGIC)?;
    container::write_u16(&mut w, EST_VERSION)?;
    container::write_u32(&mut w, estimate.n_rx() as u32)?;
    container::write_u32(&mut w, estimate.n_tx() as u32)?;
    container::write_u64(&mut w, k_hat as u64)?;
    container::write_u64(&mut w, steps as u64)?;
    container::write_complex_slice(&mut w, estimate.mat.as_slice())?;
    Ok(())
}

pub fn load_estimate(path: &Path) -> Result<(crate::channel::ChannelSample, usize, usize)> {
    let mut r = BufReader::new(File::open(path)?);
    container::expect_magic(&mut r, EST_MAGIC, "estimate")?;
    container::expect_version(&mut r, EST_VERSION, "estimate")?;
    let n_rx = container::read_u32(&mut r, "estimate")? as usize;
    let n_tx = container::read_u32(&mut r, "estimate")? as usize;
    let k_hat = container::read_u64(&mut r, "estimate")? as usize;
    let steps = container::read_u64(&mut r, "estimate")? as usize;
    let entries = container::read_complex_vec(&mut r, n_rx * n_tx, "estimate")?;
    Ok((
        crate::channel::ChannelSample::new(CMat::from_column_slice(n_rx, n_tx, &entries)),
        k_hat,
        steps,
    ))
}

/// Dispatches a parsed CLI invocation; returns the process exit code.
pub fn execute(cli: Cli) -> i32 {
    let outcome = match &cli.command {
        Command::GenData(args) => load_config(args).and_then(|cfg| cmd_gen_data(&cfg)),
        Command::Train(args) => load_config(args).and_then(|cfg| cmd_train(&cfg)),
        Command::Sweep(args) => load_config(args).and_then(|cfg| cmd_sweep(&cfg)),
        Command::Estimate {
            common,
            observation,
        } => load_config(common).and_then(|cfg| cmd_estimate(&cfg, observation)),
    };
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
