// Scratch calibration run (will be replaced): times a desk-scale training
// and compares trained-SBM NMSE against baselines on a few SNRs.

use std::time::Instant;

use sbmce::channel::{make_splits, Domain, ScenarioConfig};
use sbmce::cli::sample_covariance;
use sbmce::estimators::gmm::{fit_kron, EmOptions};
use sbmce::eval::{run_sweep, EstimatorSpec, PilotChoice, SweepAssets, SweepConfig};
use sbmce::numerics::Rng;
use sbmce::schedule::NoiseSchedule;
use sbmce::scorenet::ModelConfig;
use sbmce::training::{train, TrainConfig};

fn main() {
    let t0 = Instant::now();
    let scenario = ScenarioConfig {
        n_rx: 16,
        n_tx: 4,
        sector_halfangle_deg: 60.0,
        n_paths: 3,
        rician_k_db_range: (0.0, 10.0),
        angle_spread_deg: 5.0,
        seed: 2024,
    };
    let (train_ds, val_ds, test_ds) = make_splits(&scenario, 16000, 1000, 400).unwrap();
    println!("[{:?}] datasets ready", t0.elapsed());

    let sched = NoiseSchedule::build(40.0, -22.0, 100, 1.0).unwrap();
    let model_cfg = ModelConfig {
        n_layers: 4,
        ..ModelConfig::default()
    };
    let train_cfg = TrainConfig {
        batch_size: 128,
        max_epochs: 120,
        initial_lr: 2e-3,
        patience: 12,
        lr_patience: 5,
        n_restarts: 1,
        seed: 7,
        ..TrainConfig::default()
    };
    let train_beam = train_ds.to_domain(Domain::Beamspace).unwrap();
    let val_beam = val_ds.to_domain(Domain::Beamspace).unwrap();
    let (model, report) = train(&train_beam, &val_beam, &sched, &model_cfg, &train_cfg).unwrap();
    println!(
        "[{:?}] trained: {} epochs total, best val {:.4}",
        t0.elapsed(),
        report.rows.len(),
        report.best_val_loss
    );
    for row in &report.rows {
        if row.restart == report.selected_restart {
            println!(
                "  r{} e{}: train {:.4} val {:.4}",
                row.restart, row.epoch, row.train_loss, row.val_loss
            );
        }
    }

    let scov = sample_covariance(&train_ds);
    let gmm_kron = fit_kron(
        &train_ds,
        4,
        4,
        &EmOptions {
            max_iters: 100,
            tol: 1e-6,
        },
        &mut Rng::from_seed(99),
    )
    .unwrap();
    println!("[{:?}] priors ready", t0.elapsed());

    let sweep = SweepConfig {
        snr_grid_db: vec![-5.0, 0.0, 5.0, 10.0, 15.0],
        estimators: vec![
            EstimatorSpec::Ls,
            EstimatorSpec::ScovLmmse,
            EstimatorSpec::GmmKron,
            EstimatorSpec::Sbm { delta: 1 },
            EstimatorSpec::Sbm { delta: 4 },
            EstimatorSpec::Sbm { delta: 16 },
            EstimatorSpec::Sbm { delta: 0 },
        ],
        m_test: 400,
        seed: 31,
        pilot: PilotChoice::Dft,
        timing: false,
    };
    let assets = SweepAssets {
        model: Some((model, sched)),
        scov: Some(scov),
        gmm_kron: Some(gmm_kron),
        ..SweepAssets::default()
    };
    let report = run_sweep(&sweep, &test_ds, &assets).unwrap();
    println!("[{:?}] sweep done", t0.elapsed());
    println!("{}", sbmce::eval::render_csv(&report));
}
