//! The evaluation harness: a paired SNR sweep over classical estimators
//! with CSV emission. Runs without a trained model; add `"sbm"` rows via
//! the CLI once a checkpoint exists.
//!
//! ```bash
//! cargo run --release --example snr_sweep
//! ```

use sbmce::channel::{make_splits, ScenarioConfig};
use sbmce::cli::sample_covariance;
use sbmce::estimators::gmm::{fit_kron, EmOptions};
use sbmce::eval::{emit_csv, render_csv, run_sweep, EstimatorSpec, PilotChoice, SweepAssets, SweepConfig};
use sbmce::numerics::Rng;

fn main() {
    let scenario = ScenarioConfig {
        n_rx: 16,
        n_tx: 4,
        seed: 512,
        ..ScenarioConfig::default()
    };
    let (train, _, test) = make_splits(&scenario, 4000, 1, 500).unwrap();

    let scov = sample_covariance(&train);
    let gmm_kron = fit_kron(
        &train,
        4,
        4,
        &EmOptions {
            max_iters: 60,
            tol: 1e-6,
        },
        &mut Rng::from_seed(99),
    )
    .unwrap();

    let cfg = SweepConfig {
        snr_grid_db: (0..8).map(|i| -15.0 + 5.0 * i as f64).collect(),
        estimators: vec![
            EstimatorSpec::Ls,
            EstimatorSpec::ScovLmmse,
            EstimatorSpec::GmmKron,
        ],
        m_test: 500,
        seed: 7,
        pilot: PilotChoice::Dft,
        timing: false,
    };
    let report = run_sweep(&cfg, &test, &SweepAssets {
        scov: Some(scov),
        gmm_kron: Some(gmm_kron),
        ..SweepAssets::default()
    })
    .unwrap();

    let path = std::env::temp_dir().join("sbmce_example_report.csv");
    emit_csv(&report, &path).unwrap();
    println!("{}", render_csv(&report));
    println!("report written to {}", path.display());
    println!("estimators share identical observations per SNR, so rows are paired");
}
