//! End-to-end at toy scale: generate data, train the score network for a
//! minute, save/load the checkpoint, and compare the trained estimator
//! against least squares on fresh observations.
//!
//! ```bash
//! cargo run --release --example train_and_estimate
//! ```

use sbmce::channel::{make_splits, Domain, ScenarioConfig};
use sbmce::estimators::{ls_estimate, observe, sbm_estimate, Pilot};
use sbmce::eval::nmse;
use sbmce::numerics::Rng;
use sbmce::schedule::NoiseSchedule;
use sbmce::scorenet::checkpoint::{load_model, save_model};
use sbmce::scorenet::ModelConfig;
use sbmce::training::{train, TrainConfig};

fn main() {
    let scenario = ScenarioConfig {
        n_rx: 8,
        n_tx: 2,
        n_paths: 3,
        seed: 1,
        ..ScenarioConfig::default()
    };
    let (train_ds, val_ds, test_ds) = make_splits(&scenario, 4000, 400, 200).unwrap();
    let sched = NoiseSchedule::build(40.0, -22.0, 100, 1.0).unwrap();
    let model_cfg = ModelConfig {
        n_rx: 8,
        n_tx: 2,
        hidden_channels: 24,
        n_layers: 3,
        kernel_size: 3,
        embed_dim: 16,
        embed_channels: 8,
    };
    let train_cfg = TrainConfig {
        batch_size: 128,
        max_epochs: 25,
        initial_lr: 2e-3,
        patience: 6,
        lr_patience: 3,
        n_restarts: 1,
        seed: 9,
        ..TrainConfig::default()
    };

    println!("training on {} beamspace samples ...", train_ds.len());
    let t0 = std::time::Instant::now();
    let (model, report) = train(
        &train_ds.to_domain(Domain::Beamspace).unwrap(),
        &val_ds.to_domain(Domain::Beamspace).unwrap(),
        &sched,
        &model_cfg,
        &train_cfg,
    )
    .unwrap();
    println!(
        "done in {:.1?}: {} epochs, best val loss {:.4}",
        t0.elapsed(),
        report.rows.len(),
        report.best_val_loss
    );

    let path = std::env::temp_dir().join("sbmce_example_model.sbmmdl");
    save_model(&model, &sched, &path).unwrap();
    let (model, sched) = load_model(&path).unwrap();
    println!("checkpoint round trip via {}", path.display());

    println!();
    println!(
        "{:>8} {:>6} {:>12} {:>12} {:>12}",
        "SNR[dB]", "k_hat", "LS", "SBM d=1", "SBM 1-step"
    );
    let mut rng = Rng::from_seed(33);
    for snr_db in [-5.0, 0.0, 5.0, 10.0] {
        let eta_sq = 10f64.powf(-snr_db / 10.0);
        let mut truth = Vec::new();
        let mut ls = Vec::new();
        let mut iterative = Vec::new();
        let mut single = Vec::new();
        let mut k_hat = 0;
        for h in test_ds.samples.iter().take(100) {
            let obs = observe(h, &Pilot::Dft, eta_sq, &mut rng).unwrap();
            ls.push(ls_estimate(&obs).unwrap());
            let it = sbm_estimate(&obs, &model, &sched, 1).unwrap();
            k_hat = it.k_hat;
            iterative.push(it.estimate);
            single.push(sbm_estimate(&obs, &model, &sched, sched.len()).unwrap().estimate);
            truth.push(h.clone());
        }
        println!(
            "{snr_db:>8.1} {k_hat:>6} {:>12.5} {:>12.5} {:>12.5}",
            nmse(&truth, &ls).unwrap(),
            nmse(&truth, &iterative).unwrap(),
            nmse(&truth, &single).unwrap()
        );
    }
    println!();
    println!("one checkpoint serves the whole SNR range; no retraining per noise level");
}
