//! Acceptance suite: one test per shipping criterion, each printing a
//! PASS line with its measured numbers (run with `-- --nocapture` to see
//! them). The trained-model criteria share one fixture: a single training
//! run plus one full sweep, both computed on first use.
//!
//! ```bash
//! cargo test --release -p sbmce --test acceptance -- --nocapture --test-threads 1
//! ```

use std::sync::OnceLock;

use num_complex::Complex64;

use sbmce::channel::{make_splits, ChannelSample, Domain, ScenarioConfig};
use sbmce::cli::{cmd_gen_data, cmd_sweep, sample_covariance};
use sbmce::config::RunConfig;
use sbmce::error::Result;
use sbmce::estimators::gmm::{fit_kron, gmm_estimate, EmOptions, GmmPrior, GmmStructure};
use sbmce::estimators::{
    decorrelate, observe, sbm_estimate, scov_lmmse, single_step_estimate, Pilot,
};
use sbmce::eval::{run_sweep, EstimatorSpec, EvalReport, PilotChoice, SweepAssets, SweepConfig};
use sbmce::numerics::{kron_apply, unitary_dft, Beamspace, CMat, CVec, HermitianSolver, Rng};
use sbmce::schedule::{skip_indices, NoiseSchedule};
use sbmce::scorenet::checkpoint::save_model;
use sbmce::scorenet::{
    loss_and_grad, GaussianPriorScore, ModelConfig, NoiseOracleScore, ScoreModel, TrainItem,
};
use sbmce::training::{train, TrainConfig};

const N_RX: usize = 16;
const N_TX: usize = 4;
const DIM: usize = N_RX * N_TX;

fn paper_schedule(gamma: f64) -> NoiseSchedule {
    NoiseSchedule::build(40.0, -22.0, 100, gamma).unwrap()
}

fn snr_grid() -> Vec<f64> {
    (0..15).map(|i| -15.0 + 2.5 * i as f64).collect()
}

fn desk_scenario() -> ScenarioConfig {
    ScenarioConfig {
        n_rx: N_RX,
        n_tx: N_TX,
        sector_halfangle_deg: 60.0,
        n_paths: 3,
        rician_k_db_range: (0.0, 10.0),
        angle_spread_deg: 5.0,
        seed: 2024,
    }
}

/// Shared trained-model fixture: one training run, one prior fit, one full
/// sweep reused by every criterion that needs the trained estimator.
struct TrainedFixture {
    report: EvalReport,
}

static TRAINED: OnceLock<TrainedFixture> = OnceLock::new();

fn trained() -> &'static TrainedFixture {
    TRAINED.get_or_init(|| {
        let scenario = desk_scenario();
        let (train_ds, val_ds, test_ds) = make_splits(&scenario, 16_000, 1_000, 400).unwrap();
        let sched = paper_schedule(1.0);
        let model_cfg = ModelConfig {
            n_rx: N_RX,
            n_tx: N_TX,
            n_layers: 4,
            ..ModelConfig::default()
        };
        let train_cfg = TrainConfig {
            batch_size: 128,
            max_epochs: 120,
            initial_lr: 2e-3,
            lr_decay_factor: 0.5,
            lr_patience: 5,
            patience: 12,
            n_restarts: 1,
            seed: 7,
            ..TrainConfig::default()
        };
        let (model, _) = train(
            &train_ds.to_domain(Domain::Beamspace).unwrap(),
            &val_ds.to_domain(Domain::Beamspace).unwrap(),
            &sched,
            &model_cfg,
            &train_cfg,
        )
        .unwrap();

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

        let sweep = SweepConfig {
            snr_grid_db: snr_grid(),
            estimators: vec![
                EstimatorSpec::Ls,
                EstimatorSpec::ScovLmmse,
                EstimatorSpec::GmmKron,
                EstimatorSpec::Sbm { delta: 1 },
                EstimatorSpec::Sbm { delta: 2 },
                EstimatorSpec::Sbm { delta: 4 },
                EstimatorSpec::Sbm { delta: 8 },
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
        TrainedFixture { report }
    })
}

fn row(report: &EvalReport, estimator: &str, snr_db: f64) -> f64 {
    report
        .rows
        .iter()
        .find(|r| r.estimator == estimator && (r.snr_db - snr_db).abs() < 1e-9)
        .unwrap_or_else(|| panic!("missing row {estimator} @ {snr_db} dB"))
        .nmse
}

#[test]
fn c01_schedule_exactness() {
    let s = paper_schedule(1.0);
    assert!((s.sigma_min() - 0.01).abs() < 1e-15, "sigma_min = {}", s.sigma_min());
    let sigma_max_ref = 12.589254117941675; // sqrt(10^2.2)
    assert!((s.sigma_max() - sigma_max_ref).abs() < 1e-12);
    assert!((s.sigma_max() - 12.6).abs() < 0.011 + 1e-3);
    println!(
        "ACCEPT c01 PASS: sigma_min = {}, sigma_max = {:.6}",
        s.sigma_min(),
        s.sigma_max()
    );
}

#[test]
fn c02_step_count_formula_exhaustive() {
    // run the actual estimator with a zero-noise oracle on 2x1 channels for
    // every (k_hat, delta) pair and count executed network evaluations
    let sched = paper_schedule(1.0);
    let truth = ChannelSample::from_vec(
        &Rng::from_seed(1).draw_circular_gaussian(2, 1.0).unwrap(),
        2,
        1,
    );
    let oracle = NoiseOracleScore {
        eps: CVec::zeros(2),
    };
    for k_hat in 1..=100usize {
        // an eta^2 hitting sigma_{k_hat}^2 exactly selects that step
        let eta_sq = sched.sigma(k_hat) * sched.sigma(k_hat);
        let obs = observe(&truth, &Pilot::Identity, eta_sq, &mut Rng::from_seed(2)).unwrap();
        for delta in 1..=100usize {
            let est = sbm_estimate(&obs, &oracle, &sched, delta).unwrap();
            assert_eq!(est.k_hat, k_hat);
            assert_eq!(est.nfe, k_hat.div_ceil(delta), "k={k_hat} d={delta}");
            assert_eq!(est.steps, est.nfe);
        }
        // the index sequence itself obeys the ceil law too
        for delta in 1..=100usize {
            assert_eq!(skip_indices(k_hat, delta).len(), k_hat.div_ceil(delta));
        }
    }
    println!("ACCEPT c02 PASS: NFE == ceil(k_hat/delta) for all 100x100 pairs");
}

#[test]
fn c03_gamma_monotonicity_on_grid() {
    let gammas = [0.2, 0.6, 1.0, 1.6];
    let scheds: Vec<NoiseSchedule> = gammas.iter().map(|&g| paper_schedule(g)).collect();
    for &snr in &snr_grid() {
        let eta_sq = 10f64.powf(-snr / 10.0);
        let ks: Vec<usize> = scheds.iter().map(|s| s.initial_step(eta_sq)).collect();
        for w in ks.windows(2) {
            assert!(w[0] <= w[1], "gamma ordering violated at {snr} dB: {ks:?}");
        }
    }
    println!("ACCEPT c03 PASS: k_hat(0.2) <= k_hat(0.6) <= k_hat(1.0) <= k_hat(1.6) pointwise");
}

#[test]
fn c04_ls_analytic_nmse() {
    let scenario = ScenarioConfig {
        seed: 4011,
        ..desk_scenario()
    };
    let (_, _, test_ds) = make_splits(&scenario, 2_000, 1, 2_000).unwrap();
    let cfg = SweepConfig {
        snr_grid_db: snr_grid(),
        estimators: vec![EstimatorSpec::Ls],
        m_test: 2_000,
        seed: 40,
        pilot: PilotChoice::Dft,
        timing: false,
    };
    let report = run_sweep(&cfg, &test_ds, &SweepAssets::default()).unwrap();
    let mut worst: f64 = 0.0;
    for r in &report.rows {
        let want = 10f64.powf(-r.snr_db / 10.0);
        let rel = (r.nmse / want - 1.0).abs();
        worst = worst.max(rel);
        assert!(rel < 0.03, "LS at {} dB: {} vs {want}", r.snr_db, r.nmse);
    }
    println!("ACCEPT c04 PASS: LS NMSE = 10^(-SNR/10) within 3% (worst {:.2}%)", worst * 100.0);
}

fn beamspace_covariance(cov: &CMat) -> CMat {
    let f_rx = unitary_dft(N_RX).unwrap();
    let f_tx = unitary_dft(N_TX).unwrap();
    let transform = |m: &CMat| -> CMat {
        let mut out = CMat::zeros(DIM, DIM);
        for j in 0..DIM {
            let col = m.column(j).into_owned();
            out.set_column(j, &kron_apply(&f_tx, &f_rx, &col).unwrap());
        }
        out
    };
    transform(&transform(cov).adjoint()).adjoint()
}

#[test]
fn c05_gaussian_prior_oracle_tracks_lmmse() {
    // analytic score in place of the network validates the reverse-process
    // plumbing with no training involved
    let mut rng = Rng::from_seed(50);
    let a = CMat::from_fn(DIM, DIM, |_, _| rng.draw_circular_gaussian(1, 1.0).unwrap()[0]);
    let mut cov = &a * a.adjoint();
    cov *= Complex64::new(DIM as f64 / cov.trace().re, 0.0);
    let chol = cov.clone().cholesky().unwrap().l();
    let oracle = GaussianPriorScore::new(beamspace_covariance(&cov));
    let sched = paper_schedule(1.0);

    for snr_db in [0.0, 10.0] {
        let eta_sq = 10f64.powf(-snr_db / 10.0);
        let solver = HermitianSolver::new(
            &(&cov + CMat::identity(DIM, DIM) * Complex64::new(eta_sq, 0.0)),
        )
        .unwrap();
        let closed_form =
            (cov.trace().re - (&cov * solver.solve_mat(&cov)).trace().re) / DIM as f64;
        let reps = 300;
        let mut err = 0.0;
        for _ in 0..reps {
            let h = ChannelSample::from_vec(
                &(&chol * rng.draw_circular_gaussian(DIM, 1.0).unwrap()),
                N_RX,
                N_TX,
            );
            let obs = observe(&h, &Pilot::Dft, eta_sq, &mut rng).unwrap();
            let est = sbm_estimate(&obs, &oracle, &sched, 1).unwrap();
            err += (&est.estimate.mat - &h.mat).norm_squared();
        }
        let nmse = err / (reps * DIM) as f64;
        let rel = (nmse / closed_form - 1.0).abs();
        assert!(
            rel < 0.10,
            "at {snr_db} dB: oracle-score NMSE {nmse:.5} vs closed form {closed_form:.5}"
        );
        println!(
            "ACCEPT c05 PASS: analytic-score NMSE {nmse:.5} within {:.1}% of closed-form {closed_form:.5} at {snr_db} dB",
            rel * 100.0
        );
    }
}

#[test]
fn c06_eps_oracle_single_step_exact() {
    let scenario = desk_scenario();
    let (_, _, test_ds) = make_splits(&scenario, 50, 1, 5).unwrap();
    let truth = &test_ds.samples[0];
    let sched = paper_schedule(1.0);
    let eta_sq = 0.8;
    let obs = observe(truth, &Pilot::Dft, eta_sq, &mut Rng::from_seed(60)).unwrap();
    let beam = Beamspace::new(N_RX, N_TX).unwrap();
    let sigma = sched.sigma(sched.initial_step(eta_sq));
    let h_beam = beam.forward(&truth.to_vec()).unwrap();
    let y_beam = beam.forward(&decorrelate(&obs).unwrap()).unwrap();
    let eps = (&y_beam - &h_beam) / Complex64::new(sigma, 0.0);
    let est = single_step_estimate(&obs, &NoiseOracleScore { eps }, &sched).unwrap();
    let rel = (&est.estimate.mat - &truth.mat).norm() / truth.mat.norm();
    assert!(rel < 1e-10, "relative error {rel}");
    assert_eq!(est.nfe, 1);
    println!("ACCEPT c06 PASS: true-noise single step recovers the channel to {rel:.2e}");
}

#[test]
fn c07_trained_model_ordering() {
    let fx = trained();
    // SBM (delta=1) strictly below SCov-LMMSE at every SNR in [-5, 15] dB
    for &snr in &snr_grid() {
        if !(-5.0..=15.0).contains(&snr) {
            continue;
        }
        let sbm = row(&fx.report, "sbm_d1", snr);
        let scov = row(&fx.report, "scov_lmmse", snr);
        assert!(
            sbm < scov,
            "SBM {sbm:.4} not below SCov {scov:.4} at {snr} dB"
        );
        // prior information cannot hurt below the LS floor (10% slack)
        let ls = row(&fx.report, "ls", snr);
        assert!(sbm <= 1.10 * ls, "SBM above LS floor at {snr} dB");
    }
    // GMM-kron sits between SCov-LMMSE and SBM at 0..10 dB
    for snr in [0.0, 2.5, 5.0, 7.5, 10.0] {
        let sbm = row(&fx.report, "sbm_d1", snr);
        let gmm = row(&fx.report, "gmm_kron", snr);
        let scov = row(&fx.report, "scov_lmmse", snr);
        assert!(
            sbm < gmm && gmm < scov,
            "ordering violated at {snr} dB: sbm {sbm:.4}, gmm_kron {gmm:.4}, scov {scov:.4}"
        );
    }
    println!(
        "ACCEPT c07 PASS: SBM < SCov-LMMSE on [-5,15] dB and SBM < GMM-kron < SCov on [0,10] dB \
         (at 0 dB: {:.4} < {:.4} < {:.4})",
        row(&fx.report, "sbm_d1", 0.0),
        row(&fx.report, "gmm_kron", 0.0),
        row(&fx.report, "scov_lmmse", 0.0)
    );
}

#[test]
fn c08_step_skipping_non_degradation() {
    let fx = trained();
    let mut worst: f64 = 0.0;
    for &snr in &snr_grid() {
        let base = row(&fx.report, "sbm_d1", snr);
        for id in ["sbm_d2", "sbm_d4", "sbm_d8", "sbm_d16", "sbm_dmax"] {
            let v = row(&fx.report, id, snr);
            worst = worst.max(v / base);
            assert!(
                v <= 1.10 * base,
                "{id} at {snr} dB: {v:.5} vs 1.10 * {base:.5}"
            );
        }
    }
    println!(
        "ACCEPT c08 PASS: NMSE(delta) <= 1.10 x NMSE(1) on the whole grid (worst ratio {worst:.3})"
    );
}

#[test]
fn c09_single_component_gmm_reduces_to_scov() {
    let scenario = ScenarioConfig {
        seed: 909,
        ..desk_scenario()
    };
    let (train_ds, _, test_ds) = make_splits(&scenario, 2_000, 1, 100).unwrap();
    let cov = sample_covariance(&train_ds);
    let prior = GmmPrior {
        weights: vec![1.0],
        means: vec![CVec::zeros(DIM)],
        covariances: vec![cov.clone()],
        structure: GmmStructure::Full,
    };
    let mut rng = Rng::from_seed(91);
    let mut worst: f64 = 0.0;
    for h in &test_ds.samples {
        let obs = observe(h, &Pilot::Dft, 0.5, &mut rng).unwrap();
        let a = gmm_estimate(&obs, &prior).unwrap();
        let b = scov_lmmse(&obs, &cov).unwrap();
        let rel = (&a.mat - &b.mat).norm() / b.mat.norm();
        worst = worst.max(rel);
        assert!(rel < 1e-6, "relative gap {rel}");
    }
    println!("ACCEPT c09 PASS: 1-component GMM == SCov-LMMSE on 100 observations (worst {worst:.2e})");
}

#[test]
fn c10_gradient_finite_difference_check() -> Result<()> {
    let cfg = ModelConfig {
        n_rx: 4,
        n_tx: 2,
        hidden_channels: 6,
        n_layers: 3,
        kernel_size: 3,
        embed_dim: 8,
        embed_channels: 4,
    };
    let mut rng = Rng::from_seed(101);
    let mut model = ScoreModel::init(cfg, &mut rng)?;
    let last = model.layers().len() - 1;
    model.layers_mut()[last].init_random(&mut rng);
    let items: Vec<TrainItem> = (0..4)
        .map(|i| TrainItem {
            h_k: rng.draw_circular_gaussian(8, 1.0).unwrap(),
            k: 1 + 7 * i,
            eps: rng.draw_circular_gaussian(8, 1.0).unwrap(),
        })
        .collect();
    let (_, grads) = loss_and_grad(&model, &items)?;
    let fd_step = 1e-5;
    let n_tensors = model.params().len();
    let mut worst: f64 = 0.0;
    for ti in 0..n_tensors {
        let len = model.params()[ti].len();
        let probes: Vec<usize> = (0..len).step_by((len / 6).max(1)).take(6).collect();
        for &pi in &probes {
            let mut mp = model.clone();
            mp.params_mut()[ti].data_mut()[pi] += fd_step;
            let (lp, _) = loss_and_grad(&mp, &items)?;
            let mut mm = model.clone();
            mm.params_mut()[ti].data_mut()[pi] -= fd_step;
            let (lm, _) = loss_and_grad(&mm, &items)?;
            let fd = (lp - lm) / (2.0 * fd_step);
            let an = grads.0[ti].data()[pi];
            let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-8);
            worst = worst.max(rel);
            assert!(rel < 1e-4, "tensor {ti}[{pi}]: fd {fd} vs analytic {an}");
        }
    }
    println!("ACCEPT c10 PASS: finite-difference gradient check on every tensor (worst rel {worst:.2e})");
    Ok(())
}

#[test]
fn c11_cmd_sweep_byte_determinism() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let cfg_text = format!(
        r#"
[scenario]
n_rx = 8
n_tx = 2
seed = 1100

[dataset]
m_train = 200
m_val = 10
m_test = 40

[schedule]
k_steps = 40

[sweep]
snr_grid_db = [-5.0, 5.0, 15.0]
estimators = ["ls", "scov_lmmse", "sbm"]
sbm_deltas = [1, 0]
m_test = 40
seed = 11

[gmm]
components = 2
kron_rx_components = 2
kron_tx_components = 2

[paths]
data_dir = "{data}"
model_path = "{model}"
report_path = "{report}"
"#,
        data = dir.join("data").display(),
        model = dir.join("model.sbmmdl").display(),
        report = dir.join("r1.csv").display(),
    );
    let cfg_path = dir.join("cfg.toml");
    std::fs::write(&cfg_path, cfg_text).unwrap();
    let mut cfg = RunConfig::from_path(&cfg_path).unwrap();
    cmd_gen_data(&cfg).unwrap();
    // an untrained checkpoint is enough to pin down the sbm code path
    let sched = NoiseSchedule::build(40.0, -22.0, 40, 1.0).unwrap();
    let model = ScoreModel::init(
        ModelConfig {
            n_rx: 8,
            n_tx: 2,
            hidden_channels: 8,
            n_layers: 2,
            ..ModelConfig::default()
        },
        &mut Rng::from_seed(5),
    )
    .unwrap();
    save_model(&model, &sched, &cfg.paths.model_path).unwrap();

    cmd_sweep(&cfg).unwrap();
    let first = std::fs::read(dir.join("r1.csv")).unwrap();
    cfg.paths.report_path = dir.join("r2.csv");
    cmd_sweep(&cfg).unwrap();
    let second = std::fs::read(dir.join("r2.csv")).unwrap();
    assert_eq!(first, second, "sweep CSVs differ between identical runs");
    assert!(!first.is_empty());
    println!(
        "ACCEPT c11 PASS: cmd_sweep emitted byte-identical CSVs ({} bytes) across two runs",
        first.len()
    );
}
