//! Validates the reverse-process plumbing without any training: for a
//! Gaussian channel prior the score is available in closed form, and the
//! full denoising loop must land on the LMMSE estimate (the conditional
//! mean) up to discretization error.
//!
//! ```bash
//! cargo run --release --example gaussian_score_oracle
//! ```

use num_complex::Complex64;

use sbmce::channel::ChannelSample;
use sbmce::estimators::{observe, sbm_estimate, scov_lmmse, Pilot};
use sbmce::numerics::{kron_apply, unitary_dft, CMat, HermitianSolver, Rng};
use sbmce::schedule::NoiseSchedule;
use sbmce::scorenet::GaussianPriorScore;

const N_RX: usize = 16;
const N_TX: usize = 4;
const DIM: usize = N_RX * N_TX;

fn main() {
    // a random PSD prior covariance with tr C = N_rx * N_tx
    let mut rng = Rng::from_seed(11);
    let a = CMat::from_fn(DIM, DIM, |_, _| rng.draw_circular_gaussian(1, 1.0).unwrap()[0]);
    let mut cov = &a * a.adjoint();
    cov *= Complex64::new(DIM as f64 / cov.trace().re, 0.0);
    let chol = cov.clone().cholesky().unwrap().l();

    // beamspace covariance (F_tx ⊗ F_rx) C (F_tx ⊗ F_rx)^H, column by column
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
    let cov_beam = transform(&transform(&cov).adjoint()).adjoint();
    let oracle = GaussianPriorScore::new(cov_beam);

    let sched = NoiseSchedule::build(40.0, -22.0, 100, 1.0).unwrap();
    println!("{:>8} {:>12} {:>12} {:>12} {:>6}", "SNR[dB]", "SBM(oracle)", "LMMSE", "closed-form", "k_hat");
    for snr_db in [0.0, 10.0] {
        let eta_sq = 10f64.powf(-snr_db / 10.0);

        // closed-form MMSE: tr(C - C (C + eta^2 I)^{-1} C) / n
        let solver =
            HermitianSolver::new(&(&cov + CMat::identity(DIM, DIM) * Complex64::new(eta_sq, 0.0)))
                .unwrap();
        let analytic = (cov.trace().re - (&cov * solver.solve_mat(&cov)).trace().re) / DIM as f64;

        let mut err_sbm = 0.0;
        let mut err_lmmse = 0.0;
        let mut k_hat = 0;
        let reps = 300;
        for _ in 0..reps {
            let h = ChannelSample::from_vec(
                &(&chol * rng.draw_circular_gaussian(DIM, 1.0).unwrap()),
                N_RX,
                N_TX,
            );
            let obs = observe(&h, &Pilot::Dft, eta_sq, &mut rng).unwrap();
            let est = sbm_estimate(&obs, &oracle, &sched, 1).unwrap();
            k_hat = est.k_hat;
            err_sbm += (&est.estimate.mat - &h.mat).norm_squared();
            err_lmmse += (&scov_lmmse(&obs, &cov).unwrap().mat - &h.mat).norm_squared();
        }
        let n = (reps * DIM) as f64;
        println!(
            "{snr_db:>8.1} {:>12.5} {:>12.5} {:>12.5} {k_hat:>6}",
            err_sbm / n,
            err_lmmse / n,
            analytic
        );
    }
    println!();
    println!("the analytic-score loop tracks the conditional mean; the gap is SDE discretization");
}
