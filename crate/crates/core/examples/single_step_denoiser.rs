//! The single-step denoiser as an inverse of the forward noising kernel:
//! if the network output were the exact noise realization, one update
//! `h - sigma_khat * eps` would recover the channel perfectly. This example
//! plumbs that oracle through the estimator and shows the exact recovery,
//! then contrasts it with the zero-prediction baseline.
//!
//! ```bash
//! cargo run --release --example single_step_denoiser
//! ```

use num_complex::Complex64;

use sbmce::channel::{make_splits, ScenarioConfig};
use sbmce::estimators::{decorrelate, ls_estimate, observe, single_step_estimate, Pilot};
use sbmce::numerics::{Beamspace, CVec, Rng};
use sbmce::schedule::NoiseSchedule;
use sbmce::scorenet::NoiseOracleScore;

fn main() {
    let scenario = ScenarioConfig {
        n_rx: 16,
        n_tx: 4,
        seed: 5,
        ..ScenarioConfig::default()
    };
    let (_, _, test) = make_splits(&scenario, 100, 1, 10).unwrap();
    let truth = &test.samples[0];
    let sched = NoiseSchedule::build(40.0, -22.0, 100, 1.0).unwrap();
    let beam = Beamspace::new(16, 4).unwrap();

    println!("{:>8} {:>6} {:>14} {:>14}", "SNR[dB]", "k_hat", "LS err", "oracle err");
    for snr_db in [-10.0, 0.0, 10.0] {
        let eta_sq = 10f64.powf(-snr_db / 10.0);
        let mut rng = Rng::from_seed(42);
        let obs = observe(truth, &Pilot::Dft, eta_sq, &mut rng).unwrap();

        // the true noise in beamspace, rescaled to the matched sigma level
        let k_hat = sched.initial_step(eta_sq);
        let sigma = sched.sigma(k_hat);
        let h_beam = beam.forward(&truth.to_vec()).unwrap();
        let y_beam = beam.forward(&decorrelate(&obs).unwrap()).unwrap();
        let eps: CVec = (&y_beam - &h_beam) / Complex64::new(sigma, 0.0);

        let oracle = NoiseOracleScore { eps };
        let est = single_step_estimate(&obs, &oracle, &sched).unwrap();
        assert_eq!(est.nfe, 1);

        let ls = ls_estimate(&obs).unwrap();
        let sample_nmse = |m: &sbmce::channel::ChannelSample| {
            (&truth.mat - &m.mat).norm_squared() / 64.0
        };
        println!(
            "{snr_db:>8.1} {k_hat:>6} {:>14.6e} {:>14.6e}",
            sample_nmse(&ls),
            sample_nmse(&est.estimate)
        );
    }
    println!();
    println!("one network evaluation, exact recovery with the true noise: the");
    println!("estimator's accuracy is bounded only by the noise prediction quality");
}
