//! Noise-schedule design: how the steepness parameter gamma shapes the
//! sigma sequence and the number of denoising steps an observation needs.
//!
//! ```bash
//! cargo run --release --example noise_schedule
//! ```

use sbmce::eval::k_hat_table;
use sbmce::schedule::{skip_indices, NoiseSchedule};

fn main() {
    let gammas = [0.2, 0.6, 1.0, 1.6];
    let scheds: Vec<NoiseSchedule> = gammas
        .iter()
        .map(|&g| NoiseSchedule::build(40.0, -22.0, 100, g).unwrap())
        .collect();

    println!("sigma endpoints: min {:.4}, max {:.4}", scheds[0].sigma_min(), scheds[0].sigma_max());
    println!();
    println!("sigma_k for selected steps:");
    println!("{:>5} {:>12} {:>12} {:>12} {:>12}", "k", "g=0.2", "g=0.6", "g=1.0", "g=1.6");
    for k in [1, 10, 25, 50, 75, 100] {
        print!("{k:>5}");
        for s in &scheds {
            print!(" {:>12.5}", s.sigma(k));
        }
        println!();
    }

    // initial denoising step over the evaluation SNR grid: smaller gamma
    // reaches a given noise level earlier, so fewer steps are needed
    let grid: Vec<f64> = (0..15).map(|i| -15.0 + 2.5 * i as f64).collect();
    println!();
    println!("initial step k_hat over the SNR grid:");
    println!("{:>8} {:>8} {:>8} {:>8} {:>8}", "SNR[dB]", "g=0.2", "g=0.6", "g=1.0", "g=1.6");
    let tables: Vec<_> = scheds.iter().map(|s| k_hat_table(s, &grid)).collect();
    for (i, &snr) in grid.iter().enumerate() {
        print!("{snr:>8.1}");
        for t in &tables {
            print!(" {:>8}", t[i].1);
        }
        println!();
    }

    // step skipping: executed steps shrink by ceil(k_hat / delta)
    println!();
    println!("skip-index sequences from k_hat = 65 (0 dB under gamma = 1):");
    for delta in [1usize, 4, 16, 100] {
        let idx = skip_indices(65, delta);
        let shown: Vec<String> = idx.iter().take(6).map(|k| k.to_string()).collect();
        let suffix = if idx.len() > 6 { ", ..." } else { "" };
        println!(
            "  delta {delta:>3}: {:>2} steps  [{}{suffix}]",
            idx.len(),
            shown.join(", ")
        );
    }
}
