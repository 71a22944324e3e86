//! Synthetic channel generation: draws a dataset from the geometric
//! cluster model, normalizes it, and shows the beamspace energy
//! concentration that motivates training in that domain.
//!
//! ```bash
//! cargo run --release --example generate_dataset
//! ```

use sbmce::channel::{load_dataset, make_splits, save_dataset, Domain, ScenarioConfig};

fn main() {
    let scenario = ScenarioConfig {
        n_rx: 16,
        n_tx: 4,
        sector_halfangle_deg: 60.0,
        n_paths: 3,
        rician_k_db_range: (0.0, 10.0),
        angle_spread_deg: 5.0,
        seed: 2024,
    };
    let (train, val, test) = make_splits(&scenario, 2000, 200, 200).unwrap();
    println!(
        "splits: {} train / {} val / {} test ({}x{} channels)",
        train.len(),
        val.len(),
        test.len(),
        train.n_rx,
        train.n_tx
    );
    println!(
        "normalization: mean ||h||^2 = {:.6} (target {})",
        train.mean_energy(),
        train.n_rx * train.n_tx
    );

    // beamspace compression: sorted per-entry energy share, averaged
    let beam = train.to_domain(Domain::Beamspace).unwrap();
    let n = beam.n_rx * beam.n_tx;
    let mut avg_sorted = vec![0.0f64; n];
    for s in &beam.samples {
        let mut mags: Vec<f64> = s.mat.iter().map(|z| z.norm_sqr()).collect();
        let total: f64 = mags.iter().sum();
        mags.sort_by(|a, b| b.partial_cmp(a).unwrap());
        for (acc, m) in avg_sorted.iter_mut().zip(&mags) {
            *acc += m / total;
        }
    }
    avg_sorted.iter_mut().for_each(|v| *v /= beam.len() as f64);
    let mut cum = 0.0;
    println!();
    println!("beamspace energy concentration (mean over samples):");
    for (i, v) in avg_sorted.iter().enumerate() {
        cum += v;
        if [0, 2, 5, 9, 15, 31, 63].contains(&i) {
            println!("  top {:>2} of {} entries: {:>5.1}% of energy", i + 1, n, cum * 100.0);
        }
    }

    let dir = std::env::temp_dir().join("sbmce_example_data");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("train.sbmch");
    save_dataset(&train, &path).unwrap();
    let loaded = load_dataset(&path).unwrap();
    println!();
    println!(
        "round trip via {}: {} samples, bitwise equal: {}",
        path.display(),
        loaded.len(),
        loaded
            .samples
            .iter()
            .zip(&train.samples)
            .all(|(a, b)| a.mat == b.mat)
    );
}
