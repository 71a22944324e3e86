//! Discretized variance-exploding noise schedule.
//!
//! The schedule is a power-exponentiated geometric sequence
//! `sigma_k = sigma_min * (sigma_max/sigma_min)^(((k-1)/(K-1))^gamma)`
//! for `k = 1..K`, with endpoints derived from the SNR range the denoiser
//! should cover via `sigma = sqrt(1/SNR)` (linear scale). `gamma` controls
//! the steepness: `gamma < 1` grows faster and reaches a given noise level
//! at a smaller step index.

use crate::error::{Error, Result};

/// Strictly increasing noise levels `sigma_1..sigma_K` plus construction
/// metadata. Indexing is 1-based to match the step indices used everywhere;
/// `sigma(0)` is defined as 0 for the final denoising update.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    sigmas: Vec<f64>,
    gamma: f64,
    sigma_min: f64,
    sigma_max: f64,
}

impl NoiseSchedule {
    /// Builds the schedule for a given SNR coverage (dB) and step count.
    ///
    /// `sigma_min = sqrt(1/snr_max)` and `sigma_max = sqrt(1/snr_min)` in
    /// linear scale, so the highest covered SNR maps to the smallest noise
    /// level.
    pub fn build(snr_max_db: f64, snr_min_db: f64, k_steps: usize, gamma: f64) -> Result<Self> {
        if k_steps < 2 {
            return Err(Error::Parameter(format!(
                "schedule needs K >= 2, got {k_steps}"
            )));
        }
        if !(gamma > 0.0) {
            return Err(Error::Parameter(format!("gamma must be > 0, got {gamma}")));
        }
        if !(snr_max_db > snr_min_db) {
            return Err(Error::Parameter(format!(
                "snr_max_db ({snr_max_db}) must exceed snr_min_db ({snr_min_db})"
            )));
        }
        let sigma_min = (1.0 / 10f64.powf(snr_max_db / 10.0)).sqrt();
        let sigma_max = (1.0 / 10f64.powf(snr_min_db / 10.0)).sqrt();
        let ratio = sigma_max / sigma_min;
        let k = k_steps;
        let sigmas: Vec<f64> = (1..=k)
            .map(|i| {
                // pin the endpoints so sigma_1/sigma_K equal the SNR-derived
                // bounds exactly rather than up to powf rounding
                if i == 1 {
                    sigma_min
                } else if i == k {
                    sigma_max
                } else {
                    let frac = (i - 1) as f64 / (k - 1) as f64;
                    sigma_min * ratio.powf(frac.powf(gamma))
                }
            })
            .collect();
        debug_assert!(sigmas.windows(2).all(|w| w[0] < w[1]));
        Ok(Self {
            sigmas,
            gamma,
            sigma_min,
            sigma_max,
        })
    }

    /// Rebuilds from stored raw values (checkpoint loading). Validates
    /// monotonicity instead of recomputing from the formula so the round
    /// trip stays bit-exact.
    pub fn from_raw(sigmas: Vec<f64>, gamma: f64, sigma_min: f64, sigma_max: f64) -> Result<Self> {
        if sigmas.len() < 2 {
            return Err(Error::Format("schedule: needs at least 2 sigmas".into()));
        }
        if !sigmas.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Format("schedule: sigmas not strictly increasing".into()));
        }
        if (sigmas[0] - sigma_min).abs() > 1e-12 || (sigmas[sigmas.len() - 1] - sigma_max).abs() > 1e-12
        {
            return Err(Error::Format("schedule: endpoint metadata mismatch".into()));
        }
        Ok(Self {
            sigmas,
            gamma,
            sigma_min,
            sigma_max,
        })
    }

    /// Number of discretization steps `K`.
    pub fn len(&self) -> usize {
        self.sigmas.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `sigma_k` for `k in 0..=K`; `sigma_0 = 0` by convention.
    pub fn sigma(&self, k: usize) -> f64 {
        if k == 0 {
            0.0
        } else {
            self.sigmas[k - 1]
        }
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn sigma_min(&self) -> f64 {
        self.sigma_min
    }

    pub fn sigma_max(&self) -> f64 {
        self.sigma_max
    }

    /// Initial denoising step for an observation noise variance `eta_sq`:
    /// the `k` minimizing `|eta_sq - sigma_k^2|`. Ties break toward the
    /// smaller index (fewer steps); values outside the covered range clamp
    /// to 1 or K.
    pub fn initial_step(&self, eta_sq: f64) -> usize {
        let mut best_k = 1;
        let mut best = f64::INFINITY;
        for (i, s) in self.sigmas.iter().enumerate() {
            let d = (eta_sq - s * s).abs();
            if d < best {
                best = d;
                best_k = i + 1;
            }
        }
        best_k
    }
}

/// Descending step indices visited by the accelerated denoising loop:
/// `k_hat, k_hat - delta, k_hat - 2*delta, ...` while positive. The length
/// is always `ceil(k_hat / delta)`; the final update targets `sigma = 0`.
pub fn skip_indices(k_hat: usize, delta: usize) -> Vec<usize> {
    assert!(delta >= 1, "delta must be >= 1");
    assert!(k_hat >= 1, "k_hat must be >= 1");
    let mut out = Vec::with_capacity(k_hat.div_ceil(delta));
    let mut k = k_hat;
    loop {
        out.push(k);
        if k <= delta {
            break;
        }
        k -= delta;
    }
    out
}
