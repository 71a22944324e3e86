//! NMSE evaluation harness: SNR sweeps over all estimators, step-count
//! statistics, per-step denoising traces, and CSV emission.
//!
//! At every SNR the same seeded observations feed every estimator, so the
//! per-row comparison is paired. Noise for sample `j` at grid index `i` is
//! drawn from a substream keyed by `(seed, i, j)` — rerunning a sweep with
//! the same config reproduces the report byte for byte.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelDataset, ChannelSample, Domain};
use crate::error::{Error, Result};
use crate::estimators::gmm::{GmmFilterBank, GmmPrior};
use crate::estimators::{
    decorrelate, ls_estimate, observe, LmmseFilter, Pilot, PilotObservation,
};
use crate::numerics::{mix_labels, Beamspace, CMat, CVec, Rng};
use crate::schedule::{skip_indices, NoiseSchedule};
use crate::scorenet::{ScoreModel, ScoreSource};

/// `NMSE = 1/(N_rx N_tx M) * sum_m ||h_m - hhat_m||^2`
pub fn nmse(truth: &[ChannelSample], est: &[ChannelSample]) -> Result<f64> {
    if truth.len() != est.len() || truth.is_empty() {
        return Err(Error::Dimension(format!(
            "nmse: got {} truth and {} estimate samples",
            truth.len(),
            est.len()
        )));
    }
    let (n_rx, n_tx) = (truth[0].n_rx(), truth[0].n_tx());
    let mut acc = 0.0;
    for (t, e) in truth.iter().zip(est) {
        if e.n_rx() != n_rx || e.n_tx() != n_tx {
            return Err(Error::Dimension("nmse: sample dims differ".into()));
        }
        acc += (&t.mat - &e.mat).norm_squared();
    }
    Ok(acc / (n_rx * n_tx * truth.len()) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PilotChoice {
    Identity,
    Dft,
}

impl PilotChoice {
    pub fn to_pilot(self) -> Pilot {
        match self {
            PilotChoice::Identity => Pilot::Identity,
            PilotChoice::Dft => Pilot::Dft,
        }
    }
}

/// One estimator entry in a sweep. `Sbm { delta: 0 }` denotes
/// `delta = delta_max = K` (the single-step denoiser).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorSpec {
    Ls,
    ScovLmmse,
    Gmm,
    GmmKron,
    Sbm { delta: usize },
}

impl EstimatorSpec {
    pub fn id(&self) -> String {
        match self {
            EstimatorSpec::Ls => "ls".into(),
            EstimatorSpec::ScovLmmse => "scov_lmmse".into(),
            EstimatorSpec::Gmm => "gmm".into(),
            EstimatorSpec::GmmKron => "gmm_kron".into(),
            EstimatorSpec::Sbm { delta: 0 } => "sbm_dmax".into(),
            EstimatorSpec::Sbm { delta } => format!("sbm_d{delta}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub snr_grid_db: Vec<f64>,
    pub estimators: Vec<EstimatorSpec>,
    pub m_test: usize,
    pub seed: u64,
    pub pilot: PilotChoice,
    /// Report per-estimate wall time. Off by default so sweep output is
    /// byte-deterministic; timings are inherently run-dependent.
    pub timing: bool,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.snr_grid_db.is_empty() {
            return Err(Error::Parameter("empty SNR grid".into()));
        }
        if self.m_test < 1 {
            return Err(Error::Parameter("m_test must be >= 1".into()));
        }
        if self.estimators.is_empty() {
            return Err(Error::Parameter("no estimators configured".into()));
        }
        Ok(())
    }
}

/// Fitted assets the sweep draws on; only what the configured estimators
/// need must be present.
#[derive(Default)]
pub struct SweepAssets {
    pub model: Option<(ScoreModel, NoiseSchedule)>,
    pub scov: Option<CMat>,
    pub gmm: Option<GmmPrior>,
    pub gmm_kron: Option<GmmPrior>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub snr_db: f64,
    pub estimator: String,
    pub nmse: f64,
    pub mean_k_hat: f64,
    pub mean_steps: f64,
    pub mean_nfe: f64,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
}

impl EvalReport {
    pub fn sorted(mut self) -> Self {
        self.rows.sort_by(|a, b| {
            a.estimator
                .cmp(&b.estimator)
                .then(a.snr_db.partial_cmp(&b.snr_db).unwrap())
        });
        self
    }
}

struct PassResult {
    estimates: Vec<ChannelSample>,
    k_hat_sum: f64,
    steps_sum: f64,
    nfe_sum: f64,
}

/// Batch width for the step-synchronized denoising loop; bounds transient
/// patch-matrix memory and feeds the worker pool.
const SBM_BATCH: usize = 64;

/// All observations at one SNR share `eta_sq`, so every sample enters the
/// denoising loop at the same initial step and the whole test set can walk
/// the step sequence together with batched network evaluations. Semantics
/// match per-sample [`sbm_estimate`].
fn sbm_pass_batched(
    model: &ScoreModel,
    sched: &NoiseSchedule,
    delta: usize,
    observations: &[PilotObservation],
    eta_sq: f64,
) -> Result<PassResult> {
    let (n_rx, n_tx) = (observations[0].n_rx, observations[0].n_tx);
    let beam = Beamspace::new(n_rx, n_tx)?;
    let mut hs: Vec<CVec> = observations
        .par_iter()
        .map(|obs| beam.forward(&decorrelate(obs).expect("dims validated")).expect("dims"))
        .collect();
    let k_hat = sched.initial_step(eta_sq);
    let indices = skip_indices(k_hat, delta);
    let last = indices.len() - 1;
    for (pos, &k) in indices.iter().enumerate() {
        let sigma_k = sched.sigma(k);
        let sigma_target = if pos == last { 0.0 } else { sched.sigma(k - delta) };
        let step = num_complex::Complex64::new(sigma_k * sigma_k - sigma_target * sigma_target, 0.0);
        let scores: Vec<Vec<CVec>> = hs
            .par_chunks(SBM_BATCH)
            .map(|chunk| model.score_batch(chunk, k, sigma_k).expect("validated inputs"))
            .collect();
        for (h, s) in hs.iter_mut().zip(scores.into_iter().flatten()) {
            *h += s * step;
        }
    }
    let estimates: Vec<ChannelSample> = hs
        .par_iter()
        .map(|h| ChannelSample::from_vec(&beam.inverse(h).expect("dims"), n_rx, n_tx))
        .collect();
    let m = observations.len() as f64;
    Ok(PassResult {
        estimates,
        k_hat_sum: k_hat as f64 * m,
        steps_sum: indices.len() as f64 * m,
        nfe_sum: indices.len() as f64 * m,
    })
}

fn run_estimator_pass(
    spec: &EstimatorSpec,
    observations: &[PilotObservation],
    eta_sq: f64,
    assets: &SweepAssets,
) -> Result<PassResult> {
    let m = observations.len();
    let mut result = PassResult {
        estimates: Vec::with_capacity(m),
        k_hat_sum: 0.0,
        steps_sum: 0.0,
        nfe_sum: 0.0,
    };
    match spec {
        EstimatorSpec::Ls => {
            result.estimates = observations
                .par_iter()
                .map(|obs| ls_estimate(obs).expect("dims validated"))
                .collect();
        }
        EstimatorSpec::ScovLmmse => {
            let cov = assets
                .scov
                .as_ref()
                .ok_or_else(|| Error::Parameter("sweep: scov_lmmse needs a covariance".into()))?;
            let filter = LmmseFilter::new(cov, eta_sq)?;
            result.estimates = observations
                .par_iter()
                .map(|obs| {
                    let v = filter.apply(&decorrelate(obs).expect("dims validated"));
                    ChannelSample::from_vec(&v, obs.n_rx, obs.n_tx)
                })
                .collect();
        }
        EstimatorSpec::Gmm | EstimatorSpec::GmmKron => {
            let prior = match spec {
                EstimatorSpec::Gmm => assets.gmm.as_ref(),
                _ => assets.gmm_kron.as_ref(),
            }
            .ok_or_else(|| Error::Parameter(format!("sweep: {} needs a fitted prior", spec.id())))?;
            let bank = GmmFilterBank::new(prior, eta_sq)?;
            result.estimates = observations
                .par_iter()
                .map(|obs| {
                    let y = decorrelate(obs).expect("dims validated");
                    ChannelSample::from_vec(&bank.estimate_decorrelated(&y), obs.n_rx, obs.n_tx)
                })
                .collect();
        }
        EstimatorSpec::Sbm { delta } => {
            let (model, sched) = assets
                .model
                .as_ref()
                .ok_or_else(|| Error::Parameter("sweep: sbm rows need a model checkpoint".into()))?;
            let d = if *delta == 0 { sched.len() } else { *delta };
            if d > sched.len() {
                return Err(Error::Parameter(format!(
                    "sweep: delta {d} exceeds schedule length {}",
                    sched.len()
                )));
            }
            result = sbm_pass_batched(model, sched, d, observations, eta_sq)?;
        }
    }
    Ok(result)
}

/// Runs the full sweep: at each grid SNR, fresh seeded observations of the
/// first `m_test` test samples are estimated by every configured estimator.
pub fn run_sweep(
    cfg: &SweepConfig,
    test_ds: &ChannelDataset,
    assets: &SweepAssets,
) -> Result<EvalReport> {
    cfg.validate()?;
    if test_ds.domain != Domain::Spatial {
        return Err(Error::Parameter("sweep expects a spatial-domain test set".into()));
    }
    if cfg.m_test > test_ds.len() {
        return Err(Error::Parameter(format!(
            "m_test = {} exceeds test set size {}",
            cfg.m_test,
            test_ds.len()
        )));
    }
    let truth = &test_ds.samples[..cfg.m_test];
    let pilot = cfg.pilot.to_pilot();
    let mut report = EvalReport::default();

    for (snr_idx, &snr_db) in cfg.snr_grid_db.iter().enumerate() {
        let eta_sq = 10f64.powf(-snr_db / 10.0);
        let observations: Vec<PilotObservation> = truth
            .par_iter()
            .enumerate()
            .map(|(j, h)| {
                let mut rng = Rng::from_seed(mix_labels(cfg.seed, snr_idx as u64, j as u64));
                observe(h, &pilot, eta_sq, &mut rng).expect("validated inputs")
            })
            .collect();
        for spec in &cfg.estimators {
            let t0 = Instant::now();
            let pass = run_estimator_pass(spec, &observations, eta_sq, assets)?;
            let elapsed = t0.elapsed().as_secs_f64();
            let m = cfg.m_test as f64;
            report.rows.push(EvalRow {
                snr_db,
                estimator: spec.id(),
                nmse: nmse(truth, &pass.estimates)?,
                mean_k_hat: pass.k_hat_sum / m,
                mean_steps: pass.steps_sum / m,
                mean_nfe: pass.nfe_sum / m,
                wall_time_s: if cfg.timing { elapsed / m } else { 0.0 },
            });
        }
    }
    Ok(report.sorted())
}

/// Initial-step table over an SNR grid for one schedule (step-count curves
/// without any model involvement).
pub fn k_hat_table(sched: &NoiseSchedule, snr_grid_db: &[f64]) -> Vec<(f64, usize)> {
    snr_grid_db
        .iter()
        .map(|&snr| (snr, sched.initial_step(10f64.powf(-snr / 10.0))))
        .collect()
}

/// Per-step NMSE trace of the full-resolution (`delta = 1`) denoising loop
/// on one observation. The first entry is the decorrelated-observation
/// (LS) error at index `k_hat`; each following entry is the error after
/// the update at step `k`, indexed `k - 1`, down to the final estimate at
/// index 0. Length is `k_hat + 1`.
pub fn per_step_trace<S: ScoreSource + ?Sized>(
    obs: &PilotObservation,
    truth: &ChannelSample,
    score: &S,
    sched: &NoiseSchedule,
) -> Result<Vec<(usize, f64)>> {
    let beam = Beamspace::new(obs.n_rx, obs.n_tx)?;
    let n = (obs.n_rx * obs.n_tx) as f64;
    let mut h = beam.forward(&decorrelate(obs)?)?;
    let k_hat = sched.initial_step(obs.eta_sq);
    let mut trace = Vec::with_capacity(k_hat + 1);
    let err_of = |h_beam: &crate::numerics::CVec| -> Result<f64> {
        let spatial = beam.inverse(h_beam)?;
        let est = ChannelSample::from_vec(&spatial, obs.n_rx, obs.n_tx);
        Ok((&truth.mat - &est.mat).norm_squared() / n)
    };
    trace.push((k_hat, err_of(&h)?));
    for k in (1..=k_hat).rev() {
        let sigma_k = sched.sigma(k);
        let sigma_prev = sched.sigma(k - 1);
        let s = score.score(&h, k, sigma_k)?;
        h += s * num_complex::Complex64::new(sigma_k * sigma_k - sigma_prev * sigma_prev, 0.0);
        trace.push((k - 1, err_of(&h)?));
    }
    Ok(trace)
}

/// Writes the report as CSV with the fixed header
/// `snr_db,estimator,nmse,mean_k_hat,mean_steps,mean_nfe,wall_time_s`,
/// rows sorted by (estimator, snr_db).
pub fn emit_csv(report: &EvalReport, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(render_csv(report).as_bytes())?;
    Ok(())
}

pub fn render_csv(report: &EvalReport) -> String {
    let mut out = String::from("snr_db,estimator,nmse,mean_k_hat,mean_steps,mean_nfe,wall_time_s\n");
    let sorted = report.clone().sorted();
    for r in &sorted.rows {
        out.push_str(&format!(
            "{},{},{:.10e},{:.4},{:.4},{:.4},{:.9}\n",
            r.snr_db, r.estimator, r.nmse, r.mean_k_hat, r.mean_steps, r.mean_nfe, r.wall_time_s
        ));
    }
    out
}
