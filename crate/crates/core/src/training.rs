//! Denoising-score-matching training loop with validation-based model
//! selection.
//!
//! Each epoch draws, per sample: a uniform step index `k`, a unit circular
//! Gaussian noise realization `z`, and the diffused input
//! `h_k = h_0 + sigma_k * z`; the network is fit to predict `z` (the
//! surrogate score is `-z / sigma_k`). Several independently seeded
//! restarts run to completion and the model with the lowest validation
//! loss wins. Validation noise is drawn from a fixed per-run seed so the
//! loss is comparable across epochs.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelDataset, Domain};
use crate::error::{Error, Result};
use crate::numerics::Rng;
use crate::schedule::NoiseSchedule;
use crate::scorenet::{
    loss_and_grad, AdamWConfig, ModelConfig, OptimizerState, ScoreModel, TrainItem,
};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub initial_lr: f64,
    /// Plateau decay: multiply the LR by this factor after `lr_patience`
    /// epochs without validation improvement.
    pub lr_decay_factor: f64,
    pub lr_patience: usize,
    /// Early stop after this many epochs without validation improvement.
    pub patience: usize,
    pub n_restarts: usize,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 128,
            max_epochs: 200,
            initial_lr: 1e-3,
            lr_decay_factor: 0.5,
            lr_patience: 3,
            patience: 10,
            n_restarts: 5,
            weight_decay: 0.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 1
            || self.max_epochs < 1
            || self.patience < 1
            || self.lr_patience < 1
            || self.n_restarts < 1
        {
            return Err(Error::Parameter("training counts must be >= 1".into()));
        }
        if !(self.initial_lr > 0.0) {
            return Err(Error::Parameter("initial_lr must be > 0".into()));
        }
        if !(self.lr_decay_factor > 0.0 && self.lr_decay_factor <= 1.0) {
            return Err(Error::Parameter("lr_decay_factor must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochRow {
    pub restart: usize,
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub rows: Vec<EpochRow>,
    pub selected_restart: usize,
    pub best_val_loss: f64,
    pub wall_time_s: f64,
}

impl TrainReport {
    /// CSV with header `epoch,train_loss,val_loss,restart`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss,restart\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{:.10e},{:.10e},{}\n",
                r.epoch, r.train_loss, r.val_loss, r.restart
            ));
        }
        out
    }
}

fn require_beamspace(ds: &ChannelDataset, what: &str) -> Result<()> {
    if ds.domain != Domain::Beamspace {
        return Err(Error::Parameter(format!(
            "{what} must be in the beamspace domain; training on spatial channels silently degrades"
        )));
    }
    Ok(())
}

/// Draws the DSM triple for one sample: `(h_k, k, z)`.
fn draw_item(h0: &crate::numerics::CVec, sched: &NoiseSchedule, rng: &mut Rng) -> TrainItem {
    let k = rng.uniform_step(sched.len());
    let sigma = sched.sigma(k);
    let z = rng
        .draw_circular_gaussian(h0.len(), 1.0)
        .expect("unit variance");
    let h_k = h0 + &z * num_complex::Complex64::new(sigma, 0.0);
    debug_assert!({
        // surrogate-score identity: s = -z/sigma_k reproduces z exactly
        let s = &z * num_complex::Complex64::new(-1.0 / sigma, 0.0);
        (s * num_complex::Complex64::new(-sigma, 0.0) - &z).norm() < 1e-12 * (1.0 + z.norm())
    });
    TrainItem { h_k, k, eps: z }
}

/// One pass over the shuffled training set. Returns the mean per-batch loss.
pub fn dsm_epoch(
    model: &mut ScoreModel,
    opt: &mut OptimizerState,
    train: &ChannelDataset,
    sched: &NoiseSchedule,
    batch: usize,
    rng: &mut Rng,
) -> Result<f64> {
    require_beamspace(train, "training dataset")?;
    if batch < 1 {
        return Err(Error::Parameter("batch size must be >= 1".into()));
    }
    let mut order: Vec<usize> = (0..train.len()).collect();
    rng.shuffle(&mut order);
    let mut loss_sum = 0.0;
    let mut n_batches = 0usize;
    for chunk in order.chunks(batch) {
        let items: Vec<TrainItem> = chunk
            .iter()
            .map(|&i| draw_item(&train.samples[i].to_vec(), sched, rng))
            .collect();
        let (loss, grads) = loss_and_grad(model, &items)?;
        let mut params = model.params_mut();
        opt.apply(&mut params, &grads.0)?;
        loss_sum += loss;
        n_batches += 1;
    }
    Ok(loss_sum / n_batches as f64)
}

/// DSM loss on held-out data with noise drawn from `seed` (fixed across
/// epochs so the metric reflects the model, not the noise draw).
pub fn val_loss(
    model: &ScoreModel,
    val: &ChannelDataset,
    sched: &NoiseSchedule,
    seed: u64,
) -> Result<f64> {
    require_beamspace(val, "validation dataset")?;
    let mut rng = Rng::from_seed(seed);
    let items: Vec<TrainItem> = val
        .samples
        .iter()
        .map(|s| draw_item(&s.to_vec(), sched, &mut rng))
        .collect();
    // evaluate in batches to bound the transient memory
    let mut loss_sum = 0.0;
    let mut count = 0usize;
    for chunk in items.chunks(256) {
        let (loss, _) = loss_and_grad(model, chunk)?;
        loss_sum += loss * chunk.len() as f64;
        count += chunk.len();
    }
    Ok(loss_sum / count as f64)
}

struct RestartOutcome {
    model: ScoreModel,
    best_val: f64,
    rows: Vec<EpochRow>,
}

fn run_restart(
    restart: usize,
    model_cfg: &ModelConfig,
    train: &ChannelDataset,
    val: &ChannelDataset,
    sched: &NoiseSchedule,
    cfg: &TrainConfig,
) -> Result<RestartOutcome> {
    let root = Rng::from_seed(cfg.seed).split(1000 + restart as u64);
    let mut init_rng = root.split(1);
    let mut epoch_rng = root.split(2);
    let val_seed = root.split(3).seed();

    let mut model = ScoreModel::init(model_cfg.clone(), &mut init_rng)?;
    let mut opt = OptimizerState::new(
        &model.params(),
        AdamWConfig {
            lr: cfg.initial_lr,
            weight_decay: cfg.weight_decay,
            ..AdamWConfig::default()
        },
    );

    let mut best_val = f64::INFINITY;
    let mut best_model = model.clone();
    let mut rows = Vec::new();
    let mut since_best = 0usize;
    let mut since_lr_drop = 0usize;
    for epoch in 1..=cfg.max_epochs {
        let train_loss = dsm_epoch(&mut model, &mut opt, train, sched, cfg.batch_size, &mut epoch_rng)?;
        let vl = val_loss(&model, val, sched, val_seed)?;
        rows.push(EpochRow {
            restart,
            epoch,
            train_loss,
            val_loss: vl,
        });
        if vl < best_val {
            best_val = vl;
            best_model = model.clone();
            since_best = 0;
            since_lr_drop = 0;
        } else {
            since_best += 1;
            since_lr_drop += 1;
            if since_best >= cfg.patience {
                break;
            }
            if since_lr_drop >= cfg.lr_patience {
                opt.cfg.lr *= cfg.lr_decay_factor;
                since_lr_drop = 0;
            }
        }
    }
    Ok(RestartOutcome {
        model: best_model,
        best_val,
        rows,
    })
}

/// Trains `n_restarts` independently initialized models and returns the one
/// with the lowest validation loss (its best-epoch snapshot).
pub fn train(
    train_ds: &ChannelDataset,
    val_ds: &ChannelDataset,
    sched: &NoiseSchedule,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
) -> Result<(ScoreModel, TrainReport)> {
    cfg.validate()?;
    require_beamspace(train_ds, "training dataset")?;
    require_beamspace(val_ds, "validation dataset")?;
    let start = Instant::now();

    let outcomes: Vec<Result<RestartOutcome>> = (0..cfg.n_restarts)
        .into_par_iter()
        .map(|r| run_restart(r, model_cfg, train_ds, val_ds, sched, cfg))
        .collect();

    let mut rows = Vec::new();
    let mut best: Option<(usize, f64)> = None;
    let mut models = Vec::with_capacity(cfg.n_restarts);
    for (r, outcome) in outcomes.into_iter().enumerate() {
        let o = outcome?;
        rows.extend(o.rows.iter().cloned());
        match best {
            Some((_, b)) if o.best_val >= b => {}
            _ => best = Some((r, o.best_val)),
        }
        models.push(o.model);
    }
    let (selected, best_val_loss) = best.expect("n_restarts >= 1");
    let report = TrainReport {
        rows,
        selected_restart: selected,
        best_val_loss,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    Ok((models.swap_remove(selected), report))
}
