//! Step-conditioned convolutional score network.
//!
//! The network predicts the noise realization `eps` that produced a diffused
//! beamspace channel, and the score is recovered as
//! `s(h_k, k) = -eps(h_k, k) / sigma_k`. Predicting `eps` keeps the output
//! magnitude O(1) across all noise levels; it equals fitting the surrogate
//! score with a per-step `sigma_k^2` loss weighting.
//!
//! Complex channels enter as two real image channels (re, im); the step
//! index enters as a sinusoidal embedding, affinely projected and broadcast
//! as additional constant input channels. Convolutions pad circularly on
//! both antenna axes since the beamspace is DFT-periodic.

pub mod adamw;
pub mod batch;
pub mod checkpoint;
pub mod conv;
pub mod embed;
pub mod tensor;

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use nalgebra::DVector;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{CMat, CVec, HermitianSolver, Rng};

pub use adamw::{AdamWConfig, OptimizerState};
pub use conv::Conv2d;
pub use embed::embed_step;
pub use tensor::Tensor;

/// Batch chunk size for parallel gradient accumulation. Fixed so the f64
/// summation order (and therefore every trained model) is independent of
/// the worker count.
const GRAD_CHUNK: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_rx: usize,
    pub n_tx: usize,
    pub hidden_channels: usize,
    pub n_layers: usize,
    pub kernel_size: usize,
    /// Sinusoidal embedding length (even).
    pub embed_dim: usize,
    /// Channels the embedding is projected to and broadcast over the image.
    pub embed_channels: usize,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_rx == 0 || self.n_tx == 0 {
            return Err(Error::Parameter("model dims must be >= 1".into()));
        }
        if self.n_layers == 0 {
            return Err(Error::Parameter("n_layers must be >= 1".into()));
        }
        if self.hidden_channels == 0 && self.n_layers > 1 {
            return Err(Error::Parameter("hidden_channels must be >= 1".into()));
        }
        if self.kernel_size % 2 == 0 || self.kernel_size == 0 {
            return Err(Error::Parameter("kernel_size must be odd".into()));
        }
        if self.embed_dim == 0 || self.embed_dim % 2 != 0 {
            return Err(Error::Parameter("embed_dim must be even".into()));
        }
        if self.embed_channels == 0 {
            return Err(Error::Parameter("embed_channels must be >= 1".into()));
        }
        Ok(())
    }

    fn layer_channels(&self) -> Vec<(usize, usize)> {
        let in0 = 2 + self.embed_channels;
        let l = self.n_layers;
        if l == 1 {
            return vec![(in0, 2)];
        }
        let mut chans = vec![(in0, self.hidden_channels)];
        for _ in 1..l - 1 {
            chans.push((self.hidden_channels, self.hidden_channels));
        }
        chans.push((self.hidden_channels, 2));
        chans
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            n_rx: 16,
            n_tx: 4,
            hidden_channels: 32,
            n_layers: 3,
            kernel_size: 3,
            embed_dim: 16,
            embed_channels: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreModel {
    cfg: ModelConfig,
    /// (embed_channels, embed_dim) affine projection of the sinusoid.
    embed_w: Tensor,
    /// (embed_channels)
    embed_b: Tensor,
    convs: Vec<Conv2d>,
}

/// Gradients parallel to [`ScoreModel::params`].
#[derive(Debug, Clone)]
pub struct Grads(pub Vec<Tensor>);

impl Grads {
    pub fn zeros_like(model: &ScoreModel) -> Self {
        Self(model.params().iter().map(|p| Tensor::zeros(p.shape())).collect())
    }

    fn add(&mut self, other: &Grads) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            a.axpy(1.0, b);
        }
    }

    fn scale(&mut self, s: f64) {
        for t in &mut self.0 {
            t.data_mut().iter_mut().for_each(|v| *v *= s);
        }
    }
}

/// One DSM training item: a diffused sample, its step index, and the noise
/// realization that produced it (the prediction target).
#[derive(Debug, Clone)]
pub struct TrainItem {
    pub h_k: CVec,
    pub k: usize,
    pub eps: CVec,
}

impl TrainItem {
    /// Builds an item from a surrogate-score target `s = -eps/sigma_k`,
    /// recovering the noise target as `eps = -sigma_k * s`.
    pub fn from_surrogate_score(h_k: CVec, k: usize, score: &CVec, sigma_k: f64) -> Self {
        let eps = score * Complex64::new(-sigma_k, 0.0);
        Self { h_k, k, eps }
    }
}

struct ForwardCache {
    net_input: Vec<f64>,
    /// Unprojected sinusoidal embedding, kept for the affine backward pass.
    raw_embed: Vec<f64>,
    /// Pre-activations per layer; the last one is the eps prediction.
    pre: Vec<Vec<f64>>,
    /// Post-activation outputs for all but the last layer.
    post: Vec<Vec<f64>>,
}

fn silu(x: f64) -> f64 {
    x / (1.0 + (-x).exp())
}

fn silu_deriv(x: f64) -> f64 {
    let s = 1.0 / (1.0 + (-x).exp());
    s * (1.0 + x * (1.0 - s))
}

impl ScoreModel {
    /// Fresh model; conv layers get Gaussian init except the final layer,
    /// which starts at zero so the initial score estimate is identically 0.
    pub fn init(cfg: ModelConfig, rng: &mut Rng) -> Result<Self> {
        cfg.validate()?;
        let chans = cfg.layer_channels();
        let mut convs = Vec::with_capacity(chans.len());
        for (li, (ci, co)) in chans.iter().enumerate() {
            let mut layer = Conv2d::new(*ci, *co, cfg.kernel_size)?;
            if li + 1 < chans.len() {
                layer.init_random(rng);
            }
            convs.push(layer);
        }
        let mut embed_w = Tensor::zeros(&[cfg.embed_channels, cfg.embed_dim]);
        let std = 1.0 / (cfg.embed_dim as f64).sqrt();
        embed_w
            .data_mut()
            .copy_from_slice(&rng.draw_real_gaussian(cfg.embed_channels * cfg.embed_dim, std * std)?);
        let embed_b = Tensor::zeros(&[cfg.embed_channels]);
        Ok(Self {
            cfg,
            embed_w,
            embed_b,
            convs,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn params(&self) -> Vec<&Tensor> {
        let mut out = vec![&self.embed_w, &self.embed_b];
        for c in &self.convs {
            out.push(&c.kernel);
            out.push(&c.bias);
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = vec![&mut self.embed_w, &mut self.embed_b];
        for c in &mut self.convs {
            out.push(&mut c.kernel);
            out.push(&mut c.bias);
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|t| t.len()).sum()
    }

    pub fn layers(&self) -> &[Conv2d] {
        &self.convs
    }

    pub fn layers_mut(&mut self) -> &mut [Conv2d] {
        &mut self.convs
    }

    fn dims(&self) -> (usize, usize, usize) {
        (self.cfg.n_rx, self.cfg.n_tx, self.cfg.n_rx * self.cfg.n_tx)
    }

    fn check_input(&self, h: &CVec) -> Result<()> {
        let (_, _, hw) = self.dims();
        if h.len() != hw {
            return Err(Error::Dimension(format!(
                "score input length {} != n_rx*n_tx = {hw}",
                h.len()
            )));
        }
        Ok(())
    }

    /// Projected embedding `W * raw + b`.
    fn embed_project(&self, raw: &[f64]) -> Vec<f64> {
        let e_ch = self.cfg.embed_channels;
        let d = self.cfg.embed_dim;
        let w = self.embed_w.data();
        let b = self.embed_b.data();
        (0..e_ch)
            .map(|j| b[j] + (0..d).map(|i| w[j * d + i] * raw[i]).sum::<f64>())
            .collect()
    }

    fn build_net_input(&self, h: &CVec, e: &[f64]) -> Vec<f64> {
        let (n_rx, n_tx, hw) = self.dims();
        let in0 = 2 + self.cfg.embed_channels;
        let mut input = vec![0.0; in0 * hw];
        // re/im channels; CVec is column-major over (rx, tx)
        for x in 0..n_tx {
            for y in 0..n_rx {
                let z = h[x * n_rx + y];
                input[y * n_tx + x] = z.re;
                input[hw + y * n_tx + x] = z.im;
            }
        }
        for (j, &ev) in e.iter().enumerate() {
            input[(2 + j) * hw..(3 + j) * hw].iter_mut().for_each(|v| *v = ev);
        }
        input
    }

    fn run_forward(&self, h: &CVec, k: usize) -> Result<ForwardCache> {
        self.check_input(h)?;
        let (n_rx, n_tx, hw) = self.dims();
        let raw_embed = embed_step(k, self.cfg.embed_dim)?;
        let e = self.embed_project(&raw_embed);
        let net_input = self.build_net_input(h, &e);
        let n_layers = self.convs.len();
        let mut pre: Vec<Vec<f64>> = Vec::with_capacity(n_layers);
        let mut post: Vec<Vec<f64>> = Vec::with_capacity(n_layers.saturating_sub(1));
        for (li, layer) in self.convs.iter().enumerate() {
            let input = if li == 0 { &net_input } else { &post[li - 1] };
            let mut z = vec![0.0; layer.out_ch * hw];
            layer.forward(input, n_rx, n_tx, &mut z);
            if li + 1 < n_layers {
                post.push(z.iter().map(|&x| silu(x)).collect());
            }
            pre.push(z);
        }
        Ok(ForwardCache {
            net_input,
            raw_embed,
            pre,
            post,
        })
    }

    /// Noise prediction `eps_hat` as a complex vector in channel layout.
    pub fn predict_eps(&self, h: &CVec, k: usize) -> Result<CVec> {
        let cache = self.run_forward(h, k)?;
        let (n_rx, n_tx, hw) = self.dims();
        let out = &cache.pre[self.convs.len() - 1];
        Ok(DVector::from_fn(hw, |i, _| {
            let (x, y) = (i / n_rx, i % n_rx);
            Complex64::new(out[y * n_tx + x], out[hw + y * n_tx + x])
        }))
    }

    /// Score estimate `-eps_hat / sigma_k`, same shape as the input.
    pub fn forward(&self, h: &CVec, k: usize, sigma_k: f64) -> Result<CVec> {
        if !(sigma_k > 0.0) {
            return Err(Error::Parameter(format!(
                "sigma_k must be > 0, got {sigma_k}"
            )));
        }
        let eps = self.predict_eps(h, k)?;
        Ok(eps * Complex64::new(-1.0 / sigma_k, 0.0))
    }

    /// Backward pass from `d loss / d eps_hat` (channel layout, unscaled)
    /// accumulating into `grads`.
    fn backprop(&self, cache: &ForwardCache, grad_eps: Vec<f64>, grads: &mut Grads) {
        let (n_rx, n_tx, hw) = self.dims();
        let n_layers = self.convs.len();
        let mut grad_out = grad_eps;
        for li in (0..n_layers).rev() {
            let layer = &self.convs[li];
            let input = if li == 0 {
                &cache.net_input
            } else {
                &cache.post[li - 1]
            };
            let mut grad_in = vec![0.0; layer.in_ch * hw];
            // grads vector layout: [embed_w, embed_b, k0, b0, k1, b1, ...]
            let (gk, gb) = {
                let (a, b) = grads.0.split_at_mut(2 + 2 * li + 1);
                (&mut a[2 + 2 * li], &mut b[0])
            };
            layer.backward(input, n_rx, n_tx, &grad_out, &mut grad_in, gk, gb);
            if li > 0 {
                // upstream activation gradient through SiLU
                let z = &cache.pre[li - 1];
                for (g, &zz) in grad_in.iter_mut().zip(z.iter()) {
                    *g *= silu_deriv(zz);
                }
                grad_out = grad_in;
            } else {
                // embedding channels: broadcast-sum then affine backward
                let raw = &cache.raw_embed;
                let d = self.cfg.embed_dim;
                for j in 0..self.cfg.embed_channels {
                    let ge: f64 = grad_in[(2 + j) * hw..(3 + j) * hw].iter().sum();
                    grads.0[1].data_mut()[j] += ge;
                    for (i, &rv) in raw.iter().enumerate() {
                        grads.0[0].data_mut()[j * d + i] += ge * rv;
                    }
                }
            }
        }
    }
}

/// Anything that can supply a score estimate inside the denoising loop:
/// the trained network, an analytic Gaussian-prior score, or a noise oracle.
pub trait ScoreSource: Sync {
    fn score(&self, h: &CVec, k: usize, sigma_k: f64) -> Result<CVec>;
}

impl ScoreSource for ScoreModel {
    fn score(&self, h: &CVec, k: usize, sigma_k: f64) -> Result<CVec> {
        self.forward(h, k, sigma_k)
    }
}

/// Exact score of a zero-mean complex Gaussian prior diffused to level
/// `sigma`: `s(h) = -(C + sigma^2 I)^{-1} h`. Factorizations are cached per
/// noise level.
pub struct GaussianPriorScore {
    cov: CMat,
    cache: Mutex<HashMap<u64, Arc<HermitianSolver>>>,
}

impl GaussianPriorScore {
    /// `cov` is the prior covariance in the same domain the score is
    /// queried in (beamspace inside the denoising loop).
    pub fn new(cov: CMat) -> Self {
        Self {
            cov,
            cache: Mutex::new(HashMap::new()),
        }
    }

    fn solver(&self, sigma: f64) -> Result<Arc<HermitianSolver>> {
        let key = sigma.to_bits();
        if let Some(s) = self.cache.lock().unwrap().get(&key) {
            return Ok(Arc::clone(s));
        }
        let n = self.cov.nrows();
        let mut m = self.cov.clone();
        for i in 0..n {
            m[(i, i)] += Complex64::new(sigma * sigma, 0.0);
        }
        let solver = Arc::new(HermitianSolver::new(&m)?);
        self.cache
            .lock()
            .unwrap()
            .insert(key, Arc::clone(&solver));
        Ok(solver)
    }
}

impl ScoreSource for GaussianPriorScore {
    fn score(&self, h: &CVec, _k: usize, sigma_k: f64) -> Result<CVec> {
        let solver = self.solver(sigma_k)?;
        Ok(-solver.solve_vec(h))
    }
}

/// Oracle that "predicts" a fixed noise vector: `s = -eps / sigma_k`.
/// Used to validate the inverse-kernel identity of single-step denoising.
pub struct NoiseOracleScore {
    pub eps: CVec,
}

impl ScoreSource for NoiseOracleScore {
    fn score(&self, _h: &CVec, _k: usize, sigma_k: f64) -> Result<CVec> {
        Ok(&self.eps * Complex64::new(-1.0 / sigma_k, 0.0))
    }
}

/// Mean squared error between predicted and target noise over a batch,
/// with exact gradients for every parameter tensor. Runs the batched
/// im2col/GEMM passes in fixed-size chunks so the summation order (and
/// therefore every trained model) is reproducible.
///
/// The mean runs over batch items and real components, so a batch of
/// duplicated samples has the same loss as the single sample.
pub fn loss_and_grad(model: &ScoreModel, items: &[TrainItem]) -> Result<(f64, Grads)> {
    validate_items(model, items)?;
    let (n_rx, n_tx, hw) = model.dims();
    let comps = 2 * hw;

    let chunks: Vec<(f64, Grads)> = items
        .par_chunks(GRAD_CHUNK)
        .map(|chunk| {
            let refs: Vec<(&CVec, usize)> = chunk.iter().map(|it| (&it.h_k, it.k)).collect();
            let cache = model.forward_batch(&refs).expect("pre-validated");
            let out = &cache.pre[model.convs.len() - 1];
            let mut d_eps = nalgebra::DMatrix::<f64>::zeros(2, chunk.len() * hw);
            let mut loss_sum = 0.0;
            for (b, item) in chunk.iter().enumerate() {
                for x in 0..n_tx {
                    for y in 0..n_rx {
                        let t = item.eps[x * n_rx + y];
                        let col = b * hw + y * n_tx + x;
                        let dre = out[(0, col)] - t.re;
                        let dim = out[(1, col)] - t.im;
                        loss_sum += dre * dre + dim * dim;
                        d_eps[(0, col)] = 2.0 * dre;
                        d_eps[(1, col)] = 2.0 * dim;
                    }
                }
            }
            let mut grads = Grads::zeros_like(model);
            model.backward_batch(&cache, d_eps, &mut grads);
            (loss_sum, grads)
        })
        .collect();

    finish_loss(model, items.len(), comps, chunks)
}

/// Per-sample reference implementation of [`loss_and_grad`]; kept as an
/// independent oracle for the batched path.
pub fn loss_and_grad_reference(model: &ScoreModel, items: &[TrainItem]) -> Result<(f64, Grads)> {
    validate_items(model, items)?;
    let hw = model.cfg.n_rx * model.cfg.n_tx;
    let comps = 2 * hw;
    let chunks: Vec<(f64, Grads)> = items
        .par_chunks(GRAD_CHUNK)
        .map(|chunk| {
            let mut grads = Grads::zeros_like(model);
            let mut loss_sum = 0.0;
            for item in chunk {
                loss_sum += item_loss_backprop(model, item, &mut grads).expect("pre-validated");
            }
            (loss_sum, grads)
        })
        .collect();
    finish_loss(model, items.len(), comps, chunks)
}

fn validate_items(model: &ScoreModel, items: &[TrainItem]) -> Result<()> {
    if items.is_empty() {
        return Err(Error::Parameter("empty training batch".into()));
    }
    for item in items {
        model.check_input(&item.h_k)?;
        if item.eps.len() != item.h_k.len() {
            return Err(Error::Dimension("eps target length mismatch".into()));
        }
    }
    Ok(())
}

fn finish_loss(
    model: &ScoreModel,
    n_items: usize,
    comps: usize,
    chunks: Vec<(f64, Grads)>,
) -> Result<(f64, Grads)> {
    let mut total = Grads::zeros_like(model);
    let mut loss_sum = 0.0;
    for (l, g) in &chunks {
        loss_sum += l;
        total.add(g);
    }
    let norm = 1.0 / (n_items as f64 * comps as f64);
    total.scale(norm);
    let loss = loss_sum * norm;
    if !loss.is_finite() {
        return Err(Error::Numeric("non-finite training loss".into()));
    }
    Ok((loss, total))
}

/// Loss (sum of squared component errors, unnormalized) and gradient
/// accumulation for a single item.
fn item_loss_backprop(model: &ScoreModel, item: &TrainItem, grads: &mut Grads) -> Result<f64> {
    let (n_rx, n_tx, hw) = model.dims();
    let cache = model.run_forward(&item.h_k, item.k)?;
    let out = &cache.pre[model.convs.len() - 1];
    // target in channel layout
    let mut grad_eps = vec![0.0; 2 * hw];
    let mut loss = 0.0;
    for x in 0..n_tx {
        for y in 0..n_rx {
            let t = item.eps[x * n_rx + y];
            let ire = y * n_tx + x;
            let iim = hw + y * n_tx + x;
            let dre = out[ire] - t.re;
            let dim = out[iim] - t.im;
            loss += dre * dre + dim * dim;
            grad_eps[ire] = 2.0 * dre;
            grad_eps[iim] = 2.0 * dim;
        }
    }
    model.backprop(&cache, grad_eps, grads);
    Ok(loss)
}
