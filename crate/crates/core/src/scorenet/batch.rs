//! Batched forward/backward passes via im2col and GEMM.
//!
//! Convolutions over a batch are lowered to one matrix product per layer:
//! the patch matrix gathers every circularly wrapped receptive field as a
//! column, kernels flatten to a row-major weight matrix, and nalgebra's
//! f64 GEMM does the heavy lifting. Patch rows are ordered tap-major
//! (`tap * C + c`) so gather/scatter moves contiguous channel blocks.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::Result;
use crate::numerics::CVec;

use super::conv::Conv2d;
use super::embed::embed_step;
use super::tensor::Tensor;
use super::{Grads, ScoreModel};

/// Wrapped source index per (kernel tap, spatial position).
pub(crate) struct PatchTable {
    hw: usize,
    k2: usize,
    idx: Vec<u32>,
}

impl PatchTable {
    pub(crate) fn new(h: usize, w: usize, ksize: usize) -> Self {
        let c = ksize / 2;
        let hw = h * w;
        let k2 = ksize * ksize;
        let mut idx = vec![0u32; k2 * hw];
        for dy in 0..ksize {
            for dx in 0..ksize {
                let tap = dy * ksize + dx;
                for y in 0..h {
                    let sy = (y + dy + h - c) % h;
                    for x in 0..w {
                        let sx = (x + dx + w - c) % w;
                        idx[tap * hw + y * w + x] = (sy * w + sx) as u32;
                    }
                }
            }
        }
        Self { hw, k2, idx }
    }
}

/// Gathers `(k2*C) x (B*HW)` patches from `(C) x (B*HW)` activations.
fn im2col(a: &DMatrix<f64>, batch: usize, table: &PatchTable) -> DMatrix<f64> {
    let c = a.nrows();
    let rows = table.k2 * c;
    let cols = batch * table.hw;
    let mut p = DMatrix::<f64>::zeros(rows, cols);
    let adata = a.as_slice();
    let pdata = p.as_mut_slice();
    for b in 0..batch {
        let base = b * table.hw;
        for pos in 0..table.hw {
            let dst_col = (base + pos) * rows;
            for tap in 0..table.k2 {
                let src_col = (base + table.idx[tap * table.hw + pos] as usize) * c;
                pdata[dst_col + tap * c..dst_col + (tap + 1) * c]
                    .copy_from_slice(&adata[src_col..src_col + c]);
            }
        }
    }
    p
}

/// Scatter-adds patch gradients back onto the activation grid (adjoint of
/// [`im2col`]).
fn col2im(dp: &DMatrix<f64>, batch: usize, c: usize, table: &PatchTable) -> DMatrix<f64> {
    let rows = table.k2 * c;
    let mut da = DMatrix::<f64>::zeros(c, batch * table.hw);
    let ddata = da.as_mut_slice();
    let pdata = dp.as_slice();
    for b in 0..batch {
        let base = b * table.hw;
        for pos in 0..table.hw {
            let src_col = (base + pos) * rows;
            for tap in 0..table.k2 {
                let dst_col = (base + table.idx[tap * table.hw + pos] as usize) * c;
                let src = &pdata[src_col + tap * c..src_col + (tap + 1) * c];
                for (d, s) in ddata[dst_col..dst_col + c].iter_mut().zip(src) {
                    *d += s;
                }
            }
        }
    }
    da
}

/// Kernel tensor `(O, C, kh, kw)` as an `O x (k2*C)` weight matrix in the
/// patch row order.
fn kernel_matrix(layer: &Conv2d) -> DMatrix<f64> {
    let k2 = layer.ksize * layer.ksize;
    let (o_ch, c_ch) = (layer.out_ch, layer.in_ch);
    let kd = layer.kernel.data();
    DMatrix::from_fn(o_ch, k2 * c_ch, |o, col| {
        let (tap, c) = (col / c_ch, col % c_ch);
        kd[(o * c_ch + c) * k2 + tap]
    })
}

fn add_kernel_grads(layer: &Conv2d, dk_mat: &DMatrix<f64>, grad_kernel: &mut Tensor) {
    let k2 = layer.ksize * layer.ksize;
    let c_ch = layer.in_ch;
    let gd = grad_kernel.data_mut();
    for o in 0..layer.out_ch {
        for col in 0..k2 * c_ch {
            let (tap, c) = (col / c_ch, col % c_ch);
            gd[(o * c_ch + c) * k2 + tap] += dk_mat[(o, col)];
        }
    }
}

fn silu(x: f64) -> f64 {
    x / (1.0 + (-x).exp())
}

fn silu_deriv(x: f64) -> f64 {
    let s = 1.0 / (1.0 + (-x).exp());
    s * (1.0 + x * (1.0 - s))
}

pub(crate) struct BatchCache {
    pub batch: usize,
    x0: DMatrix<f64>,
    raw_embeds: Vec<Vec<f64>>,
    /// Pre-activations per layer; the last is the eps prediction.
    pub pre: Vec<DMatrix<f64>>,
    post: Vec<DMatrix<f64>>,
}

impl ScoreModel {
    /// Runs the conv stack over a whole batch; items carry their own step
    /// index (the embedding is per-item data, not shared structure).
    pub(crate) fn forward_batch(&self, items: &[(&CVec, usize)]) -> Result<BatchCache> {
        let cfg = self.config();
        let (h, w) = (cfg.n_rx, cfg.n_tx);
        let hw = h * w;
        let batch = items.len();
        let in0 = 2 + cfg.embed_channels;
        let mut raw_embeds = Vec::with_capacity(batch);
        let mut x0 = DMatrix::<f64>::zeros(in0, batch * hw);
        for (b, (hk, k)) in items.iter().enumerate() {
            self.check_input(hk)?;
            let raw = embed_step(*k, cfg.embed_dim)?;
            let e = self.embed_project(&raw);
            raw_embeds.push(raw);
            let x0s = x0.as_mut_slice();
            for x in 0..w {
                for y in 0..h {
                    let z = hk[x * h + y];
                    let col = (b * hw + y * w + x) * in0;
                    x0s[col] = z.re;
                    x0s[col + 1] = z.im;
                    for (j, &ev) in e.iter().enumerate() {
                        x0s[col + 2 + j] = ev;
                    }
                }
            }
        }

        let table = PatchTable::new(h, w, cfg.kernel_size);
        let n_layers = self.layers().len();
        let mut pre = Vec::with_capacity(n_layers);
        let mut post = Vec::with_capacity(n_layers.saturating_sub(1));
        for (li, layer) in self.layers().iter().enumerate() {
            let input = if li == 0 { &x0 } else { &post[li - 1] };
            let p = im2col(input, batch, &table);
            let kmat = kernel_matrix(layer);
            let mut z = kmat * p;
            let bias = layer.bias.data();
            for (o, &bv) in bias.iter().enumerate() {
                z.row_mut(o).iter_mut().for_each(|v| *v += bv);
            }
            if li + 1 < n_layers {
                post.push(z.map(silu));
            }
            pre.push(z);
        }
        Ok(BatchCache {
            batch,
            x0,
            raw_embeds,
            pre,
            post,
        })
    }

    /// Backward from `d loss / d eps` (`2 x B*HW`), accumulating into
    /// `grads` (same layout as [`ScoreModel::params`]).
    pub(crate) fn backward_batch(
        &self,
        cache: &BatchCache,
        d_eps: DMatrix<f64>,
        grads: &mut Grads,
    ) {
        let cfg = self.config();
        let (h, w) = (cfg.n_rx, cfg.n_tx);
        let hw = h * w;
        let table = PatchTable::new(h, w, cfg.kernel_size);
        let n_layers = self.layers().len();
        let mut d_out = d_eps;
        for li in (0..n_layers).rev() {
            let layer = &self.layers()[li];
            let input = if li == 0 { &cache.x0 } else { &cache.post[li - 1] };
            // bias grads: row sums
            {
                let gb = grads.0[2 + 2 * li + 1].data_mut();
                for o in 0..layer.out_ch {
                    gb[o] += d_out.row(o).sum();
                }
            }
            let p = im2col(input, cache.batch, &table);
            let dk_mat = &d_out * p.transpose();
            add_kernel_grads(layer, &dk_mat, &mut grads.0[2 + 2 * li]);
            let kmat = kernel_matrix(layer);
            let dp = kmat.transpose() * &d_out;
            let mut d_in = col2im(&dp, cache.batch, layer.in_ch, &table);
            if li > 0 {
                let z = &cache.pre[li - 1];
                d_in.zip_apply(z, |g, zz| *g *= silu_deriv(zz));
                d_out = d_in;
            } else {
                // broadcast-summed embedding channels -> affine params
                let d = cfg.embed_dim;
                for b in 0..cache.batch {
                    let raw = &cache.raw_embeds[b];
                    for j in 0..cfg.embed_channels {
                        let mut ge = 0.0;
                        for pos in 0..hw {
                            ge += d_in[(2 + j, b * hw + pos)];
                        }
                        grads.0[1].data_mut()[j] += ge;
                        for (i, &rv) in raw.iter().enumerate() {
                            grads.0[0].data_mut()[j * d + i] += ge * rv;
                        }
                    }
                }
            }
        }
    }

    /// Noise predictions for a batch sharing one step index.
    pub fn predict_eps_batch(&self, hs: &[CVec], k: usize) -> Result<Vec<CVec>> {
        let cfg = self.config();
        let (h, w) = (cfg.n_rx, cfg.n_tx);
        let hw = h * w;
        let items: Vec<(&CVec, usize)> = hs.iter().map(|v| (v, k)).collect();
        let cache = self.forward_batch(&items)?;
        let out = &cache.pre[self.layers().len() - 1];
        Ok((0..hs.len())
            .map(|b| {
                CVec::from_fn(hw, |i, _| {
                    let (x, y) = (i / h, i % h);
                    let col = b * hw + y * w + x;
                    Complex64::new(out[(0, col)], out[(1, col)])
                })
            })
            .collect())
    }

    /// Scores for a batch sharing one step index: `-eps_hat / sigma_k`.
    pub fn score_batch(&self, hs: &[CVec], k: usize, sigma_k: f64) -> Result<Vec<CVec>> {
        let eps = self.predict_eps_batch(hs, k)?;
        let scale = Complex64::new(-1.0 / sigma_k, 0.0);
        Ok(eps.into_iter().map(|e| e * scale).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;
    use crate::scorenet::{loss_and_grad, ModelConfig, TrainItem};

    fn model() -> ScoreModel {
        let cfg = ModelConfig {
            n_rx: 5,
            n_tx: 3,
            hidden_channels: 7,
            n_layers: 3,
            kernel_size: 3,
            embed_dim: 8,
            embed_channels: 4,
        };
        let mut rng = Rng::from_seed(77);
        let mut m = ScoreModel::init(cfg, &mut rng).unwrap();
        let last = m.layers().len() - 1;
        m.layers_mut()[last].init_random(&mut rng);
        m
    }

    #[test]
    fn batched_forward_matches_per_sample_path() {
        let m = model();
        let mut rng = Rng::from_seed(5);
        let hs: Vec<CVec> = (0..9)
            .map(|_| rng.draw_circular_gaussian(15, 1.0).unwrap())
            .collect();
        let batched = m.predict_eps_batch(&hs, 4).unwrap();
        for (h, b) in hs.iter().zip(&batched) {
            let single = m.predict_eps(h, 4).unwrap();
            let rel = (b - &single).norm() / single.norm().max(1e-12);
            assert!(rel < 1e-12, "batched/per-sample mismatch {rel}");
        }
    }

    #[test]
    fn batched_gradients_match_per_sample_backprop() {
        let m = model();
        let mut rng = Rng::from_seed(6);
        let items: Vec<TrainItem> = (0..5)
            .map(|i| TrainItem {
                h_k: rng.draw_circular_gaussian(15, 1.0).unwrap(),
                k: 1 + i,
                eps: rng.draw_circular_gaussian(15, 1.0).unwrap(),
            })
            .collect();
        // loss_and_grad runs the batched path; compare against the
        // per-sample reference backprop
        let (loss_b, grads_b) = loss_and_grad(&m, &items).unwrap();
        let (loss_s, grads_s) = crate::scorenet::loss_and_grad_reference(&m, &items).unwrap();
        assert!((loss_b - loss_s).abs() < 1e-12 * (1.0 + loss_s.abs()));
        for (gb, gs) in grads_b.0.iter().zip(&grads_s.0) {
            for (a, b) in gb.data().iter().zip(gs.data()) {
                assert!((a - b).abs() < 1e-10 * (1.0 + b.abs()));
            }
        }
    }
}
