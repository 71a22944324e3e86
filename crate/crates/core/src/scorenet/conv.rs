//! 2D convolution with circular padding along both axes.
//!
//! Beamspace channels are DFT-periodic in both antenna dimensions, so the
//! padding wraps around. Kernels are square with odd size; images are laid
//! out channel-major `[c][y][x]`.

use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::numerics::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub in_ch: usize,
    pub out_ch: usize,
    pub ksize: usize,
    /// (out_ch, in_ch, ksize, ksize)
    pub kernel: Tensor,
    /// (out_ch)
    pub bias: Tensor,
}

impl Conv2d {
    pub fn new(in_ch: usize, out_ch: usize, ksize: usize) -> Result<Self> {
        if ksize % 2 == 0 || ksize == 0 {
            return Err(Error::Parameter(format!(
                "kernel size must be odd, got {ksize}"
            )));
        }
        Ok(Self {
            in_ch,
            out_ch,
            ksize,
            kernel: Tensor::zeros(&[out_ch, in_ch, ksize, ksize]),
            bias: Tensor::zeros(&[out_ch]),
        })
    }

    /// Gaussian init with std `1/sqrt(in_ch * ksize^2)`.
    pub fn init_random(&mut self, rng: &mut Rng) {
        let std = 1.0 / ((self.in_ch * self.ksize * self.ksize) as f64).sqrt();
        let draws = rng
            .draw_real_gaussian(self.kernel.len(), std * std)
            .expect("nonnegative variance");
        self.kernel.data_mut().copy_from_slice(&draws);
        self.bias.fill(0.0);
    }

    /// Wrapped source indices for every (output position, kernel tap) pair.
    fn index_table(n: usize, ksize: usize) -> Vec<usize> {
        let c = ksize / 2;
        let mut tab = vec![0usize; n * ksize];
        for y in 0..n {
            for d in 0..ksize {
                tab[y * ksize + d] = (y + d + n - c) % n;
            }
        }
        tab
    }

    /// `out[o,y,x] = bias[o] + sum_{i,dy,dx} kernel[o,i,dy,dx] * in[i, wrap(y+dy-c), wrap(x+dx-c)]`
    ///
    /// `input` is `(in_ch, h, w)` flattened, `out` must hold `(out_ch, h, w)`.
    pub fn forward(&self, input: &[f64], h: usize, w: usize, out: &mut [f64]) {
        let hw = h * w;
        debug_assert_eq!(input.len(), self.in_ch * hw);
        debug_assert_eq!(out.len(), self.out_ch * hw);
        let k = self.ksize;
        let ytab = Self::index_table(h, k);
        let xtab = Self::index_table(w, k);
        let kern = self.kernel.data();
        let bias = self.bias.data();

        for o in 0..self.out_ch {
            let out_o = &mut out[o * hw..(o + 1) * hw];
            out_o.iter_mut().for_each(|v| *v = bias[o]);
            for i in 0..self.in_ch {
                let in_i = &input[i * hw..(i + 1) * hw];
                let kbase = (o * self.in_ch + i) * k * k;
                for dy in 0..k {
                    for dx in 0..k {
                        let kv = kern[kbase + dy * k + dx];
                        if kv == 0.0 {
                            continue;
                        }
                        for y in 0..h {
                            let src_row = ytab[y * k + dy] * w;
                            let dst_row = y * w;
                            for x in 0..w {
                                out_o[dst_row + x] += kv * in_i[src_row + xtab[x * k + dx]];
                            }
                        }
                    }
                }
            }
        }
    }

    /// Backward pass. Accumulates (does not overwrite) into `grad_kernel`
    /// and `grad_bias`; overwrites `grad_in`.
    pub fn backward(
        &self,
        input: &[f64],
        h: usize,
        w: usize,
        grad_out: &[f64],
        grad_in: &mut [f64],
        grad_kernel: &mut Tensor,
        grad_bias: &mut Tensor,
    ) {
        let hw = h * w;
        debug_assert_eq!(input.len(), self.in_ch * hw);
        debug_assert_eq!(grad_out.len(), self.out_ch * hw);
        debug_assert_eq!(grad_in.len(), self.in_ch * hw);
        let k = self.ksize;
        let ytab = Self::index_table(h, k);
        let xtab = Self::index_table(w, k);
        let kern = self.kernel.data();
        let gk = grad_kernel.data_mut();
        let gb = grad_bias.data_mut();
        grad_in.iter_mut().for_each(|v| *v = 0.0);

        for o in 0..self.out_ch {
            let g_o = &grad_out[o * hw..(o + 1) * hw];
            gb[o] += g_o.iter().sum::<f64>();
            for i in 0..self.in_ch {
                let in_i = &input[i * hw..(i + 1) * hw];
                let gin_i = &mut grad_in[i * hw..(i + 1) * hw];
                let kbase = (o * self.in_ch + i) * k * k;
                for dy in 0..k {
                    for dx in 0..k {
                        let kv = kern[kbase + dy * k + dx];
                        let mut acc = 0.0;
                        for y in 0..h {
                            let src_row = ytab[y * k + dy] * w;
                            let dst_row = y * w;
                            for x in 0..w {
                                let g = g_o[dst_row + x];
                                let si = src_row + xtab[x * k + dx];
                                acc += g * in_i[si];
                                gin_i[si] += kv * g;
                            }
                        }
                        gk[kbase + dy * k + dx] += acc;
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Reference forward via explicit quadruple loop with modulo arithmetic.
    fn conv_reference(layer: &Conv2d, input: &[f64], h: usize, w: usize) -> Vec<f64> {
        let hw = h * w;
        let k = layer.ksize;
        let c = k / 2;
        let mut out = vec![0.0; layer.out_ch * hw];
        for o in 0..layer.out_ch {
            for y in 0..h {
                for x in 0..w {
                    let mut acc = layer.bias.data()[o];
                    for i in 0..layer.in_ch {
                        for dy in 0..k {
                            for dx in 0..k {
                                let iy = (y + dy + h - c) % h;
                                let ix = (x + dx + w - c) % w;
                                let kv =
                                    layer.kernel.data()[((o * layer.in_ch + i) * k + dy) * k + dx];
                                acc += kv * input[i * hw + iy * w + ix];
                            }
                        }
                    }
                    out[o * hw + y * w + x] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn forward_matches_reference_loop() {
        let mut rng = Rng::from_seed(2);
        for (h, w) in [(4, 4), (16, 4), (5, 1), (1, 3)] {
            let mut layer = Conv2d::new(3, 2, 3).unwrap();
            layer.init_random(&mut rng);
            layer
                .bias
                .data_mut()
                .copy_from_slice(&rng.draw_real_gaussian(2, 1.0).unwrap());
            let input = rng.draw_real_gaussian(3 * h * w, 1.0).unwrap();
            let mut out = vec![0.0; 2 * h * w];
            layer.forward(&input, h, w, &mut out);
            let want = conv_reference(&layer, &input, h, w);
            for (a, b) in out.iter().zip(&want) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = Rng::from_seed(3);
        let (h, w) = (4, 3);
        let mut layer = Conv2d::new(2, 2, 3).unwrap();
        layer.init_random(&mut rng);
        let input = rng.draw_real_gaussian(2 * h * w, 1.0).unwrap();
        // loss = 0.5 * sum(out^2)  =>  grad_out = out
        let mut out = vec![0.0; 2 * h * w];
        layer.forward(&input, h, w, &mut out);
        let mut grad_in = vec![0.0; input.len()];
        let mut gk = Tensor::zeros(layer.kernel.shape());
        let mut gb = Tensor::zeros(layer.bias.shape());
        layer.backward(&input, h, w, &out, &mut grad_in, &mut gk, &mut gb);

        let loss = |l: &Conv2d, inp: &[f64]| -> f64 {
            let mut o = vec![0.0; 2 * h * w];
            l.forward(inp, h, w, &mut o);
            0.5 * o.iter().map(|v| v * v).sum::<f64>()
        };
        let eps = 1e-6;
        // kernel entries
        for idx in [0usize, 5, 17, 35] {
            let mut lp = layer.clone();
            lp.kernel.data_mut()[idx] += eps;
            let mut lm = layer.clone();
            lm.kernel.data_mut()[idx] -= eps;
            let fd = (loss(&lp, &input) - loss(&lm, &input)) / (2.0 * eps);
            assert!(
                (fd - gk.data()[idx]).abs() < 1e-6 * (1.0 + fd.abs()),
                "kernel[{idx}]: fd {fd} vs {got}",
                got = gk.data()[idx]
            );
        }
        // input entries
        for idx in [0usize, 7, 23] {
            let mut ip = input.clone();
            ip[idx] += eps;
            let mut im = input.clone();
            im[idx] -= eps;
            let fd = (loss(&layer, &ip) - loss(&layer, &im)) / (2.0 * eps);
            assert!((fd - grad_in[idx]).abs() < 1e-6 * (1.0 + fd.abs()));
        }
        // bias
        let mut lp = layer.clone();
        lp.bias.data_mut()[1] += eps;
        let mut lm = layer.clone();
        lm.bias.data_mut()[1] -= eps;
        let fd = (loss(&lp, &input) - loss(&lm, &input)) / (2.0 * eps);
        assert!((fd - gb.data()[1]).abs() < 1e-6 * (1.0 + fd.abs()));
    }
}
