//! Sinusoidal step embedding.

use crate::error::{Error, Result};

/// Transformer-style sinusoidal embedding of a step index: interleaved
/// pairs `(sin(k / 10000^(2i/dim)), cos(k / 10000^(2i/dim)))` for
/// `i = 0..dim/2`.
pub fn embed_step(k: usize, dim: usize) -> Result<Vec<f64>> {
    if dim == 0 || dim % 2 != 0 {
        return Err(Error::Parameter(format!(
            "embedding dim must be even and > 0, got {dim}"
        )));
    }
    if k == 0 {
        return Err(Error::Parameter("step index must be >= 1".into()));
    }
    let mut out = Vec::with_capacity(dim);
    let kf = k as f64;
    for i in 0..dim / 2 {
        let freq = 10000f64.powf(-2.0 * i as f64 / dim as f64);
        out.push((kf * freq).sin());
        out.push((kf * freq).cos());
    }
    Ok(out)
}
