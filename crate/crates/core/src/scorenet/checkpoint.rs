//! Model checkpoint: versioned binary header, architecture descriptor,
//! noise-schedule block, then raw little-endian f64 parameter tensors.
//!
//! The schedule travels with the weights so inference never needs the
//! training configuration (one checkpoint serves the whole SNR range).

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use crate::container;
use crate::error::{Error, Result};
use crate::numerics::Rng;
use crate::schedule::NoiseSchedule;

use super::{ModelConfig, ScoreModel, Tensor};

const MODEL_MAGIC: &[u8] = b"SBMMDL1";
const MODEL_VERSION: u16 = 1;

pub fn save_model(model: &ScoreModel, sched: &NoiseSchedule, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    container::write_magic(&mut w, MODEL_MAGIC)?;
    container::write_u16(&mut w, MODEL_VERSION)?;
    let cfg = model.config();
    for v in [
        cfg.n_rx,
        cfg.n_tx,
        cfg.hidden_channels,
        cfg.n_layers,
        cfg.kernel_size,
        cfg.embed_dim,
        cfg.embed_channels,
    ] {
        container::write_u32(&mut w, v as u32)?;
    }
    // schedule block
    container::write_u64(&mut w, sched.len() as u64)?;
    container::write_f64(&mut w, sched.gamma())?;
    container::write_f64(&mut w, sched.sigma_min())?;
    container::write_f64(&mut w, sched.sigma_max())?;
    container::write_f64_slice(&mut w, sched.sigmas())?;
    // parameters
    let params = model.params();
    container::write_u64(&mut w, params.len() as u64)?;
    for p in params {
        container::write_u8(&mut w, p.shape().len() as u8)?;
        for &d in p.shape() {
            container::write_u32(&mut w, d as u32)?;
        }
        container::write_f64_slice(&mut w, p.data())?;
    }
    Ok(())
}

pub fn load_model(path: &Path) -> Result<(ScoreModel, NoiseSchedule)> {
    let mut r = BufReader::new(File::open(path)?);
    container::expect_magic(&mut r, MODEL_MAGIC, "model checkpoint")?;
    container::expect_version(&mut r, MODEL_VERSION, "model checkpoint")?;
    let mut dims = [0usize; 7];
    for d in &mut dims {
        *d = container::read_u32(&mut r, "model checkpoint")? as usize;
    }
    let cfg = ModelConfig {
        n_rx: dims[0],
        n_tx: dims[1],
        hidden_channels: dims[2],
        n_layers: dims[3],
        kernel_size: dims[4],
        embed_dim: dims[5],
        embed_channels: dims[6],
    };
    cfg.validate()
        .map_err(|e| Error::Format(format!("model checkpoint: bad architecture: {e}")))?;

    let k = container::read_u64(&mut r, "model checkpoint")? as usize;
    let gamma = container::read_f64(&mut r, "model checkpoint")?;
    let sigma_min = container::read_f64(&mut r, "model checkpoint")?;
    let sigma_max = container::read_f64(&mut r, "model checkpoint")?;
    let sigmas = container::read_f64_vec(&mut r, k, "model checkpoint")?;
    let sched = NoiseSchedule::from_raw(sigmas, gamma, sigma_min, sigma_max)?;

    // materialize a model skeleton, then overwrite every tensor
    let mut model = ScoreModel::init(cfg, &mut Rng::from_seed(0))?;
    let n_params = container::read_u64(&mut r, "model checkpoint")? as usize;
    let mut params = model.params_mut();
    if n_params != params.len() {
        return Err(Error::Format(format!(
            "model checkpoint: {n_params} tensors, architecture expects {}",
            params.len()
        )));
    }
    for p in params.iter_mut() {
        let ndim = container::read_u8(&mut r, "model checkpoint")? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(container::read_u32(&mut r, "model checkpoint")? as usize);
        }
        if shape != p.shape() {
            return Err(Error::Format(format!(
                "model checkpoint: tensor shape {shape:?} does not match architecture {:?}",
                p.shape()
            )));
        }
        let data = container::read_f64_vec(&mut r, p.len(), "model checkpoint")?;
        let loaded = Tensor::from_vec(&shape, data)?;
        if !loaded.all_finite() {
            return Err(Error::Format(
                "model checkpoint: non-finite parameter values".into(),
            ));
        }
        **p = loaded;
    }
    Ok((model, sched))
}
