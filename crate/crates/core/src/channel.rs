//! Synthetic multipath MIMO channel datasets.
//!
//! A geometric Rician cluster model stands in for a full ray-tracing channel
//! generator: each sample is `H = sum_p g_p a_rx(theta_p) a_tx(phi_p)^H`
//! with half-wavelength ULA steering vectors on both ends, one dominant LOS
//! path whose power fraction follows a per-sample Rician K-factor, and the
//! remaining paths clustered around the LOS angles. Datasets are normalized
//! globally (one scale factor, fit on the training split) so that the mean
//! squared sample norm equals `n_rx * n_tx`.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::container;
use crate::error::{Error, Result};
use crate::numerics::{all_finite_mat, Beamspace, CMat, CVec, Rng};

const DATASET_MAGIC: &[u8] = b"SBMCH1";
const DATASET_VERSION: u16 = 1;

/// Parameters of the synthetic channel scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub n_rx: usize,
    pub n_tx: usize,
    /// Half-angle of the served sector in degrees; LOS angles are drawn
    /// uniformly from `[-sector_halfangle, +sector_halfangle]`.
    pub sector_halfangle_deg: f64,
    pub n_paths: usize,
    /// Per-sample Rician K-factor range in dB (LOS-to-scatter power ratio).
    pub rician_k_db_range: (f64, f64),
    /// Standard deviation (degrees) of the scattered paths around the LOS
    /// angle.
    pub angle_spread_deg: f64,
    pub seed: u64,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_rx < 1 || self.n_tx < 1 {
            return Err(Error::Parameter("antenna counts must be >= 1".into()));
        }
        if self.n_paths < 1 {
            return Err(Error::Parameter("n_paths must be >= 1".into()));
        }
        if !(self.sector_halfangle_deg > 0.0 && self.sector_halfangle_deg <= 90.0) {
            return Err(Error::Parameter(
                "sector_halfangle_deg must lie in (0, 90]".into(),
            ));
        }
        if self.rician_k_db_range.0 > self.rician_k_db_range.1 {
            return Err(Error::Parameter("rician_k_db_range must be ordered".into()));
        }
        if self.angle_spread_deg < 0.0 {
            return Err(Error::Parameter("angle_spread_deg must be >= 0".into()));
        }
        Ok(())
    }
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            n_rx: 16,
            n_tx: 4,
            sector_halfangle_deg: 60.0,
            n_paths: 3,
            rician_k_db_range: (0.0, 10.0),
            angle_spread_deg: 5.0,
            seed: 0,
        }
    }
}

/// One complex `n_rx x n_tx` channel matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSample {
    pub mat: CMat,
}

impl ChannelSample {
    pub fn new(mat: CMat) -> Self {
        Self { mat }
    }

    pub fn n_rx(&self) -> usize {
        self.mat.nrows()
    }

    pub fn n_tx(&self) -> usize {
        self.mat.ncols()
    }

    /// Column-major vectorization `vec(H)`.
    pub fn to_vec(&self) -> CVec {
        DVector::from_column_slice(self.mat.as_slice())
    }

    pub fn from_vec(v: &CVec, n_rx: usize, n_tx: usize) -> Self {
        Self {
            mat: CMat::from_column_slice(n_rx, n_tx, v.as_slice()),
        }
    }

    pub fn energy(&self) -> f64 {
        self.mat.iter().map(|z| z.norm_sqr()).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Domain {
    Spatial,
    Beamspace,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

/// A set of equally sized channel samples in one domain.
#[derive(Debug, Clone)]
pub struct ChannelDataset {
    pub samples: Vec<ChannelSample>,
    pub domain: Domain,
    pub n_rx: usize,
    pub n_tx: usize,
    /// Provenance; not part of the serialized format.
    pub split: Option<Split>,
    pub scenario: Option<ScenarioConfig>,
}

impl ChannelDataset {
    pub fn new(samples: Vec<ChannelSample>, domain: Domain) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::Parameter("dataset must be nonempty".into()))?;
        let (n_rx, n_tx) = (first.n_rx(), first.n_tx());
        if !samples.iter().all(|s| s.n_rx() == n_rx && s.n_tx() == n_tx) {
            return Err(Error::Dimension("dataset samples must share dims".into()));
        }
        Ok(Self {
            samples,
            domain,
            n_rx,
            n_tx,
            split: None,
            scenario: None,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn mean_energy(&self) -> f64 {
        self.samples.iter().map(|s| s.energy()).sum::<f64>() / self.len() as f64
    }

    /// Scale factor that maps this dataset's mean squared norm to
    /// `n_rx * n_tx`. Errors on zero-energy data.
    pub fn normalization_factor(&self) -> Result<f64> {
        if self.is_empty() {
            return Err(Error::Parameter("cannot normalize empty dataset".into()));
        }
        let mean = self.mean_energy();
        if mean <= 0.0 {
            return Err(Error::Numeric("zero-energy dataset".into()));
        }
        Ok(((self.n_rx * self.n_tx) as f64 / mean).sqrt())
    }

    /// Applies a fixed scale factor to every sample. Use the training
    /// split's factor for validation/test data.
    pub fn scale(&mut self, factor: f64) {
        let f = Complex64::new(factor, 0.0);
        for s in &mut self.samples {
            s.mat *= f;
        }
    }

    /// Normalizes in place using this dataset's own factor and returns the
    /// factor for reuse on held-out splits.
    pub fn normalize(&mut self) -> Result<f64> {
        let f = self.normalization_factor()?;
        self.scale(f);
        Ok(f)
    }

    /// Kronecker-DFT transform of every sample into the other domain.
    pub fn to_domain(&self, target: Domain) -> Result<ChannelDataset> {
        if self.domain == target {
            return Ok(self.clone());
        }
        let op = Beamspace::new(self.n_rx, self.n_tx)?;
        let samples = self
            .samples
            .iter()
            .map(|s| {
                let v = s.to_vec();
                let t = match target {
                    Domain::Beamspace => op.forward(&v)?,
                    Domain::Spatial => op.inverse(&v)?,
                };
                Ok(ChannelSample::from_vec(&t, self.n_rx, self.n_tx))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut ds = ChannelDataset::new(samples, target)?;
        ds.split = self.split;
        ds.scenario = self.scenario.clone();
        Ok(ds)
    }
}

/// Half-wavelength ULA steering vector, entries `exp(i*pi*j*sin(theta))`.
pub fn steering_vector(n: usize, theta_rad: f64) -> CVec {
    let s = std::f64::consts::PI * theta_rad.sin();
    DVector::from_fn(n, |j, _| Complex64::from_polar(1.0, s * j as f64))
}

/// Draws one channel matrix from the geometric cluster model.
pub fn generate_channel(cfg: &ScenarioConfig, rng: &mut Rng) -> Result<ChannelSample> {
    cfg.validate()?;
    let deg = std::f64::consts::PI / 180.0;
    let sector = cfg.sector_halfangle_deg * deg;
    let spread = cfg.angle_spread_deg * deg;

    let los_rx = rng.uniform_f64(-sector, sector);
    let los_tx = rng.uniform_f64(-sector, sector);
    let k_db = rng.uniform_f64(cfg.rician_k_db_range.0, cfg.rician_k_db_range.1);
    let k_lin = 10f64.powf(k_db / 10.0);

    // Path powers: LOS carries K/(K+1) of the unit budget, the scattered
    // paths split the remainder. A single-path scenario is pure LOS.
    let n_scatter = cfg.n_paths - 1;
    let los_power = if n_scatter == 0 { 1.0 } else { k_lin / (k_lin + 1.0) };

    let mut gains: Vec<Complex64> = Vec::with_capacity(cfg.n_paths);
    let mut angles: Vec<(f64, f64)> = Vec::with_capacity(cfg.n_paths);

    let los_phase = rng.uniform_f64(0.0, 2.0 * std::f64::consts::PI);
    gains.push(Complex64::from_polar(los_power.sqrt(), los_phase));
    angles.push((los_rx, los_tx));

    if n_scatter > 0 {
        let scatter_var = (1.0 - los_power) / n_scatter as f64;
        let g = rng.draw_circular_gaussian(n_scatter, scatter_var)?;
        let d_rx = rng.draw_real_gaussian(n_scatter, spread * spread)?;
        let d_tx = rng.draw_real_gaussian(n_scatter, spread * spread)?;
        for p in 0..n_scatter {
            gains.push(g[p]);
            angles.push((los_rx + d_rx[p], los_tx + d_tx[p]));
        }
    }

    // Per-sample power normalization before the dataset-level scaling.
    let total: f64 = gains.iter().map(|g| g.norm_sqr()).sum();
    if total > 0.0 {
        let c = Complex64::new(1.0 / total.sqrt(), 0.0);
        for g in &mut gains {
            *g *= c;
        }
    }

    let mut h = CMat::zeros(cfg.n_rx, cfg.n_tx);
    for (g, (th_rx, th_tx)) in gains.iter().zip(&angles) {
        let a_rx = steering_vector(cfg.n_rx, *th_rx);
        let a_tx = steering_vector(cfg.n_tx, *th_tx);
        h += a_rx * a_tx.adjoint() * *g;
    }
    debug_assert!(all_finite_mat(&h));
    Ok(ChannelSample::new(h))
}

fn generate_split(
    cfg: &ScenarioConfig,
    m: usize,
    rng: &Rng,
    split: Split,
    label: u64,
) -> Result<ChannelDataset> {
    let mut sub = rng.split(label);
    let samples = (0..m)
        .map(|_| generate_channel(cfg, &mut sub))
        .collect::<Result<Vec<_>>>()?;
    let mut ds = ChannelDataset::new(samples, Domain::Spatial)?;
    ds.split = Some(split);
    ds.scenario = Some(cfg.clone());
    Ok(ds)
}

/// Generates train/val/test splits from disjoint RNG substreams and applies
/// the training split's normalization factor to all three.
pub fn make_splits(
    cfg: &ScenarioConfig,
    m_train: usize,
    m_val: usize,
    m_test: usize,
) -> Result<(ChannelDataset, ChannelDataset, ChannelDataset)> {
    if m_train < 1 || m_val < 1 || m_test < 1 {
        return Err(Error::Parameter("split sizes must be >= 1".into()));
    }
    let root = Rng::from_seed(cfg.seed);
    let mut train = generate_split(cfg, m_train, &root, Split::Train, 1)?;
    let mut val = generate_split(cfg, m_val, &root, Split::Val, 2)?;
    let mut test = generate_split(cfg, m_test, &root, Split::Test, 3)?;
    let factor = train.normalize()?;
    val.scale(factor);
    test.scale(factor);
    Ok((train, val, test))
}

/// Writes the dataset file: header `{magic "SBMCH1", version u16, n_rx u32,
/// n_tx u32, m u64, domain_tag u8}` followed by `m * n_rx * n_tx`
/// interleaved (re, im) f64 entries, column-major per sample, little-endian.
pub fn save_dataset(ds: &ChannelDataset, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    container::write_magic(&mut w, DATASET_MAGIC)?;
    container::write_u16(&mut w, DATASET_VERSION)?;
    container::write_u32(&mut w, ds.n_rx as u32)?;
    container::write_u32(&mut w, ds.n_tx as u32)?;
    container::write_u64(&mut w, ds.len() as u64)?;
    container::write_u8(&mut w, match ds.domain {
        Domain::Spatial => 0,
        Domain::Beamspace => 1,
    })?;
    for s in &ds.samples {
        container::write_complex_slice(&mut w, s.mat.as_slice())?;
    }
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<ChannelDataset> {
    let mut r = BufReader::new(File::open(path)?);
    container::expect_magic(&mut r, DATASET_MAGIC, "dataset")?;
    container::expect_version(&mut r, DATASET_VERSION, "dataset")?;
    let n_rx = container::read_u32(&mut r, "dataset")? as usize;
    let n_tx = container::read_u32(&mut r, "dataset")? as usize;
    let m = container::read_u64(&mut r, "dataset")? as usize;
    let domain = match container::read_u8(&mut r, "dataset")? {
        0 => Domain::Spatial,
        1 => Domain::Beamspace,
        t => return Err(Error::Format(format!("dataset: unknown domain tag {t}"))),
    };
    if n_rx == 0 || n_tx == 0 || m == 0 {
        return Err(Error::Format("dataset: corrupt header dimensions".into()));
    }
    let mut samples = Vec::with_capacity(m);
    for _ in 0..m {
        let entries = container::read_complex_vec(&mut r, n_rx * n_tx, "dataset")?;
        samples.push(ChannelSample::new(CMat::from_column_slice(
            n_rx, n_tx, &entries,
        )));
    }
    ChannelDataset::new(samples, domain)
}
