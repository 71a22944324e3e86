//! Gaussian-mixture channel priors and the conditional-mean estimator
//! built on them.
//!
//! The full variant fits one GMM to vectorized channels via EM. The
//! Kronecker variant fits two zero-mean GMMs on receive-side (columns of H)
//! and transmit-side (rows of H) sample vectors, builds component
//! covariances as Kronecker products of all per-side pairs, rescales them
//! to the training energy, and refines the weights with weight-only EM
//! passes over the vectorized data.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use nalgebra::DVector;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::channel::{ChannelDataset, ChannelSample, Domain};
use crate::container;
use crate::error::{Error, Result};
use crate::numerics::{CMat, CVec, HermitianSolver, Rng};

use super::{decorrelate, PilotObservation};

const GMM_MAGIC: &[u8] = b"SBMGMM1";
const GMM_VERSION: u16 = 1;
const COV_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GmmStructure {
    Full,
    Kronecker,
}

#[derive(Debug, Clone)]
pub struct GmmPrior {
    pub weights: Vec<f64>,
    pub means: Vec<CVec>,
    pub covariances: Vec<CMat>,
    pub structure: GmmStructure,
}

impl GmmPrior {
    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    fn validate(&self) -> Result<()> {
        let c = self.weights.len();
        if c == 0 || self.means.len() != c || self.covariances.len() != c {
            return Err(Error::Dimension("GMM component count mismatch".into()));
        }
        let sum: f64 = self.weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Numeric(format!("GMM weights sum to {sum}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EmOptions {
    pub max_iters: usize,
    /// Relative log-likelihood improvement below which EM stops.
    pub tol: f64,
}

impl Default for EmOptions {
    fn default() -> Self {
        Self {
            max_iters: 300,
            tol: 1e-6,
        }
    }
}

/// `ln N_C(x; mu, C) = -n ln(pi) - ln det C - (x-mu)^H C^{-1} (x-mu)`
fn log_density(solver: &HermitianSolver, ln_det: f64, n: usize, diff: &CVec) -> f64 {
    let quad = diff.dotc(&solver.solve_vec(diff)).re;
    -(n as f64) * std::f64::consts::PI.ln() - ln_det - quad
}

fn floored_solver(cov: &CMat) -> Result<(HermitianSolver, CMat)> {
    match HermitianSolver::new(cov) {
        Ok(s) if s.jitter() == 0.0 => Ok((s, cov.clone())),
        _ => {
            // component collapse: floor the covariance instead of failing
            let mut c = cov.clone();
            for i in 0..c.nrows() {
                c[(i, i)] += Complex64::new(COV_FLOOR, 0.0);
            }
            let s = HermitianSolver::new(&c)?;
            Ok((s, c))
        }
    }
}

fn hermitianize(m: &mut CMat) {
    let adj = m.adjoint();
    *m += adj;
    *m *= Complex64::new(0.5, 0.0);
}

struct EStep {
    /// Row-major responsibilities, `resp[m * c_count + c]`.
    resp: Vec<f64>,
    log_likelihood: f64,
}

fn e_step(data: &[CVec], prior: &GmmPrior) -> Result<EStep> {
    let c_count = prior.n_components();
    let n = prior.dim();
    let solvers: Vec<(HermitianSolver, f64)> = prior
        .covariances
        .iter()
        .map(|c| {
            let (s, _) = floored_solver(c)?;
            let ld = s.ln_det();
            Ok((s, ld))
        })
        .collect::<Result<Vec<_>>>()?;

    let m = data.len();
    let mut resp = vec![0.0f64; m * c_count];
    let ll: f64 = resp
        .par_chunks_mut(c_count * 256)
        .zip(data.par_chunks(256))
        .map(|(resp_chunk, data_chunk)| {
            let mut ll_chunk = 0.0;
            for (row, x) in resp_chunk.chunks_mut(c_count).zip(data_chunk) {
                let mut max_log = f64::NEG_INFINITY;
                for (c, (solver, ln_det)) in solvers.iter().enumerate() {
                    let diff = x - &prior.means[c];
                    let lp = prior.weights[c].max(1e-300).ln()
                        + log_density(solver, *ln_det, n, &diff);
                    row[c] = lp;
                    max_log = max_log.max(lp);
                }
                if !max_log.is_finite() {
                    // degenerate densities: uniform fallback
                    log::warn!("GMM responsibilities degenerate; falling back to uniform");
                    row.iter_mut().for_each(|r| *r = 1.0 / c_count as f64);
                    continue;
                }
                let lse = max_log
                    + row
                        .iter()
                        .map(|&lp| (lp - max_log).exp())
                        .sum::<f64>()
                        .ln();
                row.iter_mut().for_each(|r| *r = (*r - lse).exp());
                ll_chunk += lse;
            }
            ll_chunk
        })
        .collect::<Vec<f64>>()
        .iter()
        .sum();
    Ok(EStep {
        resp,
        log_likelihood: ll,
    })
}

/// M-step; `update_means = false` keeps components zero-mean.
fn m_step(data: &[CVec], resp: &[f64], prior: &mut GmmPrior, update_means: bool) {
    let c_count = prior.n_components();
    let m = data.len();
    let n = prior.dim();
    let updates: Vec<(f64, CVec, CMat)> = (0..c_count)
        .into_par_iter()
        .map(|c| {
            let mut nc = 0.0;
            let mut mean = CVec::zeros(n);
            let mut sum_outer = CMat::zeros(n, n);
            for (mi, x) in data.iter().enumerate() {
                let r = resp[mi * c_count + c];
                if r == 0.0 {
                    continue;
                }
                nc += r;
                if update_means {
                    mean += x * Complex64::new(r, 0.0);
                }
                sum_outer.gerc(Complex64::new(r, 0.0), x, x, Complex64::new(1.0, 0.0));
            }
            if nc > 0.0 {
                if update_means {
                    mean /= Complex64::new(nc, 0.0);
                }
                // sum r (x-mu)(x-mu)^H = sum r x x^H - nc mu mu^H
                sum_outer.gerc(
                    Complex64::new(-nc, 0.0),
                    &mean,
                    &mean,
                    Complex64::new(1.0, 0.0),
                );
                sum_outer /= Complex64::new(nc, 0.0);
            }
            hermitianize(&mut sum_outer);
            (nc / m as f64, mean, sum_outer)
        })
        .collect();
    for (c, (w, mean, cov)) in updates.into_iter().enumerate() {
        prior.weights[c] = w;
        prior.means[c] = mean;
        prior.covariances[c] = cov;
    }
    // keep weights a probability vector under accumulated rounding
    let sum: f64 = prior.weights.iter().sum();
    if sum > 0.0 {
        prior.weights.iter_mut().for_each(|w| *w /= sum);
    }
}

fn run_em(
    data: &[CVec],
    prior: &mut GmmPrior,
    opts: &EmOptions,
    update_means: bool,
    update_cov: bool,
) -> Result<f64> {
    let mut last_ll = f64::NEG_INFINITY;
    for _ in 0..opts.max_iters {
        let e = e_step(data, prior)?;
        if update_cov {
            m_step(data, &e.resp, prior, update_means);
        } else {
            // weight-only refinement
            let c_count = prior.n_components();
            for c in 0..c_count {
                let nc: f64 = (0..data.len()).map(|mi| e.resp[mi * c_count + c]).sum();
                prior.weights[c] = nc / data.len() as f64;
            }
        }
        if last_ll.is_finite() {
            let rel = (e.log_likelihood - last_ll).abs() / last_ll.abs().max(1e-12);
            if rel < opts.tol {
                return Ok(e.log_likelihood);
            }
        }
        last_ll = e.log_likelihood;
    }
    Ok(last_ll)
}

fn dataset_vectors(ds: &ChannelDataset) -> Vec<CVec> {
    ds.samples.iter().map(|s| s.to_vec()).collect()
}

fn init_prior(data: &[CVec], n_components: usize, rng: &mut Rng) -> Result<GmmPrior> {
    let n = data[0].len();
    let m = data.len();
    if n_components == 0 || n_components > m {
        return Err(Error::Parameter(format!(
            "n_components must lie in [1, {m}], got {n_components}"
        )));
    }
    // Symmetry-breaking init: cluster samples by direction coherence with
    // random anchors and start each component from its cluster covariance.
    // Identical initial covariances would leave zero-mean EM stuck at the
    // saddle point where every component stays the global Gaussian.
    let picks = rng.sample_indices(m, n_components);
    let anchors: Vec<CVec> = picks
        .iter()
        .map(|&i| {
            let norm = data[i].norm().max(1e-30);
            &data[i] / Complex64::new(norm, 0.0)
        })
        .collect();
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); n_components];
    for (i, x) in data.iter().enumerate() {
        let xn = x.norm().max(1e-30);
        let best = anchors
            .iter()
            .enumerate()
            .map(|(c, a)| (c, a.dotc(x).norm() / xn))
            .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .map(|(c, _)| c)
            .unwrap_or(0);
        groups[best].push(i);
    }
    let covariances: Vec<CMat> = groups
        .iter()
        .map(|members| {
            let mut cov = CMat::zeros(n, n);
            // tiny clusters fall back to a random subset
            let subset;
            let idx: &[usize] = if members.len() >= 2 {
                members
            } else {
                subset = rng.sample_indices(m, (4 * n).min(m));
                &subset
            };
            for &i in idx {
                cov.gerc(
                    Complex64::new(1.0, 0.0),
                    &data[i],
                    &data[i],
                    Complex64::new(1.0, 0.0),
                );
            }
            cov /= Complex64::new(idx.len() as f64, 0.0);
            for i in 0..n {
                cov[(i, i)] += Complex64::new(COV_FLOOR, 0.0);
            }
            cov
        })
        .collect();
    Ok(GmmPrior {
        weights: vec![1.0 / n_components as f64; n_components],
        means: picks.iter().map(|&i| data[i].clone()).collect(),
        covariances,
        structure: GmmStructure::Full,
    })
}

/// Fits a full-covariance GMM with EM on a spatial-domain training set.
pub fn fit_full(
    ds: &ChannelDataset,
    n_components: usize,
    opts: &EmOptions,
    rng: &mut Rng,
) -> Result<GmmPrior> {
    if ds.domain != Domain::Spatial {
        return Err(Error::Parameter(
            "GMM fitting expects a spatial-domain dataset".into(),
        ));
    }
    let data = dataset_vectors(ds);
    let mut prior = init_prior(&data, n_components, rng)?;
    run_em(&data, &mut prior, opts, true, true)?;
    prior.validate()?;
    Ok(prior)
}

/// Fits the Kronecker-structured GMM: per-side zero-mean GMMs on receive
/// and transmit sample vectors, all-pairs Kronecker covariances, energy
/// calibration, then weight-only EM refinement.
pub fn fit_kron(
    ds: &ChannelDataset,
    rx_components: usize,
    tx_components: usize,
    opts: &EmOptions,
    rng: &mut Rng,
) -> Result<GmmPrior> {
    if ds.domain != Domain::Spatial {
        return Err(Error::Parameter(
            "GMM fitting expects a spatial-domain dataset".into(),
        ));
    }
    let (n_rx, n_tx) = (ds.n_rx, ds.n_tx);
    // side datasets: columns of H for rx, columns of H^T (rows of H) for tx
    let mut rx_data = Vec::with_capacity(ds.len() * n_tx);
    let mut tx_data = Vec::with_capacity(ds.len() * n_rx);
    for s in &ds.samples {
        for j in 0..n_tx {
            rx_data.push(CVec::from_column_slice(s.mat.column(j).as_slice()));
        }
        let t = s.mat.transpose();
        for i in 0..n_rx {
            tx_data.push(CVec::from_column_slice(t.column(i).as_slice()));
        }
    }

    let side_opts = EmOptions {
        max_iters: opts.max_iters,
        tol: opts.tol,
    };
    let mut rx_prior = init_prior(&rx_data, rx_components, &mut rng.split(1))?;
    rx_prior.means.iter_mut().for_each(|m| m.fill(Complex64::new(0.0, 0.0)));
    run_em(&rx_data, &mut rx_prior, &side_opts, false, true)?;
    let mut tx_prior = init_prior(&tx_data, tx_components, &mut rng.split(2))?;
    tx_prior.means.iter_mut().for_each(|m| m.fill(Complex64::new(0.0, 0.0)));
    run_em(&tx_data, &mut tx_prior, &side_opts, false, true)?;

    // all-pairs Kronecker covariances; vec(H) has covariance C_tx ⊗ C_rx
    let n = n_rx * n_tx;
    let mut weights = Vec::with_capacity(rx_components * tx_components);
    let mut covariances = Vec::with_capacity(rx_components * tx_components);
    for (j, ct) in tx_prior.covariances.iter().enumerate() {
        for (i, cr) in rx_prior.covariances.iter().enumerate() {
            weights.push(tx_prior.weights[j] * rx_prior.weights[i]);
            covariances.push(ct.kronecker(cr));
        }
    }
    // the per-side estimates each absorb the other side's average power, so
    // calibrate the mixture energy back to the training data
    let data = dataset_vectors(ds);
    let target: f64 = data.iter().map(|x| x.norm_squared()).sum::<f64>() / data.len() as f64;
    let current: f64 = weights
        .iter()
        .zip(&covariances)
        .map(|(w, c)| w * c.trace().re)
        .sum();
    if current > 0.0 {
        let alpha = Complex64::new(target / current, 0.0);
        covariances.iter_mut().for_each(|c| *c *= alpha);
    }

    let mut prior = GmmPrior {
        weights,
        means: vec![CVec::zeros(n); rx_components * tx_components],
        covariances,
        structure: GmmStructure::Kronecker,
    };
    let refine = EmOptions {
        max_iters: opts.max_iters.min(20),
        tol: opts.tol,
    };
    run_em(&data, &mut prior, &refine, false, false)?;
    prior.validate()?;
    Ok(prior)
}

/// Per-noise-level filter bank: factorizations of `C_c + eta^2 I` shared
/// across all observations at one SNR.
pub struct GmmFilterBank<'a> {
    prior: &'a GmmPrior,
    solvers: Vec<(HermitianSolver, f64)>,
}

impl<'a> GmmFilterBank<'a> {
    pub fn new(prior: &'a GmmPrior, eta_sq: f64) -> Result<Self> {
        prior.validate()?;
        let n = prior.dim();
        let solvers = prior
            .covariances
            .iter()
            .map(|c| {
                let mut m = c.clone();
                for i in 0..n {
                    m[(i, i)] += Complex64::new(eta_sq, 0.0);
                }
                let (s, _) = floored_solver(&m)?;
                let ld = s.ln_det();
                Ok((s, ld))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { prior, solvers })
    }

    /// Conditional-mean estimate from the decorrelated observation:
    /// responsibilities under `N_C(y; mu_c, C_c + eta^2 I)`, then the
    /// responsibility-weighted LMMSE updates.
    pub fn estimate_decorrelated(&self, y: &CVec) -> CVec {
        let n = y.len();
        let c_count = self.prior.n_components();
        let mut logs = vec![0.0f64; c_count];
        let mut max_log = f64::NEG_INFINITY;
        for c in 0..c_count {
            let diff = y - &self.prior.means[c];
            let (solver, ln_det) = &self.solvers[c];
            logs[c] =
                self.prior.weights[c].max(1e-300).ln() + log_density(solver, *ln_det, n, &diff);
            max_log = max_log.max(logs[c]);
        }
        let resp: Vec<f64> = if max_log.is_finite() {
            let lse = max_log
                + logs
                    .iter()
                    .map(|&lp| (lp - max_log).exp())
                    .sum::<f64>()
                    .ln();
            logs.iter().map(|&lp| (lp - lse).exp()).collect()
        } else {
            log::warn!("GMM estimate: degenerate responsibilities, using uniform");
            vec![1.0 / c_count as f64; c_count]
        };
        let mut out = CVec::zeros(n);
        for c in 0..c_count {
            if resp[c] < 1e-14 {
                continue;
            }
            let diff = y - &self.prior.means[c];
            let filtered = &self.prior.covariances[c] * self.solvers[c].0.solve_vec(&diff);
            out += (&self.prior.means[c] + filtered) * Complex64::new(resp[c], 0.0);
        }
        out
    }
}

/// One-shot GMM estimate for a single observation.
pub fn gmm_estimate(obs: &PilotObservation, prior: &GmmPrior) -> Result<ChannelSample> {
    let n = obs.n_rx * obs.n_tx;
    if prior.dim() != n {
        return Err(Error::Dimension(format!(
            "GMM dim {} does not match observation dim {n}",
            prior.dim()
        )));
    }
    let bank = GmmFilterBank::new(prior, obs.eta_sq)?;
    let y = decorrelate(obs)?;
    Ok(ChannelSample::from_vec(
        &bank.estimate_decorrelated(&y),
        obs.n_rx,
        obs.n_tx,
    ))
}

pub fn save_prior(prior: &GmmPrior, path: &Path) -> Result<()> {
    prior.validate()?;
    let mut w = BufWriter::new(File::create(path)?);
    container::write_magic(&mut w, GMM_MAGIC)?;
    container::write_u16(&mut w, GMM_VERSION)?;
    container::write_u8(&mut w, match prior.structure {
        GmmStructure::Full => 0,
        GmmStructure::Kronecker => 1,
    })?;
    container::write_u32(&mut w, prior.dim() as u32)?;
    container::write_u32(&mut w, prior.n_components() as u32)?;
    for c in 0..prior.n_components() {
        container::write_f64(&mut w, prior.weights[c])?;
        container::write_complex_slice(&mut w, prior.means[c].as_slice())?;
        container::write_complex_slice(&mut w, prior.covariances[c].as_slice())?;
    }
    Ok(())
}

pub fn load_prior(path: &Path) -> Result<GmmPrior> {
    let mut r = BufReader::new(File::open(path)?);
    container::expect_magic(&mut r, GMM_MAGIC, "gmm prior")?;
    container::expect_version(&mut r, GMM_VERSION, "gmm prior")?;
    let structure = match container::read_u8(&mut r, "gmm prior")? {
        0 => GmmStructure::Full,
        1 => GmmStructure::Kronecker,
        t => return Err(Error::Format(format!("gmm prior: unknown structure {t}"))),
    };
    let n = container::read_u32(&mut r, "gmm prior")? as usize;
    let c_count = container::read_u32(&mut r, "gmm prior")? as usize;
    if n == 0 || c_count == 0 {
        return Err(Error::Format("gmm prior: empty header".into()));
    }
    let mut weights = Vec::with_capacity(c_count);
    let mut means = Vec::with_capacity(c_count);
    let mut covariances = Vec::with_capacity(c_count);
    for _ in 0..c_count {
        weights.push(container::read_f64(&mut r, "gmm prior")?);
        means.push(DVector::from_vec(container::read_complex_vec(
            &mut r, n, "gmm prior",
        )?));
        let entries = container::read_complex_vec(&mut r, n * n, "gmm prior")?;
        covariances.push(CMat::from_column_slice(n, n, &entries));
    }
    let prior = GmmPrior {
        weights,
        means,
        covariances,
        structure,
    };
    prior.validate()?;
    Ok(prior)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{ChannelDataset, ChannelSample};
    use crate::estimators::{observe, scov_lmmse, Pilot};
    use approx::assert_relative_eq;

    fn gaussian_dataset(seed: u64, m: usize, n_rx: usize, n_tx: usize) -> ChannelDataset {
        let mut rng = Rng::from_seed(seed);
        let samples = (0..m)
            .map(|_| {
                ChannelSample::from_vec(
                    &rng.draw_circular_gaussian(n_rx * n_tx, 1.0).unwrap(),
                    n_rx,
                    n_tx,
                )
            })
            .collect();
        ChannelDataset::new(samples, Domain::Spatial).unwrap()
    }

    #[test]
    fn single_component_recovers_sample_statistics() {
        let ds = gaussian_dataset(1, 2000, 2, 2);
        let prior = fit_full(&ds, 1, &EmOptions::default(), &mut Rng::from_seed(2)).unwrap();
        assert_eq!(prior.n_components(), 1);
        assert_relative_eq!(prior.weights[0], 1.0, epsilon = 1e-12);

        let data = dataset_vectors(&ds);
        let m = data.len() as f64;
        let mut mean = CVec::zeros(4);
        for x in &data {
            mean += x;
        }
        mean /= Complex64::new(m, 0.0);
        assert!((prior.means[0].clone() - &mean).norm() < 1e-8);
        let mut cov = CMat::zeros(4, 4);
        for x in &data {
            let d = x - &mean;
            cov.gerc(Complex64::new(1.0, 0.0), &d, &d, Complex64::new(1.0, 0.0));
        }
        cov /= Complex64::new(m, 0.0);
        // EM adds the floor once at init; fitted covariance is the sample one
        assert!((prior.covariances[0].clone() - &cov).norm() / cov.norm() < 1e-4);
    }

    #[test]
    fn weights_sum_to_one() {
        let ds = gaussian_dataset(3, 300, 2, 2);
        let prior = fit_full(&ds, 3, &EmOptions::default(), &mut Rng::from_seed(4)).unwrap();
        assert_relative_eq!(prior.weights.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn recovers_two_component_synthetic_mixture() {
        // well-separated means, weights 0.7 / 0.3
        let mut rng = Rng::from_seed(5);
        let n = 4;
        let mut samples = Vec::new();
        for i in 0..3000 {
            let comp = if (i as f64) < 0.7 * 3000.0 { 0 } else { 1 };
            let center = if comp == 0 { 6.0 } else { -6.0 };
            let mut v = rng.draw_circular_gaussian(n, 0.5).unwrap();
            v.iter_mut().for_each(|z| *z += Complex64::new(center, 0.0));
            samples.push(ChannelSample::from_vec(&v, 2, 2));
        }
        let ds = ChannelDataset::new(samples, Domain::Spatial).unwrap();
        let prior = fit_full(&ds, 2, &EmOptions::default(), &mut Rng::from_seed(6)).unwrap();
        let mut ws = prior.weights.clone();
        ws.sort_by(|a, b| b.partial_cmp(a).unwrap());
        assert!((ws[0] - 0.7).abs() < 0.05, "weights {ws:?}");
        assert!((ws[1] - 0.3).abs() < 0.05);
    }

    #[test]
    fn one_component_zero_mean_reduces_to_scov_lmmse() {
        let ds = gaussian_dataset(7, 500, 2, 2);
        let data = dataset_vectors(&ds);
        let mut cov = CMat::zeros(4, 4);
        for x in &data {
            cov.gerc(Complex64::new(1.0, 0.0), x, x, Complex64::new(1.0, 0.0));
        }
        cov /= Complex64::new(data.len() as f64, 0.0);
        let prior = GmmPrior {
            weights: vec![1.0],
            means: vec![CVec::zeros(4)],
            covariances: vec![cov.clone()],
            structure: GmmStructure::Full,
        };
        let mut rng = Rng::from_seed(8);
        for _ in 0..20 {
            let h = ChannelSample::from_vec(&rng.draw_circular_gaussian(4, 1.0).unwrap(), 2, 2);
            let obs = observe(&h, &Pilot::Dft, 0.4, &mut rng).unwrap();
            let a = gmm_estimate(&obs, &prior).unwrap();
            let b = scov_lmmse(&obs, &cov).unwrap();
            let rel = (a.mat.clone() - &b.mat).norm() / b.mat.norm();
            assert!(rel < 1e-6, "relative gap {rel}");
        }
    }

    #[test]
    fn infinite_noise_returns_prior_mean() {
        let mut rng = Rng::from_seed(9);
        let mean0 = rng.draw_circular_gaussian(4, 1.0).unwrap();
        let mean1 = rng.draw_circular_gaussian(4, 1.0).unwrap();
        let prior = GmmPrior {
            weights: vec![0.6, 0.4],
            means: vec![mean0.clone(), mean1.clone()],
            covariances: vec![CMat::identity(4, 4), CMat::identity(4, 4)],
            structure: GmmStructure::Full,
        };
        let h = ChannelSample::from_vec(&rng.draw_circular_gaussian(4, 1.0).unwrap(), 2, 2);
        let obs = observe(&h, &Pilot::Identity, 1e14, &mut rng).unwrap();
        let est = gmm_estimate(&obs, &prior).unwrap();
        let want = mean0 * Complex64::new(0.6, 0.0) + mean1 * Complex64::new(0.4, 0.0);
        assert!((est.to_vec() - want).norm() < 1e-3);
    }

    #[test]
    fn responsibilities_concentrate_near_component() {
        let n = 4;
        let mut mean0 = CVec::zeros(n);
        mean0.iter_mut().for_each(|z| *z = Complex64::new(10.0, 0.0));
        let mean1 = -mean0.clone();
        let prior = GmmPrior {
            weights: vec![0.5, 0.5],
            means: vec![mean0.clone(), mean1],
            covariances: vec![CMat::identity(n, n), CMat::identity(n, n)],
            structure: GmmStructure::Full,
        };
        let bank = GmmFilterBank::new(&prior, 0.1).unwrap();
        // observation near component 0: estimate must be dominated by it;
        // verify via the direct density ratio
        let y = &mean0 * Complex64::new(1.02, 0.0);
        let est = bank.estimate_decorrelated(&y);
        let lmmse0 = &prior.means[0]
            + &prior.covariances[0] * bank.solvers[0].0.solve_vec(&(&y - &prior.means[0]));
        assert!(
            (est.clone() - &lmmse0).norm() / lmmse0.norm() < 0.01,
            "responsibility mass leaked away from the near component"
        );
    }

    #[test]
    fn kron_fit_approximates_true_kronecker_covariance() {
        // draw from a single zero-mean component with C = C_tx ⊗ C_rx
        let (n_rx, n_tx) = (4, 2);
        let mut rng = Rng::from_seed(10);
        let ar = CMat::from_fn(n_rx, n_rx, |_, _| rng.draw_circular_gaussian(1, 1.0).unwrap()[0]);
        let mut c_rx = &ar * ar.adjoint() + CMat::identity(n_rx, n_rx) * Complex64::new(0.2, 0.0);
        c_rx *= Complex64::new(n_rx as f64 / c_rx.trace().re, 0.0);
        let at = CMat::from_fn(n_tx, n_tx, |_, _| rng.draw_circular_gaussian(1, 1.0).unwrap()[0]);
        let mut c_tx = &at * at.adjoint() + CMat::identity(n_tx, n_tx) * Complex64::new(0.2, 0.0);
        c_tx *= Complex64::new(n_tx as f64 / c_tx.trace().re, 0.0);
        let c_full = c_tx.kronecker(&c_rx);
        let chol = c_full.clone().cholesky().unwrap().l();
        let n = n_rx * n_tx;
        let samples: Vec<ChannelSample> = (0..4000)
            .map(|_| {
                ChannelSample::from_vec(
                    &(&chol * rng.draw_circular_gaussian(n, 1.0).unwrap()),
                    n_rx,
                    n_tx,
                )
            })
            .collect();
        let ds = ChannelDataset::new(samples, Domain::Spatial).unwrap();
        let prior = fit_kron(&ds, 1, 1, &EmOptions::default(), &mut Rng::from_seed(11)).unwrap();
        assert_eq!(prior.n_components(), 1);
        let rel = (prior.covariances[0].clone() - &c_full).norm() / c_full.norm();
        assert!(rel < 0.1, "kron covariance relative error {rel}");
    }

    #[test]
    fn prior_round_trip() {
        let ds = gaussian_dataset(12, 200, 2, 2);
        let prior = fit_full(&ds, 2, &EmOptions::default(), &mut Rng::from_seed(13)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.sbmgmm");
        save_prior(&prior, &path).unwrap();
        let loaded = load_prior(&path).unwrap();
        assert_eq!(loaded.weights, prior.weights);
        for (a, b) in loaded.means.iter().zip(&prior.means) {
            assert_eq!(a.as_slice(), b.as_slice());
        }
        for (a, b) in loaded.covariances.iter().zip(&prior.covariances) {
            assert_eq!(a.as_slice(), b.as_slice());
        }
    }
}
