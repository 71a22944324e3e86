//! TOML run configuration shared by every CLI command.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::channel::ScenarioConfig;
use crate::error::{Error, Result};
use crate::eval::{EstimatorSpec, PilotChoice, SweepConfig};
use crate::schedule::NoiseSchedule;
use crate::scorenet::ModelConfig;
use crate::training::TrainConfig;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetSection {
    pub m_train: usize,
    pub m_val: usize,
    pub m_test: usize,
}

impl Default for DatasetSection {
    fn default() -> Self {
        Self {
            m_train: 20_000,
            m_val: 2_000,
            m_test: 2_000,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ScheduleSection {
    pub snr_max_db: f64,
    pub snr_min_db: f64,
    pub k_steps: usize,
    pub gamma: f64,
}

impl Default for ScheduleSection {
    fn default() -> Self {
        Self {
            snr_max_db: 40.0,
            snr_min_db: -22.0,
            k_steps: 100,
            gamma: 1.0,
        }
    }
}

impl ScheduleSection {
    pub fn build(&self) -> Result<NoiseSchedule> {
        NoiseSchedule::build(self.snr_max_db, self.snr_min_db, self.k_steps, self.gamma)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSection {
    pub hidden_channels: usize,
    pub n_layers: usize,
    pub kernel_size: usize,
    pub embed_dim: usize,
    pub embed_channels: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        let d = ModelConfig::default();
        Self {
            hidden_channels: d.hidden_channels,
            n_layers: d.n_layers,
            kernel_size: d.kernel_size,
            embed_dim: d.embed_dim,
            embed_channels: d.embed_channels,
        }
    }
}

impl ModelSection {
    pub fn to_model_config(&self, n_rx: usize, n_tx: usize) -> ModelConfig {
        ModelConfig {
            n_rx,
            n_tx,
            hidden_channels: self.hidden_channels,
            n_layers: self.n_layers,
            kernel_size: self.kernel_size,
            embed_dim: self.embed_dim,
            embed_channels: self.embed_channels,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepSection {
    pub snr_grid_db: Vec<f64>,
    /// Any of: "ls", "scov_lmmse", "gmm", "gmm_kron", "sbm".
    pub estimators: Vec<String>,
    /// Strides for the "sbm" entry; 0 denotes delta_max = K.
    pub sbm_deltas: Vec<usize>,
    pub m_test: usize,
    pub seed: u64,
    /// "dft" or "identity".
    pub pilot: PilotChoice,
    pub timing: bool,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            snr_grid_db: default_snr_grid(),
            estimators: vec![
                "ls".into(),
                "scov_lmmse".into(),
                "gmm".into(),
                "gmm_kron".into(),
                "sbm".into(),
            ],
            sbm_deltas: vec![1, 2, 4, 8, 16, 0],
            m_test: 2_000,
            seed: 0,
            pilot: PilotChoice::Dft,
            timing: false,
        }
    }
}

/// The default evaluation grid: -15 dB to 20 dB in 2.5 dB steps.
pub fn default_snr_grid() -> Vec<f64> {
    (0..15).map(|i| -15.0 + 2.5 * i as f64).collect()
}

impl SweepSection {
    pub fn estimator_specs(&self, k_steps: usize) -> Result<Vec<EstimatorSpec>> {
        let mut out = Vec::new();
        for name in &self.estimators {
            match name.as_str() {
                "ls" => out.push(EstimatorSpec::Ls),
                "scov_lmmse" => out.push(EstimatorSpec::ScovLmmse),
                "gmm" => out.push(EstimatorSpec::Gmm),
                "gmm_kron" => out.push(EstimatorSpec::GmmKron),
                "sbm" => {
                    if self.sbm_deltas.is_empty() {
                        return Err(Error::Config(
                            "sweep.sbm_deltas must be nonempty when \"sbm\" is enabled".into(),
                        ));
                    }
                    for &d in &self.sbm_deltas {
                        if d > k_steps {
                            return Err(Error::Config(format!(
                                "sweep.sbm_deltas entry {d} exceeds schedule.k_steps = {k_steps}"
                            )));
                        }
                        out.push(EstimatorSpec::Sbm { delta: d });
                    }
                }
                other => {
                    return Err(Error::Config(format!(
                        "unknown estimator \"{other}\" (expected ls, scov_lmmse, gmm, gmm_kron, sbm)"
                    )))
                }
            }
        }
        Ok(out)
    }

    pub fn to_sweep_config(&self, k_steps: usize) -> Result<SweepConfig> {
        Ok(SweepConfig {
            snr_grid_db: self.snr_grid_db.clone(),
            estimators: self.estimator_specs(k_steps)?,
            m_test: self.m_test,
            seed: self.seed,
            pilot: self.pilot,
            timing: self.timing,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct GmmSection {
    pub components: usize,
    pub kron_rx_components: usize,
    pub kron_tx_components: usize,
    pub max_iters: usize,
    pub tol: f64,
    /// Reuse fitted priors cached next to the datasets.
    pub cache: bool,
}

impl Default for GmmSection {
    fn default() -> Self {
        Self {
            components: 64,
            kron_rx_components: 8,
            kron_tx_components: 8,
            max_iters: 300,
            tol: 1e-6,
            cache: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimateSection {
    /// "ls" or "sbm".
    pub estimator: String,
    /// Stride for the sbm estimator; 0 denotes delta_max.
    pub delta: usize,
}

impl Default for EstimateSection {
    fn default() -> Self {
        Self {
            estimator: "sbm".into(),
            delta: 1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PathsSection {
    pub data_dir: PathBuf,
    pub model_path: PathBuf,
    pub report_path: PathBuf,
}

impl Default for PathsSection {
    fn default() -> Self {
        Self {
            data_dir: PathBuf::from("data"),
            model_path: PathBuf::from("model.sbmmdl"),
            report_path: PathBuf::from("report.csv"),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Worker thread cap; 0 uses all cores.
    pub workers: usize,
    pub scenario: ScenarioConfig,
    pub dataset: DatasetSection,
    pub schedule: ScheduleSection,
    pub model: ModelSection,
    pub train: TrainConfig,
    pub sweep: SweepSection,
    pub gmm: GmmSection,
    pub estimate: EstimateSection,
    pub paths: PathsSection,
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        let cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| Error::Config(format!("cannot parse {}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Collects every validation failure into one actionable message.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if let Err(e) = self.scenario.validate() {
            problems.push(e.to_string());
        }
        if self.schedule.k_steps < 2 {
            problems.push(format!(
                "schedule.k_steps must be >= 2, got {}",
                self.schedule.k_steps
            ));
        }
        if !(self.schedule.gamma > 0.0) {
            problems.push(format!(
                "schedule.gamma must be > 0, got {}",
                self.schedule.gamma
            ));
        }
        if !(self.schedule.snr_max_db > self.schedule.snr_min_db) {
            problems.push("schedule.snr_max_db must exceed schedule.snr_min_db".into());
        }
        if self.sweep.snr_grid_db.is_empty() {
            problems.push("sweep.snr_grid_db must be nonempty".into());
        }
        if self.sweep.m_test < 1 {
            problems.push("sweep.m_test must be >= 1".into());
        }
        if self.dataset.m_train < 1 || self.dataset.m_val < 1 || self.dataset.m_test < 1 {
            problems.push("dataset sizes must be >= 1".into());
        }
        if let Err(e) = self.train.validate() {
            problems.push(e.to_string());
        }
        if let Err(e) = self
            .model
            .to_model_config(self.scenario.n_rx, self.scenario.n_tx)
            .validate()
        {
            problems.push(e.to_string());
        }
        match self.estimate.estimator.as_str() {
            "ls" | "sbm" => {}
            other => problems.push(format!(
                "estimate.estimator must be \"ls\" or \"sbm\", got \"{other}\""
            )),
        }
        if self.sweep.m_test > self.dataset.m_test {
            problems.push(format!(
                "sweep.m_test ({}) exceeds dataset.m_test ({})",
                self.sweep.m_test, self.dataset.m_test
            ));
        }
        if let Err(e) = self.sweep.estimator_specs(self.schedule.k_steps) {
            problems.push(e.to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }

    /// True when some grid SNR falls outside the schedule's coverage, which
    /// makes the initial-step selection clamp.
    pub fn sweep_grid_clamps(&self) -> bool {
        self.sweep.snr_grid_db.iter().any(|&snr| {
            snr > self.schedule.snr_max_db || snr < self.schedule.snr_min_db
        })
    }

    pub fn dataset_path(&self, split: &str) -> PathBuf {
        self.paths.data_dir.join(format!("{split}.sbmch"))
    }
}
