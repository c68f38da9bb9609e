use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use cogload::cnn::{Pooling, Protocol, TrainSpec};
use cogload::protocols::{ProtocolConfig, DEFAULT_RUNS, FINETUNE_LEARNING_RATE};
use cogload::seed::sha256_hex;
use cogload::windowing::{Normalize, WINDOW_LENGTHS_S};
use serde::{Deserialize, Serialize};

/// Experiment configuration. Paths are resolved against the config file's
/// directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub pilot_manifest: Option<PathBuf>,
    pub wesad_dir: Option<PathBuf>,
    pub survey_manifest: Option<PathBuf>,
    pub response_times: Option<PathBuf>,
    pub window_lens: Vec<u32>,
    pub runs: u32,
    pub master_seed: u64,
    pub train: TrainSpec,
    pub finetune_learning_rate: f64,
    pub normalize: Normalize,
    pub pooling: Pooling,
    /// Pool the survey calibration draws its models from.
    pub calibration_protocol: Protocol,
    pub calibration_window_s: u32,
    pub stress_window_s: u32,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            pilot_manifest: None,
            wesad_dir: None,
            survey_manifest: None,
            response_times: None,
            window_lens: WINDOW_LENGTHS_S.to_vec(),
            runs: DEFAULT_RUNS,
            master_seed: 0,
            train: TrainSpec::default(),
            finetune_learning_rate: FINETUNE_LEARNING_RATE,
            normalize: Normalize::default(),
            pooling: Pooling::default(),
            calibration_protocol: Protocol::WesadPretrained,
            calibration_window_s: 30,
            stress_window_s: 30,
        }
    }
}

/// Inputs a command needs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Input {
    Pilot,
    Wesad,
    Survey,
    ResponseTimes,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: RunConfig =
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [
            &mut cfg.pilot_manifest,
            &mut cfg.wesad_dir,
            &mut cfg.survey_manifest,
            &mut cfg.response_times,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self, needs: &[Input]) -> Result<()> {
        if self.runs == 0 {
            bail!("runs must be at least 1");
        }
        if self.window_lens.is_empty() {
            bail!("no window lengths selected");
        }
        for w in &self.window_lens {
            if !WINDOW_LENGTHS_S.contains(w) {
                bail!("window length {w} s is not one of {WINDOW_LENGTHS_S:?}");
            }
        }
        if self.calibration_protocol == Protocol::StressSource {
            bail!("calibration pool must hold cognitive-load models");
        }
        self.train.validate()?;
        if !(self.finetune_learning_rate > 0.0) {
            bail!("finetune_learning_rate must be positive");
        }
        for need in needs {
            let (path, name, dir) = match need {
                Input::Pilot => (&self.pilot_manifest, "pilot_manifest", false),
                Input::Wesad => (&self.wesad_dir, "wesad_dir", true),
                Input::Survey => (&self.survey_manifest, "survey_manifest", false),
                Input::ResponseTimes => (&self.response_times, "response_times", false),
            };
            let Some(path) = path else {
                bail!("config does not set {name}");
            };
            let ok = if dir { path.is_dir() } else { path.is_file() };
            if !ok {
                bail!("{name} {} does not exist", path.display());
            }
        }
        Ok(())
    }

    pub fn protocol(&self, weights_dir: Option<PathBuf>) -> ProtocolConfig {
        ProtocolConfig {
            train: self.train,
            finetune_learning_rate: self.finetune_learning_rate,
            normalize: self.normalize,
            pooling: self.pooling,
            weights_dir,
        }
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("config serializes").as_bytes())
    }

    /// Key of the pretraining cache for one window length: only the settings
    /// that influence the stress models.
    pub fn pretrain_key(&self, window_len_s: u32) -> String {
        let key = serde_json::json!({
            "version": env!("CARGO_PKG_VERSION"),
            "wesad_dir": self.wesad_dir,
            "runs": self.runs,
            "master_seed": self.master_seed,
            "train": self.train,
            "normalize": self.normalize,
            "pooling": self.pooling,
            "window_len_s": window_len_s,
        });
        sha256_hex(key.to_string().as_bytes())
    }
}
