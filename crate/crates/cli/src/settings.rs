use std::fs;
use std::path::{Path, PathBuf};

use gazeloc::data::{Strictness, SynthConfig};
use gazeloc::dqn::Hyperparameters;
use gazeloc::sdl::SdlConfig;
use serde::{Deserialize, Serialize};

/// Flat key-value run configuration. Every key is optional; command-line
/// flags win over values read from a file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub data_dir: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub strict: Option<bool>,

    pub n_cases: Option<usize>,
    pub image_size: Option<usize>,
    pub gaze_length: Option<usize>,
    pub lesion_contrast: Option<f64>,

    pub train_n: Option<usize>,
    pub test_n: Option<usize>,

    pub gamma: Option<f64>,
    pub epsilon_start: Option<f64>,
    pub epsilon_decay: Option<f64>,
    pub epsilon_min: Option<f64>,
    pub learning_rate: Option<f64>,
    pub n_memory: Option<usize>,
    pub n_batch: Option<usize>,
    pub episodes: Option<usize>,
    pub agent_square: Option<usize>,
    pub overlay_alpha: Option<f32>,
    pub eval_every: Option<usize>,
    pub checkpoint_every: Option<usize>,

    pub sdl_epochs: Option<usize>,
    pub sdl_learning_rate: Option<f64>,
    pub sdl_n_batch: Option<usize>,
    pub divergence_ratio: Option<f64>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| format!("invalid config {}: {e}", path.display()))
    }

    /// Fills every unset field of `self` from `fallback`.
    pub fn or(self, fallback: FileConfig) -> FileConfig {
        macro_rules! pick {
            ($($f:ident),*) => { FileConfig { $($f: self.$f.or(fallback.$f)),* } };
        }
        pick!(
            seed,
            data_dir,
            out_dir,
            strict,
            n_cases,
            image_size,
            gaze_length,
            lesion_contrast,
            train_n,
            test_n,
            gamma,
            epsilon_start,
            epsilon_decay,
            epsilon_min,
            learning_rate,
            n_memory,
            n_batch,
            episodes,
            agent_square,
            overlay_alpha,
            eval_every,
            checkpoint_every,
            sdl_epochs,
            sdl_learning_rate,
            sdl_n_batch,
            divergence_ratio
        )
    }

    pub fn data_dir(&self) -> PathBuf {
        self.data_dir.clone().unwrap_or_else(|| PathBuf::from("data"))
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out_dir.clone().unwrap_or_else(|| PathBuf::from("runs"))
    }

    pub fn strictness(&self) -> Strictness {
        match self.strict {
            Some(false) => Strictness::Warn,
            _ => Strictness::Reject,
        }
    }

    pub fn split_sizes(&self) -> (usize, usize) {
        (self.train_n.unwrap_or(70), self.test_n.unwrap_or(30))
    }

    pub fn synth(&self) -> SynthConfig {
        let mut cfg = self
            .image_size
            .map_or_else(SynthConfig::default, SynthConfig::with_size);
        if let Some(n) = self.gaze_length {
            cfg.gaze_len = n;
        }
        if let Some(c) = self.lesion_contrast {
            cfg.lesion_contrast = c;
        }
        cfg
    }

    pub fn hyperparameters(&self, seed: u64) -> Hyperparameters {
        let d = Hyperparameters::default();
        Hyperparameters {
            gamma: self.gamma.unwrap_or(d.gamma),
            epsilon_start: self.epsilon_start.unwrap_or(d.epsilon_start),
            epsilon_decay_per_episode: self.epsilon_decay.unwrap_or(d.epsilon_decay_per_episode),
            epsilon_min: self.epsilon_min.unwrap_or(d.epsilon_min),
            learning_rate: self.learning_rate.unwrap_or(d.learning_rate),
            n_memory: self.n_memory.unwrap_or(d.n_memory),
            n_batch: self.n_batch.unwrap_or(d.n_batch),
            episodes: self.episodes.unwrap_or(d.episodes),
            agent_square: self.agent_square.unwrap_or(d.agent_square),
            overlay_alpha: self.overlay_alpha.unwrap_or(d.overlay_alpha),
            eval_every: self.eval_every.unwrap_or(d.eval_every),
            seed,
        }
    }

    pub fn sdl(&self, seed: u64) -> SdlConfig {
        let d = SdlConfig::default();
        SdlConfig {
            epochs: self.sdl_epochs.unwrap_or(d.epochs),
            learning_rate: self.sdl_learning_rate.unwrap_or(d.learning_rate),
            n_batch: self.sdl_n_batch.unwrap_or(d.n_batch),
            divergence_ratio: self.divergence_ratio.unwrap_or(d.divergence_ratio),
            seed,
        }
    }
}
