use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::augment::MaskSpec;
use crate::embedder::TrainConfig;
use crate::error::{Error, Result};
use crate::features::MelConfig;
use crate::io::{read_text, stage_seed};
use crate::plda::PldaConfig;
use crate::synth::FeatureSynthConfig;

/// Embedding-level synthetic population for the `synth` subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSettings {
    pub d: usize,
    pub n_speakers: usize,
    pub utts_per_speaker: usize,
    /// `Σ_b = between · I`.
    pub between: f64,
    /// `Σ_w = within · I`.
    pub within: f64,
    /// Apply a random rotation in the anonymization shift.
    pub rotate: bool,
    /// Std of the anonymization bias vector.
    pub bias_scale: f64,
    pub noise_scale: f64,
}

impl Default for SynthSettings {
    fn default() -> Self {
        Self {
            d: 8,
            n_speakers: 50,
            utts_per_speaker: 10,
            between: 4.0,
            within: 1.0,
            rotate: true,
            bias_scale: 1.0,
            noise_scale: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DemoSettings {
    pub population: FeatureSynthConfig,
    /// The last `eval_speakers` speakers are held out for trials.
    pub eval_speakers: usize,
    /// Train the embedder on orig ∪ anon (otherwise orig only).
    pub fuse: bool,
}

impl Default for DemoSettings {
    fn default() -> Self {
        Self {
            population: FeatureSynthConfig::default(),
            eval_speakers: 10,
            fuse: true,
        }
    }
}

/// Input paths; each may also be given as a flag, which takes precedence.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub manifest: Option<PathBuf>,
    pub orig_manifest: Option<PathBuf>,
    pub anon_manifest: Option<PathBuf>,
    pub features: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub trials: Option<PathBuf>,
    pub scores: Option<PathBuf>,
    pub groups: Option<PathBuf>,
}

/// Every tunable of the pipeline. Stage seeds (`mask.seed`, `train.seed`)
/// are derived from `seed` during resolution and overwrite file values.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub mel: MelConfig,
    pub mask: MaskSpec,
    pub train: TrainConfig,
    pub plda: PldaConfig,
    pub synth: SynthSettings,
    pub demo: DemoSettings,
    pub paths: Paths,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                serde_json::from_str(&read_text(p)?).map_err(|e| Error::InvalidConfig(format!("{}: {e}", p.display())))
            }
        }
    }

    /// Applies the seed override and fans the seed out to stage seeds.
    pub fn resolve(mut self, seed: Option<u64>) -> Result<Self> {
        if let Some(s) = seed {
            self.seed = s;
        }
        self.mask.seed = stage_seed(self.seed, "specaugment");
        self.train.seed = stage_seed(self.seed, "train-embedder");
        self.train.validate()?;
        let s = &self.synth;
        if s.d == 0 || s.n_speakers == 0 || s.utts_per_speaker == 0 {
            return Err(Error::InvalidConfig("synth sizes must be positive".into()));
        }
        if !(s.between > 0.0 && s.within > 0.0 && s.noise_scale >= 0.0 && s.bias_scale >= 0.0) {
            return Err(Error::InvalidConfig(
                "synth scales: between, within > 0 and bias, noise ≥ 0".into(),
            ));
        }
        let d = &self.demo;
        if d.eval_speakers < 2 || d.eval_speakers >= d.population.n_speakers {
            return Err(Error::InvalidConfig(
                "demo.eval_speakers must be ≥ 2 and leave training speakers".into(),
            ));
        }
        if d.population.utts_per_speaker < 2 {
            return Err(Error::InvalidConfig(
                "demo population needs ≥ 2 utterances per speaker".into(),
            ));
        }
        Ok(self)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }
}
