//! Data fusion of original and anonymized manifests, and SpecAugment-style
//! time/frequency masking of feature matrices.

use std::collections::{HashMap, HashSet};
use std::fmt;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Orig,
    Anon,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::Orig => "orig",
            Source::Anon => "anon",
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UtteranceRecord {
    #[serde(rename = "utt")]
    pub utt_id: String,
    #[serde(rename = "spk")]
    pub spk_id: String,
    pub path: String,
    pub source: Source,
}

impl UtteranceRecord {
    pub fn new(utt_id: impl Into<String>, spk_id: impl Into<String>, path: impl Into<String>, source: Source) -> Self {
        Self {
            utt_id: utt_id.into(),
            spk_id: spk_id.into(),
            path: path.into(),
            source,
        }
    }

    fn key(&self) -> (&str, Source) {
        (&self.utt_id, self.source)
    }
}

/// Ordered list of utterance records, unique on `(utt_id, source)`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DatasetManifest {
    records: Vec<UtteranceRecord>,
}

impl DatasetManifest {
    pub fn new(records: Vec<UtteranceRecord>) -> Result<Self> {
        let mut seen = HashSet::new();
        for r in &records {
            if r.utt_id.is_empty() {
                return Err(Error::Precondition("empty utterance id".into()));
            }
            if !seen.insert(r.key()) {
                return Err(Error::DuplicateRecord {
                    utt: r.utt_id.clone(),
                    source_kind: r.source.to_string(),
                });
            }
        }
        Ok(Self { records })
    }

    pub fn records(&self) -> &[UtteranceRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn filter_source(&self, source: Source) -> DatasetManifest {
        DatasetManifest {
            records: self.records.iter().filter(|r| r.source == source).cloned().collect(),
        }
    }

    /// Speaker ids in order of first appearance.
    pub fn speakers(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        self.records
            .iter()
            .filter(|r| seen.insert(r.spk_id.as_str()))
            .map(|r| r.spk_id.clone())
            .collect()
    }

    pub fn to_jsonl(&self) -> String {
        let mut s = String::new();
        for r in &self.records {
            // serializing a plain struct of strings cannot fail
            s.push_str(&serde_json::to_string(r).expect("record serializes"));
            s.push('\n');
        }
        s
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let records = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| serde_json::from_str::<UtteranceRecord>(l).map_err(|e| Error::parse(i + 1, e.to_string())))
            .collect::<Result<Vec<_>>>()?;
        Self::new(records)
    }
}

/// Set union of two manifests on `(utt_id, source)`; `orig` records come
/// first, each side keeps its own order, and a key present in both inputs
/// is kept once (from `orig`).
pub fn fuse(orig: &DatasetManifest, anon: &DatasetManifest) -> Result<DatasetManifest> {
    let mut speaker_of: HashMap<&str, &str> = HashMap::new();
    let mut keys = HashSet::new();
    let mut records = Vec::with_capacity(orig.len() + anon.len());
    for r in orig.records().iter().chain(anon.records()) {
        match speaker_of.get(r.utt_id.as_str()) {
            Some(&spk) if spk != r.spk_id => {
                return Err(Error::SpeakerConflict {
                    utt: r.utt_id.clone(),
                    first: spk.to_string(),
                    second: r.spk_id.clone(),
                })
            }
            Some(_) => {}
            None => {
                speaker_of.insert(&r.utt_id, &r.spk_id);
            }
        }
        if keys.insert(r.key()) {
            records.push(r.clone());
        }
    }
    Ok(DatasetManifest { records })
}

// ---------------------------------------------------------------------------
// SpecAugment

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MaskSpec {
    pub n_time_masks: usize,
    pub max_time_width: usize,
    pub n_freq_masks: usize,
    pub max_freq_width: usize,
    pub seed: u64,
}

impl Default for MaskSpec {
    fn default() -> Self {
        Self {
            n_time_masks: 2,
            max_time_width: 5,
            n_freq_masks: 2,
            max_freq_width: 8,
            seed: 0,
        }
    }
}

impl MaskSpec {
    pub fn none() -> Self {
        Self {
            n_time_masks: 0,
            max_time_width: 0,
            n_freq_masks: 0,
            max_freq_width: 0,
            seed: 0,
        }
    }

    pub fn is_noop(&self) -> bool {
        (self.n_time_masks == 0 || self.max_time_width == 0) && (self.n_freq_masks == 0 || self.max_freq_width == 0)
    }

    pub fn validate(&self, frames: usize, bins: usize) -> Result<()> {
        if self.max_time_width > frames || self.max_freq_width > bins {
            return Err(Error::InvalidConfig(format!(
                "mask widths ({}, {}) exceed feature shape ({frames}, {bins})",
                self.max_time_width, self.max_freq_width
            )));
        }
        Ok(())
    }

    /// Same spec with widths limited to the given shape and a new seed.
    pub fn fitted(&self, frames: usize, bins: usize, seed: u64) -> Self {
        Self {
            max_time_width: self.max_time_width.min(frames),
            max_freq_width: self.max_freq_width.min(bins),
            seed,
            ..self.clone()
        }
    }

    /// Upper bound on the fraction of masked cells for a `frames × bins` input.
    pub fn max_masked_fraction(&self, frames: usize, bins: usize) -> f64 {
        let cells =
            (self.n_time_masks * self.max_time_width * bins + self.n_freq_masks * self.max_freq_width * frames) as f64;
        cells / (frames * bins) as f64
    }
}

/// Binary time-frequency mask; `true` keeps a cell, `false` zeroes it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TfMask {
    frames: usize,
    bins: usize,
    keep: Vec<bool>,
}

impl TfMask {
    pub fn ones(frames: usize, bins: usize) -> Self {
        Self {
            frames,
            bins,
            keep: vec![true; frames * bins],
        }
    }

    /// Zeroes the given half-open frame ranges and bin ranges.
    pub fn from_bands(
        frames: usize,
        bins: usize,
        time_bands: &[(usize, usize)],
        freq_bands: &[(usize, usize)],
    ) -> Result<Self> {
        let mut m = Self::ones(frames, bins);
        for &(start, end) in time_bands {
            if start > end || end > frames {
                return Err(Error::Precondition(format!("time band {start}..{end}")));
            }
            for t in start..end {
                m.keep[t * bins..(t + 1) * bins].fill(false);
            }
        }
        for &(start, end) in freq_bands {
            if start > end || end > bins {
                return Err(Error::Precondition(format!("freq band {start}..{end}")));
            }
            for t in 0..frames {
                m.keep[t * bins + start..t * bins + end].fill(false);
            }
        }
        Ok(m)
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.frames, self.bins)
    }

    pub fn keeps(&self, t: usize, f: usize) -> bool {
        self.keep[t * self.bins + f]
    }

    pub fn value(&self, t: usize, f: usize) -> f64 {
        if self.keeps(t, f) {
            1.0
        } else {
            0.0
        }
    }

    pub fn zeros_count(&self) -> usize {
        self.keep.iter().filter(|k| !**k).count()
    }
}

fn draw_band(rng: &mut ChaCha8Rng, max_width: usize, extent: usize) -> (usize, usize) {
    let width = rng.random_range(0..=max_width);
    let start = rng.random_range(0..=extent - width);
    (start, start + width)
}

/// Draws the time and frequency bands of `spec` for a `frames × bins` input.
/// Widths are uniform on `0..=max_width` and starts uniform over valid offsets.
pub fn sample_masks(spec: &MaskSpec, frames: usize, bins: usize) -> Result<TfMask> {
    spec.validate(frames, bins)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let time: Vec<_> = (0..spec.n_time_masks)
        .map(|_| draw_band(&mut rng, spec.max_time_width, frames))
        .collect();
    let freq: Vec<_> = (0..spec.n_freq_masks)
        .map(|_| draw_band(&mut rng, spec.max_freq_width, bins))
        .collect();
    TfMask::from_bands(frames, bins, &time, &freq)
}

/// Element-wise product `X ⊙ M`. Kept cells are copied through untouched.
pub fn apply_masks(x: &FeatureMatrix, mask: &TfMask) -> Result<FeatureMatrix> {
    if mask.shape() != (x.n_frames(), x.n_bins()) {
        return Err(Error::ShapeMismatch {
            expected: format!("{}x{}", x.n_frames(), x.n_bins()),
            found: format!("{}x{}", mask.frames, mask.bins),
        });
    }
    let data = DMatrix::from_fn(x.n_frames(), x.n_bins(), |t, f| {
        if mask.keeps(t, f) {
            x.get(t, f)
        } else {
            0.0
        }
    });
    Ok(x.with_data(data))
}
