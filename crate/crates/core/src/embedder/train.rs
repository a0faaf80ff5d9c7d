use std::collections::HashMap;

use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{contrastive_loss, ContrastiveItem};
use super::{EmbedderModel, Hyper};
use crate::augment::{apply_masks, sample_masks, DatasetManifest, MaskSpec, Source};
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::io::{splitmix64, stage_seed};

/// Feature matrices keyed by `(utt_id, source)`.
#[derive(Debug, Clone, Default)]
pub struct FeatureStore {
    map: HashMap<(String, Source), FeatureMatrix>,
}

impl FeatureStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, utt_id: impl Into<String>, source: Source, x: FeatureMatrix) {
        self.map.insert((utt_id.into(), source), x);
    }

    pub fn get(&self, utt_id: &str, source: Source) -> Option<&FeatureMatrix> {
        self.map.get(&(utt_id.to_string(), source))
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub hidden: Vec<usize>,
    pub embedding_dim: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub scale: f64,
    pub margin: f64,
    /// Adds the orig/anon contrastive term with weight `contrastive_weight`.
    pub contrastive: bool,
    pub contrastive_weight: f64,
    pub temperature: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let h = Hyper::default();
        Self {
            hidden: vec![32, 32],
            embedding_dim: 16,
            epochs: 30,
            batch_size: 32,
            learning_rate: 0.01,
            seed: 0,
            scale: h.scale,
            margin: h.margin,
            contrastive: false,
            contrastive_weight: h.contrastive_weight,
            temperature: h.temperature,
        }
    }
}

impl TrainConfig {
    pub fn hyper(&self) -> Hyper {
        Hyper {
            scale: self.scale,
            margin: self.margin,
            contrastive_weight: self.contrastive_weight,
            temperature: self.temperature,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be positive".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig("learning_rate must be finite and ≥ 0".into()));
        }
        self.hyper().validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochLoss {
    pub total: f64,
    pub aam: f64,
    pub contrastive: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: EmbedderModel,
    pub loss_trace: Vec<EpochLoss>,
}

fn input_stats(xs: &[&FeatureMatrix], bins: usize) -> (DVector<f64>, DVector<f64>) {
    let mut sum = DVector::<f64>::zeros(bins);
    let mut sq = DVector::<f64>::zeros(bins);
    let mut n = 0.0;
    for x in xs {
        for t in 0..x.n_frames() {
            for f in 0..bins {
                let v = x.get(t, f);
                sum[f] += v;
                sq[f] += v * v;
            }
            n += 1.0;
        }
    }
    let mean = sum / n;
    let scale = DVector::from_fn(bins, |f, _| {
        let var = (sq[f] / n - mean[f] * mean[f]).max(0.0);
        1.0 / var.sqrt().max(1e-3)
    });
    (mean, scale)
}

/// Mini-batch gradient descent on `mean AAM + λ · contrastive`.
///
/// Records sharing an utterance id stay in the same batch so orig/anon pairs
/// are available to the contrastive term. Masks are re-drawn for every
/// utterance in every epoch from `mask.seed`, the epoch and the record index.
pub fn train_embedder(
    manifest: &DatasetManifest,
    features: &FeatureStore,
    mask: &MaskSpec,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    if manifest.is_empty() {
        return Err(Error::Precondition("training manifest is empty".into()));
    }
    cfg.validate()?;
    let records = manifest.records();
    let xs = records
        .iter()
        .map(|r| {
            features
                .get(&r.utt_id, r.source)
                .ok_or_else(|| Error::Precondition(format!("no features for {} ({})", r.utt_id, r.source)))
        })
        .collect::<Result<Vec<_>>>()?;
    let bins = xs[0].n_bins();
    if let Some(x) = xs.iter().find(|x| x.n_bins() != bins) {
        return Err(Error::ShapeMismatch {
            expected: format!("{bins} bins"),
            found: format!("{}", x.n_bins()),
        });
    }

    let classes = manifest.speakers();
    let class_of: HashMap<&str, usize> = classes.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let labels: Vec<usize> = records.iter().map(|r| class_of[r.spk_id.as_str()]).collect();

    let mut model = EmbedderModel::init(
        bins,
        &cfg.hidden,
        cfg.embedding_dim,
        classes.clone(),
        cfg.hyper(),
        stage_seed(cfg.seed, "embedder-init"),
    )?;
    let (mean, scale) = input_stats(&xs, bins);
    model.input_mean = mean;
    model.input_scale = scale;

    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut group_of: HashMap<&str, usize> = HashMap::new();
    for (i, r) in records.iter().enumerate() {
        let g = *group_of.entry(&r.utt_id).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[g].push(i);
    }

    let use_contrastive = cfg.contrastive && cfg.contrastive_weight > 0.0;
    let epoch_seed = stage_seed(cfg.seed, "embedder-epochs");
    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(epoch_seed ^ epoch as u64));
        let mut order: Vec<usize> = (0..groups.len()).collect();
        order.shuffle(&mut rng);

        let mut batches: Vec<Vec<usize>> = vec![Vec::new()];
        for g in order {
            if batches.last().is_some_and(|b| b.len() >= cfg.batch_size) {
                batches.push(Vec::new());
            }
            batches.last_mut().expect("non-empty").extend(&groups[g]);
        }

        let (mut sum_total, mut sum_aam, mut sum_con) = (0.0, 0.0, 0.0);
        for (bi, batch) in batches.iter().enumerate() {
            let n = batch.len() as f64;
            let mut embeddings = Vec::with_capacity(batch.len());
            let mut caches = Vec::with_capacity(batch.len());
            for &ri in batch {
                let x = xs[ri];
                let x_masked;
                let input = if mask.is_noop() {
                    x
                } else {
                    let seed = splitmix64(mask.seed ^ splitmix64(((epoch as u64) << 32) ^ ri as u64));
                    let m = sample_masks(&mask.fitted(x.n_frames(), x.n_bins(), seed), x.n_frames(), x.n_bins())?;
                    x_masked = apply_masks(x, &m)?;
                    &x_masked
                };
                let (e, cache) = model.forward(input)?;
                embeddings.push(e);
                caches.push(cache);
            }

            let mut grads = model.zero_gradients();
            let mut grad_e: Vec<DVector<f64>> = Vec::with_capacity(batch.len());
            let mut aam_sum = 0.0;
            for (k, &ri) in batch.iter().enumerate() {
                let out = model.aam_loss(&embeddings[k], labels[ri])?;
                aam_sum += out.loss;
                grads.aam_weights += out.grad_weights / n;
                grad_e.push(out.grad_embedding / n);
            }
            let aam = aam_sum / n;
            let mut con = 0.0;
            if use_contrastive && batch.len() >= 2 {
                let items: Vec<ContrastiveItem<'_>> = batch
                    .iter()
                    .zip(&embeddings)
                    .map(|(&ri, e)| ContrastiveItem {
                        embedding: e,
                        utt_id: &records[ri].utt_id,
                        source: records[ri].source,
                    })
                    .collect();
                let out = contrastive_loss(&items, cfg.temperature)?;
                con = out.loss;
                for (g, gc) in grad_e.iter_mut().zip(&out.grads) {
                    *g += gc * cfg.contrastive_weight;
                }
            }
            let total = aam
                + if use_contrastive {
                    cfg.contrastive_weight * con
                } else {
                    0.0
                };
            if !total.is_finite() {
                return Err(Error::NonFinite(format!(
                    "training loss at epoch {} batch {bi}",
                    epoch + 1
                )));
            }
            for (cache, g) in caches.iter().zip(&grad_e) {
                model.backward(cache, g, &mut grads);
            }
            if cfg.learning_rate != 0.0 {
                model.apply_gradients(&grads, cfg.learning_rate);
                if !model.parameters_finite() {
                    return Err(Error::NonFinite(format!(
                        "parameters after epoch {} batch {bi}",
                        epoch + 1
                    )));
                }
            }
            sum_total += total * n;
            sum_aam += aam * n;
            sum_con += con * n;
        }
        let count = records.len() as f64;
        trace.push(EpochLoss {
            total: sum_total / count,
            aam: sum_aam / count,
            contrastive: sum_con / count,
        });
    }
    Ok(TrainOutcome {
        model,
        loss_trace: trace,
    })
}
