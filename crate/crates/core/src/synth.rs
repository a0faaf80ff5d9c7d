//! Synthetic speaker populations and brute-force reference implementations.
//!
//! Embedding-level populations follow the PLDA generative model; anonymization
//! is emulated as `R·e + b + η` (orthogonal `R`, bias `b`, isotropic noise
//! `η`). Feature-level populations produce frame sequences for the embedder;
//! their anonymized copies also swap part of each speaker's identity for a
//! per-utterance pseudo-speaker before the same kind of shift.
//!
//! All sampling uses `ChaCha8Rng::seed_from_u64(seed)` with `rand_distr`'s
//! `StandardNormal`, consumed in a fixed order, so populations are
//! reproducible within a build.

use std::collections::HashSet;
use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::augment::{DatasetManifest, Source, UtteranceRecord};
use crate::embedder::{FeatureStore, SpeakerEmbedding};
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::linalg::logdet;
use crate::plda::PldaModel;
use crate::scoring::{crossing, Trial, TrialLabel, TrialList};

fn gaussian_vec(rng: &mut ChaCha8Rng, d: usize) -> DVector<f64> {
    DVector::from_fn(d, |_, _| rng.sample(StandardNormal))
}

/// Haar-distributed rotation from the QR factorization of a Gaussian matrix.
pub fn random_rotation(d: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Random symmetric positive definite matrix `R·diag(eigenvalues)·Rᵀ`.
pub fn random_spd(eigenvalues: &[f64], rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let r = random_rotation(eigenvalues.len(), rng);
    let d = DMatrix::from_diagonal(&DVector::from_column_slice(eigenvalues));
    let m = &r * d * r.transpose();
    (&m + m.transpose()) * 0.5
}

#[derive(Debug, Clone, PartialEq)]
pub struct Shift {
    pub rotation: DMatrix<f64>,
    pub bias: DVector<f64>,
    pub noise_scale: f64,
}

impl Shift {
    pub fn identity(d: usize) -> Self {
        Self {
            rotation: DMatrix::identity(d, d),
            bias: DVector::zeros(d),
            noise_scale: 0.0,
        }
    }

    /// Rotation (Haar, or identity when `rotate` is false), then a bias with
    /// i.i.d. `N(0, bias_scale²)` entries, both drawn from `seed`.
    pub fn random(d: usize, rotate: bool, bias_scale: f64, noise_scale: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rotation = if rotate {
            random_rotation(d, &mut rng)
        } else {
            DMatrix::identity(d, d)
        };
        Self {
            rotation,
            bias: gaussian_vec(&mut rng, d) * bias_scale,
            noise_scale,
        }
    }

    /// Between/within covariances and mean seen after applying the shift to
    /// a population with parameters `(mu, sigma_b, sigma_w)`.
    pub fn transform_model(
        &self,
        mu: &DVector<f64>,
        sigma_b: &DMatrix<f64>,
        sigma_w: &DMatrix<f64>,
    ) -> (DVector<f64>, DMatrix<f64>, DMatrix<f64>) {
        let r = &self.rotation;
        let sym = |m: DMatrix<f64>| (&m + m.transpose()) * 0.5;
        let d = mu.len();
        (
            r * mu + &self.bias,
            sym(r * sigma_b * r.transpose()),
            sym(r * sigma_w * r.transpose() + DMatrix::identity(d, d) * self.noise_scale.powi(2)),
        )
    }

    fn validate(&self, d: usize) -> Result<()> {
        if self.rotation.shape() != (d, d) || self.bias.len() != d {
            return Err(Error::InvalidConfig("shift dimensions".into()));
        }
        let gram = self.rotation.transpose() * &self.rotation;
        if (gram - DMatrix::identity(d, d)).amax() > 1e-9 {
            return Err(Error::InvalidConfig("shift rotation is not orthogonal".into()));
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return Err(Error::InvalidConfig("noise_scale must be ≥ 0".into()));
        }
        Ok(())
    }

    fn apply(&self, e: &DVector<f64>, rng: &mut ChaCha8Rng) -> DVector<f64> {
        let noise = gaussian_vec(rng, e.len());
        &self.rotation * e + &self.bias + noise * self.noise_scale
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub d: usize,
    pub n_speakers: usize,
    pub utts_per_speaker: usize,
    pub mu: DVector<f64>,
    pub sigma_b: DMatrix<f64>,
    pub sigma_w: DMatrix<f64>,
    pub shift: Shift,
    pub seed: u64,
}

impl SynthConfig {
    /// `Σ_b = b·I`, `Σ_w = w·I`, zero mean, no shift.
    pub fn isotropic(d: usize, n_speakers: usize, utts: usize, b: f64, w: f64, seed: u64) -> Self {
        Self {
            d,
            n_speakers,
            utts_per_speaker: utts,
            mu: DVector::zeros(d),
            sigma_b: DMatrix::identity(d, d) * b,
            sigma_w: DMatrix::identity(d, d) * w,
            shift: Shift::identity(d),
            seed,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Population {
    pub orig: Vec<SpeakerEmbedding>,
    pub anon: Vec<SpeakerEmbedding>,
    pub orig_manifest: DatasetManifest,
    pub anon_manifest: DatasetManifest,
}

pub fn speaker_id(s: usize) -> String {
    format!("spk{s:03}")
}

pub fn utt_id(s: usize, u: usize) -> String {
    format!("spk{s:03}-utt{u:02}")
}

fn spd_factor(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    Cholesky::new(m.clone())
        .map(|c| c.l())
        .ok_or_else(|| Error::InvalidConfig(format!("{what} is not symmetric positive definite")))
}

/// Draws `y ~ N(0, Σ_b)` per speaker and `e = μ + y + ε`, `ε ~ N(0, Σ_w)`,
/// per utterance, with an anonymized copy of every utterance.
pub fn sample_population(cfg: &SynthConfig) -> Result<Population> {
    let d = cfg.d;
    if cfg.mu.len() != d || cfg.sigma_b.shape() != (d, d) || cfg.sigma_w.shape() != (d, d) {
        return Err(Error::InvalidConfig("synthetic model dimensions".into()));
    }
    let lb = spd_factor(&cfg.sigma_b, "sigma_b")?;
    let lw = spd_factor(&cfg.sigma_w, "sigma_w")?;
    cfg.shift.validate(d)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut orig = Vec::new();
    let mut anon = Vec::new();
    let mut orig_recs = Vec::new();
    let mut anon_recs = Vec::new();
    for s in 0..cfg.n_speakers {
        let spk = speaker_id(s);
        let y = &lb * gaussian_vec(&mut rng, d);
        for u in 0..cfg.utts_per_speaker {
            let id = utt_id(s, u);
            let e = &cfg.mu + &y + &lw * gaussian_vec(&mut rng, d);
            let a = cfg.shift.apply(&e, &mut rng);
            orig_recs.push(UtteranceRecord::new(
                &id,
                &spk,
                format!("synth/orig/{id}"),
                Source::Orig,
            ));
            anon_recs.push(UtteranceRecord::new(
                &id,
                &spk,
                format!("synth/anon/{id}"),
                Source::Anon,
            ));
            orig.push(SpeakerEmbedding::new(&id, e).with_speaker(&spk));
            anon.push(SpeakerEmbedding::new(&id, a).with_speaker(&spk));
        }
    }
    Ok(Population {
        orig,
        anon,
        orig_manifest: DatasetManifest::new(orig_recs)?,
        anon_manifest: DatasetManifest::new(anon_recs)?,
    })
}

/// All unordered same-speaker pairs as targets plus an equal number of
/// distinct different-speaker pairs drawn with `seed` as nontargets (fewer
/// if not enough exist). Targets come first, in manifest order.
pub fn make_trials(manifest: &DatasetManifest, seed: u64) -> TrialList {
    let recs = manifest.records();
    let mut trials = Vec::new();
    for i in 0..recs.len() {
        for j in i + 1..recs.len() {
            if recs[i].spk_id == recs[j].spk_id {
                trials.push(Trial {
                    enroll: recs[i].utt_id.clone(),
                    test: recs[j].utt_id.clone(),
                    label: TrialLabel::Target,
                });
            }
        }
    }
    let n_targets = trials.len();
    let n = recs.len();
    let available = (0..n)
        .map(|i| (i + 1..n).filter(|&j| recs[i].spk_id != recs[j].spk_id).count())
        .sum::<usize>();
    let wanted = n_targets.min(available);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = HashSet::new();
    while seen.len() < wanted {
        let (i, j) = (rng.random_range(0..n), rng.random_range(0..n));
        let (i, j) = (i.min(j), i.max(j));
        if recs[i].spk_id == recs[j].spk_id || !seen.insert((i, j)) {
            continue;
        }
        trials.push(Trial {
            enroll: recs[i].utt_id.clone(),
            test: recs[j].utt_id.clone(),
            label: TrialLabel::Nontarget,
        });
    }
    TrialList::new(trials)
}

// ---------------------------------------------------------------------------
// Reference implementations

fn mvn_logpdf(x: &DVector<f64>, cov: DMatrix<f64>) -> Result<f64> {
    let n = x.len() as f64;
    let chol = Cholesky::new(cov).ok_or_else(|| Error::Singular("joint covariance".into()))?;
    let sol = chol.solve(x);
    Ok(-0.5 * (n * (2.0 * PI).ln() + logdet(&chol) + x.dot(&sol)))
}

/// Pair log-likelihood ratio evaluated from the explicit `2d × 2d` joint
/// covariances of the same-speaker and different-speaker hypotheses.
pub fn oracle_llr(model: &PldaModel, a: &DVector<f64>, b: &DVector<f64>) -> Result<f64> {
    let d = model.dim();
    if a.len() != d || b.len() != d {
        return Err(Error::ShapeMismatch {
            expected: format!("dimension {d}"),
            found: format!("{} and {}", a.len(), b.len()),
        });
    }
    let (sb, sw) = (model.sigma_b(), model.sigma_w());
    let total = sb + sw;
    let mut same = DMatrix::zeros(2 * d, 2 * d);
    let mut diff = DMatrix::zeros(2 * d, 2 * d);
    for i in 0..d {
        for j in 0..d {
            same[(i, j)] = total[(i, j)];
            same[(d + i, d + j)] = total[(i, j)];
            same[(i, d + j)] = sb[(i, j)];
            same[(d + i, j)] = sb[(i, j)];
            diff[(i, j)] = total[(i, j)];
            diff[(d + i, d + j)] = total[(i, j)];
        }
    }
    let x = DVector::from_fn(2 * d, |i, _| {
        if i < d {
            a[i] - model.mu()[i]
        } else {
            b[i - d] - model.mu()[i - d]
        }
    });
    Ok(mvn_logpdf(&x, same)? - mvn_logpdf(&x, diff)?)
}

/// EER by sweeping every threshold at score midpoints (plus ±∞) and
/// counting errors directly at each one.
pub fn oracle_eer(targets: &[f64], nontargets: &[f64]) -> Result<f64> {
    if targets.is_empty() || nontargets.is_empty() {
        return Err(Error::Precondition(
            "EER needs at least one target and one nontarget trial".into(),
        ));
    }
    let mut all: Vec<f64> = targets.iter().chain(nontargets).copied().collect();
    all.sort_by(f64::total_cmp);
    all.dedup();
    let mut thresholds = vec![f64::NEG_INFINITY];
    thresholds.extend(all.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    thresholds.push(f64::INFINITY);

    let points: Vec<(f64, f64, f64)> = thresholds
        .iter()
        .map(|&th| {
            let fa = nontargets.iter().filter(|&&s| s >= th).count();
            let fr = targets.iter().filter(|&&s| s < th).count();
            (
                th,
                fa as f64 / nontargets.len() as f64,
                fr as f64 / targets.len() as f64,
            )
        })
        .collect();
    Ok(crossing(&points).eer)
}

// ---------------------------------------------------------------------------
// Feature-level populations

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureSynthConfig {
    pub bins: usize,
    pub frames: usize,
    pub n_speakers: usize,
    pub utts_per_speaker: usize,
    /// Std of each speaker's per-bin mean.
    pub speaker_scale: f64,
    /// Std of the per-utterance offset around the speaker mean.
    pub session_scale: f64,
    /// Base per-frame noise std; each speaker scales it per bin by `exp(0.25·z)`.
    pub frame_scale: f64,
    /// Std of the anonymization bias vector.
    pub anon_bias_scale: f64,
    /// Std of the per-frame anonymization noise.
    pub anon_noise_scale: f64,
    /// Leading bins whose speaker mean the anonymizer replaces with a fresh
    /// pseudo-speaker mean for every utterance.
    pub pseudo_bins: usize,
    pub seed: u64,
}

impl Default for FeatureSynthConfig {
    fn default() -> Self {
        Self {
            bins: 16,
            frames: 30,
            n_speakers: 40,
            utts_per_speaker: 6,
            speaker_scale: 1.0,
            session_scale: 0.5,
            frame_scale: 1.0,
            anon_bias_scale: 1.0,
            anon_noise_scale: 0.5,
            pseudo_bins: 8,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FeaturePopulation {
    pub features: FeatureStore,
    pub orig_manifest: DatasetManifest,
    pub anon_manifest: DatasetManifest,
    pub shift: Shift,
}

/// Per-utterance frame sequences `x_t = m_s + o_u + σ_s ∘ n_t`.
///
/// The anonymized copy swaps the first `pseudo_bins` entries of `m_s` for a
/// pseudo-speaker mean `p_u` drawn per utterance, keeps `o_u` and the frame
/// noise, and maps each frame through `R·x + b + η_t` with one rotation and
/// bias shared by the population.
pub fn sample_feature_population(cfg: &FeatureSynthConfig) -> Result<FeaturePopulation> {
    if cfg.bins == 0 || cfg.frames == 0 || cfg.n_speakers == 0 || cfg.utts_per_speaker == 0 {
        return Err(Error::InvalidConfig("feature population sizes must be positive".into()));
    }
    if cfg.pseudo_bins > cfg.bins {
        return Err(Error::InvalidConfig("pseudo_bins exceeds bins".into()));
    }
    let f = cfg.bins;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let shift = Shift {
        rotation: random_rotation(f, &mut rng),
        bias: gaussian_vec(&mut rng, f) * cfg.anon_bias_scale,
        noise_scale: cfg.anon_noise_scale,
    };

    let mut features = FeatureStore::new();
    let mut orig_recs = Vec::new();
    let mut anon_recs = Vec::new();
    for s in 0..cfg.n_speakers {
        let spk = speaker_id(s);
        let mean = gaussian_vec(&mut rng, f) * cfg.speaker_scale;
        let spread = gaussian_vec(&mut rng, f).map(|z| cfg.frame_scale * (0.25 * z).exp());
        for u in 0..cfg.utts_per_speaker {
            let id = utt_id(s, u);
            let offset = gaussian_vec(&mut rng, f) * cfg.session_scale;
            let pseudo = gaussian_vec(&mut rng, f) * cfg.speaker_scale;
            let anon_mean = DVector::from_fn(f, |i, _| if i < cfg.pseudo_bins { pseudo[i] } else { mean[i] });
            let mut orig = DMatrix::zeros(cfg.frames, f);
            let mut anon = DMatrix::zeros(cfg.frames, f);
            for t in 0..cfg.frames {
                let noise = gaussian_vec(&mut rng, f).component_mul(&spread);
                let x = &mean + &offset + &noise;
                let a = shift.apply(&(&anon_mean + &offset + &noise), &mut rng);
                orig.row_mut(t).copy_from(&x.transpose());
                anon.row_mut(t).copy_from(&a.transpose());
            }
            features.insert(&id, Source::Orig, FeatureMatrix::new(orig, None)?);
            features.insert(&id, Source::Anon, FeatureMatrix::new(anon, None)?);
            orig_recs.push(UtteranceRecord::new(
                &id,
                &spk,
                format!("synth/orig/{id}"),
                Source::Orig,
            ));
            anon_recs.push(UtteranceRecord::new(
                &id,
                &spk,
                format!("synth/anon/{id}"),
                Source::Anon,
            ));
        }
    }
    Ok(FeaturePopulation {
        features,
        orig_manifest: DatasetManifest::new(orig_recs)?,
        anon_manifest: DatasetManifest::new(anon_recs)?,
        shift,
    })
}

/// Keeps the records whose speaker is in `speakers`.
pub fn select_speakers(manifest: &DatasetManifest, speakers: &[String]) -> Result<DatasetManifest> {
    let keep: HashSet<&str> = speakers.iter().map(String::as_str).collect();
    DatasetManifest::new(
        manifest
            .records()
            .iter()
            .filter(|r| keep.contains(r.spk_id.as_str()))
            .cloned()
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plda::Preproc;

    #[test]
    fn identity_shift_copies_embeddings() {
        let pop = sample_population(&SynthConfig::isotropic(3, 4, 3, 2.0, 1.0, 11)).unwrap();
        for (o, a) in pop.orig.iter().zip(&pop.anon) {
            assert_eq!(o.vector, a.vector);
            assert_eq!(o.utt_id, a.utt_id);
        }
        assert_eq!(pop.orig_manifest.len(), 12);
    }

    #[test]
    fn same_seed_same_population() {
        let mut cfg = SynthConfig::isotropic(4, 5, 2, 1.0, 0.5, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        cfg.shift = Shift {
            rotation: random_rotation(4, &mut rng),
            bias: DVector::from_element(4, 0.3),
            noise_scale: 0.2,
        };
        let (a, b) = (sample_population(&cfg).unwrap(), sample_population(&cfg).unwrap());
        assert_eq!(a.anon, b.anon);
        assert_eq!(a.orig, b.orig);
    }

    #[test]
    fn sample_mean_within_standard_error() {
        // each coordinate of the grand mean has variance (b/S + w/N)
        let (s, u, b, w) = (60usize, 10usize, 2.0, 1.0);
        let mut cfg = SynthConfig::isotropic(3, s, u, b, w, 5);
        cfg.mu = DVector::from_column_slice(&[1.0, -2.0, 0.5]);
        let pop = sample_population(&cfg).unwrap();
        let n = (s * u) as f64;
        let mean = pop.orig.iter().fold(DVector::zeros(3), |acc, e| acc + &e.vector) / n;
        let se = (b / s as f64 + w / n).sqrt();
        for i in 0..3 {
            assert!((mean[i] - cfg.mu[i]).abs() < 3.0 * se, "coord {i}");
        }
    }

    #[test]
    fn invalid_covariance_rejected() {
        let mut cfg = SynthConfig::isotropic(2, 2, 2, 1.0, 1.0, 0);
        cfg.sigma_b[(0, 0)] = -1.0;
        assert!(matches!(sample_population(&cfg), Err(Error::InvalidConfig(_))));
        let mut cfg = SynthConfig::isotropic(2, 2, 2, 1.0, 1.0, 0);
        cfg.shift.rotation[(0, 1)] = 0.5;
        assert!(sample_population(&cfg).is_err());
    }

    #[test]
    fn rotations_are_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let r = random_rotation(6, &mut rng);
        assert!((r.transpose() * &r - DMatrix::identity(6, 6)).amax() < 1e-12);
    }

    #[test]
    fn oracle_worked_values() {
        let m = PldaModel::new(
            DVector::zeros(1),
            DMatrix::identity(1, 1),
            DMatrix::identity(1, 1),
            Preproc::identity(1),
        )
        .unwrap();
        let v = |x: f64| DVector::from_element(1, x);
        assert!((oracle_llr(&m, &v(0.0), &v(0.0)).unwrap() - 0.14384103622589042).abs() < 1e-10);
        assert!((oracle_llr(&m, &v(1.0), &v(1.0)).unwrap() - 0.3105077028925569).abs() < 1e-10);
        assert!((oracle_llr(&m, &v(1.0), &v(-1.0)).unwrap() + 0.35615896377410916).abs() < 1e-10);
    }

    #[test]
    fn oracle_zero_between_is_zero() {
        let m = PldaModel::new(
            DVector::zeros(2),
            DMatrix::zeros(2, 2),
            DMatrix::identity(2, 2) * 0.7,
            Preproc::identity(2),
        )
        .unwrap();
        let a = DVector::from_column_slice(&[1.0, -0.3]);
        let b = DVector::from_column_slice(&[2.0, 0.4]);
        assert!(oracle_llr(&m, &a, &b).unwrap().abs() < 1e-12);
    }

    #[test]
    fn oracle_eer_fixtures() {
        assert_eq!(oracle_eer(&[0.9, 0.8], &[0.1, 0.2]).unwrap(), 0.0);
        assert_eq!(oracle_eer(&[0.1], &[0.9]).unwrap(), 1.0);
        assert_eq!(oracle_eer(&[3.0, 1.0], &[2.0, 0.0]).unwrap(), 0.5);
    }

    #[test]
    fn trial_generation() {
        let pop = sample_population(&SynthConfig::isotropic(2, 4, 3, 1.0, 1.0, 0)).unwrap();
        let trials = make_trials(&pop.anon_manifest, 9);
        let n_tar = trials.trials.iter().filter(|t| t.label == TrialLabel::Target).count();
        assert_eq!(n_tar, 4 * 3);
        assert_eq!(trials.len(), 2 * n_tar);
        let mut pairs = HashSet::new();
        for t in &trials.trials {
            assert_ne!(t.enroll, t.test);
            assert!(pairs.insert((t.enroll.clone(), t.test.clone())));
        }
        assert_eq!(make_trials(&pop.anon_manifest, 9), trials);
    }

    #[test]
    fn feature_population_shapes() {
        let cfg = FeatureSynthConfig {
            n_speakers: 3,
            utts_per_speaker: 2,
            ..FeatureSynthConfig::default()
        };
        let pop = sample_feature_population(&cfg).unwrap();
        assert_eq!(pop.features.len(), 12);
        let x = pop.features.get("spk001-utt01", Source::Anon).unwrap();
        assert_eq!((x.n_frames(), x.n_bins()), (30, 16));
    }
}
