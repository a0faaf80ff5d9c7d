//! Browser bindings for three interactive views:
//!
//! * [`masked_spectrogram`]: log-Mel features of a synthesized two-tone
//!   clip with time/frequency masks applied,
//! * [`backend_curves`]: FAR/FRR curves of PLDA and cosine scoring on a
//!   synthetic anonymized population,
//! * [`llr_grid`]: the 1-D PLDA log-likelihood ratio over a grid of pairs.
//!
//! Each has a plain Rust implementation (tested natively) and a thin
//! `wasm_bindgen` wrapper.

use std::collections::HashMap;
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use wasm_bindgen::prelude::*;

use voxattack::augment::{apply_masks, sample_masks, MaskSpec};
use voxattack::features::{log_mel, AudioClip, MelConfig};
use voxattack::io::stage_seed;
use voxattack::plda::{fit_plda, PldaConfig, PldaModel, Preproc};
use voxattack::scoring::{cosine_score, eer_from_scores, TrialLabel};
use voxattack::synth::{make_trials, sample_population, Shift, SynthConfig};

const SAMPLE_RATE: u32 = 16_000;

fn js_err(e: voxattack::Error) -> JsError {
    JsError::new(&e.to_string())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub frames: usize,
    pub bins: usize,
    /// Row-major `frames × bins` log-Mel values after masking.
    pub values: Vec<f64>,
    /// 1 where a cell was kept, 0 where it was masked.
    pub kept: Vec<u8>,
}

/// Half a second of a tone at `f0` plus its third harmonic with a slow
/// upward glide, 40 mel bins, masked by `spec`.
pub fn masked_spectrogram(f0: f64, spec: &MaskSpec) -> voxattack::Result<Spectrogram> {
    let n = SAMPLE_RATE as usize / 2;
    let mut phase = 0.0;
    let samples: Vec<f64> = (0..n)
        .map(|i| {
            let t = i as f64 / n as f64;
            phase += 2.0 * PI * f0 * (1.0 + 0.5 * t) / SAMPLE_RATE as f64;
            0.5 * phase.sin() + 0.2 * (3.0 * phase).sin()
        })
        .collect();
    let cfg = MelConfig {
        n_mels: 40,
        ..MelConfig::default()
    };
    let x = log_mel(&AudioClip::new(samples, SAMPLE_RATE)?, &cfg)?;
    let (frames, bins) = (x.n_frames(), x.n_bins());
    let mask = sample_masks(&spec.fitted(frames, bins, spec.seed), frames, bins)?;
    let masked = apply_masks(&x, &mask)?;
    let mut values = Vec::with_capacity(frames * bins);
    let mut kept = Vec::with_capacity(frames * bins);
    for t in 0..frames {
        for f in 0..bins {
            values.push(masked.get(t, f));
            kept.push(u8::from(mask.keeps(t, f)));
        }
    }
    Ok(Spectrogram {
        frames,
        bins,
        values,
        kept,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    /// Thresholds in increasing order with their error rates.
    pub thresholds: Vec<f64>,
    pub far: Vec<f64>,
    pub frr: Vec<f64>,
    pub eer: f64,
}

fn curve(targets: &[f64], nontargets: &[f64]) -> voxattack::Result<Curve> {
    let mut all: Vec<f64> = targets.iter().chain(nontargets).copied().collect();
    all.sort_by(f64::total_cmp);
    all.dedup();
    let mut c = Curve {
        thresholds: Vec::with_capacity(all.len()),
        far: Vec::with_capacity(all.len()),
        frr: Vec::with_capacity(all.len()),
        eer: eer_from_scores(targets, nontargets)?.eer,
    };
    for th in all {
        c.thresholds.push(th);
        c.far
            .push(nontargets.iter().filter(|&&s| s >= th).count() as f64 / nontargets.len() as f64);
        c.frr
            .push(targets.iter().filter(|&&s| s < th).count() as f64 / targets.len() as f64);
    }
    Ok(c)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackendCurves {
    pub plda: Curve,
    pub cosine: Curve,
}

/// Samples a training and an evaluation population (d = 8, 50 speakers ×
/// 10 utterances) under one random anonymization shift, fits PLDA on the
/// training population and scores the evaluation trials both ways.
pub fn backend_curves(between: f64, within: f64, noise: f64, seed: u64) -> voxattack::Result<BackendCurves> {
    let d = 8;
    let mut train_cfg = SynthConfig::isotropic(d, 50, 10, between, within, stage_seed(seed, "train"));
    train_cfg.shift = Shift::random(d, true, 1.0, noise, stage_seed(seed, "shift"));
    let mut eval_cfg = train_cfg.clone();
    eval_cfg.seed = stage_seed(seed, "eval");
    let train = sample_population(&train_cfg)?;
    let eval = sample_population(&eval_cfg)?;

    let labeled: Vec<(String, DVector<f64>)> = train
        .anon
        .iter()
        .map(|e| (e.spk_id.clone().unwrap_or_default(), e.vector.clone()))
        .collect();
    let model = fit_plda(&labeled, &PldaConfig::default())?.model;

    let trials = make_trials(&eval.anon_manifest, stage_seed(seed, "trials"));
    let by_id: HashMap<&str, &DVector<f64>> = eval.anon.iter().map(|e| (e.utt_id.as_str(), &e.vector)).collect();
    let (mut pt, mut pn, mut ct, mut cn) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for t in &trials.trials {
        let (a, b) = (by_id[t.enroll.as_str()], by_id[t.test.as_str()]);
        let p = model.score_raw(a, b)?;
        let c = cosine_score(a.as_slice(), b.as_slice())?;
        match t.label {
            TrialLabel::Target => {
                pt.push(p);
                ct.push(c);
            }
            TrialLabel::Nontarget => {
                pn.push(p);
                cn.push(c);
            }
        }
    }
    Ok(BackendCurves {
        plda: curve(&pt, &pn)?,
        cosine: curve(&ct, &cn)?,
    })
}

/// Row-major `n × n` grid of `score(a, b)` for `a, b` evenly spaced on
/// `[lo, hi]`, with `μ = 0`, `Σ_b = between`, `Σ_w = within`.
pub fn llr_grid(between: f64, within: f64, lo: f64, hi: f64, n: usize) -> voxattack::Result<Vec<f64>> {
    let model = PldaModel::new(
        DVector::zeros(1),
        DMatrix::from_element(1, 1, between),
        DMatrix::from_element(1, 1, within),
        Preproc::identity(1),
    )?;
    let step = if n > 1 { (hi - lo) / (n - 1) as f64 } else { 0.0 };
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let a = DVector::from_element(1, lo + step * i as f64);
            let b = DVector::from_element(1, lo + step * j as f64);
            out.push(model.score(&a, &b)?);
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// wasm bindings

#[wasm_bindgen]
pub struct SpectrogramView(Spectrogram);

#[wasm_bindgen]
impl SpectrogramView {
    pub fn frames(&self) -> usize {
        self.0.frames
    }
    pub fn bins(&self) -> usize {
        self.0.bins
    }
    pub fn values(&self) -> Vec<f64> {
        self.0.values.clone()
    }
    pub fn kept(&self) -> Vec<u8> {
        self.0.kept.clone()
    }
}

#[wasm_bindgen(js_name = maskedSpectrogram)]
pub fn masked_spectrogram_js(
    f0: f64,
    time_masks: usize,
    max_time_width: usize,
    freq_masks: usize,
    max_freq_width: usize,
    seed: u64,
) -> Result<SpectrogramView, JsError> {
    let spec = MaskSpec {
        n_time_masks: time_masks,
        max_time_width,
        n_freq_masks: freq_masks,
        max_freq_width,
        seed,
    };
    masked_spectrogram(f0, &spec).map(SpectrogramView).map_err(js_err)
}

#[wasm_bindgen]
pub struct CurvesView(BackendCurves);

#[wasm_bindgen]
impl CurvesView {
    pub fn plda_far(&self) -> Vec<f64> {
        self.0.plda.far.clone()
    }
    pub fn plda_frr(&self) -> Vec<f64> {
        self.0.plda.frr.clone()
    }
    pub fn plda_eer(&self) -> f64 {
        self.0.plda.eer
    }
    pub fn cosine_far(&self) -> Vec<f64> {
        self.0.cosine.far.clone()
    }
    pub fn cosine_frr(&self) -> Vec<f64> {
        self.0.cosine.frr.clone()
    }
    pub fn cosine_eer(&self) -> f64 {
        self.0.cosine.eer
    }
}

#[wasm_bindgen(js_name = backendCurves)]
pub fn backend_curves_js(between: f64, within: f64, noise: f64, seed: u64) -> Result<CurvesView, JsError> {
    backend_curves(between, within, noise, seed)
        .map(CurvesView)
        .map_err(js_err)
}

#[wasm_bindgen(js_name = llrGrid)]
pub fn llr_grid_js(between: f64, within: f64, lo: f64, hi: f64, n: usize) -> Result<Vec<f64>, JsError> {
    llr_grid(between, within, lo, hi, n).map_err(js_err)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spectrogram_respects_mask() {
        let spec = MaskSpec {
            seed: 5,
            ..MaskSpec::default()
        };
        let s = masked_spectrogram(220.0, &spec).unwrap();
        assert_eq!(s.bins, 40);
        assert_eq!(s.values.len(), s.frames * s.bins);
        assert!(s.kept.contains(&0));
        for (v, k) in s.values.iter().zip(&s.kept) {
            if *k == 0 {
                assert_eq!(*v, 0.0);
            }
        }
        let plain = masked_spectrogram(220.0, &MaskSpec::none()).unwrap();
        assert!(plain.kept.iter().all(|&k| k == 1));
    }

    #[test]
    fn curves_are_monotone_and_plda_wins_on_default_setting() {
        let c = backend_curves(4.0, 1.0, 0.5, 1).unwrap();
        for curve in [&c.plda, &c.cosine] {
            assert!(curve.far.windows(2).all(|w| w[1] <= w[0]));
            assert!(curve.frr.windows(2).all(|w| w[1] >= w[0]));
            assert!((0.0..=1.0).contains(&curve.eer));
        }
        assert!(c.plda.eer < c.cosine.eer);
    }

    #[test]
    fn llr_grid_matches_worked_values() {
        let g = llr_grid(1.0, 1.0, -1.0, 1.0, 3).unwrap();
        let half_log = 0.5 * (4.0f64 / 3.0).ln();
        assert!((g[4] - half_log).abs() < 1e-12);
        assert!((g[8] - (half_log + 1.0 / 6.0)).abs() < 1e-12);
        assert!((g[2] - (half_log - 0.5)).abs() < 1e-12);
        assert_eq!(g[1], g[3]);
    }
}
