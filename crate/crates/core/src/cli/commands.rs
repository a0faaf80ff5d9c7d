use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::Serialize;

use super::config::RunConfig;
use crate::augment::{fuse, DatasetManifest, Source};
use crate::embedder::{
    parse_embedding_archive, parse_embedding_archive_binary, train_embedder, write_embedding_archive,
    write_embedding_archive_binary, EmbedderModel, FeatureStore, SpeakerEmbedding, TrainOutcome,
};
use crate::error::{Error, Result};
use crate::features::{log_mel, parse_feature_archive, read_wav, write_feature_archive};
use crate::io::{fmt_sig9, read_bytes, read_text, stage_seed, write_atomic};
use crate::plda::{fit_plda, PldaModel};
use crate::scoring::{cosine_score, eval_report, GroupKey, Report, ScoreSet, ScoredTrial, TrialList};
use crate::synth::{make_trials, sample_feature_population, sample_population, select_speakers, Shift, SynthConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Plda,
    Cosine,
}

/// Creates `out` and records the resolved configuration and tool version.
pub fn prepare_out(out: &Path, cfg: &RunConfig) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_atomic(&out.join("config.json"), cfg.to_json().as_bytes())?;
    let version = format!("voxattack {}\n", env!("CARGO_PKG_VERSION"));
    write_atomic(&out.join("version.txt"), version.as_bytes())
}

pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    DatasetManifest::from_jsonl(&read_text(path)?)
}

/// Reads a text or binary (`EMB1`) embedding archive.
pub fn load_embeddings(path: &Path) -> Result<Vec<SpeakerEmbedding>> {
    let bytes = read_bytes(path)?;
    if bytes.starts_with(b"EMB1") {
        parse_embedding_archive_binary(&bytes)
    } else {
        let text = String::from_utf8(bytes).map_err(|_| Error::parse(0, format!("{} is not UTF-8", path.display())))?;
        parse_embedding_archive(&text)
    }
}

fn sources_of(manifest: &DatasetManifest) -> Vec<Source> {
    [Source::Orig, Source::Anon]
        .into_iter()
        .filter(|&s| manifest.records().iter().any(|r| r.source == s))
        .collect()
}

pub fn feature_archive_name(source: Source) -> String {
    format!("feats.{source}.txt")
}

pub fn embedding_archive_name(source: Source) -> String {
    format!("embeddings.{source}.txt")
}

/// Loads `feats.<source>.txt` from `dir` for every source in the manifest.
pub fn load_features(dir: &Path, manifest: &DatasetManifest) -> Result<FeatureStore> {
    let mut store = FeatureStore::new();
    for source in sources_of(manifest) {
        let path = dir.join(feature_archive_name(source));
        for (id, x) in parse_feature_archive(&read_text(&path)?)? {
            store.insert(id, source, x);
        }
    }
    Ok(store)
}

pub fn fuse_cmd(orig: &Path, anon: &Path, out: &Path) -> Result<String> {
    let (o, a) = (load_manifest(orig)?, load_manifest(anon)?);
    let fused = fuse(&o, &a)?;
    write_atomic(&out.join("manifest.jsonl"), fused.to_jsonl().as_bytes())?;
    Ok(format!(
        "fused {} records ({} orig, {} anon input)\n",
        fused.len(),
        o.len(),
        a.len()
    ))
}

pub fn features_cmd(cfg: &RunConfig, manifest_path: &Path, out: &Path) -> Result<String> {
    let manifest = load_manifest(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let mut summary = String::new();
    for source in sources_of(&manifest) {
        let mut entries = Vec::new();
        for r in manifest.records().iter().filter(|r| r.source == source) {
            let p = PathBuf::from(&r.path);
            let p = if p.is_relative() { base.join(p) } else { p };
            entries.push((r.utt_id.clone(), log_mel(&read_wav(&p)?, &cfg.mel)?));
        }
        let name = feature_archive_name(source);
        write_atomic(&out.join(&name), write_feature_archive(&entries).as_bytes())?;
        let _ = writeln!(summary, "{name}: {} utterances", entries.len());
    }
    Ok(summary)
}

fn loss_text(outcome: &TrainOutcome) -> String {
    let mut s = String::from("epoch total aam contrastive\n");
    for (i, l) in outcome.loss_trace.iter().enumerate() {
        let _ = writeln!(
            s,
            "{} {} {} {}",
            i + 1,
            fmt_sig9(l.total),
            fmt_sig9(l.aam),
            fmt_sig9(l.contrastive)
        );
    }
    s
}

pub fn train_embedder_cmd(cfg: &RunConfig, manifest: &Path, features: &Path, out: &Path) -> Result<String> {
    let manifest = load_manifest(manifest)?;
    let store = load_features(features, &manifest)?;
    let outcome = train_embedder(&manifest, &store, &cfg.mask, &cfg.train)?;
    write_atomic(&out.join("embedder.json"), outcome.model.to_json().as_bytes())?;
    write_atomic(&out.join("loss.txt"), loss_text(&outcome).as_bytes())?;
    let last = outcome.loss_trace.last().map_or(f64::NAN, |l| l.total);
    Ok(format!(
        "trained {} epochs on {} records, final loss {}\n",
        outcome.loss_trace.len(),
        manifest.len(),
        fmt_sig9(last)
    ))
}

fn embed_records(
    model: &EmbedderModel,
    manifest: &DatasetManifest,
    store: &FeatureStore,
    source: Source,
) -> Result<Vec<SpeakerEmbedding>> {
    manifest
        .records()
        .iter()
        .filter(|r| r.source == source)
        .map(|r| {
            let x = store
                .get(&r.utt_id, source)
                .ok_or_else(|| Error::Precondition(format!("no features for {} ({source})", r.utt_id)))?;
            Ok(SpeakerEmbedding::new(&r.utt_id, model.embed(x)?).with_speaker(&r.spk_id))
        })
        .collect()
}

pub fn embed_cmd(manifest: &Path, features: &Path, model: &Path, out: &Path) -> Result<String> {
    let manifest = load_manifest(manifest)?;
    let store = load_features(features, &manifest)?;
    let model = EmbedderModel::from_json(&read_text(model)?)?;
    let mut summary = String::new();
    for source in sources_of(&manifest) {
        let embs = embed_records(&model, &manifest, &store, source)?;
        let name = embedding_archive_name(source);
        write_atomic(&out.join(&name), write_embedding_archive(&embs).as_bytes())?;
        write_atomic(
            &out.join(format!("embeddings.{source}.bin")),
            &write_embedding_archive_binary(&embs)?,
        )?;
        let _ = writeln!(summary, "{name}: {} embeddings", embs.len());
    }
    Ok(summary)
}

/// Pairs every distinct utterance of the manifest with its speaker and its
/// vector from the archive.
fn label_embeddings(manifest: &DatasetManifest, embs: &[SpeakerEmbedding]) -> Result<Vec<(String, DVector<f64>)>> {
    let by_id: HashMap<&str, &DVector<f64>> = embs.iter().map(|e| (e.utt_id.as_str(), &e.vector)).collect();
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    for r in manifest.records() {
        if !seen.insert(r.utt_id.as_str()) {
            continue;
        }
        let v = by_id
            .get(r.utt_id.as_str())
            .ok_or_else(|| Error::Precondition(format!("no embedding for utterance {}", r.utt_id)))?;
        out.push((r.spk_id.clone(), (*v).clone()));
    }
    Ok(out)
}

fn loglik_text(initial: f64, trace: &[f64]) -> String {
    let mut s = format!("0 {}\n", fmt_sig9(initial));
    for (i, l) in trace.iter().enumerate() {
        let _ = writeln!(s, "{} {}", i + 1, fmt_sig9(*l));
    }
    s
}

pub fn train_plda_cmd(cfg: &RunConfig, manifest: &Path, embeddings: &Path, out: &Path) -> Result<String> {
    let manifest = load_manifest(manifest)?;
    let labeled = label_embeddings(&manifest, &load_embeddings(embeddings)?)?;
    let fit = fit_plda(&labeled, &cfg.plda)?;
    write_atomic(&out.join("plda.json"), fit.model.to_json().as_bytes())?;
    write_atomic(
        &out.join("loglik.txt"),
        loglik_text(fit.initial_loglik, &fit.loglik_trace).as_bytes(),
    )?;
    Ok(format!(
        "trained PLDA on {} embeddings, {} iterations\n",
        labeled.len(),
        fit.loglik_trace.len()
    ))
}

/// Scores every trial. PLDA applies the model's preprocessing to the raw
/// archive vectors; cosine uses them as they are.
pub fn score_trials(
    trials: &TrialList,
    embs: &[SpeakerEmbedding],
    backend: Backend,
    model: Option<&PldaModel>,
) -> Result<ScoreSet> {
    let by_id: HashMap<&str, &DVector<f64>> = embs.iter().map(|e| (e.utt_id.as_str(), &e.vector)).collect();
    let model = match (backend, model) {
        (Backend::Plda, None) => return Err(Error::Precondition("the plda backend needs a model".into())),
        (_, m) => m,
    };
    let mut scores = Vec::with_capacity(trials.len());
    for (i, t) in trials.trials.iter().enumerate() {
        let get = |id: &str| {
            by_id.get(id).copied().ok_or_else(|| Error::MissingUtterance {
                line: i + 1,
                utt: id.to_string(),
            })
        };
        let (a, b) = (get(&t.enroll)?, get(&t.test)?);
        let score = match backend {
            Backend::Plda => model.expect("checked above").score_raw(a, b)?,
            Backend::Cosine => cosine_score(a.as_slice(), b.as_slice())?,
        };
        scores.push(ScoredTrial {
            enroll: t.enroll.clone(),
            test: t.test.clone(),
            score,
        });
    }
    Ok(ScoreSet { scores })
}

pub fn score_cmd(
    backend: Backend,
    trials: &Path,
    embeddings: &Path,
    model: Option<&Path>,
    out: &Path,
) -> Result<String> {
    let trials = TrialList::parse(&read_text(trials)?)?;
    let embs = load_embeddings(embeddings)?;
    let model = match model {
        Some(p) => Some(PldaModel::from_json(&read_text(p)?)?),
        None => None,
    };
    let scores = score_trials(&trials, &embs, backend, model.as_ref())?;
    write_atomic(&out.join("scores.txt"), scores.to_text().as_bytes())?;
    Ok(format!("scored {} trials\n", scores.len()))
}

pub fn uniform_groups(n: usize) -> Vec<GroupKey> {
    vec![GroupKey::new("all", "all"); n]
}

/// Returns the report; writes `report.json` and `report.txt` when `out` is set.
pub fn eval_cmd(scores: &Path, trials: &Path, groups: Option<&Path>, out: Option<&Path>) -> Result<Report> {
    let scores = ScoreSet::parse(&read_text(scores)?)?;
    let trials = TrialList::parse(&read_text(trials)?)?;
    let groups = match groups {
        Some(p) => GroupKey::parse_list(&read_text(p)?)?,
        None => uniform_groups(trials.len()),
    };
    let report = eval_report(&scores, &trials, &groups)?;
    if let Some(out) = out {
        write_atomic(&out.join("report.json"), report.to_json().as_bytes())?;
        write_atomic(&out.join("report.txt"), report.to_table(false).as_bytes())?;
    }
    Ok(report)
}

pub fn synth_cmd(cfg: &RunConfig, out: &Path) -> Result<String> {
    let s = &cfg.synth;
    let shift = Shift::random(
        s.d,
        s.rotate,
        s.bias_scale,
        s.noise_scale,
        stage_seed(cfg.seed, "synth-shift"),
    );
    let mut sc = SynthConfig::isotropic(
        s.d,
        s.n_speakers,
        s.utts_per_speaker,
        s.between,
        s.within,
        stage_seed(cfg.seed, "synth-population"),
    );
    sc.shift = shift;
    let pop = sample_population(&sc)?;
    let trials = make_trials(&pop.anon_manifest, stage_seed(cfg.seed, "trials"));

    let (mu, sb, sw) = sc.shift.transform_model(&sc.mu, &sc.sigma_b, &sc.sigma_w);
    let truth = PldaModel::new(mu, sb, sw, crate::plda::Preproc::identity(s.d))?;
    let files: [(&str, String); 6] = [
        ("manifest.orig.jsonl", pop.orig_manifest.to_jsonl()),
        ("manifest.anon.jsonl", pop.anon_manifest.to_jsonl()),
        ("embeddings.orig.txt", write_embedding_archive(&pop.orig)),
        ("embeddings.anon.txt", write_embedding_archive(&pop.anon)),
        ("trials.txt", trials.to_text()),
        ("truth.anon.plda.json", truth.to_json()),
    ];
    for (name, body) in &files {
        write_atomic(&out.join(name), body.as_bytes())?;
    }
    Ok(format!(
        "sampled {} speakers x {} utterances (d = {}), {} trials\n",
        s.n_speakers,
        s.utts_per_speaker,
        s.d,
        trials.len()
    ))
}

/// Everything produced by one run of the synthetic end-to-end pipeline.
#[derive(Debug, Clone)]
pub struct DemoRun {
    pub train_manifest: DatasetManifest,
    pub embedder: TrainOutcome,
    pub anon_embeddings: Vec<SpeakerEmbedding>,
    pub plda: PldaModel,
    pub trials: TrialList,
    /// Scores after a text round trip, i.e. exactly what the score files hold.
    pub plda_scores: ScoreSet,
    pub cosine_scores: ScoreSet,
    pub plda_report: Report,
    pub cosine_report: Report,
}

/// Synthetic feature population → (fused) embedder training → anon
/// embeddings → PLDA on training speakers → PLDA and cosine scoring of
/// held-out anon trials.
pub fn demo_pipeline(cfg: &RunConfig) -> Result<DemoRun> {
    let d = &cfg.demo;
    let mut pop_cfg = d.population.clone();
    pop_cfg.seed = stage_seed(cfg.seed, "demo-population");
    let pop = sample_feature_population(&pop_cfg)?;

    let speakers = pop.orig_manifest.speakers();
    let split = speakers.len() - d.eval_speakers;
    let (train_spk, eval_spk) = speakers.split_at(split);
    let train_orig = select_speakers(&pop.orig_manifest, train_spk)?;
    let train_anon = select_speakers(&pop.anon_manifest, train_spk)?;
    let train_manifest = if d.fuse {
        fuse(&train_orig, &train_anon)?
    } else {
        train_orig
    };
    let embedder = train_embedder(&train_manifest, &pop.features, &cfg.mask, &cfg.train)?;

    let anon_embeddings = embed_records(&embedder.model, &pop.anon_manifest, &pop.features, Source::Anon)?;
    let plda_train = label_embeddings(&train_anon, &anon_embeddings)?;
    let plda = fit_plda(&plda_train, &cfg.plda)?.model;

    let eval_anon = select_speakers(&pop.anon_manifest, eval_spk)?;
    let trials = make_trials(&eval_anon, stage_seed(cfg.seed, "trials"));
    let groups = uniform_groups(trials.len());
    let roundtrip = |s: ScoreSet| ScoreSet::parse(&s.to_text());
    let plda_scores = roundtrip(score_trials(&trials, &anon_embeddings, Backend::Plda, Some(&plda))?)?;
    let cosine_scores = roundtrip(score_trials(&trials, &anon_embeddings, Backend::Cosine, None)?)?;
    let plda_report = eval_report(&plda_scores, &trials, &groups)?;
    let cosine_report = eval_report(&cosine_scores, &trials, &groups)?;
    Ok(DemoRun {
        train_manifest,
        embedder,
        anon_embeddings,
        plda,
        trials,
        plda_scores,
        cosine_scores,
        plda_report,
        cosine_report,
    })
}

#[derive(Serialize)]
struct DemoReport<'a> {
    plda: &'a Report,
    cosine: &'a Report,
}

pub fn demo_tables(run: &DemoRun, ansi: bool) -> String {
    format!(
        "backend: plda\n{}\nbackend: cosine\n{}",
        run.plda_report.to_table(ansi),
        run.cosine_report.to_table(ansi)
    )
}

pub fn demo_cmd(cfg: &RunConfig, out: &Path) -> Result<DemoRun> {
    let run = demo_pipeline(cfg)?;
    let mut report = serde_json::to_string_pretty(&DemoReport {
        plda: &run.plda_report,
        cosine: &run.cosine_report,
    })?;
    report.push('\n');
    let files: [(&str, String); 10] = [
        ("manifest.train.jsonl", run.train_manifest.to_jsonl()),
        ("embedder.json", run.embedder.model.to_json()),
        ("loss.txt", loss_text(&run.embedder)),
        ("embeddings.anon.txt", write_embedding_archive(&run.anon_embeddings)),
        ("plda.json", run.plda.to_json()),
        ("trials.txt", run.trials.to_text()),
        ("scores.plda.txt", run.plda_scores.to_text()),
        ("scores.cosine.txt", run.cosine_scores.to_text()),
        ("report.txt", demo_tables(&run, false)),
        ("report.json", report),
    ];
    for (name, body) in &files {
        write_atomic(&out.join(name), body.as_bytes())?;
    }
    Ok(run)
}
