//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use voxattack::augment::{apply_masks, sample_masks, DatasetManifest, MaskSpec, Source, UtteranceRecord};
use voxattack::cli::{demo_pipeline, RunConfig};
use voxattack::embedder::{
    aam_loss, contrastive_loss, parse_embedding_archive, parse_embedding_archive_binary, write_embedding_archive,
    write_embedding_archive_binary, ContrastiveItem, EmbedderModel, SpeakerEmbedding,
};
use voxattack::features::FeatureMatrix;
use voxattack::io::stage_seed;
use voxattack::plda::{fit_plda, train_plda, PldaConfig, PldaModel, Preproc, TrainingSet};
use voxattack::scoring::{
    compute_eer, cosine_score, eer_from_scores, ScoreSet, ScoredTrial, Trial, TrialLabel, TrialList,
};
use voxattack::synth::{make_trials, oracle_eer, oracle_llr, random_spd, sample_population, Shift, SynthConfig};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn gvec(rng: &mut ChaCha8Rng, d: usize) -> DVector<f64> {
    DVector::from_fn(d, |_, _| rng.sample(StandardNormal))
}

fn random_model(rng: &mut ChaCha8Rng, d: usize) -> PldaModel {
    let eig = |rng: &mut ChaCha8Rng| -> Vec<f64> { (0..d).map(|_| rng.random_range(0.1..5.0)).collect() };
    let (eb, ew) = (eig(rng), eig(rng));
    let sb = random_spd(&eb, rng);
    let sw = random_spd(&ew, rng);
    PldaModel::new(gvec(rng, d), sb, sw, Preproc::identity(d)).expect("valid random model")
}

fn c1_plda_matches_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for i in 0..1000 {
        let d = [1, 2, 4, 8][i % 4];
        let m = random_model(&mut rng, d);
        let a = m.mu() + gvec(&mut rng, d) * 2.0;
        let b = m.mu() + gvec(&mut rng, d) * 2.0;
        let diff = (m.score(&a, &b).unwrap() - oracle_llr(&m, &a, &b).unwrap()).abs();
        worst = worst.max(diff);
    }
    outcome(
        worst < 1e-8,
        format!("1000 instances, max |score - oracle| = {worst:.3e}"),
    )
}

fn c2_worked_values() -> Outcome {
    let m = PldaModel::new(
        DVector::zeros(1),
        DMatrix::identity(1, 1),
        DMatrix::identity(1, 1),
        Preproc::identity(1),
    )
    .unwrap();
    let v = |x: f64| DVector::from_element(1, x);
    let got = [
        m.score(&v(0.0), &v(0.0)).unwrap(),
        m.score(&v(1.0), &v(1.0)).unwrap(),
        m.score(&v(1.0), &v(-1.0)).unwrap(),
    ];
    // bivariate Gaussians: same-speaker covariance [[2,1],[1,2]], different-speaker 2·I
    let half_log = 0.5 * (4.0f64 / 3.0).ln();
    let want = [half_log, half_log + 1.0 / 6.0, half_log - 0.5];
    let err = got.iter().zip(&want).map(|(g, w)| (g - w).abs()).fold(0.0, f64::max);
    let rounded = [0.31051, -0.35616];
    let agrees = got[1..].iter().zip(&rounded).all(|(g, r)| (g - r).abs() <= 5e-6);
    outcome(
        err < 1e-6 && agrees,
        format!("scores {got:.7?}, max error vs closed form {err:.2e}, 5-decimal values agree {agrees}"),
    )
}

fn rel_frobenius(est: &DMatrix<f64>, truth: &DMatrix<f64>) -> f64 {
    (est - truth).norm() / truth.norm()
}

fn c3_em_soundness() -> Outcome {
    let d = 4;
    let mut all_ok = true;
    let mut parts = Vec::new();
    for seed in 1..=5u64 {
        let mut rb = ChaCha8Rng::seed_from_u64(stage_seed(seed, "between"));
        let mut rw = ChaCha8Rng::seed_from_u64(stage_seed(seed, "within"));
        let sb = random_spd(&[10.0, 1.0, 0.5, 0.25], &mut rb);
        let sw = random_spd(&[1.0, 0.8, 0.6, 0.4], &mut rw);
        let cfg = SynthConfig {
            d,
            n_speakers: 200,
            utts_per_speaker: 20,
            mu: DVector::zeros(d),
            sigma_b: sb.clone(),
            sigma_w: sw.clone(),
            shift: Shift::identity(d),
            seed,
        };
        let pop = sample_population(&cfg).unwrap();
        let data =
            TrainingSet::from_labeled(pop.orig.iter().map(|e| (e.spk_id.clone().unwrap(), e.vector.clone()))).unwrap();
        let fit = train_plda(&data, 20).unwrap();
        let mut prev = fit.initial_loglik;
        let mut monotone = true;
        for &l in &fit.loglik_trace {
            monotone &= l - prev >= -1e-8;
            prev = l;
        }
        let eb = rel_frobenius(fit.model.sigma_b(), &sb);
        let ew = rel_frobenius(fit.model.sigma_w(), &sw);
        let ok = monotone && eb < 0.15 && ew < 0.15;
        all_ok &= ok;
        parts.push(format!(
            "seed {seed}: monotone={monotone} Σb {eb:.3} Σw {ew:.3}{}",
            if ok { "" } else { " ✗" }
        ));
    }
    outcome(all_ok, parts.join("; "))
}

fn split_scores(scores: &[f64], trials: &TrialList) -> (Vec<f64>, Vec<f64>) {
    let mut tar = Vec::new();
    let mut non = Vec::new();
    for (s, t) in scores.iter().zip(&trials.trials) {
        match t.label {
            TrialLabel::Target => tar.push(*s),
            TrialLabel::Nontarget => non.push(*s),
        }
    }
    (tar, non)
}

fn c4_plda_beats_cosine() -> Outcome {
    let d = 8;
    let mut wins = 0;
    let mut parts = Vec::new();
    for seed in 1..=5u64 {
        let shift = Shift::random(d, true, 1.0, 0.5, stage_seed(seed, "shift"));
        let mut train_cfg = SynthConfig::isotropic(d, 50, 10, 4.0, 1.0, stage_seed(seed, "train"));
        train_cfg.shift = shift.clone();
        let mut eval_cfg = train_cfg.clone();
        eval_cfg.seed = stage_seed(seed, "eval");
        let train = sample_population(&train_cfg).unwrap();
        let eval = sample_population(&eval_cfg).unwrap();

        let labeled: Vec<(String, DVector<f64>)> = train
            .anon
            .iter()
            .map(|e| (e.spk_id.clone().unwrap(), e.vector.clone()))
            .collect();
        let model = fit_plda(&labeled, &PldaConfig::default()).unwrap().model;

        let trials = make_trials(&eval.anon_manifest, stage_seed(seed, "trials"));
        let index: std::collections::HashMap<&str, &DVector<f64>> =
            eval.anon.iter().map(|e| (e.utt_id.as_str(), &e.vector)).collect();
        let mut plda = Vec::new();
        let mut cos = Vec::new();
        for t in &trials.trials {
            let (a, b) = (index[t.enroll.as_str()], index[t.test.as_str()]);
            plda.push(model.score_raw(a, b).unwrap());
            cos.push(cosine_score(a.as_slice(), b.as_slice()).unwrap());
        }
        let (pt, pn) = split_scores(&plda, &trials);
        let (ct, cn) = split_scores(&cos, &trials);
        let ep = eer_from_scores(&pt, &pn).unwrap().eer;
        let ec = eer_from_scores(&ct, &cn).unwrap().eer;
        if ep < ec {
            wins += 1;
        }
        parts.push(format!(
            "seed {seed}: plda {:.2}% cosine {:.2}%",
            100.0 * ep,
            100.0 * ec
        ));
    }
    outcome(wins >= 4, format!("{wins}/5 seeds; {}", parts.join("; ")))
}

fn c5_fusion_helps() -> Outcome {
    let mut wins = 0;
    let mut parts = Vec::new();
    for seed in 1..=5u64 {
        let fused = RunConfig::default().resolve(Some(seed)).unwrap();
        let mut orig_only = fused.clone();
        orig_only.demo.fuse = false;
        let a = demo_pipeline(&fused).unwrap();
        let b = demo_pipeline(&orig_only).unwrap();
        let (ef, eo) = (a.cosine_report.cells[0].eer, b.cosine_report.cells[0].eer);
        if ef <= eo {
            wins += 1;
        }
        parts.push(format!(
            "seed {seed}: fused {:.2}% orig-only {:.2}%",
            100.0 * ef,
            100.0 * eo
        ));
    }
    outcome(wins >= 4, format!("{wins}/5 seeds; {}", parts.join("; ")))
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale = a
        .iter()
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt()
        .max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
    if scale < 1e-10 {
        diff
    } else {
        diff / scale
    }
}

fn c6_gradients() -> Outcome {
    let h = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        // AAM
        let (classes, dim) = (rng.random_range(2..6), rng.random_range(2..6));
        let w = DMatrix::from_fn(classes, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        let e = gvec(&mut rng, dim);
        let label = rng.random_range(0..classes);
        let (s, m) = (rng.random_range(1.0..10.0), rng.random_range(0.0..0.5));
        let out = aam_loss(&w, s, m, &e, label).unwrap();
        let fd_e: Vec<f64> = (0..dim)
            .map(|i| {
                let (mut p, mut q) = (e.clone(), e.clone());
                p[i] += h;
                q[i] -= h;
                (aam_loss(&w, s, m, &p, label).unwrap().loss - aam_loss(&w, s, m, &q, label).unwrap().loss) / (2.0 * h)
            })
            .collect();
        worst = worst.max(rel_err(out.grad_embedding.as_slice(), &fd_e));
        let fd_w: Vec<f64> = (0..classes * dim)
            .map(|k| {
                let (mut p, mut q) = (w.clone(), w.clone());
                p[k] += h;
                q[k] -= h;
                (aam_loss(&p, s, m, &e, label).unwrap().loss - aam_loss(&q, s, m, &e, label).unwrap().loss) / (2.0 * h)
            })
            .collect();
        worst = worst.max(rel_err(out.grad_weights.as_slice(), &fd_w));

        // contrastive
        let n_utts = rng.random_range(2..5);
        let dim = rng.random_range(2..6);
        let tau = rng.random_range(0.1..1.0);
        let ids: Vec<String> = (0..n_utts).map(|u| format!("u{u}")).collect();
        let mut keys = Vec::new();
        for id in &ids {
            keys.push((id.clone(), Source::Orig));
            keys.push((id.clone(), Source::Anon));
        }
        let embs: Vec<DVector<f64>> = keys.iter().map(|_| gvec(&mut rng, dim)).collect();
        let loss_of = |embs: &[DVector<f64>]| {
            let items: Vec<ContrastiveItem<'_>> = embs
                .iter()
                .zip(&keys)
                .map(|(e, (id, src))| ContrastiveItem {
                    embedding: e,
                    utt_id: id,
                    source: *src,
                })
                .collect();
            contrastive_loss(&items, tau).unwrap()
        };
        let analytic: Vec<f64> = loss_of(&embs).grads.iter().flat_map(|g| g.iter().copied()).collect();
        let mut fd = Vec::new();
        for i in 0..embs.len() {
            for j in 0..dim {
                let (mut p, mut q) = (embs.clone(), embs.clone());
                p[i][j] += h;
                q[i][j] -= h;
                fd.push((loss_of(&p).loss - loss_of(&q).loss) / (2.0 * h));
            }
        }
        worst = worst.max(rel_err(&analytic, &fd));
    }
    outcome(worst < 1e-4, format!("100 instances, max relative error {worst:.2e}"))
}

fn c7_eer_estimator() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut ok = true;
    let mut worst_margin = f64::INFINITY;
    for k in 0..100 {
        let n_tar = rng.random_range(20..=180);
        let sep = rng.random_range(0.0..3.0);
        let mut trials = Vec::new();
        let mut scores = Vec::new();
        for i in 0..200 {
            let label = if i < n_tar {
                TrialLabel::Target
            } else {
                TrialLabel::Nontarget
            };
            let mut s: f64 = rng.sample(StandardNormal);
            if label == TrialLabel::Target {
                s += sep;
            }
            if k % 3 == 0 {
                s = (s * 2.0).round() / 2.0;
            }
            let (e, t) = (format!("e{i}"), format!("t{i}"));
            scores.push(ScoredTrial {
                enroll: e.clone(),
                test: t.clone(),
                score: s,
            });
            trials.push(Trial {
                enroll: e,
                test: t,
                label,
            });
        }
        let (trials, scores) = (TrialList::new(trials), ScoreSet { scores });
        let fast = compute_eer(&scores, &trials).unwrap().eer;
        let (tar, non) = scores.split_by_label(&trials).unwrap();
        let slow = oracle_eer(&tar, &non).unwrap();
        let tol = 1.0 / (2.0 * tar.len().min(non.len()) as f64);
        worst_margin = worst_margin.min(tol - (fast - slow).abs());
        ok &= (fast - slow).abs() <= tol;
    }
    let fixtures = [
        eer_from_scores(&[0.9, 0.8], &[0.1, 0.2]).unwrap().eer,
        eer_from_scores(&[0.1, 0.2], &[0.9, 0.8]).unwrap().eer,
        eer_from_scores(&[3.0, 1.0], &[2.0, 0.0]).unwrap().eer,
    ];
    let exact = fixtures == [0.0, 1.0, 0.5];
    outcome(
        ok && exact,
        format!("100 random sets, min slack {worst_margin:.4}; fixtures {fixtures:?}"),
    )
}

fn c8_specaugment() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x = FeatureMatrix::new(DMatrix::from_fn(40, 24, |_, _| rng.sample(StandardNormal)), None).unwrap();
    let none = sample_masks(&MaskSpec::none(), 40, 24).unwrap();
    let passed = apply_masks(&x, &none).unwrap();
    let bit_exact = passed
        .data()
        .iter()
        .zip(x.data().iter())
        .all(|(a, b)| a.to_bits() == b.to_bits());

    let mut bound_ok = true;
    let mut determinism = true;
    for _ in 0..1000 {
        let (t, f) = (rng.random_range(1..60), rng.random_range(1..40));
        let spec = MaskSpec {
            n_time_masks: rng.random_range(0..4),
            max_time_width: rng.random_range(0..=t),
            n_freq_masks: rng.random_range(0..4),
            max_freq_width: rng.random_range(0..=f),
            seed: rng.random(),
        };
        let m = sample_masks(&spec, t, f).unwrap();
        let frac = m.zeros_count() as f64 / (t * f) as f64;
        bound_ok &= frac <= spec.max_masked_fraction(t, f) + 1e-12;
        determinism &= sample_masks(&spec, t, f).unwrap() == m;
    }
    outcome(
        bit_exact && bound_ok && determinism,
        format!("pass-through {bit_exact}, bound {bound_ok}, determinism {determinism}"),
    )
}

fn stable<T>(first: &[u8], parse: impl Fn(&[u8]) -> T, write: impl Fn(&T) -> Vec<u8>) -> bool {
    write(&parse(first)) == first
}

fn c9_round_trips() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let manifest = DatasetManifest::new(vec![
        UtteranceRecord::new("u1", "s1", "a/u1.wav", Source::Orig),
        UtteranceRecord::new("u1", "s1", "b/u1.wav", Source::Anon),
        UtteranceRecord::new("u2", "s2", "a/u2.wav", Source::Orig),
    ])
    .unwrap();
    let pop = sample_population(&SynthConfig::isotropic(5, 6, 3, 2.0, 1.0, 9)).unwrap();
    let trials = make_trials(&pop.anon_manifest, 9);
    let embs: Vec<SpeakerEmbedding> = pop.anon.clone();
    let plda = random_model(&mut rng, 5);
    let embedder = EmbedderModel::init(6, &[5, 4], 3, vec!["a".into(), "b".into()], Default::default(), 9).unwrap();

    let checks = [
        (
            "manifest",
            stable(
                manifest.to_jsonl().as_bytes(),
                |b| DatasetManifest::from_jsonl(std::str::from_utf8(b).unwrap()).unwrap(),
                |m| m.to_jsonl().into_bytes(),
            ),
        ),
        (
            "trials",
            stable(
                trials.to_text().as_bytes(),
                |b| TrialList::parse(std::str::from_utf8(b).unwrap()).unwrap(),
                |t| t.to_text().into_bytes(),
            ),
        ),
        (
            "text archive",
            stable(
                write_embedding_archive(&embs).as_bytes(),
                |b| parse_embedding_archive(std::str::from_utf8(b).unwrap()).unwrap(),
                |e| write_embedding_archive(e).into_bytes(),
            ),
        ),
        (
            "binary archive",
            stable(
                &write_embedding_archive_binary(&embs).unwrap(),
                |b| parse_embedding_archive_binary(b).unwrap(),
                |e| write_embedding_archive_binary(e).unwrap(),
            ),
        ),
        (
            "plda model",
            stable(
                plda.to_json().as_bytes(),
                |b| PldaModel::from_json(std::str::from_utf8(b).unwrap()).unwrap(),
                |m| m.to_json().into_bytes(),
            ),
        ),
        (
            "embedder model",
            stable(
                embedder.to_json().as_bytes(),
                |b| EmbedderModel::from_json(std::str::from_utf8(b).unwrap()).unwrap(),
                |m| m.to_json().into_bytes(),
            ),
        ),
    ];
    let failed: Vec<&str> = checks.iter().filter(|(_, ok)| !ok).map(|(n, _)| *n).collect();
    outcome(
        failed.is_empty(),
        if failed.is_empty() {
            "6 formats byte-stable".to_string()
        } else {
            format!("unstable: {failed:?}")
        },
    )
}

fn read_tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

fn c10_demo_determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_voxattack");
    let mut trees = Vec::new();
    for run in ["a", "b"] {
        let out = tmp.path().join(run);
        let status = Command::new(bin)
            .args(["demo", "--seed", "7", "--out"])
            .arg(&out)
            .env("NO_COLOR", "1")
            .output()
            .unwrap();
        if !status.status.success() {
            return outcome(false, format!("demo exited with {}", status.status));
        }
        trees.push(read_tree(&out));
    }
    let same = trees[0] == trees[1];
    outcome(same, format!("{} files, identical = {same}", trees[0].len()))
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 10] = [
        ("plda score equals oracle llr", c1_plda_matches_oracle),
        ("worked 1-D llr values", c2_worked_values),
        ("em soundness and recovery", c3_em_soundness),
        ("plda beats cosine on anon trials", c4_plda_beats_cosine),
        ("fused training not worse than orig-only", c5_fusion_helps),
        ("analytic gradients match finite differences", c6_gradients),
        ("eer estimator matches brute force", c7_eer_estimator),
        ("specaugment contract", c8_specaugment),
        ("format round trips", c9_round_trips),
        ("demo determinism", c10_demo_determinism),
    ];
    let mut failures = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = f();
        if !o.pass {
            failures += 1;
        }
        println!(
            "[{}] {:>2} {name} ({:.1}s): {}",
            if o.pass { "PASS" } else { "FAIL" },
            i + 1,
            start.elapsed().as_secs_f64(),
            o.detail
        );
    }
    println!(
        "acceptance: {}/{} criteria passed",
        criteria.len() - failures,
        criteria.len()
    );
    if failures > 0 {
        std::process::exit(1);
    }
}
