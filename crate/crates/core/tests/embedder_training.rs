use nalgebra::DMatrix;

use voxattack::augment::{fuse, DatasetManifest, MaskSpec, Source, UtteranceRecord};
use voxattack::embedder::{train_embedder, FeatureStore, TrainConfig};
use voxattack::features::FeatureMatrix;
use voxattack::synth::{sample_feature_population, FeatureSynthConfig};
use voxattack::Error;

/// Two speakers whose frames sit around opposite per-bin means.
fn two_speakers() -> (DatasetManifest, FeatureStore) {
    let mut store = FeatureStore::new();
    let mut recs = Vec::new();
    for (s, sign) in [("alice", 1.0), ("bob", -1.0)] {
        for u in 0..4 {
            let id = format!("{s}-{u}");
            let data = DMatrix::from_fn(12, 6, |t, f| {
                sign * (1.0 + 0.2 * f as f64) + 0.3 * ((t * 7 + f * 3 + u * 5) as f64).sin()
            });
            store.insert(&id, Source::Orig, FeatureMatrix::new(data, None).unwrap());
            recs.push(UtteranceRecord::new(&id, s, format!("{id}.wav"), Source::Orig));
        }
    }
    (DatasetManifest::new(recs).unwrap(), store)
}

fn small_config(epochs: usize, lr: f64) -> TrainConfig {
    TrainConfig {
        hidden: vec![8],
        embedding_dim: 4,
        epochs,
        batch_size: 4,
        learning_rate: lr,
        seed: 3,
        scale: 10.0,
        ..TrainConfig::default()
    }
}

#[test]
fn separable_speakers_loss_decreases() {
    let (m, store) = two_speakers();
    let out = train_embedder(&m, &store, &MaskSpec::none(), &small_config(50, 0.05)).unwrap();
    let first = out.loss_trace.first().unwrap().total;
    let last = out.loss_trace.last().unwrap().total;
    assert!(last < 0.5 * first, "loss {first} -> {last}");
}

#[test]
fn zero_learning_rate_leaves_parameters_untouched() {
    let (m, store) = two_speakers();
    let a = train_embedder(&m, &store, &MaskSpec::default(), &small_config(0, 0.0)).unwrap();
    let b = train_embedder(&m, &store, &MaskSpec::default(), &small_config(5, 0.0)).unwrap();
    assert_eq!(a.model, b.model);
    let losses: Vec<f64> = b.loss_trace.iter().map(|l| l.total).collect();
    assert!(losses.iter().all(|l| l.is_finite()));
}

#[test]
fn same_seed_gives_identical_trace_and_model() {
    let (m, store) = two_speakers();
    let cfg = small_config(10, 0.05);
    let mask = MaskSpec {
        seed: 11,
        ..MaskSpec::default()
    };
    let a = train_embedder(&m, &store, &mask, &cfg).unwrap();
    let b = train_embedder(&m, &store, &mask, &cfg).unwrap();
    assert_eq!(a.loss_trace, b.loss_trace);
    assert_eq!(a.model.to_json(), b.model.to_json());
    let c = train_embedder(&m, &store, &mask, &TrainConfig { seed: 4, ..cfg }).unwrap();
    assert_ne!(a.loss_trace, c.loss_trace);
}

#[test]
fn contrastive_term_trains_on_fused_data() {
    let pop = sample_feature_population(&FeatureSynthConfig {
        n_speakers: 4,
        utts_per_speaker: 3,
        frames: 10,
        bins: 6,
        pseudo_bins: 2,
        ..FeatureSynthConfig::default()
    })
    .unwrap();
    let fused = fuse(&pop.orig_manifest, &pop.anon_manifest).unwrap();
    let cfg = TrainConfig {
        contrastive: true,
        ..small_config(20, 0.02)
    };
    let out = train_embedder(&fused, &pop.features, &MaskSpec::none(), &cfg).unwrap();
    let first = out.loss_trace.first().unwrap();
    let last = out.loss_trace.last().unwrap();
    assert!(first.contrastive > 0.0);
    assert!(last.total < first.total);
    assert!((last.total - (last.aam + cfg.contrastive_weight * last.contrastive)).abs() < 1e-9);
}

#[test]
fn missing_features_and_bad_config_are_rejected() {
    let (m, _) = two_speakers();
    let empty = FeatureStore::new();
    assert!(matches!(
        train_embedder(&m, &empty, &MaskSpec::none(), &small_config(1, 0.1)),
        Err(Error::Precondition(_))
    ));
    let (m, store) = two_speakers();
    let bad = TrainConfig {
        batch_size: 0,
        ..small_config(1, 0.1)
    };
    assert!(matches!(
        train_embedder(&m, &store, &MaskSpec::none(), &bad),
        Err(Error::InvalidConfig(_))
    ));
}
