use debias_core::data::{load_dataset_dir, save_dataset, synth_generate, GenConfig, LabelColumn};
use debias_core::metrics::{demographic_parity_gap, evaluate};
use debias_core::nets::{ClassifierParams, UNetParams};
use debias_core::train::{pretrain_classifier, train_debiaser, Hyperparams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn noise_free(n_train: usize, n_test: usize) -> GenConfig {
    GenConfig {
        n_train,
        n_test,
        noise_sigma: 0.0,
        ..GenConfig::default()
    }
}

#[test]
fn identity_evaluation_is_repeatable() {
    let (_, test) = synth_generate(&noise_free(1, 300)).unwrap();
    let clf = ClassifierParams::init(5).freeze();
    let a = evaluate(&clf, None, &test, 0.5).unwrap();
    let b = evaluate(&clf, None, &test, 0.5).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.n_evaluated, 300);
}

#[test]
fn trained_classifier_is_an_oracle_on_clean_images() {
    let (train, test) = synth_generate(&noise_free(4000, 1000)).unwrap();
    let clf = pretrain_classifier(&train, &Hyperparams::default()).unwrap();
    let report = evaluate(&clf, None, &test, 0.5).unwrap();
    assert_eq!(report.ap, 1.0);
    assert_eq!(report.deo, 0.0);
    // With perfect predictions the DP gap is the label gap itself.
    let y = test.labels(LabelColumn::Target);
    let s = test.labels(LabelColumn::Protected);
    assert_eq!(report.dp, demographic_parity_gap(&y, &s).unwrap());
}

#[test]
fn coin_flip_predictions_have_small_parity_gap() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 10_000;
    let s: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
    let preds: Vec<u8> = (0..n).map(|_| rng.random_bool(0.5) as u8).collect();
    assert!(demographic_parity_gap(&preds, &s).unwrap() <= 0.05);
}

#[test]
fn untrained_unet_changes_the_report_but_not_its_shape() {
    let (_, test) = synth_generate(&GenConfig {
        n_train: 1,
        n_test: 200,
        ..GenConfig::default()
    })
    .unwrap();
    let clf = ClassifierParams::init(1).freeze();
    let unet = UNetParams::init(1);
    let r = evaluate(&clf, Some(&unet), &test, 0.5).unwrap();
    for v in [r.ap, r.dp, r.deo] {
        assert!((0.0..=1.0).contains(&v));
    }
    assert_eq!(r.n_evaluated, 200);
}

#[test]
fn dataset_directory_round_trip() {
    let (train, _) = synth_generate(&noise_free(40, 1)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_dataset(dir.path(), &train).unwrap();
    let back = load_dataset_dir(dir.path(), "Attractive", "Male").unwrap();
    assert_eq!(back.len(), train.len());
    for (a, b) in train.examples().iter().zip(back.examples()) {
        assert_eq!((a.y, a.s, &a.aux), (b.y, b.s, &b.aux));
        // Noise-free pixels are multiples of 0.1, which survive 8-bit quantization
        // to within half a grey level.
        for (p, q) in a.image.data().iter().zip(b.image.data()) {
            assert!((p - q).abs() <= 0.5 / 255.0 + 1e-6);
        }
    }
}

#[test]
fn short_training_run_is_deterministic() {
    let (train, _) = synth_generate(&GenConfig {
        n_train: 256,
        n_test: 1,
        ..GenConfig::default()
    })
    .unwrap();
    let hyper = Hyperparams {
        epochs: 1,
        ..Hyperparams::default()
    };
    let clf = pretrain_classifier(&train, &hyper).unwrap();
    let (u1, log1) = train_debiaser(&train, &clf, &hyper).unwrap();
    let (u2, log2) = train_debiaser(&train, &clf, &hyper).unwrap();
    assert_eq!(u1.params().to_bytes(), u2.params().to_bytes());
    assert_eq!(log1.to_csv(), log2.to_csv());
    assert_eq!(log1.records.len(), 4);
}
