//! Companion-model training and scoring throughput on a small synthetic
//! image corpus (1,000 train / 200 validation samples, one epoch).

use criterion::{criterion_group, criterion_main, Criterion};

use sage_core::dataset::{image_dataset, parse_idx_images, parse_idx_labels, SplitTag};
use sage_core::pipeline::{train_companion, Scorer};
use sage_core::sae::TrainConfig;
use sage_core::synth::{self, N_CLASSES};

fn corpus() -> (sage_core::dataset::LabeledDataset, sage_core::dataset::LabeledDataset) {
    let corpus = synth::image_corpus(100, 20, 7);
    let train = image_dataset(
        parse_idx_images(&corpus.train_images).unwrap(),
        parse_idx_labels(&corpus.train_labels).unwrap(),
        N_CLASSES,
        SplitTag::Train,
    )
    .unwrap();
    let val = image_dataset(
        parse_idx_images(&corpus.test_images).unwrap(),
        parse_idx_labels(&corpus.test_labels).unwrap(),
        N_CLASSES,
        SplitTag::Validation,
    )
    .unwrap();
    (train, val)
}

fn one_epoch_config() -> TrainConfig {
    TrainConfig {
        epochs: 1,
        early_stop_patience: None,
        ..TrainConfig::mnist_default()
    }
}

fn bench_train_epoch(c: &mut Criterion) {
    let (train, val) = corpus();
    let cfg = one_epoch_config();
    let mut group = c.benchmark_group("companion");
    group.sample_size(10);
    group.bench_function("train_epoch_1k_images", |b| {
        b.iter(|| train_companion("mnist", &train, &val, &cfg, 20).unwrap());
    });
    group.finish();
}

fn bench_score(c: &mut Criterion) {
    let (train, val) = corpus();
    let companion = train_companion("mnist", &train, &val, &one_epoch_config(), 20).unwrap();
    let scorer = Scorer::new(companion.model, companion.reference).unwrap();
    let mut group = c.benchmark_group("companion");
    group.sample_size(20);
    group.bench_function("score_200_images", |b| {
        b.iter(|| scorer.score_raw(&val.features).unwrap());
    });
    group.finish();
}

criterion_group!(benches, bench_train_epoch, bench_score);
criterion_main!(benches);
