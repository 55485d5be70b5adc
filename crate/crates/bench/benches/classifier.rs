use std::sync::Arc;

use criterion::{criterion_group, criterion_main, Criterion};

use ddeval_core::classifier::{loss_and_grads, train, ClassifierModel, ForwardMode, LabeledBatch};
use ddeval_core::corpus::{CorpusLabel, TokenSequence};
use ddeval_core::fixtures;
use ddeval_core::rng;
use ddeval_core::synthetic::{interpolate, sample};

fn step(c: &mut Criterion) {
    let cfg = fixtures::desk_classifier_config();
    let m = fixtures::chain_reference();
    let seqs = ddeval_core::synthetic::sample_sequences(&m, cfg.batch_size, 0).unwrap();
    let model = ClassifierModel::init(&cfg, fixtures::CHAIN_VOCAB_LEN, 0).unwrap();
    let refs: Vec<&TokenSequence> = seqs.iter().collect();
    let labels: Vec<bool> = (0..seqs.len()).map(|i| i % 2 == 0).collect();
    let batch = LabeledBatch::new(&model, &refs, &labels).unwrap();
    c.bench_function("classifier/forward_backward_64", |b| {
        let mut r = rng::rng_from_seed(1);
        b.iter(|| {
            loss_and_grads(
                &model,
                &batch,
                ForwardMode::Train {
                    rng: &mut r,
                    dropout: cfg.dropout,
                },
            )
            .unwrap()
        })
    });
}

fn epoch(c: &mut Criterion) {
    let mut cfg = fixtures::desk_classifier_config();
    cfg.max_epochs = 1;
    let m = fixtures::chain_reference();
    let g = interpolate(&m, &fixtures::chain_noise(), 0.3).unwrap();
    let vocab = fixtures::chain_vocab();
    let real = sample(&m, Arc::clone(&vocab), 5000, 1, CorpusLabel::Real).unwrap();
    let generated = sample(&g, vocab, 5000, 2, CorpusLabel::Generated).unwrap();
    let mut group = c.benchmark_group("classifier");
    group.sample_size(10);
    group.bench_function("one_epoch_5k", |b| {
        b.iter(|| train(&cfg, &real, &generated, 0).unwrap())
    });
    group.finish();
}

criterion_group!(benches, step, epoch);
criterion_main!(benches);
