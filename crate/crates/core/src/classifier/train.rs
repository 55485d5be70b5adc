use log::{debug, info};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::model::{loss_and_grads, ClassifierModel, ForwardMode, LabeledBatch};
use super::{ClassifierConfig, DdReport};
use crate::corpus::{Corpus, TokenSequence};
use crate::error::{data_err, Result};
use crate::rng;

/// A sequence with its class (`true` = real).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledExample {
    pub sequence: TokenSequence,
    pub real: bool,
}

/// Balanced train/dev/test splits.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub train: Vec<LabeledExample>,
    pub dev: Vec<LabeledExample>,
    pub test: Vec<LabeledExample>,
}

/// Balances the two corpora by downsampling the larger one, splits each
/// class with the configured proportions and merges the classes.
pub fn prepare_dataset(config: &ClassifierConfig, real: &Corpus, generated: &Corpus, seed: u64) -> Result<Dataset> {
    if real.is_empty() || generated.is_empty() {
        return Err(data_err!("classifier needs non-empty real and generated corpora"));
    }
    if !real.same_vocab(generated) {
        return Err(data_err!("real and generated corpora use different vocabularies"));
    }
    let n = real.len().min(generated.len());
    let take = |corpus: &Corpus, label: &str| -> Vec<TokenSequence> {
        let mut idx: Vec<usize> = (0..corpus.len()).collect();
        if corpus.len() > n {
            idx.shuffle(&mut rng::derived_rng(seed, label, &[]));
            idx.truncate(n);
            idx.sort_unstable();
        }
        idx.into_iter().map(|i| corpus.sequences()[i].clone()).collect()
    };
    let real_seqs = take(real, "balance-real");
    let gen_seqs = take(generated, "balance-generated");

    let mut ds = Dataset {
        train: Vec::new(),
        dev: Vec::new(),
        test: Vec::new(),
    };
    for (seqs, is_real, label) in [(real_seqs, true, "split-real"), (gen_seqs, false, "split-generated")] {
        let split = config.split_spec(rng::derive_seed(seed, label, &[]))?;
        let (a, b, c) = split.partition(seqs.len())?;
        let pick = |ix: Vec<usize>| {
            ix.into_iter().map(|i| LabeledExample {
                sequence: seqs[i].clone(),
                real: is_real,
            })
        };
        ds.train.extend(pick(a));
        ds.dev.extend(pick(b));
        ds.test.extend(pick(c));
    }
    Ok(ds)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_dev_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct TrainedClassifier {
    /// The checkpoint with the highest dev accuracy.
    pub model: ClassifierModel,
    pub log: TrainingLog,
    pub dataset: Dataset,
}

fn batch_of(model: &ClassifierModel, examples: &[LabeledExample], idx: &[usize]) -> Result<LabeledBatch> {
    let seqs: Vec<&TokenSequence> = idx.iter().map(|&i| &examples[i].sequence).collect();
    let labels: Vec<bool> = idx.iter().map(|&i| examples[i].real).collect();
    LabeledBatch::new(model, &seqs, &labels)
}

/// Fraction of examples classified correctly, overall and per class.
/// `z ≥ 0.5` counts as a real prediction.
pub fn accuracy(model: &ClassifierModel, examples: &[LabeledExample]) -> Result<(f64, f64, f64)> {
    if examples.is_empty() {
        return Err(data_err!("cannot measure accuracy on an empty set"));
    }
    let (mut hit, mut real_hit, mut real_n, mut gen_hit, mut gen_n) = (0usize, 0usize, 0usize, 0usize, 0usize);
    for ex in examples {
        let predicted_real = model.predict(&ex.sequence)? >= 0.5;
        let ok = predicted_real == ex.real;
        hit += usize::from(ok);
        if ex.real {
            real_n += 1;
            real_hit += usize::from(ok);
        } else {
            gen_n += 1;
            gen_hit += usize::from(ok);
        }
    }
    let frac = |a: usize, b: usize| if b == 0 { f64::NAN } else { a as f64 / b as f64 };
    Ok((frac(hit, examples.len()), frac(real_hit, real_n), frac(gen_hit, gen_n)))
}

/// Trains the classifier on real (positive) vs generated (negative)
/// sequences until the dev accuracy stops improving, returning the best
/// dev-accuracy checkpoint.
pub fn train(config: &ClassifierConfig, real: &Corpus, generated: &Corpus, seed: u64) -> Result<TrainedClassifier> {
    config.validate()?;
    let dataset = prepare_dataset(config, real, generated, seed)?;
    let mut model = ClassifierModel::init(config, real.vocab().len(), rng::derive_seed(seed, "init", &[]))?;
    // Validate every sequence up front so failures surface before training.
    for ex in dataset.train.iter().chain(&dataset.dev).chain(&dataset.test) {
        model.input_row(&ex.sequence)?;
    }
    let mut opt = Adam::new(model.num_params(), config.learning_rate, config.adam);
    let mut dropout_rng = rng::derived_rng(seed, "dropout", &[]);

    let mut log = TrainingLog {
        best_dev_accuracy: f64::NEG_INFINITY,
        ..Default::default()
    };
    let mut best = model.clone();
    let mut plateau_ref = f64::NEG_INFINITY;
    let mut stale = 0;
    for epoch in 1..=config.max_epochs {
        let mut order: Vec<usize> = (0..dataset.train.len()).collect();
        order.shuffle(&mut rng::derived_rng(seed, "epoch", &[epoch as u64]));
        let mut loss_sum = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch = batch_of(&model, &dataset.train, chunk)?;
            let (loss, grads) = loss_and_grads(
                &model,
                &batch,
                ForwardMode::Train {
                    rng: &mut dropout_rng,
                    dropout: config.dropout,
                },
            )?;
            loss_sum += loss * chunk.len() as f64;
            opt.step(model.params_mut(), &grads);
        }
        if !model.is_finite() {
            return Err(crate::Error::Numeric(format!("parameters diverged in epoch {epoch}")));
        }
        let (dev_acc, _, _) = accuracy(&model, &dataset.dev)?;
        let train_loss = loss_sum / dataset.train.len() as f64;
        debug!("epoch {epoch}: loss {train_loss:.5} dev accuracy {dev_acc:.4}");
        log.epochs.push(EpochRecord {
            epoch,
            train_loss,
            dev_accuracy: dev_acc,
        });
        if dev_acc > log.best_dev_accuracy {
            log.best_dev_accuracy = dev_acc;
            log.best_epoch = epoch;
            best = model.clone();
        }
        if dev_acc > plateau_ref + config.min_improvement {
            plateau_ref = dev_acc;
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                break;
            }
        }
    }
    info!(
        "classifier trained for {} epochs, best dev accuracy {:.4} at epoch {}",
        log.epochs.len(),
        log.best_dev_accuracy,
        log.best_epoch
    );
    best.set_init_seed(model.init_seed());
    Ok(TrainedClassifier {
        model: best,
        log,
        dataset,
    })
}

/// Test-set DD estimate of an already trained classifier.
pub fn dd_report(config: &ClassifierConfig, trained: &TrainedClassifier, seed: u64) -> Result<DdReport> {
    let (acc, acc_real, acc_gen) = accuracy(&trained.model, &trained.dataset.test)?;
    let dd = super::dd_from_accuracy(acc)?.value;
    Ok(DdReport {
        accuracy: acc,
        error: 1.0 - acc,
        dd,
        accuracy_real: acc_real,
        accuracy_generated: acc_gen,
        dev_accuracy: trained.log.best_dev_accuracy,
        test_size: trained.dataset.test.len(),
        epochs_run: trained.log.epochs.len(),
        best_epoch: trained.log.best_epoch,
        seed,
        config: config.clone(),
        log: trained.log.clone(),
    })
}

/// Trains a classifier and turns its test accuracy into a DD estimate.
pub fn estimate_dd(config: &ClassifierConfig, real: &Corpus, generated: &Corpus, seed: u64) -> Result<DdReport> {
    dd_report(config, &train(config, real, generated, seed)?, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{CorpusLabel, Vocab};
    use crate::fixtures;
    use crate::synthetic::{sample, MarkovModel};
    use std::sync::Arc;

    fn quick_config() -> ClassifierConfig {
        ClassifierConfig {
            embed_dim: 8,
            layers: vec![(2, 16)],
            learning_rate: 1e-2,
            batch_size: 64,
            max_epochs: 5,
            patience: 3,
            max_len: 6,
            ..Default::default()
        }
    }

    #[test]
    fn dataset_is_balanced_and_disjoint() {
        let m = fixtures::chain_reference();
        let v = fixtures::chain_vocab();
        let real = sample(&m, Arc::clone(&v), 300, 1, CorpusLabel::Real).unwrap();
        let gen = sample(&m, v, 200, 2, CorpusLabel::Generated).unwrap();
        let ds = prepare_dataset(&quick_config(), &real, &gen, 0).unwrap();
        for part in [&ds.train, &ds.dev, &ds.test] {
            let r = part.iter().filter(|e| e.real).count();
            assert_eq!(r, part.len() - r);
        }
        assert_eq!(ds.train.len() + ds.dev.len() + ds.test.len(), 400);
        assert_eq!(ds.test.len(), 40);
    }

    #[test]
    fn disjoint_vocabularies_are_separated() {
        // real sentences use only w0..w3, generated ones only w4..w7
        let v = Arc::new(Vocab::synthetic(8));
        let mk = |offset: usize, seed: u64| {
            let mut r = crate::rng::rng_from_seed(seed);
            use rand::Rng as _;
            let toks: Vec<Vec<String>> = (0..400)
                .map(|_| {
                    (0..r.gen_range(1..5))
                        .map(|_| format!("w{}", offset + r.gen_range(0..4)))
                        .collect()
                })
                .collect();
            toks
        };
        let real = Corpus::encode(&mk(0, 1), Arc::clone(&v), CorpusLabel::Real);
        let gen = Corpus::encode(&mk(4, 2), v, CorpusLabel::Generated);
        let r = estimate_dd(&quick_config(), &real, &gen, 5).unwrap();
        assert!(r.accuracy > 0.99, "{r:?}");
        assert!(r.epochs_run <= 5);
    }

    #[test]
    fn training_is_deterministic() {
        let m = fixtures::chain_reference();
        let n = MarkovModel::uniform(1, fixtures::CHAIN_VOCAB_LEN, fixtures::CHAIN_MAX_LEN).unwrap();
        let v = fixtures::chain_vocab();
        let real = sample(&m, Arc::clone(&v), 300, 1, CorpusLabel::Real).unwrap();
        let gen = sample(&n, v, 300, 2, CorpusLabel::Generated).unwrap();
        let a = train(&quick_config(), &real, &gen, 9).unwrap();
        let b = train(&quick_config(), &real, &gen, 9).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.log, b.log);
        let c = train(&quick_config(), &real, &gen, 10).unwrap();
        assert_ne!(a.model, c.model);
    }

    #[test]
    fn rejects_mismatched_inputs() {
        let m = fixtures::chain_reference();
        let v = fixtures::chain_vocab();
        let real = sample(&m, Arc::clone(&v), 20, 1, CorpusLabel::Real).unwrap();
        let other = Corpus::new(vec![], v, CorpusLabel::Generated).unwrap();
        assert!(train(&quick_config(), &real, &other, 0).is_err());
        let foreign = sample(&m, Arc::new(Vocab::synthetic(4)), 20, 1, CorpusLabel::Generated).unwrap();
        assert!(train(&quick_config(), &real, &foreign, 0).is_err());
        let too_short = ClassifierConfig {
            max_len: 2,
            ..quick_config()
        };
        let long = sample(&m, fixtures::chain_vocab(), 50, 3, CorpusLabel::Generated).unwrap();
        assert!(train(&too_short, &real.select(&(0..20).collect::<Vec<_>>()), &long, 0).is_err());
    }
}
