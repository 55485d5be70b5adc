use std::sync::Arc;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use log::info;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::config::{ExperimentConfig, FamilySpec, Metric, NoiseSpec, ReferenceSpec};
use super::kendall::{kendall_tau, ScoreRanking};
use super::report::{
    CellResult, GoldOrder, MetricRecord, RankReport, TauEntry, Timestamp, REPORT_FORMAT, REPORT_VERSION,
};
use crate::baselines::{self, fed, EmbeddingModel, GaussianFit, NgramTable, ReferenceSet, SentenceEncoder};
use crate::classifier::{estimate_dd, DdReport};
use crate::corpus::{Corpus, CorpusLabel, Vocab};
use crate::error::{data_err, invalid, Error, Result};
use crate::fixtures;
use crate::oracle::{discrepancy, DdScore};
use crate::rng::derive_seed;
use crate::stats::CompensatedSum;
use crate::synthetic::{
    self, fit_markov, interpolate, load_model, FitConfig, GeneratorSpec, MarkovModel, SequenceDistribution,
};

/// The reference distribution and the vocabulary its samples are written in.
#[derive(Debug, Clone)]
pub struct Reference {
    pub model: GeneratorSpec,
    pub vocab: Arc<Vocab>,
}

impl Reference {
    pub fn build(spec: &ReferenceSpec) -> Result<Self> {
        match spec {
            ReferenceSpec::Chain => Ok(Reference {
                model: GeneratorSpec::from_model(fixtures::chain_reference()),
                vocab: fixtures::chain_vocab(),
            }),
            ReferenceSpec::Model { path } => {
                let (model, vocab) = load_model(path)?;
                model.validate()?;
                let vocab = match vocab {
                    Some(v) => v,
                    None => Vocab::synthetic(model.vocab_len() - crate::corpus::FIRST_WORD as usize),
                };
                if vocab.len() != model.vocab_len() {
                    return Err(data_err!("model vocabulary does not match the model's id range"));
                }
                Ok(Reference {
                    model,
                    vocab: Arc::new(vocab),
                })
            }
            ReferenceSpec::Random {
                order,
                vocab_len,
                max_len,
                sparsity,
                seed,
            } => {
                let m = fixtures::random_markov(*order, *vocab_len, *max_len, *sparsity, *seed)?;
                Ok(Reference {
                    model: GeneratorSpec::from_model(m),
                    vocab: Arc::new(Vocab::synthetic(vocab_len - crate::corpus::FIRST_WORD as usize)),
                })
            }
        }
    }

    pub fn sample(&self, n: usize, seed: u64, label: CorpusLabel) -> Result<Corpus> {
        synthetic::sample(&self.model, Arc::clone(&self.vocab), n, seed, label)
    }
}

/// Builds the generators of one family, in declaration order.
pub fn build_family(family: &FamilySpec, reference: &Reference, seed: u64) -> Result<Vec<GeneratorSpec>> {
    let base = &reference.model.base;
    match family {
        FamilySpec::LambdaLadder { lambdas, noise, .. } => {
            let noise = match noise {
                NoiseSpec::Uniform => MarkovModel::uniform(base.order(), base.vocab_len(), base.max_len())?,
                NoiseSpec::Model { path } => load_model(path)?.0.base,
            };
            lambdas.iter().map(|&l| interpolate(base, &noise, l)).collect()
        }
        FamilySpec::FractionLadder {
            name,
            fractions,
            pool_size,
            alpha,
            order,
        } => {
            let pool = reference.sample(*pool_size, derive_seed(seed, "pool", &[]), CorpusLabel::Real)?;
            let fit = FitConfig {
                order: order.unwrap_or(base.order()),
                alpha: *alpha,
                max_len: base.max_len(),
            };
            fractions
                .iter()
                .map(|&f| {
                    let n = (f * *pool_size as f64).floor() as usize;
                    let m = fit_markov(&pool.slice(0..n), &fit)?;
                    info!("{name}: fit on {n} of {pool_size} pooled sentences");
                    GeneratorSpec::from_model(m).with_training_fraction(f)
                })
                .collect()
        }
    }
}

fn record(name: Metric, value: f64, params: serde_json::Value, seed: Option<u64>, cap: Option<usize>) -> MetricRecord {
    let params = match params {
        serde_json::Value::Object(m) => m,
        _ => serde_json::Map::new(),
    };
    MetricRecord {
        name,
        value,
        params,
        seed,
        cap,
    }
}

/// Real-data side of every metric, computed once and shared by all cells.
pub struct Evaluator {
    config: ExperimentConfig,
    reference: Option<Reference>,
    real: Corpus,
    lm_train: Corpus,
    real_test: Corpus,
    real_lm: Option<NgramTable>,
    embedding: Option<EmbeddingModel>,
    real_fit: Option<GaussianFit>,
}

impl Evaluator {
    pub fn new(config: &ExperimentConfig, reference: &Reference) -> Result<Self> {
        config.validate()?;
        let real = reference.sample(
            config.samples.real,
            derive_seed(config.seed, "real", &[]),
            CorpusLabel::Real,
        )?;
        Self::build(config, Some(reference.clone()), real)
    }

    /// Evaluator over a fixed real corpus with no reference model; it can
    /// [`score`](Self::score) corpora but not sample cells.
    pub fn from_corpus(config: &ExperimentConfig, real: Corpus) -> Result<Self> {
        config.validate_scoring()?;
        if real.len() < 2 {
            return Err(data_err!("the real corpus needs at least two sentences"));
        }
        Self::build(config, None, real)
    }

    fn build(config: &ExperimentConfig, reference: Option<Reference>, real: Corpus) -> Result<Self> {
        let n_train = ((real.len() as f64) * config.samples.lm_train_fraction).floor() as usize;
        let n_train = n_train.clamp(1, real.len() - 1);
        let lm_train = real.slice(0..n_train);
        let real_test = real.slice(n_train..real.len());
        let wants = |m| config.metrics.contains(&m);
        let real_lm = if wants(Metric::Lm) {
            Some(NgramTable::train(&lm_train, config.baselines.kn)?)
        } else {
            None
        };
        let (embedding, real_fit) = if wants(Metric::Fed) {
            let e = EmbeddingModel::new(
                real.vocab().len(),
                config.baselines.embedding.dim,
                config.baselines.embedding.seed,
            )?;
            let fit = GaussianFit::fit(&fed::embed_corpus(&real, &e))?;
            (Some(e), Some(fit))
        } else {
            (None, None)
        };
        Ok(Evaluator {
            config: config.clone(),
            reference,
            real,
            lm_train,
            real_test,
            real_lm,
            embedding,
            real_fit,
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn reference(&self) -> Option<&Reference> {
        self.reference.as_ref()
    }

    pub fn real(&self) -> &Corpus {
        &self.real
    }

    /// Samples `generator` at `temperature` and scores it with every
    /// configured metric. All randomness derives from `cell_seed`, which does
    /// not depend on the temperature.
    pub fn evaluate_cell(
        &self,
        generator: &GeneratorSpec,
        temperature: f64,
        cell_seed: u64,
    ) -> Result<(DdScore, Vec<MetricRecord>, Option<DdReport>)> {
        let reference = self
            .reference
            .as_ref()
            .ok_or_else(|| invalid!("evaluator has no reference model to sample cells against"))?;
        let g = generator.with_temperature(temperature)?;
        let oc = self.config.oracle;
        let oracle = discrepancy(
            &reference.model,
            &g,
            oc.budget,
            oc.mc_samples,
            derive_seed(self.config.seed, "oracle", &[]),
        )?;
        let generated = synthetic::sample(
            &g,
            Arc::clone(&reference.vocab),
            self.config.samples.generated,
            derive_seed(cell_seed, "generate", &[]),
            CorpusLabel::Generated,
        )?;
        let (records, report) = self.score(&generated, cell_seed)?;
        Ok((oracle, records, report))
    }

    /// Scores an already generated corpus.
    pub fn score(&self, generated: &Corpus, cell_seed: u64) -> Result<(Vec<MetricRecord>, Option<DdReport>)> {
        if !generated.same_vocab(&self.real) {
            return Err(data_err!("generated corpus uses a different vocabulary"));
        }
        let b = &self.config.baselines;
        let mut out = Vec::with_capacity(self.config.metrics.len());
        let mut dd_report = None;
        for &m in &self.config.metrics {
            let rec = match m {
                Metric::Dd => {
                    let seed = derive_seed(cell_seed, "dd", &[]);
                    let r = estimate_dd(&self.config.classifier, &self.real, generated, seed)?;
                    let rec = record(
                        m,
                        r.dd,
                        json!({
                            "accuracy": r.accuracy,
                            "dev_accuracy": r.dev_accuracy,
                            "test_size": r.test_size,
                            "epochs_run": r.epochs_run,
                            "best_epoch": r.best_epoch,
                        }),
                        Some(seed),
                        None,
                    );
                    dd_report = Some(r);
                    rec
                }
                Metric::Bleu => {
                    let seed = derive_seed(cell_seed, "bleu", &[]);
                    let cap = b.bleu_eval_cap;
                    let mut idx: Vec<usize> = (0..generated.len()).collect();
                    if cap > 0 && idx.len() > cap {
                        idx.shuffle(&mut crate::rng::rng_from_seed(seed));
                        idx.truncate(cap);
                        idx.sort_unstable();
                    }
                    let refs = ReferenceSet::new(self.lm_train.sequences(), b.bleu_max_n)?;
                    let sum: CompensatedSum = idx
                        .iter()
                        .map(|&i| refs.sentence_bleu(generated.sequences()[i].words()))
                        .collect();
                    let value = sum.value() / idx.len() as f64;
                    record(
                        m,
                        value,
                        json!({ "max_n": b.bleu_max_n, "references": self.lm_train.len() }),
                        Some(seed),
                        Some(idx.len()),
                    )
                }
                Metric::SelfBleu => {
                    let seed = derive_seed(cell_seed, "selfbleu", &[]);
                    let s = baselines::self_bleu(generated, b.bleu_max_n, b.self_bleu_cap, seed)?;
                    record(
                        m,
                        s.value,
                        json!({ "max_n": b.bleu_max_n, "evaluated": s.evaluated }),
                        Some(seed),
                        Some(s.cap),
                    )
                }
                Metric::Lm => {
                    let lm = self.real_lm.as_ref().expect("built when lm is selected");
                    let v = lm.score(generated)?;
                    record(
                        m,
                        v,
                        json!({ "order": b.kn.order, "discount": b.kn.discount }),
                        None,
                        None,
                    )
                }
                Metric::Rlm => {
                    let v = NgramTable::train(generated, b.kn)?.score(&self.real_test)?;
                    record(
                        m,
                        v,
                        json!({ "order": b.kn.order, "discount": b.kn.discount, "real_test": self.real_test.len() }),
                        None,
                        None,
                    )
                }
                Metric::Fed => {
                    let emb = self.embedding.as_ref().expect("built when fed is selected");
                    if generated.len() < 2 {
                        return Err(data_err!("FED needs at least two generated sentences"));
                    }
                    let fit = GaussianFit::fit(&fed::embed_corpus(generated, emb))?;
                    let v =
                        baselines::frechet_distance(self.real_fit.as_ref().expect("built with the embedding"), &fit)?;
                    record(m, v, json!({ "dim": emb.dim() }), Some(emb.seed()), None)
                }
            };
            out.push(rec);
        }
        Ok((out, dd_report))
    }
}

pub fn cell_seed(seed: u64, family: usize, generator: usize) -> u64 {
    derive_seed(seed, "cell", &[family as u64, generator as u64])
}

struct CellJob<'a> {
    family: usize,
    generator: usize,
    label: String,
    family_name: &'a str,
    spec: &'a GeneratorSpec,
    temperature: f64,
}

/// Runs the experiment; on failure returns whatever finished, flagged as
/// partial, together with the error.
pub fn run_experiment_with_partial(config: &ExperimentConfig) -> (RankReport, Option<Error>) {
    let started = Instant::now();
    let started_unix_secs = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let mut report = RankReport {
        format: REPORT_FORMAT.into(),
        version: REPORT_VERSION,
        config_echo: config.clone(),
        per_cell_metrics: Vec::new(),
        gold_order: Vec::new(),
        tau_table: Vec::new(),
        logs: Vec::new(),
        partial: false,
        error: None,
        timestamp: Timestamp::zero(),
    };
    let err = run_into(config, &mut report).err();
    if let Some(e) = &err {
        report.partial = true;
        report.error = Some(e.to_string());
        report.logs.push(format!("aborted: {e}"));
    }
    report.timestamp = Timestamp {
        started_unix_secs,
        elapsed_secs: started.elapsed().as_secs_f64(),
    };
    (report, err)
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<RankReport> {
    match run_experiment_with_partial(config) {
        (report, None) => Ok(report),
        (_, Some(e)) => Err(e),
    }
}

fn run_into(config: &ExperimentConfig, report: &mut RankReport) -> Result<()> {
    config.validate()?;
    let reference = Reference::build(&config.reference)?;
    let mut families = Vec::new();
    for (fi, f) in config.families.iter().enumerate() {
        let gens = build_family(f, &reference, derive_seed(config.seed, "family", &[fi as u64]))?;
        report
            .logs
            .push(format!("family {}: {} generators", f.name(), gens.len()));
        families.push(gens);
    }
    let evaluator = Evaluator::new(config, &reference)?;
    report.logs.push(format!(
        "real sample: {} sentences ({} LM-train, {} LM-test)",
        evaluator.real.len(),
        evaluator.lm_train.len(),
        evaluator.real_test.len()
    ));

    let mut jobs = Vec::new();
    for &t in &config.temperatures {
        for (fi, f) in config.families.iter().enumerate() {
            for (gi, (label, spec)) in f.labels().into_iter().zip(&families[fi]).enumerate() {
                jobs.push(CellJob {
                    family: fi,
                    generator: gi,
                    label,
                    family_name: f.name(),
                    spec,
                    temperature: t,
                });
            }
        }
    }
    let results: Vec<Result<CellResult>> = jobs
        .par_iter()
        .map(|j| {
            let seed = cell_seed(config.seed, j.family, j.generator);
            let (oracle, metrics, classifier) = evaluator.evaluate_cell(j.spec, j.temperature, seed)?;
            info!(
                "{}/{} T={}: oracle {:.4}",
                j.family_name, j.label, j.temperature, oracle.value
            );
            Ok(CellResult {
                family: j.family_name.to_string(),
                generator: j.label.clone(),
                family_index: j.family,
                generator_index: j.generator,
                temperature: j.temperature,
                seed,
                oracle,
                metrics,
                classifier,
            })
        })
        .collect();
    let mut first_err = None;
    for r in results {
        match r {
            Ok(c) => {
                let summary: Vec<String> = c.metrics.iter().map(|m| format!("{}={:.6}", m.name, m.value)).collect();
                report.logs.push(format!(
                    "{}/{} T={}: oracle={:.6} {}",
                    c.family,
                    c.generator,
                    c.temperature,
                    c.oracle.value,
                    summary.join(" ")
                ));
                report.per_cell_metrics.push(c);
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    if let Some(e) = first_err {
        return Err(e);
    }
    rank_cells(config, report);
    Ok(())
}

/// Gold orders and Kendall's tau for every family (and the pooled set when
/// there is more than one family) at every temperature.
fn rank_cells(config: &ExperimentConfig, report: &mut RankReport) {
    for &t in &config.temperatures {
        let mut groups: Vec<(String, Vec<&CellResult>, Option<&FamilySpec>)> = config
            .families
            .iter()
            .enumerate()
            .map(|(fi, f)| {
                let cells = report
                    .per_cell_metrics
                    .iter()
                    .filter(|c| c.temperature == t && c.family_index == fi)
                    .collect();
                (f.name().to_string(), cells, Some(f))
            })
            .collect();
        if config.families.len() > 1 {
            let all = report.per_cell_metrics.iter().filter(|c| c.temperature == t).collect();
            groups.push(("pooled".into(), all, None));
        }
        let mut gold_out = Vec::new();
        let mut tau_out = Vec::new();
        let mut logs = Vec::new();
        for (group, cells, family) in groups {
            if cells.len() < 2 {
                continue;
            }
            let labels: Vec<String> = cells
                .iter()
                .map(|c| {
                    if family.is_some() {
                        c.generator.clone()
                    } else {
                        format!("{}/{}", c.family, c.generator)
                    }
                })
                .collect();
            let oracle: Vec<f64> = cells.iter().map(|c| c.oracle.value).collect();
            let gold = ScoreRanking::new(&oracle, false);
            let matches_construction = family.map(|f| construction_order(f) == gold.order);
            if matches_construction == Some(false) {
                logs.push(format!(
                    "{group} T={t}: oracle order differs from the construction order"
                ));
            }
            gold_out.push(GoldOrder {
                group: group.clone(),
                temperature: t,
                order: gold.order.iter().map(|&i| labels[i].clone()).collect(),
                scores: oracle,
                degenerate: gold.all_tied(),
                matches_construction,
            });
            for &m in &config.metrics {
                let values: Vec<f64> = match cells.iter().map(|c| c.metric(m)).collect::<Option<Vec<f64>>>() {
                    Some(v) => v,
                    None => continue,
                };
                let r = ScoreRanking::new(&values, m.higher_is_better());
                let (tau, note) = if gold.all_tied() {
                    (None, Some("gold order is fully tied; tau undefined".to_string()))
                } else if r.all_tied() {
                    (
                        None,
                        Some("metric assigns every generator the same score; tau undefined".to_string()),
                    )
                } else {
                    let mut note = None;
                    if r.has_ties() {
                        note = Some("ties broken by declaration order".to_string());
                    }
                    if gold.has_ties() {
                        note = Some("gold order has ties, broken by declaration order".to_string());
                    }
                    (kendall_tau(&r.order, &gold.order).ok(), note)
                };
                if let Some(x) = tau {
                    logs.push(format!("{group} T={t}: tau[{m}] = {x:.3}"));
                }
                tau_out.push(TauEntry {
                    group: group.clone(),
                    temperature: t,
                    metric: m,
                    tau,
                    ranking: r.order.iter().map(|&i| labels[i].clone()).collect(),
                    ties: r
                        .tied
                        .iter()
                        .map(|g| g.iter().map(|&i| labels[i].clone()).collect())
                        .collect(),
                    note,
                });
            }
        }
        for group in tau_out
            .iter()
            .map(|e| e.group.clone())
            .collect::<std::collections::BTreeSet<_>>()
        {
            let dd = tau_out
                .iter()
                .find(|e| e.group == group && e.metric == Metric::Dd)
                .and_then(|e| e.tau);
            if let Some(dd) = dd {
                let beaten: Vec<String> = tau_out
                    .iter()
                    .filter(|e| e.group == group && e.metric != Metric::Dd)
                    .filter_map(|e| e.tau.filter(|&x| x > dd).map(|_| e.metric.to_string()))
                    .collect();
                if !beaten.is_empty() {
                    logs.push(format!(
                        "{group} T={t}: expected outcome not met, tau[dd] below {}",
                        beaten.join(", ")
                    ));
                }
            }
        }
        report.gold_order.extend(gold_out);
        report.tau_table.extend(tau_out);
        report.logs.extend(logs);
    }
}

/// The order a family is built to have, best first: ascending λ, or
/// descending training fraction.
fn construction_order(f: &FamilySpec) -> Vec<usize> {
    let (keys, higher_is_better) = match f {
        FamilySpec::LambdaLadder { lambdas, .. } => (lambdas.clone(), false),
        FamilySpec::FractionLadder { fractions, .. } => (fractions.clone(), true),
    };
    ScoreRanking::new(&keys, higher_is_better).order
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub temperature: f64,
    pub metric: Metric,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub generator: String,
    pub seed: u64,
    pub cells: Vec<CellResult>,
}

impl SweepTable {
    pub fn rows(&self) -> Vec<SweepRow> {
        self.cells
            .iter()
            .flat_map(|c| {
                c.metrics.iter().map(move |m| SweepRow {
                    temperature: c.temperature,
                    metric: m.name,
                    value: m.value,
                })
            })
            .collect()
    }

    /// `(T, value)` pairs for one metric, in sweep order.
    pub fn series(&self, metric: Metric) -> Vec<(f64, f64)> {
        self.cells
            .iter()
            .filter_map(|c| c.metric(metric).map(|v| (c.temperature, v)))
            .collect()
    }

    pub fn oracle_series(&self) -> Vec<(f64, f64)> {
        self.cells.iter().map(|c| (c.temperature, c.oracle.value)).collect()
    }
}

/// Re-samples `generator` at each temperature and scores every configured
/// metric. Every temperature uses the same `seed`, so the `T = 1` cell is
/// identical to an untempered run with that seed.
pub fn temperature_sweep(
    evaluator: &Evaluator,
    generator: &GeneratorSpec,
    label: &str,
    temperatures: &[f64],
    seed: u64,
) -> Result<SweepTable> {
    if temperatures.is_empty() {
        return Err(invalid!("at least one temperature is required"));
    }
    let cells = temperatures
        .par_iter()
        .map(|&t| {
            let (oracle, metrics, classifier) = evaluator.evaluate_cell(generator, t, seed)?;
            Ok(CellResult {
                family: "sweep".into(),
                generator: label.to_string(),
                family_index: 0,
                generator_index: 0,
                temperature: t,
                seed,
                oracle,
                metrics,
                classifier,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepTable {
        generator: label.to_string(),
        seed,
        cells,
    })
}
