use std::io::Write as _;
use std::path::Path;
use std::sync::Arc;

use log::{info, warn};
use serde_json::{json, Value};

use ddeval_core::classifier::{dd_report, save_checkpoint, train};
use ddeval_core::corpus::{
    build_vocab, read_corpus_file, OverlengthPolicy, TokenizedText, TokenizerConfig, FIRST_WORD,
};
use ddeval_core::harness::{
    build_family, cell_seed, run_experiment_with_partial, temperature_sweep, BaselineConfig, Evaluator, OracleConfig,
    Reference, ReferenceSpec, SampleSizes, CONFIG_VERSION, DEFAULT_TEMPERATURES,
};
use ddeval_core::oracle::discrepancy;
use ddeval_core::rng::derive_seed;
use ddeval_core::synthetic::{
    self, fit_markov, load_model, save_model, FitConfig, GeneratorSpec, SequenceDistribution as _,
};
use ddeval_core::{ClassifierConfig, Corpus, CorpusLabel, Error, ExperimentConfig, Metric, Result, Vocab};

use crate::{ClassifierFlags, Cli, Command, GlobalArgs, TextFlags};

pub fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    match cli.command {
        Command::Fit {
            corpus,
            order,
            alpha,
            text,
        } => fit(g, &corpus, order, alpha, &text),
        Command::Sample {
            model,
            count,
            temperature,
        } => sample(g, &model, count, temperature),
        Command::Oracle {
            model_a,
            model_b,
            budget,
            mc_samples,
        } => oracle(g, &model_a, &model_b, budget, mc_samples),
        Command::TrainClf {
            real,
            generated,
            checkpoint,
            classifier,
            text,
        } => train_clf(g, &real, &generated, checkpoint.as_deref(), &classifier, &text),
        Command::Eval {
            real,
            generated,
            classifier,
            text,
        } => eval(g, &real, &generated, &classifier, &text),
        Command::Rank {
            csv,
            real_samples,
            generated_samples,
            classifier,
        } => {
            let mut config = experiment_config(g, true)?;
            apply_samples(&mut config, real_samples, generated_samples);
            classifier.apply(&mut config.classifier);
            rank(g, &config, csv.as_deref())
        }
        Command::Sweep {
            family,
            generator,
            temperatures,
            csv,
            real_samples,
            generated_samples,
            classifier,
        } => {
            let mut config = experiment_config(g, true)?;
            apply_samples(&mut config, real_samples, generated_samples);
            classifier.apply(&mut config.classifier);
            if let Some(t) = temperatures {
                config.temperatures = t;
            }
            sweep(g, &config, family.as_deref(), generator, csv.as_deref())
        }
    }
}

impl ClassifierFlags {
    fn apply(&self, c: &mut ClassifierConfig) {
        if let Some(x) = self.embed_dim {
            c.embed_dim = x;
        }
        if let Some(x) = self.dropout {
            c.dropout = x;
        }
        if let Some(x) = self.learning_rate {
            c.learning_rate = x;
        }
        if let Some(x) = self.batch_size {
            c.batch_size = x;
        }
        if let Some(x) = self.max_epochs {
            c.max_epochs = x;
        }
        if let Some(x) = self.patience {
            c.patience = x;
        }
        if let Some(x) = self.max_len {
            c.max_len = x;
        }
    }
}

impl TextFlags {
    fn tokenizer(&self) -> TokenizerConfig {
        TokenizerConfig {
            max_tokens: self.max_tokens,
            lowercase: self.lowercase,
            overlength: OverlengthPolicy::Skip,
        }
    }

    fn echo(&self) -> Value {
        json!({ "max_tokens": self.max_tokens, "lowercase": self.lowercase, "min_count": self.min_count })
    }
}

fn apply_samples(config: &mut ExperimentConfig, real: Option<usize>, generated: Option<usize>) {
    if let Some(n) = real {
        config.samples.real = n;
    }
    if let Some(n) = generated {
        config.samples.generated = n;
    }
}

/// The config file (if any) with `--seed` and `--metrics` applied.
fn experiment_config(g: &GlobalArgs, required: bool) -> Result<ExperimentConfig> {
    let mut c = match &g.config {
        Some(p) => ExperimentConfig::load(p)?,
        None if required => return Err(Error::InvalidArgument("--config is required for this command".into())),
        None => ExperimentConfig {
            version: CONFIG_VERSION,
            name: "cli".into(),
            seed: 0,
            reference: ReferenceSpec::Chain,
            families: Vec::new(),
            temperatures: DEFAULT_TEMPERATURES.to_vec(),
            metrics: Metric::ALL.to_vec(),
            samples: SampleSizes::default(),
            classifier: ClassifierConfig::default(),
            baselines: BaselineConfig::default(),
            oracle: OracleConfig::default(),
        },
    };
    if let Some(s) = g.seed {
        c.seed = s;
    }
    if let Some(m) = &g.metrics {
        c.metrics = m.clone();
    }
    Ok(c)
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|source| Error::Io {
        context: format!("writing {}", path.display()),
        source,
    })
}

fn emit(g: &GlobalArgs, value: &Value) -> Result<()> {
    let text = pretty(value)? + "\n";
    match &g.out {
        Some(p) => write_bytes(p, text.as_bytes()),
        None => std::io::stdout()
            .lock()
            .write_all(text.as_bytes())
            .map_err(|source| Error::Io {
                context: "writing stdout".into(),
                source,
            }),
    }
}

fn pretty(value: &Value) -> Result<String> {
    serde_json::to_string_pretty(value).map_err(|e| Error::Data(e.to_string()))
}

fn to_value<T: serde::Serialize>(x: &T) -> Result<Value> {
    serde_json::to_value(x).map_err(|e| Error::Data(e.to_string()))
}

fn read_text(path: &Path, text: &TextFlags) -> Result<TokenizedText> {
    let t = read_corpus_file(path, &text.tokenizer())?;
    if t.skipped_empty + t.skipped_overlength > 0 {
        warn!(
            "{}: skipped {} empty and {} over-length lines",
            path.display(),
            t.skipped_empty,
            t.skipped_overlength
        );
    }
    if t.sentences.is_empty() {
        return Err(Error::Data(format!("{}: no usable sentences", path.display())));
    }
    Ok(t)
}

/// Reads both corpora; the vocabulary comes from the real side.
fn read_pair(real: &Path, generated: &Path, text: &TextFlags) -> Result<(Corpus, Corpus)> {
    let r = read_text(real, text)?;
    let q = read_text(generated, text)?;
    let vocab = Arc::new(build_vocab(&r.sentences, text.min_count)?);
    Ok((
        Corpus::encode(&r.sentences, Arc::clone(&vocab), CorpusLabel::Real),
        Corpus::encode(&q.sentences, vocab, CorpusLabel::Generated),
    ))
}

fn fit(g: &GlobalArgs, corpus: &Path, order: usize, alpha: f64, text: &TextFlags) -> Result<()> {
    let out = g
        .out
        .as_deref()
        .ok_or_else(|| Error::InvalidArgument("fit needs --out for the model file".into()))?;
    let t = read_text(corpus, text)?;
    let vocab = Arc::new(build_vocab(&t.sentences, text.min_count)?);
    let c = Corpus::encode(&t.sentences, Arc::clone(&vocab), CorpusLabel::Real);
    let cfg = FitConfig {
        order,
        alpha,
        max_len: text.max_tokens + 1,
    };
    let model = fit_markov(&c, &cfg)?;
    save_model(out, &GeneratorSpec::from_model(model), Some(&vocab))?;
    info!("fit {} sentences into {}", c.len(), out.display());
    let summary = json!({
        "command": "fit",
        "config": { "corpus": corpus, "fit": to_value(&cfg)?, "text": text.echo() },
        "sentences": c.len(),
        "vocab_len": vocab.len(),
        "model": out,
    });
    println!("{}", pretty(&summary)?);
    Ok(())
}

fn model_vocab(spec: &GeneratorSpec, vocab: Option<Vocab>) -> Vocab {
    vocab.unwrap_or_else(|| Vocab::synthetic(spec.vocab_len() - FIRST_WORD as usize))
}

fn sample(g: &GlobalArgs, model: &Path, count: usize, temperature: f64) -> Result<()> {
    let out = g
        .out
        .as_deref()
        .ok_or_else(|| Error::InvalidArgument("sample needs --out for the corpus file".into()))?;
    let (spec, vocab) = load_model(model)?;
    let vocab = Arc::new(model_vocab(&spec, vocab));
    let seed = g.seed.unwrap_or(0);
    let tempered = spec.with_temperature(temperature)?;
    let corpus = synthetic::sample(&tempered, vocab, count, seed, CorpusLabel::Generated)?;
    corpus.write_text(out)?;
    let summary = json!({
        "command": "sample",
        "config": { "model": model, "count": count, "temperature": temperature, "seed": seed },
        "corpus": out,
        "truncated": corpus.truncated_count(),
    });
    println!("{}", pretty(&summary)?);
    Ok(())
}

fn oracle(g: &GlobalArgs, a: &Path, b: &Path, budget: Option<u64>, mc_samples: Option<usize>) -> Result<()> {
    let mut oc = match &g.config {
        Some(p) => ExperimentConfig::load(p)?.oracle,
        None => OracleConfig::default(),
    };
    if let Some(x) = budget {
        oc.budget = x;
    }
    if let Some(x) = mc_samples {
        oc.mc_samples = x;
    }
    let seed = g.seed.unwrap_or(0);
    let (pa, _) = load_model(a)?;
    let (pb, _) = load_model(b)?;
    let score = discrepancy(&pa, &pb, oc.budget, oc.mc_samples, seed)?;
    emit(
        g,
        &json!({
            "command": "oracle",
            "config": { "model_a": a, "model_b": b, "oracle": to_value(&oc)?, "seed": seed },
            "dd": score.value,
            "score": to_value(&score)?,
        }),
    )
}

fn train_clf(
    g: &GlobalArgs,
    real: &Path,
    generated: &Path,
    checkpoint: Option<&Path>,
    flags: &ClassifierFlags,
    text: &TextFlags,
) -> Result<()> {
    let base = experiment_config(g, false)?;
    let mut cfg = base.classifier;
    flags.apply(&mut cfg);
    let (r, q) = read_pair(real, generated, text)?;
    let trained = train(&cfg, &r, &q, base.seed)?;
    let report = dd_report(&cfg, &trained, base.seed)?;
    if let Some(p) = checkpoint {
        save_checkpoint(&trained.model, p)?;
    }
    emit(
        g,
        &json!({
            "command": "train-clf",
            "config": {
                "real": real,
                "generated": generated,
                "seed": base.seed,
                "classifier": to_value(&cfg)?,
                "text": text.echo(),
            },
            "report": to_value(&report)?,
        }),
    )
}

fn eval(g: &GlobalArgs, real: &Path, generated: &Path, flags: &ClassifierFlags, text: &TextFlags) -> Result<()> {
    let mut config = experiment_config(g, false)?;
    flags.apply(&mut config.classifier);
    let (r, q) = read_pair(real, generated, text)?;
    let ev = Evaluator::from_corpus(&config, r)?;
    let (records, classifier) = ev.score(&q, config.seed)?;
    emit(
        g,
        &json!({
            "command": "eval",
            "config": {
                "real": real,
                "generated": generated,
                "seed": config.seed,
                "metrics": to_value(&config.metrics)?,
                "lm_train_fraction": config.samples.lm_train_fraction,
                "classifier": to_value(&config.classifier)?,
                "baselines": to_value(&config.baselines)?,
                "text": text.echo(),
            },
            "metrics": to_value(&records)?,
            "classifier": to_value(&classifier)?,
        }),
    )
}

fn rank(g: &GlobalArgs, config: &ExperimentConfig, csv: Option<&Path>) -> Result<()> {
    let (report, err) = run_experiment_with_partial(config);
    emit(g, &to_value(&report)?)?;
    if let Some(p) = csv {
        write_bytes(p, report.to_csv().as_bytes())?;
    }
    match err {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn sweep(
    g: &GlobalArgs,
    config: &ExperimentConfig,
    family: Option<&str>,
    generator: usize,
    csv: Option<&Path>,
) -> Result<()> {
    config.validate()?;
    let fi = match family {
        Some(name) => config
            .families
            .iter()
            .position(|f| f.name() == name)
            .ok_or_else(|| Error::InvalidArgument(format!("no family named '{name}'")))?,
        None => 0,
    };
    let f = &config.families[fi];
    let reference = Reference::build(&config.reference)?;
    let gens = build_family(f, &reference, derive_seed(config.seed, "family", &[fi as u64]))?;
    let spec = gens
        .get(generator)
        .ok_or_else(|| Error::InvalidArgument(format!("family '{}' has {} generators", f.name(), gens.len())))?;
    let label = format!("{}/{}", f.name(), f.labels()[generator]);
    let ev = Evaluator::new(config, &reference)?;
    let table = temperature_sweep(
        &ev,
        spec,
        &label,
        &config.temperatures,
        cell_seed(config.seed, fi, generator),
    )?;
    if let Some(p) = csv {
        write_bytes(p, ddeval_core::harness::cells_to_csv(&table.cells).as_bytes())?;
    }
    emit(
        g,
        &json!({
            "command": "sweep",
            "config": to_value(config)?,
            "rows": to_value(&table.rows())?,
            "table": to_value(&table)?,
        }),
    )
}
