//! Experiment configuration (TOML).
//!
//! ```toml
//! version = 1
//! name = "desk"
//! seed = 7
//! temperatures = [1.0]
//! metrics = ["dd", "bleu", "selfbleu", "lm", "rlm", "fed"]
//!
//! [reference]
//! kind = "chain"
//!
//! [samples]
//! real = 6000
//! generated = 6000
//!
//! [[families]]
//! kind = "lambda-ladder"
//! name = "interp"
//! lambdas = [0.05, 0.15, 0.3, 0.5, 0.8]
//!
//! [[families]]
//! kind = "fraction-ladder"
//! name = "volume"
//! pool_size = 400
//! alpha = 0.05
//!
//! [classifier]
//! embed_dim = 16
//! ```
//!
//! Every section except `reference` and `families` has defaults.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baselines::{EmbeddingConfig, KnConfig, DEFAULT_MAX_N, DEFAULT_SELF_BLEU_CAP};
use crate::classifier::ClassifierConfig;
use crate::error::{invalid, Error, Result};
use crate::oracle::{DEFAULT_ENUMERATION_BUDGET, DEFAULT_MC_SAMPLES};

pub const CONFIG_VERSION: u32 = 1;
pub const DEFAULT_TEMPERATURES: [f64; 5] = [0.8, 0.9, 1.0, 1.1, 1.2];
pub const DEFAULT_FRACTIONS: [f64; 5] = [0.2, 0.4, 0.6, 0.8, 1.0];
pub const DEFAULT_SAMPLE_SIZE: usize = 320_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Dd,
    Bleu,
    #[serde(rename = "selfbleu")]
    SelfBleu,
    Lm,
    Rlm,
    Fed,
}

impl Metric {
    pub const ALL: [Metric; 6] = [
        Metric::Dd,
        Metric::Bleu,
        Metric::SelfBleu,
        Metric::Lm,
        Metric::Rlm,
        Metric::Fed,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Dd => "dd",
            Metric::Bleu => "bleu",
            Metric::SelfBleu => "selfbleu",
            Metric::Lm => "lm",
            Metric::Rlm => "rlm",
            Metric::Fed => "fed",
        }
    }

    /// BLEU rewards overlap with the real data; every other metric here is a
    /// distance or a loss.
    pub fn higher_is_better(self) -> bool {
        matches!(self, Metric::Bleu)
    }

    /// Parses a comma-separated list such as `dd,bleu,fed`.
    pub fn parse_list(s: &str) -> Result<Vec<Metric>> {
        let mut out: Vec<Metric> = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let m: Metric = part.parse()?;
            if !out.contains(&m) {
                out.push(m);
            }
        }
        if out.is_empty() {
            return Err(invalid!("no metrics selected"));
        }
        Ok(out)
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s.to_ascii_lowercase())
            .ok_or_else(|| invalid!("unknown metric '{s}' (expected one of dd, bleu, selfbleu, lm, rlm, fed)"))
    }
}

/// The reference ("real") distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ReferenceSpec {
    /// The built-in four-word chain.
    Chain,
    /// A model file written by `save_model`.
    Model { path: PathBuf },
    /// A random dense chain.
    Random {
        order: usize,
        vocab_len: usize,
        max_len: usize,
        #[serde(default)]
        sparsity: f64,
        #[serde(default)]
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum NoiseSpec {
    /// Uniform over all outcomes, at the reference's order.
    #[default]
    Uniform,
    Model {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FamilySpec {
    /// `(1 − λ)·reference + λ·noise` for each λ.
    LambdaLadder {
        name: String,
        lambdas: Vec<f64>,
        #[serde(default)]
        noise: NoiseSpec,
    },
    /// Add-α chains fit to nested prefixes of one pool of reference samples.
    FractionLadder {
        name: String,
        #[serde(default = "default_fractions")]
        fractions: Vec<f64>,
        pool_size: usize,
        alpha: f64,
        /// Defaults to the reference order.
        #[serde(default)]
        order: Option<usize>,
    },
}

fn default_fractions() -> Vec<f64> {
    DEFAULT_FRACTIONS.to_vec()
}

impl FamilySpec {
    pub fn name(&self) -> &str {
        match self {
            FamilySpec::LambdaLadder { name, .. } | FamilySpec::FractionLadder { name, .. } => name,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            FamilySpec::LambdaLadder { lambdas, .. } => lambdas.len(),
            FamilySpec::FractionLadder { fractions, .. } => fractions.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Generator labels in declaration order.
    pub fn labels(&self) -> Vec<String> {
        match self {
            FamilySpec::LambdaLadder { lambdas, .. } => lambdas.iter().map(|l| format!("lambda={l}")).collect(),
            FamilySpec::FractionLadder { fractions, .. } => fractions.iter().map(|f| format!("fraction={f}")).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleSizes {
    pub real: usize,
    pub generated: usize,
    /// Fraction of the real sample used to train the real-data LM and as BLEU
    /// references; the rest is the reverse-LM test set.
    pub lm_train_fraction: f64,
}

impl Default for SampleSizes {
    fn default() -> Self {
        SampleSizes {
            real: DEFAULT_SAMPLE_SIZE,
            generated: DEFAULT_SAMPLE_SIZE,
            lm_train_fraction: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    pub bleu_max_n: usize,
    /// Candidates scored by BLEU (seeded subsample); 0 scores all.
    pub bleu_eval_cap: usize,
    pub self_bleu_cap: usize,
    pub kn: KnConfig,
    pub embedding: EmbeddingConfig,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            bleu_max_n: DEFAULT_MAX_N,
            bleu_eval_cap: DEFAULT_SELF_BLEU_CAP,
            self_bleu_cap: DEFAULT_SELF_BLEU_CAP,
            kn: KnConfig::default(),
            embedding: EmbeddingConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub budget: u64,
    pub mc_samples: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            budget: DEFAULT_ENUMERATION_BUDGET,
            mc_samples: DEFAULT_MC_SAMPLES,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_version")]
    pub version: u32,
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub reference: ReferenceSpec,
    pub families: Vec<FamilySpec>,
    #[serde(default = "default_temperatures")]
    pub temperatures: Vec<f64>,
    #[serde(default = "default_metrics")]
    pub metrics: Vec<Metric>,
    #[serde(default)]
    pub samples: SampleSizes,
    #[serde(default)]
    pub classifier: ClassifierConfig,
    #[serde(default)]
    pub baselines: BaselineConfig,
    #[serde(default)]
    pub oracle: OracleConfig,
}

fn default_version() -> u32 {
    CONFIG_VERSION
}

fn default_name() -> String {
    "experiment".into()
}

fn default_temperatures() -> Vec<f64> {
    DEFAULT_TEMPERATURES.to_vec()
}

fn default_metrics() -> Vec<Metric> {
    Metric::ALL.to_vec()
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let c: ExperimentConfig = toml::from_str(text).map_err(|e| invalid!("bad experiment config: {e}"))?;
        c.validate()?;
        Ok(c)
    }

    /// Reads a config file; relative model paths are resolved against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        let mut c = Self::from_toml(&text)?;
        if let Some(dir) = path.parent() {
            c.resolve_paths(dir);
        }
        Ok(c)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| invalid!("cannot serialise config: {e}"))
    }

    fn resolve_paths(&mut self, dir: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        };
        if let ReferenceSpec::Model { path } = &mut self.reference {
            fix(path);
        }
        for f in &mut self.families {
            if let FamilySpec::LambdaLadder {
                noise: NoiseSpec::Model { path },
                ..
            } = f
            {
                fix(path);
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(invalid!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                self.version
            ));
        }
        if self.families.is_empty() || self.families.iter().all(FamilySpec::is_empty) {
            return Err(invalid!("the experiment needs at least one generator"));
        }
        for (i, f) in self.families.iter().enumerate() {
            if self.families[..i].iter().any(|g| g.name() == f.name()) {
                return Err(invalid!("duplicate family name '{}'", f.name()));
            }
            match f {
                FamilySpec::LambdaLadder { lambdas, .. } => {
                    if let Some(l) = lambdas.iter().find(|l| !(0.0..=1.0).contains(*l)) {
                        return Err(invalid!("interpolation weight {l} is outside [0, 1]"));
                    }
                }
                FamilySpec::FractionLadder {
                    fractions,
                    pool_size,
                    alpha,
                    ..
                } => {
                    if let Some(x) = fractions.iter().find(|x| !(**x > 0.0 && **x <= 1.0)) {
                        return Err(invalid!("training fraction {x} is outside (0, 1]"));
                    }
                    if *pool_size == 0 {
                        return Err(invalid!("pool_size must be positive"));
                    }
                    if fractions.iter().any(|x| (x * *pool_size as f64).floor() < 1.0) {
                        return Err(invalid!("every training fraction must select at least one sentence"));
                    }
                    if !(alpha.is_finite() && *alpha > 0.0) {
                        return Err(invalid!("smoothing constant must be positive"));
                    }
                }
            }
        }
        if self.temperatures.is_empty() {
            return Err(invalid!("at least one temperature is required"));
        }
        if let Some(t) = self.temperatures.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
            return Err(invalid!("temperature must be positive, got {t}"));
        }
        if self.samples.real < 20 || self.samples.generated < 2 {
            return Err(invalid!("sample sizes are too small (need >= 20 real, >= 2 generated)"));
        }
        self.validate_scoring()
    }

    /// The checks that matter when only scoring given corpora: metrics,
    /// the LM split, baselines and classifier.
    pub fn validate_scoring(&self) -> Result<()> {
        if self.metrics.is_empty() {
            return Err(invalid!("at least one metric is required"));
        }
        if !(self.samples.lm_train_fraction > 0.0 && self.samples.lm_train_fraction < 1.0) {
            return Err(invalid!("lm_train_fraction must lie in (0, 1)"));
        }
        if self.baselines.bleu_max_n == 0 {
            return Err(invalid!("BLEU order must be at least 1"));
        }
        self.classifier.validate()
    }

    pub fn generator_count(&self) -> usize {
        self.families.iter().map(FamilySpec::len).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        [reference]
        kind = "chain"

        [[families]]
        kind = "lambda-ladder"
        name = "interp"
        lambdas = [0.1, 0.5]
    "#;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = ExperimentConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(c.temperatures, DEFAULT_TEMPERATURES.to_vec());
        assert_eq!(c.metrics, Metric::ALL.to_vec());
        assert_eq!(c.samples.real, DEFAULT_SAMPLE_SIZE);
        assert_eq!(c.generator_count(), 2);
        assert_eq!(c.families[0].labels(), vec!["lambda=0.1", "lambda=0.5"]);
    }

    #[test]
    fn round_trips_through_toml() {
        let mut c = ExperimentConfig::from_toml(MINIMAL).unwrap();
        c.families.push(FamilySpec::FractionLadder {
            name: "vol".into(),
            fractions: vec![0.5, 1.0],
            pool_size: 100,
            alpha: 0.1,
            order: Some(1),
        });
        let back = ExperimentConfig::from_toml(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn rejects_bad_configs() {
        let bad = [
            MINIMAL.replace("0.5]", "1.5]"),
            MINIMAL.replace("lambdas = [0.1, 0.5]", "lambdas = []"),
            format!("temperatures = [0.0]\n{MINIMAL}"),
            format!("metrics = [\"bogus\"]\n{MINIMAL}"),
            format!("version = 2\n{MINIMAL}"),
            format!("surprise = 1\n{MINIMAL}"),
            MINIMAL.replace("chain", "unknown"),
        ];
        for b in bad {
            assert!(ExperimentConfig::from_toml(&b).is_err(), "{b}");
        }
    }

    #[test]
    fn metric_lists() {
        assert_eq!(Metric::parse_list("dd, fed,dd").unwrap(), vec![Metric::Dd, Metric::Fed]);
        assert_eq!("SELFBLEU".parse::<Metric>().unwrap(), Metric::SelfBleu);
        assert!(Metric::parse_list("").is_err());
        assert!(Metric::parse_list("dd,perplexity").is_err());
        assert!(Metric::Bleu.higher_is_better() && !Metric::Fed.higher_is_better());
    }
}
