//! Tokenization, vocabularies, integer encoding and dataset splits.
//!
//! Sentences are whitespace-tokenized (one sentence per line) and encoded as
//! [`TokenSequence`]s: word ids followed by an explicit [`EOS`] terminator.
//! A sequence without a terminator is one that a generator cut off at its
//! length cap.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use log::warn;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{data_err, invalid, Error, Result};
use crate::rng;

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const BOS: u32 = 2;
pub const EOS: u32 = 3;
/// First id assigned to a corpus word.
pub const FIRST_WORD: u32 = 4;

const RESERVED: [&str; 4] = ["<pad>", "<unk>", "<s>", "</s>"];

/// Longest sentence (in words) accepted by default.
pub const DEFAULT_MAX_TOKENS: usize = 51;

/// Bidirectional token/id map with four reserved ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    token_to_id: HashMap<String, u32>,
    id_to_token: Vec<String>,
}

impl Vocab {
    /// Builds a vocabulary whose words receive ids `FIRST_WORD..` in the given
    /// order. Duplicate or reserved words are rejected.
    pub fn from_words<I, S>(words: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut id_to_token: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        let mut token_to_id = HashMap::new();
        for w in words {
            let w = w.into();
            if w.is_empty() || w.chars().any(char::is_whitespace) {
                return Err(data_err!("vocabulary entry {w:?} is not a single token"));
            }
            if RESERVED.contains(&w.as_str()) {
                return Err(data_err!("vocabulary entry {w:?} collides with a reserved token"));
            }
            let id = id_to_token.len() as u32;
            if token_to_id.insert(w.clone(), id).is_some() {
                return Err(data_err!("duplicate vocabulary entry {w:?}"));
            }
            id_to_token.push(w);
        }
        Ok(Vocab {
            token_to_id,
            id_to_token,
        })
    }

    /// Vocabulary of `n` synthetic words `w0 .. w{n-1}`.
    pub fn synthetic(n: usize) -> Self {
        Self::from_words((0..n).map(|i| format!("w{i}"))).expect("synthetic names are unique")
    }

    /// Total number of ids, reserved ones included.
    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == FIRST_WORD as usize
    }

    pub fn word_count(&self) -> usize {
        self.len() - FIRST_WORD as usize
    }

    pub fn words(&self) -> &[String] {
        &self.id_to_token[FIRST_WORD as usize..]
    }

    /// Id of `token`, or [`UNK`] when it is not in the vocabulary.
    pub fn id(&self, token: &str) -> u32 {
        self.token_to_id.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.id_to_token.get(id as usize).map(String::as_str)
    }

    /// Encodes a tokenized sentence and appends the terminator.
    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> TokenSequence {
        let mut ids: Vec<u32> = tokens.iter().map(|t| self.id(t.as_ref())).collect();
        ids.push(EOS);
        TokenSequence(ids)
    }

    /// Word tokens of a sequence, terminator dropped.
    pub fn decode(&self, seq: &TokenSequence) -> Vec<String> {
        seq.words()
            .iter()
            .map(|&id| self.token(id).unwrap_or(RESERVED[UNK as usize]).to_string())
            .collect()
    }

    /// Vocab file: one word per line, line `i` (0-based) holds id `i + 4`.
    pub fn write_to(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
        let mut w = BufWriter::new(f);
        for word in self.words() {
            writeln!(w, "{word}").map_err(|e| Error::io("writing vocab", e))?;
        }
        w.flush().map_err(|e| Error::io("writing vocab", e))
    }

    pub fn read_from(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
        let mut words = Vec::new();
        for line in BufReader::new(f).lines() {
            words.push(line.map_err(|e| Error::io("reading vocab", e))?);
        }
        Self::from_words(words)
    }
}

/// An encoded sentence: word ids, then [`EOS`] unless the sentence was cut
/// at a generator's length cap.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TokenSequence(Vec<u32>);

impl TokenSequence {
    /// Wraps raw ids. Sequences must be non-empty, free of [`PAD`] and
    /// [`BOS`], and may contain [`EOS`] only as the final id.
    pub fn new(ids: Vec<u32>) -> Result<Self> {
        if ids.is_empty() {
            return Err(data_err!("empty token sequence"));
        }
        let last = ids.len() - 1;
        for (i, &id) in ids.iter().enumerate() {
            if id == PAD || id == BOS || (id == EOS && i != last) {
                return Err(data_err!("reserved id {id} at position {i}"));
            }
        }
        Ok(TokenSequence(ids))
    }

    pub(crate) fn from_ids_unchecked(ids: Vec<u32>) -> Self {
        TokenSequence(ids)
    }

    pub fn ids(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_terminated(&self) -> bool {
        self.0.last() == Some(&EOS)
    }

    /// Ids without the terminator.
    pub fn words(&self) -> &[u32] {
        if self.is_terminated() {
            &self.0[..self.0.len() - 1]
        } else {
            &self.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusLabel {
    Real,
    Generated,
}

/// Sequences sharing one vocabulary.
#[derive(Debug, Clone)]
pub struct Corpus {
    sequences: Vec<TokenSequence>,
    vocab: Arc<Vocab>,
    label: CorpusLabel,
}

impl Corpus {
    pub fn new(sequences: Vec<TokenSequence>, vocab: Arc<Vocab>, label: CorpusLabel) -> Result<Self> {
        let v = vocab.len() as u32;
        for (i, s) in sequences.iter().enumerate() {
            if let Some(&bad) = s.ids().iter().find(|&&id| id >= v) {
                return Err(data_err!("sequence {i} has id {bad} outside a vocabulary of {v}"));
            }
        }
        Ok(Corpus {
            sequences,
            vocab,
            label,
        })
    }

    /// Encodes tokenized sentences under `vocab`.
    pub fn encode<S: AsRef<str>>(sentences: &[Vec<S>], vocab: Arc<Vocab>, label: CorpusLabel) -> Self {
        let sequences = sentences.iter().map(|s| vocab.encode(s)).collect();
        Corpus {
            sequences,
            vocab,
            label,
        }
    }

    pub fn sequences(&self) -> &[TokenSequence] {
        &self.sequences
    }

    pub fn vocab(&self) -> &Arc<Vocab> {
        &self.vocab
    }

    pub fn label(&self) -> CorpusLabel {
        self.label
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    /// Number of sequences that end without a terminator.
    pub fn truncated_count(&self) -> usize {
        self.sequences.iter().filter(|s| !s.is_terminated()).count()
    }

    /// A corpus over the same vocabulary holding the sequences at `indices`.
    pub fn select(&self, indices: &[usize]) -> Corpus {
        Corpus {
            sequences: indices.iter().map(|&i| self.sequences[i].clone()).collect(),
            vocab: Arc::clone(&self.vocab),
            label: self.label,
        }
    }

    pub fn slice(&self, range: std::ops::Range<usize>) -> Corpus {
        Corpus {
            sequences: self.sequences[range].to_vec(),
            vocab: Arc::clone(&self.vocab),
            label: self.label,
        }
    }

    pub fn same_vocab(&self, other: &Corpus) -> bool {
        Arc::ptr_eq(&self.vocab, &other.vocab) || self.vocab == other.vocab
    }

    /// Decoded sentences, space-joined.
    pub fn to_lines(&self) -> Vec<String> {
        self.sequences.iter().map(|s| self.vocab.decode(s).join(" ")).collect()
    }

    pub fn write_text(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
        let mut w = BufWriter::new(f);
        for line in self.to_lines() {
            writeln!(w, "{line}").map_err(|e| Error::io("writing corpus", e))?;
        }
        w.flush().map_err(|e| Error::io("writing corpus", e))
    }
}

/// What to do with a sentence longer than the token cap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OverlengthPolicy {
    #[default]
    Skip,
    Truncate,
    Reject,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TokenizerConfig {
    pub max_tokens: usize,
    pub lowercase: bool,
    pub overlength: OverlengthPolicy,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        TokenizerConfig {
            max_tokens: DEFAULT_MAX_TOKENS,
            lowercase: false,
            overlength: OverlengthPolicy::Skip,
        }
    }
}

/// Splits one sentence on runs of whitespace.
pub fn tokenize(line: &str, lowercase: bool) -> Vec<String> {
    line.split_whitespace()
        .map(|t| if lowercase { t.to_lowercase() } else { t.to_string() })
        .collect()
}

/// Tokenized sentences plus counters for lines that were dropped or cut.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TokenizedText {
    pub sentences: Vec<Vec<String>>,
    pub skipped_empty: usize,
    pub skipped_overlength: usize,
    pub truncated: usize,
}

/// Tokenizes a sequence of lines, applying the over-length policy.
pub fn tokenize_lines<I, S>(lines: I, config: &TokenizerConfig) -> Result<TokenizedText>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut out = TokenizedText::default();
    for (lineno, line) in lines.into_iter().enumerate() {
        let mut tokens = tokenize(line.as_ref(), config.lowercase);
        if tokens.is_empty() {
            out.skipped_empty += 1;
            continue;
        }
        if tokens.len() > config.max_tokens {
            match config.overlength {
                OverlengthPolicy::Skip => {
                    out.skipped_overlength += 1;
                    continue;
                }
                OverlengthPolicy::Truncate => {
                    tokens.truncate(config.max_tokens);
                    out.truncated += 1;
                }
                OverlengthPolicy::Reject => {
                    return Err(data_err!(
                        "line {} has {} tokens, more than the cap of {}",
                        lineno + 1,
                        tokens.len(),
                        config.max_tokens
                    ));
                }
            }
        }
        out.sentences.push(tokens);
    }
    if out.skipped_overlength > 0 {
        warn!(
            "skipped {} sentences longer than {} tokens",
            out.skipped_overlength, config.max_tokens
        );
    }
    Ok(out)
}

pub fn read_corpus_file(path: &Path, config: &TokenizerConfig) -> Result<TokenizedText> {
    let f = File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    let lines = BufReader::new(f)
        .lines()
        .collect::<std::io::Result<Vec<_>>>()
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    tokenize_lines(lines, config)
}

/// Builds a vocabulary from tokenized sentences. Tokens seen fewer than
/// `min_count` times are left out (they encode to [`UNK`]); kept tokens get
/// ids by descending frequency, ties broken lexicographically.
pub fn build_vocab<S: AsRef<str>>(sentences: &[Vec<S>], min_count: usize) -> Result<Vocab> {
    if min_count < 1 {
        return Err(invalid!("min_count must be at least 1"));
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for s in sentences {
        for t in s {
            let t = t.as_ref();
            if RESERVED.contains(&t) {
                continue;
            }
            *counts.entry(t).or_default() += 1;
        }
    }
    if counts.is_empty() {
        return Err(data_err!("cannot build a vocabulary from an empty corpus"));
    }
    let mut kept: Vec<(&str, usize)> = counts.into_iter().filter(|&(_, c)| c >= min_count).collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    Vocab::from_words(kept.into_iter().map(|(t, _)| t))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "seed")]
pub enum SplitOrder {
    Sequential,
    Shuffled(u64),
}

/// Train/dev/test proportions as integer parts; fraction `i` is
/// `part_i / (train + dev + test)`, so the fractions sum to exactly one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: u64,
    pub dev: u64,
    pub test: u64,
    pub order: SplitOrder,
}

impl SplitSpec {
    pub fn new(train: u64, dev: u64, test: u64, order: SplitOrder) -> Result<Self> {
        let s = SplitSpec {
            train,
            dev,
            test,
            order,
        };
        s.validate()?;
        Ok(s)
    }

    /// The 80/10/10 split.
    pub fn standard(order: SplitOrder) -> Self {
        SplitSpec {
            train: 8,
            dev: 1,
            test: 1,
            order,
        }
    }

    /// Converts decimal fractions (to a resolution of 1e-6) into parts.
    pub fn from_fractions(train: f64, dev: f64, test: f64, order: SplitOrder) -> Result<Self> {
        if !(train > 0.0 && dev > 0.0 && test > 0.0) {
            return Err(invalid!("split fractions must be positive"));
        }
        if ((train + dev + test) - 1.0).abs() > 1e-9 {
            return Err(invalid!("split fractions sum to {}, not 1", train + dev + test));
        }
        let scale = 1e6;
        let parts = |f: f64| (f * scale).round() as u64;
        let (d, t) = (parts(dev), parts(test));
        Self::new(1_000_000 - d - t, d, t, order)
    }

    pub fn validate(&self) -> Result<()> {
        if self.train == 0 || self.dev == 0 || self.test == 0 {
            return Err(invalid!("split fractions must be positive"));
        }
        Ok(())
    }

    fn total(&self) -> u64 {
        self.train + self.dev + self.test
    }

    /// Block sizes for `n` items: dev and test are floored, train takes the
    /// remainder.
    pub fn sizes(&self, n: usize) -> Result<(usize, usize, usize)> {
        self.validate()?;
        let total = u128::from(self.total());
        let dev = (n as u128 * u128::from(self.dev) / total) as usize;
        let test = (n as u128 * u128::from(self.test) / total) as usize;
        let train = n - dev - test;
        if train == 0 || dev == 0 || test == 0 {
            return Err(data_err!(
                "splitting {n} items {}:{}:{} leaves an empty part",
                self.train,
                self.dev,
                self.test
            ));
        }
        Ok((train, dev, test))
    }

    /// Index blocks (train, dev, test) partitioning `0..n`.
    pub fn partition(&self, n: usize) -> Result<(Vec<usize>, Vec<usize>, Vec<usize>)> {
        let (train, dev, _) = self.sizes(n)?;
        let mut idx: Vec<usize> = (0..n).collect();
        if let SplitOrder::Shuffled(seed) = self.order {
            idx.shuffle(&mut rng::rng_from_seed(seed));
        }
        let test = idx.split_off(train + dev);
        let dev = idx.split_off(train);
        Ok((idx, dev, test))
    }
}

/// Splits a corpus into (train, dev, test).
pub fn split_corpus(corpus: &Corpus, spec: &SplitSpec) -> Result<(Corpus, Corpus, Corpus)> {
    let (a, b, c) = spec.partition(corpus.len())?;
    Ok((corpus.select(&a), corpus.select(&b), corpus.select(&c)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lines(xs: &[&str]) -> Vec<Vec<String>> {
        xs.iter().map(|l| tokenize(l, false)).collect()
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(tokenize("the cat sat", false), ["the", "cat", "sat"]);
        assert!(tokenize("", false).is_empty());
        assert_eq!(tokenize("a  b", false), ["a", "b"]);
        assert_eq!(tokenize("The Cat", true), ["the", "cat"]);
    }

    #[test]
    fn tokenize_lines_counts_skips() {
        let cfg = TokenizerConfig {
            max_tokens: 2,
            ..Default::default()
        };
        let t = tokenize_lines(["a b", "", "a b c", "  "], &cfg).unwrap();
        assert_eq!(t.sentences, vec![vec!["a", "b"]]);
        assert_eq!(t.skipped_empty, 2);
        assert_eq!(t.skipped_overlength, 1);

        let cut = TokenizerConfig {
            overlength: OverlengthPolicy::Truncate,
            ..cfg.clone()
        };
        let t = tokenize_lines(["a b c"], &cut).unwrap();
        assert_eq!(t.sentences, vec![vec!["a", "b"]]);
        assert_eq!(t.truncated, 1);

        let strict = TokenizerConfig {
            overlength: OverlengthPolicy::Reject,
            ..cfg
        };
        assert!(tokenize_lines(["a b c"], &strict).is_err());
    }

    #[test]
    fn vocab_keeps_everything_at_min_count_one() {
        let v = build_vocab(&lines(&["a b", "a c"]), 1).unwrap();
        assert_eq!(v.len(), 7);
        assert_eq!(v.id("a"), FIRST_WORD);
        assert_eq!(v.id("b"), FIRST_WORD + 1);
        assert_eq!(v.id("c"), FIRST_WORD + 2);
    }

    #[test]
    fn vocab_min_count_maps_rare_tokens_to_unk() {
        let v = build_vocab(&lines(&["a b", "a c"]), 2).unwrap();
        assert_eq!(v.words(), ["a"]);
        assert_eq!(v.id("b"), UNK);
        assert_eq!(v.id("c"), UNK);
    }

    #[test]
    fn vocab_is_deterministic() {
        let text = lines(&["z y x", "y x", "q r s t", "x"]);
        let a = build_vocab(&text, 1).unwrap();
        let b = build_vocab(&text, 1).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.words(), ["x", "y", "q", "r", "s", "t", "z"]);
    }

    #[test]
    fn vocab_errors() {
        assert!(build_vocab::<String>(&[], 1).is_err());
        assert!(build_vocab(&lines(&["a"]), 0).is_err());
    }

    #[test]
    fn reserved_names_never_become_words() {
        let v = build_vocab(&lines(&["<s> a </s> <pad>"]), 1).unwrap();
        assert_eq!(v.words(), ["a"]);
        let enc = v.encode(&["<pad>", "a", "<s>"]);
        assert_eq!(enc.ids(), [UNK, FIRST_WORD, UNK, EOS]);
    }

    #[test]
    fn vocab_file_round_trip() {
        let v = build_vocab(&lines(&["the cat sat", "the dog"]), 1).unwrap();
        let dir = std::env::temp_dir().join(format!("ddeval-vocab-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("vocab.txt");
        v.write_to(&path).unwrap();
        let back = Vocab::read_from(&path).unwrap();
        assert_eq!(v, back);
        let bytes = std::fs::read(&path).unwrap();
        back.write_to(&path).unwrap();
        assert_eq!(bytes, std::fs::read(&path).unwrap());
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn token_sequence_rejects_reserved() {
        assert!(TokenSequence::new(vec![]).is_err());
        assert!(TokenSequence::new(vec![4, PAD, EOS]).is_err());
        assert!(TokenSequence::new(vec![EOS, 4]).is_err());
        assert!(TokenSequence::new(vec![BOS, 4]).is_err());
        let s = TokenSequence::new(vec![4, 5, EOS]).unwrap();
        assert!(s.is_terminated());
        assert_eq!(s.words(), [4, 5]);
        let cut = TokenSequence::new(vec![4, 5]).unwrap();
        assert!(!cut.is_terminated());
    }

    #[test]
    fn corpus_rejects_out_of_range_ids() {
        let v = Arc::new(Vocab::synthetic(2));
        let bad = TokenSequence::new(vec![9, EOS]).unwrap();
        assert!(Corpus::new(vec![bad], v, CorpusLabel::Real).is_err());
    }

    fn numbered(n: usize) -> Corpus {
        let v = Arc::new(Vocab::synthetic(n));
        let seqs = (0..n)
            .map(|i| TokenSequence::new(vec![FIRST_WORD + i as u32, EOS]).unwrap())
            .collect();
        Corpus::new(seqs, v, CorpusLabel::Real).unwrap()
    }

    #[test]
    fn sequential_split_of_ten() {
        let c = numbered(10);
        let spec = SplitSpec::standard(SplitOrder::Sequential);
        let (a, b, t) = split_corpus(&c, &spec).unwrap();
        assert_eq!((a.len(), b.len(), t.len()), (8, 1, 1));
        assert_eq!(t.sequences()[0], c.sequences()[9]);
        assert_eq!(b.sequences()[0], c.sequences()[8]);
    }

    #[test]
    fn paper_protocol_block_sizes() {
        let spec = SplitSpec::new(300_000, 10_000, 10_000, SplitOrder::Sequential).unwrap();
        assert_eq!(spec.sizes(320_000).unwrap(), (300_000, 10_000, 10_000));
        let (train, dev, test) = spec.partition(320_000).unwrap();
        assert_eq!(train.first(), Some(&0));
        assert_eq!(dev.first(), Some(&300_000));
        assert_eq!(test.first(), Some(&310_000));
        assert_eq!(test.last(), Some(&319_999));
    }

    #[test]
    fn shuffled_split_is_reproducible() {
        let spec = SplitSpec::standard(SplitOrder::Shuffled(7));
        assert_eq!(spec.partition(100).unwrap(), spec.partition(100).unwrap());
        let other = SplitSpec::standard(SplitOrder::Shuffled(8));
        assert_ne!(spec.partition(100).unwrap(), other.partition(100).unwrap());
    }

    #[test]
    fn split_errors_on_empty_part() {
        let spec = SplitSpec::standard(SplitOrder::Sequential);
        assert!(spec.sizes(5).is_err());
        assert!(SplitSpec::new(1, 0, 1, SplitOrder::Sequential).is_err());
        assert!(SplitSpec::from_fractions(0.8, 0.1, 0.2, SplitOrder::Sequential).is_err());
        let f = SplitSpec::from_fractions(0.8, 0.1, 0.1, SplitOrder::Sequential).unwrap();
        assert_eq!(f.sizes(10).unwrap(), (8, 1, 1));
    }

    proptest! {
        #[test]
        fn split_is_a_partition(n in 30usize..500, seed in any::<u64>(), shuffled in any::<bool>(),
                                dev in 1u64..5, test in 1u64..5) {
            let order = if shuffled { SplitOrder::Shuffled(seed) } else { SplitOrder::Sequential };
            let spec = SplitSpec::new(10, dev, test, order).unwrap();
            let (a, b, c) = spec.partition(n).unwrap();
            prop_assert_eq!(a.len() + b.len() + c.len(), n);
            let mut all: Vec<usize> = a.into_iter().chain(b).chain(c).collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        }

        #[test]
        fn encode_decode_round_trip(words in proptest::collection::vec("[a-e]{1,3}", 1..12)) {
            let v = build_vocab(std::slice::from_ref(&words), 1).unwrap();
            let enc = v.encode(&words);
            prop_assert_eq!(v.decode(&enc), words);
            // ids are dense
            let max = enc.words().iter().copied().max().unwrap() as usize;
            prop_assert!(max < v.len());
            prop_assert_eq!(v.len() - 1, v.word_count() + 3);
        }
    }
}
