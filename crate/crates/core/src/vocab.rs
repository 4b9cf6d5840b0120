//! Vocabularies and embedding tables for words, characters, and the
//! indicator flag, plus loading of pretrained word vectors.
//!
//! Word lookup normalizes: lowercase, ASCII digits mapped to '0' ("7th" ->
//! "0th"). Character lookup keeps the original case. Index 0 is PAD, index 1
//! is UNK; the PAD embedding row is pinned to zero and never trained.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::nn::{Array2, Param};
use crate::preprocess::Instance;

pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";
pub const PAD_INDEX: usize = 0;
pub const UNK_INDEX: usize = 1;

#[derive(Debug, thiserror::Error)]
pub enum VocabError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot build a vocabulary from an empty training set")]
    EmptyTrainingSet,
    #[error("embedding dimension mismatch: requested {requested}, file has {found}")]
    DimensionMismatch { requested: usize, found: usize },
    #[error("vocabulary parse error: {0}")]
    Parse(String),
}

/// Normalization applied before word lookup.
pub fn normalize_word(token: &str) -> String {
    token
        .to_lowercase()
        .chars()
        .map(|c| if c.is_ascii_digit() { '0' } else { c })
        .collect()
}

/// Bijective token <-> index map with reserved PAD and UNK entries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: BTreeMap<String, usize>,
}

impl Vocabulary {
    /// Build from `(token, count)` pairs, keeping tokens with frequency at
    /// least `min_freq`, ordered by frequency descending then lexicographic.
    pub fn from_counts(counts: &BTreeMap<String, usize>, min_freq: usize) -> Vocabulary {
        let mut entries: Vec<(&String, &usize)> =
            counts.iter().filter(|(_, c)| **c >= min_freq).collect();
        entries.sort_by(|a, b| b.1.cmp(a.1).then_with(|| a.0.cmp(b.0)));
        let mut tokens = vec![PAD_TOKEN.to_string(), UNK_TOKEN.to_string()];
        tokens.extend(entries.into_iter().map(|(t, _)| t.clone()));
        Vocabulary::from_tokens(tokens)
    }

    fn from_tokens(tokens: Vec<String>) -> Vocabulary {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocabulary { tokens, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Index of `token`, falling back to UNK. Lookup is total.
    pub fn lookup(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK_INDEX)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn token(&self, index: usize) -> &str {
        &self.tokens[index]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

/// JSON form: the ordered token list (PAD/UNK included).
#[derive(Serialize, Deserialize)]
pub struct VocabularyDto {
    pub tokens: Vec<String>,
}

impl From<&Vocabulary> for VocabularyDto {
    fn from(v: &Vocabulary) -> Self {
        VocabularyDto {
            tokens: v.tokens.clone(),
        }
    }
}

impl TryFrom<VocabularyDto> for Vocabulary {
    type Error = VocabError;

    fn try_from(dto: VocabularyDto) -> Result<Self, VocabError> {
        if dto.tokens.len() < 2
            || dto.tokens[PAD_INDEX] != PAD_TOKEN
            || dto.tokens[UNK_INDEX] != UNK_TOKEN
        {
            return Err(VocabError::Parse(
                "token list must start with <pad>, <unk>".to_string(),
            ));
        }
        Ok(Vocabulary::from_tokens(dto.tokens))
    }
}

/// Word and character vocabularies built from training instances. Words are
/// normalized; characters keep original case.
pub fn build_vocab(
    instances: &[Instance],
    min_freq: usize,
) -> Result<(Vocabulary, Vocabulary), VocabError> {
    assert!(min_freq >= 1, "min_freq must be at least 1");
    if instances.iter().all(|i| i.tokens.is_empty()) {
        return Err(VocabError::EmptyTrainingSet);
    }
    let mut word_counts: BTreeMap<String, usize> = BTreeMap::new();
    let mut char_counts: BTreeMap<String, usize> = BTreeMap::new();
    for inst in instances {
        for tok in &inst.tokens {
            *word_counts.entry(normalize_word(&tok.text)).or_insert(0) += 1;
            for ch in tok.text.chars() {
                *char_counts.entry(ch.to_string()).or_insert(0) += 1;
            }
        }
    }
    Ok((
        Vocabulary::from_counts(&word_counts, min_freq),
        // Characters always use min_freq 1: they are the OOV fallback.
        Vocabulary::from_counts(&char_counts, 1),
    ))
}

/// An embedding matrix (|vocab| × dim). Row [`PAD_INDEX`] stays zero.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    pub weights: Param,
    pub dim: usize,
    pub trainable: bool,
}

impl EmbeddingTable {
    /// Random init: rows uniform in `[-sqrt(3/dim), sqrt(3/dim)]`, PAD zero.
    pub fn random(rows: usize, dim: usize, rng: &mut impl Rng, pad_row: bool) -> EmbeddingTable {
        let bound = (3.0 / dim as f64).sqrt();
        let mut weights = Array2::from_fn(rows, dim, |_, _| rng.random_range(-bound..=bound));
        if pad_row && rows > PAD_INDEX {
            weights.row_mut(PAD_INDEX).fill(0.0);
        }
        EmbeddingTable {
            weights: Param::new(weights),
            dim,
            trainable: true,
        }
    }

    pub fn rows(&self) -> usize {
        self.weights.value.rows()
    }

    pub fn row(&self, index: usize) -> &[f64] {
        self.weights.value.row(index)
    }

    /// Zero the PAD row's gradient so training never moves it.
    pub fn mask_pad_grad(&mut self) {
        if self.rows() > PAD_INDEX {
            self.weights.grad.row_mut(PAD_INDEX).fill(0.0);
        }
    }
}

/// Parsed pretrained vectors: token -> row, in file order.
pub struct WordVectors {
    pub dim: usize,
    entries: Vec<(String, Vec<f64>)>,
}

impl WordVectors {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Parse a word2vec-style text file: optional `count dim` header line, then
/// one token plus `dim` floats per line. Malformed lines are skipped with a
/// logged warning; a declared or observed dimension different from `dim` is
/// an error.
pub fn read_word_vectors<R: Read>(reader: R, dim: usize) -> Result<WordVectors, VocabError> {
    let reader = BufReader::new(reader);
    let mut entries = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if idx == 0 && fields.len() == 2 {
            if let (Ok(_), Ok(file_dim)) = (fields[0].parse::<usize>(), fields[1].parse::<usize>())
            {
                if file_dim != dim {
                    return Err(VocabError::DimensionMismatch {
                        requested: dim,
                        found: file_dim,
                    });
                }
                continue;
            }
        }
        if fields.len() != dim + 1 {
            log::warn!(
                "skipping malformed embedding line {}: expected {} values, found {}",
                idx + 1,
                dim,
                fields.len().saturating_sub(1)
            );
            continue;
        }
        let mut values = Vec::with_capacity(dim);
        let mut ok = true;
        for f in &fields[1..] {
            match f.parse::<f64>() {
                Ok(v) => values.push(v),
                Err(_) => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            log::warn!("skipping malformed embedding line {}: bad float", idx + 1);
            continue;
        }
        entries.push((fields[0].to_string(), values));
    }
    Ok(WordVectors { dim, entries })
}

/// Assemble the word embedding table for `vocab` from pretrained vectors:
/// file rows are copied for known words (matching on the normalized form,
/// first occurrence wins); missing words and UNK are drawn uniformly from
/// `[-sqrt(3/dim), sqrt(3/dim)]` in vocabulary index order; PAD stays zero.
pub fn table_from_vectors(
    vocab: &Vocabulary,
    vectors: &WordVectors,
    rng: &mut impl Rng,
) -> EmbeddingTable {
    let dim = vectors.dim;
    let mut weights = Array2::zeros(vocab.len(), dim);
    let mut filled = vec![false; vocab.len()];
    filled[PAD_INDEX] = true;
    for (token, values) in &vectors.entries {
        let norm = normalize_word(token);
        if let Some(&idx) = vocab.index.get(&norm) {
            if idx != PAD_INDEX && idx != UNK_INDEX && !filled[idx] {
                weights.row_mut(idx).copy_from_slice(values);
                filled[idx] = true;
            }
        }
    }
    let bound = (3.0 / dim as f64).sqrt();
    for (idx, done) in filled.iter().enumerate() {
        if !done {
            for v in weights.row_mut(idx) {
                *v = rng.random_range(-bound..=bound);
            }
        }
    }
    EmbeddingTable {
        weights: Param::new(weights),
        dim,
        trainable: true,
    }
}

/// Read a pretrained embedding file and build the table for `vocab`.
pub fn load_pretrained(
    path: &Path,
    vocab: &Vocabulary,
    dim: usize,
    rng: &mut impl Rng,
) -> Result<EmbeddingTable, VocabError> {
    let vectors = read_word_vectors(File::open(path)?, dim)?;
    Ok(table_from_vectors(vocab, &vectors, rng))
}

/// Per-token lookup indices fed to the model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenEncoding {
    pub word_index: usize,
    pub char_indices: Vec<usize>,
    pub indicator_flag: bool,
}

/// Encode an instance's tokens: normalized word lookup with UNK fallback,
/// per-character lookup with UNK fallback, indicator flag copied through.
pub fn encode_instance(
    instance: &Instance,
    word_vocab: &Vocabulary,
    char_vocab: &Vocabulary,
) -> Vec<TokenEncoding> {
    instance
        .tokens
        .iter()
        .zip(&instance.indicator_flags)
        .map(|(tok, &flag)| {
            let mut buf = [0u8; 4];
            TokenEncoding {
                word_index: word_vocab.lookup(&normalize_word(&tok.text)),
                char_indices: tok
                    .text
                    .chars()
                    .map(|c| char_vocab.lookup(c.encode_utf8(&mut buf)))
                    .collect(),
                indicator_flag: flag,
            }
        })
        .collect()
}
