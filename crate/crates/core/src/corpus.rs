//! Corpus data model, on-disk format, validation, and descriptive statistics.
//!
//! A corpus is a list of sentences, each annotated with zero or more spatial
//! relations. Every relation is anchored on a spatial indicator (usually a
//! preposition) and carries span lists for the four roles: trajector,
//! landmark, diagnosis, and hedge. Spans are standoff character offsets into
//! the sentence text; the covered substring is reconstructed on load.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::preprocess::Tokenizer;

/// A contiguous character range `[start, end)` of a sentence, plus the text
/// it covers. Offsets count Unicode scalar values, not bytes.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub text: String,
}

impl Span {
    /// Build a span over `[start, end)` of `sentence`, extracting the covered
    /// text. Returns `None` if the range is empty or out of bounds.
    pub fn over(sentence: &str, start: usize, end: usize) -> Option<Span> {
        let text = slice_chars(sentence, start, end)?;
        Some(Span {
            start,
            end,
            text: text.to_string(),
        })
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start < other.end && other.start < self.end
    }
}

/// Number of characters in `s`.
pub fn char_len(s: &str) -> usize {
    s.chars().count()
}

/// Substring of `s` covering character offsets `[start, end)`.
/// `None` when `start >= end` or `end` exceeds the text length.
pub fn slice_chars(s: &str, start: usize, end: usize) -> Option<&str> {
    if start >= end {
        return None;
    }
    let mut byte_start = None;
    let mut byte_end = None;
    for (count, (bi, _)) in s.char_indices().enumerate() {
        if count == start {
            byte_start = Some(bi);
        }
        if count == end {
            byte_end = Some(bi);
            break;
        }
    }
    let bs = byte_start?;
    let be = match byte_end {
        Some(b) => b,
        None => {
            if end == char_len(s) {
                s.len()
            } else {
                return None;
            }
        }
    };
    Some(&s[bs..be])
}

/// The four spatial roles annotated relative to an indicator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RoleLabel {
    Trajector,
    Landmark,
    Diagnosis,
    Hedge,
}

impl RoleLabel {
    pub const ALL: [RoleLabel; 4] = [
        RoleLabel::Trajector,
        RoleLabel::Landmark,
        RoleLabel::Diagnosis,
        RoleLabel::Hedge,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            RoleLabel::Trajector => "TRAJECTOR",
            RoleLabel::Landmark => "LANDMARK",
            RoleLabel::Diagnosis => "DIAGNOSIS",
            RoleLabel::Hedge => "HEDGE",
        }
    }
}

impl fmt::Display for RoleLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One spatial relation: an indicator span plus the role spans it anchors.
/// Role lists may be empty; spans within one list must not overlap.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpatialRelation {
    pub indicator: Span,
    pub trajectors: Vec<Span>,
    pub landmarks: Vec<Span>,
    pub diagnoses: Vec<Span>,
    pub hedges: Vec<Span>,
}

impl SpatialRelation {
    pub fn new(indicator: Span) -> Self {
        SpatialRelation {
            indicator,
            trajectors: Vec::new(),
            landmarks: Vec::new(),
            diagnoses: Vec::new(),
            hedges: Vec::new(),
        }
    }

    pub fn role_spans(&self, role: RoleLabel) -> &[Span] {
        match role {
            RoleLabel::Trajector => &self.trajectors,
            RoleLabel::Landmark => &self.landmarks,
            RoleLabel::Diagnosis => &self.diagnoses,
            RoleLabel::Hedge => &self.hedges,
        }
    }

    pub fn role_spans_mut(&mut self, role: RoleLabel) -> &mut Vec<Span> {
        match role {
            RoleLabel::Trajector => &mut self.trajectors,
            RoleLabel::Landmark => &mut self.landmarks,
            RoleLabel::Diagnosis => &mut self.diagnoses,
            RoleLabel::Hedge => &mut self.hedges,
        }
    }
}

/// A sentence with its spatial relation annotations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotatedSentence {
    pub report_id: String,
    pub sentence_id: String,
    pub text: String,
    pub relations: Vec<SpatialRelation>,
}

impl AnnotatedSentence {
    pub fn key(&self) -> (String, String) {
        (self.report_id.clone(), self.sentence_id.clone())
    }
}

/// A validated collection of annotated sentences.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Corpus {
    pub sentences: Vec<AnnotatedSentence>,
    pub report_ids: BTreeSet<String>,
}

impl Corpus {
    /// Assemble and validate a corpus from sentences.
    pub fn from_sentences(sentences: Vec<AnnotatedSentence>) -> Result<Corpus, CorpusError> {
        let mut seen: BTreeSet<(String, String)> = BTreeSet::new();
        let mut report_ids = BTreeSet::new();
        for s in &sentences {
            validate_sentence(s)?;
            if !seen.insert(s.key()) {
                return Err(CorpusError::DuplicateSentence {
                    report_id: s.report_id.clone(),
                    sentence_id: s.sentence_id.clone(),
                });
            }
            report_ids.insert(s.report_id.clone());
        }
        Ok(Corpus {
            sentences,
            report_ids,
        })
    }

    pub fn n_relations(&self) -> usize {
        self.sentences.iter().map(|s| s.relations.len()).sum()
    }
}

/// Validation and parse failures for corpus files.
#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(
        "span [{start}, {end}) out of bounds for {field} in report {report_id} \
         sentence {sentence_id} (text length {len})"
    )]
    SpanOutOfBounds {
        report_id: String,
        sentence_id: String,
        field: String,
        start: usize,
        end: usize,
        len: usize,
    },
    #[error(
        "span text mismatch in report {report_id} sentence {sentence_id}: \
         expected {expected:?}, found {found:?}"
    )]
    SpanTextMismatch {
        report_id: String,
        sentence_id: String,
        expected: String,
        found: String,
    },
    #[error(
        "overlapping {role} spans [{a_start}, {a_end}) and [{b_start}, {b_end}) \
         in report {report_id} sentence {sentence_id}"
    )]
    OverlappingSpans {
        report_id: String,
        sentence_id: String,
        role: RoleLabel,
        a_start: usize,
        a_end: usize,
        b_start: usize,
        b_end: usize,
    },
    #[error(
        "duplicate indicator span [{start}, {end}) in report {report_id} sentence {sentence_id}"
    )]
    DuplicateIndicator {
        report_id: String,
        sentence_id: String,
        start: usize,
        end: usize,
    },
    #[error("duplicate sentence id {sentence_id} in report {report_id}")]
    DuplicateSentence {
        report_id: String,
        sentence_id: String,
    },
}

fn validate_span(
    sentence: &AnnotatedSentence,
    field: &str,
    span: &Span,
) -> Result<(), CorpusError> {
    let len = char_len(&sentence.text);
    if span.start >= span.end || span.end > len {
        return Err(CorpusError::SpanOutOfBounds {
            report_id: sentence.report_id.clone(),
            sentence_id: sentence.sentence_id.clone(),
            field: field.to_string(),
            start: span.start,
            end: span.end,
            len,
        });
    }
    let found = slice_chars(&sentence.text, span.start, span.end).unwrap_or("");
    if found != span.text {
        return Err(CorpusError::SpanTextMismatch {
            report_id: sentence.report_id.clone(),
            sentence_id: sentence.sentence_id.clone(),
            expected: span.text.clone(),
            found: found.to_string(),
        });
    }
    Ok(())
}

fn validate_sentence(sentence: &AnnotatedSentence) -> Result<(), CorpusError> {
    let mut indicator_spans: BTreeSet<(usize, usize)> = BTreeSet::new();
    for rel in &sentence.relations {
        validate_span(sentence, "indicator", &rel.indicator)?;
        if !indicator_spans.insert((rel.indicator.start, rel.indicator.end)) {
            return Err(CorpusError::DuplicateIndicator {
                report_id: sentence.report_id.clone(),
                sentence_id: sentence.sentence_id.clone(),
                start: rel.indicator.start,
                end: rel.indicator.end,
            });
        }
        for role in RoleLabel::ALL {
            let spans = rel.role_spans(role);
            for span in spans {
                validate_span(sentence, role.name(), span)?;
            }
            for (i, a) in spans.iter().enumerate() {
                for b in &spans[i + 1..] {
                    if a.overlaps(b) {
                        return Err(CorpusError::OverlappingSpans {
                            report_id: sentence.report_id.clone(),
                            sentence_id: sentence.sentence_id.clone(),
                            role,
                            a_start: a.start,
                            a_end: a.end,
                            b_start: b.start,
                            b_end: b.end,
                        });
                    }
                }
            }
        }
    }
    Ok(())
}

// On-disk JSON-lines schema. Spans omit the covered text; it is reconstructed
// against the sentence on load.

#[derive(Serialize, Deserialize)]
struct SpanDto {
    start: usize,
    end: usize,
}

#[derive(Serialize, Deserialize)]
struct RelationDto {
    indicator: SpanDto,
    #[serde(default)]
    trajectors: Vec<SpanDto>,
    #[serde(default)]
    landmarks: Vec<SpanDto>,
    #[serde(default)]
    diagnoses: Vec<SpanDto>,
    #[serde(default)]
    hedges: Vec<SpanDto>,
}

#[derive(Serialize, Deserialize)]
struct SentenceDto {
    report_id: String,
    sentence_id: String,
    text: String,
    #[serde(default)]
    relations: Vec<RelationDto>,
}

fn span_from_dto(
    sentence: &SentenceDto,
    field: &str,
    dto: &SpanDto,
) -> Result<Span, CorpusError> {
    Span::over(&sentence.text, dto.start, dto.end).ok_or_else(|| CorpusError::SpanOutOfBounds {
        report_id: sentence.report_id.clone(),
        sentence_id: sentence.sentence_id.clone(),
        field: field.to_string(),
        start: dto.start,
        end: dto.end,
        len: char_len(&sentence.text),
    })
}

fn sentence_from_dto(dto: SentenceDto) -> Result<AnnotatedSentence, CorpusError> {
    let mut relations = Vec::with_capacity(dto.relations.len());
    for rel in &dto.relations {
        let mut relation = SpatialRelation::new(span_from_dto(&dto, "indicator", &rel.indicator)?);
        for (role, spans) in [
            (RoleLabel::Trajector, &rel.trajectors),
            (RoleLabel::Landmark, &rel.landmarks),
            (RoleLabel::Diagnosis, &rel.diagnoses),
            (RoleLabel::Hedge, &rel.hedges),
        ] {
            for s in spans {
                relation
                    .role_spans_mut(role)
                    .push(span_from_dto(&dto, role.name(), s)?);
            }
        }
        relations.push(relation);
    }
    Ok(AnnotatedSentence {
        report_id: dto.report_id,
        sentence_id: dto.sentence_id,
        text: dto.text,
        relations,
    })
}

fn sentence_to_dto(s: &AnnotatedSentence) -> SentenceDto {
    let span = |sp: &Span| SpanDto {
        start: sp.start,
        end: sp.end,
    };
    SentenceDto {
        report_id: s.report_id.clone(),
        sentence_id: s.sentence_id.clone(),
        text: s.text.clone(),
        relations: s
            .relations
            .iter()
            .map(|r| RelationDto {
                indicator: span(&r.indicator),
                trajectors: r.trajectors.iter().map(span).collect(),
                landmarks: r.landmarks.iter().map(span).collect(),
                diagnoses: r.diagnoses.iter().map(span).collect(),
                hedges: r.hedges.iter().map(span).collect(),
            })
            .collect(),
    }
}

/// Read a corpus from a JSON-lines reader, validating every invariant.
pub fn read_corpus<R: Read>(reader: R) -> Result<Corpus, CorpusError> {
    let reader = BufReader::new(reader);
    let mut sentences = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let dto: SentenceDto =
            serde_json::from_str(&line).map_err(|e| CorpusError::Parse {
                line: idx + 1,
                message: e.to_string(),
            })?;
        sentences.push(sentence_from_dto(dto)?);
    }
    Corpus::from_sentences(sentences)
}

/// Load a corpus from a JSON-lines file.
pub fn load_corpus(path: &Path) -> Result<Corpus, CorpusError> {
    read_corpus(File::open(path)?)
}

/// Write a corpus as JSON-lines (spans without their text field).
pub fn write_corpus_to<W: Write>(corpus: &Corpus, writer: W) -> Result<(), CorpusError> {
    let mut w = BufWriter::new(writer);
    for s in &corpus.sentences {
        let dto = sentence_to_dto(s);
        serde_json::to_writer(&mut w, &dto).map_err(|e| CorpusError::Parse {
            line: 0,
            message: e.to_string(),
        })?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_corpus(corpus: &Corpus, path: &Path) -> Result<(), CorpusError> {
    write_corpus_to(corpus, File::create(path)?)
}

/// Descriptive statistics over a corpus, one field per reported parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub n_relations: usize,
    pub n_trajectors: usize,
    pub n_landmarks: usize,
    pub n_diagnoses: usize,
    pub n_hedges: usize,
    pub n_sentences_with_indicator: usize,
    pub max_indicators_per_sentence: usize,
    pub n_rel_traj_land_only: usize,
    pub n_rel_with_diag_no_hedge: usize,
    pub n_rel_with_hedge_no_diag: usize,
    pub n_rel_all_four: usize,
    pub n_rel_multi_diagnosis: usize,
    pub max_diagnoses_per_relation: usize,
    pub avg_sentence_length_tokens: f64,
}

impl CorpusStats {
    pub fn zero() -> Self {
        CorpusStats {
            n_relations: 0,
            n_trajectors: 0,
            n_landmarks: 0,
            n_diagnoses: 0,
            n_hedges: 0,
            n_sentences_with_indicator: 0,
            max_indicators_per_sentence: 0,
            n_rel_traj_land_only: 0,
            n_rel_with_diag_no_hedge: 0,
            n_rel_with_hedge_no_diag: 0,
            n_rel_all_four: 0,
            n_rel_multi_diagnosis: 0,
            max_diagnoses_per_relation: 0,
            avg_sentence_length_tokens: 0.0,
        }
    }

    /// Fixed-width table of parameter/frequency rows.
    pub fn render_table(&self) -> String {
        let rows: Vec<(String, String)> = vec![
            (
                "Average length of sentence containing spatial relation".into(),
                format!("{:.2}", self.avg_sentence_length_tokens),
            ),
            ("Spatial Indicator".into(), self.n_relations.to_string()),
            ("Trajector".into(), self.n_trajectors.to_string()),
            ("Landmark".into(), self.n_landmarks.to_string()),
            ("Diagnosis".into(), self.n_diagnoses.to_string()),
            ("Hedge".into(), self.n_hedges.to_string()),
            (
                "Sentences containing at least 1 Spatial Indicator".into(),
                self.n_sentences_with_indicator.to_string(),
            ),
            (
                "Maximum number of Spatial Indicator in any sentence".into(),
                self.max_indicators_per_sentence.to_string(),
            ),
            (
                "Spatial relations containing only Trajector and Landmark".into(),
                self.n_rel_traj_land_only.to_string(),
            ),
            (
                "Spatial relations containing only Trajector, Landmark, and Diagnosis".into(),
                self.n_rel_with_diag_no_hedge.to_string(),
            ),
            (
                "Spatial relations containing only Trajector, Landmark, and Hedge".into(),
                self.n_rel_with_hedge_no_diag.to_string(),
            ),
            (
                "Spatial relations containing all 4 spatial roles".into(),
                self.n_rel_all_four.to_string(),
            ),
            (
                "Spatial relations containing more than 1 Diagnosis".into(),
                self.n_rel_multi_diagnosis.to_string(),
            ),
            (
                "Maximum Diagnosis terms associated with any spatial relation".into(),
                self.max_diagnoses_per_relation.to_string(),
            ),
        ];
        let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        let mut out = String::new();
        out.push_str(&format!("{:<width$}  Frequency\n", "Parameter", width = width));
        for (k, v) in rows {
            out.push_str(&format!("{:<width$}  {}\n", k, v, width = width));
        }
        out
    }
}

/// Compute descriptive statistics. The average sentence length (in tokens)
/// is taken over sentences containing at least one relation.
pub fn compute_stats(corpus: &Corpus, tokenizer: &dyn Tokenizer) -> CorpusStats {
    let mut stats = CorpusStats::zero();
    let mut total_tokens: usize = 0;
    for sentence in &corpus.sentences {
        if !sentence.relations.is_empty() {
            stats.n_sentences_with_indicator += 1;
            total_tokens += tokenizer.tokenize(&sentence.text).len();
        }
        stats.max_indicators_per_sentence =
            stats.max_indicators_per_sentence.max(sentence.relations.len());
        for rel in &sentence.relations {
            stats.n_relations += 1;
            stats.n_trajectors += rel.trajectors.len();
            stats.n_landmarks += rel.landmarks.len();
            stats.n_diagnoses += rel.diagnoses.len();
            stats.n_hedges += rel.hedges.len();
            match (rel.diagnoses.is_empty(), rel.hedges.is_empty()) {
                (true, true) => stats.n_rel_traj_land_only += 1,
                (false, true) => stats.n_rel_with_diag_no_hedge += 1,
                (true, false) => stats.n_rel_with_hedge_no_diag += 1,
                (false, false) => stats.n_rel_all_four += 1,
            }
            if rel.diagnoses.len() > 1 {
                stats.n_rel_multi_diagnosis += 1;
            }
            stats.max_diagnoses_per_relation =
                stats.max_diagnoses_per_relation.max(rel.diagnoses.len());
        }
    }
    if stats.n_sentences_with_indicator > 0 {
        stats.avg_sentence_length_tokens =
            total_tokens as f64 / stats.n_sentences_with_indicator as f64;
    }
    stats
}

/// Lowercase preposition list used to form the candidate set for indicator
/// annotation decisions.
#[derive(Debug, Clone)]
pub struct PrepositionLexicon {
    entries: BTreeSet<String>,
}

impl PrepositionLexicon {
    pub fn contains(&self, token_lower: &str) -> bool {
        self.entries.contains(token_lower)
    }

    pub fn entries(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|s| s.as_str())
    }

    /// Plain-text format: one lowercase token per line, blank lines ignored.
    pub fn read<R: Read>(reader: R) -> Result<Self, std::io::Error> {
        let reader = BufReader::new(reader);
        let mut entries = BTreeSet::new();
        for line in reader.lines() {
            let line = line?;
            let tok = line.trim();
            if !tok.is_empty() {
                entries.insert(tok.to_lowercase());
            }
        }
        Ok(PrepositionLexicon { entries })
    }

    pub fn load(path: &Path) -> Result<Self, std::io::Error> {
        Self::read(File::open(path)?)
    }
}

impl Default for PrepositionLexicon {
    fn default() -> Self {
        let entries = [
            "in", "of", "within", "at", "near", "on", "with", "between", "around", "along",
            "above", "below", "behind",
        ];
        PrepositionLexicon {
            entries: entries.iter().map(|s| s.to_string()).collect(),
        }
    }
}

/// Group relations by sentence key, for scoring and agreement.
pub fn relations_by_sentence(
    corpus: &Corpus,
) -> BTreeMap<(String, String), &AnnotatedSentence> {
    corpus
        .sentences
        .iter()
        .map(|s| (s.key(), s))
        .collect()
}
