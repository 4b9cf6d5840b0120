//! Tokenization, sentence splitting, per-indicator instance expansion, and
//! BIO label encoding/decoding.
//!
//! One training instance is created per (sentence, spatial indicator) pair so
//! that role labels are unambiguous relative to a single indicator. Labels
//! follow the BIO scheme with a dedicated INDICATOR tag for the anchor term.

use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};
use std::str::FromStr;

use crate::corpus::{char_len, AnnotatedSentence, RoleLabel, Span, SpatialRelation};

/// A token with character offsets into its sentence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub text: String,
    pub start: usize,
    pub end: usize,
}

/// Pluggable tokenization.
pub trait Tokenizer: Sync {
    fn tokenize(&self, text: &str) -> Vec<Token>;
}

/// Default tokenizer: split on whitespace, then detach leading/trailing
/// punctuation characters (`. , ; : ( ) / ?`) as separate tokens.
#[derive(Debug, Clone, Copy, Default)]
pub struct RuleTokenizer;

const DETACH: [char; 8] = ['.', ',', ';', ':', '(', ')', '/', '?'];

impl Tokenizer for RuleTokenizer {
    fn tokenize(&self, text: &str) -> Vec<Token> {
        let mut tokens = Vec::new();
        let mut word: Vec<char> = Vec::new();
        let mut word_start = 0usize;
        let flush = |word: &mut Vec<char>, word_start: usize, tokens: &mut Vec<Token>| {
            if word.is_empty() {
                return;
            }
            // Detach leading punctuation.
            let mut lead = 0;
            while lead < word.len() && DETACH.contains(&word[lead]) {
                lead += 1;
            }
            // Detach trailing punctuation (never past the leading run).
            let mut trail = word.len();
            while trail > lead && DETACH.contains(&word[trail - 1]) {
                trail -= 1;
            }
            for (i, ch) in word[..lead].iter().enumerate() {
                tokens.push(Token {
                    text: ch.to_string(),
                    start: word_start + i,
                    end: word_start + i + 1,
                });
            }
            if trail > lead {
                tokens.push(Token {
                    text: word[lead..trail].iter().collect(),
                    start: word_start + lead,
                    end: word_start + trail,
                });
            }
            for (i, ch) in word[trail..].iter().enumerate() {
                tokens.push(Token {
                    text: ch.to_string(),
                    start: word_start + trail + i,
                    end: word_start + trail + i + 1,
                });
            }
            word.clear();
        };
        for (offset, ch) in text.chars().enumerate() {
            if ch.is_whitespace() {
                flush(&mut word, word_start, &mut tokens);
            } else {
                if word.is_empty() {
                    word_start = offset;
                }
                word.push(ch);
            }
        }
        flush(&mut word, word_start, &mut tokens);
        tokens
    }
}

/// Convenience wrapper over the default tokenizer.
pub fn tokenize(text: &str) -> Vec<Token> {
    RuleTokenizer.tokenize(text)
}

/// A sentence extracted from a report, with character offsets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentenceSpan {
    pub text: String,
    pub start: usize,
    pub end: usize,
}

/// Abbreviations whose trailing period never ends a sentence.
const ABBREVIATIONS: [&str; 11] = [
    "Dr.", "Mr.", "Mrs.", "Ms.", "St.", "a.m.", "p.m.", "e.g.", "i.e.", "vs.", "No.",
];

/// Split report text into sentences. A sentence ends at `.` or `?` followed
/// by whitespace and an uppercase letter or digit, unless the terminal
/// belongs to a known abbreviation.
pub fn split_sentences(report_text: &str) -> Vec<SentenceSpan> {
    let chars: Vec<char> = report_text.chars().collect();
    let mut sentences = Vec::new();
    let mut sent_start: Option<usize> = None;
    let mut i = 0usize;
    while i < chars.len() {
        let ch = chars[i];
        if sent_start.is_none() && !ch.is_whitespace() {
            sent_start = Some(i);
        }
        if (ch == '.' || ch == '?') && sent_start.is_some() {
            // Look ahead: whitespace then uppercase/digit.
            let mut j = i + 1;
            let mut saw_ws = false;
            while j < chars.len() && chars[j].is_whitespace() {
                saw_ws = true;
                j += 1;
            }
            let next_starts_sentence = saw_ws
                && j < chars.len()
                && (chars[j].is_uppercase() || chars[j].is_ascii_digit());
            if next_starts_sentence && !ends_with_abbreviation(&chars, i) {
                let start = sent_start.take().unwrap();
                sentences.push(SentenceSpan {
                    text: chars[start..=i].iter().collect(),
                    start,
                    end: i + 1,
                });
            }
        }
        i += 1;
    }
    if let Some(start) = sent_start {
        // Trim trailing whitespace from the final sentence.
        let mut end = chars.len();
        while end > start && chars[end - 1].is_whitespace() {
            end -= 1;
        }
        if end > start {
            sentences.push(SentenceSpan {
                text: chars[start..end].iter().collect(),
                start,
                end,
            });
        }
    }
    sentences
}

fn ends_with_abbreviation(chars: &[char], period_idx: usize) -> bool {
    // The token ending at the period: back up to the previous whitespace.
    let mut start = period_idx;
    while start > 0 && !chars[start - 1].is_whitespace() {
        start -= 1;
    }
    let token: String = chars[start..=period_idx].iter().collect();
    ABBREVIATIONS.contains(&token.as_str())
}

/// Token-level tag. The role task uses `{O, INDICATOR, B/I-<role>}` (10
/// labels); the indicator task uses `{O, B-INDICATOR, I-INDICATOR}` (3).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TagLabel {
    Outside,
    Indicator,
    Begin(RoleLabel),
    Inside(RoleLabel),
    BeginIndicator,
    InsideIndicator,
}

impl fmt::Display for TagLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TagLabel::Outside => f.write_str("O"),
            TagLabel::Indicator => f.write_str("INDICATOR"),
            TagLabel::Begin(r) => write!(f, "B-{}", r.name()),
            TagLabel::Inside(r) => write!(f, "I-{}", r.name()),
            TagLabel::BeginIndicator => f.write_str("B-INDICATOR"),
            TagLabel::InsideIndicator => f.write_str("I-INDICATOR"),
        }
    }
}

impl FromStr for TagLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let role = |name: &str| -> Result<RoleLabel, String> {
            match name {
                "TRAJECTOR" => Ok(RoleLabel::Trajector),
                "LANDMARK" => Ok(RoleLabel::Landmark),
                "DIAGNOSIS" => Ok(RoleLabel::Diagnosis),
                "HEDGE" => Ok(RoleLabel::Hedge),
                other => Err(format!("unknown role: {other}")),
            }
        };
        match s {
            "O" => Ok(TagLabel::Outside),
            "INDICATOR" => Ok(TagLabel::Indicator),
            "B-INDICATOR" => Ok(TagLabel::BeginIndicator),
            "I-INDICATOR" => Ok(TagLabel::InsideIndicator),
            _ => {
                if let Some(name) = s.strip_prefix("B-") {
                    Ok(TagLabel::Begin(role(name)?))
                } else if let Some(name) = s.strip_prefix("I-") {
                    Ok(TagLabel::Inside(role(name)?))
                } else {
                    Err(format!("unknown tag: {s}"))
                }
            }
        }
    }
}

/// Which labeling task a model solves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Roles,
    Indicator,
}

/// Closed, ordered label set for one task. Index 0 is always `O`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TagSet {
    task: Task,
    labels: Vec<TagLabel>,
}

impl TagSet {
    pub fn for_task(task: Task) -> TagSet {
        let labels = match task {
            Task::Roles => {
                let mut v = vec![TagLabel::Outside, TagLabel::Indicator];
                for role in RoleLabel::ALL {
                    v.push(TagLabel::Begin(role));
                    v.push(TagLabel::Inside(role));
                }
                v
            }
            Task::Indicator => vec![
                TagLabel::Outside,
                TagLabel::BeginIndicator,
                TagLabel::InsideIndicator,
            ],
        };
        TagSet { task, labels }
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[TagLabel] {
        &self.labels
    }

    pub fn label(&self, index: usize) -> TagLabel {
        self.labels[index]
    }

    pub fn index(&self, label: TagLabel) -> Option<usize> {
        self.labels.iter().position(|&l| l == label)
    }
}

/// Identifies where an instance came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstanceSource {
    pub report_id: String,
    pub sentence_id: String,
    /// Indicator span for role-task instances; the full-sentence anchor is
    /// absent for indicator-task instances.
    pub indicator: Option<Span>,
}

/// One model input: a tokenized sentence with a label per token and a flag
/// marking the anchor indicator's tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instance {
    pub tokens: Vec<Token>,
    pub labels: Vec<TagLabel>,
    pub indicator_flags: Vec<bool>,
    pub source: InstanceSource,
}

#[derive(Debug, thiserror::Error)]
pub enum PreprocessError {
    #[error(
        "span [{start}, {end}) ({text:?}) overlaps no token of sentence {sentence_id:?}"
    )]
    SpanAlignment {
        sentence_id: String,
        start: usize,
        end: usize,
        text: String,
    },
    #[error(
        "token {token_index} claimed by both {first} and {second} in sentence {sentence_id:?}"
    )]
    OverlappingRoles {
        sentence_id: String,
        token_index: usize,
        first: String,
        second: String,
    },
    #[error("labels length {labels} does not match token count {tokens}")]
    LengthMismatch { tokens: usize, labels: usize },
    #[error("two-column parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Counters for span-to-token alignment repairs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AlignmentWarnings {
    /// Spans whose boundary fell inside a token and were snapped outward.
    pub snapped: usize,
}

/// Map a character span onto the token range it covers. A boundary inside a
/// token snaps outward to include the whole token (counted in `warnings`);
/// a span covering no token at all is an error.
pub fn align_span(
    tokens: &[Token],
    span: &Span,
    sentence_id: &str,
    warnings: &mut AlignmentWarnings,
) -> Result<std::ops::Range<usize>, PreprocessError> {
    let mut first: Option<usize> = None;
    let mut last: Option<usize> = None;
    for (i, tok) in tokens.iter().enumerate() {
        if tok.start < span.end && span.start < tok.end {
            if first.is_none() {
                first = Some(i);
            }
            last = Some(i);
        }
    }
    match (first, last) {
        (Some(f), Some(l)) => {
            if tokens[f].start != span.start || tokens[l].end != span.end {
                warnings.snapped += 1;
            }
            Ok(f..l + 1)
        }
        _ => Err(PreprocessError::SpanAlignment {
            sentence_id: sentence_id.to_string(),
            start: span.start,
            end: span.end,
            text: span.text.clone(),
        }),
    }
}

/// Encode one relation's roles over the sentence tokens as BIO labels, with
/// the indicator's tokens tagged `INDICATOR`.
pub fn bio_encode(
    tokens: &[Token],
    relation: &SpatialRelation,
    sentence_id: &str,
    warnings: &mut AlignmentWarnings,
) -> Result<Vec<TagLabel>, PreprocessError> {
    let mut labels = vec![TagLabel::Outside; tokens.len()];
    let mut owner: Vec<Option<String>> = vec![None; tokens.len()];

    let claim = |range: std::ops::Range<usize>,
                     make: &dyn Fn(usize) -> TagLabel,
                     desc: String,
                     labels: &mut Vec<TagLabel>,
                     owner: &mut Vec<Option<String>>|
     -> Result<(), PreprocessError> {
        for (pos, idx) in range.clone().enumerate() {
            if let Some(prev) = &owner[idx] {
                return Err(PreprocessError::OverlappingRoles {
                    sentence_id: sentence_id.to_string(),
                    token_index: idx,
                    first: prev.clone(),
                    second: desc,
                });
            }
            owner[idx] = Some(desc.clone());
            labels[idx] = make(pos);
        }
        Ok(())
    };

    let ind_range = align_span(tokens, &relation.indicator, sentence_id, warnings)?;
    claim(
        ind_range,
        &|_| TagLabel::Indicator,
        "INDICATOR".to_string(),
        &mut labels,
        &mut owner,
    )?;

    for role in RoleLabel::ALL {
        for span in relation.role_spans(role) {
            let range = align_span(tokens, span, sentence_id, warnings)?;
            claim(
                range,
                &|pos| {
                    if pos == 0 {
                        TagLabel::Begin(role)
                    } else {
                        TagLabel::Inside(role)
                    }
                },
                role.name().to_string(),
                &mut labels,
                &mut owner,
            )?;
        }
    }
    Ok(labels)
}

/// Spans recovered from a label sequence.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DecodedSpans {
    pub trajectors: Vec<Span>,
    pub landmarks: Vec<Span>,
    pub diagnoses: Vec<Span>,
    pub hedges: Vec<Span>,
    pub indicators: Vec<Span>,
}

impl DecodedSpans {
    pub fn role_spans(&self, role: RoleLabel) -> &[Span] {
        match role {
            RoleLabel::Trajector => &self.trajectors,
            RoleLabel::Landmark => &self.landmarks,
            RoleLabel::Diagnosis => &self.diagnoses,
            RoleLabel::Hedge => &self.hedges,
        }
    }

    fn push(&mut self, role: Option<RoleLabel>, span: Span) {
        match role {
            Some(RoleLabel::Trajector) => self.trajectors.push(span),
            Some(RoleLabel::Landmark) => self.landmarks.push(span),
            Some(RoleLabel::Diagnosis) => self.diagnoses.push(span),
            Some(RoleLabel::Hedge) => self.hedges.push(span),
            None => self.indicators.push(span),
        }
    }
}

/// Decode a label sequence back into spans. An `I-X` without a preceding
/// `B-X`/`I-X` of the same role is repaired by treating it as `B-X`; the
/// same repair applies to `I-INDICATOR`. Contiguous `INDICATOR` runs form
/// indicator spans.
pub fn bio_decode(text: &str, tokens: &[Token], labels: &[TagLabel]) -> DecodedSpans {
    assert_eq!(tokens.len(), labels.len(), "labels must match tokens");
    let mut decoded = DecodedSpans::default();
    // Current open run: (role-or-indicator, first token index, last token index)
    let mut open: Option<(Option<RoleLabel>, usize, usize)> = None;

    let close = |open: &mut Option<(Option<RoleLabel>, usize, usize)>,
                     decoded: &mut DecodedSpans| {
        if let Some((kind, first, last)) = open.take() {
            let start = tokens[first].start;
            let end = tokens[last].end;
            if let Some(span) = Span::over(text, start, end) {
                decoded.push(kind, span);
            }
        }
    };

    for (i, &label) in labels.iter().enumerate() {
        match label {
            TagLabel::Outside => close(&mut open, &mut decoded),
            TagLabel::Begin(role) => {
                close(&mut open, &mut decoded);
                open = Some((Some(role), i, i));
            }
            TagLabel::Inside(role) => match &mut open {
                Some((Some(r), _, last)) if *r == role => *last = i,
                _ => {
                    close(&mut open, &mut decoded);
                    open = Some((Some(role), i, i));
                }
            },
            TagLabel::Indicator => match &mut open {
                Some((None, _, last)) => *last = i,
                _ => {
                    close(&mut open, &mut decoded);
                    open = Some((None, i, i));
                }
            },
            TagLabel::BeginIndicator => {
                close(&mut open, &mut decoded);
                open = Some((None, i, i));
            }
            TagLabel::InsideIndicator => match &mut open {
                Some((None, _, last)) => *last = i,
                _ => {
                    close(&mut open, &mut decoded);
                    open = Some((None, i, i));
                }
            },
        }
    }
    close(&mut open, &mut decoded);
    decoded
}

/// Expand a sentence into one role-task instance per relation. Within an
/// instance only that relation's roles are labeled; everything else is `O`.
pub fn expand_instances(
    sentence: &AnnotatedSentence,
    tokenizer: &dyn Tokenizer,
    warnings: &mut AlignmentWarnings,
) -> Result<Vec<Instance>, PreprocessError> {
    let tokens = tokenizer.tokenize(&sentence.text);
    let mut instances = Vec::with_capacity(sentence.relations.len());
    for relation in &sentence.relations {
        let labels = bio_encode(&tokens, relation, &sentence.sentence_id, warnings)?;
        let ind_range = align_span(&tokens, &relation.indicator, &sentence.sentence_id, warnings)?;
        let mut flags = vec![false; tokens.len()];
        for idx in ind_range {
            flags[idx] = true;
        }
        instances.push(Instance {
            tokens: tokens.clone(),
            labels,
            indicator_flags: flags,
            source: InstanceSource {
                report_id: sentence.report_id.clone(),
                sentence_id: sentence.sentence_id.clone(),
                indicator: Some(relation.indicator.clone()),
            },
        });
    }
    Ok(instances)
}

/// Build the single indicator-task instance for a sentence: every relation's
/// indicator is labeled `B-INDICATOR`/`I-INDICATOR`, all flags zero.
pub fn indicator_instance(
    sentence: &AnnotatedSentence,
    tokenizer: &dyn Tokenizer,
    warnings: &mut AlignmentWarnings,
) -> Result<Instance, PreprocessError> {
    let tokens = tokenizer.tokenize(&sentence.text);
    let mut labels = vec![TagLabel::Outside; tokens.len()];
    for relation in &sentence.relations {
        let range = align_span(&tokens, &relation.indicator, &sentence.sentence_id, warnings)?;
        for (pos, idx) in range.enumerate() {
            labels[idx] = if pos == 0 {
                TagLabel::BeginIndicator
            } else {
                TagLabel::InsideIndicator
            };
        }
    }
    Ok(Instance {
        indicator_flags: vec![false; tokens.len()],
        labels,
        tokens,
        source: InstanceSource {
            report_id: sentence.report_id.clone(),
            sentence_id: sentence.sentence_id.clone(),
            indicator: None,
        },
    })
}

/// Write instances in the two-column debug format: a `#indicator=<start>,<end>`
/// line, then one `token<TAB>label` line per token, blank line after each
/// instance.
pub fn write_instances<W: Write>(instances: &[Instance], mut w: W) -> std::io::Result<()> {
    for inst in instances {
        match &inst.source.indicator {
            Some(span) => writeln!(w, "#indicator={},{}", span.start, span.end)?,
            None => writeln!(w, "#indicator=,")?,
        }
        for (tok, label) in inst.tokens.iter().zip(&inst.labels) {
            writeln!(w, "{}\t{}", tok.text, label)?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Read instances from the two-column format. Token offsets are rebuilt by
/// joining tokens with single spaces; flags come from the header span when
/// it matches the rebuilt offsets, otherwise from `INDICATOR` labels.
pub fn read_instances<R: Read>(reader: R) -> Result<Vec<Instance>, PreprocessError> {
    let reader = BufReader::new(reader);
    let mut instances = Vec::new();
    let mut header: Option<(Option<usize>, Option<usize>)> = None;
    let mut rows: Vec<(String, TagLabel)> = Vec::new();
    let mut instance_idx = 0usize;

    let finish = |header: &mut Option<(Option<usize>, Option<usize>)>,
                      rows: &mut Vec<(String, TagLabel)>,
                      instances: &mut Vec<Instance>,
                      instance_idx: &mut usize| {
        if rows.is_empty() {
            *header = None;
            return;
        }
        let mut tokens = Vec::with_capacity(rows.len());
        let mut labels = Vec::with_capacity(rows.len());
        let mut offset = 0usize;
        let mut text = String::new();
        for (i, (tok, label)) in rows.iter().enumerate() {
            if i > 0 {
                text.push(' ');
                offset += 1;
            }
            let len = char_len(tok);
            tokens.push(Token {
                text: tok.clone(),
                start: offset,
                end: offset + len,
            });
            text.push_str(tok);
            offset += len;
            labels.push(*label);
        }
        let indicator = match header.take() {
            Some((Some(s), Some(e))) => Span::over(&text, s, e),
            _ => None,
        };
        let flags: Vec<bool> = match &indicator {
            Some(span) => tokens
                .iter()
                .map(|t| t.start < span.end && span.start < t.end)
                .collect(),
            None => labels.iter().map(|l| *l == TagLabel::Indicator).collect(),
        };
        instances.push(Instance {
            tokens,
            labels,
            indicator_flags: flags,
            source: InstanceSource {
                report_id: String::new(),
                sentence_id: format!("instance-{instance_idx}"),
                indicator,
            },
        });
        *instance_idx += 1;
        rows.clear();
    };

    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| PreprocessError::Parse {
            line: lineno + 1,
            message: e.to_string(),
        })?;
        if line.is_empty() {
            finish(&mut header, &mut rows, &mut instances, &mut instance_idx);
            continue;
        }
        if let Some(rest) = line.strip_prefix("#indicator=") {
            let mut parts = rest.splitn(2, ',');
            let s = parts.next().unwrap_or("").trim();
            let e = parts.next().unwrap_or("").trim();
            header = Some((s.parse().ok(), e.parse().ok()));
            continue;
        }
        let mut cols = line.splitn(2, '\t');
        let tok = cols.next().unwrap_or("");
        let label = cols.next().ok_or_else(|| PreprocessError::Parse {
            line: lineno + 1,
            message: "missing tab separator".to_string(),
        })?;
        let label = TagLabel::from_str(label).map_err(|e| PreprocessError::Parse {
            line: lineno + 1,
            message: e,
        })?;
        rows.push((tok.to_string(), label));
    }
    finish(&mut header, &mut rows, &mut instances, &mut instance_idx);
    Ok(instances)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::read_corpus;

    fn tok_texts(tokens: &[Token]) -> Vec<&str> {
        tokens.iter().map(|t| t.text.as_str()).collect()
    }

    #[test]
    fn tokenize_plain_sentence() {
        let tokens = tokenize("Minimal degenerative changes of the thoracic spine");
        assert_eq!(tokens.len(), 7);
        assert_eq!(
            tok_texts(&tokens),
            vec!["Minimal", "degenerative", "changes", "of", "the", "thoracic", "spine"]
        );
    }

    #[test]
    fn tokenize_empty() {
        assert!(tokenize("").is_empty());
        assert!(tokenize("   ").is_empty());
    }

    #[test]
    fn tokenize_detaches_punctuation() {
        let tokens = tokenize("opacities.");
        assert_eq!(tokens.len(), 2);
        assert_eq!(tokens[0], Token { text: "opacities".into(), start: 0, end: 9 });
        assert_eq!(tokens[1], Token { text: ".".into(), start: 9, end: 10 });

        let tokens = tokenize("(see note):");
        assert_eq!(tok_texts(&tokens), vec!["(", "see", "note", ")", ":"]);
    }

    #[test]
    fn tokenize_offsets_reconstruct_text() {
        let text = "Low lung volumes, with bibasilar opacities.";
        for tok in tokenize(text) {
            assert_eq!(
                crate::corpus::slice_chars(text, tok.start, tok.end),
                Some(tok.text.as_str())
            );
        }
    }

    #[test]
    fn split_two_sentences() {
        let got = split_sentences("No pneumothorax. Heart size is normal.");
        assert_eq!(got.len(), 2);
        assert_eq!(got[0].text, "No pneumothorax.");
        assert_eq!(got[1].text, "Heart size is normal.");
        assert_eq!(got[1].start, 17);
    }

    #[test]
    fn split_without_terminal() {
        let got = split_sentences("no acute cardiopulmonary abnormality");
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].start, 0);
    }

    #[test]
    fn split_ignores_abbreviations() {
        let got = split_sentences("Seen by Dr. Smith at 9 a.m. today. No change since prior.");
        assert_eq!(got.len(), 2);
        assert_eq!(got[0].text, "Seen by Dr. Smith at 9 a.m. today.");
        assert!(got[1].text.starts_with("No change"));
    }

    #[test]
    fn split_three_sentence_report_offsets() {
        let s1 = "There are irregular opacities in the left lung apex.";
        let s2 = "Probably scarring in the left apex.";
        let s3 = "Heart size is normal.";
        let report = format!("{s1} {s2}  {s3}");
        let got = split_sentences(&report);
        assert_eq!(got.len(), 3);
        assert_eq!(got[0].text, s1);
        assert_eq!(got[0].start, 0);
        assert_eq!(got[1].text, s2);
        assert_eq!(got[1].start, char_len(s1) + 1);
        assert_eq!(got[2].text, s3);
        assert_eq!(got[2].start, char_len(s1) + 1 + char_len(s2) + 2);
    }

    fn example_sentence() -> AnnotatedSentence {
        // "Minimal degenerative changes of the thoracic spine"
        let text = "Minimal degenerative changes of the thoracic spine";
        let span = |s: usize, e: usize| Span::over(text, s, e).unwrap();
        AnnotatedSentence {
            report_id: "r1".into(),
            sentence_id: "s1".into(),
            text: text.into(),
            relations: vec![SpatialRelation {
                indicator: span(29, 31),
                trajectors: vec![span(0, 28)],
                landmarks: vec![span(36, 50)],
                diagnoses: vec![],
                hedges: vec![],
            }],
        }
    }

    #[test]
    fn bio_encode_tagged_example() {
        let sentence = example_sentence();
        let tokens = tokenize(&sentence.text);
        let mut warnings = AlignmentWarnings::default();
        let labels =
            bio_encode(&tokens, &sentence.relations[0], "s1", &mut warnings).unwrap();
        use RoleLabel::*;
        use TagLabel::*;
        assert_eq!(
            labels,
            vec![
                Begin(Trajector),
                Inside(Trajector),
                Inside(Trajector),
                Indicator,
                Outside,
                Begin(Landmark),
                Inside(Landmark),
            ]
        );
        assert_eq!(warnings.snapped, 0);
    }

    #[test]
    fn bio_encode_empty_roles() {
        let text = "opacities in the base";
        let sentence = AnnotatedSentence {
            report_id: "r".into(),
            sentence_id: "s".into(),
            text: text.into(),
            relations: vec![SpatialRelation::new(Span::over(text, 10, 12).unwrap())],
        };
        let tokens = tokenize(text);
        let mut w = AlignmentWarnings::default();
        let labels = bio_encode(&tokens, &sentence.relations[0], "s", &mut w).unwrap();
        assert_eq!(
            labels,
            vec![TagLabel::Outside, TagLabel::Indicator, TagLabel::Outside, TagLabel::Outside]
        );
    }

    #[test]
    fn bio_encode_two_diagnosis_segments() {
        // Two diagnosis spans separated by "or".
        let text = "opacities seen between the ribs which may represent pleural reaction or small pulmonary nodules";
        let span = |s: &str, text: &str| {
            let start = text.find(s).unwrap();
            Span::over(text, start, start + s.len()).unwrap()
        };
        let rel = SpatialRelation {
            indicator: span("between", text),
            trajectors: vec![span("opacities", text)],
            landmarks: vec![span("the ribs", text)],
            diagnoses: vec![span("pleural reaction", text), span("small pulmonary nodules", text)],
            hedges: vec![span("may represent", text)],
        };
        let tokens = tokenize(text);
        let mut w = AlignmentWarnings::default();
        let labels = bio_encode(&tokens, &rel, "s", &mut w).unwrap();
        let n_begin_diag = labels
            .iter()
            .filter(|l| **l == TagLabel::Begin(RoleLabel::Diagnosis))
            .count();
        assert_eq!(n_begin_diag, 2);
        let decoded = bio_decode(text, &tokens, &labels);
        assert_eq!(decoded.diagnoses.len(), 2);
        assert_eq!(decoded.diagnoses[0].text, "pleural reaction");
        assert_eq!(decoded.diagnoses[1].text, "small pulmonary nodules");
    }

    #[test]
    fn bio_encode_rejects_overlapping_roles() {
        let text = "scarring in the left apex";
        let rel = SpatialRelation {
            indicator: Span::over(text, 9, 11).unwrap(),
            trajectors: vec![Span::over(text, 0, 8).unwrap()],
            landmarks: vec![Span::over(text, 0, 8).unwrap()],
            diagnoses: vec![],
            hedges: vec![],
        };
        let tokens = tokenize(text);
        let mut w = AlignmentWarnings::default();
        let err = bio_encode(&tokens, &rel, "s", &mut w).unwrap_err();
        assert!(matches!(err, PreprocessError::OverlappingRoles { .. }));
    }

    #[test]
    fn alignment_snaps_outward() {
        let text = "opacities in the base";
        let tokens = tokenize(text);
        let mut w = AlignmentWarnings::default();
        // "pacities" starts inside the first token.
        let span = Span::over(text, 1, 9).unwrap();
        let range = align_span(&tokens, &span, "s", &mut w).unwrap();
        assert_eq!(range, 0..1);
        assert_eq!(w.snapped, 1);
    }

    #[test]
    fn alignment_error_when_no_token_overlaps() {
        let text = "a  b";
        // Span over the whitespace between tokens.
        let tokens = tokenize(text);
        let span = Span {
            start: 1,
            end: 2,
            text: " ".into(),
        };
        let mut w = AlignmentWarnings::default();
        let err = align_span(&tokens, &span, "s", &mut w).unwrap_err();
        assert!(matches!(err, PreprocessError::SpanAlignment { .. }));
    }

    #[test]
    fn bio_decode_repairs_dangling_inside() {
        let text = "left lung";
        let tokens = tokenize(text);
        let labels = vec![
            TagLabel::Inside(RoleLabel::Landmark),
            TagLabel::Inside(RoleLabel::Landmark),
        ];
        let decoded = bio_decode(text, &tokens, &labels);
        assert_eq!(decoded.landmarks.len(), 1);
        assert_eq!(decoded.landmarks[0].text, "left lung");
    }

    #[test]
    fn bio_decode_all_outside() {
        let text = "no acute disease";
        let tokens = tokenize(text);
        let labels = vec![TagLabel::Outside; tokens.len()];
        let decoded = bio_decode(text, &tokens, &labels);
        assert_eq!(decoded, DecodedSpans::default());
    }

    #[test]
    fn bio_round_trip() {
        let sentence = example_sentence();
        let tokens = tokenize(&sentence.text);
        let mut w = AlignmentWarnings::default();
        let rel = &sentence.relations[0];
        let labels = bio_encode(&tokens, rel, "s1", &mut w).unwrap();
        let decoded = bio_decode(&sentence.text, &tokens, &labels);
        assert_eq!(decoded.trajectors, rel.trajectors);
        assert_eq!(decoded.landmarks, rel.landmarks);
        assert_eq!(decoded.indicators, vec![rel.indicator.clone()]);
    }

    #[test]
    fn expand_shared_phrase_two_indicators() {
        // Two indicators; "right lung apex" is landmark for the first and
        // trajector for the second.
        let text = "There is scarring in the right lung apex near the clavicle";
        let span = |s: usize, e: usize| Span::over(text, s, e).unwrap();
        let sentence = AnnotatedSentence {
            report_id: "r".into(),
            sentence_id: "s".into(),
            text: text.into(),
            relations: vec![
                SpatialRelation {
                    indicator: span(18, 20),
                    trajectors: vec![span(9, 17)],
                    landmarks: vec![span(25, 40)],
                    diagnoses: vec![],
                    hedges: vec![],
                },
                SpatialRelation {
                    indicator: span(41, 45),
                    trajectors: vec![span(25, 40)],
                    landmarks: vec![span(50, 58)],
                    diagnoses: vec![],
                    hedges: vec![],
                },
            ],
        };
        let mut w = AlignmentWarnings::default();
        let instances = expand_instances(&sentence, &RuleTokenizer, &mut w).unwrap();
        assert_eq!(instances.len(), 2);
        let phrase_token = instances[0]
            .tokens
            .iter()
            .position(|t| t.text == "right")
            .unwrap();
        assert_eq!(
            instances[0].labels[phrase_token],
            TagLabel::Begin(RoleLabel::Landmark)
        );
        assert_eq!(
            instances[1].labels[phrase_token],
            TagLabel::Begin(RoleLabel::Trajector)
        );
        // Flags mark each instance's own indicator only.
        let in_idx = instances[0].tokens.iter().position(|t| t.text == "in").unwrap();
        let near_idx = instances[0].tokens.iter().position(|t| t.text == "near").unwrap();
        assert!(instances[0].indicator_flags[in_idx]);
        assert!(!instances[0].indicator_flags[near_idx]);
        assert!(instances[1].indicator_flags[near_idx]);
        // The other relation's indicator is O in this instance.
        assert_eq!(instances[0].labels[near_idx], TagLabel::Outside);
    }

    #[test]
    fn expand_no_relations() {
        let sentence = AnnotatedSentence {
            report_id: "r".into(),
            sentence_id: "s".into(),
            text: "Heart size is normal".into(),
            relations: vec![],
        };
        let mut w = AlignmentWarnings::default();
        let instances = expand_instances(&sentence, &RuleTokenizer, &mut w).unwrap();
        assert!(instances.is_empty());
    }

    #[test]
    fn expansion_count_equals_relation_count() {
        let data = concat!(
            r#"{"report_id": "r1", "sentence_id": "s1", "text": "scarring in the apex near the clavicle", "relations": [{"indicator": {"start": 9, "end": 11}}, {"indicator": {"start": 21, "end": 25}}]}"#,
            "\n",
            r#"{"report_id": "r1", "sentence_id": "s2", "text": "clear lungs", "relations": []}"#,
            "\n"
        );
        let corpus = read_corpus(data.as_bytes()).unwrap();
        let mut w = AlignmentWarnings::default();
        let mut total = 0;
        for s in &corpus.sentences {
            total += expand_instances(s, &RuleTokenizer, &mut w).unwrap().len();
        }
        assert_eq!(total, corpus.n_relations());
        assert_eq!(total, 2);
    }

    #[test]
    fn indicator_instance_marks_all_indicators() {
        let text = "scarring in the apex near the clavicle";
        let sentence = AnnotatedSentence {
            report_id: "r".into(),
            sentence_id: "s".into(),
            text: text.into(),
            relations: vec![
                SpatialRelation::new(Span::over(text, 9, 11).unwrap()),
                SpatialRelation::new(Span::over(text, 21, 25).unwrap()),
            ],
        };
        let mut w = AlignmentWarnings::default();
        let inst = indicator_instance(&sentence, &RuleTokenizer, &mut w).unwrap();
        let n_begin = inst
            .labels
            .iter()
            .filter(|l| **l == TagLabel::BeginIndicator)
            .count();
        assert_eq!(n_begin, 2);
        assert!(inst.indicator_flags.iter().all(|f| !f));
    }

    #[test]
    fn two_column_round_trip() {
        let sentence = example_sentence();
        let mut w = AlignmentWarnings::default();
        let instances = expand_instances(&sentence, &RuleTokenizer, &mut w).unwrap();
        let mut buf = Vec::new();
        write_instances(&instances, &mut buf).unwrap();
        let back = read_instances(buf.as_slice()).unwrap();
        assert_eq!(back.len(), 1);
        assert_eq!(back[0].labels, instances[0].labels);
        assert_eq!(back[0].indicator_flags, instances[0].indicator_flags);
        assert_eq!(
            tok_texts(&back[0].tokens),
            tok_texts(&instances[0].tokens)
        );
    }

    #[test]
    fn tag_set_sizes() {
        assert_eq!(TagSet::for_task(Task::Roles).len(), 10);
        assert_eq!(TagSet::for_task(Task::Indicator).len(), 3);
        let ts = TagSet::for_task(Task::Roles);
        assert_eq!(ts.label(0), TagLabel::Outside);
        assert_eq!(ts.index(TagLabel::Indicator), Some(1));
    }

    #[test]
    fn tag_label_display_parse_round_trip() {
        let ts = TagSet::for_task(Task::Roles);
        for &l in ts.labels() {
            assert_eq!(TagLabel::from_str(&l.to_string()).unwrap(), l);
        }
        let ts = TagSet::for_task(Task::Indicator);
        for &l in ts.labels() {
            assert_eq!(TagLabel::from_str(&l.to_string()).unwrap(), l);
        }
    }
}
