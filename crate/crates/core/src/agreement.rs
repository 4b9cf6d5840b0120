//! Annotator-agreement metrics: Cohen's kappa over indicator decisions and
//! pairwise exact-match F1 per spatial role.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::corpus::{relations_by_sentence, Corpus, PrepositionLexicon, RoleLabel};
use crate::preprocess::Tokenizer;

#[derive(Debug, thiserror::Error)]
pub enum AgreementError {
    #[error("decision lists have different lengths ({a} vs {b})")]
    LengthMismatch { a: usize, b: usize },
    #[error("empty decision lists")]
    Empty,
    #[error("corpora annotate different sentences: {details}")]
    SentenceSetMismatch { details: String },
}

/// Cohen's kappa over two equal-length lists of binary decisions:
/// `(p_o - p_e) / (1 - p_e)`. When chance agreement is 1 (both annotators
/// constant with the same value) the lists are identical and kappa is 1.
pub fn cohen_kappa(a: &[bool], b: &[bool]) -> Result<f64, AgreementError> {
    if a.len() != b.len() {
        return Err(AgreementError::LengthMismatch { a: a.len(), b: b.len() });
    }
    if a.is_empty() {
        return Err(AgreementError::Empty);
    }
    let n = a.len() as f64;
    let observed = a.iter().zip(b).filter(|(x, y)| x == y).count() as f64 / n;
    let a_yes = a.iter().filter(|x| **x).count() as f64 / n;
    let b_yes = b.iter().filter(|x| **x).count() as f64 / n;
    let expected = a_yes * b_yes + (1.0 - a_yes) * (1.0 - b_yes);
    if (1.0 - expected).abs() < 1e-12 {
        return Ok(1.0);
    }
    Ok((observed - expected) / (1.0 - expected))
}

fn check_same_sentences(a: &Corpus, b: &Corpus) -> Result<(), AgreementError> {
    let keys_a: BTreeSet<_> = a.sentences.iter().map(|s| s.key()).collect();
    let keys_b: BTreeSet<_> = b.sentences.iter().map(|s| s.key()).collect();
    if keys_a != keys_b {
        let only_a = keys_a.difference(&keys_b).count();
        let only_b = keys_b.difference(&keys_a).count();
        return Err(AgreementError::SentenceSetMismatch {
            details: format!("{only_a} sentences only in A, {only_b} only in B"),
        });
    }
    Ok(())
}

/// Exact-match F1 between two annotations of the same sentences for one
/// role, with A as gold and B as prediction. Spans match when their
/// character boundaries are identical within the same sentence. Two empty
/// annotation sets agree perfectly (F1 = 1).
pub fn pairwise_role_f1(a: &Corpus, b: &Corpus, role: RoleLabel) -> Result<f64, AgreementError> {
    check_same_sentences(a, b)?;
    let by_key_b = relations_by_sentence(b);
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fn_ = 0usize;
    for sent_a in &a.sentences {
        let sent_b = by_key_b[&sent_a.key()];
        let spans = |s: &crate::corpus::AnnotatedSentence| -> BTreeSet<(usize, usize)> {
            s.relations
                .iter()
                .flat_map(|r| r.role_spans(role))
                .map(|sp| (sp.start, sp.end))
                .collect()
        };
        let gold = spans(sent_a);
        let pred = spans(sent_b);
        tp += gold.intersection(&pred).count();
        fn_ += gold.difference(&pred).count();
        fp += pred.difference(&gold).count();
    }
    if tp + fp + fn_ == 0 {
        return Ok(1.0);
    }
    let p = if tp + fp > 0 { tp as f64 / (tp + fp) as f64 } else { 0.0 };
    let r = if tp + fn_ > 0 { tp as f64 / (tp + fn_) as f64 } else { 0.0 };
    if p + r == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * p * r / (p + r))
}

/// Binary decisions over the candidate set: for every token of every
/// sentence (sorted by sentence key) whose lowercase form is in the
/// preposition lexicon, whether it lies inside some indicator span.
pub fn indicator_decisions(
    corpus: &Corpus,
    lexicon: &PrepositionLexicon,
    tokenizer: &dyn Tokenizer,
) -> Vec<bool> {
    let by_key = relations_by_sentence(corpus);
    let mut decisions = Vec::new();
    for sentence in by_key.values() {
        for token in tokenizer.tokenize(&sentence.text) {
            if !lexicon.contains(&token.text.to_lowercase()) {
                continue;
            }
            let is_indicator = sentence.relations.iter().any(|r| {
                token.start < r.indicator.end && r.indicator.start < token.end
            });
            decisions.push(is_indicator);
        }
    }
    decisions
}

/// Agreement summary: kappa for the indicator decision, exact-match F1 per
/// role.
#[derive(Debug, Clone, Serialize)]
pub struct AgreementReport {
    pub kappa_indicator: f64,
    pub f1_trajector: f64,
    pub f1_landmark: f64,
    pub f1_diagnosis: f64,
    pub f1_hedge: f64,
}

impl AgreementReport {
    pub fn role_f1(&self, role: RoleLabel) -> f64 {
        match role {
            RoleLabel::Trajector => self.f1_trajector,
            RoleLabel::Landmark => self.f1_landmark,
            RoleLabel::Diagnosis => self.f1_diagnosis,
            RoleLabel::Hedge => self.f1_hedge,
        }
    }

    /// Single-row table: kappa plus overall F1 per role.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<22} {:>10} {:>10} {:>10} {:>10}\n",
            "Kappa (Spatial Indicator)", "Trajector", "Landmark", "Diagnosis", "Hedge"
        ));
        out.push_str(&format!(
            "{:<22} {:>10.2} {:>10.2} {:>10.2} {:>10.2}\n",
            format!("{:.2}", self.kappa_indicator),
            self.f1_trajector,
            self.f1_landmark,
            self.f1_diagnosis,
            self.f1_hedge,
        ));
        out
    }
}

/// Compute the full agreement report between two annotations of the same
/// sentence set.
pub fn agreement_report(
    a: &Corpus,
    b: &Corpus,
    lexicon: &PrepositionLexicon,
    tokenizer: &dyn Tokenizer,
) -> Result<AgreementReport, AgreementError> {
    check_same_sentences(a, b)?;
    let da = indicator_decisions(a, lexicon, tokenizer);
    let db = indicator_decisions(b, lexicon, tokenizer);
    Ok(AgreementReport {
        kappa_indicator: cohen_kappa(&da, &db)?,
        f1_trajector: pairwise_role_f1(a, b, RoleLabel::Trajector)?,
        f1_landmark: pairwise_role_f1(a, b, RoleLabel::Landmark)?,
        f1_diagnosis: pairwise_role_f1(a, b, RoleLabel::Diagnosis)?,
        f1_hedge: pairwise_role_f1(a, b, RoleLabel::Hedge)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{read_corpus, AnnotatedSentence, Span, SpatialRelation};
    use crate::preprocess::RuleTokenizer;

    #[test]
    fn kappa_perfect_agreement() {
        let a = [true, false, true, false];
        assert_eq!(cohen_kappa(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn kappa_chance_level() {
        // p_o = 0.5, p_e = 0.5
        let a = [true, true, false, false];
        let b = [true, false, true, false];
        assert!((cohen_kappa(&a, &b).unwrap() - 0.0).abs() < 1e-12);
    }

    #[test]
    fn kappa_half() {
        // p_o = 0.75, p_e = 0.5
        let a = [true, true, true, false];
        let b = [true, true, false, false];
        assert!((cohen_kappa(&a, &b).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn kappa_symmetric() {
        let a = [true, true, false, true, false, false];
        let b = [true, false, false, true, true, false];
        assert_eq!(cohen_kappa(&a, &b).unwrap(), cohen_kappa(&b, &a).unwrap());
    }

    #[test]
    fn kappa_degenerate_identical() {
        let a = [true, true, true];
        assert_eq!(cohen_kappa(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn kappa_errors() {
        assert!(matches!(
            cohen_kappa(&[true], &[true, false]),
            Err(AgreementError::LengthMismatch { .. })
        ));
        assert!(matches!(cohen_kappa(&[], &[]), Err(AgreementError::Empty)));
    }

    fn corpus_with_trajectors(spans: &[(usize, usize)]) -> Corpus {
        let text = "mild streaky opacities seen in the left lung base today";
        let mut rel = SpatialRelation::new(Span::over(text, 28, 30).unwrap());
        for &(s, e) in spans {
            rel.trajectors.push(Span::over(text, s, e).unwrap());
        }
        Corpus::from_sentences(vec![AnnotatedSentence {
            report_id: "r".into(),
            sentence_id: "s".into(),
            text: text.into(),
            relations: vec![rel],
        }])
        .unwrap()
    }

    #[test]
    fn role_f1_identical() {
        let a = corpus_with_trajectors(&[(0, 4), (5, 12)]);
        assert_eq!(pairwise_role_f1(&a, &a, RoleLabel::Trajector).unwrap(), 1.0);
    }

    #[test]
    fn role_f1_one_spurious() {
        // A has 2 spans, B the same 2 plus one spurious: P=2/3, R=1, F1=0.8.
        let a = corpus_with_trajectors(&[(0, 4), (5, 12)]);
        let b = corpus_with_trajectors(&[(0, 4), (5, 12), (13, 22)]);
        let f1 = pairwise_role_f1(&a, &b, RoleLabel::Trajector).unwrap();
        assert!((f1 - 0.8).abs() < 1e-12);
        // Symmetric under swapping gold/pred.
        let f1_swapped = pairwise_role_f1(&b, &a, RoleLabel::Trajector).unwrap();
        assert!((f1 - f1_swapped).abs() < 1e-12);
    }

    #[test]
    fn role_f1_shifted_spans() {
        let a = corpus_with_trajectors(&[(0, 4), (5, 12)]);
        let b = corpus_with_trajectors(&[(1, 5), (6, 13)]);
        assert_eq!(pairwise_role_f1(&a, &b, RoleLabel::Trajector).unwrap(), 0.0);
    }

    #[test]
    fn role_f1_both_empty_is_one() {
        let a = corpus_with_trajectors(&[]);
        assert_eq!(pairwise_role_f1(&a, &a, RoleLabel::Diagnosis).unwrap(), 1.0);
    }

    #[test]
    fn role_f1_rejects_different_sentences() {
        let a = corpus_with_trajectors(&[(0, 4)]);
        let mut b = a.clone();
        b.sentences[0].sentence_id = "other".into();
        assert!(matches!(
            pairwise_role_f1(&a, &b, RoleLabel::Trajector),
            Err(AgreementError::SentenceSetMismatch { .. })
        ));
    }

    #[test]
    fn decisions_cover_lexicon_tokens_only() {
        let line = r#"{"report_id": "r1", "sentence_id": "s1", "text": "opacities seen in the base with scarring", "relations": [{"indicator": {"start": 15, "end": 17}}]}"#;
        let corpus = read_corpus(line.as_bytes()).unwrap();
        let decisions =
            indicator_decisions(&corpus, &PrepositionLexicon::default(), &RuleTokenizer);
        // Candidates: "in" (indicator) and "with" (not an indicator).
        assert_eq!(decisions, vec![true, false]);
    }

    #[test]
    fn report_identical_corpora() {
        let a = corpus_with_trajectors(&[(0, 4)]);
        let report =
            agreement_report(&a, &a, &PrepositionLexicon::default(), &RuleTokenizer).unwrap();
        assert_eq!(report.kappa_indicator, 1.0);
        for role in RoleLabel::ALL {
            assert_eq!(report.role_f1(role), 1.0);
        }
    }
}
