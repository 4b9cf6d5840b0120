//! Deterministic synthetic-corpus generation from a template grammar.
//!
//! Templates are element sequences; an element is either a literal or a slot
//! filled from a named lexicon, optionally tagged with the roles it plays in
//! one or more relations of the sentence. Adjacent elements tagged with the
//! same (relation, role) merge into a single span, so a descriptor plus a
//! finding become one trajector phrase. The generator keeps its own tally of
//! everything it emits, which serves as an exact oracle for corpus
//! statistics.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Read;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{AnnotatedSentence, Corpus, CorpusStats, RoleLabel, Span, SpatialRelation};
use crate::seed;

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("grammar parse error: {0}")]
    Parse(String),
    #[error("template {template} references unknown lexicon {name:?}")]
    UnknownLexicon { template: usize, name: String },
    #[error("template {template} must mark exactly one indicator run for relation {relation}")]
    BadIndicator { template: usize, relation: usize },
    #[error("invalid grammar: {0}")]
    Invalid(String),
}

/// What an element contributes to relation `rel`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleTag {
    pub rel: usize,
    pub role: SlotRole,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SlotRole {
    Indicator,
    Trajector,
    Landmark,
    Diagnosis,
    Hedge,
}

impl SlotRole {
    fn as_role(self) -> Option<RoleLabel> {
        match self {
            SlotRole::Indicator => None,
            SlotRole::Trajector => Some(RoleLabel::Trajector),
            SlotRole::Landmark => Some(RoleLabel::Landmark),
            SlotRole::Diagnosis => Some(RoleLabel::Diagnosis),
            SlotRole::Hedge => Some(RoleLabel::Hedge),
        }
    }
}

/// One template element: fixed text or a lexicon slot, plus role tags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Element {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lit: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slot: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub roles: Vec<RoleTag>,
}

impl Element {
    fn lit(text: &str) -> Element {
        Element {
            lit: Some(text.to_string()),
            slot: None,
            roles: Vec::new(),
        }
    }

    fn slot(name: &str, roles: &[(usize, SlotRole)]) -> Element {
        Element {
            lit: None,
            slot: Some(name.to_string()),
            roles: roles.iter().map(|&(rel, role)| RoleTag { rel, role }).collect(),
        }
    }
}

/// A weighted sentence pattern. A terminal period is appended on emission.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Template {
    pub weight: f64,
    pub elements: Vec<Element>,
}

impl Template {
    fn n_relations(&self) -> usize {
        self.elements
            .iter()
            .flat_map(|e| &e.roles)
            .map(|t| t.rel + 1)
            .max()
            .unwrap_or(0)
    }
}

/// Slot lexicons plus weighted templates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grammar {
    pub lexicons: BTreeMap<String, Vec<String>>,
    pub templates: Vec<Template>,
}

impl Grammar {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.templates.is_empty() {
            return Err(SynthError::Invalid("no templates".to_string()));
        }
        for (name, entries) in &self.lexicons {
            if entries.is_empty() {
                return Err(SynthError::Invalid(format!("lexicon {name:?} is empty")));
            }
        }
        for (ti, template) in self.templates.iter().enumerate() {
            if !(template.weight > 0.0) {
                return Err(SynthError::Invalid(format!(
                    "template {ti} has non-positive weight"
                )));
            }
            for e in &template.elements {
                match (&e.lit, &e.slot) {
                    (Some(_), None) => {}
                    (None, Some(name)) => {
                        if !self.lexicons.contains_key(name) {
                            return Err(SynthError::UnknownLexicon {
                                template: ti,
                                name: name.clone(),
                            });
                        }
                    }
                    _ => {
                        return Err(SynthError::Invalid(format!(
                            "template {ti}: element must have exactly one of lit/slot"
                        )))
                    }
                }
            }
            for rel in 0..template.n_relations() {
                let marked: Vec<usize> = template
                    .elements
                    .iter()
                    .enumerate()
                    .filter(|(_, e)| {
                        e.roles
                            .iter()
                            .any(|t| t.rel == rel && t.role == SlotRole::Indicator)
                    })
                    .map(|(i, _)| i)
                    .collect();
                let one_run = !marked.is_empty()
                    && marked.windows(2).all(|w| w[1] == w[0] + 1);
                if !one_run {
                    return Err(SynthError::BadIndicator {
                        template: ti,
                        relation: rel,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn read<R: Read>(reader: R) -> Result<Grammar, SynthError> {
        let grammar: Grammar =
            serde_json::from_reader(reader).map_err(|e| SynthError::Parse(e.to_string()))?;
        grammar.validate()?;
        Ok(grammar)
    }

    pub fn load(path: &Path) -> Result<Grammar, SynthError> {
        Grammar::read(File::open(path)?)
    }
}

/// Built-in grammar. Slot terms follow common chest X-ray phrasing:
/// findings with descriptors located at anatomy, optionally hedged toward
/// one or two diagnoses, plus chained two-indicator sentences where one
/// anatomy phrase is landmark of the first relation and trajector of the
/// second.
pub fn default_grammar() -> Grammar {
    use SlotRole::*;
    let lex = |entries: &[&str]| entries.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    let mut lexicons = BTreeMap::new();
    lexicons.insert(
        "DESCRIPTOR".to_string(),
        lex(&[
            "Mild streaky",
            "Minimal",
            "Stable",
            "Irregular",
            "Patchy",
            "Small",
            "Stable peripheral",
        ]),
    );
    lexicons.insert(
        "FINDING".to_string(),
        lex(&[
            "opacities",
            "scarring",
            "atelectasis",
            "degenerative changes",
            "emphysematous changes",
            "calcified granulomas",
            "pleural thickening",
        ]),
    );
    lexicons.insert(
        "ANATOMY".to_string(),
        lex(&[
            "left lung base",
            "right lung apex",
            "left apex",
            "thoracic spine",
            "right upper lobe",
            "left lower lobe",
            "right hemidiaphragm",
        ]),
    );
    lexicons.insert(
        "DIAGNOSIS".to_string(),
        lex(&[
            "pleural reaction",
            "small pulmonary nodules",
            "pneumonia",
            "bronchovascular crowding",
            "a cavitary lesion",
            "granulomatous disease",
        ]),
    );
    lexicons.insert(
        "HEDGE".to_string(),
        lex(&["may represent", "could represent", "may reflect", "possibly reflecting"]),
    );
    lexicons.insert(
        "VERB".to_string(),
        lex(&["are seen", "are present", "are noted"]),
    );
    lexicons.insert(
        "PREP".to_string(),
        lex(&["in", "within", "at", "near", "on", "around"]),
    );

    let templates = vec![
        // Trajector/landmark with a verb: "Mild streaky opacities are seen in the left lung base."
        Template {
            weight: 0.55,
            elements: vec![
                Element::slot("DESCRIPTOR", &[(0, Trajector)]),
                Element::slot("FINDING", &[(0, Trajector)]),
                Element::slot("VERB", &[]),
                Element::slot("PREP", &[(0, Indicator)]),
                Element::lit("the"),
                Element::slot("ANATOMY", &[(0, Landmark)]),
            ],
        },
        // Bare noun phrase: "Minimal degenerative changes of the thoracic spine."
        Template {
            weight: 0.25,
            elements: vec![
                Element::slot("DESCRIPTOR", &[(0, Trajector)]),
                Element::slot("FINDING", &[(0, Trajector)]),
                Element {
                    lit: Some("of".to_string()),
                    slot: None,
                    roles: vec![RoleTag { rel: 0, role: Indicator }],
                },
                Element::lit("the"),
                Element::slot("ANATOMY", &[(0, Landmark)]),
            ],
        },
        // All four roles: "... which may represent pneumonia."
        Template {
            weight: 0.075,
            elements: vec![
                Element::slot("DESCRIPTOR", &[(0, Trajector)]),
                Element::slot("FINDING", &[(0, Trajector)]),
                Element::slot("VERB", &[]),
                Element::slot("PREP", &[(0, Indicator)]),
                Element::lit("the"),
                Element::slot("ANATOMY", &[(0, Landmark)]),
                Element::lit("which"),
                Element::slot("HEDGE", &[(0, Hedge)]),
                Element::slot("DIAGNOSIS", &[(0, Diagnosis)]),
            ],
        },
        // Two diagnoses: "... which may represent pleural reaction or pneumonia."
        Template {
            weight: 0.075,
            elements: vec![
                Element::slot("DESCRIPTOR", &[(0, Trajector)]),
                Element::slot("FINDING", &[(0, Trajector)]),
                Element::slot("VERB", &[]),
                Element::slot("PREP", &[(0, Indicator)]),
                Element::lit("the"),
                Element::slot("ANATOMY", &[(0, Landmark)]),
                Element::lit("which"),
                Element::slot("HEDGE", &[(0, Hedge)]),
                Element::slot("DIAGNOSIS", &[(0, Diagnosis)]),
                Element::lit("or"),
                Element::slot("DIAGNOSIS", &[(0, Diagnosis)]),
            ],
        },
        // Chained indicators sharing a phrase: landmark of the first
        // relation doubles as trajector of the second.
        Template {
            weight: 0.05,
            elements: vec![
                Element::lit("There is"),
                Element::slot("FINDING", &[(0, Trajector)]),
                Element::slot("PREP", &[(0, Indicator)]),
                Element::lit("the"),
                Element::slot("ANATOMY", &[(0, Landmark), (1, Trajector)]),
                Element::slot("PREP", &[(1, Indicator)]),
                Element::lit("the"),
                Element::slot("ANATOMY", &[(1, Landmark)]),
            ],
        },
    ];

    let grammar = Grammar { lexicons, templates };
    debug_assert!(grammar.validate().is_ok());
    grammar
}

/// Incremental sentence generator with an exact emission tally.
pub struct Generator<'g> {
    grammar: &'g Grammar,
    rng: ChaCha12Rng,
    cumulative_weights: Vec<f64>,
    counter: usize,
    n_relations: usize,
    n_trajectors: usize,
    n_landmarks: usize,
    n_diagnoses: usize,
    n_hedges: usize,
    n_sentences_with_indicator: usize,
    max_indicators_per_sentence: usize,
    n_rel_traj_land_only: usize,
    n_rel_with_diag_no_hedge: usize,
    n_rel_with_hedge_no_diag: usize,
    n_rel_all_four: usize,
    n_rel_multi_diagnosis: usize,
    max_diagnoses_per_relation: usize,
    total_tokens: usize,
}

impl<'g> Generator<'g> {
    pub fn new(grammar: &'g Grammar, root_seed: u64) -> Generator<'g> {
        let mut cumulative_weights = Vec::with_capacity(grammar.templates.len());
        let mut acc = 0.0;
        for t in &grammar.templates {
            acc += t.weight;
            cumulative_weights.push(acc);
        }
        Generator {
            grammar,
            rng: seed::rng(root_seed, 0x53_59_4e_54),
            cumulative_weights,
            counter: 0,
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
            total_tokens: 0,
        }
    }

    fn pick_template(&mut self) -> &'g Template {
        let total = *self.cumulative_weights.last().unwrap();
        let draw = self.rng.random_range(0.0..total);
        let idx = self
            .cumulative_weights
            .iter()
            .position(|&c| draw < c)
            .unwrap_or(self.grammar.templates.len() - 1);
        &self.grammar.templates[idx]
    }

    /// Emit the next sentence and fold it into the tally.
    pub fn next_sentence(&mut self) -> AnnotatedSentence {
        let template = self.pick_template();
        let n_rels = template.n_relations();

        let mut text = String::new();
        let mut offset = 0usize; // in characters; the text is ASCII here
        let mut words = 0usize;
        // (element index, char start, char end) per element
        let mut ranges: Vec<(usize, usize)> = Vec::with_capacity(template.elements.len());
        for element in &template.elements {
            let piece: &str = match (&element.lit, &element.slot) {
                (Some(lit), None) => lit,
                (None, Some(slot)) => {
                    let entries = &self.grammar.lexicons[slot];
                    &entries[self.rng.random_range(0..entries.len())]
                }
                _ => unreachable!("validated grammar"),
            };
            if !text.is_empty() {
                text.push(' ');
                offset += 1;
            }
            let start = offset;
            text.push_str(piece);
            offset += piece.chars().count();
            ranges.push((start, offset));
            words += piece.split(' ').count();
        }
        text.push('.');
        words += 1;

        // Collect spans per (relation, role), merging adjacent elements that
        // share a tag.
        let mut relations: Vec<SpatialRelation> = Vec::with_capacity(n_rels);
        for rel in 0..n_rels {
            let mut indicator: Option<Span> = None;
            let mut rel_out = SpatialRelation::new(Span {
                start: 0,
                end: 0,
                text: String::new(),
            });
            for role in [
                SlotRole::Indicator,
                SlotRole::Trajector,
                SlotRole::Landmark,
                SlotRole::Diagnosis,
                SlotRole::Hedge,
            ] {
                let mut run: Option<(usize, usize)> = None;
                let mut prev_idx: Option<usize> = None;
                let mut spans: Vec<Span> = Vec::new();
                for (idx, element) in template.elements.iter().enumerate() {
                    let tagged = element.roles.iter().any(|t| t.rel == rel && t.role == role);
                    if tagged {
                        let (start, end) = ranges[idx];
                        match (&mut run, prev_idx) {
                            (Some((_, run_end)), Some(p)) if p + 1 == idx => {
                                *run_end = end;
                            }
                            _ => {
                                if let Some((s, e)) = run.take() {
                                    spans.push(Span::over(&text, s, e).unwrap());
                                }
                                run = Some((start, end));
                            }
                        }
                        prev_idx = Some(idx);
                    }
                }
                if let Some((s, e)) = run.take() {
                    spans.push(Span::over(&text, s, e).unwrap());
                }
                match role.as_role() {
                    None => {
                        debug_assert_eq!(spans.len(), 1, "validated: one indicator run");
                        indicator = spans.pop();
                    }
                    Some(r) => {
                        *rel_out.role_spans_mut(r) = spans;
                    }
                }
            }
            rel_out.indicator = indicator.expect("validated grammar has an indicator");
            relations.push(rel_out);
        }

        // Tally.
        self.n_relations += n_rels;
        if n_rels > 0 {
            self.n_sentences_with_indicator += 1;
            self.total_tokens += words;
        }
        self.max_indicators_per_sentence = self.max_indicators_per_sentence.max(n_rels);
        for rel in &relations {
            self.n_trajectors += rel.trajectors.len();
            self.n_landmarks += rel.landmarks.len();
            self.n_diagnoses += rel.diagnoses.len();
            self.n_hedges += rel.hedges.len();
            match (rel.diagnoses.is_empty(), rel.hedges.is_empty()) {
                (true, true) => self.n_rel_traj_land_only += 1,
                (false, true) => self.n_rel_with_diag_no_hedge += 1,
                (true, false) => self.n_rel_with_hedge_no_diag += 1,
                (false, false) => self.n_rel_all_four += 1,
            }
            if rel.diagnoses.len() > 1 {
                self.n_rel_multi_diagnosis += 1;
            }
            self.max_diagnoses_per_relation =
                self.max_diagnoses_per_relation.max(rel.diagnoses.len());
        }

        let sentence = AnnotatedSentence {
            report_id: format!("synth-{:05}", self.counter),
            sentence_id: "s0".to_string(),
            text,
            relations,
        };
        self.counter += 1;
        sentence
    }

    /// Exact statistics of everything emitted so far.
    pub fn tally(&self) -> CorpusStats {
        let avg = if self.n_sentences_with_indicator > 0 {
            self.total_tokens as f64 / self.n_sentences_with_indicator as f64
        } else {
            0.0
        };
        CorpusStats {
            n_relations: self.n_relations,
            n_trajectors: self.n_trajectors,
            n_landmarks: self.n_landmarks,
            n_diagnoses: self.n_diagnoses,
            n_hedges: self.n_hedges,
            n_sentences_with_indicator: self.n_sentences_with_indicator,
            max_indicators_per_sentence: self.max_indicators_per_sentence,
            n_rel_traj_land_only: self.n_rel_traj_land_only,
            n_rel_with_diag_no_hedge: self.n_rel_with_diag_no_hedge,
            n_rel_with_hedge_no_diag: self.n_rel_with_hedge_no_diag,
            n_rel_all_four: self.n_rel_all_four,
            n_rel_multi_diagnosis: self.n_rel_multi_diagnosis,
            max_diagnoses_per_relation: self.max_diagnoses_per_relation,
            avg_sentence_length_tokens: avg,
        }
    }
}

/// Generate `n` sentences. Returns the corpus and the generator's own tally
/// of what was emitted.
pub fn generate(n: usize, root_seed: u64, grammar: &Grammar) -> (Corpus, CorpusStats) {
    let mut generator = Generator::new(grammar, root_seed);
    let sentences: Vec<AnnotatedSentence> =
        (0..n).map(|_| generator.next_sentence()).collect();
    let corpus = Corpus::from_sentences(sentences)
        .expect("generated sentences must satisfy corpus invariants");
    (corpus, generator.tally())
}
