//! Spatial role labeling for radiology reports.
//!
//! The crate covers the full pipeline: loading span-annotated report corpora,
//! expanding sentences into per-indicator training instances with BIO labels,
//! training a Bi-LSTM-CRF tagger (word, character, and indicator embeddings)
//! from scratch in pure Rust, and scoring predictions with exact-match
//! precision/recall/F1 under k-fold cross-validation. A deterministic
//! template-based generator provides synthetic corpora with known ground
//! truth for end-to-end testing.

pub mod agreement;
pub mod corpus;
pub mod crf;
pub mod eval;
pub mod nn;
pub mod preprocess;
pub mod seed;
pub mod synth;
pub mod tagger;
pub mod vocab;

pub use corpus::{AnnotatedSentence, Corpus, CorpusStats, RoleLabel, Span, SpatialRelation};
pub use preprocess::{Instance, TagLabel, TagSet, Task, Token, Tokenizer};
// pub use tagger::{TaggerConfig, TaggerModel}; // enabled once tagger lands
